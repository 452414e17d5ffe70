#pragma once

// Versioned JSON checkpoint of a DenseNet:
//   {"format": "fprior.densenet", "version": 1, "widths": [...],
//    "activations": [...], "params": [{"shape": [r, c], "data": [...]}, ...],
//    "checksum": "<fnv1a-64 hex over widths and parameter values>"}
// Parameter data is column-major. Loading rejects checksum mismatches.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "fprior/diffnet/dense_net.hpp"

namespace fprior::diffnet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string checkpoint_json(const DenseNet& net);
DenseNet parse_checkpoint(const std::string& text);
std::string checkpoint_checksum(const DenseNet& net);

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_checkpoint(const std::filesystem::path& path);

}  // namespace fprior::diffnet
