#include "fprior/diffnet/checkpoint.hpp"

#include <json.hpp>

#include "fprior/io.hpp"

namespace fprior::diffnet {

namespace {
constexpr const char* kFormat = "fprior.densenet";
constexpr int kVersion = 1;
}  // namespace

std::string checkpoint_checksum(const DenseNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int w : net.widths()) h = fnv1a(std::as_bytes(std::span<const int>(&w, 1)), h);
  for (const auto& p : net.parameters()) {
    h = fnv1a_doubles({p.value().data(), static_cast<std::size_t>(p.value().size())}, h);
  }
  return hex64(h);
}

std::string checkpoint_json(const DenseNet& net) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["widths"] = net.widths();
  nlohmann::json acts = nlohmann::json::array();
  for (auto a : net.activations()) acts.push_back(to_string(a));
  j["activations"] = acts;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.parameters()) {
    const Matrix& m = p.value();
    params.push_back({{"shape", {m.rows(), m.cols()}},
                      {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  j["params"] = params;
  j["checksum"] = checkpoint_checksum(net);
  return j.dump();
}

DenseNet parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != kFormat) throw CheckpointError("not a DenseNet checkpoint");
  if (j.value("version", 0) != kVersion) throw CheckpointError("unsupported checkpoint version");
  try {
    const auto widths = j.at("widths").get<std::vector<int>>();
    std::vector<Activation> acts;
    for (const auto& a : j.at("activations")) acts.push_back(parse_activation(a.get<std::string>()));
    std::vector<Matrix> weights, biases;
    const auto& params = j.at("params");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto shape = params[i].at("shape").get<std::vector<Index>>();
      const auto data = params[i].at("data").get<std::vector<double>>();
      if (shape.size() != 2 || static_cast<Index>(data.size()) != shape[0] * shape[1]) {
        throw CheckpointError("parameter " + std::to_string(i) + " has inconsistent shape");
      }
      Matrix m = Eigen::Map<const Matrix>(data.data(), shape[0], shape[1]);
      (i % 2 == 0 ? weights : biases).push_back(std::move(m));
    }
    DenseNet net(widths, acts, std::move(weights), std::move(biases));
    if (checkpoint_checksum(net) != j.at("checksum").get<std::string>()) {
      throw CheckpointError("checkpoint checksum mismatch");
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_json(net));
}

DenseNet load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace fprior::diffnet
