#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace fprior {

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

/// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double.
std::string format_double(double v);

}  // namespace fprior
