#include <bit>
#include <cstring>
#include <sstream>

#include "../common/serialize.hpp"
#include "fprior/io.hpp"
#include "fprior/synthgen.hpp"

namespace fprior {

namespace {

constexpr char kDatasetMagic[8] = {'F', 'P', 'R', 'I', 'O', 'R', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");

template <class T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("dataset file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void save_dataset(const PriorDataset& ds, const std::filesystem::path& path) {
  nlohmann::json header = {{"unit", "0.1MPa"},
                           {"layout", layout_to_json(ds.layout)},
                           {"ranges", ranges_to_json(ds.ranges)},
                           {"seed", ds.seed},
                           {"cap", ds.cap ? nlohmann::json(*ds.cap) : nlohmann::json(nullptr)},
                           {"N", ds.size()},
                           {"representation_size", ds.samples.cols()},
                           {"param_order", param_names()},
                           {"checksum", hex64(ds.checksum())}};
  const std::string h = header.dump();
  std::string out;
  out.append(kDatasetMagic, sizeof(kDatasetMagic));
  put(out, kDatasetVersion);
  put(out, static_cast<std::uint64_t>(h.size()));
  out += h;
  out.append(reinterpret_cast<const char*>(ds.samples.data()),
             static_cast<std::size_t>(ds.samples.size()) * sizeof(double));
  for (const auto& p : ds.params) out.append(reinterpret_cast<const char*>(p.data()), sizeof(p));
  write_file_atomic(path, out);
}

PriorDataset load_dataset(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof(kDatasetMagic) || std::memcmp(in.data(), kDatasetMagic, sizeof(kDatasetMagic)) != 0) {
    throw FormatError(path.string() + ": not a prior dataset file");
  }
  std::size_t pos = sizeof(kDatasetMagic);
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto hlen = take<std::uint64_t>(in, pos);
  if (pos + hlen > in.size()) throw FormatError("dataset header truncated");
  const auto header = nlohmann::json::parse(in.substr(pos, hlen));
  pos += hlen;

  PriorDataset ds;
  ds.layout = layout_from_json(header.at("layout"));
  ds.ranges = ranges_from_json(header.at("ranges"));
  ds.seed = header.at("seed").get<std::uint64_t>();
  if (!header.at("cap").is_null()) ds.cap = header.at("cap").get<double>();
  const auto n = header.at("N").get<std::size_t>();
  const auto cols = header.at("representation_size").get<std::size_t>();
  if (cols != ds.layout.representation_size()) throw FormatError("representation size does not match layout");
  const std::size_t need = (n * cols + n * kNumFreeParams) * sizeof(double);
  if (in.size() - pos != need) throw FormatError("dataset payload has wrong size");
  ds.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  std::memcpy(ds.samples.data(), in.data() + pos, n * cols * sizeof(double));
  pos += n * cols * sizeof(double);
  ds.params.resize(n);
  for (auto& p : ds.params) {
    std::memcpy(p.data(), in.data() + pos, sizeof(p));
    pos += sizeof(p);
  }
  if (hex64(ds.checksum()) != header.at("checksum").get<std::string>()) {
    throw FormatError(path.string() + ": dataset checksum mismatch");
  }
  return ds;
}

std::string measurements_csv(const MeasurementSet& m) {
  std::string out = "lambda_theta,lambda_z,sigma_theta,sigma_z\n";
  for (const auto& p : m.points) {
    out += format_double(p.stretch.lambda_theta) + "," + format_double(p.stretch.lambda_z) + ",";
    if (p.sigma_theta) out += format_double(*p.sigma_theta);
    out += ",";
    if (p.sigma_z) out += format_double(*p.sigma_z);
    out += "\n";
  }
  return out;
}

void write_measurements_csv(const MeasurementSet& m, const std::filesystem::path& path) {
  write_file_atomic(path, measurements_csv(m));
}

MeasurementSet parse_measurements_csv(const std::string& text, double noise_scale) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  MeasurementSet m;
  m.noise_scale = noise_scale;
  auto number = [&](const std::string& cell, const char* what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size() || cell.empty() || !std::isfinite(v)) {
      throw FormatError("line " + std::to_string(lineno) + ": bad " + what + " value '" + cell + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (!have_header) {
      if (cells != std::vector<std::string>{"lambda_theta", "lambda_z", "sigma_theta", "sigma_z"}) {
        throw FormatError("line " + std::to_string(lineno) +
                          ": expected header lambda_theta,lambda_z,sigma_theta,sigma_z");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != 4) {
      throw FormatError("line " + std::to_string(lineno) + ": expected 4 columns, got " +
                        std::to_string(cells.size()));
    }
    Measurement p;
    p.stretch = {number(cells[0], "lambda_theta"), number(cells[1], "lambda_z")};
    if (!(p.stretch.lambda_theta > 0.0 && p.stretch.lambda_z > 0.0)) {
      throw FormatError("line " + std::to_string(lineno) + ": stretches must be positive");
    }
    if (!cells[2].empty()) p.sigma_theta = number(cells[2], "sigma_theta");
    if (!cells[3].empty()) p.sigma_z = number(cells[3], "sigma_z");
    if (!p.sigma_theta && !p.sigma_z) {
      throw FormatError("line " + std::to_string(lineno) + ": no stress component observed");
    }
    m.points.push_back(p);
  }
  if (!have_header) throw FormatError("measurement file is empty");
  if (m.points.empty()) throw FormatError("measurement file has no data rows");
  return m;
}

MeasurementSet read_measurements_csv(const std::filesystem::path& path, double noise_scale) {
  return parse_measurements_csv(read_file(path), noise_scale);
}

}  // namespace fprior
