#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fprior/harness.hpp"
#include "fprior/io.hpp"

namespace fs = std::filesystem;
using namespace fprior;
using namespace fprior::harness;

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string config;
  std::string out = "out";
  bool paper_scale = false;
  std::optional<double> noise;
  std::optional<std::size_t> points;
  std::string region;
  std::string mask;
  std::string checkpoint;
  std::optional<long> iterations;
  std::optional<std::size_t> samples;
  std::vector<std::string> methods;
  std::string prior_cache;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--seed", f.seed, "Seed for measurements and sampling");
  app->add_option("--seeds", f.seeds, "Seed list for multi-seed studies");
  app->add_option("--config", f.config, "JSON configuration overlaying the case defaults")->check(CLI::ExistingFile);
  app->add_option("--out", f.out, "Output directory");
  app->add_flag("--paper-scale", f.paper_scale, "Use the long training schedule");
  app->add_option("--noise", f.noise, "Measurement noise scale (0.1 MPa)");
  app->add_option("--points", f.points, "Number of measurements");
  app->add_option("--region", f.region, "Sampling region 'lo,hi' or 'theta_lo,theta_hi,z_lo,z_hi'");
  app->add_option("--mask", f.mask, "Observed components: both|theta|z");
  app->add_option("--checkpoint", f.checkpoint, "Trained prior directory; skips training")->check(CLI::ExistingDirectory);
  app->add_option("--iterations", f.iterations, "Generator iterations when training");
  app->add_option("--samples", f.samples, "Training curves when training");
  app->add_option("--methods", f.methods, "Methods to run: gan, 4ff, gp, nlreg");
  app->add_option("--prior-cache", f.prior_cache, "Directory for cached priors (default <out>/priors)");
}

StretchRegion parse_region(const std::string& text) {
  std::vector<double> v;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw std::invalid_argument("--region: '" + cell + "' is not a number");
    }
  }
  if (v.size() == 2) return StretchRegion::square(v[0], v[1]);
  if (v.size() == 4) return {v[0], v[1], v[2], v[3]};
  throw std::invalid_argument("--region expects 2 or 4 comma-separated numbers");
}

ExperimentConfig build_config(const std::string& case_id, const std::string& variant, const CommonFlags& f) {
  auto c = config_from_json(case_id, variant, f.paper_scale, f.config.empty() ? std::string() : read_file(f.config));
  c.out = f.out;
  if (!f.prior_cache.empty()) c.prior_cache = f.prior_cache;
  if (f.seed) {
    c.seed = *f.seed;
    c.seeds.clear();
  }
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.noise) c.measurements.noise = *f.noise;
  if (f.points) c.measurements.count = *f.points;
  if (!f.region.empty()) {
    c.measurements.region = parse_region(f.region);
    if (c.measurements.placement == Placement::Line) c.measurements.lambda_z = c.measurements.region.z_lo;
  }
  if (!f.mask.empty()) c.measurements.mask = parse_mask(f.mask);
  if (!f.checkpoint.empty()) c.prior.checkpoint = f.checkpoint;
  if (f.iterations) c.prior.gan.iterations = *f.iterations;
  if (f.samples) c.prior.samples = *f.samples;
  if (!f.methods.empty()) c.methods = f.methods;
  return c;
}

void log_line(const std::string& m) { std::cerr << m << '\n'; }

int run_case(const std::string& case_id, const std::string& variant, const CommonFlags& f) {
  const auto c = build_config(case_id, variant, f);
  std::cout << run_experiment(c, log_line);
  return 0;
}

struct InferFlags {
  std::string method;
  std::string measurements;
  std::string case_id = "case2";
  std::string variant = "random7";
};

// Shared by infer and baseline: one method on synthetic or ingested data.
int run_single(const InferFlags& inf, const CommonFlags& f) {
  auto c = build_config(inf.case_id, inf.case_id == "case2" ? inf.variant : "", f);
  c.methods = {inf.method};
  std::optional<funcprior::TrainedPrior> prior;
  if (inf.method == "gan") {
    if (!c.prior.checkpoint.empty()) {
      prior = funcprior::load_prior(c.prior.checkpoint);
      c.prior.layout = prior->layout;
    } else {
      prior = obtain_prior(c.prior, c.prior_cache.empty() ? c.out / "priors" : c.prior_cache, log_line);
    }
  }
  c.validate();
  const auto seed = c.seed;
  write_file_atomic(c.out / "resolved_config.json", config_to_json(c));
  if (!inf.measurements.empty()) {
    const double sd = f.noise.value_or(0.0);
    auto ingested = ingest_measurements(inf.measurements, sd);
    for (const auto& w : ingested.warnings) log_line("warning: " + w);
    const auto r = run_method(inf.method, c, prior ? &*prior : nullptr, ingested.data, seed);
    write_file_atomic(c.out / "measurements.csv", measurements_csv(ingested.data));
    write_file_atomic(c.out / (inf.method + "_stats.csv"), bayes::stats_csv(r.stats));
    if (r.draws.size()) {
      write_file_atomic(c.out / (inf.method + "_draws.csv"), bayes::draws_csv(r.draws, r.log_density, r.draw_names));
    }
    if (r.fit) write_file_atomic(c.out / "fit_report.json", baselines::fit_report_json(*r.fit));
    std::cout << "wrote " << (c.out / (inf.method + "_stats.csv")).string() << '\n';
    return 0;
  }
  const auto truth = truth_params(c);
  const auto r = run_methods(c, prior ? &*prior : nullptr, draw_measurements(c.measurements, truth, seed), truth, seed);
  write_case(r, c.out);
  const auto& m = r.methods.front();
  if (m.draws.size()) {
    write_file_atomic(c.out / (m.method + "_draws.csv"), bayes::draws_csv(m.draws, m.log_density, m.draw_names));
  }
  if (m.fit) write_file_atomic(c.out / "fit_report.json", baselines::fit_report_json(*m.fit));
  std::cout << m.method << " err_sigma_theta " << format_double(m.err_theta);
  if (m.err_z) std::cout << " err_sigma_z " << format_double(*m.err_z);
  std::cout << '\n';
  return 0;
}

int gen_data(const std::string& layout, std::size_t samples, std::optional<double> cap, std::uint64_t seed,
             const std::string& out) {
  const auto l = layout == "line" ? SensorLayout::default_line() : SensorLayout::default_grid();
  const auto ds = generate_dataset(ParamRanges::table1(), l, samples, cap, seed);
  save_dataset(ds, out);
  std::cout << "wrote " << samples << " samples (" << ds.samples.cols() << " values each) to " << out << '\n';
  return 0;
}

int train_prior(const std::string& case_id, const std::string& data, const CommonFlags& f) {
  auto c = build_config(case_id, case_id == "case2" ? "random7" : "", f);
  if (f.seed) c.prior.gan.seed = *f.seed;
  funcprior::TrainedPrior p;
  if (data.empty()) {
    p = obtain_prior(c.prior, c.prior_cache.empty() ? c.out / "priors" : c.prior_cache, log_line);
  } else {
    const auto ds = load_dataset(data);
    c.prior.gan.validate();
    const long every = std::max<long>(1, c.prior.gan.iterations / 10);
    p = funcprior::train(ds, c.prior.gan, [&](const funcprior::LossRecord& r) {
      if (r.epoch % every == 0) log_line("  iteration " + std::to_string(r.epoch) + ": loss_g " + format_double(r.loss_g));
    });
  }
  funcprior::save_prior(p, c.out);
  std::cout << "saved prior to " << c.out.string() << '\n';
  return 0;
}

int ingest(const std::string& in, const CommonFlags& f) {
  if (!f.noise) throw std::invalid_argument("ingest needs --noise (the measurement SD in 0.1 MPa)");
  const auto r = ingest_measurements(in, *f.noise);
  for (const auto& w : r.warnings) log_line("warning: " + w);
  write_file_atomic(fs::path(f.out) / "measurements.csv", measurements_csv(r.data));
  std::cout << r.data.points.size() << " measurements, " << r.data.observation_count() << " observations, "
            << r.warnings.size() << " warnings\n";
  return 0;
}

int report(const std::string& in, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(in)) {
    if (e.is_regular_file() && e.path().filename() == "error_report.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string csv = "path,case,variant,seed,method,err_sigma_theta,err_sigma_z\n";
  for (const auto& p : files) {
    const auto j = nlohmann::json::parse(read_file(p));
    for (const auto& [method, e] : j.at("errors").items()) {
      csv += fs::relative(p.parent_path(), in).generic_string() + ',' + j.at("case").get<std::string>() + ',' +
             j.at("variant").get<std::string>() + ',' + std::to_string(j.at("seed").get<std::uint64_t>()) + ',' +
             method + ',' + format_double(e.at("sigma_theta").get<double>()) + ',' +
             (e.contains("sigma_z") ? format_double(e.at("sigma_z").get<double>()) : std::string()) + '\n';
    }
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file_atomic(out, csv);
  }
  return files.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional priors for biaxial constitutive relations"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string variant, layout = "grid", data, in, report_out;
  std::size_t gen_samples = 1000;
  std::optional<double> cap;
  std::uint64_t gen_seed = 1;
  InferFlags inf;

  auto* gd = app.add_subcommand("gen-data", "Generate a synthetic training dataset");
  gd->add_option("--layout", layout, "line|grid")->check(CLI::IsMember({"line", "grid"}));
  gd->add_option("--samples", gen_samples, "Number of parameter draws");
  gd->add_option("--cap", cap, "Stress cap (0.1 MPa)");
  gd->add_option("--seed", gen_seed, "Dataset seed");
  std::string gd_out = "dataset.bin";
  gd->add_option("--out", gd_out, "Output file");

  auto* tp = app.add_subcommand("train-prior", "Train a functional prior");
  std::string tp_case = "case2";
  tp->add_option("--case", tp_case, "Layout defaults: case1 (line) or case2 (grid)")
      ->check(CLI::IsMember({"case1", "case2"}));
  tp->add_option("--data", data, "Dataset file from gen-data")->check(CLI::ExistingFile);
  add_common(tp, common);

  auto* infer = app.add_subcommand("infer", "Posterior inference with one method");
  infer->add_option("--method", inf.method, "gan|4ff")->required()->check(CLI::IsMember({"gan", "4ff"}));
  infer->add_option("--measurements", inf.measurements, "Measurement CSV; synthetic data when omitted")
      ->check(CLI::ExistingFile);
  infer->add_option("--case", inf.case_id, "Defaults from case1 or case2")->check(CLI::IsMember({"case1", "case2"}));
  infer->add_option("--variant", inf.variant, "case2 variant for defaults");
  add_common(infer, common);

  auto* base = app.add_subcommand("baseline", "Run a reference method");
  base->add_option("--method", inf.method, "gp|nlreg")->required()->check(CLI::IsMember({"gp", "nlreg"}));
  base->add_option("--measurements", inf.measurements, "Measurement CSV; synthetic data when omitted")
      ->check(CLI::ExistingFile);
  base->add_option("--case", inf.case_id, "Defaults from case1 or case2")->check(CLI::IsMember({"case1", "case2"}));
  base->add_option("--variant", inf.variant, "case2 variant for defaults");
  add_common(base, common);

  auto* c1 = app.add_subcommand("case1", "Line prior, GAN versus GP");
  add_common(c1, common);
  auto* sw = app.add_subcommand("sweep", "Noise by point-count error matrix");
  add_common(sw, common);
  auto* c2 = app.add_subcommand("case2", "Surface prior, GAN versus 4FF");
  c2->add_option("--variant", variant, "random7|equi5|partial|ood")
      ->required()
      ->check(CLI::IsMember({"random7", "equi5", "partial", "ood"}));
  add_common(c2, common);
  auto* ab = app.add_subcommand("appendix-b", "Error versus training-set size");
  add_common(ab, common);
  auto* ac = app.add_subcommand("appendix-c", "Error versus sampling region");
  add_common(ac, common);

  auto* ing = app.add_subcommand("ingest", "Validate and normalize a measurement CSV");
  ing->add_option("--in", in, "Measurement CSV")->required()->check(CLI::ExistingFile);
  add_common(ing, common);

  auto* rep = app.add_subcommand("report", "Collect error reports into one CSV");
  rep->add_option("--in", in, "Directory searched for error_report.json")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", report_out, "CSV file; stdout when omitted");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gd->parsed()) return gen_data(layout, gen_samples, cap, gen_seed, gd_out);
    if (tp->parsed()) return train_prior(tp_case, data, common);
    if (infer->parsed() || base->parsed()) return run_single(inf, common);
    if (c1->parsed()) return run_case("case1", "", common);
    if (sw->parsed()) return run_case("sweep", "", common);
    if (c2->parsed()) return run_case("case2", variant, common);
    if (ab->parsed()) return run_case("appendix-b", "", common);
    if (ac->parsed()) return run_case("appendix-c", "", common);
    if (ing->parsed()) return ingest(in, common);
    if (rep->parsed()) return report(in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
