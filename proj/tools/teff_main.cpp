// teff: synthesize datasets, build pose banks, estimate and evaluate poses.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "teff/errors.hpp"
#include "teff/estimator.hpp"
#include "teff/field.hpp"
#include "teff/metrics.hpp"
#include "teff/pca.hpp"
#include "teff/plot.hpp"
#include "teff/registration.hpp"
#include "teff/synth.hpp"

namespace fs = std::filesystem;
using namespace teff;

namespace {

struct RenderArgs {
  int size = 64;
  double fov_deg = 30.0;
  int samples = 64;

  Intrinsics intrinsics() const {
    Intrinsics intr;
    intr.width = size;
    intr.height = size;
    intr.fov_y = deg_to_rad(fov_deg);
    return intr;
  }
  RenderConfig render_config() const {
    RenderConfig cfg;
    cfg.n_samples = samples;
    return cfg;
  }
};

void add_render_options(CLI::App* cmd, RenderArgs& args) {
  cmd->add_option("--size", args.size, "Rendered map width and height in pixels")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--fov", args.fov_deg, "Vertical field of view in degrees")
      ->check(CLI::Range(1.0, 179.0));
  cmd->add_option("--samples", args.samples, "Samples per ray")->check(CLI::Range(2, 4096));
}

// "lo:hi" in degrees.
std::pair<double, double> parse_range(const std::string& text, const char* what) {
  double lo = 0.0, hi = 0.0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf%c", &lo, &hi, &tail) != 2 || hi < lo)
    throw ValidationError(std::string("bad ") + what + " range '" + text + "', expected lo:hi");
  return {lo, hi};
}

PoseGrid preset_grid(const std::string& preset) {
  PoseGrid grid;
  if (preset == "narrow") return grid;
  if (preset == "shapenet" || preset == "full") {
    grid.phi_lo = 0.0;
    grid.phi_hi = kPi;
    grid.n_phi = 18;
    return grid;
  }
  throw ValidationError("unknown preset '" + preset + "' (expected narrow, shapenet or full)");
}

// "36x18" with the full 180 degree phi range.
PoseGrid bench_grid(const std::string& text) {
  int nt = 0, np = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%dx%d%c", &nt, &np, &tail) != 2 || nt < 1 || np < 1)
    throw ValidationError("bad grid '" + text + "', expected NTxNP");
  PoseGrid grid;
  grid.n_theta = nt;
  grid.n_phi = np;
  grid.phi_lo = 0.0;
  grid.phi_hi = kPi;
  return grid;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string fmt(double v, int precision = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  fs::path out;
  std::size_t n = 100;
  std::string peaks = "90:15:0.5,270:15:0.5";
  std::string phi_range = "85:95";
  std::string r_range = "4:4";
  double gamma_std_deg = 0.0;
  double strength = 0.0;
  double asymmetry = 1.0;
  int parts = 4;
  int dims = 48;
  std::uint64_t template_seed = 1;
  std::string feature_mode = "part-id";
  bool png = false;
  RenderArgs render;
};

void run_synth(const SynthArgs& a, std::uint64_t seed, int threads) {
  TemplateSpec spec;
  spec.seed = a.template_seed;
  spec.dims = {a.dims, a.dims, a.dims};
  spec.n_parts = a.parts;
  spec.asymmetry = a.asymmetry;
  spec.feature_mode = parse_feature_mode(a.feature_mode);
  const FeatureField field = make_template(spec);

  PoseDistSpec dist;
  dist.components = parse_azimuth_mixture(a.peaks);
  const auto [phi_lo, phi_hi] = parse_range(a.phi_range, "phi");
  dist.phi_lo = deg_to_rad(phi_lo);
  dist.phi_hi = deg_to_rad(phi_hi);
  const auto [r_lo, r_hi] = parse_range(a.r_range, "radius");
  dist.r_lo = r_lo;
  dist.r_hi = r_hi;
  dist.gamma_std = deg_to_rad(a.gamma_std_deg);

  try {
    fs::create_directories(a.out);
  } catch (const fs::filesystem_error& e) {
    throw std::runtime_error("cannot create output directory " + a.out.string() + ": " +
                             e.code().message());
  }
  write_field(a.out / "template.tff", field);
  DatasetOptions options;
  options.intrinsics = a.render.intrinsics();
  options.render_config = a.render.render_config();
  options.instance_strength = a.strength;
  options.follow = spec.feature_mode;
  options.write_png = a.png;
  options.threads = threads;
  const LabeledDataset ds = make_dataset(field, dist, a.n, seed, a.out, options);
  std::cout << "synth: " << ds.entries.size() << " entries, seed " << seed << ", template "
            << (a.out / "template.tff").string() << ", manifest " << ds.manifest.string()
            << "\n";
}

// ---------------------------------------------------------------- bank

struct BankArgs {
  fs::path field;
  fs::path out;
  std::string preset = "narrow";
  int n_theta = 0;
  int n_phi = 0;
  std::string phi_range;
  double r_fixed = 4.0;
  RenderArgs render;
};

void run_bank(const BankArgs& a, int threads) {
  PoseGrid grid = preset_grid(a.preset);
  if (a.n_theta > 0) grid.n_theta = a.n_theta;
  if (a.n_phi > 0) grid.n_phi = a.n_phi;
  if (!a.phi_range.empty()) {
    const auto [lo, hi] = parse_range(a.phi_range, "phi");
    grid.phi_lo = deg_to_rad(lo);
    grid.phi_hi = deg_to_rad(hi);
  }
  grid.r_fixed = a.r_fixed;
  const FeatureField field = read_field(a.field);
  const PoseBank bank =
      build_pose_bank(field, grid, a.render.intrinsics(), a.render.render_config(), threads);
  write_pose_bank(a.out, bank);
  std::cout << "bank: " << bank.size() << " templates (" << grid.n_theta << " x " << grid.n_phi
            << ") -> " << a.out.string() << "\n";
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  fs::path bank;
  std::vector<fs::path> inputs;
  std::string mode = "argmax";
  double tau = 1.0;
  fs::path dump_pdf;
};

void run_estimate(const EstimateArgs& a, std::uint64_t seed, int threads) {
  if (a.mode != "argmax" && a.mode != "sample")
    throw ValidationError("--mode must be argmax or sample");
  PoseBank bank = read_pose_bank(a.bank);
  const RegistrationConfig cfg;
  bank.prepare(cfg, threads);

  std::ofstream pdf_out;
  if (!a.dump_pdf.empty()) {
    pdf_out.open(a.dump_pdf);
    if (!pdf_out) throw std::runtime_error("cannot open " + a.dump_pdf.string());
    pdf_out << "input,bin,theta,phi,mse,p\n";
  }
  std::cout << "input,bin,theta_deg,phi_deg,gamma_deg,r,mse\n";
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    const FeatureMap query = read_feature_map(a.inputs[i]);
    const Estimate est = estimate_map(query, bank, cfg, a.tau, threads);
    CameraPose pose = est.pose;
    std::size_t bin = est.match.index;
    if (a.mode == "sample") {
      std::mt19937_64 rng(seed + i);
      pose = sample_pose(est.pdf, bank, est.matches, rng, &bin);
    }
    std::cout << a.inputs[i].string() << ',' << bin << ',' << fmt(rad_to_deg(pose.theta), 4)
              << ',' << fmt(rad_to_deg(pose.phi), 4) << ',' << fmt(rad_to_deg(pose.gamma), 4)
              << ',' << fmt(pose.r, 4) << ',' << fmt(est.matches[bin].mse, 8) << "\n";
    if (pdf_out.is_open())
      for (std::size_t k = 0; k < bank.size(); ++k)
        pdf_out << a.inputs[i].string() << ',' << k << ',' << fmt(bank.poses[k].theta, 9) << ','
                << fmt(bank.poses[k].phi, 9) << ',' << fmt(est.matches[k].mse, 10) << ','
                << fmt(est.pdf.probs[k], 12) << "\n";
  }
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  fs::path bank;
  fs::path manifest;
  fs::path out;
  fs::path field;
  std::string mode = "argmax";
  double tau = 1.0;
};

void run_evaluate(const EvaluateArgs& a, std::uint64_t seed, int threads) {
  if (a.mode != "argmax" && a.mode != "sample")
    throw ValidationError("--mode must be argmax or sample");
  PoseBank bank = read_pose_bank(a.bank);
  const RegistrationConfig cfg;
  bank.prepare(cfg, threads);
  const LabeledDataset ds = read_manifest(a.manifest);
  FeatureField field;
  EvalOptions options;
  options.mode = a.mode == "sample" ? EstimateMode::sample : EstimateMode::argmax;
  options.tau = a.tau;
  options.seed = seed;
  options.threads = threads;
  if (!a.field.empty()) {
    field = read_field(a.field);
    options.field = &field;
  }
  const EvalReport report = evaluate(ds, bank, cfg, options);

  fs::create_directories(a.out);
  {
    std::ofstream json(a.out / "report.json");
    json << report_to_json(report);
    std::ofstream csv(a.out / "entries.csv");
    write_report_csv(csv, report);
    if (!json || !csv) throw std::runtime_error("failed to write report files in " + a.out.string());
  }
  if (!report.gt_theta_hist.empty())
    write_histogram_png(a.out / "theta_hist.png", report.gt_theta_hist, report.est_theta_hist);
  if (!report.gt_phi_hist.empty())
    write_histogram_png(a.out / "phi_hist.png", report.gt_phi_hist, report.est_phi_hist);

  for (const auto& rec : report.records)
    if (!rec.error.empty()) std::cerr << "teff: skipped " << rec.file << ": " << rec.error << "\n";
  auto show = [](const std::optional<double>& v) { return v ? fmt(*v, 4) : std::string("null"); };
  std::cout << "evaluate: " << report.n_entries << " entries, " << report.n_failed
            << " failed, kl_theta " << show(report.kl_theta) << ", kl_phi "
            << show(report.kl_phi) << ", recovery@1bin " << show(report.recovery_rate_1bin)
            << ", median theta error " << show(report.median_theta_err_deg) << " deg\n";
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::vector<fs::path> inputs;
  std::vector<fs::path> masks;
  fs::path out;
  bool no_pca = false;
};

void run_ingest(const IngestArgs& a) {
  if (!a.masks.empty() && a.masks.size() != a.inputs.size())
    throw ValidationError("got " + std::to_string(a.masks.size()) + " masks for " +
                          std::to_string(a.inputs.size()) + " inputs");
  std::vector<FeatureMap> maps;
  std::vector<std::vector<std::uint8_t>> masks;
  for (const auto& p : a.inputs) maps.push_back(read_raw_features(p));
  for (std::size_t i = 0; i < a.masks.size(); ++i) {
    const FeatureMap m = read_raw_features(a.masks[i]);
    if (m.height() != maps[i].height() || m.width() != maps[i].width())
      throw DimensionError("mask " + a.masks[i].string() + " does not match its input");
    masks.push_back(mask_from_map(m));
  }
  for (std::size_t i = 0; i < maps.size(); ++i)
    if (maps[i].channels() < 3)
      throw ValidationError(a.inputs[i].string() + " has " + std::to_string(maps[i].channels()) +
                            " channels, need at least 3");
  fs::create_directories(a.out);
  auto out_path = [&](std::size_t i) {
    return a.out / a.inputs[i].filename().replace_extension(".tfm");
  };

  if (a.no_pca) {
    for (std::size_t i = 0; i < maps.size(); ++i) {
      if (maps[i].channels() != 3)
        throw ValidationError("--no-pca needs 3-channel inputs, " + a.inputs[i].string() +
                              " has " + std::to_string(maps[i].channels()));
      write_feature_map(out_path(i), apply_mask(maps[i], masks.empty() ? std::vector<std::uint8_t>{}
                                                                       : masks[i]));
    }
    std::cout << "ingest: " << maps.size() << " maps passed through\n";
    return;
  }

  const PcaModel model = fit_pca(maps, masks, 3);
  if (model.degenerate > 0)
    std::cerr << "teff: warning: " << model.degenerate
              << " principal component(s) have zero variance and are emitted as zeros\n";
  for (std::size_t i = 0; i < maps.size(); ++i)
    write_feature_map(out_path(i),
                      project(maps[i], model, masks.empty() ? std::vector<std::uint8_t>{} : masks[i]));

  nlohmann::json j;
  j["input_channels"] = model.mean.size();
  j["output_channels"] = model.output_channels();
  j["eigenvalues"] = std::vector<double>(model.eigenvalues.data(),
                                         model.eigenvalues.data() + model.eigenvalues.size());
  j["explained_variance_ratio"] = model.explained_variance_ratio();
  j["degenerate_components"] = model.degenerate;
  std::ofstream(a.out / "pca.json") << j.dump(2) << "\n";
  std::cout << "ingest: " << maps.size() << " maps, explained variance "
            << fmt(model.explained_variance_ratio(), 6) << "\n";
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string grids = "12x6,36x18,60x30";
  int repeat = 3;
  int oracle_steps = 256;
  fs::path out;
  RenderArgs render;
};

struct Timing {
  std::string process;
  std::string config;
  std::vector<double> seconds;
};

void run_bench(const BenchArgs& a, int threads) {
  const FeatureField field = make_template(TemplateSpec{});
  const Intrinsics intr = a.render.intrinsics();
  const RenderConfig rcfg = a.render.render_config();
  const RegistrationConfig cfg;
  std::vector<Timing> rows;
  auto time = [&](const std::string& process, const std::string& config, auto&& fn) {
    Timing t{process, config, {}};
    for (int r = 0; r < a.repeat; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      t.seconds.push_back(seconds_since(t0));
    }
    std::sort(t.seconds.begin(), t.seconds.end());
    rows.push_back(t);
  };

  for (const auto& g : split(a.grids, ','))
    time("bank_render", g, [&] { build_pose_bank(field, bench_grid(g), intr, rcfg, threads); });

  PoseBank bank = build_pose_bank(field, PoseGrid{}, intr, rcfg, threads);
  bank.prepare(cfg, threads);
  const FeatureMap& tmpl = bank.templates[9];
  const FeatureMap query = warp(tmpl, Similarity2D{1.1, deg_to_rad(20.0), 0.0});

  time("phase_correlation", "1 pair", [&] { match_candidate(query, bank, 9, cfg); });
  time("scoring", std::to_string(bank.size()) + " templates",
       [&] { score_bank(query, bank, cfg, threads); });
  const auto matches = score_bank(query, bank, cfg, threads);
  const PoseDistribution pdf = pose_pdf(matches, 1000.0);
  time("sampling", "1000 draws", [&] {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) sample_pose(pdf, bank, matches, rng);
  });
  const auto scales = linspace(0.5, 2.0, a.oracle_steps);
  const auto rotations = linspace(-kPi, kPi, a.oracle_steps);
  const std::string grid_label =
      std::to_string(a.oracle_steps) + "x" + std::to_string(a.oracle_steps) + " scale x rotation";
  time("naive_grid_search", grid_label,
       [&] { brute_force_scale_rotation(tmpl, query, scales, rotations, threads); });

  std::ostringstream csv;
  csv << "process,config,repeats,min_s,median_s,max_s\n";
  for (const auto& t : rows)
    csv << t.process << ',' << t.config << ',' << t.seconds.size() << ',' << fmt(t.seconds.front())
        << ',' << fmt(t.seconds[t.seconds.size() / 2]) << ',' << fmt(t.seconds.back()) << "\n";
  std::cout << csv.str();
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    out << csv.str();
    if (!out) throw std::runtime_error("failed to write " + a.out.string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Template feature-field pose estimation"};
  app.require_subcommand(1);
  int threads = 1;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 1024));
  app.add_option("--seed", seed, "Random seed");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a template field and a labeled dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n", synth.n, "Number of entries");
  synth_cmd->add_option("--peaks", synth.peaks, "Azimuth mixture mean:std:weight,... (degrees)");
  synth_cmd->add_option("--phi-range", synth.phi_range, "Polar angle range lo:hi (degrees)");
  synth_cmd->add_option("--r-range", synth.r_range, "Camera radius range lo:hi");
  synth_cmd->add_option("--gamma-std", synth.gamma_std_deg, "In-plane rotation std (degrees)");
  synth_cmd->add_option("--strength", synth.strength, "Instance perturbation strength")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--asymmetry", synth.asymmetry, "Front marker size");
  synth_cmd->add_option("--parts", synth.parts, "Number of template parts");
  synth_cmd->add_option("--dims", synth.dims, "Voxels per axis");
  synth_cmd->add_option("--template-seed", synth.template_seed, "Template seed");
  synth_cmd->add_option("--feature-mode", synth.feature_mode, "part-id, color-copy or gray-copy");
  synth_cmd->add_flag("--png", synth.png, "Also write PNG previews");
  add_render_options(synth_cmd, synth.render);

  BankArgs bank;
  auto* bank_cmd = app.add_subcommand("bank", "Render a pose bank from a field");
  bank_cmd->add_option("--field", bank.field, "Template field (TFF1)")->required();
  bank_cmd->add_option("--out", bank.out, "Output bank file")->required();
  bank_cmd->add_option("--preset", bank.preset, "narrow (36x3) or shapenet (36x18)");
  bank_cmd->add_option("--n-theta", bank.n_theta, "Override azimuth bins");
  bank_cmd->add_option("--n-phi", bank.n_phi, "Override polar bins");
  bank_cmd->add_option("--phi-range", bank.phi_range, "Override polar range lo:hi (degrees)");
  bank_cmd->add_option("--r-fixed", bank.r_fixed, "Template camera radius");
  add_render_options(bank_cmd, bank.render);

  EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "Estimate poses of feature maps");
  est_cmd->add_option("--bank", est.bank, "Pose bank")->required();
  est_cmd->add_option("--mode", est.mode, "argmax or sample");
  est_cmd->add_option("--tau", est.tau, "Softmax temperature")->check(CLI::PositiveNumber);
  est_cmd->add_option("--dump-pdf", est.dump_pdf, "Write the pose distributions as CSV");
  est_cmd->add_option("inputs", est.inputs, "Feature maps (TFM1)")->required();

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a bank on a labeled dataset");
  eval_cmd->add_option("--bank", eval.bank, "Pose bank")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--out", eval.out, "Report directory")->required();
  eval_cmd->add_option("--field", eval.field, "Template field, enables the depth metric");
  eval_cmd->add_option("--mode", eval.mode, "argmax or sample");
  eval_cmd->add_option("--tau", eval.tau, "Softmax temperature")->check(CLI::PositiveNumber);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Reduce raw feature maps to 3 channels");
  ingest_cmd->add_option("inputs", ingest.inputs, "Raw feature files")->required();
  ingest_cmd->add_option("--masks", ingest.masks, "Raw single-channel masks, one per input");
  ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();
  ingest_cmd->add_flag("--no-pca", ingest.no_pca, "Pass 3-channel inputs through");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time the pipeline stages");
  bench_cmd->add_option("--grids", bench.grids, "Bank grids for the render timing");
  bench_cmd->add_option("--repeat", bench.repeat, "Repetitions per row")
      ->check(CLI::Range(1, 1000));
  bench_cmd->add_option("--oracle-steps", bench.oracle_steps, "Naive search grid steps per axis")
      ->check(CLI::Range(2, 4096));
  bench_cmd->add_option("--out", bench.out, "Also write the CSV here");
  add_render_options(bench_cmd, bench.render);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) run_synth(synth, seed, threads);
    if (*bank_cmd) run_bank(bank, threads);
    if (*est_cmd) run_estimate(est, seed, threads);
    if (*eval_cmd) run_evaluate(eval, seed, threads);
    if (*ingest_cmd) run_ingest(ingest);
    if (*bench_cmd) run_bench(bench, threads);
  } catch (const std::exception& e) {
    std::cerr << "teff: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
