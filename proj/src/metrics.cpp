#include "teff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "json.hpp"
#include "teff/errors.hpp"
#include "teff/parallel.hpp"

namespace teff {

namespace {

int bin_of(double v, double lo, double width, int n) {
  return std::clamp(static_cast<int>(std::floor((v - lo) / width)), 0, n - 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

PoseHistogram pose_histogram(std::span<const double> values, PoseAxis axis, int n_bins,
                             double lo, double hi) {
  if (n_bins < 2) throw ValidationError("histogram needs at least 2 bins");
  if (!(hi > lo)) throw ValidationError("histogram range is empty");
  PoseHistogram h;
  h.axis = axis;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);
  const double width = (hi - lo) / n_bins;
  const bool circular = axis == PoseAxis::theta && std::abs((hi - lo) - kTwoPi) < 1e-9;
  for (double v : values) {
    if (circular) {
      v = lo + wrap_two_pi(v - lo);
    } else if (v < lo || v > hi) {
      ++h.out_of_range;
    }
    ++h.counts[static_cast<std::size_t>(bin_of(v, lo, width, n_bins))];
  }
  h.probs.assign(h.counts.size(), 0.0);
  if (!values.empty())
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      h.probs[i] = static_cast<double>(h.counts[i]) / static_cast<double>(values.size());
  return h;
}

PoseHistogram pose_histogram(std::span<const CameraPose> poses, PoseAxis axis, int n_bins,
                             double lo, double hi) {
  std::vector<double> values;
  values.reserve(poses.size());
  for (const auto& p : poses) values.push_back(axis == PoseAxis::theta ? p.theta : p.phi);
  return pose_histogram(values, axis, n_bins, lo, hi);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty())
    throw DimensionError("kl_divergence needs equal, non-empty bin counts");
  const double n = static_cast<double>(p.size());
  const double p_total = std::accumulate(p.begin(), p.end(), 0.0) + kKlSmoothing * n;
  const double q_total = std::accumulate(q.begin(), q.end(), 0.0) + kKlSmoothing * n;
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + kKlSmoothing) / p_total;
    const double qi = (q[i] + kKlSmoothing) / q_total;
    kl += pi * std::log(pi / qi);
  }
  return std::max(kl, 0.0);
}

double kl_divergence(const PoseHistogram& p, const PoseHistogram& q) {
  if (p.axis != q.axis || p.lo != q.lo || p.hi != q.hi || p.n_bins() != q.n_bins())
    throw DimensionError("kl_divergence needs histograms over the same axis and bins");
  return kl_divergence(p.probs, q.probs);
}

double angular_error_deg(double est, double gt) {
  const double d = std::abs(wrap_pi(est - gt));
  return std::min(rad_to_deg(d), 180.0);
}

std::optional<double> depth_error(const FeatureMap& pred, const FeatureMap& gt,
                                  const std::vector<std::uint8_t>& mask, double dataset_std) {
  if (!pred.same_shape(gt) || pred.channels() != 1 || mask.size() != gt.pixel_count())
    throw DimensionError("depth_error needs single-channel maps and a mask of equal size");
  if (!(dataset_std > 0.0)) throw ValidationError("dataset depth std must be positive");
  double pred_mean = 0.0, gt_mean = 0.0;
  std::size_t n = 0;
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      pred_mean += p[i];
      gt_mean += g[i];
      ++n;
    }
  if (n == 0) return std::nullopt;
  pred_mean /= static_cast<double>(n);
  gt_mean /= static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) sum += std::abs((p[i] - pred_mean) - (g[i] - gt_mean));
  return sum / static_cast<double>(n) / dataset_std;
}

double pooled_depth_std(std::span<const FeatureMap> gt_depths) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& m : gt_depths)
    for (float v : m.data())
      if (v > 0.0f) {
        sum += v;
        sq += static_cast<double>(v) * v;
        ++n;
      }
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(sq / static_cast<double>(n) - mean * mean, 0.0));
}

std::vector<double> wrapped_gaussian_bins(double mean, double std, int n_bins) {
  if (n_bins < 1) throw ValidationError("need at least one bin");
  std::vector<double> probs(static_cast<std::size_t>(n_bins), 0.0);
  const double width = kTwoPi / n_bins;
  mean = wrap_two_pi(mean);
  if (!(std > 0.0)) {
    probs[static_cast<std::size_t>(bin_of(mean, 0.0, width, n_bins))] = 1.0;
    return probs;
  }
  const int wraps = static_cast<int>(std::ceil(8.0 * std / kTwoPi)) + 1;
  double total = 0.0;
  for (int i = 0; i < n_bins; ++i) {
    double p = 0.0;
    for (int k = -wraps; k <= wraps; ++k) {
      const double a = i * width + k * kTwoPi - mean;
      p += normal_cdf((a + width) / std) - normal_cdf(a / std);
    }
    probs[static_cast<std::size_t>(i)] = p;
    total += p;
  }
  for (auto& p : probs) p /= total;
  return probs;
}

WrappedGaussianFit fit_wrapped_gaussian(std::span<const double> target) {
  const int n = static_cast<int>(target.size());
  WrappedGaussianFit best;
  best.kl = std::numeric_limits<double>::infinity();
  auto consider = [&](double mean, double std) {
    const double kl = kl_divergence(target, wrapped_gaussian_bins(mean, std, n));
    if (kl < best.kl) best = {wrap_two_pi(mean), std, kl};
  };
  // Coarse grid, then a finer one around the coarse optimum.
  for (int i = 0; i < 360; ++i)
    for (int j = 0; j <= 80; ++j)
      consider(deg_to_rad(i), deg_to_rad(1.0) * std::pow(360.0, j / 80.0));
  const WrappedGaussianFit coarse = best;
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j)
      consider(coarse.mean + deg_to_rad(0.05 * i), coarse.std * std::pow(1.08, j / 20.0));
  return best;
}

EvalReport evaluate(const LabeledDataset& dataset, const PoseBank& bank,
                    const RegistrationConfig& cfg, const EvalOptions& options) {
  bank.validate();
  // Template signatures are shared by every query.
  PoseBank prepared;
  const PoseBank* use = &bank;
  if (!bank.prepared_for(cfg)) {
    prepared = bank;
    prepared.prepare(cfg, options.threads);
    use = &prepared;
  }
  EvalReport report;
  report.mode = options.mode;
  report.tau = options.tau;
  const std::size_t n = dataset.entries.size();
  report.n_entries = n;
  report.records.resize(n);
  std::vector<FeatureMap> gt_depths(n), est_depths(n);

  const PoseGrid& grid = bank.grid;
  parallel_for(n, options.threads, [&](std::size_t i) {
    const DatasetEntry& entry = dataset.entries[i];
    EntryRecord& rec = report.records[i];
    rec.file = entry.file.filename().string();
    rec.gt = entry.pose;
    try {
      const FeatureMap query = read_feature_map(entry.file);
      Estimate est = estimate_map(query, *use, cfg, options.tau, 1);
      rec.bank_index = est.match.index;
      rec.mse = est.match.mse;
      rec.map_est = est.pose;
      rec.est = est.pose;
      if (options.mode == EstimateMode::sample) {
        std::mt19937_64 rng(options.seed + i);
        rec.est = sample_pose(est.pdf, *use, est.matches, rng);
      }
      rec.theta_err_deg = angular_error_deg(rec.map_est.theta, rec.gt.theta);
      const int dt =
          std::abs(grid.theta_bin_of(rec.map_est.theta) - grid.theta_bin_of(rec.gt.theta));
      const int theta_steps = grid.theta_is_circular() ? std::min(dt, grid.n_theta - dt) : dt;
      const int phi_steps =
          std::abs(grid.phi_bin_of(rec.map_est.phi) - grid.phi_bin_of(rec.gt.phi));
      rec.recovered = theta_steps <= 1 && phi_steps <= 1;
      if (options.field && std::filesystem::exists(entry.depth_file)) {
        gt_depths[i] = read_feature_map(entry.depth_file);
        est_depths[i] =
            render(*options.field, rec.map_est, bank.intrinsics, bank.render_config).depth_map;
      }
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
  });

  std::vector<double> gt_theta, est_theta, gt_phi, est_phi, errors;
  std::size_t recovered = 0, within_bin = 0;
  const double bin_deg = rad_to_deg(grid.theta_bin_width());
  for (const auto& rec : report.records) {
    if (!rec.error.empty()) {
      ++report.n_failed;
      continue;
    }
    gt_theta.push_back(rec.gt.theta);
    est_theta.push_back(rec.est.theta);
    gt_phi.push_back(rec.gt.phi);
    est_phi.push_back(rec.est.phi);
    errors.push_back(rec.theta_err_deg);
    recovered += rec.recovered ? 1 : 0;
    within_bin += rec.theta_err_deg <= bin_deg + 1e-9 ? 1 : 0;
  }

  const std::size_t ok = errors.size();
  if (ok > 0) {
    const auto h_gt = pose_histogram(gt_theta, PoseAxis::theta, kThetaHistogramBins, 0.0, kTwoPi);
    const auto h_est =
        pose_histogram(est_theta, PoseAxis::theta, kThetaHistogramBins, 0.0, kTwoPi);
    report.kl_theta = kl_divergence(h_gt, h_est);
    report.gt_theta_hist = h_gt.probs;
    report.est_theta_hist = h_est.probs;
    if (grid.phi_hi > grid.phi_lo) {
      const auto p_gt =
          pose_histogram(gt_phi, PoseAxis::phi, kPhiHistogramBins, grid.phi_lo, grid.phi_hi);
      const auto p_est =
          pose_histogram(est_phi, PoseAxis::phi, kPhiHistogramBins, grid.phi_lo, grid.phi_hi);
      report.kl_phi = kl_divergence(p_gt, p_est);
      report.gt_phi_hist = p_gt.probs;
      report.est_phi_hist = p_est.probs;
    }
    report.mean_theta_err_deg = std::accumulate(errors.begin(), errors.end(), 0.0) / ok;
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    report.median_theta_err_deg =
        ok % 2 ? sorted[ok / 2] : 0.5 * (sorted[ok / 2 - 1] + sorted[ok / 2]);
    report.recovery_rate_1bin = static_cast<double>(recovered) / ok;
    report.theta_within_bin_rate = static_cast<double>(within_bin) / ok;
  }

  if (options.field) {
    std::vector<FeatureMap> present;
    for (const auto& d : gt_depths)
      if (!d.empty()) present.push_back(d);
    const double dataset_std = pooled_depth_std(present);
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& rec = report.records[i];
      if (!rec.error.empty()) continue;
      if (gt_depths[i].empty() || !(dataset_std > 0.0)) {
        ++report.depth_skipped;
        continue;
      }
      std::vector<std::uint8_t> mask(gt_depths[i].pixel_count());
      for (std::size_t p = 0; p < mask.size(); ++p)
        mask[p] = gt_depths[i].data()[p] > 0.0f && est_depths[i].data()[p] > 0.0f;
      rec.depth_err = depth_error(est_depths[i], gt_depths[i], mask, dataset_std);
      if (!rec.depth_err) {
        ++report.depth_skipped;
        continue;
      }
      sum += *rec.depth_err;
      ++counted;
    }
    if (counted > 0) report.depth_error = sum / static_cast<double>(counted);
  }
  return report;
}

std::string report_to_json(const EvalReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["schema"] = kReportSchema;
  j["mode"] = r.mode == EstimateMode::sample ? "sample" : "argmax";
  j["tau"] = r.tau;
  j["n_entries"] = r.n_entries;
  j["n_failed"] = r.n_failed;
  j["kl_theta"] = opt(r.kl_theta);
  j["kl_phi"] = opt(r.kl_phi);
  j["mean_theta_err_deg"] = opt(r.mean_theta_err_deg);
  j["median_theta_err_deg"] = opt(r.median_theta_err_deg);
  j["recovery_rate_1bin"] = opt(r.recovery_rate_1bin);
  j["theta_within_bin_rate"] = opt(r.theta_within_bin_rate);
  j["depth_error"] = opt(r.depth_error);
  j["depth_skipped"] = r.depth_skipped;
  j["histograms"] = {{"gt_theta", r.gt_theta_hist},
                     {"est_theta", r.est_theta_hist},
                     {"gt_phi", r.gt_phi_hist},
                     {"est_phi", r.est_phi_hist}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != kReportSchema)
    throw FormatError(std::string("report schema is not ") + kReportSchema);
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  EvalReport r;
  try {
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "argmax" && mode != "sample") throw FormatError("unknown report mode " + mode);
    r.mode = mode == "sample" ? EstimateMode::sample : EstimateMode::argmax;
    r.tau = j.at("tau").get<double>();
    r.n_entries = j.at("n_entries").get<std::size_t>();
    r.n_failed = j.at("n_failed").get<std::size_t>();
    r.kl_theta = opt("kl_theta");
    r.kl_phi = opt("kl_phi");
    r.mean_theta_err_deg = opt("mean_theta_err_deg");
    r.median_theta_err_deg = opt("median_theta_err_deg");
    r.recovery_rate_1bin = opt("recovery_rate_1bin");
    r.theta_within_bin_rate = opt("theta_within_bin_rate");
    r.depth_error = opt("depth_error");
    r.depth_skipped = j.at("depth_skipped").get<std::size_t>();
    const auto& h = j.at("histograms");
    r.gt_theta_hist = h.at("gt_theta").get<std::vector<double>>();
    r.est_theta_hist = h.at("est_theta").get<std::vector<double>>();
    r.gt_phi_hist = h.at("gt_phi").get<std::vector<double>>();
    r.est_phi_hist = h.at("est_phi").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("report field missing or mistyped: ") + e.what());
  }
  return r;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "file,gt_theta,gt_phi,gt_gamma,gt_r,est_theta,est_phi,est_gamma,est_r,mse,"
         "theta_err_deg\n";
  for (const auto& rec : report.records) {
    if (!rec.error.empty()) continue;
    out << rec.file;
    for (double v : {rec.gt.theta, rec.gt.phi, rec.gt.gamma, rec.gt.r, rec.map_est.theta,
                     rec.map_est.phi, rec.map_est.gamma, rec.map_est.r, rec.mse,
                     rec.theta_err_deg})
      out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace teff
