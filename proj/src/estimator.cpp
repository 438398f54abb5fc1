#include "teff/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "teff/errors.hpp"
#include "teff/parallel.hpp"

namespace teff {

namespace {

std::string shape_string(const FeatureMap& m) {
  return std::to_string(m.height()) + "x" + std::to_string(m.width()) + "x" +
         std::to_string(m.channels());
}

void check_query(const FeatureMap& query, const PoseBank& bank) {
  if (bank.templates.empty()) throw ValidationError("pose bank is empty");
  const FeatureMap& t = bank.templates.front();
  if (!query.same_shape(t))
    throw DimensionError("query is " + shape_string(query) + " but bank templates are " +
                         shape_string(t));
}

MatchResult match_with_signature(const FeatureMap& query, const LogPolarSignature& query_sig,
                                 const PoseBank& bank, std::size_t k,
                                 const RegistrationConfig& cfg, bool keep_warped) {
  const FeatureMap& tmpl = bank.templates.at(k);
  const auto candidates =
      bank.prepared_for(cfg)
          ? estimate_scale_rotation(bank.signatures[k], query_sig, cfg)
          : estimate_scale_rotation(log_polar_signature(tmpl, cfg), query_sig, cfg);

  MatchResult best;
  best.index = k;
  best.mse = std::numeric_limits<double>::infinity();
  for (const auto& sim : candidates) {
    const double e = warped_mse(tmpl, sim, query);
    if (e < best.mse) {
      best.mse = e;
      best.similarity = sim;
    }
  }
  if (keep_warped) best.warped = warp(tmpl, best.similarity);
  return best;
}

}  // namespace

void PoseBank::prepare(const RegistrationConfig& cfg, int threads) {
  cfg.validate();
  std::vector<LogPolarSignature> sigs(templates.size());
  parallel_for(templates.size(), threads,
               [&](std::size_t k) { sigs[k] = log_polar_signature(templates[k], cfg); });
  signatures = std::move(sigs);
  signature_config = cfg;
}

void PoseBank::validate() const {
  grid.validate();
  intrinsics.validate();
  render_config.validate();
  if (poses.size() != grid.size() || templates.size() != grid.size())
    throw ValidationError("pose bank holds " + std::to_string(templates.size()) +
                          " templates for a grid of " + std::to_string(grid.size()));
  for (const auto& t : templates)
    if (t.height() != intrinsics.height || t.width() != intrinsics.width ||
        !t.same_shape(templates.front()))
      throw ValidationError("pose bank templates disagree with the bank intrinsics");
}

PoseBank build_pose_bank(const FeatureField& field, const PoseGrid& grid, const Intrinsics& intr,
                         const RenderConfig& cfg, int threads) {
  grid.validate();
  intr.validate();
  cfg.validate();
  PoseBank bank;
  bank.grid = grid;
  bank.intrinsics = intr;
  bank.render_config = cfg;
  bank.poses = enumerate_grid(grid);
  bank.templates.resize(bank.poses.size());
  parallel_for(bank.poses.size(), threads, [&](std::size_t k) {
    bank.templates[k] = render(field, bank.poses[k], intr, cfg).feature_map;
  });
  return bank;
}

MatchResult match_candidate(const FeatureMap& query, const PoseBank& bank, std::size_t k,
                            const RegistrationConfig& cfg, bool keep_warped) {
  check_query(query, bank);
  if (k >= bank.size()) throw std::out_of_range("bank index " + std::to_string(k));
  return match_with_signature(query, log_polar_signature(query, cfg), bank, k, cfg, keep_warped);
}

std::vector<MatchResult> score_bank(const FeatureMap& query, const PoseBank& bank,
                                    const RegistrationConfig& cfg, int threads) {
  check_query(query, bank);
  const LogPolarSignature query_sig = log_polar_signature(query, cfg);
  std::vector<MatchResult> results(bank.size());
  parallel_for(bank.size(), threads, [&](std::size_t k) {
    results[k] = match_with_signature(query, query_sig, bank, k, cfg, false);
  });
  return results;
}

PoseDistribution pose_pdf(const std::vector<double>& mse, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("temperature must be positive");
  if (mse.empty()) throw ValidationError("pose_pdf needs at least one error value");
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < mse.size(); ++k) {
    if (!std::isfinite(mse[k]))
      throw ValidationError("non-finite mse at bank index " + std::to_string(k));
    lowest = std::min(lowest, mse[k]);
  }
  PoseDistribution pdf;
  pdf.temperature = tau;
  pdf.probs.resize(mse.size());
  double total = 0.0;
  for (std::size_t k = 0; k < mse.size(); ++k) {
    pdf.probs[k] = std::exp(-(mse[k] - lowest) * tau);
    total += pdf.probs[k];
  }
  for (auto& p : pdf.probs) p /= total;
  return pdf;
}

PoseDistribution pose_pdf(const std::vector<MatchResult>& matches, double tau) {
  std::vector<double> mse(matches.size());
  for (std::size_t k = 0; k < matches.size(); ++k) mse[k] = matches[k].mse;
  return pose_pdf(mse, tau);
}

std::size_t argmin_mse(const std::vector<MatchResult>& matches) {
  if (matches.empty()) throw ValidationError("no matches to choose from");
  std::size_t best = 0;
  for (std::size_t k = 1; k < matches.size(); ++k)
    if (matches[k].mse < matches[best].mse) best = k;
  return best;
}

CameraPose pose_from_match(const PoseBank& bank, const MatchResult& match) {
  CameraPose pose = bank.grid.pose_at(match.index);
  pose.gamma = wrap_pi(bank.grid.gamma_fixed + match.similarity.rotation);
  pose.r = bank.grid.r_fixed / match.similarity.scale;
  return pose;
}

std::size_t sample_index(const PoseDistribution& pdf, std::mt19937_64& rng) {
  if (pdf.probs.empty()) throw ValidationError("cannot sample an empty distribution");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cdf = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t k = 0; k < pdf.probs.size(); ++k) {
    if (pdf.probs[k] <= 0.0) continue;
    cdf += pdf.probs[k];
    last_nonzero = k;
    if (u < cdf) return k;
  }
  // Rounding left the total slightly below u.
  return last_nonzero;
}

CameraPose sample_pose(const PoseDistribution& pdf, const PoseBank& bank,
                       const std::vector<MatchResult>& matches, std::mt19937_64& rng,
                       std::size_t* drawn) {
  if (pdf.probs.size() != bank.size() || matches.size() != bank.size())
    throw DimensionError("distribution, matches and bank must have the same length");
  const std::size_t k = sample_index(pdf, rng);
  if (drawn) *drawn = k;
  CameraPose pose = pose_from_match(bank, matches[k]);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double d_theta = noise(rng) * bank.grid.theta_bin_width() / 6.0;
  const double d_phi = noise(rng) * bank.grid.phi_bin_width() / 6.0;
  pose.theta = wrap_two_pi(pose.theta + d_theta);
  pose.phi = std::clamp(pose.phi + d_phi, 0.0, kPi);
  return pose;
}

Estimate estimate_map(const FeatureMap& query, const PoseBank& bank,
                      const RegistrationConfig& cfg, double tau, int threads) {
  Estimate est;
  est.matches = score_bank(query, bank, cfg, threads);
  est.pdf = pose_pdf(est.matches, tau);
  est.match = est.matches[argmin_mse(est.matches)];
  est.pose = pose_from_match(bank, est.match);
  return est;
}

void TemperatureSchedule::validate() const {
  if (!(tau_start > 0.0)) throw ValidationError("tau_start must be positive");
  if (!(tau_end >= tau_start)) throw ValidationError("tau_end must be >= tau_start");
  if (ramp_iters < 1) throw ValidationError("ramp_iters must be >= 1");
}

double tau_at(const TemperatureSchedule& schedule, std::int64_t iter) {
  schedule.validate();
  if (iter < 0) throw ValidationError("iteration must be non-negative");
  const double t = std::min(static_cast<double>(iter) / static_cast<double>(schedule.ramp_iters),
                            1.0);
  return schedule.tau_start + (schedule.tau_end - schedule.tau_start) * t;
}

void write_pose_bank(std::ostream& out, const PoseBank& bank) {
  bank.validate();
  using detail::write_pod;
  out.write("TPB1", 4);
  const PoseGrid& g = bank.grid;
  for (double v : {g.theta_lo, g.theta_hi, g.phi_lo, g.phi_hi, g.gamma_fixed, g.r_fixed})
    write_pod(out, v);
  write_pod(out, static_cast<std::uint32_t>(g.n_theta));
  write_pod(out, static_cast<std::uint32_t>(g.n_phi));
  write_pod(out, bank.intrinsics.fov_y);
  write_pod(out, static_cast<std::uint32_t>(bank.intrinsics.width));
  write_pod(out, static_cast<std::uint32_t>(bank.intrinsics.height));
  write_pod(out, static_cast<std::uint32_t>(bank.render_config.n_samples));
  write_pod(out, static_cast<std::uint32_t>(bank.render_config.white_background ? 1 : 0));
  write_pod(out, bank.render_config.min_alpha_for_depth);
  write_pod(out, static_cast<std::uint32_t>(bank.templates.size()));
  for (const auto& t : bank.templates) write_feature_map(out, t);
  if (!out) throw std::runtime_error("failed to write pose bank");
}

PoseBank read_pose_bank(std::istream& in) {
  using detail::read_pod;
  detail::expect_magic(in, "TPB1");
  PoseBank bank;
  PoseGrid& g = bank.grid;
  g.theta_lo = read_pod<double>(in, "bank grid");
  g.theta_hi = read_pod<double>(in, "bank grid");
  g.phi_lo = read_pod<double>(in, "bank grid");
  g.phi_hi = read_pod<double>(in, "bank grid");
  g.gamma_fixed = read_pod<double>(in, "bank grid");
  g.r_fixed = read_pod<double>(in, "bank grid");
  g.n_theta = static_cast<int>(read_pod<std::uint32_t>(in, "bank grid"));
  g.n_phi = static_cast<int>(read_pod<std::uint32_t>(in, "bank grid"));
  bank.intrinsics.fov_y = read_pod<double>(in, "bank intrinsics");
  bank.intrinsics.width = static_cast<int>(read_pod<std::uint32_t>(in, "bank intrinsics"));
  bank.intrinsics.height = static_cast<int>(read_pod<std::uint32_t>(in, "bank intrinsics"));
  bank.render_config.n_samples = static_cast<int>(read_pod<std::uint32_t>(in, "render config"));
  bank.render_config.white_background = read_pod<std::uint32_t>(in, "render config") != 0;
  bank.render_config.min_alpha_for_depth = read_pod<double>(in, "render config");
  const auto count = read_pod<std::uint32_t>(in, "template count");
  try {
    g.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("bank header: ") + e.what());
  }
  if (count != g.size())
    throw FormatError("bank declares " + std::to_string(count) + " templates for a " +
                      std::to_string(g.n_theta) + "x" + std::to_string(g.n_phi) + " grid");
  bank.poses = enumerate_grid(g);
  bank.templates.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) bank.templates.push_back(read_feature_map(in));
  try {
    bank.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  return bank;
}

void write_pose_bank(const std::filesystem::path& path, const PoseBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pose_bank(out, bank);
}

PoseBank read_pose_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_pose_bank(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace teff
