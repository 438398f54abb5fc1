#pragma once

// Render-and-compare pose estimation against a bank of template renders.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "teff/feature_map.hpp"
#include "teff/field.hpp"
#include "teff/geometry.hpp"
#include "teff/registration.hpp"

namespace teff {

/// Feature maps of the template rendered at every grid pose. templates[k]
/// was rendered at poses[k] == grid.pose_at(k).
struct PoseBank {
  PoseGrid grid;
  Intrinsics intrinsics;
  RenderConfig render_config;
  std::vector<CameraPose> poses;
  std::vector<FeatureMap> templates;

  /// Fourier-Mellin signatures of the templates, valid for `signature_config`.
  std::vector<LogPolarSignature> signatures;
  RegistrationConfig signature_config;

  std::size_t size() const { return templates.size(); }
  /// Computes (or recomputes) the cached signatures for `cfg`.
  void prepare(const RegistrationConfig& cfg, int threads = 1);
  bool prepared_for(const RegistrationConfig& cfg) const {
    return signatures.size() == templates.size() && signature_config == cfg;
  }
  void validate() const;
};

PoseBank build_pose_bank(const FeatureField& field, const PoseGrid& grid, const Intrinsics& intr,
                         const RenderConfig& cfg, int threads = 1);

struct MatchResult {
  std::size_t index = 0;
  Similarity2D similarity;
  double mse = 0.0;
  FeatureMap warped;  // only filled when requested
};

/// Registers template k onto the query, warps it with both rotation
/// hypotheses and keeps the one with the lower MSE (the first on ties).
MatchResult match_candidate(const FeatureMap& query, const PoseBank& bank, std::size_t k,
                            const RegistrationConfig& cfg, bool keep_warped = false);

/// match_candidate for every bank entry, in bank order.
std::vector<MatchResult> score_bank(const FeatureMap& query, const PoseBank& bank,
                                    const RegistrationConfig& cfg, int threads = 1);

struct PoseDistribution {
  std::vector<double> probs;
  double temperature = 1.0;
};

/// p(k) = exp(-e_k * tau) / sum_j exp(-e_j * tau).
PoseDistribution pose_pdf(const std::vector<double>& mse, double tau);
PoseDistribution pose_pdf(const std::vector<MatchResult>& matches, double tau);

/// Lowest-error entry; ties go to the lowest index.
std::size_t argmin_mse(const std::vector<MatchResult>& matches);

/// Pose implied by bank entry k and its registration: theta/phi at the bin
/// center, gamma = gamma_fixed + rotation, r = r_fixed / scale.
CameraPose pose_from_match(const PoseBank& bank, const MatchResult& match);

/// Inverse-CDF draw of a bin index.
std::size_t sample_index(const PoseDistribution& pdf, std::mt19937_64& rng);

/// Draws a bin, then jitters theta and phi by N(0, (bin width / 6)^2).
/// theta wraps and phi is clamped to [0, pi]. The drawn bin is stored in
/// `drawn` when given.
CameraPose sample_pose(const PoseDistribution& pdf, const PoseBank& bank,
                       const std::vector<MatchResult>& matches, std::mt19937_64& rng,
                       std::size_t* drawn = nullptr);

struct Estimate {
  CameraPose pose;
  PoseDistribution pdf;
  MatchResult match;
  std::vector<MatchResult> matches;
};

/// Maximum-likelihood pose over the bank (no jitter).
Estimate estimate_map(const FeatureMap& query, const PoseBank& bank,
                      const RegistrationConfig& cfg, double tau = 1.0, int threads = 1);

struct TemperatureSchedule {
  double tau_start = 1.0;
  double tau_end = 100.0;
  std::int64_t ramp_iters = 1000;

  void validate() const;
};

/// Linear ramp from tau_start to tau_end over ramp_iters, constant after.
double tau_at(const TemperatureSchedule& schedule, std::int64_t iter);

// Bank container "TPB1": grid, intrinsics and render settings followed by
// one TFM1 block per template.
void write_pose_bank(std::ostream& out, const PoseBank& bank);
PoseBank read_pose_bank(std::istream& in);
void write_pose_bank(const std::filesystem::path& path, const PoseBank& bank);
PoseBank read_pose_bank(const std::filesystem::path& path);

}  // namespace teff
