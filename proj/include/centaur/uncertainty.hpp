#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "centaur/autodiff.hpp"
#include "centaur/geometry.hpp"
#include "centaur/scorer.hpp"

namespace centaur::uncertainty {

using autodiff::Tape;
using geometry::AnchorLabel;
using geometry::AnchorSet;
using geometry::ClusterAssignment;
using geometry::Trajectory;
using scorer::RowVars;
using scorer::ScoreTable;

enum class Measure : int {
  kClusterEntropy = 0,
  kFullEntropy,
  kSemanticEntropy,
  kKlDivergence,
  kEvidential,
};

const char* measure_name(Measure m);
Measure measure_from_name(const std::string& name);

struct ClusterDistribution {
  std::array<double, geometry::kAnchorCount> probs{};
};

struct UncertaintyConfig {
  int m = 100;                          // candidate count
  double tau = 0.06;                    // semantic clustering threshold (0.02 regression)
  int nig_samples = 32;                 // N for the regression feature sampler
  Measure measure = Measure::kClusterEntropy;
};

inline constexpr double kRegressionTau = 0.02;

struct CandidateDiagnostic {
  int traj_id = -1;
  double aggregated_score = 0.0;
  AnchorLabel label = AnchorLabel::kForward;
  double lateral_endpoint = 0.0;
};

struct UncertaintyReport {
  double value = 0.0;
  Measure measure = Measure::kClusterEntropy;
  std::optional<ClusterDistribution> cluster_distribution;
  std::vector<CandidateDiagnostic> diagnostics;
};

// Shannon entropy of the normalized per-cluster sums of aggregated scores.
// Throws "all-zero-scores" when every aggregated score is zero.
UncertaintyReport cluster_entropy(const ScoreTable& table, const ClusterAssignment& assignment);

// Entropy over the normalized M-way aggregated score distribution.
UncertaintyReport full_entropy(const ScoreTable& table);

// Fixed-center one-step clustering in score-feature space: centers are the
// anchors' predicted rows; candidates within tau (L2 over the 5 features)
// join their nearest center, the rest fall back to the nearest anchor in
// trajectory space. Aggregation then matches cluster_entropy.
UncertaintyReport semantic_entropy(const ScoreTable& table, const AnchorSet& anchors,
                                   const std::vector<Trajectory>& candidates, double tau);

// Per score feature, normalize the k-vector into a distribution (entries
// floored at 1e-12) and sum KL(p_i || p_j) over all 20 ordered pairs.
UncertaintyReport kl_divergence_uncertainty(const ScoreTable& full_table);

inline constexpr double kKlFloor = 1e-12;

// (L_gamma, L_mu) per candidate: distance to the regressed mean and to the
// closest of N NIG samples.
std::vector<std::array<double, 2>> regression_semantic_features(
    const scorer::EvidentialOutput& ev, const std::vector<Trajectory>& candidates, int n,
    std::uint64_t seed);

// Semantic entropy over the regression features with uniform per-candidate
// mass (tau defaults to kRegressionTau).
UncertaintyReport regression_semantic_entropy(const scorer::EvidentialOutput& ev,
                                              const AnchorSet& anchors,
                                              const std::vector<Trajectory>& candidates,
                                              int n, std::uint64_t seed,
                                              double tau = kRegressionTau);

// Epistemic variance mean(beta / (upsilon * (alpha - 1))) squashed to (0, 1)
// via 1 - exp(-v).
UncertaintyReport evidential_uncertainty(const scorer::EvidentialOutput& ev);

// --- Differentiable builders -------------------------------------------------

// Entropy of the cluster-mass distribution over tape-valued rows. The
// assignment is treated as fixed (the clustering step is discrete).
Tape::Var cluster_entropy_var(Tape& tape, std::span<const RowVars> rows,
                              const ClusterAssignment& assignment);
Tape::Var full_entropy_var(Tape& tape, std::span<const RowVars> rows);
// Semantic clustering is decided from the tape's current values, then the
// entropy is built on the tape with that assignment held fixed.
Tape::Var semantic_entropy_var(Tape& tape, std::span<const RowVars> rows,
                               const AnchorSet& anchors,
                               const std::vector<Trajectory>& candidates, double tau);
Tape::Var kl_divergence_var(Tape& tape, std::span<const RowVars> rows);
Tape::Var evidential_uncertainty_var(Tape& tape, const scorer::EvidentialVars& ev);

// CSV row: frame_index, measure, value, p1..p5 (blank without a cluster
// distribution).
std::string report_csv_header();
std::string report_csv_row(int frame_index, const UncertaintyReport& report);

}  // namespace centaur::uncertainty
