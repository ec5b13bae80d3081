#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "centaur/autodiff.hpp"
#include "centaur/geometry.hpp"
#include "centaur/worldsim.hpp"

namespace centaur::scorer {

using autodiff::MlpSpec;
using autodiff::Tape;
using geometry::PlanningVocabulary;
using geometry::Trajectory;

// Frozen featurizers. Layouts are versioned; changing them requires bumping
// kFeatureLayoutVersion so stale checkpoints are rejected.
inline constexpr int kFeatureLayoutVersion = 1;

struct SceneFeatures {
  static constexpr int kSize = 32;
  std::array<double, kSize> v{};
};

struct TrajectoryFeatures {
  static constexpr int kSize = 16;
  std::array<double, kSize> v{};
};

SceneFeatures encode_scene(const worldsim::Scene& scene);
TrajectoryFeatures encode_trajectory(const Trajectory& traj);

inline constexpr MlpSpec kScoringSpec{SceneFeatures::kSize + TrajectoryFeatures::kSize, 64,
                                      64, 5};
inline constexpr int kRegressionDims = 2 * Trajectory::kWaypointCount;  // (x, y) flat
inline constexpr MlpSpec kRegressionSpec{SceneFeatures::kSize, 64, 64, 4 * kRegressionDims};

// Decoder weights as one flat vector over a fixed layout.
struct DecoderParams {
  MlpSpec spec;
  std::vector<double> theta;
  std::uint64_t init_seed = 0;

  static DecoderParams init(const MlpSpec& spec, std::uint64_t seed);

  std::vector<double> flatten() const { return theta; }
  static DecoderParams unflatten(const MlpSpec& spec, std::vector<double> theta);
};

// Per-trajectory predicted score features, each strictly inside (0, 1),
// ordered (nc, dac, ep, c, ttc) like worldsim::SubScores.
struct ScoreTable {
  std::vector<std::array<double, 5>> rows;
  std::vector<int> ids;
};

// Batched decoder evaluation (OpenMP over rows); `ids` defaults to 0..n-1.
ScoreTable forward(const DecoderParams& params, const SceneFeatures& scene,
                   std::span<const TrajectoryFeatures> batch,
                   std::span<const int> ids = {});
// Plain-loop reference for tests and the kernel benchmark.
ScoreTable forward_serial(const DecoderParams& params, const SceneFeatures& scene,
                          std::span<const TrajectoryFeatures> batch,
                          std::span<const int> ids = {});

// phi: mirrors the PDMS weighting on predicted features.
double aggregate(const std::array<double, 5>& row);

// Row id maximizing aggregate(); ties go to the lower id.
int select_trajectory(const ScoreTable& table);

// Mean binary cross-entropy between predicted and expert features (soft
// labels in [0, 1]), over all rows and all 5 features.
double kd_loss(const ScoreTable& predicted, std::span<const worldsim::SubScores> expert);

inline constexpr double kImitationLambda = 2.0;  // meters, softmax temperature

// Cross-entropy between softmax(-distance/lambda) targets and
// softmax(final_scores).
double imitation_loss(std::span<const double> final_scores, const PlanningVocabulary& vocab,
                      const Trajectory& human_traj);

// --- Differentiable builders (tape counterparts of the plain ops) -------

struct RowVars {
  std::array<Tape::Var, 5> s;
};

// Sigmoid-activated score rows for a batch of trajectory features.
std::vector<RowVars> forward_rows_var(Tape& tape, const Tape::ParamBlock& params,
                                      const SceneFeatures& scene,
                                      std::span<const TrajectoryFeatures> batch);
Tape::Var aggregate_var(Tape& tape, const RowVars& row);
Tape::Var kd_loss_var(Tape& tape, std::span<const RowVars> rows,
                      std::span<const worldsim::SubScores> expert);
Tape::Var imitation_loss_var(Tape& tape, std::span<const Tape::Var> final_scores,
                             std::span<const double> distances, double lambda);

// Gradient of an arbitrary tape-built scalar w.r.t. the decoder parameters.
// The builder receives the tape and the registered parameter block and
// returns the loss root.
using LossBuilder =
    std::function<Tape::Var(Tape& tape, const Tape::ParamBlock& params)>;
std::vector<double> backward(const DecoderParams& params, const LossBuilder& builder);

// --- Training -------------------------------------------------------------

struct TrainingRecord {
  worldsim::Scene scene;
  std::vector<worldsim::SubScores> expert;  // per vocabulary id
  Trajectory human;                         // argmax-PDMS vocabulary member
};

struct TrainingDataset {
  PlanningVocabulary vocabulary;
  std::vector<TrainingRecord> records;
};

TrainingDataset build_training_dataset(const std::vector<worldsim::Scene>& scenes,
                                       const PlanningVocabulary& vocab);

// kd + imitation with unit weights.
double total_loss(const DecoderParams& params, const TrainingDataset& dataset);

struct TrainResult {
  DecoderParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Plain gradient descent over shuffled mini-batches; bit-reproducible for a
// fixed seed and any --jobs setting.
TrainResult train(const TrainingDataset& dataset, int epochs, double lr,
                  std::uint64_t seed);

// --- Evidential regression head --------------------------------------------

struct EvidentialOutput {
  std::vector<double> gamma;    // kRegressionDims, unconstrained
  std::vector<double> upsilon;  // > 0
  std::vector<double> alpha;    // > 1
  std::vector<double> beta;     // > 0
};

EvidentialOutput forward_regression(const DecoderParams& reg_params,
                                    const SceneFeatures& scene);

// gamma reshaped to 40 (x, y) waypoints, headings from displacements.
Trajectory regression_trajectory(const EvidentialOutput& ev);

inline constexpr double kEvidentialRegularizer = 0.01;

// Per-dimension Normal-Inverse-Gamma negative log-likelihood plus the
// evidence regularizer, summed over dimensions.
double evidential_loss(const EvidentialOutput& ev, std::span<const double> target);

struct EvidentialVars {
  std::vector<Tape::Var> gamma, upsilon, alpha, beta;
};

EvidentialVars forward_regression_var(Tape& tape, const Tape::ParamBlock& params,
                                      const SceneFeatures& scene);
Tape::Var evidential_loss_var(Tape& tape, const EvidentialVars& ev,
                              std::span<const double> target);

// Per dimension: sigma^2 ~ InvGamma(alpha, beta), mu ~ N(gamma, sigma^2/upsilon).
// Returns n draws of mu (each kRegressionDims wide); deterministic per seed.
struct NigSamples {
  std::vector<std::vector<double>> mu;
  std::vector<std::vector<double>> sigma_sq;
};
NigSamples sample_nig(const EvidentialOutput& ev, int n, std::uint64_t seed);

// --- Checkpoint file --------------------------------------------------------

void save_checkpoint(const DecoderParams& params, const std::string& path);
DecoderParams load_checkpoint(const std::string& path);

}  // namespace centaur::scorer
