#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "centaur/geometry.hpp"
#include "centaur/scorer.hpp"
#include "centaur/uncertainty.hpp"
#include "centaur/worldsim.hpp"

namespace centaur::deploy {

using geometry::PlanningVocabulary;
using geometry::Trajectory;
using scorer::DecoderParams;
using uncertainty::Measure;
using uncertainty::UncertaintyConfig;

// FIFO of the most recent uncertainty gradients, stamped with their source
// frame. Pushing beyond capacity evicts the oldest entry.
class GradientBuffer {
 public:
  explicit GradientBuffer(int capacity);

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }

  // Stamps must be strictly increasing.
  void push(std::vector<double> gradient, int frame_index);

  // Mean of the buffered gradients, accumulated oldest-first.
  std::vector<double> mean() const;

  int frame_stamp(int i) const { return entries_[static_cast<std::size_t>(i)].frame; }
  const std::vector<double>& gradient(int i) const {
    return entries_[static_cast<std::size_t>(i)].grad;
  }

 private:
  struct Entry {
    std::vector<double> grad;
    int frame;
  };
  int capacity_;
  std::deque<Entry> entries_;
};

enum class Strategy : int { kNone = 0, kTtt, kTttGated, kFallback };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct DeploymentConfig {
  Strategy strategy = Strategy::kNone;
  double eta = 1e-4;
  UncertaintyConfig uncertainty;
  double threshold = 0.8;  // gate and fallback trigger
  int fallback_size = 20;
  int buffer_capacity = 4;
  bool reset_per_frame = false;  // ablation: restart from the checkpoint each frame
  std::uint64_t seed = 0;
};

// Everything a deployment run needs besides the stream: the vocabulary, the
// candidate sampling weights (mean expert PDMS over a reference set), and
// the trained checkpoint.
struct PlannerBundle {
  PlanningVocabulary vocab;
  std::vector<double> candidate_weights;
  DecoderParams params;
};

// Mean expert PDMS per vocabulary member over the reference scenes (the
// candidate-weight source and the fallback ranking key).
std::vector<double> mean_vocabulary_pdms(const PlanningVocabulary& vocab,
                                         const std::vector<worldsim::Scene>& reference);

struct FallbackSet {
  std::vector<int> ids;
  std::vector<Trajectory> trajectories;
};

// Top `size` vocabulary members by mean expert PDMS; ties to the lower id.
FallbackSet build_fallback_set(const PlanningVocabulary& vocab,
                               const std::vector<worldsim::Scene>& reference_scenes,
                               int size = 20);

// Returns `predicted` when uncertainty <= threshold, else the fallback
// trajectory nearest to it (trajectory_l2, ties to the lower id).
Trajectory fallback_select(const Trajectory& predicted, const FallbackSet& fallback,
                           double uncertainty_value, double threshold);

// theta' = theta - eta * mean(buffer). An empty buffer leaves the parameters
// unchanged and reports stepped = false.
struct TttStepResult {
  DecoderParams params;
  bool stepped = false;
};
TttStepResult ttt_step(const DecoderParams& params, const GradientBuffer& buffer,
                       double eta);

// Per-frame candidate setup, derived deterministically from (seed,
// frame_index) alone so prefixes replay identically.
struct FrameSetup {
  std::vector<int> candidate_ids;
  std::vector<Trajectory> candidates;
  std::vector<scorer::TrajectoryFeatures> candidate_features;
  geometry::AnchorSet anchors;
  geometry::ClusterAssignment assignment;
};
FrameSetup make_frame_setup(const PlannerBundle& bundle, int frame_index,
                            const DeploymentConfig& config);

struct UncertaintyEval {
  double value = 0.0;
  uncertainty::UncertaintyReport report;
  std::vector<double> gradient;  // empty unless requested
};

// Uncertainty of the configured measure for one frame; the gradient is taken
// w.r.t. the decoder parameters only (encoders are frozen). The reported
// value always comes from the plain evaluation path.
UncertaintyEval evaluate_uncertainty(const DecoderParams& params,
                                     const worldsim::Scene& scene,
                                     const PlannerBundle& bundle,
                                     const DeploymentConfig& config,
                                     const FrameSetup& setup, bool want_gradient);

// Spec-level convenience: gradient of the configured uncertainty at `scene`.
std::vector<double> compute_uncertainty_gradient(const DecoderParams& params,
                                                 const worldsim::Scene& scene,
                                                 const PlannerBundle& bundle,
                                                 const DeploymentConfig& config);

struct FrameRecord {
  int frame_index = 0;
  Strategy strategy = Strategy::kNone;
  Measure measure = Measure::kClusterEntropy;
  double uncertainty = 0.0;
  int replaced = 0;
  worldsim::SubScores sub;
  double pdms = 0.0;
  int params_version = 0;
  // Runtime extras (not part of the CSV schema).
  int selected_id = -1;
  worldsim::SubScores human_sub;
  double human_pdms = 0.0;
  uncertainty::UncertaintyReport report;
};

// Sequential deployment over a stream. Frame i steps with gradients from
// frames < i only (pushed after inference), so every prefix replays
// bit-identically.
std::vector<FrameRecord> run_deployment(const std::vector<worldsim::Scene>& stream,
                                        const PlannerBundle& bundle,
                                        const DeploymentConfig& config);

// Deployment record CSV (schema: frame_index, strategy, measure,
// uncertainty, replaced, nc, dac, ep, c, ttc, pdms, params_version).
std::string record_csv_header();
std::string record_csv_row(const FrameRecord& record);
void save_records_csv(const std::vector<FrameRecord>& records, const std::string& path);
std::vector<FrameRecord> load_records_csv(const std::string& path);

}  // namespace centaur::deploy
