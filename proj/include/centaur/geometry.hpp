#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace centaur::geometry {

struct Waypoint {
  double x = 0.0;        // meters, forward positive
  double y = 0.0;        // meters, left positive
  double heading = 0.0;  // radians in (-pi, pi]
};

// A planned path: 40 waypoints spanning a 4 s horizon in the ego frame.
// Waypoint 0 sits at the ego's current position; waypoint i is at time
// i * time_step(). The nominal rate is 10 Hz.
struct Trajectory {
  static constexpr int kWaypointCount = 40;
  static constexpr double kHorizonSeconds = 4.0;

  static constexpr double time_step() {
    return kHorizonSeconds / static_cast<double>(kWaypointCount - 1);
  }
  static constexpr double time_of(int i) { return time_step() * static_cast<double>(i); }

  std::array<Waypoint, kWaypointCount> waypoints{};
  int id = -1;  // index into its vocabulary, or -1 if free-standing
};

// Throws Error("invalid-parameter") if any invariant fails: finite fields,
// first waypoint within 0.5 m of the origin, consecutive spacing <= 3.0 m,
// headings in (-pi, pi].
void validate(const Trajectory& traj);

struct PlanningVocabulary {
  std::vector<Trajectory> trajectories;

  int size() const { return static_cast<int>(trajectories.size()); }
  const Trajectory& at(int id) const { return trajectories[static_cast<std::size_t>(id)]; }
};

enum class AnchorLabel : int {
  kSharpLeft = 0,
  kSlightLeft = 1,
  kForward = 2,
  kSlightRight = 3,
  kSharpRight = 4,
};
inline constexpr int kAnchorCount = 5;

const char* anchor_label_name(AnchorLabel label);

// Indices (into the candidate list it was derived from) of the five
// direction anchors.
struct AnchorSet {
  std::array<int, kAnchorCount> index{};

  int operator[](AnchorLabel label) const { return index[static_cast<int>(label)]; }
};

struct ClusterAssignment {
  std::vector<AnchorLabel> label;  // one entry per candidate

  std::array<int, kAnchorCount> cluster_sizes() const;
};

// Synthesizes a vocabulary as a grid of constant-curvature arcs crossed with
// speed profiles (speeds 1..15 m/s, curvatures symmetric about zero), padded
// to k entries with seed-jittered arcs. Deterministic for fixed inputs.
// Preconditions: k >= 25, speed_levels >= 2, curvature_levels >= 5 and odd.
PlanningVocabulary generate_vocabulary(int k, int speed_levels, int curvature_levels,
                                       std::uint64_t seed);

// Builds one constant-curvature arc with a two-segment speed profile
// (speed_a over the first half of the horizon, speed_b over the second).
Trajectory make_arc(double curvature, double speed_a, double speed_b, int id = -1);

double lateral_endpoint(const Trajectory& traj);

// Euclidean distance over the 80-dim concatenation of (x, y) per waypoint.
// Headings are excluded.
double trajectory_l2(const Trajectory& a, const Trajectory& b);

// Draws m distinct ids without replacement, probability proportional to
// weight, deterministic per seed. Throws "insufficient-positive-weights"
// when fewer than m weights are > 0.
std::vector<int> sample_candidates(const PlanningVocabulary& vocab,
                                   const std::vector<double>& weights, int m,
                                   std::uint64_t seed);

// Picks the five direction anchors from lateral endpoints:
//   sharp left  = max lateral endpoint        sharp right = min
//   slight left/right = closest to half the respective sharp value
//   forward     = smallest |lateral endpoint|
// Ties break toward the lower trajectory id; indices are made distinct by
// falling back to the next-closest candidate in order sharp, slight, forward.
// Throws "degenerate-candidates" when all lateral endpoints are equal.
AnchorSet select_anchors(const std::vector<Trajectory>& candidates);

// Labels every candidate with the nearest anchor under trajectory_l2;
// distance ties break by label order sharp-left < slight-left < forward <
// slight-right < sharp-right.
ClusterAssignment assign_clusters(const std::vector<Trajectory>& candidates,
                                  const AnchorSet& anchors);

// Vocabulary cache file: plain text, header + one record per trajectory
// (id followed by 40 x (x, y, heading) with 6 fractional digits).
struct VocabularyFileHeader {
  int k = 0;
  int speed_levels = 0;
  int curvature_levels = 0;
  std::uint64_t seed = 0;
  int format_version = 1;
};

void save_vocabulary(const PlanningVocabulary& vocab, const VocabularyFileHeader& header,
                     const std::string& path);
PlanningVocabulary load_vocabulary(const std::string& path,
                                   VocabularyFileHeader* header_out = nullptr);

}  // namespace centaur::geometry
