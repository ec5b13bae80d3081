#include "centaur/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <utility>

#include "centaur/error.hpp"
#include "centaur/rng.hpp"

namespace centaur::geometry {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kMinSpeed = 1.0;   // m/s
constexpr double kMaxSpeed = 15.0;  // m/s
constexpr double kMaxCurvature = 0.2;  // 1/m, 5 m turn radius

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a > kPi) a -= 2.0 * kPi;
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// Position along a constant-curvature arc after arc length s, starting at the
// origin with heading 0.
Waypoint arc_point(double curvature, double s) {
  Waypoint w;
  if (std::fabs(curvature) < 1e-12) {
    w.x = s;
    w.y = 0.0;
    w.heading = 0.0;
  } else {
    w.x = std::sin(curvature * s) / curvature;
    w.y = (1.0 - std::cos(curvature * s)) / curvature;
    w.heading = wrap_angle(curvature * s);
  }
  return w;
}

}  // namespace

void validate(const Trajectory& traj) {
  for (const Waypoint& w : traj.waypoints) {
    require(std::isfinite(w.x) && std::isfinite(w.y) && std::isfinite(w.heading),
            "invalid-parameter", "trajectory contains non-finite waypoint");
    require(w.heading > -kPi - 1e-12 && w.heading <= kPi + 1e-12, "invalid-parameter",
            "waypoint heading outside (-pi, pi]");
  }
  const Waypoint& first = traj.waypoints.front();
  require(std::hypot(first.x, first.y) <= 0.5, "invalid-parameter",
          "first waypoint farther than 0.5 m from origin");
  for (int i = 1; i < Trajectory::kWaypointCount; ++i) {
    const Waypoint& a = traj.waypoints[static_cast<std::size_t>(i - 1)];
    const Waypoint& b = traj.waypoints[static_cast<std::size_t>(i)];
    require(std::hypot(b.x - a.x, b.y - a.y) <= 3.0 + 1e-9, "invalid-parameter",
            "consecutive waypoint spacing exceeds 3.0 m");
  }
}

const char* anchor_label_name(AnchorLabel label) {
  switch (label) {
    case AnchorLabel::kSharpLeft: return "sharp-left";
    case AnchorLabel::kSlightLeft: return "slight-left";
    case AnchorLabel::kForward: return "forward";
    case AnchorLabel::kSlightRight: return "slight-right";
    case AnchorLabel::kSharpRight: return "sharp-right";
  }
  return "?";
}

std::array<int, kAnchorCount> ClusterAssignment::cluster_sizes() const {
  std::array<int, kAnchorCount> sizes{};
  for (AnchorLabel l : label) sizes[static_cast<std::size_t>(l)]++;
  return sizes;
}

Trajectory make_arc(double curvature, double speed_a, double speed_b, int id) {
  Trajectory t;
  t.id = id;
  const double t_switch = Trajectory::kHorizonSeconds / 2.0;
  for (int i = 0; i < Trajectory::kWaypointCount; ++i) {
    const double ti = Trajectory::time_of(i);
    const double s = (ti <= t_switch) ? speed_a * ti
                                      : speed_a * t_switch + speed_b * (ti - t_switch);
    t.waypoints[static_cast<std::size_t>(i)] = arc_point(curvature, s);
  }
  return t;
}

PlanningVocabulary generate_vocabulary(int k, int speed_levels, int curvature_levels,
                                       std::uint64_t seed) {
  require(k >= 25, "invalid-parameter", "vocabulary size k must be >= 25");
  require(speed_levels >= 2, "invalid-parameter", "speed_levels must be >= 2");
  require(curvature_levels >= 5 && curvature_levels % 2 == 1, "invalid-parameter",
          "curvature_levels must be >= 5 and odd");

  PlanningVocabulary vocab;
  vocab.trajectories.reserve(static_cast<std::size_t>(k));

  // Base grid: curvature-major so the zero-curvature column is contiguous.
  for (int ci = 0; ci < curvature_levels && vocab.size() < k; ++ci) {
    const double curvature =
        -kMaxCurvature + 2.0 * kMaxCurvature * static_cast<double>(ci) /
                             static_cast<double>(curvature_levels - 1);
    for (int si = 0; si < speed_levels && vocab.size() < k; ++si) {
      const double speed = kMinSpeed + (kMaxSpeed - kMinSpeed) * static_cast<double>(si) /
                                           static_cast<double>(speed_levels - 1);
      vocab.trajectories.push_back(make_arc(curvature, speed, speed, vocab.size()));
    }
  }

  // Jittered arcs with a mid-horizon speed change fill the remainder.
  SplitMix64 rng(mix_seed(seed, 0x76f0cabull));
  while (vocab.size() < k) {
    const double curvature = rng.uniform(-kMaxCurvature, kMaxCurvature);
    const double speed_a = rng.uniform(kMinSpeed, kMaxSpeed);
    const double speed_b = rng.uniform(kMinSpeed, kMaxSpeed);
    vocab.trajectories.push_back(make_arc(curvature, speed_a, speed_b, vocab.size()));
  }

  for (const Trajectory& t : vocab.trajectories) validate(t);
  return vocab;
}

double lateral_endpoint(const Trajectory& traj) { return traj.waypoints.back().y; }

double trajectory_l2(const Trajectory& a, const Trajectory& b) {
  double sq = 0.0;
  for (int i = 0; i < Trajectory::kWaypointCount; ++i) {
    const Waypoint& wa = a.waypoints[static_cast<std::size_t>(i)];
    const Waypoint& wb = b.waypoints[static_cast<std::size_t>(i)];
    const double dx = wa.x - wb.x;
    const double dy = wa.y - wb.y;
    sq += dx * dx + dy * dy;
  }
  return std::sqrt(sq);
}

std::vector<int> sample_candidates(const PlanningVocabulary& vocab,
                                   const std::vector<double>& weights, int m,
                                   std::uint64_t seed) {
  const int k = vocab.size();
  require(static_cast<int>(weights.size()) == k, "invalid-parameter",
          "weight count must match vocabulary size");
  require(m >= 1 && m <= k, "invalid-parameter", "candidate count out of range");
  int positive = 0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "invalid-parameter",
            "weights must be finite and nonnegative");
    if (w > 0.0) ++positive;
  }
  require(positive >= m, "insufficient-positive-weights",
          "fewer strictly positive weights than requested candidates");

  // Exponential race (Efraimidis-Spirakis): key_i = -log(u_i)/w_i, take the m
  // smallest. Equivalent to sequential weighted draws without replacement.
  SplitMix64 rng(mix_seed(seed, 0x5ca1ab1eull));
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(static_cast<std::size_t>(k));
  for (int id = 0; id < k; ++id) {
    const double u = rng.next_open();
    const double w = weights[static_cast<std::size_t>(id)];
    if (w > 0.0) keyed.emplace_back(-std::log(u) / w, id);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) picked.push_back(keyed[static_cast<std::size_t>(i)].second);
  return picked;
}

namespace {

// Returns candidate index minimizing cost, skipping already-taken indices;
// cost ties break by lower trajectory id (then lower index).
int best_untaken(const std::vector<Trajectory>& candidates, const std::vector<bool>& taken,
                 const std::function<double(const Trajectory&)>& cost) {
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  int best_id = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (taken[i]) continue;
    const double c = cost(candidates[i]);
    const int id = candidates[i].id;
    if (c < best_cost || (c == best_cost && id < best_id)) {
      best = static_cast<int>(i);
      best_cost = c;
      best_id = id;
    }
  }
  return best;
}

}  // namespace

AnchorSet select_anchors(const std::vector<Trajectory>& candidates) {
  require(candidates.size() >= 5, "invalid-parameter", "need at least 5 candidates");

  std::vector<double> lat(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) lat[i] = lateral_endpoint(candidates[i]);

  const auto [mn_it, mx_it] = std::minmax_element(lat.begin(), lat.end());
  require(*mx_it - *mn_it > 0.0, "degenerate-candidates",
          "all candidate lateral endpoints are equal");
  const double sharp_left_y = *mx_it;
  const double sharp_right_y = *mn_it;

  AnchorSet anchors;
  std::vector<bool> taken(candidates.size(), false);
  const auto place = [&](AnchorLabel label, const std::function<double(const Trajectory&)>& cost) {
    const int idx = best_untaken(candidates, taken, cost);
    require(idx >= 0, "degenerate-candidates", "ran out of distinct anchor candidates");
    anchors.index[static_cast<std::size_t>(label)] = idx;
    taken[static_cast<std::size_t>(idx)] = true;
  };

  // Distinctness fallback order: sharp, slight, forward.
  place(AnchorLabel::kSharpLeft,
        [](const Trajectory& t) { return -lateral_endpoint(t); });
  place(AnchorLabel::kSharpRight,
        [](const Trajectory& t) { return lateral_endpoint(t); });
  place(AnchorLabel::kSlightLeft, [&](const Trajectory& t) {
    return std::fabs(lateral_endpoint(t) - 0.5 * sharp_left_y);
  });
  place(AnchorLabel::kSlightRight, [&](const Trajectory& t) {
    return std::fabs(lateral_endpoint(t) - 0.5 * sharp_right_y);
  });
  place(AnchorLabel::kForward,
        [](const Trajectory& t) { return std::fabs(lateral_endpoint(t)); });
  return anchors;
}

ClusterAssignment assign_clusters(const std::vector<Trajectory>& candidates,
                                  const AnchorSet& anchors) {
  ClusterAssignment assignment;
  assignment.label.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    AnchorLabel best = AnchorLabel::kSharpLeft;
    double best_d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < kAnchorCount; ++a) {
      const Trajectory& anchor =
          candidates[static_cast<std::size_t>(anchors.index[static_cast<std::size_t>(a)])];
      const double d = trajectory_l2(candidates[i], anchor);
      if (d < best_d) {  // ties keep the earlier label
        best_d = d;
        best = static_cast<AnchorLabel>(a);
      }
    }
    assignment.label[i] = best;
  }
  return assignment;
}

void save_vocabulary(const PlanningVocabulary& vocab, const VocabularyFileHeader& header,
                     const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "missing-path", "cannot open vocabulary file for writing: " + path);
  out << "centaur-vocab " << header.format_version << "\n";
  out << "k " << vocab.size() << "\n";
  out << "speed_levels " << header.speed_levels << "\n";
  out << "curvature_levels " << header.curvature_levels << "\n";
  out << "seed " << header.seed << "\n";
  char buf[64];
  for (const Trajectory& t : vocab.trajectories) {
    out << t.id;
    for (const Waypoint& w : t.waypoints) {
      std::snprintf(buf, sizeof(buf), " %.6f %.6f %.6f", w.x, w.y, w.heading);
      out << buf;
    }
    out << "\n";
  }
  require(out.good(), "missing-path", "failed writing vocabulary file: " + path);
}

PlanningVocabulary load_vocabulary(const std::string& path, VocabularyFileHeader* header_out) {
  std::ifstream in(path);
  require(in.good(), "missing-path", "cannot open vocabulary file: " + path);
  std::string magic;
  VocabularyFileHeader header;
  in >> magic >> header.format_version;
  require(magic == "centaur-vocab", "schema-version-mismatch",
          "not a vocabulary file: " + path);
  require(header.format_version == 1, "schema-version-mismatch",
          "unsupported vocabulary format version");
  std::string key;
  in >> key >> header.k;
  require(key == "k", "schema-version-mismatch", "malformed vocabulary header");
  in >> key >> header.speed_levels;
  require(key == "speed_levels", "schema-version-mismatch", "malformed vocabulary header");
  in >> key >> header.curvature_levels;
  require(key == "curvature_levels", "schema-version-mismatch", "malformed vocabulary header");
  in >> key >> header.seed;
  require(key == "seed", "schema-version-mismatch", "malformed vocabulary header");

  PlanningVocabulary vocab;
  vocab.trajectories.resize(static_cast<std::size_t>(header.k));
  for (int i = 0; i < header.k; ++i) {
    Trajectory& t = vocab.trajectories[static_cast<std::size_t>(i)];
    in >> t.id;
    for (Waypoint& w : t.waypoints) in >> w.x >> w.y >> w.heading;
    require(in.good() || in.eof(), "schema-version-mismatch",
            "truncated vocabulary file: " + path);
    require(t.id == i, "invalid-parameter", "vocabulary ids must be 0..k-1 in order");
    validate(t);
  }
  if (header_out != nullptr) *header_out = header;
  return vocab;
}

}  // namespace centaur::geometry
