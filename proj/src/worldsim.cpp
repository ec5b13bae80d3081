#include "centaur/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "centaur/error.hpp"
#include "centaur/parallel.hpp"
#include "centaur/rng.hpp"

namespace centaur::worldsim {

namespace {

constexpr double kMaxAccel = 4.0;  // m/s^2
constexpr double kMaxJerk = 8.0;   // m/s^3
constexpr double kTtcSubStep = 0.1;
constexpr int kTtcSubSteps = 10;

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Oriented rectangle overlap via separating axes. `du` is the ego's unit
// heading axis; the obstacle is axis-aligned. Touching counts as overlap.
bool rects_overlap(Vec2 ego_center, Vec2 du, double ehl, double ehw, Vec2 obs_center,
                   double ohl, double ohw) {
  const Vec2 dv{-du.y, du.x};
  const double dx = obs_center.x - ego_center.x;
  const double dy = obs_center.y - ego_center.y;
  // Ego axes.
  {
    const double dist = std::fabs(dx * du.x + dy * du.y);
    const double span = ehl + ohl * std::fabs(du.x) + ohw * std::fabs(du.y);
    if (dist > span) return false;
  }
  {
    const double dist = std::fabs(dx * dv.x + dy * dv.y);
    const double span = ehw + ohl * std::fabs(dv.x) + ohw * std::fabs(dv.y);
    if (dist > span) return false;
  }
  // World axes.
  {
    const double dist = std::fabs(dx);
    const double span = ohl + ehl * std::fabs(du.x) + ehw * std::fabs(dv.x);
    if (dist > span) return false;
  }
  {
    const double dist = std::fabs(dy);
    const double span = ohw + ehl * std::fabs(du.y) + ehw * std::fabs(dv.y);
    if (dist > span) return false;
  }
  return true;
}

bool ego_hits_obstacle(const Trajectory& traj, int waypoint, const Obstacle& obs,
                       double time_offset, Vec2 ego_shift) {
  const geometry::Waypoint& w = traj.waypoints[static_cast<std::size_t>(waypoint)];
  const double t = Trajectory::time_of(waypoint) + time_offset;
  const Vec2 ego{w.x + ego_shift.x, w.y + ego_shift.y};
  const Vec2 du{std::cos(w.heading), std::sin(w.heading)};
  const Vec2 oc{obs.x + obs.vx * t, obs.y + obs.vy * t};
  return rects_overlap(ego, du, kEgoHalfLength, kEgoHalfWidth, oc, obs.half_length,
                       obs.half_width);
}

// Distance from p to segment [a, b] and the arc-length fraction of the
// closest point within the segment.
std::pair<double, double> point_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double abx = b.x - a.x;
  const double aby = b.y - a.y;
  const double len_sq = abx * abx + aby * aby;
  double t = 0.0;
  if (len_sq > 0.0) {
    t = ((p.x - a.x) * abx + (p.y - a.y) * aby) / len_sq;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double cx = a.x + t * abx;
  const double cy = a.y + t * aby;
  return {std::hypot(p.x - cx, p.y - cy), t};
}

// (distance to polyline, arc length of the projection).
std::pair<double, double> project_to_centerline(const Corridor& corridor, Vec2 p) {
  double best_dist = std::numeric_limits<double>::infinity();
  double best_arc = 0.0;
  double arc = 0.0;
  for (std::size_t i = 0; i + 1 < corridor.centerline.size(); ++i) {
    const Vec2 a{corridor.centerline[i].first, corridor.centerline[i].second};
    const Vec2 b{corridor.centerline[i + 1].first, corridor.centerline[i + 1].second};
    const double seg_len = std::hypot(b.x - a.x, b.y - a.y);
    const auto [dist, t] = point_segment(p, a, b);
    if (dist < best_dist) {
      best_dist = dist;
      best_arc = arc + t * seg_len;
    }
    arc += seg_len;
  }
  return {best_dist, best_arc};
}

SubScores score_one(const Scene& scene, const Trajectory& traj, double ep_denominator) {
  SubScores sub;
  sub.nc = score_no_collision(scene, traj);
  sub.dac = score_drivable_area(scene, traj);
  sub.c = score_comfort(scene, traj);
  sub.ttc = score_ttc(scene, traj);
  if (ep_denominator > 0.0) {
    sub.ep = std::clamp(progress_along_corridor(scene, traj) / ep_denominator, 0.0, 1.0);
  } else {
    sub.ep = 0.0;
  }
  return sub;
}

}  // namespace

const char* command_name(Command c) {
  switch (c) {
    case Command::kLeft: return "left";
    case Command::kStraight: return "straight";
    case Command::kRight: return "right";
  }
  return "?";
}

Command command_from_name(const std::string& name) {
  if (name == "left") return Command::kLeft;
  if (name == "straight") return Command::kStraight;
  if (name == "right") return Command::kRight;
  raise("invalid-parameter", "unknown command: " + name);
}

double Corridor::total_length() const {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < centerline.size(); ++i) {
    len += std::hypot(centerline[i + 1].first - centerline[i].first,
                      centerline[i + 1].second - centerline[i].second);
  }
  return len;
}

namespace {
constexpr const char* kCategoryCodes[kCategoryCount] = {
    "NONE", "RDBT", "YLLT", "EXR", "UNPL", "ENR", "UNTS", "OTLC", "NLA", "BWTH", "YLD"};
}

const char* category_code(Category c) { return kCategoryCodes[static_cast<int>(c)]; }

Category category_from_code(const std::string& code) {
  for (int i = 0; i < kCategoryCount; ++i) {
    if (code == kCategoryCodes[i]) return static_cast<Category>(i);
  }
  raise("unknown-category", "unknown scene category: " + code);
}

void validate(const Scene& scene) {
  require(scene.ego.speed >= 0.0 && scene.ego.speed <= 20.0, "invalid-parameter",
          "ego speed outside [0, 20]");
  require(std::fabs(scene.ego.acceleration) <= 5.0, "invalid-parameter",
          "ego acceleration outside [-5, 5]");
  require(scene.corridor.half_width >= 1.5 && scene.corridor.half_width <= 8.0,
          "invalid-parameter", "corridor half width outside [1.5, 8]");
  require(scene.corridor.centerline.size() >= 2, "invalid-parameter",
          "corridor centerline needs at least 2 points");
  for (std::size_t i = 0; i + 1 < scene.corridor.centerline.size(); ++i) {
    const double dx = scene.corridor.centerline[i + 1].first - scene.corridor.centerline[i].first;
    const double dy =
        scene.corridor.centerline[i + 1].second - scene.corridor.centerline[i].second;
    require(std::hypot(dx, dy) > 0.0, "invalid-parameter",
            "corridor centerline arc length must strictly increase");
  }
  for (const Obstacle& o : scene.obstacles) {
    require(o.half_length > 0.0 && o.half_width > 0.0, "invalid-parameter",
            "obstacle half extents must be positive");
    require(std::hypot(o.vx, o.vy) <= 25.0 + 1e-9, "invalid-parameter",
            "obstacle speed exceeds 25 m/s");
  }
  require(scene.frame_index >= 0, "invalid-parameter", "frame index must be >= 0");
}

double pdm_score(const SubScores& sub) {
  return sub.nc * sub.dac * (5.0 * sub.ttc + 2.0 * sub.c + 5.0 * sub.ep) / 12.0;
}

double score_no_collision(const Scene& scene, const Trajectory& traj) {
  for (int i = 0; i < Trajectory::kWaypointCount; ++i) {
    for (const Obstacle& obs : scene.obstacles) {
      if (ego_hits_obstacle(traj, i, obs, 0.0, Vec2{})) return 0.0;
    }
  }
  return 1.0;
}

double score_ttc(const Scene& scene, const Trajectory& traj) {
  if (scene.obstacles.empty()) return 1.0;
  const double dt = Trajectory::time_step();
  for (int i = 0; i < Trajectory::kWaypointCount; ++i) {
    const auto& wps = traj.waypoints;
    const std::size_t ii = static_cast<std::size_t>(i);
    Vec2 vel;
    if (i + 1 < Trajectory::kWaypointCount) {
      vel = {(wps[ii + 1].x - wps[ii].x) / dt, (wps[ii + 1].y - wps[ii].y) / dt};
    } else {
      vel = {(wps[ii].x - wps[ii - 1].x) / dt, (wps[ii].y - wps[ii - 1].y) / dt};
    }
    for (int j = 0; j < kTtcSubSteps; ++j) {
      const double offset = kTtcSubStep * static_cast<double>(j);
      const Vec2 shift{vel.x * offset, vel.y * offset};
      for (const Obstacle& obs : scene.obstacles) {
        if (ego_hits_obstacle(traj, i, obs, offset, shift)) return 0.0;
      }
    }
  }
  return 1.0;
}

double score_drivable_area(const Scene& scene, const Trajectory& traj) {
  for (const geometry::Waypoint& w : traj.waypoints) {
    const auto [dist, arc] = project_to_centerline(scene.corridor, Vec2{w.x, w.y});
    if (dist > scene.corridor.half_width) return 0.0;
  }
  return 1.0;
}

double score_comfort(const Scene& /*scene*/, const Trajectory& traj) {
  const double dt = Trajectory::time_step();
  const int n = Trajectory::kWaypointCount;
  std::array<Vec2, Trajectory::kWaypointCount> vel{};
  for (int i = 0; i + 1 < n; ++i) {
    const auto& a = traj.waypoints[static_cast<std::size_t>(i)];
    const auto& b = traj.waypoints[static_cast<std::size_t>(i + 1)];
    vel[static_cast<std::size_t>(i)] = {(b.x - a.x) / dt, (b.y - a.y) / dt};
  }
  std::array<Vec2, Trajectory::kWaypointCount> acc{};
  for (int i = 0; i + 2 < n; ++i) {
    const Vec2& a = vel[static_cast<std::size_t>(i)];
    const Vec2& b = vel[static_cast<std::size_t>(i + 1)];
    acc[static_cast<std::size_t>(i)] = {(b.x - a.x) / dt, (b.y - a.y) / dt};
    if (std::hypot(acc[static_cast<std::size_t>(i)].x, acc[static_cast<std::size_t>(i)].y) >
        kMaxAccel) {
      return 0.0;
    }
  }
  for (int i = 0; i + 3 < n; ++i) {
    const Vec2& a = acc[static_cast<std::size_t>(i)];
    const Vec2& b = acc[static_cast<std::size_t>(i + 1)];
    if (std::hypot((b.x - a.x) / dt, (b.y - a.y) / dt) > kMaxJerk) return 0.0;
  }
  return 1.0;
}

double progress_along_corridor(const Scene& scene, const Trajectory& traj) {
  const geometry::Waypoint& first = traj.waypoints.front();
  const geometry::Waypoint& last = traj.waypoints.back();
  const double s0 = project_to_centerline(scene.corridor, Vec2{first.x, first.y}).second;
  const double s1 = project_to_centerline(scene.corridor, Vec2{last.x, last.y}).second;
  return std::max(0.0, s1 - s0);
}

double best_feasible_progress(const Scene& scene, const PlanningVocabulary& vocab) {
  double best = 0.0;
  for (const Trajectory& t : vocab.trajectories) {
    if (score_no_collision(scene, t) == 1.0 && score_drivable_area(scene, t) == 1.0) {
      best = std::max(best, progress_along_corridor(scene, t));
    }
  }
  return best;
}

double score_progress(const Scene& scene, const Trajectory& traj,
                      const PlanningVocabulary& vocab) {
  const double denom = best_feasible_progress(scene, vocab);
  if (denom <= 0.0) return 0.0;
  return std::clamp(progress_along_corridor(scene, traj) / denom, 0.0, 1.0);
}

SubScores expert_score(const Scene& scene, const Trajectory& traj,
                       const PlanningVocabulary& vocab) {
  return score_one(scene, traj, best_feasible_progress(scene, vocab));
}

namespace {

ExpertTable score_vocabulary_impl(const Scene& scene, const PlanningVocabulary& vocab,
                                  bool parallel) {
  const std::size_t k = vocab.trajectories.size();
  ExpertTable table;
  table.rows.resize(k);
  table.pdms.resize(k);

  // Pass 1: feasibility and raw progress per trajectory.
  std::vector<double> progress(k, 0.0);
  std::vector<char> feasible(k, 0);
  const auto raw = [&](std::size_t i) {
    const Trajectory& t = vocab.trajectories[i];
    SubScores& sub = table.rows[i];
    sub.nc = score_no_collision(scene, t);
    sub.dac = score_drivable_area(scene, t);
    sub.c = score_comfort(scene, t);
    sub.ttc = score_ttc(scene, t);
    progress[i] = progress_along_corridor(scene, t);
    feasible[i] = (sub.nc == 1.0 && sub.dac == 1.0) ? 1 : 0;
  };
  if (parallel) {
    par::parallel_for(k, raw);
  } else {
    for (std::size_t i = 0; i < k; ++i) raw(i);
  }

  double denom = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (feasible[i]) denom = std::max(denom, progress[i]);
  }
  table.ep_denominator = denom;

  for (std::size_t i = 0; i < k; ++i) {
    SubScores& sub = table.rows[i];
    sub.ep = (denom > 0.0) ? std::clamp(progress[i] / denom, 0.0, 1.0) : 0.0;
    table.pdms[i] = pdm_score(sub);
  }
  return table;
}

}  // namespace

ExpertTable expert_score_vocabulary(const Scene& scene, const PlanningVocabulary& vocab) {
  return score_vocabulary_impl(scene, vocab, true);
}

ExpertTable expert_score_vocabulary_serial(const Scene& scene,
                                           const PlanningVocabulary& vocab) {
  return score_vocabulary_impl(scene, vocab, false);
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

namespace {

struct CurvaturePiece {
  double length;
  double curvature;
};

Corridor make_corridor(double half_width, const std::vector<CurvaturePiece>& pieces) {
  Corridor c;
  c.half_width = half_width;
  double x = -5.0, y = 0.0, heading = 0.0;
  const double step = 2.0;
  c.centerline.emplace_back(x, y);
  for (const CurvaturePiece& piece : pieces) {
    int n = std::max(1, static_cast<int>(std::round(piece.length / step)));
    const double ds = piece.length / n;
    for (int i = 0; i < n; ++i) {
      heading += piece.curvature * ds;
      x += std::cos(heading) * ds;
      y += std::sin(heading) * ds;
      c.centerline.emplace_back(x, y);
    }
  }
  return c;
}

// Point and unit tangent/normal at arc length s along the centerline.
struct FramePoint {
  Vec2 p;
  Vec2 tangent;
  Vec2 normal;  // left of travel
};

FramePoint frame_at_arc(const Corridor& corridor, double s) {
  double arc = 0.0;
  for (std::size_t i = 0; i + 1 < corridor.centerline.size(); ++i) {
    const Vec2 a{corridor.centerline[i].first, corridor.centerline[i].second};
    const Vec2 b{corridor.centerline[i + 1].first, corridor.centerline[i + 1].second};
    const double seg = std::hypot(b.x - a.x, b.y - a.y);
    if (arc + seg >= s || i + 2 == corridor.centerline.size()) {
      const double t = std::clamp((s - arc) / seg, 0.0, 1.0);
      FramePoint f;
      f.p = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
      f.tangent = {(b.x - a.x) / seg, (b.y - a.y) / seg};
      f.normal = {-f.tangent.y, f.tangent.x};
      return f;
    }
    arc += seg;
  }
  FramePoint f;
  f.p = {corridor.centerline.back().first, corridor.centerline.back().second};
  f.tangent = {1.0, 0.0};
  f.normal = {0.0, 1.0};
  return f;
}

Obstacle lead_vehicle(const Corridor& corridor, double s, double speed, double lateral) {
  const FramePoint f = frame_at_arc(corridor, s);
  Obstacle o;
  o.x = f.p.x + lateral * f.normal.x;
  o.y = f.p.y + lateral * f.normal.y;
  o.vx = f.tangent.x * speed;
  o.vy = f.tangent.y * speed;
  o.half_length = 2.2;
  o.half_width = 0.9;
  return o;
}

// An obstacle that reaches the centerline point at arc s at time t_cross,
// approaching from `side` (+1 = from the left) at `speed`.
Obstacle crossing_obstacle(const Corridor& corridor, double s, double t_cross, double speed,
                           int side, double half_len, double half_wid) {
  const FramePoint f = frame_at_arc(corridor, s);
  const double offset = speed * t_cross;
  Obstacle o;
  o.x = f.p.x + side * offset * f.normal.x;
  o.y = f.p.y + side * offset * f.normal.y;
  o.vx = -side * speed * f.normal.x;
  o.vy = -side * speed * f.normal.y;
  o.half_length = half_len;
  o.half_width = half_wid;
  return o;
}

Command command_for(const std::vector<CurvaturePiece>& pieces) {
  double net = 0.0;
  for (const CurvaturePiece& p : pieces) net += p.curvature * p.length;
  if (net > 0.3) return Command::kLeft;
  if (net < -0.3) return Command::kRight;
  return Command::kStraight;
}

Scene build_scene(Category category, SplitMix64& rng) {
  Scene scene;
  scene.category = category;
  std::vector<CurvaturePiece> pieces;

  switch (category) {
    case Category::kNone: {
      const double curv = rng.uniform(-0.008, 0.008);
      pieces = {{80.0, curv}};
      scene.corridor = make_corridor(rng.uniform(3.0, 4.5), pieces);
      scene.ego.speed = rng.uniform(5.0, 10.0);
      const int n_obs = 1 + static_cast<int>(rng.next_below(2));
      for (int i = 0; i < n_obs; ++i) {
        scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(30.0, 60.0),
                                               rng.uniform(4.0, 9.0),
                                               rng.uniform(-0.8, 0.8)));
      }
      break;
    }
    case Category::kRdbt: {
      const int dir = rng.next_below(2) == 0 ? 1 : -1;
      const double curv = dir * rng.uniform(0.05, 0.08);
      pieces = {{12.0, 0.0}, {60.0, curv}};
      scene.corridor = make_corridor(rng.uniform(3.0, 4.0), pieces);
      scene.ego.speed = rng.uniform(3.0, 6.0);
      const int n_cross = 2 + static_cast<int>(rng.next_below(2));
      for (int i = 0; i < n_cross; ++i) {
        const double s = rng.uniform(12.0, 32.0);
        const double t_cross = s / std::max(1.0, scene.ego.speed) + rng.uniform(-1.2, 1.2);
        scene.obstacles.push_back(crossing_obstacle(scene.corridor, s,
                                                    std::max(0.4, t_cross),
                                                    rng.uniform(3.0, 6.0),
                                                    rng.next_below(2) == 0 ? 1 : -1, 2.2, 0.9));
      }
      break;
    }
    case Category::kYllt: {
      pieces = {{80.0, 0.0}};
      scene.corridor = make_corridor(rng.uniform(3.0, 4.0), pieces);
      scene.ego.speed = rng.uniform(6.0, 10.0);
      const double s = rng.uniform(22.0, 38.0);
      const double t_cross = s / scene.ego.speed + rng.uniform(-0.8, 0.8);
      scene.obstacles.push_back(crossing_obstacle(scene.corridor, s, std::max(0.4, t_cross),
                                                  rng.uniform(4.0, 8.0),
                                                  rng.next_below(2) == 0 ? 1 : -1, 2.2, 0.9));
      if (rng.next_below(2) == 0) {
        scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(45.0, 65.0),
                                               rng.uniform(5.0, 9.0), 0.0));
      }
      break;
    }
    case Category::kExr: {
      const double curv = -rng.uniform(0.03, 0.05);
      pieces = {{18.0, 0.0}, {55.0, curv}};
      scene.corridor = make_corridor(rng.uniform(2.8, 3.5), pieces);
      scene.ego.speed = rng.uniform(5.0, 9.0);
      scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(12.0, 22.0),
                                             rng.uniform(2.0, 5.0), rng.uniform(-0.5, 0.5)));
      break;
    }
    case Category::kUnpl: {
      const double curv = rng.uniform(0.03, 0.05);
      pieces = {{15.0, 0.0}, {55.0, curv}};
      scene.corridor = make_corridor(rng.uniform(3.0, 3.8), pieces);
      scene.ego.speed = rng.uniform(4.0, 7.0);
      // Oncoming traffic cutting across the turn.
      const int n_onc = 1 + static_cast<int>(rng.next_below(2));
      for (int i = 0; i < n_onc; ++i) {
        const double s = rng.uniform(18.0, 34.0);
        const FramePoint f = frame_at_arc(scene.corridor, s);
        Obstacle o;
        const double lead = rng.uniform(14.0, 30.0);
        const double speed = rng.uniform(6.0, 10.0);
        o.x = f.p.x + f.tangent.x * lead - f.normal.x * rng.uniform(0.0, 2.0);
        o.y = f.p.y + f.tangent.y * lead - f.normal.y * rng.uniform(0.0, 2.0);
        o.vx = -f.tangent.x * speed;
        o.vy = -f.tangent.y * speed;
        o.half_length = 2.2;
        o.half_width = 0.9;
        scene.obstacles.push_back(o);
      }
      break;
    }
    case Category::kEnr: {
      const double curv = rng.uniform(0.02, 0.04);
      pieces = {{20.0, curv}, {50.0, 0.0}};
      scene.corridor = make_corridor(rng.uniform(3.0, 4.0), pieces);
      scene.ego.speed = rng.uniform(5.0, 9.0);
      // Mainline vehicle converging from the outside of the merge.
      const double s = rng.uniform(25.0, 40.0);
      const FramePoint f = frame_at_arc(scene.corridor, s);
      Obstacle o;
      o.x = f.p.x + f.normal.x * rng.uniform(3.5, 5.5) - f.tangent.x * rng.uniform(5.0, 15.0);
      o.y = f.p.y + f.normal.y * rng.uniform(3.5, 5.5) - f.tangent.y * rng.uniform(5.0, 15.0);
      const double speed = rng.uniform(5.0, 9.0);
      o.vx = f.tangent.x * speed - f.normal.x * rng.uniform(0.3, 0.8);
      o.vy = f.tangent.y * speed - f.normal.y * rng.uniform(0.3, 0.8);
      o.half_length = 2.2;
      o.half_width = 0.9;
      scene.obstacles.push_back(o);
      break;
    }
    case Category::kUnts: {
      pieces = {{80.0, rng.uniform(-0.01, 0.01)}};
      scene.corridor = make_corridor(rng.uniform(2.2, 2.8), pieces);
      scene.ego.speed = rng.uniform(4.0, 8.0);
      scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(16.0, 30.0),
                                             rng.uniform(0.0, 1.0), rng.uniform(-0.4, 0.4)));
      break;
    }
    case Category::kOtlc: {
      pieces = {{80.0, rng.uniform(-0.005, 0.005)}};
      scene.corridor = make_corridor(rng.uniform(4.5, 6.0), pieces);
      scene.ego.speed = rng.uniform(6.0, 10.0);
      // Slow lead in lane; adjacent space left free for the overtake.
      scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(12.0, 22.0),
                                             rng.uniform(1.0, 3.0), rng.uniform(-0.4, 0.4)));
      if (rng.next_below(2) == 0) {
        scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(50.0, 70.0),
                                               rng.uniform(4.0, 8.0), 0.0));
      }
      break;
    }
    case Category::kNla: {
      pieces = {{80.0, 0.0}};
      scene.corridor = make_corridor(rng.uniform(6.0, 8.0), pieces);
      scene.ego.speed = rng.uniform(2.0, 5.0);
      const int n_obs = 3 + static_cast<int>(rng.next_below(3));
      for (int i = 0; i < n_obs; ++i) {
        Obstacle o;
        o.x = rng.uniform(8.0, 55.0);
        o.y = rng.uniform(-5.0, 5.0);
        const double sp = rng.uniform(0.0, 1.5);
        const double dir = rng.uniform(0.0, 6.283185307179586);
        o.vx = sp * std::cos(dir);
        o.vy = sp * std::sin(dir);
        o.half_length = 2.2;
        o.half_width = 0.9;
        scene.obstacles.push_back(o);
      }
      break;
    }
    case Category::kBwth: {
      pieces = {{80.0, rng.uniform(-0.015, 0.015)}};
      scene.corridor = make_corridor(rng.uniform(2.5, 3.5), pieces);
      scene.ego.speed = rng.uniform(3.0, 7.0);
      const int n_obs = 2 + static_cast<int>(rng.next_below(3));
      for (int i = 0; i < n_obs; ++i) {
        if (rng.next_below(2) == 0) {
          scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(14.0, 45.0),
                                                 rng.uniform(1.0, 6.0),
                                                 rng.uniform(-1.0, 1.0)));
        } else {
          const double s = rng.uniform(15.0, 35.0);
          const double t_cross =
              s / std::max(1.0, scene.ego.speed) + rng.uniform(-1.5, 1.5);
          scene.obstacles.push_back(crossing_obstacle(scene.corridor, s,
                                                      std::max(0.4, t_cross),
                                                      rng.uniform(2.0, 6.0),
                                                      rng.next_below(2) == 0 ? 1 : -1, 2.2,
                                                      0.9));
        }
      }
      break;
    }
    case Category::kYld: {
      pieces = {{80.0, rng.uniform(-0.008, 0.008)}};
      scene.corridor = make_corridor(rng.uniform(3.0, 4.0), pieces);
      scene.ego.speed = rng.uniform(3.0, 7.0);
      // Pedestrian-like crosser: slow, small footprint, timed near arrival.
      const double s = rng.uniform(10.0, 26.0);
      const double t_cross = s / std::max(1.0, scene.ego.speed) + rng.uniform(-0.8, 0.8);
      scene.obstacles.push_back(crossing_obstacle(scene.corridor, s, std::max(0.5, t_cross),
                                                  rng.uniform(0.8, 1.8),
                                                  rng.next_below(2) == 0 ? 1 : -1, 0.35,
                                                  0.35));
      if (rng.next_below(2) == 0) {
        scene.obstacles.push_back(lead_vehicle(scene.corridor, rng.uniform(40.0, 60.0),
                                               rng.uniform(3.0, 7.0), 0.0));
      }
      break;
    }
  }

  scene.ego.acceleration = rng.uniform(-1.0, 1.0);
  scene.ego.command = command_for(pieces);
  return scene;
}

}  // namespace

const PlanningVocabulary& default_test_vocabulary() {
  static const PlanningVocabulary vocab = geometry::generate_vocabulary(25, 5, 5, 0);
  return vocab;
}

Scene generate_scene(Category category, std::uint64_t seed) {
  const PlanningVocabulary& vocab = default_test_vocabulary();
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    SplitMix64 rng(mix_seed(seed, static_cast<std::uint64_t>(category) + 1, attempt));
    Scene scene = build_scene(category, rng);
    scene.seed = seed;
    scene.frame_index = 0;
    validate(scene);
    const ExpertTable table = expert_score_vocabulary_serial(scene, vocab);
    if (*std::max_element(table.pdms.begin(), table.pdms.end()) > 0.0) return scene;
  }
  raise("invalid-parameter", "scene generation failed to produce an admissible scene");
}

std::vector<Scene> generate_stream(int n_frames, const std::vector<Category>& mix,
                                   std::uint64_t seed) {
  require(n_frames >= 1, "invalid-parameter", "stream needs at least one frame");
  require(!mix.empty(), "invalid-parameter", "category mix must not be empty");

  std::vector<Scene> frames;
  frames.reserve(static_cast<std::size_t>(n_frames));
  const double dt_frame = 0.5;

  int frame = 0;
  for (int episode = 0; frame < n_frames; ++episode) {
    const Category category = mix[static_cast<std::size_t>(episode) % mix.size()];
    const std::uint64_t episode_seed =
        (episode == 0) ? seed : mix_seed(seed, 0xEF15u, static_cast<std::uint64_t>(episode));
    const Scene base = generate_scene(category, episode_seed);
    for (int j = 0; j < kStreamEpisodeLength && frame < n_frames; ++j, ++frame) {
      Scene scene = base;
      scene.frame_index = frame;
      if (j > 0) {
        SplitMix64 rng(mix_seed(episode_seed, 0xF4A3Eu, static_cast<std::uint64_t>(j)));
        const double t = dt_frame * j;
        for (Obstacle& o : scene.obstacles) {
          o.x += o.vx * t;
          o.y += o.vy * t;
          o.vx *= 1.0 + rng.uniform(-0.06, 0.06);
          o.vy *= 1.0 + rng.uniform(-0.06, 0.06);
          const double sp = std::hypot(o.vx, o.vy);
          if (sp > 25.0) {
            o.vx *= 25.0 / sp;
            o.vy *= 25.0 / sp;
          }
        }
        scene.ego.speed = std::clamp(base.ego.speed + rng.uniform(-0.5, 0.5), 0.0, 20.0);
        scene.ego.acceleration =
            std::clamp(base.ego.acceleration + rng.uniform(-0.3, 0.3), -5.0, 5.0);
      }
      frames.push_back(std::move(scene));
    }
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {
using json = nlohmann::ordered_json;
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["format_version"] = 1;
  j["category"] = category_code(scene.category);
  j["seed"] = scene.seed;
  j["frame_index"] = scene.frame_index;
  j["ego"] = {{"speed", scene.ego.speed},
              {"acceleration", scene.ego.acceleration},
              {"command", command_name(scene.ego.command)}};
  json centerline = json::array();
  for (const auto& [x, y] : scene.corridor.centerline) centerline.push_back({x, y});
  j["corridor"] = {{"half_width", scene.corridor.half_width}, {"centerline", centerline}};
  json obstacles = json::array();
  for (const Obstacle& o : scene.obstacles) {
    obstacles.push_back({{"x", o.x},
                         {"y", o.y},
                         {"vx", o.vx},
                         {"vy", o.vy},
                         {"hl", o.half_length},
                         {"hw", o.half_width}});
  }
  j["obstacles"] = obstacles;
  return j.dump();
}

Scene scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    raise("schema-version-mismatch", std::string("scene parse failure: ") + e.what());
  }
  require(j.value("format_version", -1) == 1, "schema-version-mismatch",
          "unsupported scene format version");
  Scene scene;
  scene.category = category_from_code(j.at("category").get<std::string>());
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.frame_index = j.at("frame_index").get<int>();
  const json& ego = j.at("ego");
  scene.ego.speed = ego.at("speed").get<double>();
  scene.ego.acceleration = ego.at("acceleration").get<double>();
  scene.ego.command = command_from_name(ego.at("command").get<std::string>());
  const json& corridor = j.at("corridor");
  scene.corridor.half_width = corridor.at("half_width").get<double>();
  for (const json& pt : corridor.at("centerline")) {
    scene.corridor.centerline.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
  }
  for (const json& jo : j.at("obstacles")) {
    Obstacle o;
    o.x = jo.at("x").get<double>();
    o.y = jo.at("y").get<double>();
    o.vx = jo.at("vx").get<double>();
    o.vy = jo.at("vy").get<double>();
    o.half_length = jo.at("hl").get<double>();
    o.half_width = jo.at("hw").get<double>();
    scene.obstacles.push_back(o);
  }
  validate(scene);
  return scene;
}

void save_stream(const std::vector<Scene>& scenes, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "missing-path", "cannot open scene file for writing: " + path);
  for (const Scene& s : scenes) out << scene_to_json(s) << "\n";
  require(out.good(), "missing-path", "failed writing scene file: " + path);
}

std::vector<Scene> load_stream(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "missing-path", "cannot open scene file: " + path);
  std::vector<Scene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    scenes.push_back(scene_from_json(line));
  }
  return scenes;
}

}  // namespace centaur::worldsim
