#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "centaur/geometry.hpp"

namespace centaur::worldsim {

using geometry::PlanningVocabulary;
using geometry::Trajectory;

enum class Command : int { kLeft = 0, kStraight = 1, kRight = 2 };

const char* command_name(Command c);
Command command_from_name(const std::string& name);

struct EgoStatus {
  double speed = 0.0;         // m/s, in [0, 20]
  double acceleration = 0.0;  // m/s^2, |a| <= 5
  Command command = Command::kStraight;
};

// Axis-aligned box moving at constant velocity in the ego frame.
struct Obstacle {
  double x = 0.0, y = 0.0;    // center at t = 0
  double vx = 0.0, vy = 0.0;  // m/s, speed <= 25
  double half_length = 1.0;   // x half extent
  double half_width = 1.0;    // y half extent
};

struct Corridor {
  std::vector<std::pair<double, double>> centerline;  // >= 2 points, increasing arc length
  double half_width = 3.0;                            // in [1.5, 8]

  double total_length() const;
};

enum class Category : int {
  kNone = 0,
  kRdbt,   // roundabout
  kYllt,   // yellow light, rush or wait
  kExr,    // exit ramp
  kUnpl,   // unprotected left
  kEnr,    // enter ramp
  kUnts,   // uncommon traffic sign
  kOtlc,   // overtaking with lane change
  kNla,    // no lane area
  kBwth,   // bad weather
  kYld,    // yielding
};
inline constexpr int kCategoryCount = 11;

const char* category_code(Category c);
Category category_from_code(const std::string& code);  // throws unknown-category

struct Scene {
  EgoStatus ego;
  Corridor corridor;
  std::vector<Obstacle> obstacles;
  Category category = Category::kNone;
  std::uint64_t seed = 0;
  int frame_index = 0;
};

void validate(const Scene& scene);

struct SubScores {
  double nc = 0.0;
  double dac = 0.0;
  double ep = 0.0;
  double c = 0.0;
  double ttc = 0.0;
};

// PDMS = NC * DAC * (5*TTC + 2*C + 5*EP) / 12
double pdm_score(const SubScores& sub);

// Ego footprint used by the collision checks, centered on each waypoint and
// oriented by its heading.
inline constexpr double kEgoHalfLength = 2.25;
inline constexpr double kEgoHalfWidth = 1.0;

// 1 if the ego footprint never overlaps any obstacle footprint over the 40
// waypoint timestamps (obstacles advanced at constant velocity), else 0.
double score_no_collision(const Scene& scene, const Trajectory& traj);

// 1 unless projecting the ego from some waypoint at its instantaneous
// velocity produces an overlap with a (likewise projected) obstacle within
// 1 s, checked at 10 sub-steps of 0.1 s starting at offset 0. The offset-0
// check makes NC = 0 imply TTC = 0.
double score_ttc(const Scene& scene, const Trajectory& traj);

// 1 if every waypoint center lies within half_width of the corridor
// centerline (closed boundary), else 0.
double score_drivable_area(const Scene& scene, const Trajectory& traj);

// 1 if finite-difference acceleration stays <= 4 m/s^2 and jerk <= 8 m/s^3
// at every step, else 0.
double score_comfort(const Scene& scene, const Trajectory& traj);

// Arc length gained along the corridor centerline, meters (>= 0).
double progress_along_corridor(const Scene& scene, const Trajectory& traj);

// Largest progress among vocabulary members with NC = 1 and DAC = 1; 0 when
// none qualifies. This is the EP normalizer.
double best_feasible_progress(const Scene& scene, const PlanningVocabulary& vocab);

// progress / best_feasible_progress clipped to [0, 1]; 0 when the
// denominator is 0.
double score_progress(const Scene& scene, const Trajectory& traj,
                      const PlanningVocabulary& vocab);

SubScores expert_score(const Scene& scene, const Trajectory& traj,
                       const PlanningVocabulary& vocab);

// Ground-truth scores for the whole vocabulary against one scene.
struct ExpertTable {
  std::vector<SubScores> rows;     // aligned with vocabulary ids
  std::vector<double> pdms;        // pdm_score per row
  double ep_denominator = 0.0;     // best feasible progress, meters
};

ExpertTable expert_score_vocabulary(const Scene& scene, const PlanningVocabulary& vocab);
// Plain-loop reference used by tests and the kernel benchmark; bit-identical
// to the parallel version.
ExpertTable expert_score_vocabulary_serial(const Scene& scene,
                                           const PlanningVocabulary& vocab);

// Deterministic synthetic scene per (category, seed). Every returned scene
// admits at least one trajectory with pdm_score > 0 under the default
// 25-entry test vocabulary.
Scene generate_scene(Category category, std::uint64_t seed);

// The vocabulary generate_scene checks admissibility against.
const PlanningVocabulary& default_test_vocabulary();

// Frames are grouped into fixed-length episodes; within an episode the
// scene content evolves smoothly (obstacles persist with jittered
// kinematics). Categories cycle through `mix` per episode.
inline constexpr int kStreamEpisodeLength = 10;

std::vector<Scene> generate_stream(int n_frames, const std::vector<Category>& mix,
                                   std::uint64_t seed);

// Scene (de)serialization: one JSON object per scene; streams are stored as
// JSON Lines. Loading validates invariants.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_stream(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> load_stream(const std::string& path);

}  // namespace centaur::worldsim
