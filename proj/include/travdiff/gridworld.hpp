#pragma once

#include <array>
#include <string>
#include <vector>

#include "travdiff/field.hpp"
#include "travdiff/rng.hpp"

namespace travdiff::gridworld {

constexpr int kGridSize = 64;
// Distance (in cells) beyond which the teacher map saturates at 1.
constexpr double kTravSaturation = 5.0;
// Start pixels come from the bottom band, goals from the top half.
constexpr int kStartBandRows = 4;
constexpr int kMinStartGoalDist = 24;

enum class ObstacleHeight { low, tall };

struct Obstacle {
  std::vector<Pixel> cells;  // 4-connected set
  ObstacleHeight height = ObstacleHeight::low;
};

struct Scene {
  int width = kGridSize;
  int height = kGridSize;
  uint64_t seed = 0;
  std::vector<Obstacle> obstacles;

  std::vector<Pixel> blocked_cells(bool include_low) const;
};

struct SceneConfig {
  int min_obstacles = 3;
  int max_obstacles = 6;
  int min_size = 4;   // cells per obstacle
  int max_size = 8;
  double tall_fraction = 0.5;
  // Minimum Euclidean distance between cells of different obstacles. Keeps
  // every corridor wider than the refiner's interaction diameter and the
  // scene routable for both embodiments.
  double min_gap = 7.0;
  // Obstacles stay inside this row band so the start band and the top goal
  // rows are always free.
  int row_min = 6;
  int row_max = 56;
};

struct RobotState {
  // x (col), y (row), z, roll, pitch, yaw. Angles in [-pi, pi].
  std::array<double, 6> s{};
};

struct Embodiment {
  enum class Kind { ground, aerial } kind = Kind::ground;
  double safety_threshold = 0.3;  // delta in (0,1)
  std::array<double, 6> state_mean{};
  std::array<double, 6> state_std{};

  static Embodiment ground();
  static Embodiment aerial();
  // Ground vehicles are blocked by every obstacle, aerial ones only by tall.
  bool blocks(ObstacleHeight h) const {
    return kind == Kind::ground || h == ObstacleHeight::tall;
  }
  const char* name() const { return kind == Kind::ground ? "ground" : "aerial"; }
};

// Rejection-samples a scene. Throws std::invalid_argument on bad config and
// std::runtime_error("unsatisfiable config") when an obstacle cannot be
// placed within 1000 attempts.
Scene gen_scene(uint64_t seed, const SceneConfig& config);

// Channel 0 marks free cells, 1 low obstacles, 2 tall obstacles; i.i.d.
// Gaussian pixel noise is added and the result clipped to [0,1].
Image render_image(const Scene& scene, double noise_std, Rng& rng);

// Exact Euclidean distance transform to the embodiment's blocked set,
// clipped: T = min(1, d / kTravSaturation), 0 on blocked cells, 1 everywhere
// when nothing blocks.
Field teacher_traversability(const Scene& scene, const Embodiment& emb);

// Draws an admissible (start, goal) pair: start in the bottom band, goal in
// the top half, both at traversability >= delta, separated by at least
// kMinStartGoalDist. Goals prefer fully traversable pixels when any exist.
// Throws std::runtime_error("scene unroutable") after 1000 rejected draws.
std::pair<Pixel, Pixel> sample_start_goal(const Field& trav, const Embodiment& emb, Rng& rng);

// Draws a robot state from the embodiment prior; angles are clamped.
RobotState sample_state(const Embodiment& emb, Rng& rng);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

}  // namespace travdiff::gridworld
