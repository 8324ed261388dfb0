#pragma once

#include <functional>
#include <vector>

#include "travdiff/field.hpp"

namespace travdiff::planner {

// Discrete path plus its metric-space point list (refinement moves the
// points off the integer grid; pixels stay as extracted).
struct Trajectory {
  std::vector<Pixel> pixels;
  std::vector<PointF> points;
  bool reached = false;  // goal region entered before the step budget ran out
};

struct PointCloud {
  std::vector<PointF> pts;
};

struct Metrics {
  double length = 0;
  double clearance_mean = 0;
  double clearance_min = 0;
  double cost = 0;  // percent
  double latency = 0;
  double safety_min = 0;
  double safety_max = 0;
  bool success = false;
};

constexpr double kGoalRadius = 2.0;       // px
constexpr double kProgressWeight = 0.2;   // heat vs goal-progress mix
constexpr int kStepBudgetFactor = 4;      // budget = factor * max(rows, cols)

// Greedy ridge walk over the heatmap. Each move picks the unvisited
// 8-neighbor maximizing heat + progress_weight * (distance decrease toward
// the goal, normalized to [-1,1]); ties prefer smaller row, then column.
// A walk that runs out of moves or budget returns reached = false.
Trajectory extract_path(const Field& heatmap, Pixel start, Pixel goal,
                        double progress_weight = kProgressWeight);

// Repulsive point refinement: each interior point within `radius` of cloud
// points moves by c_s * sum(point - cloud_pt), capped at one grid unit per
// iteration. Endpoints and points with empty neighborhoods stay untouched.
Trajectory apf_refine(const Trajectory& traj, const PointCloud& cloud, double radius, double c_s,
                      int iters);

double path_length(const Trajectory& traj);

// Mean and min distance from trajectory points to the nearest obstacle cell
// center (brute force). Returns +inf for both when the set is empty.
std::pair<double, double> path_clearance(const Trajectory& traj,
                                         const std::vector<Pixel>& blocked);

// 100 * mean(1 - T) over trajectory points rounded to the grid.
double path_cost(const Trajectory& traj, const Field& teacher);

// Min and max map value over trajectory points rounded to the grid.
std::pair<double, double> safety_bounds(const Trajectory& traj, const Field& trav);

bool success(const Trajectory& traj, Pixel goal, const Field& trav, double delta);

// Mean wall-clock seconds of `runs` invocations, after one warm-up call.
double measure_latency(const std::function<void()>& fn, int runs);

}  // namespace travdiff::planner
