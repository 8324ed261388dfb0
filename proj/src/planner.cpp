#include "travdiff/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace travdiff::planner {

Trajectory extract_path(const Field& heatmap, Pixel start, Pixel goal, double progress_weight) {
  if (!heatmap.in_bounds(start.row, start.col) || !heatmap.in_bounds(goal.row, goal.col))
    throw std::invalid_argument("extract_path: endpoint outside the grid");

  Trajectory traj;
  std::vector<char> visited(heatmap.size(), 0);
  auto visit = [&](Pixel p) { visited[static_cast<size_t>(p.row) * heatmap.cols + p.col] = 1; };
  auto seen = [&](int r, int c) { return visited[static_cast<size_t>(r) * heatmap.cols + c]; };

  const int budget = kStepBudgetFactor * std::max(heatmap.rows, heatmap.cols);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  Pixel cur = start;
  traj.pixels.push_back(cur);
  visit(cur);
  for (int step = 0; step < budget; ++step) {
    if (dist(cur, goal) <= kGoalRadius) {
      traj.reached = true;
      break;
    }
    bool found = false;
    Pixel best{};
    double best_score = -std::numeric_limits<double>::infinity();
    const double d_cur = dist(cur, goal);
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int r = cur.row + dr, c = cur.col + dc;
        if (!heatmap.in_bounds(r, c) || seen(r, c)) continue;
        const double progress = (d_cur - dist(Pixel{r, c}, goal)) * inv_sqrt2;
        const double score = heatmap.at(r, c) + progress_weight * progress;
        const bool wins = score > best_score ||
                          (score == best_score && (r < best.row || (r == best.row && c < best.col)));
        if (!found || wins) {
          found = true;
          best = {r, c};
          best_score = score;
        }
      }
    if (!found) break;  // boxed in by visited/border pixels
    cur = best;
    traj.pixels.push_back(cur);
    visit(cur);
  }
  if (!traj.reached && dist(traj.pixels.back(), goal) <= kGoalRadius) traj.reached = true;

  traj.points.reserve(traj.pixels.size());
  for (const Pixel& p : traj.pixels) traj.points.push_back({static_cast<double>(p.row), static_cast<double>(p.col)});
  return traj;
}

Trajectory apf_refine(const Trajectory& traj, const PointCloud& cloud, double radius, double c_s,
                      int iters) {
  if (!(radius > 0) || !(c_s > 0) || iters < 1)
    throw std::invalid_argument("apf_refine: radius, c_s and iters must be positive");
  Trajectory out = traj;
  if (out.points.size() < 3) return out;

  for (int it = 0; it < iters; ++it) {
    std::vector<PointF> next = out.points;
    for (size_t i = 1; i + 1 < out.points.size(); ++i) {
      const PointF& p = out.points[i];
      double vr = 0, vc = 0;
      bool any = false;
      for (const PointF& q : cloud.pts) {
        if (dist(p, q) >= radius) continue;
        any = true;
        vr -= c_s * (q.row - p.row);
        vc -= c_s * (q.col - p.col);
      }
      if (!any) continue;  // bitwise unchanged
      const double norm = std::sqrt(vr * vr + vc * vc);
      if (norm > 1.0) {
        vr /= norm;
        vc /= norm;
      }
      next[i] = {p.row + vr, p.col + vc};
    }
    out.points = std::move(next);
  }
  return out;
}

double path_length(const Trajectory& traj) {
  double len = 0;
  for (size_t i = 1; i < traj.points.size(); ++i) len += dist(traj.points[i - 1], traj.points[i]);
  return len;
}

std::pair<double, double> path_clearance(const Trajectory& traj,
                                         const std::vector<Pixel>& blocked) {
  const double inf = std::numeric_limits<double>::infinity();
  if (blocked.empty() || traj.points.empty()) return {inf, inf};
  double sum = 0, mn = inf;
  for (const PointF& p : traj.points) {
    double d = inf;
    for (const Pixel& o : blocked)
      d = std::min(d, dist(p, PointF{static_cast<double>(o.row), static_cast<double>(o.col)}));
    sum += d;
    mn = std::min(mn, d);
  }
  return {sum / static_cast<double>(traj.points.size()), mn};
}

static Pixel rounded(const PointF& p, const Field& f) {
  int r = static_cast<int>(std::lround(p.row)), c = static_cast<int>(std::lround(p.col));
  r = std::clamp(r, 0, f.rows - 1);
  c = std::clamp(c, 0, f.cols - 1);
  return {r, c};
}

double path_cost(const Trajectory& traj, const Field& teacher) {
  if (traj.points.empty()) return 0;
  double sum = 0;
  for (const PointF& p : traj.points) {
    Pixel q = rounded(p, teacher);
    sum += 1.0 - teacher.at(q.row, q.col);
  }
  return 100.0 * sum / static_cast<double>(traj.points.size());
}

std::pair<double, double> safety_bounds(const Trajectory& traj, const Field& trav) {
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (const PointF& p : traj.points) {
    Pixel q = rounded(p, trav);
    const double v = trav.at(q.row, q.col);
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  if (traj.points.empty()) mn = mx = 0;
  return {mn, mx};
}

bool success(const Trajectory& traj, Pixel goal, const Field& trav, double delta) {
  if (!traj.reached || traj.points.empty()) return false;
  const PointF g{static_cast<double>(goal.row), static_cast<double>(goal.col)};
  if (dist(traj.points.back(), g) > kGoalRadius) return false;
  return safety_bounds(traj, trav).first >= delta;
}

double measure_latency(const std::function<void()>& fn, int runs) {
  if (runs < 1) throw std::invalid_argument("measure_latency: runs must be >= 1");
  fn();  // warm-up
  double total = 0;
  for (int i = 0; i < runs; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    total += std::chrono::duration<double>(t1 - t0).count();
  }
  return total / runs;
}

}  // namespace travdiff::planner
