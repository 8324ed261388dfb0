#include "travdiff/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace travdiff::supervision {

std::vector<PointF> sample_waypoints(Pixel start, Pixel goal, int k, const Field& trav,
                                     double delta, double sigma, int max_resamples, Rng& rng) {
  if (k < 0) throw std::invalid_argument("sample_waypoints: negative k");
  if (sigma < 0.0) throw std::invalid_argument("sample_waypoints: negative sigma");

  std::vector<PointF> ctrl;
  ctrl.push_back({static_cast<double>(start.row), static_cast<double>(start.col)});
  for (int i = 1; i <= k; ++i) {
    double t = static_cast<double>(i) / (k + 1);
    PointF base{start.row + t * (goal.row - start.row),
                start.col + t * (goal.col - start.col)};
    PointF chosen = base;  // fallback when every perturbation lands badly
    for (int attempt = 0; attempt < max_resamples; ++attempt) {
      PointF cand{base.row + sigma * rng.next_gaussian(),
                  base.col + sigma * rng.next_gaussian()};
      int r = static_cast<int>(std::lround(cand.row));
      int c = static_cast<int>(std::lround(cand.col));
      if (!trav.in_bounds(r, c)) continue;
      if (trav.at(r, c) >= delta) {
        chosen = cand;
        break;
      }
    }
    ctrl.push_back(chosen);
  }
  ctrl.push_back({static_cast<double>(goal.row), static_cast<double>(goal.col)});
  return ctrl;
}

std::vector<PointF> bezier_points(const std::vector<PointF>& ctrl, int n) {
  if (ctrl.size() < 2) throw std::invalid_argument("bezier_points: need >= 2 control points");
  if (n < 2) throw std::invalid_argument("bezier_points: need >= 2 samples");

  std::vector<PointF> out;
  out.reserve(static_cast<size_t>(n));
  std::vector<PointF> tmp(ctrl.size());
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / (n - 1);
    std::copy(ctrl.begin(), ctrl.end(), tmp.begin());
    for (size_t level = ctrl.size() - 1; level > 0; --level)
      for (size_t j = 0; j < level; ++j) {
        tmp[j].row = (1.0 - t) * tmp[j].row + t * tmp[j + 1].row;
        tmp[j].col = (1.0 - t) * tmp[j].col + t * tmp[j + 1].col;
      }
    out.push_back(tmp[0]);
  }
  return out;
}

std::vector<Pixel> bresenham(Pixel a, Pixel b) {
  std::vector<Pixel> out;
  int r0 = a.row, c0 = a.col;
  const int dr = std::abs(b.row - r0), dc = std::abs(b.col - c0);
  const int sr = r0 < b.row ? 1 : -1, sc = c0 < b.col ? 1 : -1;
  int err = (dc > dr ? dc : -dr) / 2;
  while (true) {
    out.push_back({r0, c0});
    if (r0 == b.row && c0 == b.col) break;
    int e = err;
    if (e > -dc) {
      err -= dr;
      c0 += sc;
    }
    if (e < dr) {
      err += dc;
      r0 += sr;
    }
  }
  return out;
}

// Separable Gaussian blur, kernel truncated at 3 sigma, zero-padded. Taps
// off the grid contribute nothing, so a pixel's value depends only on the
// stamp geometry inside its window and never on border proximity -- edge
// replication (or per-window renormalization) brightens strokes hugging the
// border by ~1.3-1.7x and, after peak normalization, sinks the far endpoint
// below the half-max threshold the extraction stage relies on.
static void blur_inplace(Field& f, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  if (radius < 1) return;
  std::vector<double> kernel(static_cast<size_t>(radius) + 1);
  for (int i = 0; i <= radius; ++i)
    kernel[static_cast<size_t>(i)] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
  double norm = kernel[0];
  for (int i = 1; i <= radius; ++i) norm += 2.0 * kernel[static_cast<size_t>(i)];
  for (double& k : kernel) k /= norm;

  Field tmp(f.rows, f.cols);
  for (int r = 0; r < f.rows; ++r)
    for (int c = 0; c < f.cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int cc = c + i;
        if (cc < 0 || cc >= f.cols) continue;
        acc += kernel[static_cast<size_t>(std::abs(i))] * f.at(r, cc);
      }
      tmp.at(r, c) = static_cast<float>(acc);
    }
  for (int c = 0; c < f.cols; ++c)
    for (int r = 0; r < f.rows; ++r) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int rr = r + i;
        if (rr < 0 || rr >= f.rows) continue;
        acc += kernel[static_cast<size_t>(std::abs(i))] * tmp.at(rr, c);
      }
      f.at(r, c) = static_cast<float>(acc);
    }
}

Field rasterize_heatmap(const std::vector<PointF>& points, int rows, int cols, double blur_sigma) {
  if (points.size() < 2) throw std::invalid_argument("rasterize_heatmap: need >= 2 points");
  if (blur_sigma < 0.0) throw std::invalid_argument("rasterize_heatmap: negative blur sigma");

  Field f(rows, cols, 0.0f);
  auto clamp_px = [&](const PointF& p) {
    int r = std::clamp(static_cast<int>(std::lround(p.row)), 0, rows - 1);
    int c = std::clamp(static_cast<int>(std::lround(p.col)), 0, cols - 1);
    return Pixel{r, c};
  };

  Pixel prev = clamp_px(points[0]);
  f.at(prev.row, prev.col) = 1.0f;
  for (size_t i = 1; i < points.size(); ++i) {
    Pixel cur = clamp_px(points[i]);
    for (const Pixel& p : bresenham(prev, cur)) f.at(p.row, p.col) = 1.0f;
    prev = cur;
  }

  if (blur_sigma > 0.0) blur_inplace(f, blur_sigma);

  float peak = f.max_value();
  if (peak > 0.0f)
    for (float& x : f.v) x /= peak;
  return f;
}

SGTensor make_sg_tensor(Pixel start, Pixel goal, int rows, int cols, double blob_sigma) {
  if (blob_sigma <= 0.0) throw std::invalid_argument("make_sg_tensor: blob sigma must be > 0");
  SGTensor sg{Field(rows, cols), Field(rows, cols)};
  auto fill = [&](Field& f, Pixel p) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        double d2 = static_cast<double>(r - p.row) * (r - p.row) +
                    static_cast<double>(c - p.col) * (c - p.col);
        f.at(r, c) = static_cast<float>(std::exp(-d2 / (2.0 * blob_sigma * blob_sigma)));
      }
  };
  fill(sg.start, start);
  fill(sg.goal, goal);
  return sg;
}

Field make_supervision_heatmap(Pixel start, Pixel goal, const Field& trav,
                               const gridworld::Embodiment& emb,
                               const SupervisionConfig& config, Rng& rng) {
  int k = rng.next_int(config.min_waypoints, config.max_waypoints);
  std::vector<PointF> ctrl =
      sample_waypoints(start, goal, k, trav, emb.safety_threshold, config.waypoint_sigma,
                       config.max_resamples, rng);
  std::vector<PointF> curve = bezier_points(ctrl, config.curve_samples);
  return rasterize_heatmap(curve, trav.rows, trav.cols, config.blur_sigma);
}

}  // namespace travdiff::supervision
