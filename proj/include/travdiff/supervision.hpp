#pragma once

#include <vector>

#include "travdiff/field.hpp"
#include "travdiff/gridworld.hpp"
#include "travdiff/rng.hpp"

namespace travdiff::supervision {

// Two-channel start/goal encoding: one Gaussian blob per endpoint,
// peak-normalized so the endpoint pixel is exactly 1.
struct SGTensor {
  Field start;
  Field goal;
};

struct SupervisionConfig {
  int min_waypoints = 1;
  int max_waypoints = 3;
  double waypoint_sigma = 4.0;   // px, Gaussian perturbation off the segment
  int max_resamples = 50;        // per waypoint, before falling back
  int curve_samples = 128;       // dense points along the curve
  double blur_sigma = 0.7;       // px, applied to the rasterized trace
  double blob_sigma = 1.5;       // px, start/goal blobs
};

// Control polyline for the supervision curve: start, k perturbed interior
// waypoints, goal. Interior points are resampled until they land on
// traversability >= the embodiment threshold; after max_resamples tries the
// unperturbed segment point is used.
std::vector<PointF> sample_waypoints(Pixel start, Pixel goal, int k, const Field& trav,
                                     double delta, double sigma, int max_resamples, Rng& rng);

// Evaluates the Bernstein-form Bezier through the control points at n
// parameter values uniform on [0,1] (de Casteljau recursion).
std::vector<PointF> bezier_points(const std::vector<PointF>& ctrl, int n);

// Stamps the rounded curve points, fills gaps with Bresenham segments so the
// pre-blur trace is 8-connected, Gaussian-blurs (edge-clamped, truncated at
// 3 sigma) and peak-normalizes to max 1.
Field rasterize_heatmap(const std::vector<PointF>& points, int rows, int cols, double blur_sigma);

SGTensor make_sg_tensor(Pixel start, Pixel goal, int rows, int cols, double blob_sigma);

// Full pipeline: waypoints -> curve -> heatmap for one (scene, embodiment,
// start, goal) instance.
Field make_supervision_heatmap(Pixel start, Pixel goal, const Field& trav,
                               const gridworld::Embodiment& emb,
                               const SupervisionConfig& config, Rng& rng);

// All integer pixels on the segment between two cells (Bresenham).
std::vector<Pixel> bresenham(Pixel a, Pixel b);

}  // namespace travdiff::supervision
