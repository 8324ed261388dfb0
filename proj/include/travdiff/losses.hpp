#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "travdiff/field.hpp"
#include "travdiff/gridworld.hpp"
#include "travdiff/model.hpp"
#include "travdiff/tape.hpp"

namespace travdiff::losses {

// ---- tape-level loss builders (shared by the float trainer and the
// double-precision finite-difference tests) ----

template <class S>
int mse(nn::TapeT<S>& t, int a, int b) {
  nn::detail::check_same_shape(t, a, b, "mse");
  int d = nn::sub(t, a, b);
  const S inv_n = S(1) / static_cast<S>(t.val(a).numel());
  return nn::affine(t, nn::dot_all(t, d, d), inv_n, S(0));
}

template <class S>
int l1_mean(nn::TapeT<S>& t, int a, int b) {
  nn::detail::check_same_shape(t, a, b, "l1_mean");
  return nn::mean_all(t, nn::abs_op(t, nn::sub(t, a, b)));
}

// One-step clean-signal estimate from a noise prediction:
// x0 = (x_t - sqrt(1-ab)*eps_hat)/sqrt(ab), clamped to [0,1].
template <class S>
int x0_from_eps(nn::TapeT<S>& t, int x_t, int eps_hat, double alpha_bar) {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0))
    throw std::invalid_argument("x0_from_eps: alpha_bar out of (0,1]");
  const double sab = std::sqrt(alpha_bar);
  const double somb = std::sqrt(1.0 - alpha_bar);
  int scaled = nn::affine(t, eps_hat, static_cast<S>(somb), S(0));
  int x0 = nn::affine(t, nn::sub(t, x_t, scaled), static_cast<S>(1.0 / sab), S(0));
  return nn::clamp01(t, x0);
}

// Penalizes heatmap mass flowing against the start->goal direction: hinge on
// the negative projection of the Sobel gradient field, weighted by the map.
template <class S>
int loss_dir(nn::TapeT<S>& t, int x0_hat, Pixel start, Pixel goal) {
  const double dr = goal.row - start.row, dc = goal.col - start.col;
  const double norm = std::sqrt(dr * dr + dc * dc);
  if (norm == 0.0) throw std::invalid_argument("loss_dir: start equals goal");
  int gx = nn::sobel_x(t, x0_hat);  // d/dcol
  int gy = nn::sobel_y(t, x0_hat);  // d/drow
  int proj = nn::add(t, nn::affine(t, gx, static_cast<S>(dc / norm), S(0)),
                     nn::affine(t, gy, static_cast<S>(dr / norm), S(0)));
  int hinge = nn::relu(t, nn::affine(t, proj, S(-1), S(0)));
  return nn::mean_all(t, nn::mul(t, hinge, x0_hat));
}

template <class S>
int path_distribution(nn::TapeT<S>& t, int logits, double temp) {
  return nn::softmax_all(t, logits, temp);
}

// 1 - max over the batch of E_p[T_hat]; gradient flows only through the
// best element (and there into both the distribution and the student map).
template <class S>
int loss_trav(nn::TapeT<S>& t, const std::vector<int>& logit_batch,
              const std::vector<int>& trav_batch, double temp = 1.0) {
  if (logit_batch.empty() || logit_batch.size() != trav_batch.size())
    throw std::invalid_argument("loss_trav: empty or mismatched batch");
  std::vector<int> expect;
  expect.reserve(logit_batch.size());
  for (size_t i = 0; i < logit_batch.size(); ++i) {
    int p = nn::softmax_all(t, logit_batch[i], temp);
    expect.push_back(nn::dot_all(t, p, trav_batch[i]));
  }
  return nn::affine(t, nn::max_of(t, expect), S(-1), S(1));
}

template <class S>
int loss_mass(nn::TapeT<S>& t, int x0_hat) {
  return nn::mean_all(t, x0_hat);
}

template <class S>
int loss_distill(nn::TapeT<S>& t, int pred, int teacher) {
  return l1_mean(t, pred, teacher);
}

template <class S>
int loss_noise(nn::TapeT<S>& t, int eps_hat, int eps) {
  return mse(t, eps_hat, eps);
}

// ---- batch objective ----

struct LossToggles {
  bool noise = true, dir = true, trav = true, mass = true, distill = true;
};

struct LossBreakdown {
  double noise = 0, dir = 0, trav = 0, mass = 0, distill = 0, total = 0;
};

// Everything one training example contributes to the graph. `eps` and `t`
// are pre-sampled by the caller; `alpha_bar` belongs to timestep `t`.
struct SampleInputs {
  const Image* image = nullptr;
  const Field* teacher = nullptr;
  const Field* x0 = nullptr;
  const Field* sg_start = nullptr;
  const Field* sg_goal = nullptr;
  gridworld::RobotState state;
  Pixel start, goal;
  Field eps;
  int t = 1;
  double alpha_bar = 1.0;
  bool drop_cond = false;  // classifier-free-guidance condition dropout
};

struct BatchOptions {
  LossToggles toggles;
  bool use_trav_input = true;
  bool use_sg_input = true;
  bool use_film_cond = true;
  bool predict_sample = false;  // regress x0 directly instead of the noise
  double temp = 1.0;
};

template <class S>
struct ObjectiveNodes {
  int total = -1, noise = -1, dir = -1, trav = -1, mass = -1, distill = -1;
};

template <class S>
int field_leaf_cast(nn::TapeT<S>& t, const Field& f) {
  nn::TensorT<S> v({f.rows, f.cols});
  for (size_t i = 0; i < f.v.size(); ++i) v.data[i] = static_cast<S>(f.v[i]);
  return t.leaf(std::move(v));
}

template <class S>
int image_leaf_cast(nn::TapeT<S>& t, const Image& img) {
  nn::TensorT<S> v({3, img.rows(), img.cols()});
  size_t k = 0;
  for (int c = 0; c < 3; ++c)
    for (float x : img.ch[static_cast<size_t>(c)].v) v.data[k++] = static_cast<S>(x);
  return t.leaf(std::move(v));
}

// Builds the full training objective for a batch on one tape and returns the
// component nodes. Per-sample terms are averaged over the batch; the
// traversability term takes the best batch element by construction.
template <class S>
ObjectiveNodes<S> build_objective(model::GraphCtx<S>& g, const model::ModelConfig& cfg,
                                  const std::vector<SampleInputs>& batch,
                                  const BatchOptions& opt) {
  if (batch.empty()) throw std::invalid_argument("build_objective: empty batch");
  auto& t = g.tape;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<int> noise_terms, dir_terms, mass_terms, distill_terms;
  std::vector<int> x0_nodes, trav_nodes;

  for (const SampleInputs& s : batch) {
    const int rows = s.x0->rows, cols = s.x0->cols;
    int image = image_leaf_cast(t, *s.image);
    int state = t.leaf(model::state_input<S>(s.state.s));

    int gamma, beta;
    if (opt.use_film_cond) {
      auto gb = model::build_state_film(g, state, cfg);
      gamma = gb.first;
      beta = gb.second;
    } else {
      gamma = t.leaf(nn::TensorT<S>({cfg.sc3}));
      beta = t.leaf(nn::TensorT<S>({cfg.sc3}));
    }
    int trav = model::build_student(g, image, gamma, beta, cfg);
    distill_terms.push_back(loss_distill(t, trav, field_leaf_cast(t, *s.teacher)));

    // forward-noised target (no parameters involved, so built as a leaf)
    Field xt(rows, cols);
    const double sab = std::sqrt(s.alpha_bar), somb = std::sqrt(1.0 - s.alpha_bar);
    for (size_t i = 0; i < xt.v.size(); ++i)
      xt.v[i] = static_cast<float>(sab * s.x0->v[i] + somb * s.eps.v[i]);
    int xt_node = field_leaf_cast(t, xt);

    const bool cond_on = !s.drop_cond;
    int sg_s = (opt.use_sg_input && cond_on) ? field_leaf_cast(t, *s.sg_start)
                                             : t.leaf(nn::TensorT<S>({rows, cols}));
    int sg_g = (opt.use_sg_input && cond_on) ? field_leaf_cast(t, *s.sg_goal)
                                             : t.leaf(nn::TensorT<S>({rows, cols}));
    int trav_ch = (opt.use_trav_input && cond_on)
                      ? trav
                      : t.leaf(nn::TensorT<S>({rows, cols}));
    int tokens = (opt.use_film_cond && cond_on)
                     ? model::build_state_tokens(g, state, cfg)
                     : t.leaf(nn::TensorT<S>({cfg.n_tokens, cfg.token_dim}));

    auto as_chan = [&](int node) { return nn::reshape(t, node, {1, rows, cols}); };
    int x4 = nn::concat_ch(t, nn::concat_ch(t, as_chan(xt_node), as_chan(sg_s)),
                           nn::concat_ch(t, as_chan(sg_g), as_chan(trav_ch)));
    int pred = model::build_unet(g, x4, s.t, tokens, cfg);

    int x0_hat;
    if (opt.predict_sample) {
      noise_terms.push_back(mse(t, pred, field_leaf_cast(t, *s.x0)));
      x0_hat = nn::clamp01(t, pred);
    } else {
      noise_terms.push_back(loss_noise(t, pred, field_leaf_cast(t, s.eps)));
      x0_hat = x0_from_eps(t, xt_node, pred, s.alpha_bar);
    }
    x0_nodes.push_back(x0_hat);
    trav_nodes.push_back(trav);
    if (opt.toggles.dir) dir_terms.push_back(loss_dir(t, x0_hat, s.start, s.goal));
    if (opt.toggles.mass) mass_terms.push_back(loss_mass(t, x0_hat));
  }

  auto batch_mean = [&](const std::vector<int>& terms) {
    std::vector<double> w(terms.size(), inv_b);
    return nn::weighted_sum(t, terms, w);
  };

  ObjectiveNodes<S> out;
  std::vector<int> parts;
  std::vector<double> weights;
  auto enable = [&](int node) {
    parts.push_back(node);
    weights.push_back(1.0);
    return node;
  };
  if (opt.toggles.noise) out.noise = enable(batch_mean(noise_terms));
  if (opt.toggles.dir) out.dir = enable(batch_mean(dir_terms));
  if (opt.toggles.trav) out.trav = enable(loss_trav(t, x0_nodes, trav_nodes, opt.temp));
  if (opt.toggles.mass) out.mass = enable(batch_mean(mass_terms));
  if (opt.toggles.distill) out.distill = enable(batch_mean(distill_terms));
  out.total = nn::weighted_sum(t, parts, weights);
  return out;
}

template <class S>
LossBreakdown read_breakdown(const nn::TapeT<S>& t, const ObjectiveNodes<S>& n) {
  auto get = [&](int id) { return id < 0 ? 0.0 : static_cast<double>(t.val(id).data[0]); };
  LossBreakdown b;
  b.noise = get(n.noise);
  b.dir = get(n.dir);
  b.trav = get(n.trav);
  b.mass = get(n.mass);
  b.distill = get(n.distill);
  b.total = get(n.total);
  return b;
}

inline void check_finite(const LossBreakdown& b) {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (bad(b.noise)) throw std::runtime_error("non-finite loss component: noise");
  if (bad(b.dir)) throw std::runtime_error("non-finite loss component: dir");
  if (bad(b.trav)) throw std::runtime_error("non-finite loss component: trav");
  if (bad(b.mass)) throw std::runtime_error("non-finite loss component: mass");
  if (bad(b.distill)) throw std::runtime_error("non-finite loss component: distill");
  if (bad(b.total)) throw std::runtime_error("non-finite loss component: total");
}

// ---- plain-field convenience wrappers (evaluation and tests) ----

double loss_dir_value(const Field& x0_hat, Pixel start, Pixel goal);
Field path_distribution_value(const Field& logits, double temp);
double loss_trav_value(const std::vector<Field>& logits, const std::vector<Field>& trav,
                       double temp = 1.0);
double loss_mass_value(const Field& x0_hat);
double loss_distill_value(const Field& pred, const Field& teacher);
double loss_noise_value(const Field& eps_hat, const Field& eps);

// Supervised reconstruction objective used by the regression baseline:
// weighted trajectory-mask MSE plus endpoint-map MSE.
double baseline_losses(const Field& pred_traj, const Field& gt_traj, const Field& pred_start,
                       const Field& gt_start, const Field& pred_goal, const Field& gt_goal,
                       double lambda_dist, double lambda_last);

}  // namespace travdiff::losses
