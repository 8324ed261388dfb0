#include "travdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "travdiff/rng.hpp"

namespace travdiff::diffusion {

uint64_t Schedule::hash() const {
  uint64_t h = fnv1a(&T, sizeof(T));
  if (!beta.empty()) h = fnv1a(beta.data(), beta.size() * sizeof(double), h);
  return h;
}

std::string Schedule::to_json() const {
  nlohmann::json j;
  j["T"] = T;
  j["beta"] = std::vector<double>(beta.begin() + 1, beta.end());
  j["alpha_bar"] = std::vector<double>(alpha_bar.begin() + 1, alpha_bar.end());
  j["sigma"] = std::vector<double>(sigma.begin() + 1, sigma.end());
  j["hash"] = hash_hex(hash());
  return j.dump(2);
}

Schedule cosine_schedule(int T) {
  if (T < 1) throw std::invalid_argument("cosine_schedule: T must be >= 1");
  const double s = kCosineOffset;
  const double pi = 3.14159265358979323846;
  auto f = [&](int t) {
    double a = ((static_cast<double>(t) / T + s) / (1.0 + s)) * pi / 2.0;
    double c = std::cos(a);
    return c * c;
  };

  Schedule sch;
  sch.T = T;
  sch.beta.assign(static_cast<size_t>(T) + 1, 0.0);
  sch.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
  sch.sigma.assign(static_cast<size_t>(T) + 1, 0.0);
  sch.timestep.assign(static_cast<size_t>(T) + 1, 0);

  for (int t = 1; t <= T; ++t) {
    double raw = 1.0 - f(t) / f(t - 1);
    double beta = std::clamp(raw, kBetaMin, kBetaMax);
    sch.beta[t] = beta;
    sch.alpha_bar[t] = sch.alpha_bar[t - 1] * (1.0 - beta);
    double post = beta * (1.0 - sch.alpha_bar[t - 1]) / (1.0 - sch.alpha_bar[t]);
    sch.sigma[t] = std::sqrt(std::max(0.0, post));
    sch.timestep[t] = t;
  }
  return sch;
}

Schedule strided_schedule(const Schedule& full, int steps) {
  if (steps < 1) throw std::invalid_argument("strided_schedule: steps must be >= 1");
  if (steps >= full.T) return full;

  std::vector<int> picks;
  if (steps == 1) {
    picks.push_back(full.T);
  } else {
    double span = static_cast<double>(full.T - 1) / (steps - 1);
    for (int i = 0; i < steps; ++i)
      picks.push_back(static_cast<int>(std::lround(1.0 + i * span)));
  }

  Schedule sub;
  sub.T = static_cast<int>(picks.size());
  sub.beta.assign(picks.size() + 1, 0.0);
  sub.alpha_bar.assign(picks.size() + 1, 1.0);
  sub.sigma.assign(picks.size() + 1, 0.0);
  sub.timestep.assign(picks.size() + 1, 0);
  for (size_t i = 1; i <= picks.size(); ++i) {
    double ab = full.alpha_bar[static_cast<size_t>(picks[i - 1])];
    double ab_prev = sub.alpha_bar[i - 1];
    sub.alpha_bar[i] = ab;
    sub.beta[i] = 1.0 - ab / ab_prev;
    double post = sub.beta[i] * (1.0 - ab_prev) / (1.0 - ab);
    sub.sigma[i] = std::sqrt(std::max(0.0, post));
    sub.timestep[i] = picks[i - 1];
  }
  return sub;
}

static void check_t(const Schedule& sched, int t, const char* who) {
  if (t < 1 || t > sched.T)
    throw std::invalid_argument(std::string(who) + ": timestep out of range");
}

Field forward_noise(const Field& x0, int t, const Schedule& sched, const Field& eps) {
  check_t(sched, t, "forward_noise");
  if (x0.rows != eps.rows || x0.cols != eps.cols)
    throw std::invalid_argument("forward_noise: shape mismatch");
  const double ab = sched.alpha_bar[static_cast<size_t>(t)];
  const double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
  Field out(x0.rows, x0.cols);
  for (size_t i = 0; i < x0.v.size(); ++i)
    out.v[i] = static_cast<float>(ca * x0.v[i] + cb * eps.v[i]);
  return out;
}

Field reverse_step(const Field& x_t, const Field& eps_hat, int t, const Schedule& sched,
                   const Field* z) {
  check_t(sched, t, "reverse_step");
  if (x_t.rows != eps_hat.rows || x_t.cols != eps_hat.cols)
    throw std::invalid_argument("reverse_step: shape mismatch");
  const double beta = sched.beta[static_cast<size_t>(t)];
  const double ab = sched.alpha_bar[static_cast<size_t>(t)];
  const double sigma = sched.sigma[static_cast<size_t>(t)];
  if (sigma > 0.0 && z == nullptr)
    throw std::invalid_argument("reverse_step: sigma > 0 requires a noise field");

  const double inv_sqrt_a = 1.0 / std::sqrt(1.0 - beta);
  const double coef = beta / std::sqrt(1.0 - ab);
  Field out(x_t.rows, x_t.cols);
  for (size_t i = 0; i < x_t.v.size(); ++i) {
    double v = inv_sqrt_a * (x_t.v[i] - coef * eps_hat.v[i]);
    if (sigma > 0.0) v += sigma * z->v[i];
    out.v[i] = static_cast<float>(v);
  }
  return out;
}

Field sample(const DenoiseFn& denoise, const Schedule& sched, int steps, int rows, int cols,
             uint64_t seed) {
  Schedule sub = strided_schedule(sched, steps);

  Rng init_rng = Rng::derive(seed, "sample_init");
  Field x(rows, cols);
  for (float& v : x.v) v = static_cast<float>(init_rng.next_gaussian());

  Rng z_rng = Rng::derive(seed, "sample_z");
  Field z(rows, cols);
  for (int i = sub.T; i >= 1; --i) {
    Field eps_hat = denoise(x, sub.timestep[static_cast<size_t>(i)]);
    const Field* zp = nullptr;
    if (sub.sigma[static_cast<size_t>(i)] > 0.0) {
      for (float& v : z.v) v = static_cast<float>(z_rng.next_gaussian());
      zp = &z;
    }
    x = reverse_step(x, eps_hat, i, sub, zp);
  }
  for (float& v : x.v) v = std::clamp(v, 0.0f, 1.0f);
  return x;
}

}  // namespace travdiff::diffusion
