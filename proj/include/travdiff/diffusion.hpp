#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "travdiff/field.hpp"

namespace travdiff::diffusion {

// Variance schedule. Arrays are 1-indexed by timestep (index 0 unused except
// alpha_bar[0] = 1) and kept in double precision so the product identities
// hold to ~1e-15. timestep[] maps a step index back to the timestep of the
// schedule it was derived from; for a full schedule it is the identity.
struct Schedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;
  std::vector<int> timestep;

  uint64_t hash() const;
  std::string to_json() const;
};

constexpr double kCosineOffset = 0.008;
constexpr double kBetaMin = 1e-8;
constexpr double kBetaMax = 0.999;

// Cosine alpha-bar schedule: abar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1
// + s)) * pi/2). Betas are clipped to [kBetaMin, kBetaMax] and alpha_bar is
// rebuilt as the running product of (1 - beta) so the identity is exact by
// construction. sigma_t is the posterior std-dev; sigma_1 = 0.
Schedule cosine_schedule(int T);

// Restriction of `full` to `steps` evenly spaced timesteps that always
// include t=1 and (for steps >= 2) t=T. Effective betas are re-derived from
// the alpha_bar ratios of consecutive selected timesteps, which is what
// makes few-step inference remove the right amount of noise per jump.
Schedule strided_schedule(const Schedule& full, int steps);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Field forward_noise(const Field& x0, int t, const Schedule& sched, const Field& eps);

// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(1 - beta_t)
//           + sigma_t z.  z may be null when sigma_t == 0.
Field reverse_step(const Field& x_t, const Field& eps_hat, int t, const Schedule& sched,
                   const Field* z);

// Noise predictor bound to whatever conditioning the caller closed over.
// Receives the current field and the original-schedule timestep.
using DenoiseFn = std::function<Field(const Field& x_t, int t)>;

// Ancestral sampling from pure Gaussian noise over a strided subsequence of
// `steps` timesteps; the final output is clamped to [0,1]. Deterministic
// given (seed, steps, denoiser).
Field sample(const DenoiseFn& denoise, const Schedule& sched, int steps, int rows, int cols,
             uint64_t seed);

}  // namespace travdiff::diffusion
