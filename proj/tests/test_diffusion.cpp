#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "travdiff/diffusion.hpp"
#include "travdiff/rng.hpp"

using namespace travdiff;
using namespace travdiff::diffusion;

// Frozen reference values for the T=4 cosine schedule, computed once with an
// independent arbitrary-precision evaluation of the closed form (beta_4 hits
// the 0.999 clip, which then feeds back into alpha_bar_4).
static const double kBeta4[5] = {0, 0.15298783867309526554, 0.41695808751199435053,
                                 0.70785871239716355952, 0.999};
static const double kAbar4[5] = {1.0, 0.84701216132690473446, 0.49384359044063771332,
                                 0.14427210238573571088, 0.00014427210238573571088};
static const double kSigma4[5] = {0, 0, 0.35500321424270787804, 0.64706486090313889714,
                                  0.92465967886466136524};

TEST_CASE("cosine schedule matches the frozen T=4 reference") {
  Schedule s = cosine_schedule(4);
  REQUIRE(s.T == 4);
  REQUIRE(s.beta.size() == 5);
  REQUIRE(s.alpha_bar.size() == 5);
  REQUIRE(s.sigma.size() == 5);
  for (int t = 1; t <= 4; ++t) {
    CHECK(s.beta[t] == doctest::Approx(kBeta4[t]).epsilon(1e-14));
    CHECK(s.alpha_bar[t] == doctest::Approx(kAbar4[t]).epsilon(1e-14));
    CHECK(s.sigma[t] == doctest::Approx(kSigma4[t]).epsilon(1e-14));
  }
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(s.sigma[1] == 0.0);
  for (int t = 1; t <= 4; ++t) CHECK(s.timestep[t] == t);
}

TEST_CASE("alpha_bar is the exact running product of (1 - beta)") {
  for (int T : {4, 100, 1000}) {
    Schedule s = cosine_schedule(T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= 1.0 - s.beta[t];
      CHECK(std::abs(s.alpha_bar[t] - prod) <= 1e-12);
      CHECK(s.beta[t] >= kBetaMin);
      CHECK(s.beta[t] <= kBetaMax);
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);  // strictly decreasing
    }
    CHECK(s.alpha_bar[T] > 0.0);
    CHECK(s.alpha_bar[T] < 1e-3);
  }
}

TEST_CASE("schedule rejects bad T") {
  CHECK_THROWS_AS(cosine_schedule(0), std::invalid_argument);
  CHECK_THROWS_AS(cosine_schedule(-5), std::invalid_argument);
}

TEST_CASE("strided schedule picks the right timesteps") {
  Schedule full = cosine_schedule(1000);

  Schedule one = strided_schedule(full, 1);
  REQUIRE(one.T == 1);
  CHECK(one.timestep[1] == 1000);
  CHECK(one.sigma[1] == 0.0);
  // One jump must strip all the noise: beta' = 1 - abar(1000)/abar(0).
  CHECK(one.beta[1] == doctest::Approx(1.0 - full.alpha_bar[1000]).epsilon(1e-14));

  Schedule sub = strided_schedule(full, 20);
  REQUIRE(sub.T == 20);
  CHECK(sub.timestep[1] == 1);
  CHECK(sub.timestep[20] == 1000);
  std::set<int> picked;
  for (int i = 1; i <= 20; ++i) {
    picked.insert(sub.timestep[i]);
    if (i > 1) CHECK(sub.timestep[i] > sub.timestep[i - 1]);
    // Restriction property: sub alpha_bar equals the full one at the pick.
    CHECK(sub.alpha_bar[i] == doctest::Approx(full.alpha_bar[sub.timestep[i]]).epsilon(1e-12));
    // Betas re-derived from alpha_bar ratios, without clipping.
    double expect = 1.0 - full.alpha_bar[sub.timestep[i]] /
                              full.alpha_bar[i > 1 ? sub.timestep[i - 1] : 0];
    CHECK(sub.beta[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(picked.size() == 20);
  CHECK(sub.sigma[1] == 0.0);
  for (int i = 2; i <= 20; ++i) {
    double expect = std::sqrt(sub.beta[i] * (1.0 - sub.alpha_bar[i - 1]) /
                              (1.0 - sub.alpha_bar[i]));
    CHECK(sub.sigma[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // Asking for >= T steps returns the full schedule unchanged.
  Schedule same = strided_schedule(full, 1000);
  CHECK(same.hash() == full.hash());
  Schedule more = strided_schedule(full, 2500);
  CHECK(more.hash() == full.hash());

  CHECK_THROWS_AS(strided_schedule(full, 0), std::invalid_argument);
}

TEST_CASE("strided betas stay inside (0,1) even past the clip region") {
  // The last full-schedule betas are clipped at 0.999; the re-derived jump
  // betas must still be valid probabilities or reverse_step would divide by
  // zero / take sqrt of a negative.
  Schedule full = cosine_schedule(1000);
  for (int steps : {1, 2, 5, 10, 20, 50, 333}) {
    Schedule sub = strided_schedule(full, steps);
    for (int i = 1; i <= sub.T; ++i) {
      CHECK(sub.beta[i] > 0.0);
      CHECK(sub.beta[i] < 1.0);
    }
  }
}

TEST_CASE("forward noise blends signal and noise by alpha_bar") {
  Schedule s = cosine_schedule(4);
  Field x0(2, 2);
  x0.v = {0.0f, 1.0f, 0.25f, 0.5f};
  Field eps(2, 2);
  eps.v = {1.0f, -1.0f, 0.0f, 2.0f};
  Field xt = forward_noise(x0, 2, s, eps);
  double a = std::sqrt(s.alpha_bar[2]), b = std::sqrt(1.0 - s.alpha_bar[2]);
  for (size_t i = 0; i < 4; ++i)
    CHECK(xt.v[i] == doctest::Approx(a * x0.v[i] + b * eps.v[i]).epsilon(1e-6));
  CHECK_THROWS_AS(forward_noise(x0, 0, s, eps), std::invalid_argument);
  CHECK_THROWS_AS(forward_noise(x0, 5, s, eps), std::invalid_argument);
}

TEST_CASE("one-step round trip at t=1 recovers the signal") {
  Schedule s = cosine_schedule(100);
  Rng rng(42);
  Field x0(8, 8);
  for (float& v : x0.v) v = static_cast<float>(rng.next_double());
  Field eps(8, 8);
  for (float& v : eps.v) v = static_cast<float>(rng.next_gaussian());
  Field x1 = forward_noise(x0, 1, s, eps);
  // With the true eps and sigma_1 = 0 the reverse step inverts exactly.
  Field rec = reverse_step(x1, eps, 1, s, nullptr);
  double mse = 0;
  for (size_t i = 0; i < rec.v.size(); ++i) {
    double d = rec.v[i] - x0.v[i];
    mse += d * d;
  }
  mse /= static_cast<double>(rec.v.size());
  CHECK(mse < 1e-10);
}

TEST_CASE("reverse step validates its inputs") {
  Schedule s = cosine_schedule(10);
  Field x(4, 4, 0.5f), e(4, 4, 0.0f), bad(3, 4, 0.0f);
  CHECK_THROWS_AS(reverse_step(x, e, 0, s, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(reverse_step(x, e, 11, s, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(reverse_step(x, bad, 3, s, nullptr), std::invalid_argument);
  Field z(4, 4, 0.0f);
  CHECK_THROWS_AS(reverse_step(x, e, 5, s, nullptr), std::invalid_argument);  // sigma>0 needs z
  CHECK_NOTHROW(reverse_step(x, e, 5, s, &z));
  CHECK_NOTHROW(reverse_step(x, e, 1, s, nullptr));
}

TEST_CASE("sampling is deterministic in the seed and clamped to [0,1]") {
  Schedule s = cosine_schedule(100);
  int calls = 0;
  std::vector<int> seen_t;
  DenoiseFn denoise = [&](const Field& x_t, int t) {
    ++calls;
    seen_t.push_back(t);
    Field out(x_t.rows, x_t.cols, 0.0f);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = 0.1f * x_t.v[i];
    return out;
  };
  Field a = sample(denoise, s, 10, 8, 8, 7);
  CHECK(calls == 10);
  // Denoiser sees original timesteps in descending order, ending at 1.
  CHECK(seen_t.front() == 100);
  CHECK(seen_t.back() == 1);
  for (size_t i = 1; i < seen_t.size(); ++i) CHECK(seen_t[i] < seen_t[i - 1]);
  CHECK(a.max_value() <= 1.0f);
  CHECK(a.min_value() >= 0.0f);

  Field b = sample(denoise, s, 10, 8, 8, 7);
  CHECK(a.v == b.v);
  Field c = sample(denoise, s, 10, 8, 8, 8);
  CHECK(a.v != c.v);
}

TEST_CASE("schedule hash separates distinct schedules") {
  Schedule a = cosine_schedule(100);
  Schedule b = cosine_schedule(101);
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == cosine_schedule(100).hash());
  CHECK(strided_schedule(a, 10).hash() != strided_schedule(a, 11).hash());
  CHECK(a.to_json().find("\"T\"") != std::string::npos);
}
