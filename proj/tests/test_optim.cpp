#include <cmath>
#include <numbers>

#include "doctest.h"
#include "radcls/errors.hpp"
#include "radcls/optim.hpp"
#include "test_util.hpp"

using namespace radcls;

namespace {

struct CycleInfo {
  long start, length;
  double peak;
};

// Enumerates restart boundaries explicitly and returns the cycle holding `step`.
CycleInfo locate(long step, long first, long warmup, double mult, double gamma, double lr_max) {
  std::vector<CycleInfo> cycles{{0, first, lr_max}};
  while (cycles.back().start + cycles.back().length <= step) {
    const CycleInfo& c = cycles.back();
    cycles.push_back({c.start + c.length, warmup + static_cast<long>(std::floor((c.length - warmup) * mult)),
                      c.peak * gamma});
  }
  return cycles.back();
}

double closed_form(long step, long first, long warmup, double mult, double gamma, double lr_max, double lr_min) {
  const CycleInfo c = locate(step, first, warmup, mult, gamma, lr_max);
  const long t = step - c.start;
  lr_min = std::min(lr_min, c.peak);
  if (t < warmup) return lr_min + (c.peak - lr_min) * double(t) / double(warmup);
  return lr_min + 0.5 * (c.peak - lr_min) * (1 + std::cos(std::numbers::pi * double(t - warmup) / double(c.length - warmup)));
}

}  // namespace

TEST_CASE("cross entropy values") {
  CHECK(cross_entropy(Tensor({1, 2}, 0.0), {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cross_entropy(Tensor({1, 2}, 0.0), {1}) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(cross_entropy(Tensor({1, 2}, std::vector<double>{100, 0}), {0}) < 1e-9);
  CHECK(cross_entropy(Tensor({1, 2}, std::vector<double>{1, 2}), {0}) == doctest::Approx(1.313262).epsilon(1e-6));
  const double big = cross_entropy(Tensor({2, 2}, std::vector<double>{1e4, -1e4, -1e4, 1e4}), {1, 0});
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(2e4));
  CHECK_THROWS_AS(cross_entropy(Tensor({1, 2}, 0.0), {2}), ValueError);
  CHECK_THROWS_AS(cross_entropy(Tensor({1, 2}, 0.0), {-1}), ValueError);
}

TEST_CASE("cross entropy gradient") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    const Tensor z = testutil::random_tensor({n, 2}, rng, -5, 5);
    std::vector<int> y(n);
    for (auto& v : y) v = int(rng.below(2));
    const LossResult r = cross_entropy_with_grad(z, y);
    CHECK(r.loss >= 0);
    CHECK(r.loss == cross_entropy(z, y));
    const Tensor p = softmax(z);
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        const std::size_t k = i * 2 + c;
        CHECK(r.dlogits[k] == doctest::Approx((p[k] - (y[i] == c ? 1.0 : 0.0)) / double(n)).epsilon(1e-12));
        Tensor a = z, b = z;
        a[k] += 1e-6;
        b[k] -= 1e-6;
        CHECK(r.dlogits[k] == doctest::Approx((cross_entropy(a, y) - cross_entropy(b, y)) / 2e-6).epsilon(1e-6));
      }
  }
}

TEST_CASE("sgd") {
  Rng rng(2);
  const TensorMap params{{"a", testutil::random_tensor({3, 2}, rng)}, {"b", testutil::random_tensor({4}, rng)}};
  const TensorMap grads{{"a", testutil::random_tensor({3, 2}, rng)}, {"b", testutil::random_tensor({4}, rng)}};
  const SgdResult plain = sgd_step(params, grads, 0.1, 0.0, {});
  for (const auto& [k, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(plain.params.at(k)[i] == t[i] - 0.1 * grads.at(k)[i]);

  TensorMap zero = grads;
  for (auto& [k, t] : zero) t.fill(0.0);
  CHECK(sgd_step(params, zero, 0.1, 0.9, {}).params == params);

  const SgdResult s1 = sgd_step(params, grads, 0.1, 0.9, {});
  const SgdResult s2 = sgd_step(s1.params, grads, 0.1, 0.9, s1.state);
  for (const auto& [k, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(t[i] - s2.params.at(k)[i] == doctest::Approx(0.1 * grads.at(k)[i] * (1 + 1.9)).epsilon(1e-12));

  TensorMap inplace = params;
  SgdState st;
  sgd_step_inplace(inplace, grads, 0.1, 0.9, st);
  sgd_step_inplace(inplace, grads, 0.1, 0.9, st);
  CHECK(inplace == s2.params);

  TensorMap bad = grads;
  bad["b"] = Tensor({5});
  try {
    sgd_step(params, bad, 0.1, 0.9, {});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("schedule anchors") {
  ScheduleConfig s;
  s.cycle_steps = 100;
  s.warmup_steps = 10;
  s.lr_min = 1e-4;
  CHECK(lr_at(0, s, 0.01) == s.lr_min);
  CHECK(lr_at(10, s, 0.01) == 0.01);
  CHECK(lr_at(100, s, 0.01) == s.lr_min);
  CHECK(std::abs(lr_at(99, s, 0.01) - (s.lr_min + 0.5 * (0.01 - s.lr_min) * (1 + std::cos(std::numbers::pi * 89 / 90)))) <
        1e-12);

  ScheduleConfig z;
  z.cycle_steps = 50;
  z.warmup_steps = 0;
  z.lr_min = 0.001;
  CHECK(std::abs(lr_at(25, z, 0.01) - 0.0055) < 1e-12);
  CHECK(std::abs(lr_at(49, z, 0.01) - (0.001 + 0.5 * 0.009 * (1 + std::cos(std::numbers::pi * 49 / 50)))) < 1e-12);
  CHECK(std::abs(lr_at(0, z, 0.01) - 0.01) < 1e-12);
}

TEST_CASE("schedule matches the closed form across restarts") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ScheduleConfig s;
    const long first = 5 + long(rng.below(60));
    const long warm = long(rng.below(std::min<std::uint64_t>(first, 10)));
    s.cycle_steps = int(first);
    s.warmup_steps = int(warm);
    s.lr_min = rng.uniform(0, 1e-3);
    s.cycle_mult = rng.bernoulli(0.5) ? 1.0 : rng.uniform(1.0, 2.5);
    s.decay_gamma = rng.bernoulli(0.5) ? 1.0 : rng.uniform(0.3, 1.0);
    s.validate();
    const double lr_max = rng.uniform(1e-3, 0.1);
    double prev_peak = lr_max;
    for (long step = 0; step < 400; ++step) {
      const double v = lr_at(step, s, lr_max);
      CHECK(std::abs(v - closed_form(step, first, warm, s.cycle_mult, s.decay_gamma, lr_max, s.lr_min)) < 1e-12);
      const CycleInfo c = locate(step, first, warm, s.cycle_mult, s.decay_gamma, lr_max);
      CHECK(v <= c.peak + 1e-15);
      CHECK(c.peak <= prev_peak);
      prev_peak = c.peak;
      if (step == c.start && warm > 0) CHECK(v == std::min(s.lr_min, c.peak));
    }
  }
}

TEST_CASE("schedule validation") {
  ScheduleConfig s;
  s.cycle_steps = 10;
  s.warmup_steps = 10;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.warmup_steps = 2;
  s.cycle_mult = 0.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
