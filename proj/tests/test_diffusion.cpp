#include <doctest.h>

#include <cmath>

#include "tdm/diffusion.hpp"
#include "tdm/rng.hpp"
#include "tdm/schedule.hpp"

using namespace tdm;

TEST_CASE("forward_noise endpoints") {
  const NoiseSchedule sched = cosine_schedule(100);
  Rng rng(1);
  PoseSequence p0 = PoseSequence::zeros(3, 2);
  for (double& c : p0.coords) c = rng.uniform(-1.0, 1.0);

  std::vector<double> eps(p0.coords.size());
  for (double& e : eps) e = rng.normal();

  // t = 0: gamma = 1, sigma = 0 -> p0 exactly
  CHECK(forward_noise(p0, 0, eps, sched).coords == p0.coords);

  // eps = 0 -> gamma_t * p0
  std::vector<double> zero(p0.coords.size(), 0.0);
  const auto [g, s] = sched.lookup(42);
  const PoseSequence noisefree = forward_noise(p0, 42, zero, sched);
  for (size_t i = 0; i < p0.coords.size(); ++i)
    CHECK(noisefree.coords[i] == doctest::Approx(g * p0.coords[i]).epsilon(1e-15));
  CHECK(s > 0.0);
}

TEST_CASE("forward_noise validates shapes and range") {
  const NoiseSchedule sched = cosine_schedule(10);
  PoseSequence p0 = PoseSequence::zeros(2, 2);
  std::vector<double> eps(p0.coords.size() - 1, 0.0);
  CHECK_THROWS_AS(forward_noise(p0, 1, eps, sched), DiffusionError);
  std::vector<double> ok(p0.coords.size(), 0.0);
  CHECK_THROWS_AS(forward_noise(p0, 11, ok, sched), ScheduleError);
}

TEST_CASE("forward process inverts algebraically within 1e-10") {
  const NoiseSchedule sched = cosine_schedule(1000);
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    PoseSequence p0 = PoseSequence::zeros(2, 3);
    for (double& c : p0.coords) c = rng.uniform(-1.0, 1.0);
    std::vector<double> eps(p0.coords.size());
    for (double& e : eps) e = rng.normal();
    const int t = static_cast<int>(rng.uniform_int(0, 1000));
    const auto [g, s] = sched.lookup(t);
    const PoseSequence pt = forward_noise(p0, t, eps, sched);
    for (size_t i = 0; i < p0.coords.size(); ++i) {
      const double rec = (pt.coords[i] - s * eps[i]) / g;
      worst = std::max(worst, std::fabs(rec - p0.coords[i]));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("masked frames stay untouched by noising") {
  const NoiseSchedule sched = cosine_schedule(100);
  PoseSequence p0 = PoseSequence::zeros(3, 2);
  for (size_t i = 0; i < p0.coords.size(); ++i) p0.coords[i] = static_cast<double>(i);
  p0.mask = {1, 0, 1};
  std::vector<double> eps(p0.coords.size(), 3.0);
  const PoseSequence pt = forward_noise(p0, 50, eps, sched);
  for (int j = 0; j < 2; ++j)
    for (int a = 0; a < 3; ++a) CHECK(pt.at(1, j, a) == p0.at(1, j, a));
  CHECK(pt.at(0, 0, 0) != p0.at(0, 0, 0));
}

TEST_CASE("timestep subsequence stride") {
  CHECK(make_timestep_subsequence(1000, 5) == std::vector<int>{1000, 800, 600, 400, 200});
  CHECK(make_timestep_subsequence(1000, 1) == std::vector<int>{1000});

  const auto full = make_timestep_subsequence(20, 20);
  std::vector<int> expect;
  for (int t = 20; t >= 1; --t) expect.push_back(t);
  CHECK(full == expect);

  CHECK_THROWS_AS(make_timestep_subsequence(10, 0), DiffusionError);
  CHECK_THROWS_AS(make_timestep_subsequence(10, 11), DiffusionError);

  // strictly decreasing, positive tail for awkward splits
  for (int T : {7, 97, 1000})
    for (int i : {1, 2, 3, 5, 7}) {
      const auto ts = make_timestep_subsequence(T, i);
      CHECK(ts.front() == T);
      CHECK(ts.back() > 0);
      for (size_t k = 0; k + 1 < ts.size(); ++k) CHECK(ts[k + 1] < ts[k]);
    }
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  cfg.iterations = 3;
  cfg.timesteps = {100, 50, 10};
  cfg.validate(100);
  cfg.timesteps = {90, 50, 10};
  CHECK_THROWS_AS(cfg.validate(100), DiffusionError);
  cfg.timesteps = {100, 50};
  CHECK_THROWS_AS(cfg.validate(100), DiffusionError);
  cfg.timesteps = {100, 100, 10};
  CHECK_THROWS_AS(cfg.validate(100), DiffusionError);
}

TEST_CASE("oracle denoiser passes through sample() bitwise") {
  const NoiseSchedule sched = cosine_schedule(1000);
  Rng seed_rng(3);
  PoseSequence target = PoseSequence::zeros(4, 3);
  for (double& c : target.coords) c = seed_rng.uniform(-1.0, 1.0);

  for (NoiseMode mode : {NoiseMode::kFreshNoise, NoiseMode::kDeterministic}) {
    int calls = 0;
    const DenoiseFn oracle = [&](const PoseSequence&, int) {
      ++calls;
      return target;
    };
    SamplerConfig cfg;
    cfg.iterations = 5;
    cfg.noise_mode = mode;
    Rng rng(17);
    const PoseSequence out = sample(oracle, target.frames, target.joints, sched, cfg, rng);
    CHECK(calls == 5);
    CHECK(out.coords == target.coords);  // bitwise
  }
}

TEST_CASE("sample with i=1 calls the denoiser once on pure noise") {
  const NoiseSchedule sched = cosine_schedule(50);
  int calls = 0;
  PoseSequence seen;
  const DenoiseFn probe = [&](const PoseSequence& noisy, int t) {
    ++calls;
    CHECK(t == 50);
    seen = noisy;
    return noisy;
  };
  SamplerConfig cfg;
  cfg.iterations = 1;
  Rng rng(5);
  sample(probe, 2, 2, sched, cfg, rng);
  CHECK(calls == 1);
  // matches the direct normal stream from the same seed
  Rng expect_rng(5);
  for (double c : seen.coords) CHECK(c == expect_rng.normal());
}

TEST_CASE("deterministic mode with a fixed seed is bit-identical") {
  const NoiseSchedule sched = cosine_schedule(200);
  const DenoiseFn shrink = [](const PoseSequence& noisy, int) {
    PoseSequence out = noisy;
    for (double& c : out.coords) c *= 0.5;
    return out;
  };
  SamplerConfig cfg;
  cfg.iterations = 4;
  cfg.noise_mode = NoiseMode::kDeterministic;
  Rng r1(99), r2(99);
  const PoseSequence a = sample(shrink, 3, 2, sched, cfg, r1);
  const PoseSequence b = sample(shrink, 3, 2, sched, cfg, r2);
  CHECK(a.coords == b.coords);
}

TEST_CASE("sampling leaves masked frames untouched and rejects non-finite output") {
  const NoiseSchedule sched = cosine_schedule(100);
  SamplerConfig cfg;
  cfg.iterations = 3;
  std::vector<std::uint8_t> mask{1, 0, 1};
  const DenoiseFn identity = [](const PoseSequence& noisy, int) { return noisy; };
  Rng rng(1);
  const PoseSequence out = sample(identity, 3, 2, sched, cfg, rng, &mask);
  for (int j = 0; j < 2; ++j)
    for (int a = 0; a < 3; ++a) CHECK(out.at(1, j, a) == 0.0);

  const DenoiseFn broken = [](const PoseSequence& noisy, int) {
    PoseSequence out = noisy;
    out.coords[0] = std::nan("");
    return out;
  };
  Rng rng2(1);
  CHECK_THROWS_AS(sample(broken, 2, 2, sched, cfg, rng2), DiffusionError);
}
