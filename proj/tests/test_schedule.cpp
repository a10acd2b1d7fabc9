#include <doctest.h>

#include <cmath>

#include "tdm/schedule.hpp"

using namespace tdm;

TEST_CASE("cosine schedule endpoints") {
  const NoiseSchedule s = cosine_schedule(1000, 0.008);
  CHECK(s.gamma[0] == 1.0);
  CHECK(s.sigma[0] == 0.0);

  // closed-form oracle at t = T: f(T)/f(0) = cos^2(pi/2)/f(0) = 0, clamped
  CHECK(s.gamma[1000] == doctest::Approx(std::sqrt(1e-5)).epsilon(1e-12));
  CHECK(s.gamma[1000] < 0.01);
}

TEST_CASE("gamma^2 + sigma^2 = 1 and gamma non-increasing") {
  const NoiseSchedule s = cosine_schedule(1000, 0.008);
  double worst = 0.0;
  for (int t = 0; t <= 1000; ++t) {
    const auto [g, sig] = s.lookup(t);
    worst = std::max(worst, std::fabs(g * g + sig * sig - 1.0));
    if (t > 0) CHECK(s.gamma[t] <= s.gamma[t - 1]);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("closed-form values match an independent evaluation") {
  const int T = 250;
  const double s_off = 0.008;
  const NoiseSchedule s = cosine_schedule(T, s_off);
  for (int t : {0, 1, 17, 100, 249, 250}) {
    const double half_pi = std::acos(0.0);
    auto f = [&](double x) {
      const double c = std::cos((x / T + s_off) / (1.0 + s_off) * half_pi);
      return c * c;
    };
    double g2 = f(t) / f(0);
    g2 = std::min(1.0, std::max(1e-5, g2));
    const double expect = t == 0 ? 1.0 : std::sqrt(g2);
    CHECK(s.gamma[t] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("lookup bounds") {
  const NoiseSchedule s = cosine_schedule(10);
  CHECK(s.lookup(0) == std::pair<double, double>{1.0, 0.0});
  const auto [gT, sT] = s.lookup(10);
  CHECK(gT <= s.gamma[9]);
  CHECK(sT >= 0.0);
  CHECK_THROWS_AS(s.lookup(11), ScheduleError);
  CHECK_THROWS_AS(s.lookup(-1), ScheduleError);
}

TEST_CASE("construction is a pure function of (T, s)") {
  const NoiseSchedule a = cosine_schedule(500, 0.008);
  const NoiseSchedule b = cosine_schedule(500, 0.008);
  CHECK(a.gamma == b.gamma);  // bit-identical
  CHECK(a.sigma == b.sigma);
}

TEST_CASE("invalid schedule parameters") {
  CHECK_THROWS_AS(cosine_schedule(0), ScheduleError);
  CHECK_THROWS_AS(cosine_schedule(10, 0.0), ScheduleError);
  CHECK_THROWS_AS(cosine_schedule(10, -0.1), ScheduleError);
}
