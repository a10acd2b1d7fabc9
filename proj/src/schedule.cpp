#include "tdm/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace tdm {

namespace {
constexpr double kHalfPi = 1.57079632679489661923;
constexpr double kGammaSqFloor = 1e-5;
}  // namespace

NoiseSchedule cosine_schedule(int total_steps, double offset) {
  if (total_steps < 1)
    throw ScheduleError("cosine_schedule: total_steps must be >= 1, got " +
                        std::to_string(total_steps));
  if (offset <= 0.0)
    throw ScheduleError("cosine_schedule: offset must be positive, got " +
                        std::to_string(offset));
  NoiseSchedule sched;
  sched.total_steps = total_steps;
  sched.gamma.resize(static_cast<size_t>(total_steps) + 1);
  sched.sigma.resize(static_cast<size_t>(total_steps) + 1);
  auto f = [&](double t) {
    const double c = std::cos((t / total_steps + offset) / (1.0 + offset) * kHalfPi);
    return c * c;
  };
  const double f0 = f(0.0);
  for (int t = 0; t <= total_steps; ++t) {
    const double g2 = std::clamp(f(static_cast<double>(t)) / f0, kGammaSqFloor, 1.0);
    sched.gamma[static_cast<size_t>(t)] = std::sqrt(g2);
    sched.sigma[static_cast<size_t>(t)] = std::sqrt(1.0 - g2);
  }
  sched.gamma[0] = 1.0;
  sched.sigma[0] = 0.0;
  return sched;
}

}  // namespace tdm
