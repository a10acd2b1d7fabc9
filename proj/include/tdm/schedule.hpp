#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tdm {

struct ScheduleError : std::runtime_error {
  explicit ScheduleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Per-step (gamma_t, sigma_t) with gamma_t^2 + sigma_t^2 = 1, indexed on
// t in [0, T] so that t = 0 is the identity (gamma_0 = 1, sigma_0 = 0).
struct NoiseSchedule {
  int total_steps = 0;        // T
  std::vector<double> gamma;  // T+1 entries, non-increasing
  std::vector<double> sigma;  // T+1 entries

  std::pair<double, double> lookup(int t) const {
    if (t < 0 || t > total_steps)
      throw ScheduleError("schedule lookup t=" + std::to_string(t) +
                          " outside [0," + std::to_string(total_steps) + "]");
    return {gamma[static_cast<size_t>(t)], sigma[static_cast<size_t>(t)]};
  }
};

// Squared-cosine cumulative schedule: gamma_t^2 = f(t)/f(0) with
// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), floored at gamma_t^2 >= 1e-5.
NoiseSchedule cosine_schedule(int total_steps, double offset = 0.008);

}  // namespace tdm
