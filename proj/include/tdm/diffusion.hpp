#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdm/schedule.hpp"
#include "tdm/skeleton.hpp"

namespace tdm {

class Rng;

struct DiffusionError : std::runtime_error {
  explicit DiffusionError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class NoiseMode {
  kFreshNoise,     // resample epsilon at every re-noising step
  kDeterministic,  // epsilon = 0
};

NoiseMode noise_mode_from_string(const std::string& s);
std::string to_string(NoiseMode mode);

struct SamplerConfig {
  int iterations = 5;
  NoiseMode noise_mode = NoiseMode::kFreshNoise;
  // optional override; when empty a uniform stride subsequence is built.
  // Must start at T, be strictly decreasing, and have `iterations` entries.
  std::vector<int> timesteps;

  void validate(int total_steps) const;
};

// p_t = gamma_t * p0 + sigma_t * eps on valid frames; masked frames pass
// through unchanged. eps is flat frames*joints*3.
PoseSequence forward_noise(const PoseSequence& p0, int t, const std::vector<double>& eps,
                           const NoiseSchedule& sched);

// i values, first = T, uniform stride t_k = round(T*(i-k)/i), last > 0
std::vector<int> make_timestep_subsequence(int total_steps, int iterations);

// Denoising callback: predicted clean sequence from (p_t, current t). The
// conditioning signal is bound inside the callable.
using DenoiseFn = std::function<PoseSequence(const PoseSequence& noisy, int t)>;

// Iterative refinement: start from standard Gaussian noise, then repeat
// [predict clean -> re-noise to the next smaller timestep] and return the
// final clean prediction. Calls the denoiser exactly `iterations` times.
PoseSequence sample(const DenoiseFn& denoiser, int frames, int joints,
                    const NoiseSchedule& sched, const SamplerConfig& cfg, Rng& rng,
                    const std::vector<std::uint8_t>* mask = nullptr);

}  // namespace tdm
