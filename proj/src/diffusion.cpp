#include "tdm/diffusion.hpp"

#include <cmath>

#include "tdm/rng.hpp"

namespace tdm {

NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "fresh") return NoiseMode::kFreshNoise;
  if (s == "deterministic") return NoiseMode::kDeterministic;
  throw DiffusionError("unknown noise mode '" + s + "' (expected 'fresh' or 'deterministic')");
}

std::string to_string(NoiseMode mode) {
  return mode == NoiseMode::kFreshNoise ? "fresh" : "deterministic";
}

void SamplerConfig::validate(int total_steps) const {
  if (iterations < 1 || iterations > total_steps)
    throw DiffusionError("sampler iterations " + std::to_string(iterations) +
                         " outside [1," + std::to_string(total_steps) + "]");
  if (timesteps.empty()) return;
  if (static_cast<int>(timesteps.size()) != iterations)
    throw DiffusionError("timestep subsequence length " + std::to_string(timesteps.size()) +
                         " != iterations " + std::to_string(iterations));
  if (timesteps.front() != total_steps)
    throw DiffusionError("timestep subsequence must start at T=" +
                         std::to_string(total_steps));
  for (size_t k = 0; k + 1 < timesteps.size(); ++k)
    if (timesteps[k + 1] >= timesteps[k])
      throw DiffusionError("timestep subsequence must be strictly decreasing");
  if (timesteps.back() <= 0)
    throw DiffusionError("timestep subsequence must stay positive");
}

PoseSequence forward_noise(const PoseSequence& p0, int t, const std::vector<double>& eps,
                           const NoiseSchedule& sched) {
  if (eps.size() != p0.coords.size())
    throw DiffusionError("noise size " + std::to_string(eps.size()) +
                         " does not match pose size " + std::to_string(p0.coords.size()));
  const auto [gamma, sigma] = sched.lookup(t);
  PoseSequence out = p0;
  const int stride = p0.joints * 3;
  for (int f = 0; f < p0.frames; ++f) {
    if (!p0.mask[f]) continue;
    const size_t base = static_cast<size_t>(f) * stride;
    for (int i = 0; i < stride; ++i)
      out.coords[base + i] = gamma * p0.coords[base + i] + sigma * eps[base + i];
  }
  return out;
}

std::vector<int> make_timestep_subsequence(int total_steps, int iterations) {
  if (iterations < 1 || iterations > total_steps)
    throw DiffusionError("iterations " + std::to_string(iterations) + " outside [1," +
                         std::to_string(total_steps) + "]");
  std::vector<int> ts(static_cast<size_t>(iterations));
  for (int k = 0; k < iterations; ++k) {
    const double v = static_cast<double>(total_steps) * (iterations - k) / iterations;
    ts[static_cast<size_t>(k)] = static_cast<int>(std::lround(v));
  }
  return ts;
}

PoseSequence sample(const DenoiseFn& denoiser, int frames, int joints,
                    const NoiseSchedule& sched, const SamplerConfig& cfg, Rng& rng,
                    const std::vector<std::uint8_t>* mask) {
  cfg.validate(sched.total_steps);
  if (frames < 1) throw DiffusionError("sample: frame count must be >= 1");
  std::vector<int> ts =
      cfg.timesteps.empty() ? make_timestep_subsequence(sched.total_steps, cfg.iterations)
                            : cfg.timesteps;

  PoseSequence current = PoseSequence::zeros(frames, joints);
  if (mask) {
    if (static_cast<int>(mask->size()) != frames)
      throw DiffusionError("sample: mask length does not match frame count");
    current.mask = *mask;
  }
  const int stride = joints * 3;
  // p_T is pure standard Gaussian noise; padding frames stay untouched
  for (int f = 0; f < frames; ++f) {
    if (!current.mask[f]) continue;
    for (int i = 0; i < stride; ++i)
      current.coords[static_cast<size_t>(f) * stride + i] = rng.normal();
  }

  PoseSequence predicted;
  for (size_t k = 0; k < ts.size(); ++k) {
    predicted = denoiser(current, ts[k]);
    if (predicted.frames != frames || predicted.joints != joints)
      throw DiffusionError("denoiser changed sequence shape during sampling");
    for (int f = 0; f < frames; ++f) {
      if (!current.mask[f]) continue;
      for (int i = 0; i < stride; ++i) {
        const double v = predicted.coords[static_cast<size_t>(f) * stride + i];
        if (!std::isfinite(v))
          throw DiffusionError("non-finite denoiser output at sampling step " +
                               std::to_string(k) + " (t=" + std::to_string(ts[k]) + ")");
      }
    }
    predicted.mask = current.mask;
    if (k + 1 == ts.size()) break;  // final clean prediction is the output

    const int t_next = ts[k + 1];
    std::vector<double> eps(predicted.coords.size(), 0.0);
    if (cfg.noise_mode == NoiseMode::kFreshNoise) {
      for (int f = 0; f < frames; ++f) {
        if (!predicted.mask[f]) continue;
        for (int i = 0; i < stride; ++i)
          eps[static_cast<size_t>(f) * stride + i] = rng.normal();
      }
    }
    current = forward_noise(predicted, t_next, eps, sched);
  }
  // padding frames remain exactly as initialized (zero)
  for (int f = 0; f < frames; ++f) {
    if (predicted.mask[f]) continue;
    for (int i = 0; i < stride; ++i)
      predicted.coords[static_cast<size_t>(f) * stride + i] = 0.0;
  }
  return predicted;
}

}  // namespace tdm
