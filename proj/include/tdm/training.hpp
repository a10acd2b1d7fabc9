#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdm/data_io.hpp"
#include "tdm/diffusion.hpp"
#include "tdm/denoiser.hpp"
#include "tdm/schedule.hpp"
#include "tdm/skeleton.hpp"

namespace tdm {

class Rng;

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 8;
  long max_steps = 1000;
  std::uint64_t seed = 1;
  long checkpoint_interval = 500;
  long log_interval = 10;
  double lambda = 0.1;
  double grad_clip = 1.0;          // <= 0 disables clipping
  double target_joint_loss = 0.0;  // > 0 stops early once reached

  void validate() const;
};

// per-parameter Adam moments, parallel to Denoiser::parameters()
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;

  static AdamState init_for(const Denoiser& model);
};

// bias-corrected update: theta -= lr * m_hat / (sqrt(v_hat) + eps).
// `step` is the 1-based update count.
void adam_update(Tensor& param, const std::vector<double>& grad, std::vector<double>& m,
                 std::vector<double>& v, long step, const TrainConfig& cfg);

struct LossValues {
  double total = 0.0;
  double joint = 0.0;
  double bone = 0.0;
};

// One optimization step over the batch: per element sample t ~ U{1..T} and
// eps ~ N(0,1), noise, denoise under the text/time condition, average the
// losses, backpropagate, clip, and apply Adam.
LossValues train_step(const std::vector<const SamplePair*>& batch, Denoiser& model,
                      AdamState& adam, const NoiseSchedule& sched,
                      const SkeletonTopology& topo, const TrainConfig& cfg, Rng& rng);

struct TrainRunResult {
  long steps_run = 0;
  LossValues final_loss;
  std::string final_checkpoint;
  std::vector<std::string> checkpoints;
  std::vector<LossValues> history;  // one entry per step
};

// Full loop: builds the vocabulary and model (or resumes), iterates
// train_step, writes checkpoints at the configured interval plus an initial
// and a final one, and appends key=value records to <out_dir>/metrics.log.
TrainRunResult run_training(const Dataset& dataset, const SkeletonTopology& topo,
                            const DenoiserConfig& model_cfg, int schedule_steps,
                            double schedule_offset, const TrainConfig& cfg,
                            const std::string& out_dir,
                            const std::string& resume_checkpoint = "");

}  // namespace tdm
