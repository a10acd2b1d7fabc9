#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdm/denoiser.hpp"
#include "tdm/tensor.hpp"

namespace tdm {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Serialized training position; rides in the checkpoint header so a resumed
// run continues the exact same random stream.
struct TrainState {
  long step = 0;
  std::string rng_state_hex;
  long adam_step = 0;
};

// Versioned binary container: magic "TDMCKPT1", a JSON config record, the
// vocabulary, then named tensors as (name, shape, raw little-endian doubles).
struct Checkpoint {
  DenoiserConfig config;
  int joints = 0;
  int schedule_steps = 0;    // T
  double schedule_offset = 0.008;
  Vocabulary vocab;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<TrainState> train_state;

  Tensor find(const std::string& name) const;  // throws when absent
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// model params only; optimizer tensors enter under "opt.m."/"opt.v." prefixes
Checkpoint checkpoint_from_model(const Denoiser& model, const Vocabulary& vocab,
                                 int schedule_steps, double schedule_offset);

// rebuilds a denoiser and copies parameter values; validates every shape
Denoiser model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace tdm
