#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tdm/denoiser.hpp"
#include "tdm/diffusion.hpp"
#include "tdm/training.hpp"

namespace tdm {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// One structured config file drives every run; see docs/config.md.
struct RunConfig {
  std::string dataset_path;
  std::string skeleton_path;  // empty selects the built-in upper-body topology

  DenoiserConfig model;

  std::string schedule_kind = "cosine";
  int schedule_steps = 1000;
  double schedule_offset = 0.008;

  SamplerConfig sampler;
  std::uint64_t sampler_seed = 1234;

  TrainConfig train;

  std::string out_dir = "runs/default";

  void validate() const;
  SkeletonTopology load_topology() const;
};

// Parse the JSON config file, apply dotted-path overrides ("train.max_steps=200"),
// validate, and return. Field errors name the offending field.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// defaults only, plus overrides; used by subcommands that can run configless
RunConfig default_run_config(const std::vector<std::string>& overrides = {});

}  // namespace tdm
