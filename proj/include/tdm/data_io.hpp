#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tdm/denoiser.hpp"
#include "tdm/skeleton.hpp"

namespace tdm {

class Rng;

enum class DatasetErrorKind {
  kParse,        // line is not a JSON object
  kSchema,       // missing field or wrong type
  kEmptyTokens,
  kUnknownToken,
  kBadFrameCount,    // frames < 1 or coords length != frames*J*3
  kJointMismatch,    // coords imply a joint count other than the topology's
  kNonFinite,
  kMaskMismatch,
  kDuplicateId,
};

const char* to_string(DatasetErrorKind kind);

struct DatasetError : std::runtime_error {
  DatasetError(DatasetErrorKind kind, int line, const std::string& id,
               const std::string& msg);
  DatasetErrorKind kind;
  int line;        // 1-based, 0 when not line-specific
  std::string id;  // record id when known
};

struct SamplePair {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<int> token_ids;  // resolved when a vocabulary is supplied
  PoseSequence pose;
};

struct Dataset {
  std::vector<SamplePair> samples;
  std::vector<std::string> warnings;

  bool empty() const { return samples.empty(); }
  int size() const { return static_cast<int>(samples.size()); }
};

// One JSON object per line: {"id","tokens","frames","coords"[,"mask"]}.
// Strict: the first invalid record aborts the load with its line number and
// error category. vocab may be null (token ids left unresolved).
Dataset load_dataset(const std::string& path, const Vocabulary* vocab,
                     const SkeletonTopology& topo);

void save_dataset(const std::string& path, const Dataset& dataset);

// serialize a single record to its dataset line
std::string sample_to_line(const SamplePair& sample);

// unique content tokens across the dataset, sorted, behind the reserved ids
Vocabulary build_vocabulary(const Dataset& dataset);

// Deterministic token->pose corpus: each token contributes a fixed
// sinusoidal trajectory segment with token-indexed frequency and phase, so
// the text->pose mapping is exactly learnable. Coordinates lie in [-1, 1].
Dataset generate_synthetic(std::uint64_t seed, int n_samples,
                           const SkeletonTopology& topo, int vocab_size, int max_len,
                           int frames_per_token = 4);

}  // namespace tdm
