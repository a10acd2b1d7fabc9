#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdm/data_io.hpp"
#include "tdm/skeleton.hpp"

namespace tdm {

struct EvaluationError : std::runtime_error {
  explicit EvaluationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DtwResult {
  double cost = 0.0;       // optimal path cost sum / path length
  double path_cost = 0.0;  // optimal path cost sum
  std::vector<std::pair<int, int>> path;  // (frame of a, frame of b), valid frames
};

// Classic monotone DP alignment over valid frames with per-frame cost
// = mean over joints of the Euclidean joint distance. Among minimum-cost
// paths the shortest is chosen (lexicographic (sum, length) minimum), which
// keeps the normalized cost symmetric under argument swap.
DtwResult dtw_distance(const PoseSequence& a, const PoseSequence& b);

struct EvalRow {
  std::string id;
  int frames = 0;
  double dtw = 0.0;
  bool ok = false;
  std::string error;  // category text when !ok
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int count = 0;   // evaluated successfully
  int failed = 0;
  double mean = 0.0;
  double median = 0.0;
  double worst = 0.0;
};

using GenerateFn = std::function<PoseSequence(const SamplePair&)>;

// Generates one sequence per dataset sample (ground-truth frame count is the
// generator's to honor) and scores it against the reference. Generation
// failures become failure rows instead of aborting the sweep.
EvalReport evaluate_pairs(const GenerateFn& generate, const Dataset& dataset);

// key=value report: one "sample ..." row per pair plus a "summary ..." block
void write_report(const std::string& path, const EvalReport& report);

}  // namespace tdm
