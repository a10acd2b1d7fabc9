#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tdm {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;

  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return !entries.empty();
  }
};

// Central finite differences (h = 1e-6) against the analytic gradients, per
// op and end-to-end through the tiny denoiser + loss stack. inject_error
// perturbs each analytic gradient before comparison; nonzero values must make
// the suite fail (harness sensitivity fixture).
GradCheckReport run_gradcheck(std::uint64_t seed, double tolerance = 1e-4,
                              double inject_error = 0.0, int end_to_end_params = 20);

// the end-to-end slice alone: tiny config (1 layer, 2 heads, d=16, F=3, J=4,
// L=3), dLoss/dtheta for n random parameter coordinates
GradCheckEntry end_to_end_gradient_check(std::uint64_t seed, int n_params,
                                         double tolerance = 1e-4);

}  // namespace tdm
