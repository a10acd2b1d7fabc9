#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tdm/rng.hpp"
#include "tdm/tensor.hpp"

namespace testutil {

// Central finite differences over the entries of `leaf`. The forward callable
// must rebuild the computation from the leaf's current values, so this stays
// independent of the autodiff path it is used to check.
template <class F>
std::vector<double> fd_gradient(F&& forward, tdm::Tensor leaf, double h = 1e-6) {
  std::vector<double> g(static_cast<size_t>(leaf.size()));
  double* x = leaf.data();
  for (int i = 0; i < leaf.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = forward();
    x[i] = orig - h;
    const double fm = forward();
    x[i] = orig;
    g[static_cast<size_t>(i)] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

inline tdm::Tensor random_tensor(std::vector<int> shape, tdm::Rng& rng, double lo = -2.0,
                                 double hi = 2.0) {
  return tdm::Tensor::uniform(std::move(shape), lo, hi, rng);
}

// random values kept away from |x| < margin, for ops with kinks at zero
inline tdm::Tensor random_tensor_away_from_zero(std::vector<int> shape, tdm::Rng& rng,
                                                double margin = 0.05) {
  tdm::Tensor t = tdm::Tensor::uniform(std::move(shape), -2.0, 2.0, rng);
  double* p = t.data();
  for (int i = 0; i < t.size(); ++i) {
    if (std::fabs(p[i]) < margin) p[i] = p[i] < 0.0 ? -margin : margin;
  }
  return t;
}

}  // namespace testutil
