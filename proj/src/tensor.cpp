#include "tdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "tdm/rng.hpp"

namespace tdm {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw TensorError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

NodePtr make_leaf(std::vector<int> shape, std::vector<double> values) {
  auto n = std::make_shared<TensorNode>();
  const int numel = shape_numel(shape);
  if (numel != static_cast<int>(values.size()))
    throw TensorError("value count " + std::to_string(values.size()) +
                      " does not match shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

NodePtr make_result(std::vector<int> shape, const char* op,
                    std::vector<NodePtr> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values.assign(shape_numel(n->shape), 0.0);
  n->op = op;
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

// grad buffer of a parent, or nullptr when the parent is a constant
double* grad_dst(const NodePtr& p) {
  if (!p->requires_grad) return nullptr;
  return p->grad.data();
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw TensorError(std::string(op) + ": expected rank-2 tensor, got shape " +
                      shape_str(t.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// --- Tensor basics ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape) {
  const int n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::constant(std::vector<int> shape, double fill) {
  const int n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, fill)));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  const int n = shape_numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(make_leaf(std::move(shape), std::move(v)));
}

int Tensor::dim(int axis) const {
  const auto& s = check()->shape;
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw TensorError("dim axis " + std::to_string(axis) + " out of range for shape " +
                      shape_str(s));
  return s[axis];
}

double Tensor::value() const {
  if (!is_scalar())
    throw TensorError("value() on non-scalar tensor of shape " + shape_str(shape()));
  return check()->values[0];
}

double Tensor::at(int i) const {
  const auto& n = check();
  if (i < 0 || i >= n->size()) throw TensorError("index out of range");
  return n->values[static_cast<size_t>(i)];
}

double Tensor::at(int r, int c) const {
  require_rank2(*this, "at");
  const auto& s = shape();
  if (r < 0 || r >= s[0] || c < 0 || c >= s[1]) throw TensorError("index out of range");
  return check()->values[static_cast<size_t>(r) * s[1] + c];
}

void Tensor::set_requires_grad(bool on) {
  auto& n = check();
  if (on && n->backprop)
    throw TensorError("set_requires_grad: only leaf tensors can become parameters");
  n->requires_grad = on;
}

const std::vector<double>& Tensor::grad() const {
  const auto& n = check();
  if (n->grad.empty())
    throw TensorError("grad accessed before backward() reached this tensor");
  return n->grad;
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw TensorError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  auto node = make_result({m, n}, "matmul", {a.node(), b.node()});
  const double* A = a.data();
  const double* B = b.data();
  double* C = node->values.data();
  for (int i = 0; i < m; ++i) {
    double* crow = C + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = A[static_cast<size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  node->backprop = [m, k, n](TensorNode& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    const double* G = self.grad.data();
    const double* A = pa->values.data();
    const double* B = pb->values.data();
    if (double* dA = grad_dst(pa)) {
      // dA = G * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double* grow = G + static_cast<size_t>(i) * n;
          const double* brow = B + static_cast<size_t>(p) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA[static_cast<size_t>(i) * k + p] += acc;
        }
    }
    if (double* dB = grad_dst(pb)) {
      // dB = A^T * G
      for (int i = 0; i < m; ++i) {
        const double* grow = G + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
          const double aip = A[static_cast<size_t>(i) * k + p];
          if (aip == 0.0) continue;
          double* drow = dB + static_cast<size_t>(p) * n;
          for (int j = 0; j < n; ++j) drow[j] += aip * grow[j];
        }
      }
    }
  };
  return Tensor::wrap(node);
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  auto node = make_result({n, m}, "transpose", {a.node()});
  const double* A = a.data();
  double* C = node->values.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      C[static_cast<size_t>(j) * m + i] = A[static_cast<size_t>(i) * n + j];
  node->backprop = [m, n](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
          dA[static_cast<size_t>(i) * n + j] += G[static_cast<size_t>(j) * m + i];
    }
  };
  return Tensor::wrap(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool rowcast =
      a.rank() == 2 &&
      ((b.rank() == 1 && b.dim(0) == a.dim(1)) ||
       (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)));
  if (!same && !rowcast)
    throw TensorError("add shape mismatch: " + shape_str(a.shape()) + " + " +
                      shape_str(b.shape()));
  auto node = make_result(a.shape(), "add", {a.node(), b.node()});
  const double* A = a.data();
  const double* B = b.data();
  double* C = node->values.data();
  const int n = a.size();
  if (same) {
    for (int i = 0; i < n; ++i) C[i] = A[i] + B[i];
  } else {
    const int cols = a.dim(1);
    for (int i = 0; i < n; ++i) C[i] = A[i] + B[i % cols];
  }
  node->backprop = [same, n](TensorNode& self) {
    const double* G = self.grad.data();
    if (double* dA = grad_dst(self.parents[0]))
      for (int i = 0; i < n; ++i) dA[i] += G[i];
    if (double* dB = grad_dst(self.parents[1])) {
      if (same) {
        for (int i = 0; i < n; ++i) dB[i] += G[i];
      } else {
        const int cols = static_cast<int>(self.parents[1]->values.size());
        for (int i = 0; i < n; ++i) dB[i % cols] += G[i];
      }
    }
  };
  return Tensor::wrap(node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw TensorError("sub shape mismatch: " + shape_str(a.shape()) + " - " +
                      shape_str(b.shape()));
  auto node = make_result(a.shape(), "sub", {a.node(), b.node()});
  const double* A = a.data();
  const double* B = b.data();
  double* C = node->values.data();
  const int n = a.size();
  for (int i = 0; i < n; ++i) C[i] = A[i] - B[i];
  node->backprop = [n](TensorNode& self) {
    const double* G = self.grad.data();
    if (double* dA = grad_dst(self.parents[0]))
      for (int i = 0; i < n; ++i) dA[i] += G[i];
    if (double* dB = grad_dst(self.parents[1]))
      for (int i = 0; i < n; ++i) dB[i] -= G[i];
  };
  return Tensor::wrap(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw TensorError("mul shape mismatch: " + shape_str(a.shape()) + " * " +
                      shape_str(b.shape()));
  auto node = make_result(a.shape(), "mul", {a.node(), b.node()});
  const double* A = a.data();
  const double* B = b.data();
  double* C = node->values.data();
  const int n = a.size();
  for (int i = 0; i < n; ++i) C[i] = A[i] * B[i];
  node->backprop = [n](TensorNode& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->values.data();
    const double* B = self.parents[1]->values.data();
    if (double* dA = grad_dst(self.parents[0]))
      for (int i = 0; i < n; ++i) dA[i] += G[i] * B[i];
    if (double* dB = grad_dst(self.parents[1]))
      for (int i = 0; i < n; ++i) dB[i] += G[i] * A[i];
  };
  return Tensor::wrap(node);
}

Tensor scale(const Tensor& a, double c) {
  auto node = make_result(a.shape(), "scale", {a.node()});
  const double* A = a.data();
  double* C = node->values.data();
  const int n = a.size();
  for (int i = 0; i < n; ++i) C[i] = c * A[i];
  node->backprop = [c, n](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      for (int i = 0; i < n; ++i) dA[i] += c * G[i];
    }
  };
  return Tensor::wrap(node);
}

namespace {

template <class Fwd, class Dfn>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Dfn dfn) {
  auto node = make_result(a.shape(), name, {a.node()});
  const double* A = a.data();
  double* C = node->values.data();
  const int n = a.size();
  for (int i = 0; i < n; ++i) C[i] = fwd(A[i]);
  node->backprop = [dfn, n](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      const double* X = self.parents[0]->values.data();
      for (int i = 0; i < n; ++i) dA[i] += G[i] * dfn(X[i]);
    }
  };
  return Tensor::wrap(node);
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double x) { return x * x; },
      [](double x) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  auto node = make_result({1}, "sum", {a.node()});
  const double* A = a.data();
  const int n = a.size();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += A[i];
  node->values[0] = acc;
  node->backprop = [n](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double g = self.grad[0];
      for (int i = 0; i < n; ++i) dA[i] += g;
    }
  };
  return Tensor::wrap(node);
}

Tensor mean(const Tensor& a) {
  const int n = a.size();
  return scale(sum(a), 1.0 / n);
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.size())
    throw TensorError("reshape from " + shape_str(a.shape()) + " to " +
                      shape_str(new_shape) + " changes element count");
  auto node = make_result(std::move(new_shape), "reshape", {a.node()});
  node->values = a.node()->values;
  const int n = a.size();
  node->backprop = [n](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      for (int i = 0; i < n; ++i) dA[i] += G[i];
    }
  };
  return Tensor::wrap(node);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw TensorError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw TensorError("concat: axis must be 0 or 1");
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require_rank2(p, "concat");
    parents.push_back(p.node());
  }
  const int other = axis == 0 ? 1 : 0;
  const int fixed = parts[0].dim(other);
  int total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != fixed)
      throw TensorError("concat shape mismatch at axis " + std::to_string(other) + ": " +
                        shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    total += p.dim(axis);
  }
  std::vector<int> out_shape = axis == 0 ? std::vector<int>{total, fixed}
                                         : std::vector<int>{fixed, total};
  auto node = make_result(out_shape, "concat", std::move(parents));
  double* C = node->values.data();
  if (axis == 0) {
    size_t off = 0;
    for (const auto& p : parts) {
      std::memcpy(C + off, p.data(), sizeof(double) * p.size());
      off += p.size();
    }
  } else {
    int col_off = 0;
    for (const auto& p : parts) {
      const int pc = p.dim(1);
      const double* P = p.data();
      for (int r = 0; r < fixed; ++r)
        std::memcpy(C + static_cast<size_t>(r) * total + col_off,
                    P + static_cast<size_t>(r) * pc, sizeof(double) * pc);
      col_off += pc;
    }
  }
  node->backprop = [axis, fixed, total](TensorNode& self) {
    const double* G = self.grad.data();
    if (axis == 0) {
      size_t off = 0;
      for (const auto& p : self.parents) {
        if (double* dP = grad_dst(p)) {
          const int n = p->size();
          for (int i = 0; i < n; ++i) dP[i] += G[off + i];
        }
        off += p->size();
      }
    } else {
      int col_off = 0;
      for (const auto& p : self.parents) {
        const int pc = p->shape[1];
        if (double* dP = grad_dst(p)) {
          for (int r = 0; r < fixed; ++r)
            for (int c = 0; c < pc; ++c)
              dP[static_cast<size_t>(r) * pc + c] +=
                  G[static_cast<size_t>(r) * total + col_off + c];
        }
        col_off += pc;
      }
    }
  };
  return Tensor::wrap(node);
}

Tensor gather_cols(const Tensor& a, std::vector<int> cols) {
  require_rank2(a, "gather_cols");
  const int m = a.dim(0), n = a.dim(1);
  for (int c : cols)
    if (c < 0 || c >= n)
      throw TensorError("gather_cols: column " + std::to_string(c) +
                        " out of range for shape " + shape_str(a.shape()));
  const int k = static_cast<int>(cols.size());
  auto node = make_result({m, k}, "gather_cols", {a.node()});
  const double* A = a.data();
  double* C = node->values.data();
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < k; ++j)
      C[static_cast<size_t>(r) * k + j] = A[static_cast<size_t>(r) * n + cols[j]];
  node->backprop = [m, n, k, cols = std::move(cols)](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      for (int r = 0; r < m; ++r)
        for (int j = 0; j < k; ++j)
          dA[static_cast<size_t>(r) * n + cols[j]] += G[static_cast<size_t>(r) * k + j];
    }
  };
  return Tensor::wrap(node);
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  require_rank2(a, "slice_cols");
  if (start < 0 || len <= 0 || start + len > a.dim(1))
    throw TensorError("slice_cols: range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of " + shape_str(a.shape()));
  std::vector<int> cols(len);
  for (int i = 0; i < len; ++i) cols[i] = start + i;
  return gather_cols(a, std::move(cols));
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "embedding_lookup");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw TensorError("embedding_lookup: id " + std::to_string(id) +
                        " outside table of " + std::to_string(v) + " rows");
  const int l = static_cast<int>(ids.size());
  if (l == 0) throw TensorError("embedding_lookup: empty id list");
  auto node = make_result({l, d}, "embedding_lookup", {table.node()});
  const double* T = table.data();
  double* C = node->values.data();
  for (int i = 0; i < l; ++i)
    std::memcpy(C + static_cast<size_t>(i) * d, T + static_cast<size_t>(ids[i]) * d,
                sizeof(double) * d);
  node->backprop = [ids, d, l](TensorNode& self) {
    if (double* dT = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      for (int i = 0; i < l; ++i) {
        double* drow = dT + static_cast<size_t>(ids[i]) * d;
        const double* grow = G + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) drow[j] += grow[j];
      }
    }
  };
  return Tensor::wrap(node);
}

namespace {

// shared softmax core; keep == nullptr means nothing masked
Tensor softmax_impl(const Tensor& a, int axis, const std::vector<std::uint8_t>* keep) {
  if (a.rank() == 1) {
    if (axis != 0) throw TensorError("softmax: axis out of range for rank-1 tensor");
  } else if (a.rank() == 2) {
    if (axis != 0 && axis != 1) throw TensorError("softmax: axis must be 0 or 1");
  } else {
    throw TensorError("softmax: rank-1 or rank-2 input required, got " +
                      shape_str(a.shape()));
  }
  const bool rank1 = a.rank() == 1;
  const int rows = rank1 ? 1 : (axis == 1 ? a.dim(0) : a.dim(1));
  const int n = rank1 ? a.dim(0) : (axis == 1 ? a.dim(1) : a.dim(0));
  if (keep && static_cast<int>(keep->size()) != n)
    throw TensorError("softmax mask length " + std::to_string(keep->size()) +
                      " does not match reduced extent " + std::to_string(n));
  if (keep) {
    bool any = false;
    for (auto k : *keep) any = any || k;
    if (!any) throw TensorError("softmax mask excludes every position");
  }
  // strides over the flat buffer for (row, i-along-axis)
  const int row_stride = rank1 ? 0 : (axis == 1 ? a.dim(1) : 1);
  const int elem_stride = rank1 ? 1 : (axis == 1 ? 1 : a.dim(1));

  auto node = make_result(a.shape(), keep ? "softmax_masked" : "softmax",
                          {a.node()});
  const double* A = a.data();
  double* P = node->values.data();
  for (int r = 0; r < rows; ++r) {
    const size_t base = static_cast<size_t>(r) * row_stride;
    double mx = -1e300;
    for (int i = 0; i < n; ++i) {
      if (keep && !(*keep)[i]) continue;
      mx = std::max(mx, A[base + static_cast<size_t>(i) * elem_stride]);
    }
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      const size_t idx = base + static_cast<size_t>(i) * elem_stride;
      if (keep && !(*keep)[i]) {
        P[idx] = 0.0;
        continue;
      }
      P[idx] = std::exp(A[idx] - mx);
      z += P[idx];
    }
    for (int i = 0; i < n; ++i) {
      const size_t idx = base + static_cast<size_t>(i) * elem_stride;
      P[idx] /= z;
    }
  }
  node->backprop = [rows, n, row_stride, elem_stride](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      const double* P = self.values.data();
      for (int r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * row_stride;
        double dot = 0.0;
        for (int i = 0; i < n; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * elem_stride;
          dot += G[idx] * P[idx];
        }
        for (int i = 0; i < n; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * elem_stride;
          dA[idx] += P[idx] * (G[idx] - dot);
        }
      }
    }
  };
  return Tensor::wrap(node);
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) { return softmax_impl(a, axis, nullptr); }

Tensor softmax_masked(const Tensor& a, int axis, const std::vector<std::uint8_t>& keep) {
  return softmax_impl(a, axis, &keep);
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  Tensor x = a.rank() == 1 ? reshape(a, {1, a.dim(0)}) : a;
  require_rank2(x, "layer_norm");
  const int rows = x.dim(0), d = x.dim(1);
  if (gain.size() != d || bias.size() != d)
    throw TensorError("layer_norm: gain/bias length must equal row width " +
                      std::to_string(d));
  auto node = make_result(x.shape(), "layer_norm", {x.node(), gain.node(), bias.node()});
  const double* X = x.data();
  const double* Gn = gain.data();
  const double* B = bias.data();
  double* Y = node->values.data();
  // cache per-row (mean, inv_std) for the backward pass
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * 2);
  for (int r = 0; r < rows; ++r) {
    const double* xr = X + static_cast<size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= d;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<size_t>(r) * 2] = mu;
    (*stats)[static_cast<size_t>(r) * 2 + 1] = inv_std;
    double* yr = Y + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) yr[j] = (xr[j] - mu) * inv_std * Gn[j] + B[j];
  }
  node->backprop = [rows, d, stats](TensorNode& self) {
    const double* G = self.grad.data();
    const double* X = self.parents[0]->values.data();
    const double* Gn = self.parents[1]->values.data();
    double* dX = grad_dst(self.parents[0]);
    double* dGn = grad_dst(self.parents[1]);
    double* dB = grad_dst(self.parents[2]);
    for (int r = 0; r < rows; ++r) {
      const double mu = (*stats)[static_cast<size_t>(r) * 2];
      const double inv_std = (*stats)[static_cast<size_t>(r) * 2 + 1];
      const double* xr = X + static_cast<size_t>(r) * d;
      const double* gr = G + static_cast<size_t>(r) * d;
      double sum_gdy = 0.0, sum_gdy_xhat = 0.0;
      for (int j = 0; j < d; ++j) {
        const double xhat = (xr[j] - mu) * inv_std;
        const double gdy = gr[j] * Gn[j];
        sum_gdy += gdy;
        sum_gdy_xhat += gdy * xhat;
        if (dGn) dGn[j] += gr[j] * xhat;
        if (dB) dB[j] += gr[j];
      }
      if (dX) {
        double* dxr = dX + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) {
          const double xhat = (xr[j] - mu) * inv_std;
          const double gdy = gr[j] * Gn[j];
          dxr[j] += inv_std * (gdy - sum_gdy / d - xhat * sum_gdy_xhat / d);
        }
      }
    }
  };
  Tensor out = Tensor::wrap(node);
  return a.rank() == 1 ? reshape(out, {a.dim(0)}) : out;
}

Tensor normalize_rows(const Tensor& a) {
  require_rank2(a, "normalize_rows");
  const int rows = a.dim(0), d = a.dim(1);
  auto node = make_result(a.shape(), "normalize_rows", {a.node()});
  const double* X = a.data();
  double* Y = node->values.data();
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (int r = 0; r < rows; ++r) {
    const double* xr = X + static_cast<size_t>(r) * d;
    double n2 = 0.0;
    for (int j = 0; j < d; ++j) n2 += xr[j] * xr[j];
    const double nrm = std::sqrt(n2);
    (*norms)[r] = nrm;
    double* yr = Y + static_cast<size_t>(r) * d;
    if (nrm == 0.0) {
      for (int j = 0; j < d; ++j) yr[j] = 0.0;
    } else {
      for (int j = 0; j < d; ++j) yr[j] = xr[j] / nrm;
    }
  }
  node->backprop = [rows, d, norms](TensorNode& self) {
    if (double* dX = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      const double* Q = self.values.data();
      for (int r = 0; r < rows; ++r) {
        const double nrm = (*norms)[r];
        if (nrm == 0.0) continue;  // subgradient 0 at the degenerate point
        const double* gr = G + static_cast<size_t>(r) * d;
        const double* qr = Q + static_cast<size_t>(r) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += gr[j] * qr[j];
        double* dxr = dX + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) dxr[j] += (gr[j] - qr[j] * dot) / nrm;
      }
    }
  };
  return Tensor::wrap(node);
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw TensorError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (rate == 0.0) return a;
  const int n = a.size();
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(n);
  for (int i = 0; i < n; ++i)
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  auto node = make_result(a.shape(), "dropout", {a.node()});
  const double* A = a.data();
  double* C = node->values.data();
  for (int i = 0; i < n; ++i) C[i] = A[i] * (*mask)[i];
  node->backprop = [n, mask](TensorNode& self) {
    if (double* dA = grad_dst(self.parents[0])) {
      const double* G = self.grad.data();
      for (int i = 0; i < n; ++i) dA[i] += G[i] * (*mask)[i];
    }
  };
  return Tensor::wrap(node);
}

// --- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar())
    throw TensorError("backward: loss must be a defined scalar tensor" +
                      (loss.defined() ? ", got shape " + shape_str(loss.shape()) : std::string()));
  TensorNode* root = loss.node().get();
  if (!root->requires_grad) return;  // nothing differentiable is reachable

  // iterative post-order DFS over the differentiable subgraph
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && next >= stack.back().first->parents.size()) {
      topo.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  for (TensorNode* n : topo) n->grad.assign(n->values.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

bool all_finite(const Tensor& a) {
  const double* p = a.data();
  const int n = a.size();
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

}  // namespace tdm
