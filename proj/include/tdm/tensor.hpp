#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdm {

class Rng;

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized during backward()
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backprop;  // accumulates into parents' grad

  int size() const { return static_cast<int>(values.size()); }
};

std::string shape_str(const std::vector<int>& shape);

// Dense double-precision tensor with an optional reverse-mode autodiff node
// behind it. Copies alias the same storage; values are immutable after
// construction except through data() on leaves (parameter updates).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor constant(std::vector<int> shape, double fill);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return check()->shape; }
  int rank() const { return static_cast<int>(check()->shape.size()); }
  int dim(int axis) const;
  int size() const { return check()->size(); }
  bool is_scalar() const { return defined() && size() == 1; }

  const double* data() const { return check()->values.data(); }
  double* data() { return check()->values.data(); }
  double value() const;            // scalar contents
  double at(int i) const;          // rank-1
  double at(int r, int c) const;   // rank-2
  std::vector<double> to_vector() const { return check()->values; }

  void set_requires_grad(bool on);
  bool requires_grad() const { return check()->requires_grad; }
  bool has_grad() const { return defined() && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { if (defined()) node_->grad.clear(); }

  NodePtr node() const { return node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  const NodePtr& check() const {
    if (!node_) throw TensorError("operation on undefined tensor");
    return node_;
  }
  NodePtr node_;
};

// --- op suite -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// add: identical shapes, or b broadcast as a row vector over a's rows
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, identical shapes
Tensor scale(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor abs(const Tensor& a);  // subgradient 0 at 0
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);   // full reduction -> scalar
Tensor mean(const Tensor& a);  // full reduction -> scalar

Tensor reshape(const Tensor& a, std::vector<int> new_shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);  // rank-2 inputs
Tensor gather_cols(const Tensor& a, std::vector<int> cols);
Tensor slice_cols(const Tensor& a, int start, int len);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

Tensor softmax(const Tensor& a, int axis);
// keep[i] == 0 excludes index i along `axis` (exact zero weight); every
// reduced slice must retain at least one kept entry
Tensor softmax_masked(const Tensor& a, int axis, const std::vector<std::uint8_t>& keep);

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// rows scaled to unit length; zero rows stay zero (subgradient 0)
Tensor normalize_rows(const Tensor& a);

// inverted dropout; identity when rate == 0
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// reverse-topological accumulation from a scalar loss; gradients sum over
// fan-out
void backward(const Tensor& loss);

bool all_finite(const Tensor& a);

}  // namespace tdm
