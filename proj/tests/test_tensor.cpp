#include <doctest.h>

#include <cmath>

#include "tdm/rng.hpp"
#include "tdm/tensor.hpp"
#include "testutil.hpp"

using namespace tdm;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_tensor;
using testutil::random_tensor_away_from_zero;

TEST_CASE("matmul identity and annihilating cases") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor r = matmul(a, eye);
  CHECK(r.to_vector() == std::vector<double>{1, 2, 3, 4});

  Tensor b = Tensor::from_values({2, 2}, {1, 0, 0, 0});
  Tensor c = Tensor::from_values({2, 1}, {0, 5});
  CHECK(matmul(b, c).to_vector() == std::vector<double>{0, 0});
}

TEST_CASE("matmul gradient equals ones x B^T and matches finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  a.set_requires_grad(true);
  Tensor loss = sum(matmul(a, b));
  backward(loss);

  // analytic: d sum(AB) / dA = ones(3,2) x B^T
  const double* B = b.data();
  for (int i = 0; i < 3; ++i)
    for (int p = 0; p < 4; ++p) {
      double expect = 0.0;
      for (int j = 0; j < 2; ++j) expect += B[p * 2 + j];
      CHECK(a.grad()[i * 4 + p] == doctest::Approx(expect).epsilon(1e-12));
    }

  auto fd = fd_gradient([&] { return sum(matmul(a, b)).value(); }, a);
  CHECK(max_rel_err(a.grad(), fd) < 1e-4);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected TensorError");
  } catch (const TensorError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax symmetry, stabilization, and normalization") {
  Tensor x = Tensor::from_values({2}, {0, 0});
  Tensor p = softmax(x, 0);
  CHECK(p.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.at(1) == doctest::Approx(0.5).epsilon(1e-15));

  Tensor big = Tensor::from_values({2}, {1e4, 1e4 - 1000});
  Tensor pb = softmax(big, 0);
  CHECK(all_finite(pb));
  CHECK(pb.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pb.at(1) == doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(3);
  Tensor m = random_tensor({5, 7}, rng);
  for (int axis : {0, 1}) {
    Tensor pm = softmax(m, axis);
    const int rows = axis == 1 ? 5 : 7;
    const int n = axis == 1 ? 7 : 5;
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += axis == 1 ? pm.at(r, i) : pm.at(i, r);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax jacobian matches finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({3, 4}, rng);
  x.set_requires_grad(true);
  Tensor w = random_tensor({3, 4}, rng);  // random projection to scalar
  auto forward = [&] { return sum(mul(softmax(x, 1), w)).value(); };
  backward(sum(mul(softmax(x, 1), w)));
  CHECK(max_rel_err(x.grad(), fd_gradient(forward, x)) < 1e-4);
}

TEST_CASE("softmax_masked zeroes excluded positions exactly") {
  Rng rng(7);
  Tensor x = random_tensor({3, 5}, rng);
  std::vector<std::uint8_t> keep{1, 0, 1, 0, 1};
  Tensor p = softmax_masked(x, 1, keep);
  for (int r = 0; r < 3; ++r) {
    CHECK(p.at(r, 1) == 0.0);
    CHECK(p.at(r, 3) == 0.0);
    double s = 0.0;
    for (int c = 0; c < 5; ++c) s += p.at(r, c);
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
  std::vector<std::uint8_t> none{0, 0, 0, 0, 0};
  CHECK_THROWS_AS(softmax_masked(x, 1, none), TensorError);

  x.set_requires_grad(true);
  Tensor w = random_tensor({3, 5}, rng);
  auto forward = [&] { return sum(mul(softmax_masked(x, 1, keep), w)).value(); };
  backward(sum(mul(softmax_masked(x, 1, keep), w)));
  CHECK(max_rel_err(x.grad(), fd_gradient(forward, x)) < 1e-4);
}

TEST_CASE("layer_norm constant row maps to bias") {
  Tensor x = Tensor::from_values({1, 4}, {3, 3, 3, 3});
  Tensor g = Tensor::constant({4}, 1.0);
  Tensor b = Tensor::zeros({4});
  Tensor y = layer_norm(x, g, b);
  for (int j = 0; j < 4; ++j) CHECK(y.at(0, j) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layer_norm on [1,-1] reproduces the hand-computed value") {
  // mean 0, variance 1, eps 1e-5 -> y = x / sqrt(1 + 1e-5)
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  Tensor x = Tensor::from_values({1, 2}, {1, -1});
  Tensor y = layer_norm(x, Tensor::constant({2}, 1.0), Tensor::zeros({2}));
  CHECK(y.at(0, 0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(y.at(0, 1) == doctest::Approx(-expect).epsilon(1e-14));
}

TEST_CASE("layer_norm gradients match finite differences") {
  Rng rng(13);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor g = random_tensor({6}, rng, 0.5, 1.5);
  Tensor b = random_tensor({6}, rng);
  Tensor w = random_tensor({4, 6}, rng);
  x.set_requires_grad(true);
  g.set_requires_grad(true);
  b.set_requires_grad(true);
  auto forward = [&] { return sum(mul(layer_norm(x, g, b), w)).value(); };
  backward(sum(mul(layer_norm(x, g, b), w)));
  CHECK(max_rel_err(x.grad(), fd_gradient(forward, x)) < 1e-4);
  CHECK(max_rel_err(g.grad(), fd_gradient(forward, g)) < 1e-4);
  CHECK(max_rel_err(b.grad(), fd_gradient(forward, b)) < 1e-4);
}

TEST_CASE("elementwise trivial values") {
  CHECK(relu(Tensor::scalar(-3)).value() == 0.0);
  CHECK(mean(Tensor::from_values({3}, {1, 2, 3})).value() == doctest::Approx(2.0));

  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad(true);
  backward(sum(square(x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("elementwise and structural ops match finite differences") {
  Rng rng(17);

  auto check_unary = [&](const char* name, auto op, bool kinked) {
    Tensor x = kinked ? random_tensor_away_from_zero({3, 4}, rng)
                      : random_tensor({3, 4}, rng);
    x.set_requires_grad(true);
    Tensor w = random_tensor(op(x).shape(), rng);  // matches the op's output shape
    auto forward = [&] { return sum(mul(op(x), w)).value(); };
    backward(sum(mul(op(x), w)));
    INFO(name);
    CHECK(max_rel_err(x.grad(), fd_gradient(forward, x)) < 1e-4);
  };
  check_unary("relu", [](const Tensor& t) { return relu(t); }, true);
  check_unary("gelu", [](const Tensor& t) { return gelu(t); }, false);
  check_unary("abs", [](const Tensor& t) { return tdm::abs(t); }, true);
  check_unary("square", [](const Tensor& t) { return square(t); }, false);
  check_unary("mean", [](const Tensor& t) { return mean(t); }, false);
  check_unary("transpose", [](const Tensor& t) { return transpose(t); }, false);
  check_unary("reshape", [](const Tensor& t) { return reshape(t, {4, 3}); }, false);
  check_unary("normalize_rows", [](const Tensor& t) { return normalize_rows(t); }, false);
  check_unary("slice+concat", [](const Tensor& t) {
    return concat({slice_cols(t, 0, 2), slice_cols(t, 2, 2)}, 1);
  }, false);
  check_unary("gather_cols", [](const Tensor& t) { return gather_cols(t, {3, 1, 1, 0}); },
              false);

  // binary ops
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor brow = random_tensor({4}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  brow.set_requires_grad(true);
  Tensor w = random_tensor({3, 4}, rng);

  auto fwd_add = [&] { return sum(mul(add(a, b), w)).value(); };
  backward(sum(mul(add(a, b), w)));
  CHECK(max_rel_err(a.grad(), fd_gradient(fwd_add, a)) < 1e-4);
  CHECK(max_rel_err(b.grad(), fd_gradient(fwd_add, b)) < 1e-4);

  a.zero_grad();
  brow.zero_grad();
  auto fwd_addrow = [&] { return sum(mul(add(a, brow), w)).value(); };
  backward(sum(mul(add(a, brow), w)));
  CHECK(max_rel_err(a.grad(), fd_gradient(fwd_addrow, a)) < 1e-4);
  CHECK(max_rel_err(brow.grad(), fd_gradient(fwd_addrow, brow)) < 1e-4);

  a.zero_grad();
  b.zero_grad();
  auto fwd_sub = [&] { return sum(mul(sub(a, b), w)).value(); };
  backward(sum(mul(sub(a, b), w)));
  CHECK(max_rel_err(a.grad(), fd_gradient(fwd_sub, a)) < 1e-4);
  CHECK(max_rel_err(b.grad(), fd_gradient(fwd_sub, b)) < 1e-4);

  a.zero_grad();
  b.zero_grad();
  auto fwd_mul = [&] { return sum(mul(mul(a, b), w)).value(); };
  backward(sum(mul(mul(a, b), w)));
  CHECK(max_rel_err(a.grad(), fd_gradient(fwd_mul, a)) < 1e-4);
  CHECK(max_rel_err(b.grad(), fd_gradient(fwd_mul, b)) < 1e-4);

  a.zero_grad();
  auto fwd_scale = [&] { return sum(mul(scale(a, -1.7), w)).value(); };
  backward(sum(mul(scale(a, -1.7), w)));
  CHECK(max_rel_err(a.grad(), fd_gradient(fwd_scale, a)) < 1e-4);

  // embedding lookup
  Tensor table = random_tensor({5, 3}, rng);
  table.set_requires_grad(true);
  std::vector<int> ids{4, 0, 4, 2};
  Tensor we = random_tensor({4, 3}, rng);
  auto fwd_emb = [&] { return sum(mul(embedding_lookup(table, ids), we)).value(); };
  backward(sum(mul(embedding_lookup(table, ids), we)));
  CHECK(max_rel_err(table.grad(), fd_gradient(fwd_emb, table)) < 1e-4);
}

TEST_CASE("backward trivial gradients") {
  Tensor x = Tensor::from_values({4}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  backward(sum(x));
  CHECK(x.grad() == std::vector<double>{1, 1, 1, 1});

  x.zero_grad();
  backward(sum(mul(x, x)));
  CHECK(x.grad() == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("backward sums gradients over fan-out") {
  Tensor x = Tensor::from_values({3}, {1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  // two consumers: 2x and x^2; d/dx = 2 + 2x
  Tensor loss = add(sum(scale(x, 2.0)), sum(square(x)));
  backward(loss);
  for (int i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 + 2.0 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::zeros({3});
  x.set_requires_grad(true);
  CHECK_THROWS_AS(backward(add(x, x)), TensorError);
}

TEST_CASE("dropout keeps expectation and backprops its mask") {
  Rng rng(23);
  Tensor x = Tensor::constant({100, 10}, 1.0);
  x.set_requires_grad(true);
  Tensor y = dropout(x, 0.3, rng);
  double m = mean(y).value();
  CHECK(m == doctest::Approx(1.0).epsilon(0.1));
  backward(sum(y));
  // gradient equals the applied mask: zero where dropped, 1/keep where kept
  const auto& g = x.grad();
  for (int i = 0; i < x.size(); ++i) {
    const double yi = y.to_vector()[static_cast<size_t>(i)];
    CHECK(g[static_cast<size_t>(i)] == doctest::Approx(yi).epsilon(1e-12));
  }
  CHECK_THROWS_AS(dropout(x, 1.0, rng), TensorError);
}

TEST_CASE("rng streams are deterministic and serializable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(7);
  c.normal();
  const std::string hex = c.state_hex();
  const double next = c.normal();
  Rng d(0);
  d.set_state_hex(hex);
  CHECK(d.normal() == next);
}
