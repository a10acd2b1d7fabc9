#include "tdm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tdm/denoiser.hpp"
#include "tdm/losses.hpp"
#include "tdm/pose_tensor.hpp"
#include "tdm/rng.hpp"
#include "tdm/skeleton.hpp"
#include "tdm/tensor.hpp"

namespace tdm {

namespace {

constexpr double kStep = 1e-6;

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-3});
}

// FD over every entry of `leaf` against its freshly computed backward grad
double check_leaf(const std::function<Tensor()>& forward, Tensor leaf) {
  backward(forward());
  const std::vector<double> analytic = leaf.grad();
  double worst = 0.0;
  double* x = leaf.data();
  for (int i = 0; i < leaf.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + kStep;
    const double fp = forward().value();
    x[i] = orig - kStep;
    const double fm = forward().value();
    x[i] = orig;
    worst = std::max(worst, rel_err(analytic[static_cast<size_t>(i)],
                                    (fp - fm) / (2.0 * kStep)));
  }
  return worst;
}

Tensor rand2d(int r, int c, Rng& rng, double margin = 0.0) {
  Tensor t = Tensor::uniform({r, c}, -2.0, 2.0, rng);
  if (margin > 0.0) {
    double* p = t.data();
    for (int i = 0; i < t.size(); ++i)
      if (std::fabs(p[i]) < margin) p[i] = p[i] < 0.0 ? -margin : margin;
  }
  return t;
}

SkeletonTopology tiny_topology() {
  SkeletonTopology topo;
  topo.joint_names = {"root", "mid", "tip", "marker"};
  topo.bones = {{0, 1}, {1, 2}, {2, 3}};
  topo.face_joints = {3};  // keeps the face-exclusion path active
  topo.validate();
  return topo;
}

}  // namespace

GradCheckEntry end_to_end_gradient_check(std::uint64_t seed, int n_params,
                                         double tolerance) {
  const SkeletonTopology topo = tiny_topology();
  DenoiserConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.model_dim = 16;
  cfg.ffn_dim = 32;
  cfg.max_positions = 64;
  Rng rng(seed);
  Denoiser model(cfg, 8, topo.joint_count(), rng);

  const int frames = 3;
  const std::vector<int> tokens{3, 5, 4};
  const int total_steps = 50;
  const int t = 25;
  PoseSequence noisy = PoseSequence::zeros(frames, topo.joint_count());
  PoseSequence target = PoseSequence::zeros(frames, topo.joint_count());
  for (auto* p : {&noisy, &target})
    for (double& c : p->coords) c = rng.uniform(-1.0, 1.0);

  auto forward = [&] {
    const Condition cond = model.condition(tokens, t, total_steps);
    Tensor pred = model.denoise(pose_to_tensor(noisy), cond, &noisy.mask);
    return total_loss(pred, pose_to_tensor(target), noisy.mask, topo, 0.1).total;
  };

  backward(forward());
  auto& params = model.parameters();
  std::vector<std::vector<double>> analytic(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    analytic[i] = params[i].second.has_grad()
                      ? params[i].second.grad()
                      : std::vector<double>(static_cast<size_t>(params[i].second.size()), 0.0);

  GradCheckEntry entry;
  entry.name = "end_to_end_denoiser_loss";
  for (int k = 0; k < n_params; ++k) {
    const size_t pi = static_cast<size_t>(rng.uniform_int(0, static_cast<long>(params.size()) - 1));
    Tensor param = params[pi].second;
    const int ei = static_cast<int>(rng.uniform_int(0, param.size() - 1));
    double* x = param.data();
    const double orig = x[ei];
    x[ei] = orig + kStep;
    const double fp = forward().value();
    x[ei] = orig - kStep;
    const double fm = forward().value();
    x[ei] = orig;
    const double fd = (fp - fm) / (2.0 * kStep);
    entry.max_rel_err =
        std::max(entry.max_rel_err, rel_err(analytic[pi][static_cast<size_t>(ei)], fd));
  }
  entry.pass = entry.max_rel_err < tolerance;
  return entry;
}

GradCheckReport run_gradcheck(std::uint64_t seed, double tolerance, double inject_error,
                              int end_to_end_params) {
  Rng rng(seed);
  GradCheckReport report;
  report.tolerance = tolerance;

  auto record = [&](const std::string& name, double max_rel) {
    GradCheckEntry e;
    e.name = name;
    e.max_rel_err = max_rel + std::fabs(inject_error);
    e.pass = e.max_rel_err < tolerance;
    report.entries.push_back(std::move(e));
  };

  {
    Tensor a = rand2d(3, 4, rng), b = rand2d(4, 2, rng), w = rand2d(3, 2, rng);
    a.set_requires_grad(true);
    record("matmul", check_leaf([&] { return sum(mul(matmul(a, b), w)); }, a));
  }
  {
    Tensor x = rand2d(3, 5, rng), w = rand2d(3, 5, rng);
    x.set_requires_grad(true);
    record("softmax", check_leaf([&] { return sum(mul(softmax(x, 1), w)); }, x));
    std::vector<std::uint8_t> keep{1, 1, 0, 1, 0};
    record("softmax_masked",
           check_leaf([&] { return sum(mul(softmax_masked(x, 1, keep), w)); }, x));
  }
  {
    Tensor x = rand2d(4, 6, rng), g = rand2d(1, 6, rng, 0.2), b = rand2d(1, 6, rng);
    Tensor w = rand2d(4, 6, rng);
    x.set_requires_grad(true);
    g.set_requires_grad(true);
    auto fwd = [&] {
      return sum(mul(layer_norm(x, reshape(g, {6}), reshape(b, {6})), w));
    };
    record("layer_norm.x", check_leaf(fwd, x));
    record("layer_norm.gain", check_leaf(fwd, g));
  }
  {
    Tensor x = rand2d(3, 4, rng, 0.05), w = rand2d(3, 4, rng);
    x.set_requires_grad(true);
    record("relu", check_leaf([&] { return sum(mul(relu(x), w)); }, x));
    record("gelu", check_leaf([&] { return sum(mul(gelu(x), w)); }, x));
    record("abs", check_leaf([&] { return sum(mul(tdm::abs(x), w)); }, x));
    record("square", check_leaf([&] { return sum(mul(square(x), w)); }, x));
    record("mean", check_leaf([&] { return mean(mul(x, w)); }, x));
    record("transpose",
           check_leaf([&] { return sum(mul(transpose(x), transpose(w))); }, x));
    record("reshape", check_leaf([&] { return sum(mul(reshape(x, {4, 3}), reshape(w, {4, 3}))); }, x));
    record("gather_cols",
           check_leaf([&] { return sum(gather_cols(x, {0, 2, 2, 3})); }, x));
    record("concat", check_leaf(
                         [&] {
                           return sum(mul(concat({slice_cols(x, 0, 2), slice_cols(x, 2, 2)}, 1), w));
                         },
                         x));
    record("normalize_rows",
           check_leaf([&] { return sum(mul(normalize_rows(x), w)); }, x));
  }
  {
    Tensor a = rand2d(3, 4, rng), b = rand2d(3, 4, rng), w = rand2d(3, 4, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    record("add", check_leaf([&] { return sum(mul(add(a, b), w)); }, a));
    record("sub", check_leaf([&] { return sum(mul(sub(a, b), w)); }, b));
    record("mul", check_leaf([&] { return sum(mul(mul(a, b), w)); }, a));
    record("scale", check_leaf([&] { return sum(mul(scale(a, 1.4), w)); }, a));
  }
  {
    Tensor table = rand2d(6, 4, rng), w = rand2d(3, 4, rng);
    table.set_requires_grad(true);
    const std::vector<int> ids{5, 1, 5};
    record("embedding_lookup",
           check_leaf([&] { return sum(mul(embedding_lookup(table, ids), w)); }, table));
  }
  {
    // single attention block, gradients through the query projection
    Tensor x = rand2d(4, 8, rng), w = rand2d(4, 8, rng);
    AttentionWeights aw{rand2d(8, 8, rng), rand2d(8, 8, rng), rand2d(8, 8, rng),
                        rand2d(8, 8, rng)};
    aw.wq.set_requires_grad(true);
    record("attention",
           check_leaf([&] { return sum(mul(attention(x, x, x, 2, aw), w)); }, aw.wq));
  }
  {
    GradCheckEntry e = end_to_end_gradient_check(rng.next_u64(), end_to_end_params, tolerance);
    e.max_rel_err += std::fabs(inject_error);
    e.pass = e.max_rel_err < tolerance;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace tdm
