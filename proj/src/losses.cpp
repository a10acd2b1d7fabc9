#include "tdm/losses.hpp"

#include <stdexcept>
#include <string>

#include "tdm/pose_tensor.hpp"

namespace tdm {

namespace {

struct LossShapeError : TensorError {
  using TensorError::TensorError;
};

int checked_valid_frames(const Tensor& pred, const Tensor& target,
                         const std::vector<std::uint8_t>& mask) {
  if (pred.shape() != target.shape())
    throw LossShapeError("loss shape mismatch: pred " + shape_str(pred.shape()) +
                         " vs target " + shape_str(target.shape()));
  if (pred.rank() != 2)
    throw LossShapeError("loss expects F x (J*3) tensors, got " + shape_str(pred.shape()));
  if (static_cast<int>(mask.size()) != pred.dim(0))
    throw LossShapeError("mask length " + std::to_string(mask.size()) +
                         " does not match frame count " + std::to_string(pred.dim(0)));
  int n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  if (n == 0) throw LossShapeError("loss over a fully masked sequence is undefined");
  return n;
}

// constant F x width weight matrix: rows of valid frames get `value`, others 0
Tensor frame_weights(const std::vector<std::uint8_t>& mask, int width, double value) {
  const int frames = static_cast<int>(mask.size());
  std::vector<double> w(static_cast<size_t>(frames) * width, 0.0);
  for (int f = 0; f < frames; ++f) {
    if (!mask[f]) continue;
    for (int i = 0; i < width; ++i) w[static_cast<size_t>(f) * width + i] = value;
  }
  return Tensor::from_values({frames, width}, std::move(w));
}

}  // namespace

Tensor joint_loss(const Tensor& pred, const Tensor& target,
                  const std::vector<std::uint8_t>& mask, int joints) {
  const int valid = checked_valid_frames(pred, target, mask);
  if (pred.dim(1) != joints * 3)
    throw LossShapeError("joint_loss width " + std::to_string(pred.dim(1)) +
                         " does not match J*3=" + std::to_string(joints * 3));
  Tensor w = frame_weights(mask, pred.dim(1), 1.0 / (static_cast<double>(joints) * valid));
  return sum(mul(abs(sub(pred, target)), w));
}

Tensor bone_loss(const Tensor& pred, const Tensor& target,
                 const std::vector<std::uint8_t>& mask, const SkeletonTopology& topo) {
  const int valid = checked_valid_frames(pred, target, mask);
  if (pred.dim(1) != topo.joint_count() * 3)
    throw LossShapeError("bone_loss width " + std::to_string(pred.dim(1)) +
                         " does not match topology J*3=" +
                         std::to_string(topo.joint_count() * 3));
  const std::vector<int> body = body_bones(topo);
  if (body.empty()) return Tensor::scalar(0.0);

  const int frames = pred.dim(0);
  const int nb = static_cast<int>(body.size());
  std::vector<int> parent_cols, child_cols;
  parent_cols.reserve(static_cast<size_t>(nb) * 3);
  child_cols.reserve(static_cast<size_t>(nb) * 3);
  for (int b : body) {
    const auto& [p, c] = topo.bones[static_cast<size_t>(b)];
    for (int a = 0; a < 3; ++a) {
      parent_cols.push_back(p * 3 + a);
      child_cols.push_back(c * 3 + a);
    }
  }
  auto orientations = [&](const Tensor& pose) {
    Tensor delta = sub(gather_cols(pose, child_cols), gather_cols(pose, parent_cols));
    return normalize_rows(reshape(delta, {frames * nb, 3}));
  };
  Tensor diff = sub(orientations(pred), orientations(target));

  // per-row weight: mask[f] / (B_body * validF), replicated over bones and axes
  std::vector<std::uint8_t> row_mask(static_cast<size_t>(frames) * nb);
  for (int f = 0; f < frames; ++f)
    for (int b = 0; b < nb; ++b) row_mask[static_cast<size_t>(f) * nb + b] = mask[f];
  Tensor w = frame_weights(row_mask, 3, 1.0 / (static_cast<double>(nb) * valid));
  return sum(mul(square(diff), w));
}

LossTerms total_loss(const Tensor& pred, const Tensor& target,
                     const std::vector<std::uint8_t>& mask, const SkeletonTopology& topo,
                     double lambda) {
  if (lambda < 0.0)
    throw LossShapeError("lambda must be >= 0, got " + std::to_string(lambda));
  Tensor joint = joint_loss(pred, target, mask, topo.joint_count());
  Tensor bone = bone_loss(pred, target, mask, topo);
  return LossTerms{add(joint, scale(bone, lambda)), joint, bone};
}

double joint_loss(const PoseSequence& pred, const PoseSequence& target) {
  if (pred.joints != target.joints || pred.frames != target.frames ||
      pred.mask != target.mask)
    throw LossShapeError("pose sequences disagree in shape or mask");
  return joint_loss(pose_to_tensor(pred), pose_to_tensor(target), pred.mask,
                    pred.joints)
      .value();
}

double bone_loss(const PoseSequence& pred, const PoseSequence& target,
                 const SkeletonTopology& topo) {
  if (pred.joints != target.joints || pred.frames != target.frames ||
      pred.mask != target.mask)
    throw LossShapeError("pose sequences disagree in shape or mask");
  return bone_loss(pose_to_tensor(pred), pose_to_tensor(target), pred.mask,
                   topo)
      .value();
}

}  // namespace tdm
