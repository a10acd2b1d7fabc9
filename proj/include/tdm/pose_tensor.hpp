#pragma once

#include "tdm/skeleton.hpp"
#include "tdm/tensor.hpp"

namespace tdm {

// flatten pose frames into an F x (J*3) constant tensor
inline Tensor pose_to_tensor(const PoseSequence& pose) {
  return Tensor::from_values({pose.frames, pose.joints * 3}, pose.coords);
}

inline PoseSequence tensor_to_pose(const Tensor& t, int joints,
                                   const std::vector<std::uint8_t>& mask) {
  if (t.rank() != 2 || t.dim(1) != joints * 3)
    throw TensorError("tensor shape " + shape_str(t.shape()) +
                      " is not F x (J*3) for J=" + std::to_string(joints));
  PoseSequence p;
  p.frames = t.dim(0);
  p.joints = joints;
  p.coords = t.to_vector();
  p.mask = mask;
  if (p.mask.empty()) p.mask.assign(static_cast<size_t>(p.frames), 1);
  if (static_cast<int>(p.mask.size()) != p.frames)
    throw TensorError("mask length does not match frame count");
  return p;
}

}  // namespace tdm
