#pragma once

#include <cstdint>
#include <vector>

#include "tdm/skeleton.hpp"
#include "tdm/tensor.hpp"

namespace tdm {

// Mean over valid frames of (1/J) * sum over joints and axes of the absolute
// coordinate difference. pred/target are F x (J*3); mask has F entries.
Tensor joint_loss(const Tensor& pred, const Tensor& target,
                  const std::vector<std::uint8_t>& mask, int joints);

// Mean over valid frames of (1/B_body) * squared Euclidean distance between
// unit bone orientations, body bones only. Zero when no body bones exist.
Tensor bone_loss(const Tensor& pred, const Tensor& target,
                 const std::vector<std::uint8_t>& mask, const SkeletonTopology& topo);

struct LossTerms {
  Tensor total;  // joint + lambda * bone, differentiable
  Tensor joint;
  Tensor bone;
};

LossTerms total_loss(const Tensor& pred, const Tensor& target,
                     const std::vector<std::uint8_t>& mask, const SkeletonTopology& topo,
                     double lambda);

// plain-value conveniences over PoseSequence
double joint_loss(const PoseSequence& pred, const PoseSequence& target);
double bone_loss(const PoseSequence& pred, const PoseSequence& target,
                 const SkeletonTopology& topo);

}  // namespace tdm
