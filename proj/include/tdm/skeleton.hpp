#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tdm {

struct SkeletonError : std::runtime_error {
  explicit SkeletonError(const std::string& msg) : std::runtime_error(msg) {}
};

// Joint list, parent->child bone edges, and the face-joint subset. Immutable
// after construction.
struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<std::pair<int, int>> bones;  // (parent, child)
  std::vector<int> face_joints;            // sorted, unique

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  int bone_count() const { return static_cast<int>(bones.size()); }
  bool is_face_joint(int j) const;
  int joint_index(const std::string& name) const;  // -1 when absent

  // duplicate-free bones, indices in range, parent != child
  void validate() const;

  // 11-joint upper body: head/neck, two arms, three face landmarks
  static SkeletonTopology toy_upper_body();

  // Line-oriented config: "joint <name>" / "bone <parent> <child>" /
  // "face <name>", with '#' comments. Errors carry line numbers.
  static SkeletonTopology load(const std::string& path);
  void save(const std::string& path) const;
};

// bones whose endpoints are both outside face_joints
std::vector<int> body_bones(const SkeletonTopology& topo);

// F frames x J joints x 3 coordinates plus per-frame validity mask.
struct PoseSequence {
  int frames = 0;
  int joints = 0;
  std::vector<double> coords;        // frames*joints*3, row-major
  std::vector<std::uint8_t> mask;    // frames entries, 1 = valid

  static PoseSequence zeros(int frames, int joints);

  double& at(int f, int j, int axis);
  double at(int f, int j, int axis) const;
  int valid_frame_count() const;

  // coords finite wherever mask is true; F >= 1; J matches topology
  void validate(const SkeletonTopology& topo) const;
};

struct BoneOrientations {
  int frames = 0;
  int bones = 0;
  std::vector<double> dirs;  // frames*bones*3 unit vectors (zero when degenerate)
  std::vector<std::pair<int, int>> degenerate;  // (frame, bone) of zero-length bones

  double at(int f, int b, int axis) const {
    return dirs[(static_cast<size_t>(f) * bones + b) * 3 + axis];
  }
};

// Per frame and bone: (child - parent) / ||child - parent||. Zero-length
// bones yield the zero vector and are reported in `degenerate`.
BoneOrientations bone_orientations(const PoseSequence& pose, const SkeletonTopology& topo);

}  // namespace tdm
