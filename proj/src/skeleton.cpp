#include "tdm/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace tdm {

bool SkeletonTopology::is_face_joint(int j) const {
  return std::binary_search(face_joints.begin(), face_joints.end(), j);
}

int SkeletonTopology::joint_index(const std::string& name) const {
  for (size_t i = 0; i < joint_names.size(); ++i)
    if (joint_names[i] == name) return static_cast<int>(i);
  return -1;
}

void SkeletonTopology::validate() const {
  const int j = joint_count();
  if (j == 0) throw SkeletonError("topology has no joints");
  std::set<std::string> names(joint_names.begin(), joint_names.end());
  if (static_cast<int>(names.size()) != j)
    throw SkeletonError("duplicate joint names in topology");
  std::set<std::pair<int, int>> seen;
  for (const auto& [parent, child] : bones) {
    if (parent < 0 || parent >= j || child < 0 || child >= j)
      throw SkeletonError("bone endpoint index out of range: (" + std::to_string(parent) +
                          "," + std::to_string(child) + ") with " + std::to_string(j) +
                          " joints");
    if (parent == child)
      throw SkeletonError("bone connects joint " + std::to_string(parent) + " to itself");
    if (!seen.insert({parent, child}).second)
      throw SkeletonError("duplicate bone (" + std::to_string(parent) + "," +
                          std::to_string(child) + ")");
  }
  for (int f : face_joints)
    if (f < 0 || f >= j)
      throw SkeletonError("face joint index " + std::to_string(f) + " out of range");
}

SkeletonTopology SkeletonTopology::toy_upper_body() {
  SkeletonTopology t;
  t.joint_names = {"head",    "neck",    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
                   "r_elbow", "r_wrist", "nose",       "l_eye",   "r_eye"};
  auto idx = [&](const char* n) { return t.joint_index(n); };
  t.bones = {
      {idx("neck"), idx("head")},
      {idx("neck"), idx("l_shoulder")},
      {idx("l_shoulder"), idx("l_elbow")},
      {idx("l_elbow"), idx("l_wrist")},
      {idx("neck"), idx("r_shoulder")},
      {idx("r_shoulder"), idx("r_elbow")},
      {idx("r_elbow"), idx("r_wrist")},
      {idx("head"), idx("nose")},
      {idx("head"), idx("l_eye")},
      {idx("head"), idx("r_eye")},
  };
  t.face_joints = {idx("nose"), idx("l_eye"), idx("r_eye")};
  std::sort(t.face_joints.begin(), t.face_joints.end());
  t.validate();
  return t;
}

SkeletonTopology SkeletonTopology::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SkeletonError("cannot open skeleton config '" + path + "'");
  SkeletonTopology t;
  std::vector<std::pair<std::string, std::string>> bone_names;  // resolved after joints
  std::vector<std::string> face_names;
  std::vector<int> bone_lines, face_lines;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg, int at) {
    throw SkeletonError(path + ":" + std::to_string(at) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;  // blank
    if (kw == "joint") {
      std::string name, extra;
      if (!(ls >> name)) fail("joint directive needs a name", lineno);
      if (ls >> extra) fail("joint directive takes exactly one name", lineno);
      if (t.joint_index(name) >= 0) fail("duplicate joint '" + name + "'", lineno);
      t.joint_names.push_back(name);
    } else if (kw == "bone") {
      std::string parent, child, extra;
      if (!(ls >> parent >> child)) fail("bone directive needs parent and child names", lineno);
      if (ls >> extra) fail("bone directive takes exactly two names", lineno);
      bone_names.emplace_back(parent, child);
      bone_lines.push_back(lineno);
    } else if (kw == "face") {
      std::string name, extra;
      if (!(ls >> name)) fail("face directive needs a joint name", lineno);
      if (ls >> extra) fail("face directive takes exactly one name", lineno);
      face_names.push_back(name);
      face_lines.push_back(lineno);
    } else {
      fail("unknown directive '" + kw + "'", lineno);
    }
  }
  for (size_t i = 0; i < bone_names.size(); ++i) {
    const int p = t.joint_index(bone_names[i].first);
    const int c = t.joint_index(bone_names[i].second);
    if (p < 0) fail("bone references unknown joint '" + bone_names[i].first + "'", bone_lines[i]);
    if (c < 0) fail("bone references unknown joint '" + bone_names[i].second + "'", bone_lines[i]);
    t.bones.emplace_back(p, c);
  }
  for (size_t i = 0; i < face_names.size(); ++i) {
    const int j = t.joint_index(face_names[i]);
    if (j < 0) fail("face references unknown joint '" + face_names[i] + "'", face_lines[i]);
    t.face_joints.push_back(j);
  }
  std::sort(t.face_joints.begin(), t.face_joints.end());
  t.face_joints.erase(std::unique(t.face_joints.begin(), t.face_joints.end()),
                      t.face_joints.end());
  try {
    t.validate();
  } catch (const SkeletonError& e) {
    throw SkeletonError(path + ": " + e.what());
  }
  return t;
}

void SkeletonTopology::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw SkeletonError("cannot write skeleton config '" + path + "'");
  for (const auto& n : joint_names) out << "joint " << n << "\n";
  for (const auto& [p, c] : bones)
    out << "bone " << joint_names[p] << " " << joint_names[c] << "\n";
  for (int f : face_joints) out << "face " << joint_names[f] << "\n";
}

std::vector<int> body_bones(const SkeletonTopology& topo) {
  std::vector<int> out;
  for (int b = 0; b < topo.bone_count(); ++b) {
    const auto& [p, c] = topo.bones[b];
    if (!topo.is_face_joint(p) && !topo.is_face_joint(c)) out.push_back(b);
  }
  return out;
}

PoseSequence PoseSequence::zeros(int frames, int joints) {
  if (frames < 1 || joints < 1)
    throw SkeletonError("pose sequence needs at least one frame and one joint");
  PoseSequence p;
  p.frames = frames;
  p.joints = joints;
  p.coords.assign(static_cast<size_t>(frames) * joints * 3, 0.0);
  p.mask.assign(frames, 1);
  return p;
}

double& PoseSequence::at(int f, int j, int axis) {
  return coords[(static_cast<size_t>(f) * joints + j) * 3 + axis];
}

double PoseSequence::at(int f, int j, int axis) const {
  return coords[(static_cast<size_t>(f) * joints + j) * 3 + axis];
}

int PoseSequence::valid_frame_count() const {
  int n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

void PoseSequence::validate(const SkeletonTopology& topo) const {
  if (frames < 1) throw SkeletonError("pose sequence has no frames");
  if (joints != topo.joint_count())
    throw SkeletonError("pose has " + std::to_string(joints) + " joints, topology has " +
                        std::to_string(topo.joint_count()));
  if (coords.size() != static_cast<size_t>(frames) * joints * 3)
    throw SkeletonError("pose coordinate count does not match frames*joints*3");
  if (mask.size() != static_cast<size_t>(frames))
    throw SkeletonError("pose mask length does not match frame count");
  for (int f = 0; f < frames; ++f) {
    if (!mask[f]) continue;
    for (int j = 0; j < joints; ++j)
      for (int a = 0; a < 3; ++a)
        if (!std::isfinite(at(f, j, a)))
          throw SkeletonError("non-finite coordinate at frame " + std::to_string(f) +
                              ", joint " + std::to_string(j));
  }
}

BoneOrientations bone_orientations(const PoseSequence& pose, const SkeletonTopology& topo) {
  if (pose.joints != topo.joint_count())
    throw SkeletonError("pose has " + std::to_string(pose.joints) +
                        " joints, topology has " + std::to_string(topo.joint_count()));
  BoneOrientations out;
  out.frames = pose.frames;
  out.bones = topo.bone_count();
  out.dirs.assign(static_cast<size_t>(out.frames) * out.bones * 3, 0.0);
  for (int f = 0; f < pose.frames; ++f) {
    for (int b = 0; b < out.bones; ++b) {
      const auto& [p, c] = topo.bones[b];
      double v[3];
      for (int a = 0; a < 3; ++a) v[a] = pose.at(f, c, a) - pose.at(f, p, a);
      const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      const size_t base = (static_cast<size_t>(f) * out.bones + b) * 3;
      if (norm == 0.0) {
        out.degenerate.emplace_back(f, b);
        continue;  // stays zero
      }
      for (int a = 0; a < 3; ++a) out.dirs[base + a] = v[a] / norm;
    }
  }
  return out;
}

}  // namespace tdm
