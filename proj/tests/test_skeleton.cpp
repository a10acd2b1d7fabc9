#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tdm/rng.hpp"
#include "tdm/skeleton.hpp"

using namespace tdm;

namespace {

PoseSequence single_bone_pose(double px, double py, double pz, double cx, double cy,
                              double cz) {
  PoseSequence p = PoseSequence::zeros(1, 2);
  p.at(0, 0, 0) = px;
  p.at(0, 0, 1) = py;
  p.at(0, 0, 2) = pz;
  p.at(0, 1, 0) = cx;
  p.at(0, 1, 1) = cy;
  p.at(0, 1, 2) = cz;
  return p;
}

SkeletonTopology two_joint_topo() {
  SkeletonTopology t;
  t.joint_names = {"parent", "child"};
  t.bones = {{0, 1}};
  t.validate();
  return t;
}

}  // namespace

TEST_CASE("bone orientation axis-aligned and 3-4-5 cases") {
  const SkeletonTopology topo = two_joint_topo();
  auto o1 = bone_orientations(single_bone_pose(0, 0, 0, 1, 0, 0), topo);
  CHECK(o1.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(o1.at(0, 0, 1) == 0.0);
  CHECK(o1.at(0, 0, 2) == 0.0);

  auto o2 = bone_orientations(single_bone_pose(0, 0, 0, 0, 3, 4), topo);
  CHECK(o2.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(o2.at(0, 0, 1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(o2.at(0, 0, 2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(o2.degenerate.empty());
}

TEST_CASE("degenerate bone yields zero vector and is reported") {
  const SkeletonTopology topo = two_joint_topo();
  auto o = bone_orientations(single_bone_pose(0.5, 0.5, 0.5, 0.5, 0.5, 0.5), topo);
  for (int a = 0; a < 3; ++a) CHECK(o.at(0, 0, a) == 0.0);
  REQUIRE(o.degenerate.size() == 1);
  CHECK(o.degenerate[0] == std::pair<int, int>{0, 0});
}

TEST_CASE("orientations are unit, translation- and scale-invariant") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  Rng rng(99);
  PoseSequence pose = PoseSequence::zeros(4, topo.joint_count());
  // dyadic grid keeps the later offset additions exact in double precision
  for (double& c : pose.coords) c = static_cast<double>(rng.uniform_int(-1024, 1024)) / 1024.0;

  auto base = bone_orientations(pose, topo);
  for (int f = 0; f < base.frames; ++f)
    for (int b = 0; b < base.bones; ++b) {
      const double n = std::sqrt(base.at(f, b, 0) * base.at(f, b, 0) +
                                 base.at(f, b, 1) * base.at(f, b, 1) +
                                 base.at(f, b, 2) * base.at(f, b, 2));
      CHECK(std::fabs(n - 1.0) < 1e-12);
    }

  PoseSequence shifted = pose;
  for (size_t i = 0; i < shifted.coords.size(); ++i)
    shifted.coords[i] += (i % 3 == 0 ? 17.5 : (i % 3 == 1 ? -4.25 : 2.5));
  auto moved = bone_orientations(shifted, topo);
  CHECK(moved.dirs == base.dirs);  // exact: representable offsets cancel in child - parent

  PoseSequence scaled = pose;
  for (double& c : scaled.coords) c *= 7.0;
  auto bigger = bone_orientations(scaled, topo);
  for (size_t i = 0; i < base.dirs.size(); ++i)
    CHECK(bigger.dirs[i] == doctest::Approx(base.dirs[i]).epsilon(1e-12));
}

TEST_CASE("body_bones excludes any bone touching a face joint") {
  SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  const auto body = body_bones(topo);
  // bones 7..9 touch nose/eyes
  CHECK(body == std::vector<int>{0, 1, 2, 3, 4, 5, 6});

  topo.face_joints.clear();
  CHECK(body_bones(topo).size() == static_cast<size_t>(topo.bone_count()));

  SkeletonTopology all_face = SkeletonTopology::toy_upper_body();
  all_face.face_joints.clear();
  for (int j = 0; j < all_face.joint_count(); ++j) all_face.face_joints.push_back(j);
  CHECK(body_bones(all_face).empty());
}

TEST_CASE("pose/topology joint mismatch raises") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  PoseSequence p = PoseSequence::zeros(2, 4);
  CHECK_THROWS_AS(bone_orientations(p, topo), SkeletonError);
  CHECK_THROWS_AS(p.validate(topo), SkeletonError);
}

TEST_CASE("skeleton config round-trips and reports line-precise errors") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  const std::string path = "test_skeleton_roundtrip.txt";
  topo.save(path);
  const SkeletonTopology loaded = SkeletonTopology::load(path);
  CHECK(loaded.joint_names == topo.joint_names);
  CHECK(loaded.bones == topo.bones);
  CHECK(loaded.face_joints == topo.face_joints);
  std::remove(path.c_str());

  const std::string bad = "test_skeleton_bad.txt";
  {
    std::ofstream out(bad);
    out << "joint a\n";
    out << "# comment line\n";
    out << "bone a missing_joint\n";
  }
  try {
    SkeletonTopology::load(bad);
    FAIL("expected SkeletonError");
  } catch (const SkeletonError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":3:") != std::string::npos);  // the offending line
    CHECK(msg.find("missing_joint") != std::string::npos);
  }
  std::remove(bad.c_str());
}
