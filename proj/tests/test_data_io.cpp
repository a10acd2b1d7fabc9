#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "tdm/data_io.hpp"

using namespace tdm;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
  void write(const std::string& contents) const {
    std::ofstream out(path);
    out << contents;
  }
};

}  // namespace

TEST_CASE("synthetic corpus is deterministic and well-ranged") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  const Dataset a = generate_synthetic(5, 12, topo, 10, 3);
  const Dataset b = generate_synthetic(5, 12, topo, 10, 3);
  REQUIRE(a.size() == 12);
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].tokens == b.samples[i].tokens);
    CHECK(a.samples[i].pose.coords == b.samples[i].pose.coords);  // bit-identical
    for (double c : a.samples[i].pose.coords) {
      CHECK(std::isfinite(c));
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
    }
    CHECK(a.samples[i].pose.frames == 4 * static_cast<int>(a.samples[i].tokens.size()));
  }
}

TEST_CASE("identical token sequences map to identical poses, distinct to distinct") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  const Dataset ds = generate_synthetic(11, 40, topo, 6, 2);
  std::set<std::vector<std::string>> seen_tokens;
  for (int i = 0; i < ds.size(); ++i)
    for (int j = i + 1; j < ds.size(); ++j) {
      if (ds.samples[i].tokens == ds.samples[j].tokens) {
        CHECK(ds.samples[i].pose.coords == ds.samples[j].pose.coords);
      } else {
        CHECK(ds.samples[i].pose.coords != ds.samples[j].pose.coords);
      }
    }
}

TEST_CASE("dataset save -> load round-trip is the identity") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  Dataset ds = generate_synthetic(3, 6, topo, 8, 3);
  ds.samples[2].pose.mask[0] = 0;  // exercise the mask branch
  TempFile file("test_dataset_roundtrip.jsonl");
  save_dataset(file.path, ds);
  const Dataset loaded = load_dataset(file.path, nullptr, topo);
  REQUIRE(loaded.size() == ds.size());
  for (int i = 0; i < ds.size(); ++i) {
    CHECK(loaded.samples[i].id == ds.samples[i].id);
    CHECK(loaded.samples[i].tokens == ds.samples[i].tokens);
    CHECK(loaded.samples[i].pose.coords == ds.samples[i].pose.coords);  // exact doubles
    CHECK(loaded.samples[i].pose.mask == ds.samples[i].pose.mask);
  }
}

TEST_CASE("empty file loads as an empty dataset with a warning") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  TempFile file("test_dataset_empty.jsonl");
  file.write("");
  const Dataset ds = load_dataset(file.path, nullptr, topo);
  CHECK(ds.empty());
  REQUIRE(ds.warnings.size() == 1);
}

TEST_CASE("vocabulary built from a dataset is sorted and deduplicated") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  Dataset ds;
  SamplePair s;
  s.id = "a";
  s.tokens = {"zebra", "apfel", "zebra"};
  s.pose = PoseSequence::zeros(1, topo.joint_count());
  ds.samples.push_back(s);
  const Vocabulary v = build_vocabulary(ds);
  CHECK(v.size() == 5);
  CHECK(v.id("apfel") == 3);
  CHECK(v.id("zebra") == 4);
}

TEST_CASE("loader rejects every invariant-violating record with a distinct category") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();  // J = 11
  const Vocabulary vocab = Vocabulary::with_tokens({"w0", "w1"});

  auto coords = [&](int frames, int joints) {
    std::string s = "[";
    const int n = frames * joints * 3;
    for (int i = 0; i < n; ++i) s += (i ? ",0.5" : "0.5");
    return s + "]";
  };

  const std::vector<std::pair<std::string, DatasetErrorKind>> corpus = {
      {"{not json", DatasetErrorKind::kParse},
      {"[1,2,3]", DatasetErrorKind::kParse},
      {R"({"tokens":["w0"],"frames":1,"coords":)" + coords(1, 11) + "}",
       DatasetErrorKind::kSchema},  // missing id
      {R"({"id":"x","tokens":"w0","frames":1,"coords":)" + coords(1, 11) + "}",
       DatasetErrorKind::kSchema},  // tokens wrong type
      {R"({"id":"x","tokens":[],"frames":1,"coords":)" + coords(1, 11) + "}",
       DatasetErrorKind::kEmptyTokens},
      {R"({"id":"x","tokens":["nope"],"frames":1,"coords":)" + coords(1, 11) + "}",
       DatasetErrorKind::kUnknownToken},
      {R"({"id":"x","tokens":["w0"],"frames":0,"coords":[]})",
       DatasetErrorKind::kBadFrameCount},
      {R"({"id":"x","tokens":["w0"],"frames":2,"coords":)" + coords(1, 11) + "}",
       DatasetErrorKind::kBadFrameCount},  // truncated coords
      {R"({"id":"x","tokens":["w0"],"frames":1,"coords":)" + coords(1, 7) + "}",
       DatasetErrorKind::kJointMismatch},
      {R"({"id":"x","tokens":["w0"],"frames":1,"mask":[true,false],"coords":)" +
           coords(1, 11) + "}",
       DatasetErrorKind::kMaskMismatch},
      {R"({"id":"x","tokens":["w0"],"frames":1,"mask":[false],"coords":)" + coords(1, 11) +
           "}",
       DatasetErrorKind::kMaskMismatch},
  };

  TempFile file("test_dataset_fuzz.jsonl");
  int rejected = 0;
  for (const auto& [record, kind] : corpus) {
    file.write(record + "\n");
    try {
      load_dataset(file.path, &vocab, topo);
      FAIL("record was accepted: ", record);
    } catch (const DatasetError& e) {
      ++rejected;
      CHECK(e.kind == kind);
      CHECK(e.line == 1);
    }
  }
  CHECK(rejected == static_cast<int>(corpus.size()));
}

TEST_CASE("loader reports the line number of a deep record and duplicate ids") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  std::string good =
      R"({"id":"ok","tokens":["w0"],"frames":1,"coords":[)";
  for (int i = 0; i < 33; ++i) good += (i ? ",0.1" : "0.1");
  good += "]}";

  TempFile file("test_dataset_lines.jsonl");
  file.write(good + "\n" + good + "\n");
  try {
    load_dataset(file.path, nullptr, topo);
    FAIL("duplicate id accepted");
  } catch (const DatasetError& e) {
    CHECK(e.kind == DatasetErrorKind::kDuplicateId);
    CHECK(e.line == 2);
    CHECK(e.id == "ok");
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("record with a joint mismatch names the record id") {
  const SkeletonTopology topo = SkeletonTopology::toy_upper_body();
  std::string rec = R"({"id":"strange","tokens":["w0"],"frames":1,"coords":[)";
  for (int i = 0; i < 12; ++i) rec += (i ? ",0.1" : "0.1");
  rec += "]}";
  TempFile file("test_dataset_jmis.jsonl");
  file.write(rec + "\n");
  try {
    load_dataset(file.path, nullptr, topo);
    FAIL("expected joint mismatch");
  } catch (const DatasetError& e) {
    CHECK(e.kind == DatasetErrorKind::kJointMismatch);
    CHECK(std::string(e.what()).find("strange") != std::string::npos);
  }
}
