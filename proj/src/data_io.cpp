#include "tdm/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tdm/rng.hpp"

namespace tdm {

using nlohmann::json;

const char* to_string(DatasetErrorKind kind) {
  switch (kind) {
    case DatasetErrorKind::kParse: return "parse";
    case DatasetErrorKind::kSchema: return "schema";
    case DatasetErrorKind::kEmptyTokens: return "empty_tokens";
    case DatasetErrorKind::kUnknownToken: return "unknown_token";
    case DatasetErrorKind::kBadFrameCount: return "bad_frame_count";
    case DatasetErrorKind::kJointMismatch: return "joint_mismatch";
    case DatasetErrorKind::kNonFinite: return "non_finite";
    case DatasetErrorKind::kMaskMismatch: return "mask_mismatch";
    case DatasetErrorKind::kDuplicateId: return "duplicate_id";
  }
  return "unknown";
}

DatasetError::DatasetError(DatasetErrorKind kind_, int line_, const std::string& id_,
                           const std::string& msg)
    : std::runtime_error("line " + std::to_string(line_) +
                         (id_.empty() ? "" : " (record '" + id_ + "')") + ": [" +
                         to_string(kind_) + "] " + msg),
      kind(kind_),
      line(line_),
      id(id_) {}

namespace {

SamplePair parse_record(const std::string& line, int lineno, const Vocabulary* vocab,
                        const SkeletonTopology& topo) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::exception& e) {
    throw DatasetError(DatasetErrorKind::kParse, lineno, "", e.what());
  }
  if (!rec.is_object())
    throw DatasetError(DatasetErrorKind::kParse, lineno, "", "record is not a JSON object");

  auto require = [&](const char* field, json::value_t type, const std::string& id) -> const json& {
    if (!rec.contains(field))
      throw DatasetError(DatasetErrorKind::kSchema, lineno, id,
                         std::string("missing field '") + field + "'");
    const json& v = rec[field];
    const bool ok =
        v.type() == type ||
        (type == json::value_t::number_integer &&
         (v.is_number_integer() || v.is_number_unsigned()));
    if (!ok)
      throw DatasetError(DatasetErrorKind::kSchema, lineno, id,
                         std::string("field '") + field + "' has the wrong type");
    return v;
  };

  const std::string id = require("id", json::value_t::string, "").get<std::string>();
  if (id.empty())
    throw DatasetError(DatasetErrorKind::kSchema, lineno, id, "empty record id");

  SamplePair sample;
  sample.id = id;

  const json& jtokens = require("tokens", json::value_t::array, id);
  for (const auto& t : jtokens) {
    if (!t.is_string())
      throw DatasetError(DatasetErrorKind::kSchema, lineno, id, "tokens must be strings");
    sample.tokens.push_back(t.get<std::string>());
  }
  if (sample.tokens.empty())
    throw DatasetError(DatasetErrorKind::kEmptyTokens, lineno, id, "token list is empty");
  if (vocab) {
    for (const auto& t : sample.tokens) {
      const int tid = vocab->id(t);
      if (tid < 0)
        throw DatasetError(DatasetErrorKind::kUnknownToken, lineno, id,
                           "token '" + t + "' not in vocabulary");
      sample.token_ids.push_back(tid);
    }
  }

  const long frames = require("frames", json::value_t::number_integer, id).get<long>();
  if (frames < 1)
    throw DatasetError(DatasetErrorKind::kBadFrameCount, lineno, id,
                       "frames must be >= 1, got " + std::to_string(frames));

  const json& jcoords = require("coords", json::value_t::array, id);
  const int joints = topo.joint_count();
  const size_t expect = static_cast<size_t>(frames) * joints * 3;
  if (jcoords.size() != expect) {
    // count consistent with the frame count but a different joint total
    if (!jcoords.empty() && jcoords.size() % (static_cast<size_t>(frames) * 3) == 0)
      throw DatasetError(DatasetErrorKind::kJointMismatch, lineno, id,
                         "coords imply " + std::to_string(jcoords.size() / frames / 3) +
                             " joints, topology has " + std::to_string(joints));
    throw DatasetError(DatasetErrorKind::kBadFrameCount, lineno, id,
                       "expected " + std::to_string(expect) + " coords (" +
                           std::to_string(frames) + "x" + std::to_string(joints) +
                           "x3), got " + std::to_string(jcoords.size()));
  }

  sample.pose.frames = static_cast<int>(frames);
  sample.pose.joints = joints;
  sample.pose.coords.reserve(expect);
  for (const auto& c : jcoords) {
    if (!c.is_number())
      throw DatasetError(DatasetErrorKind::kSchema, lineno, id, "coords must be numbers");
    const double v = c.get<double>();
    sample.pose.coords.push_back(v);
  }

  if (rec.contains("mask")) {
    const json& jmask = rec["mask"];
    if (!jmask.is_array())
      throw DatasetError(DatasetErrorKind::kSchema, lineno, id, "mask must be an array");
    if (jmask.size() != static_cast<size_t>(frames))
      throw DatasetError(DatasetErrorKind::kMaskMismatch, lineno, id,
                         "mask length " + std::to_string(jmask.size()) +
                             " does not match frames " + std::to_string(frames));
    bool any = false;
    for (const auto& m : jmask) {
      if (!m.is_boolean())
        throw DatasetError(DatasetErrorKind::kSchema, lineno, id, "mask must be booleans");
      sample.pose.mask.push_back(m.get<bool>() ? 1 : 0);
      any = any || m.get<bool>();
    }
    if (!any)
      throw DatasetError(DatasetErrorKind::kMaskMismatch, lineno, id,
                         "mask marks every frame invalid");
  } else {
    sample.pose.mask.assign(static_cast<size_t>(frames), 1);
  }

  for (int f = 0; f < sample.pose.frames; ++f) {
    if (!sample.pose.mask[static_cast<size_t>(f)]) continue;
    for (int j = 0; j < joints; ++j)
      for (int a = 0; a < 3; ++a)
        if (!std::isfinite(sample.pose.at(f, j, a)))
          throw DatasetError(DatasetErrorKind::kNonFinite, lineno, id,
                             "non-finite coordinate at frame " + std::to_string(f));
  }
  return sample;
}

}  // namespace

Dataset load_dataset(const std::string& path, const Vocabulary* vocab,
                     const SkeletonTopology& topo) {
  std::ifstream in(path);
  if (!in)
    throw DatasetError(DatasetErrorKind::kParse, 0, "", "cannot open dataset '" + path + "'");
  Dataset ds;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SamplePair sample = parse_record(line, lineno, vocab, topo);
    if (!ids.insert(sample.id).second)
      throw DatasetError(DatasetErrorKind::kDuplicateId, lineno, sample.id,
                         "record id already seen");
    ds.samples.push_back(std::move(sample));
  }
  if (ds.samples.empty())
    ds.warnings.push_back("dataset '" + path + "' contains no records");
  return ds;
}

std::string sample_to_line(const SamplePair& sample) {
  json rec;
  rec["id"] = sample.id;
  rec["tokens"] = sample.tokens;
  rec["frames"] = sample.pose.frames;
  rec["coords"] = sample.pose.coords;
  bool all_valid = true;
  for (auto m : sample.pose.mask) all_valid = all_valid && m;
  if (!all_valid) {
    std::vector<bool> mask;
    for (auto m : sample.pose.mask) mask.push_back(m != 0);
    rec["mask"] = mask;
  }
  return rec.dump();
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out)
    throw DatasetError(DatasetErrorKind::kParse, 0, "", "cannot write dataset '" + path + "'");
  for (const auto& s : dataset.samples) out << sample_to_line(s) << "\n";
}

Vocabulary build_vocabulary(const Dataset& dataset) {
  std::set<std::string> uniq;
  for (const auto& s : dataset.samples)
    for (const auto& t : s.tokens) uniq.insert(t);
  return Vocabulary::with_tokens({uniq.begin(), uniq.end()});
}

Dataset generate_synthetic(std::uint64_t seed, int n_samples, const SkeletonTopology& topo,
                           int vocab_size, int max_len, int frames_per_token) {
  if (n_samples < 1 || vocab_size < 1 || max_len < 1 || frames_per_token < 1)
    throw std::invalid_argument("generate_synthetic: sizes must be positive");
  Rng rng(seed);
  const int joints = topo.joint_count();
  Dataset ds;

  // fixed per-(token, joint, axis) frequency and phase
  auto phase = [](int tok, int j, int a) {
    std::uint64_t h = Rng::derive(0x5157ull, (static_cast<std::uint64_t>(tok) << 20) ^
                                                 (static_cast<std::uint64_t>(j) << 4) ^
                                                 static_cast<std::uint64_t>(a));
    return (static_cast<double>(h >> 11) * 0x1.0p-53) * 6.283185307179586;
  };

  for (int s = 0; s < n_samples; ++s) {
    SamplePair sample;
    {
      std::ostringstream oss;
      oss << "syn" << std::setw(4) << std::setfill('0') << s;
      sample.id = oss.str();
    }
    const int len = static_cast<int>(rng.uniform_int(1, max_len));
    std::vector<int> token_idx(static_cast<size_t>(len));
    for (int k = 0; k < len; ++k) {
      token_idx[static_cast<size_t>(k)] = static_cast<int>(rng.uniform_int(0, vocab_size - 1));
      sample.tokens.push_back("w" + std::to_string(token_idx[static_cast<size_t>(k)]));
    }
    const int frames = len * frames_per_token;
    sample.pose = PoseSequence::zeros(frames, joints);
    for (int k = 0; k < len; ++k) {
      const int tok = token_idx[static_cast<size_t>(k)];
      const double freq = 1.0 + static_cast<double>(tok % 3);
      for (int sf = 0; sf < frames_per_token; ++sf) {
        const int f = k * frames_per_token + sf;
        const double u = (sf + 0.5) / frames_per_token;
        for (int j = 0; j < joints; ++j)
          for (int a = 0; a < 3; ++a)
            sample.pose.at(f, j, a) =
                0.8 * std::sin(6.283185307179586 * freq * u + phase(tok, j, a));
      }
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace tdm
