#include "tdm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "tdm/rng.hpp"

namespace tdm {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'D', 'M', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw CheckpointError("truncated checkpoint (u64)");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, std::size_t limit = 1u << 26) {
  const std::uint64_t n = read_u64(in);
  if (n > limit) throw CheckpointError("unreasonable string length in checkpoint");
  std::string s(static_cast<size_t>(n), '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw CheckpointError("truncated checkpoint (string)");
  return s;
}

json config_record(const Checkpoint& ckpt) {
  json j;
  j["format_version"] = 1;
  j["model"] = {
      {"num_layers", ckpt.config.num_layers},
      {"num_heads", ckpt.config.num_heads},
      {"model_dim", ckpt.config.model_dim},
      {"ffn_dim", ckpt.config.ffn_dim},
      {"max_positions", ckpt.config.max_positions},
      {"dropout_rate", ckpt.config.dropout_rate},
      {"cross_attention", ckpt.config.cross_attention},
      {"condition_bias", ckpt.config.condition_bias},
  };
  j["joints"] = ckpt.joints;
  j["schedule"] = {{"steps", ckpt.schedule_steps}, {"offset", ckpt.schedule_offset}};
  if (ckpt.train_state) {
    j["train_state"] = {{"step", ckpt.train_state->step},
                        {"rng", ckpt.train_state->rng_state_hex},
                        {"adam_step", ckpt.train_state->adam_step}};
  }
  return j;
}

void parse_config_record(const std::string& text, Checkpoint& ckpt) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint config record: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1)
      throw CheckpointError("unsupported checkpoint format version");
    const json& m = j.at("model");
    ckpt.config.num_layers = m.at("num_layers").get<int>();
    ckpt.config.num_heads = m.at("num_heads").get<int>();
    ckpt.config.model_dim = m.at("model_dim").get<int>();
    ckpt.config.ffn_dim = m.at("ffn_dim").get<int>();
    ckpt.config.max_positions = m.at("max_positions").get<int>();
    ckpt.config.dropout_rate = m.at("dropout_rate").get<double>();
    ckpt.config.cross_attention = m.at("cross_attention").get<bool>();
    ckpt.config.condition_bias = m.at("condition_bias").get<bool>();
    ckpt.joints = j.at("joints").get<int>();
    ckpt.schedule_steps = j.at("schedule").at("steps").get<int>();
    ckpt.schedule_offset = j.at("schedule").at("offset").get<double>();
    if (j.contains("train_state")) {
      TrainState ts;
      ts.step = j["train_state"].at("step").get<long>();
      ts.rng_state_hex = j["train_state"].at("rng").get<std::string>();
      ts.adam_step = j["train_state"].at("adam_step").get<long>();
      ckpt.train_state = ts;
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint config record: ") + e.what());
  }
}

}  // namespace

Tensor Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint is missing tensor '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 8);
  write_string(out, config_record(ckpt).dump());
  write_u64(out, static_cast<std::uint64_t>(ckpt.vocab.size()));
  for (int i = 0; i < ckpt.vocab.size(); ++i) write_string(out, ckpt.vocab.token(i));
  write_u64(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(out, name);
    write_u64(out, static_cast<std::uint64_t>(t.rank()));
    for (int d : t.shape()) write_u64(out, static_cast<std::uint64_t>(d));
    const double* p = t.data();
    for (int i = 0; i < t.size(); ++i) write_f64(out, p[i]);
  }
  if (!out) throw CheckpointError("write failure on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError("'" + path + "' is not a checkpoint (bad magic)");
  Checkpoint ckpt;
  parse_config_record(read_string(in), ckpt);

  const std::uint64_t vocab_n = read_u64(in);
  if (vocab_n < 3) throw CheckpointError("checkpoint vocabulary lacks reserved ids");
  std::vector<std::string> content;
  for (std::uint64_t i = 0; i < vocab_n; ++i) {
    std::string tok = read_string(in);
    if (i >= 3) content.push_back(std::move(tok));
  }
  ckpt.vocab = Vocabulary::with_tokens(content);

  const std::uint64_t tensor_n = read_u64(in);
  for (std::uint64_t i = 0; i < tensor_n; ++i) {
    std::string name = read_string(in);
    const std::uint64_t rank = read_u64(in);
    if (rank > 4) throw CheckpointError("tensor '" + name + "' has unreasonable rank");
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = read_u64(in);
      if (dim == 0 || dim > (1u << 28))
        throw CheckpointError("tensor '" + name + "' has invalid dimension");
      shape.push_back(static_cast<int>(dim));
      numel *= static_cast<std::size_t>(dim);
    }
    std::vector<double> values(numel);
    for (std::size_t k = 0; k < numel; ++k) values[k] = read_f64(in);
    ckpt.tensors.emplace_back(std::move(name),
                              Tensor::from_values(std::move(shape), std::move(values)));
  }
  return ckpt;
}

Checkpoint checkpoint_from_model(const Denoiser& model, const Vocabulary& vocab,
                                 int schedule_steps, double schedule_offset) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.joints = model.joints();
  ckpt.schedule_steps = schedule_steps;
  ckpt.schedule_offset = schedule_offset;
  ckpt.vocab = vocab;
  if (vocab.size() != model.vocab_size())
    throw CheckpointError("vocabulary size does not match the model embedding table");
  for (const auto& [name, t] : model.parameters()) ckpt.tensors.emplace_back(name, t);
  return ckpt;
}

Denoiser model_from_checkpoint(const Checkpoint& ckpt) {
  Rng dummy(0);
  Denoiser model(ckpt.config, ckpt.vocab.size(), ckpt.joints, dummy);
  for (auto& [name, param] : model.parameters()) {
    Tensor stored = ckpt.find(name);
    if (stored.shape() != param.shape())
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(stored.shape()) +
                            ", expected " + shape_str(param.shape()));
    std::memcpy(param.data(), stored.data(), sizeof(double) * static_cast<size_t>(param.size()));
  }
  return model;
}

}  // namespace tdm
