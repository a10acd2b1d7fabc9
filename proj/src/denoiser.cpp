#include "tdm/denoiser.hpp"

#include <cmath>

#include "tdm/rng.hpp"

namespace tdm {

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<bos>", "<eos>"};
  for (size_t i = 0; i < id_to_token_.size(); ++i)
    token_to_id_[id_to_token_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::with_tokens(const std::vector<std::string>& content_tokens) {
  Vocabulary v;
  for (const auto& tok : content_tokens) {
    if (tok.empty()) throw DenoiserError("vocabulary token must be non-empty");
    if (v.token_to_id_.count(tok))
      throw DenoiserError("duplicate vocabulary token '" + tok + "'");
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw DenoiserError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(size()));
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  std::string unknown;
  for (const auto& tok : tokens) {
    const int i = id(tok);
    if (i < 0) {
      if (!unknown.empty()) unknown += ", ";
      unknown += "'" + tok + "'";
      continue;
    }
    ids.push_back(i);
  }
  if (!unknown.empty()) throw DenoiserError("unknown tokens: " + unknown);
  return ids;
}

// --- config / helpers ----------------------------------------------------------

void DenoiserConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || model_dim < 1 || ffn_dim < 1 || max_positions < 1)
    throw DenoiserError("denoiser config fields must all be positive");
  if (model_dim % num_heads != 0)
    throw DenoiserError("model_dim " + std::to_string(model_dim) +
                        " not divisible by num_heads " + std::to_string(num_heads));
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw DenoiserError("dropout_rate must be in [0,1)");
}

Tensor sinusoidal_encoding(int count, int dim, int offset) {
  std::vector<double> v(static_cast<size_t>(count) * dim);
  for (int pos = 0; pos < count; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double angle =
          (pos + offset) * std::exp(-std::log(10000.0) * static_cast<double>(i) / dim);
      v[static_cast<size_t>(pos) * dim + i] = std::sin(angle);
      if (i + 1 < dim) v[static_cast<size_t>(pos) * dim + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from_values({count, dim}, std::move(v));
}

Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                 int num_heads, const AttentionWeights& w,
                 const std::vector<std::uint8_t>* key_mask) {
  const int d = queries.dim(1);
  if (d % num_heads != 0)
    throw DenoiserError("attention width " + std::to_string(d) +
                        " not divisible by " + std::to_string(num_heads) + " heads");
  if (keys.dim(0) != values.dim(0))
    throw DenoiserError("attention: key/value row counts differ");
  const int head_dim = d / num_heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor q = matmul(queries, w.wq);
  Tensor k = matmul(keys, w.wk);
  Tensor v = matmul(values, w.wv);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    Tensor qh = slice_cols(q, h * head_dim, head_dim);
    Tensor kh = slice_cols(k, h * head_dim, head_dim);
    Tensor vh = slice_cols(v, h * head_dim, head_dim);
    Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    Tensor probs = key_mask ? softmax_masked(logits, 1, *key_mask) : softmax(logits, 1);
    heads.push_back(matmul(probs, vh));
  }
  Tensor merged = num_heads == 1 ? heads[0] : concat(heads, 1);
  return matmul(merged, w.wo);
}

// --- Denoiser -------------------------------------------------------------------

Tensor Denoiser::make_param(const std::string& name, std::vector<int> shape,
                            double init_bound, Rng& rng) {
  Tensor t = init_bound == 0.0 ? Tensor::zeros(shape)
                               : Tensor::uniform(shape, -init_bound, init_bound, rng);
  t.set_requires_grad(true);
  param_index_[name] = static_cast<int>(params_.size());
  params_.emplace_back(name, t);
  return t;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, int vocab_size, int joints, Rng& init_rng)
    : cfg_(cfg), vocab_size_(vocab_size), joints_(joints) {
  cfg_.validate();
  if (vocab_size < 3) throw DenoiserError("vocabulary must include the reserved ids");
  if (joints < 1) throw DenoiserError("joint count must be positive");

  const int d = cfg_.model_dim;
  const int ffn = cfg_.ffn_dim;
  const int in_dim = joints * 3;
  const double bd = 1.0 / std::sqrt(static_cast<double>(d));
  const double b_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double b_ffn = 1.0 / std::sqrt(static_cast<double>(ffn));

  auto attn_params = [&](const std::string& prefix) {
    make_param(prefix + ".wq", {d, d}, bd, init_rng);
    make_param(prefix + ".wk", {d, d}, bd, init_rng);
    make_param(prefix + ".wv", {d, d}, bd, init_rng);
    make_param(prefix + ".wo", {d, d}, bd, init_rng);
  };
  auto ln_params = [&](const std::string& prefix) {
    Tensor g = Tensor::constant({d}, 1.0);
    g.set_requires_grad(true);
    param_index_[prefix + ".g"] = static_cast<int>(params_.size());
    params_.emplace_back(prefix + ".g", g);
    make_param(prefix + ".b", {d}, 0.0, init_rng);
  };
  auto ffn_params = [&](const std::string& prefix) {
    make_param(prefix + ".w1", {d, ffn}, bd, init_rng);
    make_param(prefix + ".b1", {ffn}, 0.0, init_rng);
    make_param(prefix + ".w2", {ffn, d}, b_ffn, init_rng);
    make_param(prefix + ".b2", {d}, 0.0, init_rng);
  };

  make_param("tok_embed", {vocab_size, d}, bd, init_rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    ln_params(p + ".ln1");
    attn_params(p + ".self");
    ln_params(p + ".ln2");
    ffn_params(p + ".ffn");
  }
  ln_params("enc.final_ln");

  make_param("time.w1", {d, d}, bd, init_rng);
  make_param("time.b1", {d}, 0.0, init_rng);
  make_param("time.w2", {d, d}, bd, init_rng);
  make_param("time.b2", {d}, 0.0, init_rng);

  make_param("den.in.w", {in_dim, d}, b_in, init_rng);
  make_param("den.in.b", {d}, 0.0, init_rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "den." + std::to_string(l);
    ln_params(p + ".ln1");
    attn_params(p + ".self");
    ln_params(p + ".ln2");
    attn_params(p + ".cross");
    ln_params(p + ".ln3");
    ffn_params(p + ".ffn");
  }
  ln_params("den.final_ln");
  make_param("den.out.w", {d, in_dim}, bd, init_rng);
  make_param("den.out.b", {in_dim}, 0.0, init_rng);
}

Tensor Denoiser::param(const std::string& name) const {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw DenoiserError("unknown parameter '" + name + "'");
  return params_[static_cast<size_t>(it->second)].second;
}

void Denoiser::zero_all_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void Denoiser::set_training(bool on, Rng* dropout_rng) {
  training_ = on;
  dropout_rng_ = dropout_rng;
  if (on && cfg_.dropout_rate > 0.0 && dropout_rng == nullptr)
    throw DenoiserError("training with dropout requires an rng");
}

Tensor Denoiser::maybe_dropout(const Tensor& x) const {
  if (!training_ || cfg_.dropout_rate == 0.0) return x;
  return dropout(x, cfg_.dropout_rate, *dropout_rng_);
}

Tensor Denoiser::ffn(const Tensor& x, const std::string& prefix) const {
  Tensor h = gelu(add(matmul(x, param(prefix + ".w1")), param(prefix + ".b1")));
  return add(matmul(h, param(prefix + ".w2")), param(prefix + ".b2"));
}

EncodedText Denoiser::encode_text(const std::vector<int>& token_ids) const {
  const int len = static_cast<int>(token_ids.size());
  if (len == 0) throw DenoiserError("encode_text: empty token sequence");
  if (len > cfg_.max_positions)
    throw DenoiserError("text length " + std::to_string(len) + " exceeds max_positions " +
                        std::to_string(cfg_.max_positions));
  std::vector<std::uint8_t> attend(static_cast<size_t>(len));
  int n_real = 0;
  for (int i = 0; i < len; ++i) {
    if (token_ids[static_cast<size_t>(i)] < 0 ||
        token_ids[static_cast<size_t>(i)] >= vocab_size_)
      throw DenoiserError("token id " + std::to_string(token_ids[static_cast<size_t>(i)]) +
                          " outside vocabulary of " + std::to_string(vocab_size_));
    attend[static_cast<size_t>(i)] = token_ids[static_cast<size_t>(i)] != Vocabulary::kPad;
    n_real += attend[static_cast<size_t>(i)];
  }
  if (n_real == 0) throw DenoiserError("encode_text: all positions are PAD");

  Tensor x = add(embedding_lookup(param("tok_embed"), token_ids),
                 sinusoidal_encoding(len, cfg_.model_dim));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    Tensor h = layer_norm(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
    AttentionWeights w{param(p + ".self.wq"), param(p + ".self.wk"),
                       param(p + ".self.wv"), param(p + ".self.wo")};
    x = add(x, maybe_dropout(attention(h, h, h, cfg_.num_heads, w, &attend)));
    h = layer_norm(x, param(p + ".ln2.g"), param(p + ".ln2.b"));
    x = add(x, maybe_dropout(ffn(h, p + ".ffn")));
  }
  x = layer_norm(x, param("enc.final_ln.g"), param("enc.final_ln.b"));

  // masked mean pool via a constant 1 x L matrix
  std::vector<double> pool(static_cast<size_t>(len), 0.0);
  for (int i = 0; i < len; ++i)
    if (attend[static_cast<size_t>(i)]) pool[static_cast<size_t>(i)] = 1.0 / n_real;
  Tensor global = matmul(Tensor::from_values({1, len}, std::move(pool)), x);
  return EncodedText{x, global, std::move(attend)};
}

Tensor Denoiser::time_embed(int t, int total_steps) const {
  if (t < 0 || t > total_steps)
    throw DenoiserError("time_embed: t=" + std::to_string(t) + " outside [0," +
                        std::to_string(total_steps) + "]");
  Tensor feat = sinusoidal_encoding(1, cfg_.model_dim, t);
  Tensor h = relu(add(matmul(feat, param("time.w1")), param("time.b1")));
  return add(matmul(h, param("time.w2")), param("time.b2"));
}

Condition Denoiser::make_condition(const EncodedText& text, const Tensor& time_vector) const {
  Tensor bias = add(text.global_vector, time_vector);
  Tensor memory = add(text.token_states, bias);
  return Condition{memory, bias, text.attend};
}

Condition Denoiser::condition(const std::vector<int>& token_ids, int t,
                              int total_steps) const {
  return make_condition(encode_text(token_ids), time_embed(t, total_steps));
}

Tensor Denoiser::denoise(const Tensor& noisy, const Condition& cond,
                         const std::vector<std::uint8_t>* frame_mask) const {
  if (noisy.rank() != 2 || noisy.dim(1) != joints_ * 3)
    throw DenoiserError("denoise input shape " + shape_str(noisy.shape()) +
                        " does not match J*3=" + std::to_string(joints_ * 3));
  const int frames = noisy.dim(0);
  if (frames > cfg_.max_positions)
    throw DenoiserError("frame count " + std::to_string(frames) + " exceeds max_positions " +
                        std::to_string(cfg_.max_positions));
  if (frame_mask && static_cast<int>(frame_mask->size()) != frames)
    throw DenoiserError("frame mask length does not match frame count");

  Tensor x = add(matmul(noisy, param("den.in.w")), param("den.in.b"));
  x = add(x, sinusoidal_encoding(frames, cfg_.model_dim));
  if (cfg_.condition_bias) x = add(x, cond.bias);

  auto check_finite = [&](const Tensor& t, int layer, const char* stage) {
    if (!all_finite(t))
      throw DenoiserError("non-finite activations in denoiser layer " +
                          std::to_string(layer) + " after " + stage);
  };
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "den." + std::to_string(l);
    Tensor h = layer_norm(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
    AttentionWeights ws{param(p + ".self.wq"), param(p + ".self.wk"),
                        param(p + ".self.wv"), param(p + ".self.wo")};
    x = add(x, maybe_dropout(attention(h, h, h, cfg_.num_heads, ws, frame_mask)));
    check_finite(x, l, "self-attention");
    if (cfg_.cross_attention) {
      h = layer_norm(x, param(p + ".ln2.g"), param(p + ".ln2.b"));
      AttentionWeights wc{param(p + ".cross.wq"), param(p + ".cross.wk"),
                          param(p + ".cross.wv"), param(p + ".cross.wo")};
      x = add(x, maybe_dropout(attention(h, cond.memory, cond.memory, cfg_.num_heads, wc,
                                         &cond.attend)));
      check_finite(x, l, "cross-attention");
    }
    h = layer_norm(x, param(p + ".ln3.g"), param(p + ".ln3.b"));
    x = add(x, maybe_dropout(ffn(h, p + ".ffn")));
    check_finite(x, l, "feed-forward");
  }
  x = layer_norm(x, param("den.final_ln.g"), param("den.final_ln.b"));
  return add(matmul(x, param("den.out.w")), param("den.out.b"));
}

PoseSequence Denoiser::denoise(const PoseSequence& noisy, const Condition& cond) const {
  Tensor out = denoise(pose_to_tensor(noisy), cond, &noisy.mask);
  return tensor_to_pose(out, joints_, noisy.mask);
}

}  // namespace tdm
