#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdm/pose_tensor.hpp"
#include "tdm/skeleton.hpp"
#include "tdm/tensor.hpp"

namespace tdm {

class Rng;

struct DenoiserError : std::runtime_error {
  explicit DenoiserError(const std::string& msg) : std::runtime_error(msg) {}
};

// token <-> id bijection with fixed reserved ids
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  Vocabulary();
  // content tokens get ids from 3 upward in the given order; duplicates rejected
  static Vocabulary with_tokens(const std::vector<std::string>& content_tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;  // -1 when unknown
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;  // throws on unknown

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct DenoiserConfig {
  int num_layers = 2;
  int num_heads = 4;
  int model_dim = 64;
  int ffn_dim = 128;
  int max_positions = 512;
  double dropout_rate = 0.0;
  bool cross_attention = true;  // feed condition memory via cross-attention
  bool condition_bias = true;   // add pooled condition vector to the pose stream

  void validate() const;
};

struct EncodedText {
  Tensor token_states;                // L x d
  Tensor global_vector;               // 1 x d, masked mean pool
  std::vector<std::uint8_t> attend;   // L entries, 0 at PAD positions
};

// condition g: per-token memory for cross-attention plus a pooled bias
struct Condition {
  Tensor memory;                      // L x d
  Tensor bias;                        // 1 x d
  std::vector<std::uint8_t> attend;   // key mask for cross-attention
};

struct AttentionWeights {
  Tensor wq, wk, wv, wo;  // d x d each
};

// Per-head scaled dot-product attention over row-major sequences; heads are
// contiguous column blocks of the projected Q/K/V, concatenated and passed
// through the output projection.
Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                 int num_heads, const AttentionWeights& w,
                 const std::vector<std::uint8_t>* key_mask = nullptr);

// standard sinusoidal position encoding table, rows 0..count-1
Tensor sinusoidal_encoding(int count, int dim, int offset = 0);

// Conditional denoiser: text encoder, time MLP, and the pose stream of
// embed -> position encoding -> [self-attention, cross-attention, FFN] blocks.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, int vocab_size, int joints, Rng& init_rng);

  EncodedText encode_text(const std::vector<int>& token_ids) const;
  Tensor time_embed(int t, int total_steps) const;
  Condition make_condition(const EncodedText& text, const Tensor& time_vector) const;
  Condition condition(const std::vector<int>& token_ids, int t, int total_steps) const;

  // noisy: F x (J*3) tensor; returns the clean prediction, same shape
  Tensor denoise(const Tensor& noisy, const Condition& cond,
                 const std::vector<std::uint8_t>* frame_mask = nullptr) const;
  PoseSequence denoise(const PoseSequence& noisy, const Condition& cond) const;

  const DenoiserConfig& config() const { return cfg_; }
  int joints() const { return joints_; }
  int vocab_size() const { return vocab_size_; }

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  Tensor param(const std::string& name) const;
  void zero_all_grads();

  // training-mode toggles dropout; inference keeps it off
  void set_training(bool on, Rng* dropout_rng = nullptr);

 private:
  Tensor make_param(const std::string& name, std::vector<int> shape, double init_bound,
                    Rng& rng);
  Tensor ffn(const Tensor& x, const std::string& prefix) const;
  Tensor maybe_dropout(const Tensor& x) const;

  DenoiserConfig cfg_;
  int vocab_size_ = 0;
  int joints_ = 0;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::unordered_map<std::string, int> param_index_;
  bool training_ = false;
  Rng* dropout_rng_ = nullptr;
};

}  // namespace tdm
