#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace tdm {

// xoshiro256** seeded through splitmix64. Self-contained so that stream
// state can be serialized into checkpoints and replayed exactly; normal()
// deliberately keeps no cached spare, the state is always four words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds; modulo bias is irrelevant at the range sizes used here
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Box-Muller, cosine branch only
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Child stream; advances this stream by one draw.
  Rng fork(std::uint64_t stream) {
    return Rng(splitmix64_once(next_u64() ^ splitmix64_once(stream + 0x9E3779B97F4A7C15ull)));
  }

  // Order-independent derived seed for parallel per-item streams.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64_once(seed ^ splitmix64_once(stream + 0x9E3779B97F4A7C15ull));
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

  std::string state_hex() const {
    char buf[4 * 16 + 4];
    std::snprintf(buf, sizeof(buf), "%016llx:%016llx:%016llx:%016llx",
                  static_cast<unsigned long long>(state_[0]),
                  static_cast<unsigned long long>(state_[1]),
                  static_cast<unsigned long long>(state_[2]),
                  static_cast<unsigned long long>(state_[3]));
    return buf;
  }

  void set_state_hex(const std::string& hex) {
    std::array<std::uint64_t, 4> s{};
    unsigned long long w[4];
    if (std::sscanf(hex.c_str(), "%llx:%llx:%llx:%llx", &w[0], &w[1], &w[2], &w[3]) != 4)
      throw std::invalid_argument("Rng::set_state_hex: malformed state string '" + hex + "'");
    for (int i = 0; i < 4; ++i) s[i] = w[i];
    state_ = s;
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t splitmix64_once(std::uint64_t x) { return splitmix64(x); }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace tdm
