#pragma once

/// @file rng.hpp Counter-based random streams.
///
/// A stream is an immutable (seed, path) pair hashed down to a 64-bit key.
/// Draws come from a Philox4x32-10 block cipher keyed by that key, with the
/// counter split into a 64-bit "slot" (typically a particle index) and a
/// 64-bit block index. Any slot of any stream can therefore be opened
/// independently, which keeps particle loops deterministic regardless of how
/// they are scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pompkit {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    constexpr std::uint32_t kMul0 = 0xD2511F53U;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57U;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9U;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85U;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

/// Sequential generator over one (key, slot) pair. Satisfies
/// UniformRandomBitGenerator with 64-bit output.
class RandomEngine {
 public:
  using result_type = std::uint64_t;

  constexpr RandomEngine(std::uint64_t key, std::uint64_t slot) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        slot_(slot) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (used_ == 2) refill();
    return buffer_[used_++];
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  void refill() noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(slot_),
                                  static_cast<std::uint32_t>(slot_ >> 32),
                                  static_cast<std::uint32_t>(block_),
                                  static_cast<std::uint32_t>(block_ >> 32)};
    const auto out = Philox4x32::apply(ctr, key_);
    buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
    ++block_;
    used_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t slot_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int used_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Immutable handle to a reproducible random stream.
///
/// `substream` derives a child stream by folding labels into the key, so
/// `s.substream("a").substream("b") == s.substream({"a", "b"})`.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), key_(detail::splitmix64(seed)) {}

  [[nodiscard]] RngStream substream(std::string_view label) const {
    RngStream child = *this;
    child.key_ = detail::splitmix64(key_ ^ detail::fnv1a(label));
    child.path_.emplace_back(label);
    return child;
  }

  [[nodiscard]] RngStream substream(std::initializer_list<std::string_view> labels) const {
    RngStream child = *this;
    for (auto label : labels) child = child.substream(label);
    return child;
  }

  [[nodiscard]] RngStream substream(std::string_view label, std::uint64_t index) const {
    return substream(label).substream(std::to_string(index));
  }

  /// Generator for one slot of this stream.
  [[nodiscard]] RandomEngine engine(std::uint64_t slot = 0) const noexcept {
    return RandomEngine(key_, slot);
  }

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] const std::vector<std::string>& path() const noexcept { return path_; }

  [[nodiscard]] std::string path_string() const {
    std::string out;
    for (const auto& label : path_) {
      if (!out.empty()) out += '/';
      out += label;
    }
    return out;
  }

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.seed_ == b.seed_ && a.key_ == b.key_ && a.path_ == b.path_;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::vector<std::string> path_;
};

}  // namespace pompkit
