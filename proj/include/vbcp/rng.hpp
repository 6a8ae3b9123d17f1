#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace vbcp {

/// Counter-based pseudo-random generator: Philox4x32-10 under a 64-bit
/// stream key and a 128-bit block counter. Deterministic for a fixed seed,
/// and independent streams are derived by hashing (`fork`), so runs can be
/// reproduced from their seed chain alone. Algorithm id: kAlgorithmId.
///
/// Doubles use the top 53 bits of a 64-bit draw; normal variates come from
/// the Box-Muller transform (pairs, one cached).
class Rng {
 public:
  static constexpr const char* kAlgorithmId =
      "philox4x32-10/u53/box-muller";

  explicit Rng(std::uint64_t seed) : key_(seed) {}

  /// Child stream with a key derived from (this key, label). Streams with
  /// distinct labels are statistically independent.
  Rng fork(std::uint64_t label) const;
  Rng fork(std::string_view label) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform();

  /// Uniform integer on [0, n), unbiased (rejection sampling). n >= 1.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  std::uint64_t key() const { return key_; }

  /// SplitMix64 finalizer; used for seed derivation chains.
  static std::uint64_t mix64(std::uint64_t z);

  /// Folds a list of values into a single derived seed. Used to key
  /// per-run streams from (base seed, coordinates, trial, init index).
  static std::uint64_t derive(std::uint64_t base,
                              std::initializer_list<std::uint64_t> parts);

  /// FNV-1a hash of a string label, for named streams.
  static std::uint64_t hash_label(std::string_view label);

  /// Raw Philox4x32-10 block function (exposed for known-answer tests).
  static std::array<std::uint32_t, 4> philox4x32(
      const std::array<std::uint32_t, 4>& counter,
      const std::array<std::uint32_t, 2>& key);

 private:
  void refill();

  std::uint64_t key_ = 0;
  std::uint64_t block_lo_ = 0;
  std::uint64_t block_hi_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;  // empty
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace vbcp
