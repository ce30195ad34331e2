#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace widthlab {

/// Counter-based pseudorandom stream.
///
/// The generator is SplitMix64 (Vigna's public-domain splitmix64.c, also the
/// java.util.SplittableRandom mixer): output i of a stream with seed s is
/// mix64(s + (i+1) * 0x9E3779B97F4A7C15).  Because each output is a pure
/// function of (seed, position), streams are values: copying one copies the
/// whole future sequence, and any position can be seeked in O(1).  The same
/// (seed, position) pair yields the same bits on every platform and at every
/// optimization level; the integer path has no floating point in it.
class Rng {
 public:
  Rng() : seed_(0), position_(0) {}
  explicit Rng(std::uint64_t seed, std::uint64_t position = 0)
      : seed_(seed), position_(position) {}

  /// Stream derived from `seed` by mixing in a label (and optional index).
  /// Distinct labels give unrelated streams; used to give every purpose in an
  /// experiment (weights, data, probes, ...) its own substream.
  static Rng substream(std::uint64_t seed, std::string_view label,
                       std::uint64_t index = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  /// Next raw 64-bit output; advances the position by 1.
  std::uint64_t next_u64();

  /// Uniform double in (0, 1]; one position per call.  The open lower bound
  /// keeps log() in the Gaussian path finite.
  double next_unit();

  /// Standard normal draw via Box-Muller on the raw stream (cosine branch
  /// only, so every draw consumes exactly two positions).
  double next_gaussian();

  void skip(std::uint64_t n) { position_ += n; }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

/// `n` independent standard-normal draws from `rng` (advances it in place).
std::vector<double> gaussian_stream(Rng& rng, std::size_t n);

/// SplitMix64 finalizer; exposed because checkpoint digests and config
/// digests reuse it.
std::uint64_t mix64(std::uint64_t z);

/// FNV-1a 64-bit hash of a byte string.  Stable across platforms (unlike
/// std::hash), used for substream labels and artifact digests.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace widthlab
