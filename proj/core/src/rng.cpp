#include "widthlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace widthlab {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  return fnv1a64(bytes.data(), bytes.size());
}

Rng Rng::substream(std::uint64_t seed, std::string_view label,
                   std::uint64_t index) {
  // Two mix rounds decorrelate child seeds even for adjacent (seed, index)
  // pairs and similar labels.
  std::uint64_t s = mix64(seed ^ fnv1a64(label));
  s = mix64(s + kGolden * (index + 1));
  return Rng(s);
}

std::uint64_t Rng::next_u64() {
  ++position_;
  return mix64(seed_ + kGolden * position_);
}

double Rng::next_unit() {
  // 53-bit mantissa, shifted into (0, 1].
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  const double u1 = next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> gaussian_stream(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.next_gaussian();
  return out;
}

}  // namespace widthlab
