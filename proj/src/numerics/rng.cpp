#include "nerd/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "nerd/util/text.hpp"

namespace nerd::numerics {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

RngStream RngStream::substream(std::string_view subject, std::string_view tag, std::uint64_t index) const {
  std::uint64_t h = mix64(seed_);
  h = mix64(h ^ text::fnv1a(subject));
  h = mix64(h ^ text::fnv1a(tag));
  h = mix64(h ^ index);
  return RngStream(h);
}

std::uint64_t RngStream::next_u64() {
  ++cursor_;
  return engine_();
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Vector RngStream::normal_vector(Eigen::Index n) {
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  // Lemire-free rejection; n is small everywhere we use it.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

}  // namespace nerd::numerics
