#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "nerd/types.hpp"

namespace nerd::numerics {

/// Seeded random stream. Identical seeds give bit-identical sequences on
/// every platform: uniforms and normals are derived from raw mt19937_64
/// output here rather than through the implementation-defined std
/// distributions.
///
/// Streams are single-owner. Parallel work derives independent substreams
/// up front with `substream`.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed = 0);

  /// Independent stream keyed by (subject, purpose tag, index). Depends only
  /// on this stream's seed, never on how many draws it has made.
  RngStream substream(std::string_view subject, std::string_view tag, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (cached pair).
  double normal();
  Vector normal_vector(Eigen::Index n);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }
  /// Number of raw 64-bit draws consumed so far.
  std::uint64_t cursor() const noexcept { return cursor_; }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t cursor_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace nerd::numerics
