#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace qdet {

// Counter-based random stream. The i-th output of stream (seed, stream_id)
// is a pure function of (seed, stream_id, i), so per-path streams produce
// the same numbers whether paths run serially or across threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : state_(derive_key(seed, stream_id)) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0,1); never returns an exact endpoint.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Exp(rate) variate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream_id) {
    // One splitmix round over each input keeps nearby (seed, id) pairs
    // statistically unrelated.
    auto mix = [](std::uint64_t z) {
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      return z ^ (z >> 31);
    };
    return mix(seed + 0x9E3779B97F4A7C15ull) ^
           mix(stream_id * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qdet
