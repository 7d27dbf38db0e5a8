#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace scalemix {

using Rng = std::mt19937_64;

// Independent stream `stream` derived from a master seed.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

// Uniform on the open interval (0, 1).
inline double uniform(Rng& rng) {
  std::uint64_t b = rng() >> 11;
  return (static_cast<double>(b) + 0.5) * 0x1.0p-53;
}

// Polar method; the second variate is dropped so the engine alone is the state.
inline double std_normal(Rng& rng) {
  for (;;) {
    double u = 2.0 * uniform(rng) - 1.0;
    double v = 2.0 * uniform(rng) - 1.0;
    double s = u * u + v * v;
    if (s < 1.0 && s > 0.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

inline double std_exponential(Rng& rng) { return -std::log(uniform(rng)); }

std::string save_rng(const Rng& rng);
void load_rng(Rng& rng, const std::string& text);

}  // namespace scalemix
