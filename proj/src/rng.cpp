#include "gamf/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gamf {

uint32_t RngStream::next_below(uint32_t bound) {
  if (bound == 0) throw std::invalid_argument("RngStream::next_below: bound must be > 0");
  // Classic rejection off the top of the 32-bit range.
  const uint32_t limit = UINT32_MAX - (UINT32_MAX % bound + 1) % bound;
  for (;;) {
    uint32_t v = static_cast<uint32_t>(next_u64() >> 32);
    if (v <= limit) return v % bound;
  }
}

double RngStream::next_normal() {
  const double u1 = next_open();
  const double u2 = next_open();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double RngStream::next_gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("RngStream::next_gamma: shape must be > 0");
  if (shape < 1.0) {
    // Boost the shape above 1 and correct with U^(1/shape).
    const double g = next_gamma(shape + 1.0);
    return g * std::pow(next_open(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze method.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = next_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = next_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::next_gumbel() { return -std::log(-std::log(next_open())); }

}  // namespace gamf
