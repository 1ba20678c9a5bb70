#include "ncomp/report.hpp"

#include <cmath>

#include "ncomp/errors.hpp"

namespace ncomp {

double compression_rate(std::uint64_t n, std::uint64_t b, std::uint64_t k) {
  if (n < 1 || b < 1) throw ValueError("compression_rate: n and b must be >= 1");
  if (k < 2) throw ConfigError("degenerate codebook: k < 2");
  const double nb = static_cast<double>(n) * static_cast<double>(b);
  const double index_bits = static_cast<double>(n) * std::log2(static_cast<double>(k));
  const double centroid_bits = static_cast<double>(k) * static_cast<double>(b);
  return nb / (index_bits + centroid_bits);
}

std::uint64_t quantized_layer_bytes(std::uint64_t surviving, std::uint64_t k) {
  if (k < 2) return 4 * surviving;
  const double index_bits = static_cast<double>(surviving) * std::log2(static_cast<double>(k));
  return static_cast<std::uint64_t>(std::ceil(index_bits / 8.0)) + 4 * k;
}

}  // namespace ncomp
