#pragma once

#include <cmath>
#include <stdexcept>

#include "bevloc/tensor.hpp"

namespace bevloc {

/**
 * @brief Sinusoidal embedding of a scalar geometric quantity.
 *
 * Component 2k holds sin(v / (sigma * 10000^(2k/dim))) and component 2k+1 the
 * matching cosine, so consecutive pairs trace unit circles; dim must be even.
 */
inline VecX sinusoidal_embedding(double value, double sigma, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embedding: dim must be positive and even");
  if (!(sigma > 0.0)) throw std::invalid_argument("sinusoidal_embedding: sigma must be positive");
  if (!std::isfinite(value)) throw std::invalid_argument("sinusoidal_embedding: non-finite value");
  VecX out(static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; 2 * k < dim; ++k) {
    const double denom = sigma * std::pow(10000.0, 2.0 * static_cast<double>(k) /
                                                       static_cast<double>(dim));
    const double arg = value / denom;
    out[static_cast<Eigen::Index>(2 * k)] = std::sin(arg);
    out[static_cast<Eigen::Index>(2 * k + 1)] = std::cos(arg);
  }
  return out;
}

}  // namespace bevloc
