#pragma once

#include <cmath>
#include <stdexcept>

#include "bevloc/grids.hpp"
#include "bevloc/pose2d.hpp"
#include "bevloc/tensor.hpp"

namespace bevloc {

namespace detail {

// phi reduced to [0, n), split into integer part k0 and fraction f
struct ShiftSplit {
  std::size_t k0;
  double frac;
};

inline ShiftSplit split_shift(double phi, std::size_t n) {
  if (!std::isfinite(phi)) throw std::invalid_argument("circular_shift: non-finite shift");
  const double nn = static_cast<double>(n);
  double r = std::fmod(phi, nn);
  if (r < 0.0) r += nn;
  if (r >= nn) r = 0.0;
  double k0 = std::floor(r);
  double f = r - k0;
  if (f < 1e-12) {  // collapse fp residue onto the exact integer shift
    f = 0.0;
  } else if (f > 1.0 - 1e-12) {
    k0 += 1.0;
    f = 0.0;
    if (k0 >= nn) k0 = 0.0;
  }
  return {static_cast<std::size_t>(k0), f};
}

}  // namespace detail

/**
 * @brief Circular shift along one axis with linear blending of the two
 * neighboring integer shifts for fractional amounts.
 *
 * out[i] = (1 - f) * in[(i - k0) mod n] + f * in[(i - k0 - 1) mod n], where
 * phi reduced mod n splits as k0 + f. Integer shifts are exact permutations.
 */
inline Tensor3 circular_shift(const Tensor3& in, double phi, int axis) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("circular_shift: axis out of range");
  const std::size_t dims[3] = {in.dim0(), in.dim1(), in.dim2()};
  const std::size_t n = dims[axis];
  const auto [k0, f] = detail::split_shift(phi, n);
  const std::size_t k1 = (k0 + 1) % n;

  Tensor3 out(in.dim0(), in.dim1(), in.dim2());
  const std::size_t d0 = in.dim0(), d1 = in.dim1(), d2 = in.dim2();
  const double* src = in.data();
  double* dst = out.data();

  auto blend = [&](double* o, const double* a, const double* b, std::size_t len) {
    if (f == 0.0)
      std::copy(a, a + len, o);
    else
      for (std::size_t k = 0; k < len; ++k) o[k] = (1.0 - f) * a[k] + f * b[k];
  };

  if (axis == 0) {
    const std::size_t slab = d1 * d2;
    for (std::size_t i = 0; i < d0; ++i) {
      const std::size_t a = (i + n - k0) % n, b = (i + n - k1) % n;
      blend(dst + i * slab, src + a * slab, src + b * slab, slab);
    }
  } else if (axis == 1) {
    for (std::size_t i = 0; i < d0; ++i) {
      const double* plane = src + i * d1 * d2;
      double* oplane = dst + i * d1 * d2;
      for (std::size_t j = 0; j < d1; ++j) {
        const std::size_t a = (j + n - k0) % n, b = (j + n - k1) % n;
        blend(oplane + j * d2, plane + a * d2, plane + b * d2, d2);
      }
    }
  } else {
    for (std::size_t ij = 0; ij < d0 * d1; ++ij) {
      const double* row = src + ij * d2;
      double* orow = dst + ij * d2;
      for (std::size_t k = 0; k < d2; ++k) {
        const std::size_t a = (k + n - k0) % n, b = (k + n - k1) % n;
        orow[k] = (f == 0.0) ? row[a] : (1.0 - f) * row[a] + f * row[b];
      }
    }
  }
  return out;
}

/** @brief Circular shift of matrix rows (axis 0) or columns (axis 1). */
inline MatX circular_shift(const MatX& in, double phi, int axis = 0) {
  if (axis < 0 || axis > 1) throw std::invalid_argument("circular_shift: axis out of range");
  const std::size_t n =
      static_cast<std::size_t>(axis == 0 ? in.rows() : in.cols());
  const auto [k0, f] = detail::split_shift(phi, n);
  const std::size_t k1 = (k0 + 1) % n;
  MatX out(in.rows(), in.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = (i + n - k0) % n;
    const std::size_t b = (i + n - k1) % n;
    if (axis == 0) {
      if (f == 0.0)
        out.row(static_cast<Eigen::Index>(i)) = in.row(static_cast<Eigen::Index>(a));
      else
        out.row(static_cast<Eigen::Index>(i)) =
            (1.0 - f) * in.row(static_cast<Eigen::Index>(a)) +
            f * in.row(static_cast<Eigen::Index>(b));
    } else {
      if (f == 0.0)
        out.col(static_cast<Eigen::Index>(i)) = in.col(static_cast<Eigen::Index>(a));
      else
        out.col(static_cast<Eigen::Index>(i)) =
            (1.0 - f) * in.col(static_cast<Eigen::Index>(a)) +
            f * in.col(static_cast<Eigen::Index>(b));
    }
  }
  return out;
}

inline double default_radial_step(const BevGrid& grid, std::size_t R) {
  const double half_extent =
      static_cast<double>(std::min(grid.H(), grid.W())) / 2.0 * grid.grid_size_m;
  return half_extent / static_cast<double>(R);
}

/**
 * @brief Resamples a Cartesian grid into T x R polar bins.
 *
 * Each bin reads the grid by bilinear interpolation at its center point
 * (x, y) = rho * (sin a, cos a), a = (t + 0.5) * 360/T measured from +y
 * toward +x, rho = (r + 0.5) * radial_step. The sampled disk must fit the
 * grid: R * radial_step <= min(H, W)/2 * g.
 */
inline PolarGrid polar_transform(const BevGrid& grid, std::size_t T, std::size_t R,
                                 double radial_step_m = 0.0) {
  if (T == 0 || R == 0) throw std::invalid_argument("polar_transform: T and R must be positive");
  const double step = radial_step_m > 0.0 ? radial_step_m : default_radial_step(grid, R);
  const double half_extent =
      static_cast<double>(std::min(grid.H(), grid.W())) / 2.0 * grid.grid_size_m;
  if (static_cast<double>(R) * step > half_extent * (1.0 + 1e-12))
    throw std::invalid_argument("polar_transform: sampled disk exceeds grid extent");

  const std::size_t H = grid.H(), W = grid.W(), C = grid.C();
  PolarGrid polar(T, R, C, step);
  const double sector_rad = 2.0 * kPi / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double a = (static_cast<double>(t) + 0.5) * sector_rad;
    const double dx = std::sin(a), dy = std::cos(a);
    for (std::size_t r = 0; r < R; ++r) {
      const double rho = (static_cast<double>(r) + 0.5) * step;
      const double u = grid.x_to_row(rho * dx);
      const double v = grid.y_to_col(rho * dy);
      const double fu = u - std::floor(u), fv = v - std::floor(v);
      const long i0 = static_cast<long>(std::floor(u));
      const long j0 = static_cast<long>(std::floor(v));
      auto clamp_row = [&](long i) { return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(H) - 1)); };
      auto clamp_col = [&](long j) { return static_cast<std::size_t>(std::clamp<long>(j, 0, static_cast<long>(W) - 1)); };
      const std::size_t i0c = clamp_row(i0), i1c = clamp_row(i0 + 1);
      const std::size_t j0c = clamp_col(j0), j1c = clamp_col(j0 + 1);
      const double w00 = (1.0 - fu) * (1.0 - fv), w01 = (1.0 - fu) * fv;
      const double w10 = fu * (1.0 - fv), w11 = fu * fv;
      for (std::size_t c = 0; c < C; ++c) {
        polar.data.at(t, r, c) = w00 * grid.data.at(i0c, j0c, c) +
                                 w01 * grid.data.at(i0c, j1c, c) +
                                 w10 * grid.data.at(i1c, j0c, c) +
                                 w11 * grid.data.at(i1c, j1c, c);
      }
    }
  }
  return polar;
}

/**
 * @brief Recenter a grid onto a hypothesized frame offset by (x, y) meters.
 *
 * Shifts the content by (-x/g) rows and (-y/g) cols (fractional shifts
 * interpolate), then overwrites the ceil(|x|/g) rows / ceil(|y|/g) cols that
 * wrapped around with the constant 1: for x >= 0 the last rows, otherwise the
 * first rows, and likewise for columns.
 */
inline BevGrid bev_pad(const BevGrid& grid, double x_m, double y_m) {
  if (!std::isfinite(x_m) || !std::isfinite(y_m))
    throw std::invalid_argument("bev_pad: non-finite translation");
  const double g = grid.grid_size_m;
  const std::size_t H = grid.H(), W = grid.W(), C = grid.C();
  if (std::abs(x_m) >= static_cast<double>(H) * g ||
      std::abs(y_m) >= static_cast<double>(W) * g)
    throw std::invalid_argument("bev_pad: translation exceeds grid extent");

  BevGrid out = grid;
  out.data = circular_shift(grid.data, -x_m / g, 0);
  out.data = circular_shift(out.data, -y_m / g, 1);

  const std::size_t kx =
      static_cast<std::size_t>(std::ceil(std::abs(x_m) / g - 1e-9));
  const std::size_t ky =
      static_cast<std::size_t>(std::ceil(std::abs(y_m) / g - 1e-9));
  if (kx > 0) {
    const std::size_t lo = (x_m >= 0.0) ? H - kx : 0;
    const std::size_t hi = (x_m >= 0.0) ? H : kx;
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t c = 0; c < C; ++c) out.data.at(i, j, c) = 1.0;
  }
  if (ky > 0) {
    const std::size_t lo = (y_m >= 0.0) ? W - ky : 0;
    const std::size_t hi = (y_m >= 0.0) ? W : ky;
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = lo; j < hi; ++j)
        for (std::size_t c = 0; c < C; ++c) out.data.at(i, j, c) = 1.0;
  }
  return out;
}

/** @brief Mean per-row L2 distance between two descriptors of equal shape. */
inline double matching_cost(const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("matching_cost: shape mismatch");
  if (a.rows() == 0) throw std::invalid_argument("matching_cost: empty descriptor");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) acc += (a.row(i) - b.row(i)).norm();
  return acc / static_cast<double>(a.rows());
}

inline double matching_cost(const LocalViewDescriptor& a, const LocalViewDescriptor& b) {
  return matching_cost(a.data, b.data);
}

}  // namespace bevloc
