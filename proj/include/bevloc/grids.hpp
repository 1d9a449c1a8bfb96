#pragma once

#include <stdexcept>
#include <string>

#include "bevloc/tensor.hpp"

namespace bevloc {

/**
 * @brief Cartesian bird's-eye feature grid, H x W x C.
 *
 * The ego vehicle sits at the center cell (H/2, W/2). Cell (i, j) covers the
 * ego-frame point x = (H/2 - i) * g, y = (W/2 - j) * g with x forward and
 * y left, so row 0 is the far-forward edge and column 0 the far-left edge.
 */
struct BevGrid {
  Tensor3 data;            // H x W x C
  double grid_size_m = 0;  // g, meters per cell

  BevGrid() = default;
  BevGrid(std::size_t h, std::size_t w, std::size_t c, double g)
      : data(h, w, c), grid_size_m(g) {
    if (h == 0 || w == 0 || c == 0 || !(g > 0.0))
      throw std::invalid_argument("BevGrid: dims and grid size must be positive");
  }

  std::size_t H() const { return data.dim0(); }
  std::size_t W() const { return data.dim1(); }
  std::size_t C() const { return data.dim2(); }

  double row_to_x(double i) const { return (static_cast<double>(H() / 2) - i) * grid_size_m; }
  double col_to_y(double j) const { return (static_cast<double>(W() / 2) - j) * grid_size_m; }
  double x_to_row(double x) const { return static_cast<double>(H() / 2) - x / grid_size_m; }
  double y_to_col(double y) const { return static_cast<double>(W() / 2) - y / grid_size_m; }
};

/**
 * @brief Polar feature grid, T angular sectors x R radial rings x C channels.
 *
 * Sector t spans angles [t, t+1) * 360/T measured from the +y axis toward the
 * +x axis; ring r is centered at radius (r + 0.5) * radial_step_m.
 */
struct PolarGrid {
  Tensor3 data;              // T x R x C
  double radial_step_m = 0;

  PolarGrid() = default;
  PolarGrid(std::size_t t, std::size_t r, std::size_t c, double step)
      : data(t, r, c), radial_step_m(step) {
    if (t == 0 || r == 0 || c == 0 || !(step > 0.0))
      throw std::invalid_argument("PolarGrid: dims and radial step must be positive");
  }

  std::size_t T() const { return data.dim0(); }
  std::size_t R() const { return data.dim1(); }
  std::size_t C() const { return data.dim2(); }
};

/**
 * @brief Per-sector descriptor matrix, T x C, one row per angular sector.
 *
 * Rows are unit L2 norm once normalized; all-zero rows (sectors with no
 * content and a zero feature map) are left at zero.
 */
struct LocalViewDescriptor {
  MatX data;  // T x C

  LocalViewDescriptor() = default;
  explicit LocalViewDescriptor(MatX m) : data(std::move(m)) {}

  std::size_t T() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t C() const { return static_cast<std::size_t>(data.cols()); }

  void normalize_rows() {
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      const double n = data.row(i).norm();
      if (n > 1e-300) data.row(i) /= n;
    }
  }
};

/** @brief Unit-norm global descriptor of one frame. */
struct GlobalDescriptor {
  std::string frame_id;
  VecX values;
};

/** @brief Shared Cartesian + polar grid geometry of a dataset. */
struct GridGeometry {
  std::size_t H = 48, W = 48, C = 16;
  double grid_size_m = 0.3;
  std::size_t T = 120, R = 12;
  double radial_step_m = 0.6;

  void validate() const {
    if (H == 0 || W == 0 || C == 0 || T == 0 || R == 0)
      throw std::invalid_argument("GridGeometry: dims must be positive");
    if (!(grid_size_m > 0.0) || !(radial_step_m > 0.0))
      throw std::invalid_argument("GridGeometry: cell sizes must be positive");
    const double half_extent = static_cast<double>(std::min(H, W)) / 2.0 * grid_size_m;
    if (static_cast<double>(R) * radial_step_m > half_extent * (1.0 + 1e-12))
      throw std::invalid_argument("GridGeometry: polar disk exceeds grid extent");
  }
};

}  // namespace bevloc
