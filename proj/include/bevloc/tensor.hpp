#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bevloc {

using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecX = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

/** @brief Dense row-major rank-3 tensor of doubles (d0 x d1 x d2). */
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2)
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, 0.0) {}

  std::size_t dim0() const { return d0_; }
  std::size_t dim1() const { return d1_; }
  std::size_t dim2() const { return d2_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * d1_ + j) * d2_ + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * d1_ + j) * d2_ + k];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // Contiguous (d0*d1) x d2 matrix view; rows iterate (i, j) in row-major order.
  Eigen::Map<MatX> as_rows() {
    return Eigen::Map<MatX>(data_.data(), static_cast<Eigen::Index>(d0_ * d1_),
                            static_cast<Eigen::Index>(d2_));
  }
  Eigen::Map<const MatX> as_rows() const {
    return Eigen::Map<const MatX>(data_.data(), static_cast<Eigen::Index>(d0_ * d1_),
                                  static_cast<Eigen::Index>(d2_));
  }

  bool same_shape(const Tensor3& o) const {
    return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor3& a, const Tensor3& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace bevloc
