#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bevloc/decoder.hpp"
#include "bevloc/grid_ops.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/localizer.hpp"
#include "bevloc/pose2d.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

struct LossMargins {
  double triplet = 0.1;      // triplet margin
  double hinge_pos = 0.1;    // hinge target for the positive distance
  double hinge_neg = 0.2;    // hinge target for the negative distance
  double gamma = 40.0;       // log scale of the yaw circle loss
  double yaw_pos = 0.1;      // circle-loss target for aligned rows
  double yaw_neg = 1.4;      // circle-loss target for cross rows
  double translation = 0.1;  // margin of the translation bias loss

  void validate() const {
    if (!(triplet > 0.0 && hinge_pos > 0.0 && hinge_neg > 0.0 && gamma > 0.0 &&
          yaw_pos > 0.0 && yaw_neg > 0.0 && translation > 0.0))
      throw std::invalid_argument("LossMargins: all margins must be positive");
    if (!(hinge_neg > hinge_pos))
      throw std::invalid_argument("LossMargins: hinge_neg must exceed hinge_pos");
    if (!(yaw_neg > yaw_pos))
      throw std::invalid_argument("LossMargins: yaw_neg must exceed yaw_pos");
  }
};

// Distances closer than this to a non-differentiable point flag the gradient.
constexpr double kKinkMargin = 1e-6;

namespace detail {

inline void check_same_shape(const MatX& a, const MatX& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

// (a - b)/|a - b|, or zero when the distance is degenerate; flags the kink.
inline VecX unit_difference(const VecX& a, const VecX& b, bool& at_kink) {
  const VecX d = a - b;
  const double n = d.norm();
  if (n < kKinkMargin) at_kink = true;
  if (n < 1e-12) return VecX::Zero(a.size());
  return d / n;
}

}  // namespace detail

//============================================================================
// Forward losses
//============================================================================

inline double triplet_margin_loss(const VecX& gs, const VecX& gp, const VecX& gn,
                                  const LossMargins& m = LossMargins{}) {
  if (gs.size() != gp.size() || gs.size() != gn.size())
    throw std::invalid_argument("triplet_margin_loss: length mismatch");
  return std::max((gs - gp).norm() - (gs - gn).norm() + m.triplet, 0.0);
}

inline double hinge_loss(const VecX& gs, const VecX& gp, const VecX& gn,
                         const LossMargins& m = LossMargins{}) {
  if (gs.size() != gp.size() || gs.size() != gn.size())
    throw std::invalid_argument("hinge_loss: length mismatch");
  return std::max((gs - gp).norm() - m.hinge_pos, 0.0) +
         std::max(m.hinge_neg - (gs - gn).norm(), 0.0);
}

/**
 * @brief Yaw alignment loss between a pre-aligned source descriptor and the
 * positive's descriptor.
 *
 * Every aligned row should sit near its same-index partner and far from all
 * other rows. Per row i, with d(i,j) the L2 distance between row i of the
 * aligned source and row j of the positive:
 *
 *   loss_i = log(1 + sum_{j != i} exp(g*(d(i,i) - yaw_pos)^2
 *                                     + g*(yaw_neg - d(i,j))^2))
 *
 * averaged over rows. At g = 40 the exponents reach ~78, far beyond float
 * range, so each row is evaluated as a max-subtracted log-sum-exp.
 */
inline double circle_yaw_loss(const MatX& ds_aligned, const MatX& dp,
                              const LossMargins& m = LossMargins{}) {
  detail::check_same_shape(ds_aligned, dp, "circle_yaw_loss");
  if (ds_aligned.rows() < 2)
    throw std::invalid_argument("circle_yaw_loss: need at least two rows");
  if (!ds_aligned.allFinite() || !dp.allFinite())
    throw std::invalid_argument("circle_yaw_loss: non-finite input");
  const Eigen::Index T = ds_aligned.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    const double a = m.gamma * std::pow((ds_aligned.row(i) - dp.row(i)).norm() - m.yaw_pos, 2);
    double peak = 0.0;  // the implicit exp(0) term inside log(1 + ...)
    std::vector<double> exponents;
    exponents.reserve(static_cast<std::size_t>(T) - 1);
    for (Eigen::Index j = 0; j < T; ++j) {
      if (j == i) continue;
      const double e =
          a + m.gamma * std::pow(m.yaw_neg - (ds_aligned.row(i) - dp.row(j)).norm(), 2);
      exponents.push_back(e);
      peak = std::max(peak, e);
    }
    double s = std::exp(-peak);
    for (double e : exponents) s += std::exp(e - peak);
    total += peak + std::log(s);
  }
  return total / static_cast<double>(T);
}

inline double circle_yaw_loss(const LocalViewDescriptor& ds_aligned,
                              const LocalViewDescriptor& dp,
                              const LossMargins& m = LossMargins{}) {
  return circle_yaw_loss(ds_aligned.data, dp.data, m);
}

/**
 * @brief Penalizes a descriptor decoded at the true pose that fails to beat
 * one decoded at a nearby biased pose by the margin, using the mean per-row
 * distance to the positive's descriptor.
 */
inline double translation_bias_loss(const MatX& d_true, const MatX& d_biased, const MatX& dp,
                                    const LossMargins& m = LossMargins{}) {
  detail::check_same_shape(d_true, d_biased, "translation_bias_loss");
  detail::check_same_shape(d_true, dp, "translation_bias_loss");
  return std::max(matching_cost(d_true, dp) - matching_cost(d_biased, dp) + m.translation,
                  0.0);
}

inline double translation_bias_loss(const LocalViewDescriptor& d_true,
                                    const LocalViewDescriptor& d_biased,
                                    const LocalViewDescriptor& dp,
                                    const LossMargins& m = LossMargins{}) {
  return translation_bias_loss(d_true.data, d_biased.data, dp.data, m);
}

/**
 * @brief Source descriptor decoded at the ground-truth pose and rolled into
 * the positive's angular frame: recenter the source grid with the pose's
 * translation, decode, then shift the rows by -T * yaw / 360.
 */
inline LocalViewDescriptor aligned_source_descriptor(const BevGrid& qs, const Pose2D& xi,
                                                     const DecoderWeights& weights,
                                                     double radial_step_m = 0.0) {
  const BevGrid padded = bev_pad(qs, xi.x_m, xi.y_m);
  const double step =
      radial_step_m > 0.0 ? radial_step_m : default_radial_step(qs, weights.hyper.R);
  const PolarGrid polar = polar_transform(padded, weights.hyper.T, weights.hyper.R, step);
  LocalViewDescriptor desc = decode_local_view(polar, weights);
  const double shift = -static_cast<double>(weights.hyper.T) * xi.yaw_deg / 360.0;
  desc.data = circular_shift(desc.data, shift, 0);
  return desc;
}

//============================================================================
// Analytic gradients
//============================================================================

struct VectorTripleGradient {
  double loss = 0.0;
  bool at_kink = false;  // evaluated within kKinkMargin of a non-smooth point
  VecX gs, gp, gn;
};

/** Gradient convention at hinge kinks and zero distances: zero. */
inline VectorTripleGradient triplet_margin_gradients(const VecX& gs, const VecX& gp,
                                                     const VecX& gn,
                                                     const LossMargins& m = LossMargins{}) {
  VectorTripleGradient out;
  out.loss = triplet_margin_loss(gs, gp, gn, m);
  out.gs = VecX::Zero(gs.size());
  out.gp = VecX::Zero(gs.size());
  out.gn = VecX::Zero(gs.size());
  const double arg = (gs - gp).norm() - (gs - gn).norm() + m.triplet;
  if (std::abs(arg) < kKinkMargin) out.at_kink = true;
  if (arg > 0.0) {
    const VecX up = detail::unit_difference(gs, gp, out.at_kink);
    const VecX un = detail::unit_difference(gs, gn, out.at_kink);
    out.gs = up - un;
    out.gp = -up;
    out.gn = un;
  }
  return out;
}

inline VectorTripleGradient hinge_gradients(const VecX& gs, const VecX& gp, const VecX& gn,
                                            const LossMargins& m = LossMargins{}) {
  VectorTripleGradient out;
  out.loss = hinge_loss(gs, gp, gn, m);
  out.gs = VecX::Zero(gs.size());
  out.gp = VecX::Zero(gs.size());
  out.gn = VecX::Zero(gs.size());
  const double arg_p = (gs - gp).norm() - m.hinge_pos;
  const double arg_n = m.hinge_neg - (gs - gn).norm();
  if (std::abs(arg_p) < kKinkMargin || std::abs(arg_n) < kKinkMargin) out.at_kink = true;
  if (arg_p > 0.0) {
    const VecX up = detail::unit_difference(gs, gp, out.at_kink);
    out.gs += up;
    out.gp = -up;
  }
  if (arg_n > 0.0) {
    const VecX un = detail::unit_difference(gs, gn, out.at_kink);
    out.gs -= un;
    out.gn = un;
  }
  return out;
}

struct DescriptorPairGradient {
  double loss = 0.0;
  bool at_kink = false;
  MatX ds, dp;
};

inline DescriptorPairGradient circle_yaw_gradients(const MatX& ds_aligned, const MatX& dp,
                                                   const LossMargins& m = LossMargins{}) {
  DescriptorPairGradient out;
  out.loss = circle_yaw_loss(ds_aligned, dp, m);
  out.ds = MatX::Zero(ds_aligned.rows(), ds_aligned.cols());
  out.dp = MatX::Zero(dp.rows(), dp.cols());
  const Eigen::Index T = ds_aligned.rows();
  const double Td = static_cast<double>(T);

  for (Eigen::Index i = 0; i < T; ++i) {
    const double dii = (ds_aligned.row(i) - dp.row(i)).norm();
    if (dii < kKinkMargin) out.at_kink = true;
    const double a = m.gamma * std::pow(dii - m.yaw_pos, 2);

    std::vector<Eigen::Index> cols;
    std::vector<double> dij, expo;
    double peak = 0.0;
    for (Eigen::Index j = 0; j < T; ++j) {
      if (j == i) continue;
      const double d = (ds_aligned.row(i) - dp.row(j)).norm();
      if (d < kKinkMargin) out.at_kink = true;
      const double e = a + m.gamma * std::pow(m.yaw_neg - d, 2);
      cols.push_back(j);
      dij.push_back(d);
      expo.push_back(e);
      peak = std::max(peak, e);
    }
    double s = std::exp(-peak);
    for (double e : expo) s += std::exp(e - peak);

    double weight_sum = 0.0;
    for (std::size_t t = 0; t < cols.size(); ++t) {
      const double w = std::exp(expo[t] - peak) / s;  // softmax weight of term (i, j)
      weight_sum += w;
      const double dloss_dd = w * (-2.0 * m.gamma * (m.yaw_neg - dij[t])) / Td;
      if (dij[t] >= 1e-12) {
        const VecX u =
            (ds_aligned.row(i) - dp.row(cols[t])).transpose() / dij[t];
        out.ds.row(i) += dloss_dd * u.transpose();
        out.dp.row(cols[t]) -= dloss_dd * u.transpose();
      }
    }
    const double dloss_dii = weight_sum * 2.0 * m.gamma * (dii - m.yaw_pos) / Td;
    if (dii >= 1e-12) {
      const VecX u = (ds_aligned.row(i) - dp.row(i)).transpose() / dii;
      out.ds.row(i) += dloss_dii * u.transpose();
      out.dp.row(i) -= dloss_dii * u.transpose();
    }
  }
  return out;
}

struct DescriptorTripleGradient {
  double loss = 0.0;
  bool at_kink = false;
  MatX d_true, d_biased, dp;
};

inline DescriptorTripleGradient translation_bias_gradients(
    const MatX& d_true, const MatX& d_biased, const MatX& dp,
    const LossMargins& m = LossMargins{}) {
  DescriptorTripleGradient out;
  out.loss = translation_bias_loss(d_true, d_biased, dp, m);
  out.d_true = MatX::Zero(d_true.rows(), d_true.cols());
  out.d_biased = MatX::Zero(d_true.rows(), d_true.cols());
  out.dp = MatX::Zero(d_true.rows(), d_true.cols());
  const double arg =
      matching_cost(d_true, dp) - matching_cost(d_biased, dp) + m.translation;
  if (std::abs(arg) < kKinkMargin) out.at_kink = true;
  if (arg <= 0.0) return out;
  const double Td = static_cast<double>(d_true.rows());
  for (Eigen::Index i = 0; i < d_true.rows(); ++i) {
    const double nt = (d_true.row(i) - dp.row(i)).norm();
    const double nb = (d_biased.row(i) - dp.row(i)).norm();
    if (nt < kKinkMargin || nb < kKinkMargin) out.at_kink = true;
    if (nt >= 1e-12) {
      const VecX u = (d_true.row(i) - dp.row(i)).transpose() / nt;
      out.d_true.row(i) = u.transpose() / Td;
      out.dp.row(i) -= u.transpose() / Td;
    }
    if (nb >= 1e-12) {
      const VecX u = (d_biased.row(i) - dp.row(i)).transpose() / nb;
      out.d_biased.row(i) = -u.transpose() / Td;
      out.dp.row(i) += u.transpose() / Td;
    }
  }
  return out;
}

//============================================================================
// Triplet sampling with hard-sample mining
//============================================================================

struct Triplet {
  std::size_t source = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triplet& o) const {
    return source == o.source && positive == o.positive && negative == o.negative;
  }
};

/** @brief Uniform offset in the annulus lo <= |d| <= hi (area-uniform). */
inline Vec2 sample_bias_offset(Rng& rng, double lo = 0.3, double hi = 1.5) {
  if (!(lo >= 0.0) || !(hi > lo)) throw std::invalid_argument("sample_bias_offset: bad annulus");
  const double r = std::sqrt(lo * lo + rng.uniform() * (hi * hi - lo * lo));
  const double a = rng.uniform() * 2.0 * kPi;
  return Vec2(r * std::sin(a), r * std::cos(a));
}

/**
 * @brief Streams training triplets from ground-truth world poses.
 *
 * Positives lie within pos_radius of the source frame, negatives beyond
 * neg_radius. Triplets reported with positive loss enter a hard queue and are
 * interleaved with fresh uniform samples until their loss has been zero for
 * clear_count consecutive evaluations. Sources with no valid positive are
 * skipped.
 */
class TripletSampler {
 public:
  TripletSampler(const std::vector<Pose2D>& world_poses, std::uint64_t seed,
                 double pos_radius_m = 2.0, double neg_radius_m = 3.0, int clear_count = 2)
      : rng_(seed), clear_count_(clear_count) {
    if (!(neg_radius_m > pos_radius_m))
      throw std::invalid_argument("TripletSampler: neg_radius must exceed pos_radius");
    if (clear_count < 1) throw std::invalid_argument("TripletSampler: clear_count must be >= 1");
    positives_.resize(world_poses.size());
    negatives_.resize(world_poses.size());
    for (std::size_t s = 0; s < world_poses.size(); ++s) {
      for (std::size_t o = 0; o < world_poses.size(); ++o) {
        if (o == s) continue;
        const double d = frame_distance_m(world_poses[s], world_poses[o]);
        if (d < pos_radius_m)
          positives_[s].push_back(o);
        else if (d > neg_radius_m)
          negatives_[s].push_back(o);
      }
      if (!positives_[s].empty() && !negatives_[s].empty()) usable_.push_back(s);
    }
  }

  bool exhausted() const { return usable_.empty(); }
  std::size_t hard_queue_size() const { return queue_.size(); }

  /** Next triplet: hard-queue entries interleave 1:1 with fresh samples. */
  Triplet next() {
    if (!queue_.empty() && emit_hard_) {
      emit_hard_ = false;
      if (cursor_ >= queue_.size()) cursor_ = 0;
      return queue_[cursor_++];
    }
    emit_hard_ = true;
    return fresh();
  }

  /** Feeds back the triplet's current loss; maintains the hard queue. */
  void report(const Triplet& t, double loss) {
    const Key key{t.source, t.positive, t.negative};
    auto it = counts_.find(key);
    if (loss > 0.0) {
      if (it == counts_.end()) {
        counts_.emplace(key, 0);
        queue_.push_back(t);
      } else {
        it->second = 0;
      }
      return;
    }
    if (it == counts_.end()) return;
    if (++it->second >= clear_count_) {
      counts_.erase(it);
      for (auto q = queue_.begin(); q != queue_.end(); ++q) {
        if (*q == t) {
          const std::size_t pos = static_cast<std::size_t>(q - queue_.begin());
          if (pos < cursor_) --cursor_;
          queue_.erase(q);
          break;
        }
      }
    }
  }

 private:
  using Key = std::array<std::size_t, 3>;

  Triplet fresh() {
    if (usable_.empty())
      throw std::logic_error("TripletSampler: no source has both a positive and a negative");
    const std::size_t s = usable_[rng_.uniform_index(usable_.size())];
    const std::size_t p = positives_[s][rng_.uniform_index(positives_[s].size())];
    const std::size_t n = negatives_[s][rng_.uniform_index(negatives_[s].size())];
    return Triplet{s, p, n};
  }

  Rng rng_;
  int clear_count_;
  std::vector<std::vector<std::size_t>> positives_, negatives_;
  std::vector<std::size_t> usable_;
  std::deque<Triplet> queue_;
  std::map<Key, int> counts_;
  std::size_t cursor_ = 0;
  bool emit_hard_ = true;
};

}  // namespace bevloc
