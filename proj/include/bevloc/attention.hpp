#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bevloc/embedding.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/pose2d.hpp"
#include "bevloc/tensor.hpp"

namespace bevloc {

constexpr double kLayerNormEps = 1e-5;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/** @brief Core projection matrices of one attention layer (all C x C). */
struct AttentionCoreWeights {
  MatX wq, wk, wv, wo;
  MatX wr;  // geometric-bias projection; empty for layers without a bias path
  int heads = 1;

  void validate(std::size_t C) const {
    auto square = [&](const MatX& m) {
      return m.rows() == static_cast<Eigen::Index>(C) &&
             m.cols() == static_cast<Eigen::Index>(C);
    };
    if (!square(wq) || !square(wk) || !square(wv) || !square(wo))
      throw std::invalid_argument("AttentionCoreWeights: projections must be C x C");
    if (wr.size() != 0 && !square(wr))
      throw std::invalid_argument("AttentionCoreWeights: wr must be C x C or empty");
    if (heads < 1 || C % static_cast<std::size_t>(heads) != 0)
      throw std::invalid_argument("AttentionCoreWeights: heads must divide C");
  }
};

struct LayerNormParams {
  VecX gamma, beta;
};

struct FeedForwardWeights {
  MatX w1;  // C x 2C
  VecX b1;  // 2C
  MatX w2;  // 2C x C
  VecX b2;  // C
};

/**
 * @brief One transformer block: attention, residual + layer norm, then a
 * two-layer feed-forward (hidden width 2C, GELU), residual + layer norm.
 */
struct AttentionBlockWeights {
  AttentionCoreWeights attn;
  LayerNormParams ln1, ln2;
  FeedForwardWeights ffn;

  void validate(std::size_t C) const {
    attn.validate(C);
    const auto ci = static_cast<Eigen::Index>(C);
    if (ln1.gamma.size() != ci || ln1.beta.size() != ci || ln2.gamma.size() != ci ||
        ln2.beta.size() != ci)
      throw std::invalid_argument("AttentionBlockWeights: layer norm params must be length C");
    if (ffn.w1.rows() != ci || ffn.w1.cols() != 2 * ci || ffn.b1.size() != 2 * ci ||
        ffn.w2.rows() != 2 * ci || ffn.w2.cols() != ci || ffn.b2.size() != ci)
      throw std::invalid_argument("AttentionBlockWeights: feed-forward shapes invalid");
  }
};

namespace detail {

inline void layer_norm_rows(MatX& x, const LayerNormParams& ln) {
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = x.row(i).squaredNorm() / n - mu * mu;
    const double inv = 1.0 / std::sqrt(std::max(var, 0.0) + kLayerNormEps);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      x(i, c) = (x(i, c) - mu) * inv * ln.gamma[c] + ln.beta[c];
  }
}

inline MatX feed_forward(const MatX& x, const FeedForwardWeights& ffn) {
  MatX hidden = x * ffn.w1;
  hidden.rowwise() += ffn.b1.transpose();
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden.data()[i] = gelu(hidden.data()[i]);
  MatX out = hidden * ffn.w2;
  out.rowwise() += ffn.b2.transpose();
  return out;
}

/**
 * Attention with optional relative geometric bias. Scores follow
 *   e_ij = (q_i . (k_j + r_ij)) / sqrt(C)
 * per head, where r_ij = bias_proj.row(offset_of(i, j)); softmax over j.
 */
inline MatX attention_core(const MatX& xq, const MatX& xkv, const AttentionCoreWeights& w,
                           const MatX* bias_proj,
                           const std::vector<std::vector<int>>* offset_of) {
  const Eigen::Index n = xq.rows(), m = xkv.rows(), C = xq.cols();
  const int heads = w.heads;
  const Eigen::Index ch = C / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));

  const MatX q = xq * w.wq;
  const MatX k = xkv * w.wk;
  const MatX v = xkv * w.wv;

  MatX concat(n, C);
  MatX scores(n, m);
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * ch, ch);
    const auto kh = k.middleCols(h * ch, ch);
    scores.noalias() = qh * kh.transpose();
    if (bias_proj != nullptr) {
      const auto bh = bias_proj->middleCols(h * ch, ch);
      const MatX qb = qh * bh.transpose();  // n x offsets
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
          scores(i, j) += qb(i, (*offset_of)[static_cast<std::size_t>(i)]
                                            [static_cast<std::size_t>(j)]);
    }
    scores *= scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = scores.row(i).maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        scores(i, j) = std::exp(scores(i, j) - mx);
        sum += scores(i, j);
      }
      scores.row(i) /= sum;
    }
    concat.middleCols(h * ch, ch).noalias() = scores * v.middleCols(h * ch, ch);
  }
  return concat * w.wo;
}

inline MatX attention_block(const MatX& xq, const MatX& xkv, const AttentionBlockWeights& w,
                            const MatX* bias_proj,
                            const std::vector<std::vector<int>>* offset_of) {
  MatX h = xq + attention_core(xq, xkv, w.attn, bias_proj, offset_of);
  layer_norm_rows(h, w.ln1);
  MatX out = h + feed_forward(h, w.ffn);
  layer_norm_rows(out, w.ln2);
  return out;
}

}  // namespace detail

/**
 * @brief Radial self-attention: per sector, the R radial bins attend to each
 * other with scores biased by embeddings of their ego-frame distance
 * |i - j| * radial_step (temperature sigma_r).
 */
inline PolarGrid radial_self_attention(const PolarGrid& polar, const AttentionBlockWeights& w,
                                       double sigma_r) {
  const std::size_t T = polar.T(), R = polar.R(), C = polar.C();
  w.validate(C);
  if (w.attn.wr.size() == 0)
    throw std::invalid_argument("radial_self_attention: wr required for the distance bias");

  MatX bias(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(C));
  for (std::size_t d = 0; d < R; ++d)
    bias.row(static_cast<Eigen::Index>(d)) =
        sinusoidal_embedding(static_cast<double>(d) * polar.radial_step_m, sigma_r, C)
            .transpose();
  const MatX bias_proj = bias * w.attn.wr;

  std::vector<std::vector<int>> offset_of(R, std::vector<int>(R));
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j)
      offset_of[i][j] = static_cast<int>(i > j ? i - j : j - i);

  PolarGrid out = polar;
  auto rows = polar.data.as_rows();
  auto out_rows = out.data.as_rows();
  for (std::size_t t = 0; t < T; ++t) {
    const MatX sector = rows.middleRows(static_cast<Eigen::Index>(t * R),
                                        static_cast<Eigen::Index>(R));
    out_rows.middleRows(static_cast<Eigen::Index>(t * R), static_cast<Eigen::Index>(R)) =
        detail::attention_block(sector, sector, w, &bias_proj, &offset_of);
  }
  return out;
}

/**
 * @brief Angular self-attention over the T sector rows of a descriptor, with
 * scores biased by embeddings of the wrapped relative angle
 * (i - j) * 360/T in (-180, 180] (temperature sigma_a).
 */
inline MatX angular_self_attention(const MatX& desc, const AttentionBlockWeights& w,
                                   double sigma_a) {
  const std::size_t T = static_cast<std::size_t>(desc.rows());
  const std::size_t C = static_cast<std::size_t>(desc.cols());
  w.validate(C);
  if (w.attn.wr.size() == 0)
    throw std::invalid_argument("angular_self_attention: wr required for the angle bias");

  MatX bias(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
  for (std::size_t d = 0; d < T; ++d) {
    const double theta =
        wrap_relative_deg(static_cast<double>(d) * 360.0 / static_cast<double>(T));
    bias.row(static_cast<Eigen::Index>(d)) =
        sinusoidal_embedding(theta, sigma_a, C).transpose();
  }
  const MatX bias_proj = bias * w.attn.wr;

  std::vector<std::vector<int>> offset_of(T, std::vector<int>(T));
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      offset_of[i][j] = static_cast<int>((i + T - j) % T);

  return detail::attention_block(desc, desc, w, &bias_proj, &offset_of);
}

/**
 * @brief Symmetric multi-head cross-attention between two descriptors with
 * shared weights and no positional bias; returns both refined descriptors.
 */
inline std::pair<MatX, MatX> cross_attention(const MatX& a, const MatX& b,
                                             const AttentionBlockWeights& w) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("cross_attention: channel mismatch");
  w.validate(static_cast<std::size_t>(a.cols()));
  MatX oa = detail::attention_block(a, b, w, nullptr, nullptr);
  MatX ob = detail::attention_block(b, a, w, nullptr, nullptr);
  return {std::move(oa), std::move(ob)};
}

}  // namespace bevloc
