#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "bevloc/decoder.hpp"
#include "bevloc/grid_ops.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/parallel.hpp"
#include "bevloc/pose2d.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

struct YawEstimate {
  double yaw_deg = 0.0;   // wrapped to [-180, 180)
  double cost = 0.0;      // matching cost at the estimated shift
  double shift_bins = 0;  // fractional angular shift realizing the estimate
};

namespace detail {

// cost of rolling `ds` by fractional phi (in bins) against dp
inline double rolled_cost(const MatX& ds, const MatX& dp, double phi) {
  const std::size_t T = static_cast<std::size_t>(ds.rows());
  const auto [k0, f] = split_shift(phi, T);
  const std::size_t k1 = (k0 + 1) % T;
  double acc = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t a = (i + T - k0) % T;
    if (f == 0.0) {
      acc += (ds.row(static_cast<Eigen::Index>(a)) - dp.row(static_cast<Eigen::Index>(i)))
                 .norm();
    } else {
      const std::size_t b = (i + T - k1) % T;
      acc += ((1.0 - f) * ds.row(static_cast<Eigen::Index>(a)) +
              f * ds.row(static_cast<Eigen::Index>(b)) -
              dp.row(static_cast<Eigen::Index>(i)))
                 .norm();
    }
  }
  return acc / static_cast<double>(T);
}

struct GoldenResult {
  double x;
  double value;
};

// Minimize fn over [lo, hi]; returns the best sampled point.
inline GoldenResult golden_section(const std::function<double(double)>& fn, double lo,
                                   double hi, int iters) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = fn(x1), f2 = fn(x2);
  GoldenResult best = f1 <= f2 ? GoldenResult{x1, f1} : GoldenResult{x2, f2};
  for (int it = 0; it < iters; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = fn(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = fn(x2);
    }
    const GoldenResult cur = f1 <= f2 ? GoldenResult{x1, f1} : GoldenResult{x2, f2};
    if (cur.value < best.value) best = cur;
  }
  return best;
}

}  // namespace detail

// Fractional shifts subdivide each angular bin this many times during the
// coarse scan, so the scan dominates any enumeration at that pitch or wider.
constexpr std::size_t kYawCoarseSubdiv = 10;

/**
 * @brief Estimates the relative yaw between two local-view descriptors.
 *
 * Evaluates the matching cost at every integer angular shift and on a
 * fractional grid subdividing each bin (interpolated shifts can dip below
 * both neighbouring integer costs), then polishes the best grid points by
 * golden-section search. With refine_iters <= 0 only integer shifts are
 * considered. The recovered shift phi maps to yaw -360 * phi / T, wrapped to
 * [-180, 180); cost ties prefer the smaller |yaw|.
 */
inline YawEstimate estimate_yaw(const MatX& ds, const MatX& dp, int refine_iters = 20) {
  if (ds.rows() != dp.rows() || ds.cols() != dp.cols())
    throw std::invalid_argument("estimate_yaw: descriptor shapes differ");
  if (ds.rows() < 1) throw std::invalid_argument("estimate_yaw: empty descriptor");
  const std::size_t T = static_cast<std::size_t>(ds.rows());
  const double Td = static_cast<double>(T);

  // pairwise row distances: pair(a, b) = |ds_a - dp_b|
  MatX pair(ds.rows(), ds.rows());
  for (Eigen::Index a = 0; a < ds.rows(); ++a)
    for (Eigen::Index b = 0; b < dp.rows(); ++b)
      pair(a, b) = (ds.row(a) - dp.row(b)).norm();

  std::vector<double> discrete(T, 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < T; ++j)
      acc += pair(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>((j + k) % T));
    discrete[k] = acc / Td;
  }

  auto yaw_of = [&](double phi) { return wrap_deg(-360.0 * phi / Td); };
  auto better = [&](double cost_a, double phi_a, double cost_b, double phi_b) {
    if (cost_a != cost_b) return cost_a < cost_b;
    return std::abs(yaw_of(phi_a)) < std::abs(yaw_of(phi_b));
  };

  std::vector<std::size_t> order(T);
  for (std::size_t k = 0; k < T; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return better(discrete[a], static_cast<double>(a), discrete[b], static_cast<double>(b));
  });

  double best_phi = static_cast<double>(order[0]);
  double best_cost = discrete[order[0]];

  if (T > 1 && refine_iters > 0) {
    // Quadratic forms of the per-row residuals make a fractional evaluation
    // O(T): the row blended between shifts k and k+1 has squared distance
    // (1-f)^2 sq(a) + f^2 sq(a') + 2f(1-f) cross(a) against the same target.
    MatX sq(pair.rows(), pair.cols()), cross(pair.rows(), pair.cols());
    MatX resid(ds.rows(), ds.cols());
    for (Eigen::Index b = 0; b < dp.rows(); ++b) {
      resid = ds;
      resid.rowwise() -= dp.row(b);
      for (Eigen::Index a = 0; a < ds.rows(); ++a) {
        sq(a, b) = resid.row(a).squaredNorm();
        cross(a, b) = resid.row(a).dot(
            resid.row(static_cast<Eigen::Index>((static_cast<std::size_t>(a) + T - 1) % T)));
      }
    }
    auto frac_cost = [&](double phi) -> double {
      double s = std::fmod(phi, Td);
      if (s < 0.0) s += Td;
      const double kf = std::floor(s);
      const std::size_t k = static_cast<std::size_t>(kf) % T;
      const double f = s - kf;
      if (f == 0.0) return discrete[k];
      const double w0 = (1.0 - f) * (1.0 - f), w1 = f * f, wx = 2.0 * f * (1.0 - f);
      double acc = 0.0;
      for (std::size_t b = 0; b < T; ++b) {
        const std::size_t a = (b + T - k) % T;
        const std::size_t a2 = (a + T - 1) % T;
        const double q = w0 * sq(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +
                         w1 * sq(static_cast<Eigen::Index>(a2), static_cast<Eigen::Index>(b)) +
                         wx * cross(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        acc += std::sqrt(std::max(q, 0.0));
      }
      return acc / Td;
    };

    // coarse scan of the subdivided grid, tracking the few best points
    constexpr std::size_t kPolish = 3;
    double top_cost[kPolish], top_phi[kPolish];
    std::size_t top_n = 0;
    auto offer = [&](double cost, double phi) {
      std::size_t pos = top_n < kPolish ? top_n : kPolish;
      while (pos > 0 && better(cost, phi, top_cost[pos - 1], top_phi[pos - 1])) --pos;
      if (pos >= kPolish) return;
      for (std::size_t q = std::min(top_n, kPolish - 1); q > pos; --q) {
        top_cost[q] = top_cost[q - 1];
        top_phi[q] = top_phi[q - 1];
      }
      top_cost[pos] = cost;
      top_phi[pos] = phi;
      if (top_n < kPolish) ++top_n;
    };
    for (std::size_t k = 0; k < T; ++k) offer(discrete[k], static_cast<double>(k));
    const double pitch = 1.0 / static_cast<double>(kYawCoarseSubdiv);
    for (std::size_t k = 0; k < T; ++k)
      for (std::size_t m = 1; m < kYawCoarseSubdiv; ++m) {
        const double phi = static_cast<double>(k * kYawCoarseSubdiv + m) /
                           static_cast<double>(kYawCoarseSubdiv);
        offer(frac_cost(phi), phi);
      }

    for (std::size_t idx = 0; idx < top_n; ++idx) {
      if (better(top_cost[idx], top_phi[idx], best_cost, best_phi)) {
        best_cost = top_cost[idx];
        best_phi = top_phi[idx];
      }
      const auto r = detail::golden_section(frac_cost, top_phi[idx] - pitch,
                                            top_phi[idx] + pitch, refine_iters);
      if (better(r.value, r.x, best_cost, best_phi)) {
        best_cost = r.value;
        best_phi = r.x;
      }
    }
  }

  YawEstimate est;
  double phi = std::fmod(best_phi, Td);
  if (phi < 0.0) phi += Td;
  est.shift_bins = phi;
  est.yaw_deg = wrap_deg(-360.0 * phi / Td);
  est.cost = best_cost;
  return est;
}

inline YawEstimate estimate_yaw(const LocalViewDescriptor& ds, const LocalViewDescriptor& dp,
                                int refine_iters = 20) {
  return estimate_yaw(ds.data, dp.data, refine_iters);
}

//============================================================================
// Descriptor index
//============================================================================

struct IndexEntry {
  std::string frame_id;
  std::string session;
  int seq = -1;  // keyframe position within its session
  std::optional<int> floor;
  std::optional<Pose2D> world_pose;
  VecX global;      // unit-norm global descriptor
  PolarGrid polar;  // cached polar grid for re-ranking
};

/** @brief In-memory map index: global descriptors plus cached polar grids. */
struct DescriptorIndex {
  GridGeometry geometry;
  std::vector<IndexEntry> entries;
  std::unordered_map<std::string, std::size_t> by_id;

  void add(IndexEntry entry) {
    if (entry.frame_id.empty())
      throw std::invalid_argument("DescriptorIndex: empty frame id");
    if (by_id.count(entry.frame_id))
      throw std::invalid_argument("DescriptorIndex: duplicate frame id " + entry.frame_id);
    const double norm = entry.global.norm();
    if (std::abs(norm - 1.0) > 1e-6)
      throw std::invalid_argument("DescriptorIndex: descriptor for " + entry.frame_id +
                                  " is not unit norm");
    by_id.emplace(entry.frame_id, entries.size());
    entries.push_back(std::move(entry));
  }

  const IndexEntry* find(const std::string& frame_id) const {
    auto it = by_id.find(frame_id);
    return it == by_id.end() ? nullptr : &entries[it->second];
  }
};

struct RetrievalHit {
  std::string frame_id;
  double distance = 0.0;  // L2 distance between global descriptors
  std::size_t entry_index = 0;
};

/** @brief K nearest entries by global-descriptor L2 distance, ties by frame id. */
inline std::vector<RetrievalHit> topo_retrieve(const DescriptorIndex& index, const VecX& g,
                                               std::size_t K = 20) {
  if (index.entries.empty()) throw std::logic_error("topo_retrieve: empty index");
  if (K < 1) throw std::invalid_argument("topo_retrieve: K must be >= 1");
  if (g.size() != index.entries.front().global.size())
    throw std::invalid_argument("topo_retrieve: descriptor length mismatch");
  std::vector<RetrievalHit> hits(index.entries.size());
  for (std::size_t i = 0; i < index.entries.size(); ++i)
    hits[i] = {index.entries[i].frame_id, (index.entries[i].global - g).norm(), i};
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.frame_id < b.frame_id;
  });
  if (hits.size() > K) hits.resize(K);
  return hits;
}

constexpr int kLoopTemporalExclusion = 10;  // keyframes, same session

/**
 * @brief All entries with global-descriptor distance below the threshold,
 * excluding the query frame itself and same-session entries within the
 * temporal exclusion window.
 */
inline std::vector<RetrievalHit> topo_loop_candidates(
    const DescriptorIndex& index, const VecX& g, double threshold,
    const std::string& query_frame_id = "", const std::string& query_session = "",
    int query_seq = -1, int exclusion_window = kLoopTemporalExclusion) {
  if (index.entries.empty()) throw std::logic_error("topo_loop_candidates: empty index");
  if (threshold < 0.0)
    throw std::invalid_argument("topo_loop_candidates: threshold must be >= 0");
  std::vector<RetrievalHit> hits;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const IndexEntry& e = index.entries[i];
    if (!query_frame_id.empty() && e.frame_id == query_frame_id) continue;
    if (query_seq >= 0 && e.seq >= 0 && e.session == query_session &&
        std::abs(e.seq - query_seq) <= exclusion_window)
      continue;
    const double d = (e.global - g).norm();
    if (d < threshold) hits.push_back({e.frame_id, d, i});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.frame_id < b.frame_id;
  });
  return hits;
}

struct RerankedHit {
  std::string frame_id;
  std::size_t entry_index = 0;
  double global_distance = 0.0;
  double cost = 0.0;     // yaw-matching cost against the query descriptor
  double yaw_deg = 0.0;  // estimated relative yaw
};

/**
 * @brief Re-orders retrieval candidates by yaw-matching cost between the
 * query's local-view descriptor and each candidate's (no padding applied).
 * The candidate set is preserved; ties break on frame id.
 */
inline std::vector<RerankedHit> rerank(
    const std::vector<RetrievalHit>& candidates, const LocalViewDescriptor& query_desc,
    const std::function<const LocalViewDescriptor&(const RetrievalHit&)>& desc_of) {
  std::vector<RerankedHit> out;
  out.reserve(candidates.size());
  for (const auto& hit : candidates) {
    const YawEstimate est = estimate_yaw(query_desc, desc_of(hit));
    out.push_back({hit.frame_id, hit.entry_index, hit.distance, est.cost, est.yaw_deg});
  }
  std::sort(out.begin(), out.end(), [](const RerankedHit& a, const RerankedHit& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.frame_id < b.frame_id;
  });
  return out;
}

//============================================================================
// Metric localization
//============================================================================

struct SearchConfig {
  double coarse_extent_m = 6.0;  // max |offset| probed per axis
  double coarse_step_m = 0.9;
  std::size_t coarse_keep = 5;   // best coarse cells refined
  std::size_t fine_samples = 32; // random draws per kept cell
  double fine_radius_m = 0.45;
  int yaw_refine_iters = 20;
  double confidence_threshold = 0.75;
  std::uint64_t seed = 0x5eedULL;

  void validate(const BevGrid& grid) const {
    if (!(coarse_step_m > 0.0) || !(coarse_extent_m >= 0.0) || !(fine_radius_m >= 0.0))
      throw std::invalid_argument("SearchConfig: negative search geometry");
    if (coarse_keep < 1) throw std::invalid_argument("SearchConfig: coarse_keep must be >= 1");
    const double half_extent =
        static_cast<double>(std::min(grid.H(), grid.W())) / 2.0 * grid.grid_size_m;
    if (coarse_extent_m + fine_radius_m > half_extent * (1.0 + 1e-12))
      throw std::invalid_argument("SearchConfig: search domain exceeds half the grid extent");
  }
};

/** @brief Estimated relative pose from source to target frame. */
struct PoseEstimate {
  Pose2D pose;
  double cost = 0.0;
  bool accepted = false;
};

namespace detail {

struct Hypothesis {
  double x, y;
  double cost = std::numeric_limits<double>::infinity();
  double yaw = 0.0;
};

inline bool hypothesis_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  const double ya = std::abs(a.yaw), yb = std::abs(b.yaw);
  if (ya != yb) return ya < yb;
  if (a.x != b.x) return a.x < b.x;
  return a.y < b.y;
}

}  // namespace detail

/**
 * @brief Evaluates one translation hypothesis: recenters the source grid,
 * decodes it, and estimates yaw against the target descriptor.
 */
inline std::pair<double, double> evaluate_translation_hypothesis(
    const BevGrid& source, double x_m, double y_m, const LocalViewDescriptor& target_desc,
    const DecoderWeights& weights, double radial_step_m, int yaw_refine_iters = 20) {
  const BevGrid padded = bev_pad(source, x_m, y_m);
  const PolarGrid polar =
      polar_transform(padded, weights.hyper.T, weights.hyper.R, radial_step_m);
  const LocalViewDescriptor desc = decode_local_view(polar, weights);
  const YawEstimate est = estimate_yaw(desc, target_desc, yaw_refine_iters);
  return {est.cost, est.yaw_deg};
}

/**
 * @brief Coarse-to-fine search for the relative pose between two frames.
 *
 * A coarse translation grid is scanned first; the best cells are refined with
 * seeded random samples. Each hypothesis recenters the source grid, decodes a
 * descriptor, and estimates yaw against the target's descriptor (decoded
 * once). The best (cost, |yaw|, x, y) hypothesis wins; the estimate is
 * accepted when its cost clears the confidence threshold.
 */
inline PoseEstimate metric_localize(const BevGrid& source, const BevGrid& target,
                                    const DecoderWeights& weights,
                                    const SearchConfig& cfg = SearchConfig{},
                                    double radial_step_m = 0.0) {
  if (source.H() != target.H() || source.W() != target.W() || source.C() != target.C())
    throw std::invalid_argument("metric_localize: grid shapes differ");
  cfg.validate(source);
  const double step =
      radial_step_m > 0.0 ? radial_step_m : default_radial_step(source, weights.hyper.R);

  const PolarGrid target_polar =
      polar_transform(target, weights.hyper.T, weights.hyper.R, step);
  const LocalViewDescriptor target_desc = decode_local_view(target_polar, weights);

  const long K = static_cast<long>(std::floor(cfg.coarse_extent_m / cfg.coarse_step_m + 1e-9));
  std::vector<detail::Hypothesis> coarse;
  for (long ix = -K; ix <= K; ++ix)
    for (long iy = -K; iy <= K; ++iy)
      coarse.push_back({static_cast<double>(ix) * cfg.coarse_step_m,
                        static_cast<double>(iy) * cfg.coarse_step_m});

  parallel_for(coarse.size(), [&](std::size_t i) {
    auto [cost, yaw] = evaluate_translation_hypothesis(
        source, coarse[i].x, coarse[i].y, target_desc, weights, step, cfg.yaw_refine_iters);
    coarse[i].cost = cost;
    coarse[i].yaw = yaw;
  });

  std::vector<detail::Hypothesis> ranked = coarse;
  std::sort(ranked.begin(), ranked.end(), detail::hypothesis_better);
  const std::size_t keep = std::min<std::size_t>(cfg.coarse_keep, ranked.size());

  Rng rng(cfg.seed);
  std::vector<detail::Hypothesis> fine;
  for (std::size_t c = 0; c < keep; ++c) {
    for (std::size_t s = 0; s < cfg.fine_samples; ++s) {
      const Vec2 d = rng.disk(cfg.fine_radius_m);
      fine.push_back({ranked[c].x + d.x(), ranked[c].y + d.y()});
    }
  }
  parallel_for(fine.size(), [&](std::size_t i) {
    auto [cost, yaw] = evaluate_translation_hypothesis(
        source, fine[i].x, fine[i].y, target_desc, weights, step, cfg.yaw_refine_iters);
    fine[i].cost = cost;
    fine[i].yaw = yaw;
  });

  detail::Hypothesis best = ranked.front();
  for (const auto& h : fine)
    if (detail::hypothesis_better(h, best)) best = h;

  PoseEstimate est;
  est.pose = Pose2D(best.x, best.y, best.yaw);
  est.cost = best.cost;
  est.accepted = best.cost < cfg.confidence_threshold;
  return est;
}

//============================================================================
// Full pipeline: retrieval, re-ranking, metric refinement
//============================================================================

struct GlobalLocalization {
  std::vector<RerankedHit> ranking;  // retrieval candidates after re-ranking
  std::string top_frame_id;
  PoseEstimate pose;  // relative pose from query to the top candidate
  VecX query_global;
};

/**
 * @brief Runs the full pipeline for one query grid: global pooling, top-K
 * retrieval, yaw-cost re-ranking, then metric localization against the
 * re-ranked top candidate (whose raw grid is fetched via grid_source).
 */
inline GlobalLocalization localize_global(
    const DescriptorIndex& index, const BevGrid& query, const DecoderWeights& weights,
    const SearchConfig& cfg, std::size_t K,
    const std::function<BevGrid(const std::string&)>& grid_source,
    const std::function<const LocalViewDescriptor&(const RetrievalHit&)>& desc_of) {
  const double step = index.geometry.radial_step_m;
  const PolarGrid polar = polar_transform(query, index.geometry.T, index.geometry.R, step);
  GlobalLocalization out;
  out.query_global = global_pool(polar, weights.hyper.pooling, weights.hyper.gem_p).values;

  const auto hits = topo_retrieve(index, out.query_global, K);
  const LocalViewDescriptor query_desc = decode_local_view(polar, weights);
  out.ranking = rerank(hits, query_desc, desc_of);
  out.top_frame_id = out.ranking.front().frame_id;
  out.pose = metric_localize(query, grid_source(out.top_frame_id), weights, cfg, step);
  return out;
}

}  // namespace bevloc
