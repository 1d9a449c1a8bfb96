#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bevloc/dataset.hpp"
#include "bevloc/localizer.hpp"
#include "bevloc/pose2d.hpp"

namespace bevloc {

/** @brief One localization outcome: retrieval ranking plus the pose estimated
 *  against the matched frame, with ground truth where available. */
struct EvalRecord {
  std::string query_id;
  std::vector<std::string> ranking;  // retrieved frame ids, best first
  std::string match_id;              // frame the pose was estimated against
  std::string gt_nearest_id;
  double gt_nearest_dist_m = std::numeric_limits<double>::infinity();
  Pose2D est_pose;  // maps query-frame coordinates to match-frame coordinates
  double cost = 0.0;
  bool accepted = false;
  bool has_gt = false;
  Pose2D gt_pose;  // ground-truth relative pose, same direction
  bool has_world = false;
  Pose2D query_world;
  Pose2D match_world;
};

// Error conventions used throughout: rotation error is the wrapped absolute
// yaw difference; translation error is the distance between the query origins
// placed by the estimated and true relative poses.
inline double rotation_error_deg(const Pose2D& est, const Pose2D& gt) {
  return std::abs(wrap_deg(est.yaw_deg - gt.yaw_deg));
}

inline double translation_error_m(const Pose2D& est, const Pose2D& gt) {
  return (est.origin_in_parent() - gt.origin_in_parent()).norm();
}

using PositionLookup = std::function<std::optional<Vec2>(const std::string&)>;

/** @brief Fraction of queries whose top-K retrieval contains a frame within
 *  dist_thresh_m of the query's true position. */
inline double recall_at_k(const std::vector<EvalRecord>& records, std::size_t K,
                          double dist_thresh_m, const PositionLookup& position_of) {
  if (records.empty()) throw std::logic_error("recall_at_k: no records");
  if (K < 1) throw std::invalid_argument("recall_at_k: K must be >= 1");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (!r.has_world)
      throw std::logic_error("recall_at_k: record " + r.query_id + " lacks a world pose");
    const Vec2 q = r.query_world.origin_in_parent();
    const std::size_t depth = std::min(K, r.ranking.size());
    for (std::size_t k = 0; k < depth; ++k) {
      const auto pos = position_of(r.ranking[k]);
      if (!pos)
        throw std::logic_error("recall_at_k: no position for frame " + r.ranking[k]);
      if ((q - *pos).norm() < dist_thresh_m) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

struct AoeApe {
  std::optional<double> aoe_deg;  // absent when no query qualifies
  std::optional<double> ape_m;
  std::size_t count = 0;  // errors averaged per metric
  std::size_t eligible = 0;
};

/**
 * @brief Orientation/position errors at a percentile: over queries whose
 * top-1 frame lies within dist_thresh_m of the true position (and that carry
 * ground truth), sort each error ascending and average the lowest
 * max(1, floor(p * n)) values.
 */
inline AoeApe aoe_ape(const std::vector<EvalRecord>& records, double percentile,
                      double dist_thresh_m, const PositionLookup& position_of) {
  if (!(percentile > 0.0 && percentile <= 1.0))
    throw std::invalid_argument("aoe_ape: percentile must be in (0, 1]");
  std::vector<double> rot, pos;
  AoeApe out;
  for (const auto& r : records) {
    if (!r.has_world || !r.has_gt || r.ranking.empty()) continue;
    const auto top = position_of(r.ranking.front());
    if (!top) throw std::logic_error("aoe_ape: no position for frame " + r.ranking.front());
    if ((r.query_world.origin_in_parent() - *top).norm() >= dist_thresh_m) continue;
    rot.push_back(rotation_error_deg(r.est_pose, r.gt_pose));
    pos.push_back(translation_error_m(r.est_pose, r.gt_pose));
  }
  out.eligible = rot.size();
  if (rot.empty()) return out;
  std::sort(rot.begin(), rot.end());
  std::sort(pos.begin(), pos.end());
  const std::size_t count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(percentile * static_cast<double>(rot.size()))));
  out.count = count;
  double racc = 0.0, pacc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    racc += rot[i];
    pacc += pos[i];
  }
  out.aoe_deg = racc / static_cast<double>(count);
  out.ape_m = pacc / static_cast<double>(count);
  return out;
}

struct PoseMetrics {
  double mrre_deg = 0.0;  // mean wrapped absolute yaw error
  double mrte_m = 0.0;    // mean translation error
  double rr_rot = 0.0;    // fraction with rotation error under the threshold
  double rr_trans = 0.0;  // fraction with translation error under the threshold
  std::size_t count = 0;
};

inline PoseMetrics pose_metrics(const std::vector<EvalRecord>& records,
                                double rot_thresh_deg = 5.0, double trans_thresh_m = 2.0,
                                bool confident_only = false) {
  PoseMetrics out;
  double racc = 0.0, tacc = 0.0;
  std::size_t rot_ok = 0, trans_ok = 0;
  for (const auto& r : records) {
    if (!r.has_gt) continue;
    if (confident_only && !r.accepted) continue;
    const double re = rotation_error_deg(r.est_pose, r.gt_pose);
    const double te = translation_error_m(r.est_pose, r.gt_pose);
    racc += re;
    tacc += te;
    if (re < rot_thresh_deg) ++rot_ok;
    if (te < trans_thresh_m) ++trans_ok;
    ++out.count;
  }
  if (out.count == 0)
    throw std::logic_error("pose_metrics: no evaluable records" +
                           std::string(confident_only ? " (confident subset empty)" : ""));
  out.mrre_deg = racc / static_cast<double>(out.count);
  out.mrte_m = tacc / static_cast<double>(out.count);
  out.rr_rot = static_cast<double>(rot_ok) / static_cast<double>(out.count);
  out.rr_trans = static_cast<double>(trans_ok) / static_cast<double>(out.count);
  return out;
}

//============================================================================
// Loop-closure metrics
//============================================================================

struct LoopFrameInfo {
  Vec2 position = Vec2(0.0, 0.0);
  std::optional<int> floor;
  std::string session;
  int seq = -1;
};

inline std::map<std::string, LoopFrameInfo> loop_frame_table(const DatasetManifest& m) {
  std::map<std::string, LoopFrameInfo> table;
  for (const auto& f : m.frames)
    table[f.frame_id] =
        LoopFrameInfo{f.world_pose.origin_in_parent(), f.floor, f.session, f.seq};
  return table;
}

struct LoopMetrics {
  std::size_t detected = 0;
  std::size_t true_detected = 0;
  std::size_t total_true = 0;
  std::size_t cross_floor_detected = 0;
  double precision = 1.0;  // vacuously 1 with no detections
  double recall = 1.0;     // vacuously 1 with no true pairs
  std::optional<double> cfer;  // absent when floor labels are missing
};

/**
 * @brief Precision / recall / cross-floor error rate of detected loop pairs.
 *
 * A pair is a true revisit when the frames lie within dist_thresh_m on the
 * same floor (pairs with unknown floors compare by distance alone). Pairs of
 * the same session within the temporal exclusion window never count, for the
 * denominator or the detections. The cross-floor rate is reported only when
 * every detected endpoint carries a floor label.
 */
inline LoopMetrics loop_metrics(const std::vector<std::pair<std::string, std::string>>& detected,
                                const std::map<std::string, LoopFrameInfo>& frames,
                                double dist_thresh_m = 2.0,
                                int exclusion_window = kLoopTemporalExclusion) {
  auto info = [&](const std::string& id) -> const LoopFrameInfo& {
    auto it = frames.find(id);
    if (it == frames.end()) throw std::runtime_error("loop_metrics: unknown frame " + id);
    return it->second;
  };
  auto excluded = [&](const LoopFrameInfo& a, const LoopFrameInfo& b) {
    return a.session == b.session && a.seq >= 0 && b.seq >= 0 &&
           std::abs(a.seq - b.seq) <= exclusion_window;
  };
  auto is_true_pair = [&](const LoopFrameInfo& a, const LoopFrameInfo& b) {
    if (excluded(a, b)) return false;
    if (a.floor && b.floor && *a.floor != *b.floor) return false;
    return (a.position - b.position).norm() < dist_thresh_m;
  };

  LoopMetrics out;
  bool floors_known = true;
  for (const auto& [ida, idb] : detected) {
    const LoopFrameInfo& a = info(ida);
    const LoopFrameInfo& b = info(idb);
    ++out.detected;
    if (is_true_pair(a, b)) ++out.true_detected;
    if (a.floor && b.floor) {
      if (*a.floor != *b.floor) ++out.cross_floor_detected;
    } else {
      floors_known = false;
    }
  }

  for (auto ia = frames.begin(); ia != frames.end(); ++ia)
    for (auto ib = std::next(ia); ib != frames.end(); ++ib)
      if (is_true_pair(ia->second, ib->second)) ++out.total_true;

  if (out.detected > 0)
    out.precision = static_cast<double>(out.true_detected) / static_cast<double>(out.detected);
  if (out.total_true > 0)
    out.recall = static_cast<double>(out.true_detected) / static_cast<double>(out.total_true);
  else
    out.recall = 1.0;
  if (floors_known)
    out.cfer = out.detected > 0 ? static_cast<double>(out.cross_floor_detected) /
                                      static_cast<double>(out.detected)
                                : 0.0;
  return out;
}

}  // namespace bevloc
