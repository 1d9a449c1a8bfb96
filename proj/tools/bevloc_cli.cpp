// Command-line front end: synthetic benchmark generation, index building,
// localization, loop detection, evaluation, loss verification, and plots.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bevloc/bevloc.hpp"

namespace fs = std::filesystem;
using namespace bevloc;

namespace {

DecoderWeights load_weights_checked(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json"))
    throw std::runtime_error("weights: no manifest.json under " + dir.string());
  return load_weights(dir);
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  for (const auto& part : split_csv(csv))
    if (!part.empty()) out.push_back(part);
  return out;
}

// nearest entry with a world pose; returns (id, distance)
std::pair<std::string, double> nearest_indexed_frame(const DescriptorIndex& index,
                                                     const Vec2& position) {
  std::string best_id;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : index.entries) {
    if (!e.world_pose) continue;
    const double d = (e.world_pose->origin_in_parent() - position).norm();
    if (d < best) {
      best = d;
      best_id = e.frame_id;
    }
  }
  return {best_id, best};
}

//----------------------------------------------------------------------------
// synth-gen
//----------------------------------------------------------------------------

int run_synth_gen(const std::string& config_path, const std::string& out_dir) {
  BenchmarkConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw std::runtime_error("synth-gen: cannot open " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("synth-gen: " + config_path + ": " + e.what());
    }
    cfg = benchmark_config_from_json(j);
  }
  const DatasetManifest manifest = generate_benchmark(cfg, out_dir);
  std::size_t maps = 0, queries = 0, impostors = 0;
  for (const auto& f : manifest.frames) {
    if (f.role == "map") ++maps;
    if (f.role == "query") ++queries;
    if (f.role == "impostor") ++impostors;
  }
  std::cout << "synth-gen: wrote " << manifest.frames.size() << " frames (" << maps
            << " map, " << queries << " query, " << impostors << " impostor), "
            << manifest.loop_pairs.size() << " loop pairs, "
            << manifest.negative_pairs.size() << " negative pairs, "
            << manifest.false_pairs.size() << " false pairs to " << out_dir << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// weights-init
//----------------------------------------------------------------------------

int run_weights_init(const std::string& out_dir, std::uint64_t seed, DecoderHyper hyper,
                     const std::string& pooling) {
  hyper.pooling = pooling_from_name(pooling);
  hyper.validate();
  const DecoderWeights w = seeded_decoder_weights(hyper, seed);
  fs::create_directories(out_dir);
  save_weights(out_dir, w);
  std::cout << "weights-init: wrote seeded weights (T=" << hyper.T << " R=" << hyper.R
            << " C=" << hyper.C << " heads=" << hyper.heads << ") to " << out_dir << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// index-build
//----------------------------------------------------------------------------

int run_index_build(const std::string& dataset_dir, const std::string& weights_dir,
                    const std::string& out_file, const std::string& roles_csv) {
  const DatasetManifest manifest = read_dataset_manifest(dataset_dir);
  const DecoderWeights weights = load_weights_checked(weights_dir);
  const auto roles = split_list(roles_csv);
  const DescriptorIndex index = build_descriptor_index(dataset_dir, manifest, weights, roles);
  if (index.entries.empty())
    throw std::runtime_error("index-build: no frames matched roles '" + roles_csv + "'");
  write_descriptor_index(out_file, index);
  std::cout << "index-build: indexed " << index.entries.size() << " frames into " << out_file
            << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// global-localize
//----------------------------------------------------------------------------

int run_global_localize(const std::string& index_file, const std::string& queries_dir,
                        const std::string& weights_dir, std::size_t topk,
                        const std::string& report_path) {
  const DescriptorIndex index = read_descriptor_index(index_file);
  const DatasetManifest manifest = read_dataset_manifest(queries_dir);
  const DecoderWeights weights = load_weights_checked(weights_dir);
  if (topk < 1) throw std::runtime_error("global-localize: --topk must be >= 1");

  const std::vector<LocalViewDescriptor> index_descs =
      decode_index_descriptors(index, weights);
  auto desc_of = [&](const RetrievalHit& hit) -> const LocalViewDescriptor& {
    return index_descs[hit.entry_index];
  };

  std::vector<const DatasetFrame*> query_frames;
  for (const auto& f : manifest.frames)
    if (f.role == "query") query_frames.push_back(&f);
  if (query_frames.empty())
    throw std::runtime_error("global-localize: dataset has no query frames");

  std::mutex grid_mutex;
  auto grid_source = [&](const std::string& frame_id) -> BevGrid {
    std::lock_guard<std::mutex> lock(grid_mutex);
    return load_frame_grid(queries_dir, manifest, frame_id);
  };

  const SearchConfig cfg;
  std::vector<EvalRecord> records(query_frames.size());
  parallel_for(query_frames.size(), [&](std::size_t qi) {
    const DatasetFrame& qf = *query_frames[qi];
    const BevGrid grid = load_frame_grid(queries_dir, qf, manifest.geometry.grid_size_m);
    const GlobalLocalization loc =
        localize_global(index, grid, weights, cfg, topk, grid_source, desc_of);

    EvalRecord r;
    r.query_id = qf.frame_id;
    for (const auto& hit : loc.ranking) r.ranking.push_back(hit.frame_id);
    r.match_id = loc.top_frame_id;
    r.est_pose = loc.pose.pose;
    r.cost = loc.pose.cost;
    r.accepted = loc.pose.accepted;
    const auto [nid, ndist] = nearest_indexed_frame(index, qf.world_pose.origin_in_parent());
    r.gt_nearest_id = nid;
    r.gt_nearest_dist_m = ndist;
    const IndexEntry* match = index.find(loc.top_frame_id);
    if (match && match->world_pose) {
      r.has_gt = true;
      r.gt_pose = relative_pose(qf.world_pose, *match->world_pose);
      r.has_world = true;
      r.query_world = qf.world_pose;
      r.match_world = *match->world_pose;
    }
    records[qi] = std::move(r);
  });

  write_localization_report(report_path, records);
  std::size_t accepted = 0;
  for (const auto& r : records) accepted += r.accepted ? 1 : 0;
  std::cout << "global-localize: " << records.size() << " queries, " << accepted
            << " accepted, report " << report_path << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// loop-detect
//----------------------------------------------------------------------------

int run_loop_detect(const std::string& index_file, const std::string& dataset_dir,
                    const std::string& weights_dir, double threshold,
                    const std::string& report_path) {
  const DescriptorIndex index = read_descriptor_index(index_file);
  const DatasetManifest manifest = read_dataset_manifest(dataset_dir);
  const DecoderWeights weights = load_weights_checked(weights_dir);

  struct Pair {
    std::size_t a, b;
    double distance;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const IndexEntry& e = index.entries[i];
    const auto hits = topo_loop_candidates(index, e.global, threshold, e.frame_id, e.session,
                                           e.seq);
    for (const auto& hit : hits)
      if (index.entries[hit.entry_index].frame_id > e.frame_id)
        pairs.push_back({i, hit.entry_index, hit.distance});
  }

  // raw grids come from the dataset: pose search pads the Cartesian grid
  std::vector<BevGrid> grids(index.entries.size());
  std::vector<char> loaded(index.entries.size(), 0);
  for (const auto& p : pairs) {
    for (std::size_t idx : {p.a, p.b}) {
      if (!loaded[idx]) {
        grids[idx] = load_frame_grid(dataset_dir, manifest, index.entries[idx].frame_id);
        loaded[idx] = 1;
      }
    }
  }

  const SearchConfig cfg;
  std::vector<LoopDetection> detections(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t pi) {
    const Pair& p = pairs[pi];
    const IndexEntry& ea = index.entries[p.a];
    const IndexEntry& eb = index.entries[p.b];
    const PoseEstimate est = metric_localize(grids[p.a], grids[p.b], weights, cfg,
                                             index.geometry.radial_step_m);
    LoopDetection d;
    d.a = ea.frame_id;
    d.b = eb.frame_id;
    d.descriptor_distance = p.distance;
    d.est_pose = est.pose;
    d.cost = est.cost;
    d.accepted = est.accepted;
    if (ea.world_pose && eb.world_pose) {
      d.has_world = true;
      d.a_world = *ea.world_pose;
      d.b_world = *eb.world_pose;
    }
    detections[pi] = std::move(d);
  });

  write_loop_report(report_path, detections);
  std::cout << "loop-detect: " << detections.size() << " candidate pairs (threshold "
            << threshold << "), report " << report_path << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// pose-estimate
//----------------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> read_pairs_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pose-estimate: cannot open " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "a,b")
        throw std::runtime_error("pose-estimate: " + path + ":" + std::to_string(line_no) +
                                 ": expected header 'a,b'");
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      throw std::runtime_error("pose-estimate: " + path + ":" + std::to_string(line_no) +
                               ": expected two frame ids");
    pairs.emplace_back(f[0], f[1]);
  }
  if (!header_seen) throw std::runtime_error("pose-estimate: " + path + " is empty");
  return pairs;
}

int run_pose_estimate(const std::string& dataset_dir, const std::string& pairs_path,
                      const std::string& weights_dir, const std::string& report_path) {
  const DatasetManifest manifest = read_dataset_manifest(dataset_dir);
  const DecoderWeights weights = load_weights_checked(weights_dir);
  const auto pairs = read_pairs_csv(pairs_path);

  const SearchConfig cfg;
  std::vector<EvalRecord> records(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t pi) {
    const auto& [ida, idb] = pairs[pi];
    const DatasetFrame* fa = manifest.find(ida);
    const DatasetFrame* fb = manifest.find(idb);
    if (!fa || !fb)
      throw std::runtime_error("pose-estimate: unknown frame id " + (fa ? idb : ida));
    const BevGrid ga = load_frame_grid(dataset_dir, *fa, manifest.geometry.grid_size_m);
    const BevGrid gb = load_frame_grid(dataset_dir, *fb, manifest.geometry.grid_size_m);
    const PoseEstimate est =
        metric_localize(ga, gb, weights, cfg, manifest.geometry.radial_step_m);

    EvalRecord r;
    r.query_id = ida;
    r.ranking = {idb};
    r.match_id = idb;
    r.gt_nearest_id = idb;
    r.gt_nearest_dist_m = frame_distance_m(fa->world_pose, fb->world_pose);
    r.est_pose = est.pose;
    r.cost = est.cost;
    r.accepted = est.accepted;
    r.has_gt = true;
    r.gt_pose = relative_pose(fa->world_pose, fb->world_pose);
    r.has_world = true;
    r.query_world = fa->world_pose;
    r.match_world = fb->world_pose;
    records[pi] = std::move(r);
  });

  write_localization_report(report_path, records);
  std::cout << "pose-estimate: " << records.size() << " pairs, report " << report_path
            << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// eval
//----------------------------------------------------------------------------

int run_eval(const std::string& report_path, const std::string& manifest_path,
             const std::string& metrics_path, double percentile, double dist_thresh,
             double rot_thresh, double trans_thresh, const std::string& roles_csv) {
  std::ifstream min(manifest_path, std::ios::binary);
  if (!min) throw std::runtime_error("eval: cannot open " + manifest_path);
  nlohmann::json mj;
  try {
    min >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("eval: " + manifest_path + ": " + e.what());
  }
  const DatasetManifest manifest = manifest_from_json(mj);

  nlohmann::ordered_json out;
  const ReportKind kind = report_kind(report_path);
  if (kind == ReportKind::kLocalization) {
    const auto records = read_localization_report(report_path);
    if (records.empty()) throw std::runtime_error("eval: report contains no rows");

    auto position_of = [&](const std::string& id) -> std::optional<Vec2> {
      const DatasetFrame* f = manifest.find(id);
      if (!f) return std::nullopt;
      return f->world_pose.origin_in_parent();
    };

    out["records"] = records.size();
    out["dist_threshold_m"] = dist_thresh;
    out["recall_at_1"] = recall_at_k(records, 1, dist_thresh, position_of);
    out["recall_at_5"] = recall_at_k(records, 5, dist_thresh, position_of);
    const AoeApe a = aoe_ape(records, percentile, dist_thresh, position_of);
    out["aoe_ape_percentile"] = percentile;
    out["aoe_ape_eligible"] = a.eligible;
    if (a.aoe_deg) {
      out["aoe_ape_count"] = a.count;
      out["aoe_deg"] = *a.aoe_deg;
      out["ape_m"] = *a.ape_m;
    }
    out["rot_threshold_deg"] = rot_thresh;
    out["trans_threshold_m"] = trans_thresh;
    const PoseMetrics pm = pose_metrics(records, rot_thresh, trans_thresh, false);
    out["pose_count"] = pm.count;
    out["mrre_deg"] = pm.mrre_deg;
    out["mrte_m"] = pm.mrte_m;
    out["rr_rot"] = pm.rr_rot;
    out["rr_trans"] = pm.rr_trans;
    bool any_accepted = false;
    for (const auto& r : records) any_accepted = any_accepted || (r.has_gt && r.accepted);
    if (any_accepted) {
      const PoseMetrics pc = pose_metrics(records, rot_thresh, trans_thresh, true);
      out["pose_count_confident"] = pc.count;
      out["mrre_deg_confident"] = pc.mrre_deg;
      out["mrte_m_confident"] = pc.mrte_m;
      out["rr_rot_confident"] = pc.rr_rot;
      out["rr_trans_confident"] = pc.rr_trans;
    }
  } else {
    const auto detections = read_loop_report(report_path);
    if (detections.empty()) throw std::runtime_error("eval: report contains no rows");
    const auto roles = split_list(roles_csv);
    DatasetManifest universe = manifest;
    universe.frames.clear();
    for (const auto& f : manifest.frames)
      for (const auto& r : roles)
        if (f.role == r) {
          universe.frames.push_back(f);
          break;
        }
    if (universe.frames.empty())
      throw std::runtime_error("eval: no manifest frames matched roles '" + roles_csv + "'");
    std::vector<std::pair<std::string, std::string>> detected;
    for (const auto& d : detections) detected.emplace_back(d.a, d.b);
    const LoopMetrics lm = loop_metrics(detected, loop_frame_table(universe), dist_thresh);
    out["detected"] = lm.detected;
    out["true_detected"] = lm.true_detected;
    out["total_true"] = lm.total_true;
    out["cross_floor_detected"] = lm.cross_floor_detected;
    out["dist_threshold_m"] = dist_thresh;
    out["precision"] = lm.precision;
    out["recall"] = lm.recall;
    if (lm.cfer) out["cfer"] = *lm.cfer;
  }

  write_metrics_json(metrics_path, out);
  std::cout << "eval: wrote " << metrics_path << "\n";
  return 0;
}

//----------------------------------------------------------------------------
// verify-losses
//----------------------------------------------------------------------------

struct Check {
  std::string name;
  bool ok;
  double worst;
};

// forward values recomputed from the bare formulas, no shared code paths
namespace oracle {

double norm_of(const VecX& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

double triplet(const VecX& gs, const VecX& gp, const VecX& gn, const LossMargins& m) {
  const double v = norm_of(gs - gp) - norm_of(gs - gn) + m.triplet;
  return v > 0.0 ? v : 0.0;
}

double hinge(const VecX& gs, const VecX& gp, const VecX& gn, const LossMargins& m) {
  const double p = norm_of(gs - gp) - m.hinge_pos;
  const double n = m.hinge_neg - norm_of(gs - gn);
  return (p > 0.0 ? p : 0.0) + (n > 0.0 ? n : 0.0);
}

double circle(const MatX& ds, const MatX& dp, const LossMargins& m) {
  // direct evaluation; exponents stay within double range at these margins
  const Eigen::Index T = ds.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    const double dii = norm_of((ds.row(i) - dp.row(i)).transpose());
    double inner = 0.0;
    for (Eigen::Index j = 0; j < T; ++j) {
      if (j == i) continue;
      const double dij = norm_of((ds.row(i) - dp.row(j)).transpose());
      inner += std::exp(m.gamma * (m.yaw_neg - dij) * (m.yaw_neg - dij));
    }
    total += std::log(1.0 + std::exp(m.gamma * (dii - m.yaw_pos) * (dii - m.yaw_pos)) * inner);
  }
  return total / static_cast<double>(T);
}

double mean_row_dist(const MatX& a, const MatX& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    s += norm_of((a.row(i) - b.row(i)).transpose());
  return s / static_cast<double>(a.rows());
}

double translation(const MatX& dt, const MatX& db, const MatX& dp, const LossMargins& m) {
  const double v = mean_row_dist(dt, dp) - mean_row_dist(db, dp) + m.translation;
  return v > 0.0 ? v : 0.0;
}

}  // namespace oracle

VecX random_unit(Rng& rng, Eigen::Index n) {
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v / v.norm();
}

MatX random_rows(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i) = random_unit(rng, cols).transpose();
  return m;
}

int run_verify_losses(std::uint64_t seed) {
  Rng rng(seed);
  const LossMargins m;
  std::vector<Check> checks;
  const int instances = 100;
  const Eigen::Index C = 16, T = 8;

  auto fd_ok = [](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
  };

  {  // forward values against the plain-formula evaluations
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
      const VecX gs = random_unit(rng, C), gp = random_unit(rng, C), gn = random_unit(rng, C);
      worst = std::max(worst,
                       std::abs(triplet_margin_loss(gs, gp, gn, m) - oracle::triplet(gs, gp, gn, m)));
      worst = std::max(worst, std::abs(hinge_loss(gs, gp, gn, m) - oracle::hinge(gs, gp, gn, m)));
      const MatX ds = random_rows(rng, T, C), dp = random_rows(rng, T, C);
      const MatX db = random_rows(rng, T, C);
      worst = std::max(worst, std::abs(circle_yaw_loss(ds, dp, m) - oracle::circle(ds, dp, m)));
      worst = std::max(worst, std::abs(translation_bias_loss(ds, db, dp, m) -
                                       oracle::translation(ds, db, dp, m)));
    }
    checks.push_back({"forward values vs plain formulas", worst < 1e-9, worst});
  }

  {  // two-row worked case: aligned diagonals, cross distance at the far margin
    MatX ds(2, C), dp(2, C);
    ds.setZero();
    const double theta = 2.0 * std::asin(0.7);
    ds(0, 0) = 1.0;
    ds(1, 0) = std::cos(theta);
    ds(1, 1) = std::sin(theta);
    dp = ds;
    const double expected = std::log(1.0 + std::exp(0.4));
    const double got = circle_yaw_loss(ds, dp, m);
    const double err = std::abs(got - expected);
    checks.push_back({"two-row corner case = log(1+e^0.4)", err < 1e-6, err});
  }

  const double step = 1e-5, tol = 1e-3;

  {  // triplet + hinge gradients vs central differences
    double worst = 0.0;
    int done = 0;
    while (done < instances) {
      VecX gs = random_unit(rng, C), gp = random_unit(rng, C), gn = random_unit(rng, C);
      const auto gt = triplet_margin_gradients(gs, gp, gn, m);
      const auto gh = hinge_gradients(gs, gp, gn, m);
      if (gt.at_kink || gh.at_kink) continue;
      ++done;
      for (int which = 0; which < 3; ++which) {
        VecX* v = which == 0 ? &gs : which == 1 ? &gp : &gn;
        const VecX* at = which == 0 ? &gt.gs : which == 1 ? &gt.gp : &gt.gn;
        const VecX* ah = which == 0 ? &gh.gs : which == 1 ? &gh.gp : &gh.gn;
        for (Eigen::Index i = 0; i < C; i += 5) {
          const double keep = (*v)[i];
          (*v)[i] = keep + step;
          const double tp = triplet_margin_loss(gs, gp, gn, m);
          const double hp = hinge_loss(gs, gp, gn, m);
          (*v)[i] = keep - step;
          const double tm = triplet_margin_loss(gs, gp, gn, m);
          const double hm = hinge_loss(gs, gp, gn, m);
          (*v)[i] = keep;
          worst = std::max(worst, fd_ok((*at)[i], (tp - tm) / (2 * step)));
          worst = std::max(worst, fd_ok((*ah)[i], (hp - hm) / (2 * step)));
        }
      }
    }
    checks.push_back({"triplet/hinge gradients vs finite differences", worst < tol, worst});
  }

  {  // circle-loss gradients vs central differences
    double worst = 0.0;
    int done = 0;
    while (done < instances) {
      MatX ds = random_rows(rng, T, C), dp = random_rows(rng, T, C);
      const auto g = circle_yaw_gradients(ds, dp, m);
      if (g.at_kink) continue;
      ++done;
      for (Eigen::Index i = 0; i < T; i += 3) {
        for (Eigen::Index j = 0; j < C; j += 7) {
          double keep = ds(i, j);
          ds(i, j) = keep + step;
          const double lp = circle_yaw_loss(ds, dp, m);
          ds(i, j) = keep - step;
          const double lm_ = circle_yaw_loss(ds, dp, m);
          ds(i, j) = keep;
          worst = std::max(worst, fd_ok(g.ds(i, j), (lp - lm_) / (2 * step)));
          keep = dp(i, j);
          dp(i, j) = keep + step;
          const double lp2 = circle_yaw_loss(ds, dp, m);
          dp(i, j) = keep - step;
          const double lm2 = circle_yaw_loss(ds, dp, m);
          dp(i, j) = keep;
          worst = std::max(worst, fd_ok(g.dp(i, j), (lp2 - lm2) / (2 * step)));
        }
      }
    }
    checks.push_back({"circle-loss gradients vs finite differences", worst < tol, worst});
  }

  {  // translation-bias gradients vs central differences
    double worst = 0.0;
    int done = 0;
    while (done < instances) {
      MatX dt = random_rows(rng, T, C), db = random_rows(rng, T, C),
           dp = random_rows(rng, T, C);
      const auto g = translation_bias_gradients(dt, db, dp, m);
      if (g.at_kink) continue;
      ++done;
      for (Eigen::Index i = 0; i < T; i += 3) {
        for (Eigen::Index j = 0; j < C; j += 7) {
          MatX* mats[3] = {&dt, &db, &dp};
          const MatX* grads[3] = {&g.d_true, &g.d_biased, &g.dp};
          for (int which = 0; which < 3; ++which) {
            const double keep = (*mats[which])(i, j);
            (*mats[which])(i, j) = keep + step;
            const double lp = translation_bias_loss(dt, db, dp, m);
            (*mats[which])(i, j) = keep - step;
            const double lm_ = translation_bias_loss(dt, db, dp, m);
            (*mats[which])(i, j) = keep;
            worst = std::max(worst, fd_ok((*grads[which])(i, j), (lp - lm_) / (2 * step)));
          }
        }
      }
    }
    checks.push_back({"translation-bias gradients vs finite differences", worst < tol, worst});
  }

  bool all_ok = true;
  for (const auto& c : checks) {
    std::cout << (c.ok ? "[PASS] " : "[FAIL] ") << c.name << " (worst deviation "
              << c.worst << ")\n";
    all_ok = all_ok && c.ok;
  }
  std::cout << (all_ok ? "verify-losses: all checks passed\n"
                       : "verify-losses: FAILURES above\n");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bird's-eye-view localization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dataset_dir, weights_dir, out_file, index_file;
  std::string queries_dir, report_path, pairs_path, manifest_path, metrics_path, svg_path;
  std::string roles_csv = "map";
  std::string pooling = "gem";
  std::size_t topk = 20;
  double threshold = 0.1;
  double percentile = 0.25, dist_thresh = 2.0, rot_thresh = 5.0, trans_thresh = 2.0;
  std::uint64_t seed = 7;
  DecoderHyper hyper;
  int rc = 0;

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic benchmark dataset");
  synth->add_option("--config", config_path, "benchmark config JSON (defaults apply)")
      ->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  synth->callback([&] { rc = run_synth_gen(config_path, out_dir); });

  auto* winit = app.add_subcommand("weights-init", "write a seeded decoder weight archive");
  winit->add_option("--out", out_dir, "output weights directory")->required();
  winit->add_option("--seed", seed, "rng seed");
  winit->add_option("--sectors", hyper.T, "angular sectors");
  winit->add_option("--rings", hyper.R, "radial rings");
  winit->add_option("--channels", hyper.C, "feature channels");
  winit->add_option("--heads", hyper.heads, "attention heads");
  winit->add_option("--radial-layers", hyper.radial_layers, "radial attention layers");
  winit->add_option("--rounds", hyper.rounds, "interaction rounds");
  winit->add_option("--pooling", pooling, "gem | mean | max");
  winit->callback([&] { rc = run_weights_init(out_dir, seed, hyper, pooling); });

  auto* ib = app.add_subcommand("index-build", "decode map frames into a descriptor index");
  ib->add_option("--dataset", dataset_dir, "dataset directory")->required();
  ib->add_option("--weights", weights_dir, "weights directory")->required();
  ib->add_option("--out", out_file, "output index file")->required();
  ib->add_option("--roles", roles_csv, "comma-separated frame roles to index");
  ib->callback([&] { rc = run_index_build(dataset_dir, weights_dir, out_file, roles_csv); });

  auto* gl = app.add_subcommand("global-localize",
                                "retrieve, re-rank and metrically localize each query");
  gl->add_option("--index", index_file, "descriptor index file")->required();
  gl->add_option("--queries", queries_dir, "dataset directory holding the query frames")
      ->required();
  gl->add_option("--weights", weights_dir, "weights directory")->required();
  gl->add_option("--topk", topk, "retrieval depth");
  gl->add_option("--report", report_path, "output CSV report")->required();
  gl->callback([&] {
    rc = run_global_localize(index_file, queries_dir, weights_dir, topk, report_path);
  });

  auto* ld = app.add_subcommand("loop-detect", "find revisit candidates across the index");
  ld->add_option("--index", index_file, "descriptor index file")->required();
  ld->add_option("--dataset", dataset_dir, "dataset directory with the raw grids")->required();
  ld->add_option("--weights", weights_dir, "weights directory")->required();
  ld->add_option("--threshold", threshold, "descriptor distance threshold");
  ld->add_option("--report", report_path, "output CSV report")->required();
  ld->callback([&] {
    rc = run_loop_detect(index_file, dataset_dir, weights_dir, threshold, report_path);
  });

  auto* pe = app.add_subcommand("pose-estimate", "relative pose for listed frame pairs");
  pe->add_option("--dataset", dataset_dir, "dataset directory")->required();
  pe->add_option("--pairs", pairs_path, "CSV with header a,b")->required();
  pe->add_option("--weights", weights_dir, "weights directory")->required();
  pe->add_option("--report", report_path, "output CSV report")->required();
  pe->callback([&] {
    rc = run_pose_estimate(dataset_dir, pairs_path, weights_dir, report_path);
  });

  auto* ev = app.add_subcommand("eval", "compute metrics from a report");
  ev->add_option("--report", report_path, "CSV report")->required();
  ev->add_option("--manifest", manifest_path, "dataset manifest JSON")->required();
  ev->add_option("--metrics", metrics_path, "output metrics JSON")->required();
  ev->add_option("--percentile", percentile, "orientation/position error percentile");
  ev->add_option("--dist-threshold", dist_thresh, "retrieval / loop distance threshold (m)");
  ev->add_option("--rot-threshold", rot_thresh, "pose rotation threshold (deg)");
  ev->add_option("--trans-threshold", trans_thresh, "pose translation threshold (m)");
  ev->add_option("--roles", roles_csv, "frame roles forming the loop universe");
  ev->callback([&] {
    rc = run_eval(report_path, manifest_path, metrics_path, percentile, dist_thresh,
                       rot_thresh, trans_thresh, roles_csv);
  });

  auto* vl = app.add_subcommand("verify-losses", "check losses and gradients numerically");
  vl->add_option("--seed", seed, "rng seed");
  vl->callback([&] { rc = run_verify_losses(seed); });

  auto* pl = app.add_subcommand("plot", "render a report as an SVG figure");
  pl->add_option("--report", report_path, "CSV report")->required();
  pl->add_option("--out", svg_path, "output SVG file")->required();
  pl->callback([&] {
    plot_report(report_path, svg_path);
    std::cout << "plot: wrote " << svg_path << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
