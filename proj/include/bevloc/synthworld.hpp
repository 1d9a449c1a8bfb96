#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevloc/dataset.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/parallel.hpp"
#include "bevloc/pose2d.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

struct Landmark {
  Vec2 position;   // world frame, meters
  VecX signature;  // unit-norm channel vector
};

/** @brief A square world of point landmarks with pairwise-distinct signatures. */
struct Scene {
  double extent_m = 40.0;  // half-width: positions lie in [-extent, extent]^2
  std::uint64_t seed = 0;
  std::vector<Landmark> landmarks;

  bool contains(const Vec2& p) const {
    return std::abs(p.x()) <= extent_m && std::abs(p.y()) <= extent_m;
  }
};

/**
 * @brief Populates a scene with uniformly placed landmarks whose unit
 * signatures keep a minimum pairwise distance (rejection resampling).
 *
 * A positive clear_ring_half_width_m keeps an annular corridor centred on the
 * origin free of landmarks (the roadway of a circular trajectory): positions
 * with | |p| - clear_ring_radius_m | below the half width are redrawn.
 */
inline Scene make_scene(std::size_t channels, double extent_m, double density_per_m2,
                        std::uint64_t seed, double min_signature_dist = 0.1,
                        double clear_ring_radius_m = 0.0,
                        double clear_ring_half_width_m = 0.0) {
  if (channels < 1) throw std::invalid_argument("make_scene: channels must be >= 1");
  if (!(extent_m > 0.0) || !(density_per_m2 > 0.0))
    throw std::invalid_argument("make_scene: extent and density must be positive");
  if (clear_ring_half_width_m < 0.0 || clear_ring_radius_m < 0.0)
    throw std::invalid_argument("make_scene: clear ring must be non-negative");
  Scene scene;
  scene.extent_m = extent_m;
  scene.seed = seed;
  const double side = 2.0 * extent_m;
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(density_per_m2 * side * side)));
  Rng rng(seed);
  scene.landmarks.reserve(count);
  auto in_corridor = [&](const Vec2& p) {
    return clear_ring_half_width_m > 0.0 &&
           std::abs(p.norm() - clear_ring_radius_m) < clear_ring_half_width_m;
  };
  for (std::size_t i = 0; i < count; ++i) {
    Landmark lm;
    lm.position = Vec2(rng.uniform(-extent_m, extent_m), rng.uniform(-extent_m, extent_m));
    for (int attempt = 0; in_corridor(lm.position); ++attempt) {
      if (attempt >= 1000)
        throw std::runtime_error("make_scene: clear ring rejects every position");
      lm.position = Vec2(rng.uniform(-extent_m, extent_m), rng.uniform(-extent_m, extent_m));
    }
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      VecX sig(static_cast<Eigen::Index>(channels));
      for (Eigen::Index c = 0; c < sig.size(); ++c) sig[c] = rng.normal();
      const double n = sig.norm();
      if (n < 1e-9) continue;
      sig /= n;
      ok = true;
      for (const auto& other : scene.landmarks) {
        if ((other.signature - sig).norm() <= min_signature_dist) {
          ok = false;
          break;
        }
      }
      if (ok) lm.signature = std::move(sig);
    }
    if (!ok)
      throw std::runtime_error(
          "make_scene: could not place distinct signatures; lower the density or raise the "
          "channel count");
    scene.landmarks.push_back(std::move(lm));
  }
  return scene;
}

/**
 * @brief Renders the scene from a keyframe's ego frame into a BEV grid.
 *
 * Every landmark inside the grid footprint is splat bilinearly into the four
 * cells around its ego position (no occlusion). At a positive noise level
 * each landmark's signature is perturbed by seeded Gaussian noise for this
 * render; cells containing no landmark stay exactly zero.
 */
inline BevGrid render_bev(const Scene& scene, const Pose2D& world_pose,
                          const GridGeometry& geom, double noise_sigma = 0.0,
                          std::uint64_t noise_seed = 0) {
  if (scene.landmarks.empty()) throw std::invalid_argument("render_bev: empty scene");
  if (scene.landmarks.front().signature.size() != static_cast<Eigen::Index>(geom.C))
    throw std::invalid_argument("render_bev: signature length differs from channel count");
  if (!scene.contains(world_pose.origin_in_parent()))
    throw std::invalid_argument("render_bev: pose lies outside the scene extent");

  BevGrid grid;
  grid.grid_size_m = geom.grid_size_m;
  grid.data = Tensor3(geom.H, geom.W, geom.C);
  grid.data.fill(0.0);

  const Pose2D world_to_ego = world_pose.inverse();
  Rng noise(noise_seed);
  VecX sig(static_cast<Eigen::Index>(geom.C));
  for (const auto& lm : scene.landmarks) {
    sig = lm.signature;
    if (noise_sigma > 0.0)
      for (Eigen::Index c = 0; c < sig.size(); ++c) sig[c] += noise_sigma * noise.normal();

    const Vec2 p = world_to_ego.apply(lm.position);
    const double fi = grid.x_to_row(p.x());
    const double fj = grid.y_to_col(p.y());
    const long i0 = static_cast<long>(std::floor(fi));
    const long j0 = static_cast<long>(std::floor(fj));
    const double wi = fi - static_cast<double>(i0);
    const double wj = fj - static_cast<double>(j0);
    const double weights[2][2] = {{(1.0 - wi) * (1.0 - wj), (1.0 - wi) * wj},
                                  {wi * (1.0 - wj), wi * wj}};
    for (int di = 0; di < 2; ++di) {
      const long i = i0 + di;
      if (i < 0 || i >= static_cast<long>(geom.H)) continue;
      for (int dj = 0; dj < 2; ++dj) {
        const long j = j0 + dj;
        if (j < 0 || j >= static_cast<long>(geom.W)) continue;
        const double w = weights[di][dj];
        if (w == 0.0) continue;
        for (Eigen::Index c = 0; c < sig.size(); ++c)
          grid.data.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                       static_cast<std::size_t>(c)) += w * sig[c];
      }
    }
  }
  return grid;
}

//============================================================================
// Trajectories and sessions
//============================================================================

/** @brief A keyframed recording pass: consecutive keyframes stay within the
 *  distance/rotation spacing rule. */
struct SessionSpec {
  std::string session_id;
  int floor = 0;
  std::vector<Pose2D> trajectory;  // world poses
  double max_spacing_m = 2.0;
  double max_spacing_deg = 5.0;

  void validate() const {
    if (session_id.empty()) throw std::invalid_argument("SessionSpec: empty session id");
    for (std::size_t k = 1; k < trajectory.size(); ++k) {
      const double d = frame_distance_m(trajectory[k - 1], trajectory[k]);
      const double r = std::abs(wrap_deg(trajectory[k].yaw_deg - trajectory[k - 1].yaw_deg));
      if (d > max_spacing_m + 1e-9 || r > max_spacing_deg + 1e-9)
        throw std::invalid_argument("SessionSpec: keyframes " + std::to_string(k - 1) +
                                    " and " + std::to_string(k) + " violate the spacing rule");
    }
  }
};

// World yaw of a unit direction under the pose algebra used here: a pose with
// yaw t maps ego-forward (+x) to the world direction (cos t, sin t).
inline double yaw_of_direction(const Vec2& d) { return rad2deg(std::atan2(d.y(), d.x())); }

/**
 * @brief Keyframes evenly spaced along a circle, headings tangent to it.
 * reversed=true traverses the circle the opposite way (headings flip).
 */
inline std::vector<Pose2D> circle_trajectory(double radius_m, std::size_t frames,
                                             double start_phase_rad = 0.0,
                                             bool reversed = false,
                                             const Vec2& center = Vec2(0.0, 0.0)) {
  if (frames < 1) throw std::invalid_argument("circle_trajectory: need at least one frame");
  if (!(radius_m > 0.0)) throw std::invalid_argument("circle_trajectory: radius must be positive");
  const double dir = reversed ? -1.0 : 1.0;
  std::vector<Pose2D> poses;
  poses.reserve(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const double theta =
        start_phase_rad + dir * 2.0 * kPi * static_cast<double>(k) / static_cast<double>(frames);
    const Vec2 pos = center + radius_m * Vec2(std::cos(theta), std::sin(theta));
    const Vec2 tangent = dir * Vec2(-std::sin(theta), std::cos(theta));
    poses.push_back(Pose2D::from_origin_heading(pos, yaw_of_direction(tangent)));
  }
  return poses;
}

//============================================================================
// Benchmark generation
//============================================================================

// The default benchmark widens the generic grid to 32 channels: retrieval
// pools the polar grid per channel, so the channel count is the entire
// capacity of the global descriptor.
inline GridGeometry benchmark_geometry() {
  GridGeometry g;
  g.C = 32;
  return g;
}

struct BenchmarkConfig {
  GridGeometry geometry = benchmark_geometry();
  double extent_m = 40.0;
  // Per square meter. The 7.2 m view radius holds ~160 m^2, so 1.0 puts on
  // the order of one landmark in each of the 120 angular sectors; much lower
  // and most sectors of a frame are empty, which starves the descriptors.
  double landmark_density = 1.0;
  double noise_sigma = 0.01;
  double circle_radius_m = 100.0 / kPi;  // 200 m loop: 100 keyframes at 2 m
  double corridor_half_width_m = 2.5;    // landmark-free band around the loop
  std::size_t map_frames = 100;
  std::size_t query_frames = 50;
  std::size_t impostor_frames = 0;  // rendered from a different world
  std::size_t negative_pairs = 50;
  int floors = 1;
  double query_radial_jitter_m = 1.0;
  double query_yaw_jitter_deg = 30.0;
  double query_reverse_fraction = 0.5;
  std::uint64_t scene_seed = 101;
  std::uint64_t noise_seed = 202;
  std::uint64_t query_seed = 303;

  void validate() const {
    geometry.validate();
    if (map_frames < 1) throw std::invalid_argument("BenchmarkConfig: need map frames");
    if (floors < 1 || floors > 8) throw std::invalid_argument("BenchmarkConfig: floors out of range");
    if (!(circle_radius_m > query_radial_jitter_m))
      throw std::invalid_argument("BenchmarkConfig: circle too small for the query jitter");
    if (corridor_half_width_m < 0.0)
      throw std::invalid_argument("BenchmarkConfig: corridor half width must be >= 0");
    if (circle_radius_m + query_radial_jitter_m > extent_m)
      throw std::invalid_argument("BenchmarkConfig: trajectory exceeds the scene extent");
    if (!(query_reverse_fraction >= 0.0 && query_reverse_fraction <= 1.0))
      throw std::invalid_argument("BenchmarkConfig: reverse fraction must be in [0, 1]");
  }
};

inline nlohmann::ordered_json benchmark_config_to_json(const BenchmarkConfig& c) {
  nlohmann::ordered_json j;
  j["geometry"] = geometry_to_json(c.geometry);
  j["extent_m"] = c.extent_m;
  j["landmark_density"] = c.landmark_density;
  j["noise_sigma"] = c.noise_sigma;
  j["circle_radius_m"] = c.circle_radius_m;
  j["corridor_half_width_m"] = c.corridor_half_width_m;
  j["map_frames"] = c.map_frames;
  j["query_frames"] = c.query_frames;
  j["impostor_frames"] = c.impostor_frames;
  j["negative_pairs"] = c.negative_pairs;
  j["floors"] = c.floors;
  j["query_radial_jitter_m"] = c.query_radial_jitter_m;
  j["query_yaw_jitter_deg"] = c.query_yaw_jitter_deg;
  j["query_reverse_fraction"] = c.query_reverse_fraction;
  j["scene_seed"] = c.scene_seed;
  j["noise_seed"] = c.noise_seed;
  j["query_seed"] = c.query_seed;
  return j;
}

/** Missing keys keep their defaults; unknown keys are rejected. */
inline BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j) {
  BenchmarkConfig c;
  static const std::set<std::string> known = {
      "geometry",        "extent_m",       "landmark_density",
      "noise_sigma",     "circle_radius_m", "corridor_half_width_m",
      "map_frames",      "query_frames",    "impostor_frames",
      "negative_pairs",  "floors",          "query_radial_jitter_m",
      "query_yaw_jitter_deg", "query_reverse_fraction", "scene_seed",
      "noise_seed",      "query_seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error("benchmark config: unknown key '" + it.key() + "'");
  if (j.contains("geometry")) c.geometry = geometry_from_json(j.at("geometry"));
  if (j.contains("extent_m")) c.extent_m = j.at("extent_m").get<double>();
  if (j.contains("landmark_density")) c.landmark_density = j.at("landmark_density").get<double>();
  if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("circle_radius_m")) c.circle_radius_m = j.at("circle_radius_m").get<double>();
  if (j.contains("corridor_half_width_m"))
    c.corridor_half_width_m = j.at("corridor_half_width_m").get<double>();
  if (j.contains("map_frames")) c.map_frames = j.at("map_frames").get<std::size_t>();
  if (j.contains("query_frames")) c.query_frames = j.at("query_frames").get<std::size_t>();
  if (j.contains("impostor_frames"))
    c.impostor_frames = j.at("impostor_frames").get<std::size_t>();
  if (j.contains("negative_pairs")) c.negative_pairs = j.at("negative_pairs").get<std::size_t>();
  if (j.contains("floors")) c.floors = j.at("floors").get<int>();
  if (j.contains("query_radial_jitter_m"))
    c.query_radial_jitter_m = j.at("query_radial_jitter_m").get<double>();
  if (j.contains("query_yaw_jitter_deg"))
    c.query_yaw_jitter_deg = j.at("query_yaw_jitter_deg").get<double>();
  if (j.contains("query_reverse_fraction"))
    c.query_reverse_fraction = j.at("query_reverse_fraction").get<double>();
  if (j.contains("scene_seed")) c.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  if (j.contains("noise_seed")) c.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  if (j.contains("query_seed")) c.query_seed = j.at("query_seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace detail {

inline std::string frame_name(const std::string& prefix, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", k);
  return prefix + "-" + buf;
}

}  // namespace detail

/**
 * @brief Builds the synthetic benchmark in memory: a circular map session per
 * floor (each floor is its own world sharing the x-y layout), jittered query
 * frames revisiting floor 0, and optional impostor frames rendered at the
 * query poses from an unrelated world. Ground-truth loop pairs, sampled
 * far-apart negative pairs, and impostor false pairs go into the manifest.
 */
inline std::pair<DatasetManifest, std::vector<BevGrid>> build_benchmark(
    const BenchmarkConfig& cfg) {
  cfg.validate();

  std::vector<Scene> floor_scenes;
  for (int f = 0; f < cfg.floors; ++f)
    floor_scenes.push_back(make_scene(cfg.geometry.C, cfg.extent_m, cfg.landmark_density,
                                      cfg.scene_seed + static_cast<std::uint64_t>(f), 0.1,
                                      cfg.circle_radius_m, cfg.corridor_half_width_m));

  DatasetManifest manifest;
  manifest.geometry = cfg.geometry;
  manifest.noise_sigma = cfg.noise_sigma;
  manifest.seed = cfg.scene_seed;

  std::vector<const Scene*> frame_scene;
  auto add_frame = [&](const std::string& id, const std::string& session,
                       const std::string& role, int floor, int seq, const Pose2D& pose,
                       const Scene* scene) {
    DatasetFrame fr;
    fr.frame_id = id;
    fr.session = session;
    fr.role = role;
    fr.floor = floor;
    fr.seq = seq;
    fr.world_pose = pose;
    fr.grid_file = "grids/" + id + ".bvl";
    manifest.frames.push_back(std::move(fr));
    frame_scene.push_back(scene);
  };

  for (int f = 0; f < cfg.floors; ++f) {
    const std::string session = "map" + std::to_string(f);
    SessionSpec spec;
    spec.session_id = session;
    spec.floor = f;
    spec.trajectory = circle_trajectory(cfg.circle_radius_m, cfg.map_frames);
    spec.validate();
    for (std::size_t k = 0; k < spec.trajectory.size(); ++k)
      add_frame(detail::frame_name(session, k), session, "map", f, static_cast<int>(k),
                spec.trajectory[k], &floor_scenes[static_cast<std::size_t>(f)]);
  }

  Rng qrng(cfg.query_seed);
  std::vector<Pose2D> query_poses;
  for (std::size_t k = 0; k < cfg.query_frames; ++k) {
    const double theta = qrng.uniform(0.0, 2.0 * kPi);
    const double rad = cfg.circle_radius_m +
                       qrng.uniform(-cfg.query_radial_jitter_m, cfg.query_radial_jitter_m);
    const bool reversed = qrng.uniform() < cfg.query_reverse_fraction;
    const double jitter = qrng.uniform(-cfg.query_yaw_jitter_deg, cfg.query_yaw_jitter_deg);
    const Vec2 pos = rad * Vec2(std::cos(theta), std::sin(theta));
    const Vec2 tangent = (reversed ? -1.0 : 1.0) * Vec2(-std::sin(theta), std::cos(theta));
    const Pose2D pose =
        Pose2D::from_origin_heading(pos, yaw_of_direction(tangent) + jitter);
    query_poses.push_back(pose);
    add_frame(detail::frame_name("query0", k), "query0", "query", 0, static_cast<int>(k),
              pose, &floor_scenes[0]);
  }

  Scene impostor_scene;
  if (cfg.impostor_frames > 0) {
    if (cfg.impostor_frames > cfg.query_frames)
      throw std::invalid_argument("build_benchmark: more impostors than query poses");
    impostor_scene = make_scene(cfg.geometry.C, cfg.extent_m, cfg.landmark_density,
                                cfg.scene_seed + 1000, 0.1, cfg.circle_radius_m,
                                cfg.corridor_half_width_m);
    for (std::size_t k = 0; k < cfg.impostor_frames; ++k)
      add_frame(detail::frame_name("imp0", k), "imp0", "impostor", 0, static_cast<int>(k),
                query_poses[k], &impostor_scene);
  }

  std::vector<BevGrid> grids(manifest.frames.size());
  parallel_for(manifest.frames.size(), [&](std::size_t i) {
    grids[i] = render_bev(*frame_scene[i], manifest.frames[i].world_pose, cfg.geometry,
                          cfg.noise_sigma, cfg.noise_seed + i);
  });

  manifest.loop_pairs = compute_loop_pairs(manifest.frames);

  if (cfg.negative_pairs > 0) {
    Rng nrng(cfg.query_seed ^ 0x9e3779b97f4a7c15ULL);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 1000 * cfg.negative_pairs;
    while (manifest.negative_pairs.size() < cfg.negative_pairs && attempts < max_attempts) {
      ++attempts;
      std::size_t i = nrng.uniform_index(manifest.frames.size());
      std::size_t j = nrng.uniform_index(manifest.frames.size());
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      const auto& fa = manifest.frames[i];
      const auto& fb = manifest.frames[j];
      if (fa.role == "impostor" || fb.role == "impostor") continue;
      if (frame_distance_m(fa.world_pose, fb.world_pose) <= 3.0) continue;
      if (!seen.insert({i, j}).second) continue;
      manifest.negative_pairs.push_back({fa.frame_id, fb.frame_id});
    }
    if (manifest.negative_pairs.size() < cfg.negative_pairs)
      throw std::runtime_error("build_benchmark: could not sample enough far-apart pairs");
  }

  for (std::size_t k = 0; k < cfg.impostor_frames; ++k) {
    // pair each impostor with the map frame nearest to the pose it was rendered at
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
      if (manifest.frames[i].role != "map" || manifest.frames[i].floor != 0) continue;
      const double d = frame_distance_m(query_poses[k], manifest.frames[i].world_pose);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    manifest.false_pairs.push_back(
        {detail::frame_name("imp0", k), manifest.frames[best].frame_id});
  }

  return {std::move(manifest), std::move(grids)};
}

/** @brief Builds the benchmark and writes it out as a dataset directory. */
inline DatasetManifest generate_benchmark(const BenchmarkConfig& cfg,
                                          const std::filesystem::path& out_dir) {
  auto [manifest, grids] = build_benchmark(cfg);
  write_dataset(out_dir, manifest, grids);
  return manifest;
}

}  // namespace bevloc
