#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevloc/blob.hpp"
#include "bevloc/format.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/pose2d.hpp"

namespace bevloc {

constexpr const char* kDatasetFormat = "bevloc-dataset-v1";

struct DatasetFrame {
  std::string frame_id;
  std::string session;
  std::string role;  // "map", "query" or "impostor"
  int floor = 0;
  int seq = 0;  // keyframe position within its session
  Pose2D world_pose;
  std::string grid_file;  // path of the grid blob, relative to the dataset dir
};

struct LoopPairInfo {
  std::string a, b;
  double distance_m = 0.0;
  double rel_yaw_deg = 0.0;  // yaw of the pose mapping frame a to frame b
  bool cross_floor = false;
};

struct FramePairRef {
  std::string a, b;
};

struct DatasetManifest {
  GridGeometry geometry;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<DatasetFrame> frames;
  std::vector<LoopPairInfo> loop_pairs;       // ground-truth revisits (< 2 m)
  std::vector<FramePairRef> negative_pairs;   // same-world pairs beyond 3 m
  std::vector<FramePairRef> false_pairs;      // impostor-vs-map pairs

  const DatasetFrame* find(const std::string& frame_id) const {
    for (const auto& f : frames)
      if (f.frame_id == frame_id) return &f;
    return nullptr;
  }
};

//============================================================================
// JSON mapping
//============================================================================

inline nlohmann::ordered_json geometry_to_json(const GridGeometry& g) {
  nlohmann::ordered_json j;
  j["H"] = g.H;
  j["W"] = g.W;
  j["C"] = g.C;
  j["grid_size_m"] = g.grid_size_m;
  j["T"] = g.T;
  j["R"] = g.R;
  j["radial_step_m"] = g.radial_step_m;
  return j;
}

inline GridGeometry geometry_from_json(const nlohmann::json& j) {
  GridGeometry g;
  g.H = j.at("H").get<std::size_t>();
  g.W = j.at("W").get<std::size_t>();
  g.C = j.at("C").get<std::size_t>();
  g.grid_size_m = j.at("grid_size_m").get<double>();
  g.T = j.at("T").get<std::size_t>();
  g.R = j.at("R").get<std::size_t>();
  g.radial_step_m = j.at("radial_step_m").get<double>();
  g.validate();
  return g;
}

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = kDatasetFormat;
  j["geometry"] = geometry_to_json(m.geometry);
  j["noise_sigma"] = m.noise_sigma;
  j["seed"] = m.seed;
  auto frames = nlohmann::ordered_json::array();
  for (const auto& f : m.frames) {
    nlohmann::ordered_json fj;
    fj["id"] = f.frame_id;
    fj["session"] = f.session;
    fj["role"] = f.role;
    fj["floor"] = f.floor;
    fj["seq"] = f.seq;
    fj["x"] = f.world_pose.x_m;
    fj["y"] = f.world_pose.y_m;
    fj["yaw_deg"] = f.world_pose.yaw_deg;
    fj["grid"] = f.grid_file;
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  auto loops = nlohmann::ordered_json::array();
  for (const auto& p : m.loop_pairs) {
    nlohmann::ordered_json pj;
    pj["a"] = p.a;
    pj["b"] = p.b;
    pj["distance_m"] = p.distance_m;
    pj["rel_yaw_deg"] = p.rel_yaw_deg;
    pj["cross_floor"] = p.cross_floor;
    loops.push_back(std::move(pj));
  }
  j["loop_pairs"] = std::move(loops);
  auto negs = nlohmann::ordered_json::array();
  for (const auto& p : m.negative_pairs) negs.push_back({{"a", p.a}, {"b", p.b}});
  j["negative_pairs"] = std::move(negs);
  auto fps = nlohmann::ordered_json::array();
  for (const auto& p : m.false_pairs) fps.push_back({{"a", p.a}, {"b", p.b}});
  j["false_pairs"] = std::move(fps);
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != kDatasetFormat)
    throw std::runtime_error("dataset manifest: unsupported format tag");
  DatasetManifest m;
  m.geometry = geometry_from_json(j.at("geometry"));
  m.noise_sigma = j.at("noise_sigma").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& fj : j.at("frames")) {
    DatasetFrame f;
    f.frame_id = fj.at("id").get<std::string>();
    f.session = fj.at("session").get<std::string>();
    f.role = fj.at("role").get<std::string>();
    f.floor = fj.at("floor").get<int>();
    f.seq = fj.at("seq").get<int>();
    f.world_pose = Pose2D(fj.at("x").get<double>(), fj.at("y").get<double>(),
                          fj.at("yaw_deg").get<double>());
    f.grid_file = fj.at("grid").get<std::string>();
    m.frames.push_back(std::move(f));
  }
  for (const auto& pj : j.at("loop_pairs")) {
    LoopPairInfo p;
    p.a = pj.at("a").get<std::string>();
    p.b = pj.at("b").get<std::string>();
    p.distance_m = pj.at("distance_m").get<double>();
    p.rel_yaw_deg = pj.at("rel_yaw_deg").get<double>();
    p.cross_floor = pj.at("cross_floor").get<bool>();
    m.loop_pairs.push_back(std::move(p));
  }
  for (const auto& pj : j.at("negative_pairs"))
    m.negative_pairs.push_back({pj.at("a").get<std::string>(), pj.at("b").get<std::string>()});
  for (const auto& pj : j.at("false_pairs"))
    m.false_pairs.push_back({pj.at("a").get<std::string>(), pj.at("b").get<std::string>()});
  return m;
}

//============================================================================
// On-disk layout: manifest.json + poses.csv + grids/<frame>.bvl
//============================================================================

inline void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                          const std::vector<BevGrid>& grids) {
  if (grids.size() != manifest.frames.size())
    throw std::invalid_argument("write_dataset: one grid per frame required");
  std::error_code ec;
  std::filesystem::create_directories(dir / "grids", ec);
  if (ec) throw std::runtime_error("write_dataset: cannot create " + (dir / "grids").string());

  for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
    const DatasetFrame& f = manifest.frames[i];
    check_csv_field(f.frame_id, "write_dataset frame id");
    check_csv_field(f.session, "write_dataset session");
    const BevGrid& g = grids[i];
    if (g.H() != manifest.geometry.H || g.W() != manifest.geometry.W ||
        g.C() != manifest.geometry.C)
      throw std::invalid_argument("write_dataset: grid shape mismatch for " + f.frame_id);
    write_blob_file(dir / f.grid_file, {g.H(), g.W(), g.C()}, g.data.data());
  }

  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("write_dataset: cannot open manifest.json in " +
                                       dir.string());
    out << manifest_to_json(manifest).dump(2) << "\n";
    if (!out) throw std::runtime_error("write_dataset: manifest write failed");
  }
  {
    std::ofstream out(dir / "poses.csv", std::ios::binary);
    if (!out) throw std::runtime_error("write_dataset: cannot open poses.csv in " +
                                       dir.string());
    out << "frame_id,session,floor,x,y,yaw_deg\n";
    for (const auto& f : manifest.frames)
      out << f.frame_id << ',' << f.session << ',' << f.floor << ','
          << format_double(f.world_pose.x_m) << ',' << format_double(f.world_pose.y_m) << ','
          << format_double(f.world_pose.yaw_deg) << "\n";
    if (!out) throw std::runtime_error("write_dataset: poses.csv write failed");
  }
}

inline DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_dataset_manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    return manifest_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("read_dataset_manifest: " + path.string() + ": " + e.what());
  }
}

inline BevGrid load_frame_grid(const std::filesystem::path& dir, const DatasetFrame& frame,
                               double grid_size_m) {
  const Blob blob = read_blob_file(dir / frame.grid_file);
  if (blob.dims.size() != 3)
    throw std::runtime_error("load_frame_grid: expected a rank-3 grid in " + frame.grid_file);
  BevGrid g;
  g.grid_size_m = grid_size_m;
  g.data = Tensor3(blob.dims[0], blob.dims[1], blob.dims[2]);
  std::copy(blob.values.begin(), blob.values.end(), g.data.data());
  return g;
}

inline BevGrid load_frame_grid(const std::filesystem::path& dir, const DatasetManifest& m,
                               const std::string& frame_id) {
  const DatasetFrame* f = m.find(frame_id);
  if (!f) throw std::runtime_error("load_frame_grid: unknown frame id " + frame_id);
  return load_frame_grid(dir, *f, m.geometry.grid_size_m);
}

/** @brief All ground-truth revisit pairs: planar distance below the threshold,
 *  impostor frames excluded, order following the frame list. */
inline std::vector<LoopPairInfo> compute_loop_pairs(const std::vector<DatasetFrame>& frames,
                                                    double max_dist_m = 2.0) {
  std::vector<LoopPairInfo> pairs;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].role == "impostor") continue;
    for (std::size_t j = i + 1; j < frames.size(); ++j) {
      if (frames[j].role == "impostor") continue;
      const double d = frame_distance_m(frames[i].world_pose, frames[j].world_pose);
      if (d >= max_dist_m) continue;
      LoopPairInfo p;
      p.a = frames[i].frame_id;
      p.b = frames[j].frame_id;
      p.distance_m = d;
      p.rel_yaw_deg = relative_pose(frames[i].world_pose, frames[j].world_pose).yaw_deg;
      p.cross_floor = frames[i].floor != frames[j].floor;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

}  // namespace bevloc
