#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevloc/blob.hpp"
#include "bevloc/dataset.hpp"
#include "bevloc/decoder.hpp"
#include "bevloc/grid_ops.hpp"
#include "bevloc/localizer.hpp"
#include "bevloc/parallel.hpp"

namespace bevloc {

constexpr const char* kIndexFormat = "bevloc-index-v1";
constexpr std::array<char, 8> kIndexMagic = {'B', 'V', 'L', 'I', 'D', 'X', '1', '\n'};

namespace detail {

inline void put_u64_le(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::size_t blob_byte_size(std::size_t count) { return 32 + 4 * count; }

}  // namespace detail

/**
 * @brief Writes the index as one file: an 8-byte magic, a little-endian u64
 * manifest length, the JSON manifest, then the tensor blobs back to back.
 * Blob offsets in the manifest are relative to the end of the manifest.
 */
inline void write_descriptor_index(const std::filesystem::path& path,
                                   const DescriptorIndex& index) {
  index.geometry.validate();
  nlohmann::ordered_json j;
  j["format"] = kIndexFormat;
  j["geometry"] = geometry_to_json(index.geometry);
  auto entries = nlohmann::ordered_json::array();

  std::size_t offset = 0;
  for (const auto& e : index.entries) {
    if (e.global.size() != static_cast<Eigen::Index>(index.geometry.C))
      throw std::invalid_argument("write_descriptor_index: descriptor length mismatch for " +
                                  e.frame_id);
    if (e.polar.T() != index.geometry.T || e.polar.R() != index.geometry.R ||
        e.polar.C() != index.geometry.C)
      throw std::invalid_argument("write_descriptor_index: polar shape mismatch for " +
                                  e.frame_id);
    nlohmann::ordered_json ej;
    ej["id"] = e.frame_id;
    ej["session"] = e.session;
    ej["seq"] = e.seq;
    if (e.floor)
      ej["floor"] = *e.floor;
    else
      ej["floor"] = nullptr;
    if (e.world_pose) {
      ej["pose"] = {{"x", e.world_pose->x_m},
                    {"y", e.world_pose->y_m},
                    {"yaw_deg", e.world_pose->yaw_deg}};
    } else {
      ej["pose"] = nullptr;
    }
    ej["global_offset"] = offset;
    offset += detail::blob_byte_size(static_cast<std::size_t>(e.global.size()));
    ej["polar_offset"] = offset;
    offset += detail::blob_byte_size(e.polar.data.size());
    entries.push_back(std::move(ej));
  }
  j["entries"] = std::move(entries);
  const std::string manifest = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_descriptor_index: cannot open " + path.string());
  out.write(kIndexMagic.data(), kIndexMagic.size());
  std::array<unsigned char, 8> len{};
  detail::put_u64_le(len.data(), manifest.size());
  out.write(reinterpret_cast<const char*>(len.data()), len.size());
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& e : index.entries) {
    write_blob(out, {static_cast<std::size_t>(e.global.size())}, e.global.data());
    write_blob(out, {e.polar.T(), e.polar.R(), e.polar.C()}, e.polar.data.data());
  }
  if (!out) throw std::runtime_error("write_descriptor_index: write failed for " +
                                     path.string());
}

inline DescriptorIndex read_descriptor_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_descriptor_index: cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kIndexMagic)
    throw std::runtime_error("read_descriptor_index: " + path.string() +
                             " is not an index file");
  std::array<unsigned char, 8> len{};
  in.read(reinterpret_cast<char*>(len.data()), len.size());
  if (!in) throw std::runtime_error("read_descriptor_index: truncated header in " +
                                    path.string());
  const std::uint64_t manifest_len = detail::get_u64_le(len.data());
  std::string manifest(manifest_len, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw std::runtime_error("read_descriptor_index: truncated manifest in " +
                                    path.string());
  const std::streampos blob_base = in.tellg();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("read_descriptor_index: " + path.string() + ": " + e.what());
  }
  if (j.at("format").get<std::string>() != kIndexFormat)
    throw std::runtime_error("read_descriptor_index: unsupported format tag in " +
                             path.string());

  DescriptorIndex index;
  index.geometry = geometry_from_json(j.at("geometry"));
  for (const auto& ej : j.at("entries")) {
    IndexEntry e;
    e.frame_id = ej.at("id").get<std::string>();
    e.session = ej.at("session").get<std::string>();
    e.seq = ej.at("seq").get<int>();
    if (!ej.at("floor").is_null()) e.floor = ej.at("floor").get<int>();
    if (!ej.at("pose").is_null()) {
      const auto& pj = ej.at("pose");
      e.world_pose = Pose2D(pj.at("x").get<double>(), pj.at("y").get<double>(),
                            pj.at("yaw_deg").get<double>());
    }

    in.seekg(blob_base + static_cast<std::streamoff>(ej.at("global_offset").get<std::uint64_t>()));
    Blob gb = read_blob(in);
    if (gb.dims.size() != 1)
      throw std::runtime_error("read_descriptor_index: bad descriptor rank for " + e.frame_id);
    e.global = VecX(static_cast<Eigen::Index>(gb.dims[0]));
    std::copy(gb.values.begin(), gb.values.end(), e.global.data());

    in.seekg(blob_base + static_cast<std::streamoff>(ej.at("polar_offset").get<std::uint64_t>()));
    Blob pb = read_blob(in);
    if (pb.dims.size() != 3)
      throw std::runtime_error("read_descriptor_index: bad polar rank for " + e.frame_id);
    e.polar.radial_step_m = index.geometry.radial_step_m;
    e.polar.data = Tensor3(pb.dims[0], pb.dims[1], pb.dims[2]);
    std::copy(pb.values.begin(), pb.values.end(), e.polar.data.data());

    index.add(std::move(e));
  }
  return index;
}

/**
 * @brief Decodes the selected dataset frames into an index: polar grid plus
 * pooled global descriptor per frame. Unit pooling comes from the weights'
 * configuration.
 */
inline DescriptorIndex build_descriptor_index(const std::filesystem::path& dataset_dir,
                                              const DatasetManifest& manifest,
                                              const DecoderWeights& weights,
                                              const std::vector<std::string>& roles = {"map"}) {
  DescriptorIndex index;
  index.geometry = manifest.geometry;
  if (weights.hyper.T != manifest.geometry.T || weights.hyper.R != manifest.geometry.R ||
      weights.hyper.C != manifest.geometry.C)
    throw std::invalid_argument(
        "build_descriptor_index: weights and dataset disagree on polar shape");

  std::vector<const DatasetFrame*> selected;
  for (const auto& f : manifest.frames)
    for (const auto& r : roles)
      if (f.role == r) {
        selected.push_back(&f);
        break;
      }

  std::vector<IndexEntry> entries(selected.size());
  parallel_for(selected.size(), [&](std::size_t i) {
    const DatasetFrame& f = *selected[i];
    const BevGrid grid = load_frame_grid(dataset_dir, f, manifest.geometry.grid_size_m);
    IndexEntry e;
    e.frame_id = f.frame_id;
    e.session = f.session;
    e.seq = f.seq;
    e.floor = f.floor;
    e.world_pose = f.world_pose;
    e.polar = polar_transform(grid, manifest.geometry.T, manifest.geometry.R,
                              manifest.geometry.radial_step_m);
    e.global = global_pool(e.polar, weights.hyper.pooling, weights.hyper.gem_p).values;
    entries[i] = std::move(e);
  });
  for (auto& e : entries) index.add(std::move(e));
  return index;
}

/** @brief Local-view descriptors for every index entry, decoded in parallel. */
inline std::vector<LocalViewDescriptor> decode_index_descriptors(
    const DescriptorIndex& index, const DecoderWeights& weights) {
  std::vector<LocalViewDescriptor> descs(index.entries.size());
  parallel_for(index.entries.size(), [&](std::size_t i) {
    descs[i] = decode_local_view(index.entries[i].polar, weights);
  });
  return descs;
}

}  // namespace bevloc
