#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>

#include "bevloc/bevloc.hpp"

using namespace bevloc;

namespace {

VecX axis_signature(std::size_t dim, Eigen::Index axis) {
  VecX v = VecX::Zero(static_cast<Eigen::Index>(dim));
  v[axis] = 1.0;
  return v;
}

GridGeometry small_geometry() {
  GridGeometry g;
  g.H = 24;
  g.W = 24;
  g.C = 8;
  g.grid_size_m = 0.5;
  g.T = 24;
  g.R = 6;
  g.radial_step_m = 0.5;
  return g;
}

}  // namespace

TEST_CASE("rendering splats landmarks into the expected cells") {
  GridGeometry geom;
  geom.H = 48;
  geom.W = 48;
  geom.C = 4;
  geom.grid_size_m = 0.5;
  geom.T = 24;
  geom.R = 12;
  geom.radial_step_m = 0.5;

  Scene scene;
  scene.extent_m = 10.0;
  scene.landmarks.push_back({Vec2(3.0, 0.0), axis_signature(4, 1)});

  // cell-centered landmark: row 24 - 3/0.5 = 18, col 24 - 0 = 24, full weight
  const BevGrid g = render_bev(scene, Pose2D(), geom);
  for (std::size_t i = 0; i < geom.H; ++i)
    for (std::size_t j = 0; j < geom.W; ++j)
      for (std::size_t c = 0; c < geom.C; ++c) {
        const double expect = (i == 18 && j == 24 && c == 1) ? 1.0 : 0.0;
        CHECK(g.data.at(i, j, c) == expect);
      }

  // half-cell offset splits the weight between two rows
  scene.landmarks[0].position = Vec2(2.75, 0.0);
  const BevGrid h = render_bev(scene, Pose2D(), geom);
  CHECK(h.data.at(18, 24, 1) == Catch::Approx(0.5).margin(1e-12));
  CHECK(h.data.at(19, 24, 1) == Catch::Approx(0.5).margin(1e-12));
  CHECK(h.data.at(18, 24, 0) == 0.0);

  // validation
  Scene empty;
  CHECK_THROWS_AS(render_bev(empty, Pose2D(), geom), std::invalid_argument);
  Scene wrong;
  wrong.extent_m = 10.0;
  wrong.landmarks.push_back({Vec2(0, 0), axis_signature(3, 0)});
  CHECK_THROWS_AS(render_bev(wrong, Pose2D(), geom), std::invalid_argument);
  CHECK_THROWS_AS(
      render_bev(scene, Pose2D::from_origin_heading(Vec2(11.0, 0.0), 0.0), geom),
      std::invalid_argument);
}

TEST_CASE("rendering is deterministic and noise is seeded") {
  const GridGeometry geom = small_geometry();
  const Scene scene = make_scene(geom.C, 12.0, 0.3, 77);
  const Pose2D pose = Pose2D::from_origin_heading(Vec2(2.0, -1.0), 30.0);

  const BevGrid a = render_bev(scene, pose, geom, 0.05, 9);
  const BevGrid b = render_bev(scene, pose, geom, 0.05, 9);
  CHECK(max_abs_diff(a.data, b.data) == 0.0);

  const BevGrid c = render_bev(scene, pose, geom, 0.05, 10);
  CHECK(max_abs_diff(a.data, c.data) > 0.0);

  const BevGrid clean1 = render_bev(scene, pose, geom, 0.0, 9);
  const BevGrid clean2 = render_bev(scene, pose, geom, 0.0, 10);
  CHECK(max_abs_diff(clean1.data, clean2.data) == 0.0);
}

TEST_CASE("a quarter turn permutes an odd grid exactly") {
  GridGeometry geom;
  geom.H = 49;
  geom.W = 49;
  geom.C = 4;
  geom.grid_size_m = 0.5;
  geom.T = 24;
  geom.R = 12;
  geom.radial_step_m = 0.5;

  // landmarks at cell centers so the splats stay single-cell
  Scene scene;
  scene.extent_m = 14.0;
  BevGrid probe(49, 49, 4, 0.5);
  const std::pair<int, int> cells[] = {{10, 20}, {24, 24}, {30, 7}, {5, 40}, {44, 31}};
  for (std::size_t k = 0; k < 5; ++k) {
    const Vec2 p(probe.row_to_x(static_cast<double>(cells[k].first)),
                 probe.col_to_y(static_cast<double>(cells[k].second)));
    scene.landmarks.push_back({p, axis_signature(4, static_cast<Eigen::Index>(k % 4))});
  }

  const BevGrid grid_a = render_bev(scene, Pose2D(), geom);
  const BevGrid grid_b = render_bev(scene, Pose2D(0.0, 0.0, 90.0), geom);

  double worst = 0.0;
  for (std::size_t i = 0; i < 49; ++i)
    for (std::size_t j = 0; j < 49; ++j)
      for (std::size_t c = 0; c < 4; ++c)
        worst = std::max(worst, std::abs(grid_b.data.at(i, j, c) - grid_a.data.at(48 - j, i, c)));
  CHECK(worst < 1e-12);
}

TEST_CASE("an integer-cell translation matches recentering the identity render") {
  GridGeometry geom;
  geom.H = 40;
  geom.W = 40;
  geom.C = 4;
  geom.grid_size_m = 0.25;
  geom.T = 24;
  geom.R = 12;
  geom.radial_step_m = 0.4;

  const Scene scene = make_scene(geom.C, 10.0, 0.4, 91);
  const double dx = 1.0, dy = 0.5;  // 4 and 2 cells
  const BevGrid at_origin = render_bev(scene, Pose2D(), geom);
  const BevGrid moved =
      render_bev(scene, Pose2D::from_origin_heading(Vec2(dx, dy), 0.0), geom);
  const BevGrid padded = bev_pad(at_origin, -dx, -dy);

  double worst = 0.0;
  for (std::size_t i = 4; i < geom.H; ++i)
    for (std::size_t j = 2; j < geom.W; ++j)
      for (std::size_t c = 0; c < geom.C; ++c)
        worst = std::max(worst, std::abs(padded.data.at(i, j, c) - moved.data.at(i, j, c)));
  CHECK(worst < 1e-12);
}

TEST_CASE("circle trajectories keep the keyframe spacing contract") {
  const double radius = 100.0 / kPi;
  const auto poses = circle_trajectory(radius, 100);
  REQUIRE(poses.size() == 100);

  const double chord = 2.0 * radius * std::sin(kPi / 100.0);
  for (std::size_t k = 1; k < poses.size(); ++k) {
    CHECK(frame_distance_m(poses[k - 1], poses[k]) == Catch::Approx(chord).margin(1e-9));
    CHECK(std::abs(wrap_deg(poses[k].yaw_deg - poses[k - 1].yaw_deg)) ==
          Catch::Approx(3.6).margin(1e-9));
  }
  CHECK(chord < 2.0);

  // headings are tangent: at phase 0 the pose sits at (R, 0) facing +y
  CHECK(poses[0].origin_in_parent().x() == Catch::Approx(radius).margin(1e-9));
  CHECK(poses[0].origin_in_parent().y() == Catch::Approx(0.0).margin(1e-9));
  CHECK(poses[0].yaw_deg == Catch::Approx(90.0).margin(1e-9));
  CHECK(poses[25].origin_in_parent().y() == Catch::Approx(radius).margin(1e-9));

  // a reversed pass flips the heading
  const auto rev = circle_trajectory(radius, 100, 0.0, true);
  CHECK(rev[0].yaw_deg == Catch::Approx(-90.0).margin(1e-9));
  CHECK(std::abs(wrap_deg(rev[0].yaw_deg - poses[0].yaw_deg))
        == Catch::Approx(180.0).margin(1e-9));

  SessionSpec spec;
  spec.session_id = "loop";
  spec.trajectory = poses;
  CHECK_NOTHROW(spec.validate());

  // too few keyframes on the same circle violate the spacing rule
  SessionSpec sparse;
  sparse.session_id = "sparse";
  sparse.trajectory = circle_trajectory(radius, 36);
  CHECK_THROWS_AS(sparse.validate(), std::invalid_argument);

  CHECK_THROWS_AS(circle_trajectory(0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(circle_trajectory(radius, 0), std::invalid_argument);
}

TEST_CASE("benchmark construction and its ground truth") {
  BenchmarkConfig cfg;
  cfg.geometry = small_geometry();
  cfg.extent_m = 12.0;
  cfg.landmark_density = 0.25;
  cfg.noise_sigma = 0.01;
  cfg.circle_radius_m = 8.0;
  cfg.map_frames = 72;
  cfg.query_frames = 10;
  cfg.impostor_frames = 3;
  cfg.negative_pairs = 15;
  cfg.floors = 2;

  auto [manifest, grids] = build_benchmark(cfg);
  REQUIRE(manifest.frames.size() == 2 * 72 + 10 + 3);
  REQUIRE(grids.size() == manifest.frames.size());

  CHECK(manifest.frames[0].frame_id == "map0-000");
  CHECK(manifest.frames[0].session == "map0");
  CHECK(manifest.frames[0].role == "map");
  CHECK(manifest.frames[0].floor == 0);
  CHECK(manifest.frames[72].frame_id == "map1-000");
  CHECK(manifest.frames[72].floor == 1);
  CHECK(manifest.frames[144].frame_id == "query0-000");
  CHECK(manifest.frames[144].role == "query");
  CHECK(manifest.frames[154].frame_id == "imp0-000");
  CHECK(manifest.frames[154].role == "impostor");
  for (std::size_t k = 0; k < 72; ++k) CHECK(manifest.frames[k].seq == static_cast<int>(k));

  SECTION("loop pairs match a brute-force sweep") {
    std::map<std::pair<std::string, std::string>, LoopPairInfo> got;
    for (const auto& p : manifest.loop_pairs) got[{p.a, p.b}] = p;
    std::size_t expected = 0;
    bool any_cross = false;
    for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
      const auto& fa = manifest.frames[i];
      if (fa.role == "impostor") continue;
      for (std::size_t j = i + 1; j < manifest.frames.size(); ++j) {
        const auto& fb = manifest.frames[j];
        if (fb.role == "impostor") continue;
        const double d = frame_distance_m(fa.world_pose, fb.world_pose);
        if (d >= 2.0) continue;
        ++expected;
        auto it = got.find({fa.frame_id, fb.frame_id});
        REQUIRE(it != got.end());
        CHECK(it->second.distance_m == Catch::Approx(d).margin(1e-12));
        CHECK(it->second.rel_yaw_deg ==
              Catch::Approx(relative_pose(fa.world_pose, fb.world_pose).yaw_deg).margin(1e-12));
        CHECK(it->second.cross_floor == (fa.floor != fb.floor));
        any_cross = any_cross || it->second.cross_floor;
      }
    }
    CHECK(manifest.loop_pairs.size() == expected);
    CHECK(expected > 0);
    CHECK(any_cross);  // floors share the x-y layout, so revisits cross floors
  }

  SECTION("negative pairs are far apart, unique, and impostor-free") {
    REQUIRE(manifest.negative_pairs.size() == 15);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : manifest.negative_pairs) {
      const DatasetFrame* fa = manifest.find(p.a);
      const DatasetFrame* fb = manifest.find(p.b);
      REQUIRE(fa != nullptr);
      REQUIRE(fb != nullptr);
      CHECK(fa->role != "impostor");
      CHECK(fb->role != "impostor");
      CHECK(frame_distance_m(fa->world_pose, fb->world_pose) > 3.0);
      CHECK(seen.insert({p.a, p.b}).second);
    }
  }

  SECTION("false pairs bind each impostor to the nearest floor-0 map frame") {
    REQUIRE(manifest.false_pairs.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& p = manifest.false_pairs[k];
      CHECK(p.a == manifest.frames[154 + k].frame_id);
      const Pose2D& qpose = manifest.frames[144 + k].world_pose;  // impostor k reuses query k
      double best = std::numeric_limits<double>::infinity();
      std::string best_id;
      for (const auto& f : manifest.frames) {
        if (f.role != "map" || f.floor != 0) continue;
        const double d = frame_distance_m(qpose, f.world_pose);
        if (d < best) {
          best = d;
          best_id = f.frame_id;
        }
      }
      CHECK(p.b == best_id);
      // the impostor's grid comes from another world entirely
      CHECK(max_abs_diff(grids[154 + k].data, grids[144 + k].data) > 0.0);
    }
  }

  SECTION("construction is deterministic") {
    auto [manifest2, grids2] = build_benchmark(cfg);
    REQUIRE(manifest2.frames.size() == manifest.frames.size());
    CHECK(manifest2.loop_pairs.size() == manifest.loop_pairs.size());
    CHECK(manifest2.negative_pairs.size() == manifest.negative_pairs.size());
    for (const std::size_t k : {std::size_t{0}, std::size_t{80}, std::size_t{150}}) {
      CHECK(manifest2.frames[k].frame_id == manifest.frames[k].frame_id);
      CHECK(manifest2.frames[k].world_pose.x_m == manifest.frames[k].world_pose.x_m);
      CHECK(max_abs_diff(grids2[k].data, grids[k].data) == 0.0);
    }
  }

  SECTION("query poses hug the mapped circle") {
    for (std::size_t k = 144; k < 154; ++k) {
      const double r = manifest.frames[k].world_pose.origin_in_parent().norm();
      CHECK(r >= cfg.circle_radius_m - cfg.query_radial_jitter_m - 1e-9);
      CHECK(r <= cfg.circle_radius_m + cfg.query_radial_jitter_m + 1e-9);
    }
  }
}

TEST_CASE("benchmark configuration round-trips through json") {
  BenchmarkConfig cfg;
  cfg.geometry = small_geometry();
  cfg.extent_m = 12.0;
  cfg.circle_radius_m = 8.0;
  cfg.map_frames = 72;
  cfg.query_frames = 10;
  cfg.floors = 3;
  cfg.scene_seed = 4242;

  const auto j = benchmark_config_to_json(cfg);
  const BenchmarkConfig back = benchmark_config_from_json(j);
  CHECK(back.geometry.H == cfg.geometry.H);
  CHECK(back.geometry.radial_step_m == cfg.geometry.radial_step_m);
  CHECK(back.extent_m == cfg.extent_m);
  CHECK(back.circle_radius_m == cfg.circle_radius_m);
  CHECK(back.map_frames == cfg.map_frames);
  CHECK(back.floors == 3);
  CHECK(back.scene_seed == 4242);

  // missing keys keep their defaults
  const BenchmarkConfig partial = benchmark_config_from_json(nlohmann::json::parse(
      R"({"map_frames": 120, "floors": 2})"));
  CHECK(partial.map_frames == 120);
  CHECK(partial.floors == 2);
  CHECK(partial.circle_radius_m == Catch::Approx(100.0 / kPi));
  CHECK(partial.geometry.H == 48);

  CHECK_THROWS_AS(benchmark_config_from_json(nlohmann::json::parse(R"({"frames": 10})")),
                  std::runtime_error);

  BenchmarkConfig bad = cfg;
  bad.impostor_frames = 99;  // more impostors than query poses
  CHECK_THROWS_AS(build_benchmark(bad), std::invalid_argument);
  bad = cfg;
  bad.circle_radius_m = 20.0;  // trajectory outside the scene
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.floors = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
