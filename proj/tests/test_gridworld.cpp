#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "travdiff/gridworld.hpp"
#include "travdiff/rng.hpp"

using namespace travdiff;
using namespace travdiff::gridworld;

namespace {

// O(HW * |blocked|) reference for the teacher map.
Field brute_force_teacher(const Scene& scene, const Embodiment& emb) {
  std::vector<Pixel> blocked;
  for (const Obstacle& ob : scene.obstacles)
    if (emb.blocks(ob.height))
      for (const Pixel& p : ob.cells) blocked.push_back(p);

  Field out(scene.height, scene.width, 1.0f);
  if (blocked.empty()) return out;
  for (int r = 0; r < scene.height; ++r)
    for (int c = 0; c < scene.width; ++c) {
      double best = 1e30;
      for (const Pixel& b : blocked) {
        double dr = r - b.row, dc = c - b.col;
        best = std::min(best, dr * dr + dc * dc);
      }
      out.at(r, c) = static_cast<float>(std::min(1.0, std::sqrt(best) / kTravSaturation));
    }
  return out;
}

}  // namespace

TEST_CASE("teacher map equals the brute-force distance transform") {
  SceneConfig cfg;
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    Scene scene = gen_scene(seed, cfg);
    for (const Embodiment& emb : {Embodiment::ground(), Embodiment::aerial()}) {
      Field fast = teacher_traversability(scene, emb);
      Field slow = brute_force_teacher(scene, emb);
      REQUIRE(fast.v.size() == slow.v.size());
      for (size_t i = 0; i < fast.v.size(); ++i)
        CHECK(fast.v[i] == doctest::Approx(slow.v[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("teacher is zero on blocked cells and one far away") {
  Scene scene = gen_scene(5, SceneConfig{});
  Embodiment g = Embodiment::ground();
  Field t = teacher_traversability(scene, g);
  for (const Pixel& p : scene.blocked_cells(true)) CHECK(t.at(p.row, p.col) == 0.0f);
  // Corner rows are kept free by the generator's row band.
  CHECK(t.at(0, 0) > 0.0f);
  bool ones = false;
  for (float v : t.v) ones = ones || v == 1.0f;
  CHECK(ones);
}

TEST_CASE("aerial teacher ignores low obstacles") {
  Scene scene;
  scene.obstacles.push_back({{{20, 20}, {20, 21}}, ObstacleHeight::low});
  Field t = teacher_traversability(scene, Embodiment::aerial());
  for (float v : t.v) CHECK(v == 1.0f);
  Field t2 = teacher_traversability(scene, Embodiment::ground());
  CHECK(t2.at(20, 20) == 0.0f);
}

TEST_CASE("generated scenes respect the documented constraints") {
  SceneConfig cfg;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Scene scene = gen_scene(seed, cfg);
    CHECK(scene.obstacles.size() >= static_cast<size_t>(cfg.min_obstacles));
    CHECK(scene.obstacles.size() <= static_cast<size_t>(cfg.max_obstacles));
    for (size_t i = 0; i < scene.obstacles.size(); ++i) {
      const auto& cells = scene.obstacles[i].cells;
      CHECK(cells.size() >= static_cast<size_t>(cfg.min_size));
      CHECK(cells.size() <= static_cast<size_t>(cfg.max_size));
      for (const Pixel& p : cells) {
        CHECK(p.row >= cfg.row_min);
        CHECK(p.row <= cfg.row_max);
        CHECK(p.col >= 0);
        CHECK(p.col < scene.width);
      }
      for (size_t j = i + 1; j < scene.obstacles.size(); ++j)
        for (const Pixel& a : cells)
          for (const Pixel& b : scene.obstacles[j].cells)
            CHECK(dist(a, b) >= cfg.min_gap);
    }
  }
}

TEST_CASE("impossible scene configs are rejected") {
  SceneConfig cfg;
  cfg.min_obstacles = cfg.max_obstacles = 40;  // cannot fit with gap 7
  CHECK_THROWS_AS(gen_scene(1, cfg), std::runtime_error);
  SceneConfig bad;
  bad.max_obstacles = bad.min_obstacles - 1;
  CHECK_THROWS_AS(gen_scene(1, bad), std::invalid_argument);
}

TEST_CASE("rendered image encodes the scene in its channels") {
  Scene scene = gen_scene(9, SceneConfig{});
  Rng rng(1);
  Image img = render_image(scene, 0.0, rng);
  for (const Obstacle& ob : scene.obstacles) {
    int k = ob.height == ObstacleHeight::tall ? 2 : 1;
    for (const Pixel& p : ob.cells) {
      CHECK(img.ch[0].at(p.row, p.col) == 0.0f);
      CHECK(img.ch[static_cast<size_t>(k)].at(p.row, p.col) == 1.0f);
    }
  }
  CHECK(img.ch[0].at(0, 0) == 1.0f);

  Rng rng2(1);
  Image noisy = render_image(scene, 0.1, rng2);
  CHECK(noisy.ch[0].min_value() >= 0.0f);
  CHECK(noisy.ch[0].max_value() <= 1.0f);
  bool differs = false;
  for (size_t i = 0; i < noisy.ch[0].v.size(); ++i)
    differs = differs || noisy.ch[0].v[i] != img.ch[0].v[i];
  CHECK(differs);
}

TEST_CASE("start/goal sampling respects band, threshold and separation") {
  Scene scene = gen_scene(13, SceneConfig{});
  Embodiment emb = Embodiment::ground();
  Field t = teacher_traversability(scene, emb);
  for (uint64_t k = 0; k < 25; ++k) {
    Rng rng = Rng::derive(77, "sg", k);
    auto [start, goal] = sample_start_goal(t, emb, rng);
    CHECK(start.row >= t.rows - kStartBandRows);
    CHECK(goal.row <= t.rows / 2);
    CHECK(t.at(start.row, start.col) >= emb.safety_threshold);
    CHECK(t.at(goal.row, goal.col) >= emb.safety_threshold);
    CHECK(dist(start, goal) >= kMinStartGoalDist);
  }
}

TEST_CASE("goal sampling prefers fully traversable pixels when available") {
  Scene scene = gen_scene(13, SceneConfig{});
  Embodiment emb = Embodiment::ground();
  Field t = teacher_traversability(scene, emb);
  // The generated scenes always leave far-from-obstacle pixels in the top
  // half, so every drawn goal should sit on one.
  for (uint64_t k = 0; k < 25; ++k) {
    Rng rng = Rng::derive(78, "sg", k);
    auto [start, goal] = sample_start_goal(t, emb, rng);
    (void)start;
    CHECK(t.at(goal.row, goal.col) >= 0.9f);
  }
}

TEST_CASE("unroutable maps raise") {
  Field t(kGridSize, kGridSize, 0.0f);  // nothing admissible anywhere
  Rng rng(1);
  CHECK_THROWS_AS(sample_start_goal(t, Embodiment::ground(), rng), std::runtime_error);
}

TEST_CASE("state sampling clamps angles and tracks the prior") {
  Embodiment air = Embodiment::aerial();
  double zsum = 0;
  for (uint64_t k = 0; k < 200; ++k) {
    Rng rng = Rng::derive(5, "state", k);
    RobotState st = sample_state(air, rng);
    for (int i = 3; i < 6; ++i) {
      CHECK(st.s[static_cast<size_t>(i)] <= 3.14159266);
      CHECK(st.s[static_cast<size_t>(i)] >= -3.14159266);
    }
    zsum += st.s[2];
  }
  CHECK(zsum / 200.0 == doctest::Approx(air.state_mean[2]).epsilon(0.1));
  CHECK(air.state_mean[2] > Embodiment::ground().state_mean[2]);
}

TEST_CASE("scene json round trip") {
  Scene scene = gen_scene(21, SceneConfig{});
  Scene back = scene_from_json(scene_to_json(scene));
  CHECK(back.width == scene.width);
  CHECK(back.height == scene.height);
  CHECK(back.seed == scene.seed);
  REQUIRE(back.obstacles.size() == scene.obstacles.size());
  for (size_t i = 0; i < scene.obstacles.size(); ++i) {
    CHECK(back.obstacles[i].height == scene.obstacles[i].height);
    CHECK(back.obstacles[i].cells == scene.obstacles[i].cells);
  }
}
