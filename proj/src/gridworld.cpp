#include "travdiff/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace travdiff::gridworld {

using json = nlohmann::json;

Embodiment Embodiment::ground() {
  Embodiment e;
  e.kind = Kind::ground;
  e.safety_threshold = 0.3;
  e.state_mean = {32.0, 60.0, 0.5, 0.0, 0.0, 0.0};
  e.state_std = {8.0, 2.0, 0.1, 0.05, 0.05, 0.2};
  return e;
}

Embodiment Embodiment::aerial() {
  Embodiment e;
  e.kind = Kind::aerial;
  e.safety_threshold = 0.3;
  e.state_mean = {32.0, 60.0, 6.0, 0.0, 0.0, 0.0};
  e.state_std = {8.0, 2.0, 1.0, 0.1, 0.1, 0.2};
  return e;
}

std::vector<Pixel> Scene::blocked_cells(bool include_low) const {
  std::vector<Pixel> out;
  for (const Obstacle& ob : obstacles) {
    if (ob.height == ObstacleHeight::low && !include_low) continue;
    out.insert(out.end(), ob.cells.begin(), ob.cells.end());
  }
  return out;
}

static void validate(const SceneConfig& c) {
  if (c.min_obstacles < 0 || c.max_obstacles < c.min_obstacles)
    throw std::invalid_argument("scene config: bad obstacle count range");
  if (c.min_size < 1 || c.max_size < c.min_size)
    throw std::invalid_argument("scene config: bad size range");
  if (c.tall_fraction < 0.0 || c.tall_fraction > 1.0)
    throw std::invalid_argument("scene config: tall_fraction outside [0,1]");
  if (c.row_min < 0 || c.row_max < c.row_min || c.row_max >= kGridSize)
    throw std::invalid_argument("scene config: row band outside grid");
  if (c.max_size > kGridSize * kGridSize)
    throw std::invalid_argument("scene config: obstacle larger than grid");
}

Scene gen_scene(uint64_t seed, const SceneConfig& config) {
  validate(config);
  Scene scene;
  scene.seed = seed;
  Rng rng = Rng::derive(seed, "gen_scene");

  int count = rng.next_int(config.min_obstacles, config.max_obstacles);
  std::vector<Pixel> placed;  // all cells so far, for the gap check

  for (int i = 0; i < count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      int w = rng.next_int(1, 4);
      int h = rng.next_int(1, 4);
      if (w * h < config.min_size || w * h > config.max_size) continue;
      if (h > config.row_max - config.row_min + 1 || w > kGridSize) continue;
      int r0 = rng.next_int(config.row_min, config.row_max - h + 1);
      int c0 = rng.next_int(0, kGridSize - w);

      bool clear = true;
      for (int r = r0; r < r0 + h && clear; ++r)
        for (int c = c0; c < c0 + w && clear; ++c)
          for (const Pixel& p : placed) {
            double dr = r - p.row, dc = c - p.col;
            if (dr * dr + dc * dc < config.min_gap * config.min_gap) {
              clear = false;
              break;
            }
          }
      if (!clear) continue;

      Obstacle ob;
      ob.height = rng.next_double() < config.tall_fraction ? ObstacleHeight::tall
                                                           : ObstacleHeight::low;
      for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) ob.cells.push_back({r, c});
      placed.insert(placed.end(), ob.cells.begin(), ob.cells.end());
      scene.obstacles.push_back(std::move(ob));
      ok = true;
    }
    if (!ok) throw std::runtime_error("unsatisfiable config: obstacle placement failed");
  }
  return scene;
}

Image render_image(const Scene& scene, double noise_std, Rng& rng) {
  if (noise_std < 0.0) throw std::invalid_argument("render_image: negative noise_std");
  Image img;
  for (Field& f : img.ch) f = Field(scene.height, scene.width, 0.0f);
  for (int r = 0; r < scene.height; ++r)
    for (int c = 0; c < scene.width; ++c) img.ch[0].at(r, c) = 1.0f;
  for (const Obstacle& ob : scene.obstacles) {
    int k = ob.height == ObstacleHeight::tall ? 2 : 1;
    for (const Pixel& p : ob.cells) {
      img.ch[0].at(p.row, p.col) = 0.0f;
      img.ch[k].at(p.row, p.col) = 1.0f;
    }
  }
  if (noise_std > 0.0) {
    for (Field& f : img.ch)
      for (float& x : f.v) {
        double n = x + noise_std * rng.next_gaussian();
        x = static_cast<float>(std::clamp(n, 0.0, 1.0));
      }
  }
  return img;
}

// 1D squared distance transform over a sampled function (Felzenszwalb &
// Huttenlocher). Exact for integer-valued inputs.
static void dt1d(const std::vector<double>& f, std::vector<double>& d, int n) {
  static thread_local std::vector<int> v;
  static thread_local std::vector<double> z;
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  const double kInf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

Field teacher_traversability(const Scene& scene, const Embodiment& emb) {
  const int H = scene.height, W = scene.width;
  // Large finite sentinel instead of infinity: the lower-envelope recursion
  // divides differences of f values, and inf - inf would poison it with NaN.
  // Real squared distances stay below 2*63^2, so the sentinel never wins.
  const double kFar = 1e12;
  std::vector<double> d2(static_cast<size_t>(H) * W, kFar);
  bool any = false;
  for (const Obstacle& ob : scene.obstacles) {
    if (!emb.blocks(ob.height)) continue;
    for (const Pixel& p : ob.cells) {
      d2[static_cast<size_t>(p.row) * W + p.col] = 0.0;
      any = true;
    }
  }

  Field out(H, W, 1.0f);
  if (!any) return out;  // nothing blocks: uniformly traversable

  // Column pass then row pass.
  std::vector<double> f(std::max(H, W)), d(std::max(H, W));
  for (int c = 0; c < W; ++c) {
    for (int r = 0; r < H; ++r) f[r] = d2[static_cast<size_t>(r) * W + c];
    dt1d(f, d, H);
    for (int r = 0; r < H; ++r) d2[static_cast<size_t>(r) * W + c] = d[r];
  }
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) f[c] = d2[static_cast<size_t>(r) * W + c];
    dt1d(f, d, W);
    for (int c = 0; c < W; ++c) d2[static_cast<size_t>(r) * W + c] = d[c];
  }

  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double dd = std::sqrt(d2[static_cast<size_t>(r) * W + c]);
      out.at(r, c) = static_cast<float>(std::min(1.0, dd / kTravSaturation));
    }
  return out;
}

std::pair<Pixel, Pixel> sample_start_goal(const Field& trav, const Embodiment& emb, Rng& rng) {
  const int H = trav.rows, W = trav.cols;
  const float delta = static_cast<float>(emb.safety_threshold);

  std::vector<Pixel> starts;
  for (int r = std::max(0, H - kStartBandRows); r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (trav.at(r, c) >= delta) starts.push_back({r, c});

  std::vector<Pixel> goals, goals_pref;
  const float pref = std::max(delta, 0.9f);
  for (int r = 0; r <= H / 2; ++r)
    for (int c = 0; c < W; ++c) {
      float t = trav.at(r, c);
      if (t >= delta) goals.push_back({r, c});
      if (t >= pref) goals_pref.push_back({r, c});
    }
  if (!goals_pref.empty()) goals = std::move(goals_pref);

  if (starts.empty() || goals.empty())
    throw std::runtime_error("scene unroutable: no admissible start/goal pixels");

  for (int attempt = 0; attempt < 1000; ++attempt) {
    Pixel s = starts[static_cast<size_t>(rng.next_int(0, static_cast<int>(starts.size()) - 1))];
    Pixel g = goals[static_cast<size_t>(rng.next_int(0, static_cast<int>(goals.size()) - 1))];
    if (dist(s, g) >= kMinStartGoalDist) return {s, g};
  }
  throw std::runtime_error("scene unroutable: no admissible pair after 1000 draws");
}

RobotState sample_state(const Embodiment& emb, Rng& rng) {
  RobotState st;
  for (int i = 0; i < 6; ++i)
    st.s[i] = emb.state_mean[i] + emb.state_std[i] * rng.next_gaussian();
  const double pi = 3.14159265358979323846;
  for (int i = 3; i < 6; ++i) st.s[i] = std::clamp(st.s[i], -pi, pi);
  return st;
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["seed"] = scene.seed;
  j["obstacles"] = json::array();
  for (const Obstacle& ob : scene.obstacles) {
    json o;
    o["height"] = ob.height == ObstacleHeight::tall ? "tall" : "low";
    o["cells"] = json::array();
    for (const Pixel& p : ob.cells) o["cells"].push_back({p.row, p.col});
    j["obstacles"].push_back(std::move(o));
  }
  return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
  json j = json::parse(text);
  Scene scene;
  scene.width = j.at("width").get<int>();
  scene.height = j.at("height").get<int>();
  scene.seed = j.at("seed").get<uint64_t>();
  for (const json& o : j.at("obstacles")) {
    Obstacle ob;
    ob.height = o.at("height").get<std::string>() == "tall" ? ObstacleHeight::tall
                                                            : ObstacleHeight::low;
    for (const json& cell : o.at("cells"))
      ob.cells.push_back({cell.at(0).get<int>(), cell.at(1).get<int>()});
    scene.obstacles.push_back(std::move(ob));
  }
  return scene;
}

}  // namespace travdiff::gridworld
