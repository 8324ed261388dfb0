#include "travdiff/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "travdiff/rng.hpp"

namespace travdiff::dataset {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string GenConfig::to_json() const {
  json j;
  j["n_scenes"] = n_scenes;
  j["image_noise_std"] = image_noise_std;
  j["scene"] = {{"min_obstacles", scene.min_obstacles}, {"max_obstacles", scene.max_obstacles},
                {"min_size", scene.min_size},           {"max_size", scene.max_size},
                {"tall_fraction", scene.tall_fraction}, {"min_gap", scene.min_gap},
                {"row_min", scene.row_min},             {"row_max", scene.row_max}};
  j["supervision"] = {{"min_waypoints", supervision.min_waypoints},
                      {"max_waypoints", supervision.max_waypoints},
                      {"waypoint_sigma", supervision.waypoint_sigma},
                      {"max_resamples", supervision.max_resamples},
                      {"curve_samples", supervision.curve_samples},
                      {"blur_sigma", supervision.blur_sigma},
                      {"blob_sigma", supervision.blob_sigma}};
  j["ground"] = ground;
  j["aerial"] = aerial;
  return j.dump();
}

GenConfig GenConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  GenConfig c;
  c.n_scenes = j.value("n_scenes", c.n_scenes);
  c.image_noise_std = j.value("image_noise_std", c.image_noise_std);
  if (j.contains("scene")) {
    const json& s = j["scene"];
    c.scene.min_obstacles = s.value("min_obstacles", c.scene.min_obstacles);
    c.scene.max_obstacles = s.value("max_obstacles", c.scene.max_obstacles);
    c.scene.min_size = s.value("min_size", c.scene.min_size);
    c.scene.max_size = s.value("max_size", c.scene.max_size);
    c.scene.tall_fraction = s.value("tall_fraction", c.scene.tall_fraction);
    c.scene.min_gap = s.value("min_gap", c.scene.min_gap);
    c.scene.row_min = s.value("row_min", c.scene.row_min);
    c.scene.row_max = s.value("row_max", c.scene.row_max);
  }
  if (j.contains("supervision")) {
    const json& s = j["supervision"];
    c.supervision.min_waypoints = s.value("min_waypoints", c.supervision.min_waypoints);
    c.supervision.max_waypoints = s.value("max_waypoints", c.supervision.max_waypoints);
    c.supervision.waypoint_sigma = s.value("waypoint_sigma", c.supervision.waypoint_sigma);
    c.supervision.max_resamples = s.value("max_resamples", c.supervision.max_resamples);
    c.supervision.curve_samples = s.value("curve_samples", c.supervision.curve_samples);
    c.supervision.blur_sigma = s.value("blur_sigma", c.supervision.blur_sigma);
    c.supervision.blob_sigma = s.value("blob_sigma", c.supervision.blob_sigma);
  }
  c.ground = j.value("ground", c.ground);
  c.aerial = j.value("aerial", c.aerial);
  return c;
}

static std::string scene_name(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%05d", idx);
  return buf;
}

void assign_splits(Dataset& ds) {
  // unique scene ids in first-seen order
  std::vector<std::string> scenes;
  for (const Sample& s : ds.samples)
    if (scenes.empty() || scenes.back() != s.scene_id) scenes.push_back(s.scene_id);

  std::vector<std::pair<uint64_t, std::string>> order;
  order.reserve(scenes.size());
  for (const std::string& id : scenes)
    order.emplace_back(fnv1a(id.data(), id.size(), 0xcbf29ce484222325ULL ^ ds.seed), id);
  std::sort(order.begin(), order.end());

  const int n = static_cast<int>(order.size());
  const int n_val = n / 10, n_test = n / 10;
  const int n_train = n - n_val - n_test;
  std::vector<int> bucket;  // 0 train, 1 val, 2 test, by scene rank
  bucket.resize(static_cast<size_t>(n));
  std::unordered_map<std::string, int> scene_bucket;
  for (int r = 0; r < n; ++r) {
    int b = r < n_train ? 0 : (r < n_train + n_val ? 1 : 2);
    scene_bucket[order[static_cast<size_t>(r)].second] = b;
  }
  ds.train_idx.clear();
  ds.val_idx.clear();
  ds.test_idx.clear();
  for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i) {
    switch (scene_bucket.at(ds.samples[static_cast<size_t>(i)].scene_id)) {
      case 0: ds.train_idx.push_back(i); break;
      case 1: ds.val_idx.push_back(i); break;
      default: ds.test_idx.push_back(i); break;
    }
  }
}

std::string dataset_fingerprint(const Dataset& ds) {
  std::vector<int> order(ds.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return ds.samples[static_cast<size_t>(a)].id < ds.samples[static_cast<size_t>(b)].id;
  });
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_field = [&](const Field& f) { h = fnv1a(f.v.data(), f.v.size() * sizeof(float), h); };
  for (int idx : order) {
    const Sample& s = ds.samples[static_cast<size_t>(idx)];
    h = fnv1a(s.id.data(), s.id.size(), h);
    for (const Field& c : s.image.ch) mix_field(c);
    mix_field(s.teacher);
    mix_field(s.heatmap);
    mix_field(s.sg_start);
    mix_field(s.sg_goal);
    h = fnv1a(s.state.s.data(), sizeof(s.state.s), h);
    int ends[4] = {s.start.row, s.start.col, s.goal.row, s.goal.col};
    h = fnv1a(ends, sizeof(ends), h);
  }
  return hash_hex(h);
}

static Sample make_sample(const gridworld::Scene& scene, const Image& image,
                          const std::string& scene_id, const gridworld::Embodiment& emb,
                          const supervision::SupervisionConfig& sup, uint64_t seed,
                          uint64_t attempt) {
  Sample s;
  s.scene_id = scene_id;
  s.embodiment = emb.name();
  s.id = scene_id + "-" + s.embodiment;
  s.image = image;
  s.teacher = gridworld::teacher_traversability(scene, emb);

  std::string tag = s.id;
  Rng rng_sg = Rng::derive(seed, "startgoal:" + tag, attempt);
  auto [start, goal] = gridworld::sample_start_goal(s.teacher, emb, rng_sg);
  s.start = start;
  s.goal = goal;
  Rng rng_state = Rng::derive(seed, "state:" + tag, attempt);
  s.state = gridworld::sample_state(emb, rng_state);
  // plan from where the robot stands
  s.state.s[0] = start.col;
  s.state.s[1] = start.row;
  Rng rng_sup = Rng::derive(seed, "trace:" + tag, attempt);
  s.heatmap = supervision::make_supervision_heatmap(start, goal, s.teacher, emb, sup, rng_sup);
  auto sg = supervision::make_sg_tensor(start, goal, s.teacher.rows, s.teacher.cols,
                                        sup.blob_sigma);
  s.sg_start = sg.start;
  s.sg_goal = sg.goal;
  return s;
}

Dataset generate_dataset(const std::string& out_dir, uint64_t seed, const GenConfig& config) {
  if (!config.ground && !config.aerial)
    throw std::invalid_argument("generate_dataset: no embodiment enabled");
  Dataset ds;
  ds.seed = seed;
  ds.config_hash = hash_hex(fnv1a(config.to_json().data(), config.to_json().size()));

  std::vector<gridworld::Embodiment> embs;
  if (config.ground) embs.push_back(gridworld::Embodiment::ground());
  if (config.aerial) embs.push_back(gridworld::Embodiment::aerial());

  uint64_t attempt = 0;
  const uint64_t max_attempts = 20ULL * static_cast<uint64_t>(std::max(1, config.n_scenes));
  for (int i = 0; i < config.n_scenes; ++i) {
    bool placed = false;
    while (!placed) {
      if (attempt >= max_attempts)
        throw std::runtime_error("generate_dataset: too many unroutable scenes");
      ++attempt;
      try {
        Rng rng_scene = Rng::derive(seed, "scene", attempt);
        gridworld::Scene scene = gridworld::gen_scene(rng_scene.next_u64(), config.scene);
        Rng rng_img = Rng::derive(seed, "image", attempt);
        Image image = gridworld::render_image(scene, config.image_noise_std, rng_img);
        std::string sid = scene_name(i);
        std::vector<Sample> group;
        for (const auto& emb : embs)
          group.push_back(make_sample(scene, image, sid, emb, config.supervision, seed, attempt));
        for (Sample& s : group) ds.samples.push_back(std::move(s));
        placed = true;
      } catch (const std::runtime_error&) {
        // unsatisfiable or unroutable draw: advance the attempt stream
      }
    }
  }

  assign_splits(ds);
  ds.data_hash = dataset_fingerprint(ds);
  if (!out_dir.empty()) write_dataset(out_dir, ds, config);
  return ds;
}

void write_dataset(const std::string& out_dir, const Dataset& ds, const GenConfig& config) {
  fs::create_directories(out_dir + "/samples");
  json meta;
  meta["seed"] = ds.seed;
  meta["config"] = json::parse(config.to_json());
  meta["config_hash"] = ds.config_hash;
  meta["data_hash"] = ds.data_hash;
  meta["samples"] = json::array();

  auto split_of = [&](int i) {
    if (std::binary_search(ds.val_idx.begin(), ds.val_idx.end(), i)) return "val";
    if (std::binary_search(ds.test_idx.begin(), ds.test_idx.end(), i)) return "test";
    return "train";
  };

  for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i) {
    const Sample& s = ds.samples[static_cast<size_t>(i)];
    meta["samples"].push_back({{"id", s.id}, {"split", split_of(i)}});

    const std::string dir = out_dir + "/samples/" + s.id;
    fs::create_directories(dir);
    const int rows = s.teacher.rows, cols = s.teacher.cols;

    std::vector<float> img(static_cast<size_t>(3) * rows * cols);
    for (int c = 0; c < 3; ++c)
      std::copy(s.image.ch[static_cast<size_t>(c)].v.begin(),
                s.image.ch[static_cast<size_t>(c)].v.end(),
                img.begin() + static_cast<size_t>(c) * rows * cols);
    write_f32_blob(dir + "/image.f32", img.data(), img.size());
    write_f32_blob(dir + "/teacher.f32", s.teacher.v.data(), s.teacher.v.size());
    write_f32_blob(dir + "/heatmap.f32", s.heatmap.v.data(), s.heatmap.v.size());
    std::vector<float> sg(static_cast<size_t>(2) * rows * cols);
    std::copy(s.sg_start.v.begin(), s.sg_start.v.end(), sg.begin());
    std::copy(s.sg_goal.v.begin(), s.sg_goal.v.end(), sg.begin() + s.sg_start.v.size());
    write_f32_blob(dir + "/sg.f32", sg.data(), sg.size());

    json m;
    m["id"] = s.id;
    m["scene_id"] = s.scene_id;
    m["embodiment"] = s.embodiment;
    m["dtype"] = "f32le";
    m["shapes"] = {{"image", {3, rows, cols}},
                   {"teacher", {rows, cols}},
                   {"heatmap", {rows, cols}},
                   {"sg", {2, rows, cols}}};
    m["state"] = s.state.s;
    m["start"] = {s.start.row, s.start.col};
    m["goal"] = {s.goal.row, s.goal.col};
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot write " + dir + "/manifest.json");
    mf << m.dump(2) << "\n";
  }

  std::ofstream df(out_dir + "/dataset.json");
  if (!df) throw std::runtime_error("cannot write " + out_dir + "/dataset.json");
  df << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream df(dir + "/dataset.json");
  if (!df) throw std::runtime_error("missing dataset manifest: " + dir + "/dataset.json");
  json meta = json::parse(df);

  Dataset ds;
  ds.seed = meta.at("seed").get<uint64_t>();
  ds.config_hash = meta.at("config_hash").get<std::string>();

  int i = 0;
  for (const json& entry : meta.at("samples")) {
    Sample s;
    s.id = entry.at("id").get<std::string>();
    const std::string sdir = dir + "/samples/" + s.id;
    std::ifstream mf(sdir + "/manifest.json");
    if (!mf) throw std::runtime_error("missing sample manifest: " + sdir);
    json m = json::parse(mf);
    s.scene_id = m.at("scene_id").get<std::string>();
    s.embodiment = m.at("embodiment").get<std::string>();
    const auto& sh = m.at("shapes").at("teacher");
    const int rows = sh[0].get<int>(), cols = sh[1].get<int>();
    const size_t hw = static_cast<size_t>(rows) * cols;

    std::vector<float> img = read_f32_blob(sdir + "/image.f32", 3 * hw);
    for (int c = 0; c < 3; ++c) {
      s.image.ch[static_cast<size_t>(c)] = Field(rows, cols);
      std::copy(img.begin() + static_cast<size_t>(c) * hw, img.begin() + (c + 1) * hw,
                s.image.ch[static_cast<size_t>(c)].v.begin());
    }
    s.teacher = Field(rows, cols);
    s.teacher.v = read_f32_blob(sdir + "/teacher.f32", hw);
    s.heatmap = Field(rows, cols);
    s.heatmap.v = read_f32_blob(sdir + "/heatmap.f32", hw);
    std::vector<float> sg = read_f32_blob(sdir + "/sg.f32", 2 * hw);
    s.sg_start = Field(rows, cols);
    s.sg_goal = Field(rows, cols);
    std::copy(sg.begin(), sg.begin() + static_cast<long>(hw), s.sg_start.v.begin());
    std::copy(sg.begin() + static_cast<long>(hw), sg.end(), s.sg_goal.v.begin());
    for (int k = 0; k < 6; ++k) s.state.s[static_cast<size_t>(k)] = m.at("state")[static_cast<size_t>(k)].get<double>();
    s.start = {m.at("start")[0].get<int>(), m.at("start")[1].get<int>()};
    s.goal = {m.at("goal")[0].get<int>(), m.at("goal")[1].get<int>()};
    ds.samples.push_back(std::move(s));

    const std::string split = entry.at("split").get<std::string>();
    if (split == "train") ds.train_idx.push_back(i);
    else if (split == "val") ds.val_idx.push_back(i);
    else ds.test_idx.push_back(i);
    ++i;
  }
  ds.data_hash = dataset_fingerprint(ds);
  const std::string recorded = meta.at("data_hash").get<std::string>();
  if (recorded != ds.data_hash)
    throw std::runtime_error("dataset fingerprint mismatch in " + dir);
  return ds;
}

}  // namespace travdiff::dataset
