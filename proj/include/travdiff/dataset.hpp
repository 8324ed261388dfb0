#pragma once

#include <string>
#include <vector>

#include "travdiff/field.hpp"
#include "travdiff/gridworld.hpp"
#include "travdiff/supervision.hpp"

namespace travdiff::dataset {

// One (scene, embodiment) training example, fully materialized.
struct Sample {
  std::string id;  // "s<scene>-<embodiment>"
  std::string scene_id;
  std::string embodiment;  // "ground" | "aerial"
  Image image;
  Field teacher;
  Field heatmap;
  Field sg_start, sg_goal;
  gridworld::RobotState state;
  Pixel start, goal;
};

struct GenConfig {
  int n_scenes = 500;
  double image_noise_std = 0.03;
  gridworld::SceneConfig scene;
  supervision::SupervisionConfig supervision;
  bool ground = true;
  bool aerial = true;

  std::string to_json() const;
  static GenConfig from_json(const std::string&);
};

struct Dataset {
  uint64_t seed = 0;
  std::string config_hash;
  std::string data_hash;
  std::vector<Sample> samples;
  std::vector<int> train_idx, val_idx, test_idx;

  const Sample& at(int idx) const { return samples[static_cast<size_t>(idx)]; }
};

// Exact 80/10/10 split of scene ids ordered by a seeded hash; all samples of
// one scene share a split so no scene leaks across them.
void assign_splits(Dataset& ds);

// Generates n_scenes routable scenes (unroutable draws are skipped and
// redrawn) with one sample per enabled embodiment, then writes
// dataset.json plus one directory per sample.
Dataset generate_dataset(const std::string& out_dir, uint64_t seed, const GenConfig& config);

Dataset load_dataset(const std::string& dir);

// Fingerprint over all sample blobs in id order; stored in dataset.json and
// in checkpoints, checked at evaluation time.
std::string dataset_fingerprint(const Dataset& ds);

void write_dataset(const std::string& out_dir, const Dataset& ds, const GenConfig& config);

}  // namespace travdiff::dataset
