#pragma once

#include <string>
#include <vector>

#include "travdiff/dataset.hpp"
#include "travdiff/diffusion.hpp"
#include "travdiff/losses.hpp"
#include "travdiff/model.hpp"

namespace travdiff::trainer {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 8;
  int epochs = 20;
  uint64_t seed = 1;
  int T = 1000;
  double temp = 1.0;
  std::string prediction_target = "epsilon";  // "epsilon" | "sample"
  losses::LossToggles toggles;
  bool use_trav_input = true;
  bool use_sg_input = true;
  bool use_film_cond = true;
  double cond_dropout = 0.0;  // fraction of samples trained unconditioned

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string&);
};

// First/second-moment optimizer state, one slot per parameter tensor.
struct AdamState {
  std::vector<std::vector<float>> m, v;
  int64_t step = 0;

  explicit AdamState(const model::ParamStore& ps);
};

// One optimizer step over a batch of samples. Throws on non-finite loss.
losses::LossBreakdown train_step(model::Net& net, const diffusion::Schedule& schedule,
                                 const std::vector<const dataset::Sample*>& batch,
                                 AdamState& adam, const TrainConfig& cfg, Rng& rng);

// Forward-only loss snapshot over up to `limit` samples.
losses::LossBreakdown eval_losses(const model::Net& net, const diffusion::Schedule& schedule,
                                  const dataset::Dataset& ds, const std::vector<int>& idx,
                                  int limit, const TrainConfig& cfg, uint64_t salt);

// Full training run on the train split. When out_dir is non-empty, writes
// loss_log.jsonl and a checkpoint after every epoch (the previous epoch's
// checkpoint survives a mid-epoch abort).
void train(model::Net& net, const dataset::Dataset& ds, const TrainConfig& cfg,
           const std::string& out_dir);

}  // namespace travdiff::trainer
