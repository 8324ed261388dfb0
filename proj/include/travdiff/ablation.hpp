#pragma once

#include <string>
#include <vector>

#include "travdiff/dataset.hpp"
#include "travdiff/diffusion.hpp"
#include "travdiff/model.hpp"
#include "travdiff/planner.hpp"
#include "travdiff/trainer.hpp"

namespace travdiff::ablation {

struct SampleOptions {
  int steps = 20;
  bool zero_tokens = false;  // drop state tokens at inference only
  double cfg_weight = 0.0;   // > 0 enables guided sampling (cond/uncond mix)
  bool zero_sg = false;
  bool zero_trav = false;
};

// Ancestral sampling bound to one conditioning bundle. Deterministic in
// (net, seed, options).
Field generate_heatmap(const model::Net& net, const diffusion::Schedule& full,
                       const model::ConditioningBundle& cond, const SampleOptions& opt,
                       uint64_t seed);

struct EvalOptions {
  int steps = 20;
  bool apply_apf = true;
  double apf_radius = 2.0;
  double apf_cs = 0.2;
  int apf_iters = 5;
  double progress_weight = planner::kProgressWeight;
  bool zero_tokens = false;
  bool zero_sg = false;    // variants trained without an input evaluate with
  bool zero_trav = false;  // that channel zeroed as well
  double cfg_weight = 0.0;
  bool measure_time = false;  // fill the latency column (breaks byte-determinism)
  int max_samples = 0;        // 0 = whole index list
  std::string viz_dir;        // when set, PGM/PPM dumps for the first viz_count rows
  int viz_count = 6;
};

struct EvalRow {
  std::string id;
  std::string embodiment;
  planner::Metrics m;
};

struct Aggregate {
  double length = 0, clearance_mean = 0, clearance_min = 0, cost = 0, latency = 0;
  double safety_min = 0, safety_max = 0, success_rate = 0;
  int count = 0;
  // clearance averages over rows with at least one blocked cell; a scene the
  // embodiment can cross unobstructed has infinite clearance, which carries
  // no signal and would poison the mean.
  int clearance_count = 0;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  Aggregate mean;
  Aggregate ground, aerial;  // per-embodiment breakdown
};

EvalSummary evaluate(const model::Net& net, const dataset::Dataset& ds,
                     const std::vector<int>& idx, const EvalOptions& opt, uint64_t seed);

void write_metrics_csv(const std::string& path, const EvalSummary& s);

// One row of the component-ablation protocol: which inputs/losses a variant
// keeps, how it predicts, and how it samples.
struct AblationSpec {
  std::string name = "full";
  bool use_trav_input = true;
  bool use_sg_input = true;
  bool use_film_cond = true;
  bool use_mass_loss = true;
  bool use_trav_loss = true;
  bool use_sg_loss = true;  // endpoint-progress term of path extraction
  std::string prediction_target = "epsilon";
  int steps = 20;
  std::string guidance = "conditional";  // "conditional" | "cfg"
  double cfg_weight = 2.0;
  bool zero_cond_at_eval = false;  // train normally, drop tokens at test

  void validate() const;
  std::string to_json() const;
  static AblationSpec from_json(const std::string&);
};

trainer::TrainConfig apply_spec(const AblationSpec& spec, trainer::TrainConfig base);
EvalOptions eval_options(const AblationSpec& spec);

// Trains the variant (or reuses a compatible checkpoint under out_dir),
// evaluates the test split, and writes spec.json / metrics.csv /
// loss_curves.jsonl / sample visualizations.
EvalSummary run_ablation(const AblationSpec& spec, const dataset::Dataset& ds,
                         const trainer::TrainConfig& base, const std::string& out_dir,
                         uint64_t eval_seed);

struct TransferResult {
  double success_ground = 0, success_aerial = 0;
  int trained_ground = 0, trained_aerial = 0;
  EvalSummary summary;
};

// Trains on every ground sample plus `fraction_percent` of the aerial train
// samples (selected by seeded hash order), then reports per-embodiment
// success on the untouched test split.
TransferResult run_embodiment_transfer(const dataset::Dataset& ds, double fraction_percent,
                                       const trainer::TrainConfig& base, const EvalOptions& eopt,
                                       const std::string& out_dir, uint64_t eval_seed);

// Conditioning bundle for one dataset sample: its start/goal encoding, the
// student's traversability prediction, and the state tokens.
model::ConditioningBundle make_conditioning(const model::Net& net, const dataset::Sample& s);

// Obstacle cells recovered from the teacher map (exactly the zero pixels).
std::vector<Pixel> blocked_from_teacher(const Field& teacher);

}  // namespace travdiff::ablation
