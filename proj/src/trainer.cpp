#include "travdiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace travdiff::trainer {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0) || batch < 1 || epochs < 1 || T < 1 || !(temp > 0))
    throw std::invalid_argument("train config: all numeric fields must be positive");
  if (prediction_target != "epsilon" && prediction_target != "sample")
    throw std::invalid_argument("train config: unknown prediction target " + prediction_target);
  if (cond_dropout < 0 || cond_dropout >= 1)
    throw std::invalid_argument("train config: cond_dropout must be in [0,1)");
}

std::string TrainConfig::to_json() const {
  json j;
  j["lr"] = lr;
  j["batch"] = batch;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["T"] = T;
  j["temp"] = temp;
  j["prediction_target"] = prediction_target;
  j["toggles"] = {{"noise", toggles.noise}, {"dir", toggles.dir},       {"trav", toggles.trav},
                  {"mass", toggles.mass},   {"distill", toggles.distill}};
  j["use_trav_input"] = use_trav_input;
  j["use_sg_input"] = use_sg_input;
  j["use_film_cond"] = use_film_cond;
  j["cond_dropout"] = cond_dropout;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.T = j.value("T", c.T);
  c.temp = j.value("temp", c.temp);
  c.prediction_target = j.value("prediction_target", c.prediction_target);
  if (j.contains("toggles")) {
    const json& t = j["toggles"];
    c.toggles.noise = t.value("noise", true);
    c.toggles.dir = t.value("dir", true);
    c.toggles.trav = t.value("trav", true);
    c.toggles.mass = t.value("mass", true);
    c.toggles.distill = t.value("distill", true);
  }
  c.use_trav_input = j.value("use_trav_input", c.use_trav_input);
  c.use_sg_input = j.value("use_sg_input", c.use_sg_input);
  c.use_film_cond = j.value("use_film_cond", c.use_film_cond);
  c.cond_dropout = j.value("cond_dropout", c.cond_dropout);
  return c;
}

AdamState::AdamState(const model::ParamStore& ps) {
  m.resize(ps.entries.size());
  v.resize(ps.entries.size());
  for (size_t i = 0; i < ps.entries.size(); ++i) {
    m[i].assign(ps.entries[i].value.data.size(), 0.0f);
    v[i].assign(ps.entries[i].value.data.size(), 0.0f);
  }
}

static losses::BatchOptions batch_options(const TrainConfig& cfg) {
  losses::BatchOptions opt;
  opt.toggles = cfg.toggles;
  opt.use_trav_input = cfg.use_trav_input;
  opt.use_sg_input = cfg.use_sg_input;
  opt.use_film_cond = cfg.use_film_cond;
  opt.predict_sample = cfg.prediction_target == "sample";
  opt.temp = cfg.temp;
  return opt;
}

static losses::SampleInputs sample_inputs(const dataset::Sample& s,
                                          const diffusion::Schedule& schedule, int t,
                                          bool drop_cond, Rng& rng) {
  losses::SampleInputs in;
  in.image = &s.image;
  in.teacher = &s.teacher;
  in.x0 = &s.heatmap;
  in.sg_start = &s.sg_start;
  in.sg_goal = &s.sg_goal;
  in.state = s.state;
  in.start = s.start;
  in.goal = s.goal;
  in.t = t;
  in.alpha_bar = schedule.alpha_bar[static_cast<size_t>(t)];
  in.drop_cond = drop_cond;
  in.eps = Field(s.heatmap.rows, s.heatmap.cols);
  for (float& e : in.eps.v) e = static_cast<float>(rng.next_gaussian());
  return in;
}

losses::LossBreakdown train_step(model::Net& net, const diffusion::Schedule& schedule,
                                 const std::vector<const dataset::Sample*>& batch,
                                 AdamState& adam, const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  std::vector<losses::SampleInputs> inputs;
  inputs.reserve(batch.size());
  for (const dataset::Sample* s : batch) {
    int t = rng.next_int(1, schedule.T);
    bool drop = cfg.cond_dropout > 0 && rng.next_double() < cfg.cond_dropout;
    inputs.push_back(sample_inputs(*s, schedule, t, drop, rng));
  }

  nn::Tape tape;
  model::GraphCtx<float> g(tape, net.store);
  auto nodes = losses::build_objective(g, net.cfg, inputs, batch_options(cfg));
  losses::LossBreakdown bd = losses::read_breakdown(tape, nodes);
  losses::check_finite(bd);
  tape.backward(nodes.total);

  adam.step += 1;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
  for (size_t pid = 0; pid < net.store.entries.size(); ++pid) {
    int leaf = g.leaf_of[pid];
    if (leaf < 0) continue;  // parameter not used by this graph
    const auto& grad = tape.grad(leaf).data;
    auto& w = net.store.entries[pid].value.data;
    auto& m = adam.m[pid];
    auto& v = adam.v[pid];
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = grad[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      w[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
  return bd;
}

losses::LossBreakdown eval_losses(const model::Net& net, const diffusion::Schedule& schedule,
                                  const dataset::Dataset& ds, const std::vector<int>& idx,
                                  int limit, const TrainConfig& cfg, uint64_t salt) {
  const int n = std::min<int>(limit, static_cast<int>(idx.size()));
  if (n == 0) return {};
  Rng rng = Rng::derive(cfg.seed, "val", salt);
  std::vector<losses::SampleInputs> inputs;
  for (int i = 0; i < n; ++i) {
    int t = rng.next_int(1, schedule.T);
    inputs.push_back(
        sample_inputs(ds.at(idx[static_cast<size_t>(i)]), schedule, t, false, rng));
  }
  nn::Tape tape;
  auto& store = const_cast<model::ParamStore&>(net.store);
  model::GraphCtx<float> g(tape, store);
  auto nodes = losses::build_objective(g, net.cfg, inputs, batch_options(cfg));
  return losses::read_breakdown(tape, nodes);
}

void train(model::Net& net, const dataset::Dataset& ds, const TrainConfig& cfg,
           const std::string& out_dir) {
  cfg.validate();
  if (ds.train_idx.empty()) throw std::invalid_argument("train: empty train split");

  diffusion::Schedule schedule = diffusion::cosine_schedule(cfg.T);
  net.prediction_target = cfg.prediction_target;
  net.train_T = cfg.T;
  net.dataset_hash = ds.data_hash;
  net.schedule_hash = hash_hex(schedule.hash());
  net.train_config_json = cfg.to_json();

  AdamState adam(net.store);
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/loss_log.jsonl");
    if (!log) throw std::runtime_error("cannot write " + out_dir + "/loss_log.jsonl");
  }

  int global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = ds.train_idx;
    Rng shuffle = Rng::derive(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.next_int(0, i))]);

    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch)) {
      std::vector<const dataset::Sample*> batch;
      for (size_t k = off; k < std::min(order.size(), off + cfg.batch); ++k)
        batch.push_back(&ds.at(order[k]));
      Rng step_rng = Rng::derive(cfg.seed, "step", static_cast<uint64_t>(global_step));
      losses::LossBreakdown bd = train_step(net, schedule, batch, adam, cfg, step_rng);
      ++global_step;
      if (log) {
        json line = {{"epoch", epoch},       {"step", global_step}, {"noise", bd.noise},
                     {"dir", bd.dir},        {"trav", bd.trav},     {"mass", bd.mass},
                     {"distill", bd.distill}, {"total", bd.total}};
        log << line.dump() << "\n";
      }
    }

    if (!ds.val_idx.empty()) {
      losses::LossBreakdown vb =
          eval_losses(net, schedule, ds, ds.val_idx, 16, cfg, static_cast<uint64_t>(epoch));
      if (log) {
        json line = {{"epoch", epoch},
                     {"val_noise", vb.noise},
                     {"val_distill", vb.distill},
                     {"val_total", vb.total}};
        log << line.dump() << "\n";
        log.flush();
      }
    }
    if (!out_dir.empty()) model::save_checkpoint(net, out_dir + "/checkpoint");
  }
}

}  // namespace travdiff::trainer
