#include "travdiff/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace travdiff::ablation {

using json = nlohmann::json;
namespace fs = std::filesystem;

static Field zero_like(const Field& f) { return Field(f.rows, f.cols); }

Field generate_heatmap(const model::Net& net, const diffusion::Schedule& full,
                       const model::ConditioningBundle& cond, const SampleOptions& opt,
                       uint64_t seed) {
  model::ConditioningBundle used = cond;
  if (opt.zero_sg) {
    used.sg_start = zero_like(cond.sg_start);
    used.sg_goal = zero_like(cond.sg_goal);
  }
  if (opt.zero_trav) used.trav = zero_like(cond.trav);
  if (opt.zero_tokens)
    used.tokens = nn::Tensor(used.tokens.shape);

  model::ConditioningBundle uncond;
  if (opt.cfg_weight > 0) {
    uncond.sg_start = zero_like(cond.sg_start);
    uncond.sg_goal = zero_like(cond.sg_goal);
    uncond.trav = zero_like(cond.trav);
    uncond.tokens = nn::Tensor(used.tokens.shape);
  }

  const bool predicts_sample = net.prediction_target == "sample";
  auto to_eps = [&](Field pred, const Field& x_t, int t) {
    if (!predicts_sample) return pred;
    const double ab = full.alpha_bar[static_cast<size_t>(t)];
    const double sab = std::sqrt(ab), somb = std::sqrt(1.0 - ab);
    Field eps(pred.rows, pred.cols);
    for (size_t i = 0; i < eps.v.size(); ++i) {
      const double x0 = std::clamp(static_cast<double>(pred.v[i]), 0.0, 1.0);
      eps.v[i] = static_cast<float>((x_t.v[i] - sab * x0) / somb);
    }
    return eps;
  };

  diffusion::DenoiseFn denoise = [&](const Field& x_t, int t) {
    Field eps = to_eps(model::predict_noise(net, x_t, used, t), x_t, t);
    if (opt.cfg_weight <= 0) return eps;
    Field eps_u = to_eps(model::predict_noise(net, x_t, uncond, t), x_t, t);
    Field out(eps.rows, eps.cols);
    for (size_t i = 0; i < out.v.size(); ++i)
      out.v[i] = static_cast<float>(eps_u.v[i] + opt.cfg_weight * (eps.v[i] - eps_u.v[i]));
    return out;
  };

  return diffusion::sample(denoise, full, opt.steps, cond.trav.rows, cond.trav.cols, seed);
}

model::ConditioningBundle make_conditioning(const model::Net& net, const dataset::Sample& s) {
  model::ConditioningBundle cond;
  cond.sg_start = s.sg_start;
  cond.sg_goal = s.sg_goal;
  cond.trav = model::student_traversability(net, s.image, s.state);
  cond.tokens = model::state_to_film(net, s.state).second;
  return cond;
}

std::vector<Pixel> blocked_from_teacher(const Field& teacher) {
  std::vector<Pixel> blocked;
  for (int r = 0; r < teacher.rows; ++r)
    for (int c = 0; c < teacher.cols; ++c)
      if (teacher.at(r, c) <= 0.0f) blocked.push_back({r, c});
  return blocked;
}

static gridworld::Embodiment embodiment_by_name(const std::string& name) {
  if (name == "ground") return gridworld::Embodiment::ground();
  if (name == "aerial") return gridworld::Embodiment::aerial();
  throw std::invalid_argument("unknown embodiment: " + name);
}

// heatmap in [0,1] -> grayscale; trajectory overlaid in red on the scene.
static void write_viz(const std::string& dir, const dataset::Sample& s, const Field& heat,
                      const Field& trav_pred, const planner::Trajectory& traj) {
  fs::create_directories(dir);
  write_pgm(dir + "/" + s.id + "_heat.pgm", heat);
  write_pgm(dir + "/" + s.id + "_trav.pgm", trav_pred);
  write_pgm(dir + "/" + s.id + "_teacher.pgm", s.teacher);
  Image overlay = s.image;
  for (const PointF& p : traj.points) {
    const int r = std::clamp(static_cast<int>(std::lround(p.row)), 0, heat.rows - 1);
    const int c = std::clamp(static_cast<int>(std::lround(p.col)), 0, heat.cols - 1);
    overlay.ch[0].at(r, c) = 1.0f;
    overlay.ch[1].at(r, c) = 0.0f;
    overlay.ch[2].at(r, c) = 0.0f;
  }
  write_ppm(dir + "/" + s.id + "_path.ppm", overlay);
}

EvalSummary evaluate(const model::Net& net, const dataset::Dataset& ds,
                     const std::vector<int>& idx, const EvalOptions& opt, uint64_t seed) {
  diffusion::Schedule full = diffusion::cosine_schedule(net.train_T);

  SampleOptions sopt;
  sopt.steps = opt.steps;
  sopt.zero_tokens = opt.zero_tokens;
  sopt.zero_sg = opt.zero_sg;
  sopt.zero_trav = opt.zero_trav;
  sopt.cfg_weight = opt.cfg_weight;

  EvalSummary out;
  const int n = opt.max_samples > 0 ? std::min<int>(opt.max_samples, static_cast<int>(idx.size()))
                                    : static_cast<int>(idx.size());
  for (int i = 0; i < n; ++i) {
    const dataset::Sample& s = ds.at(idx[static_cast<size_t>(i)]);
    const gridworld::Embodiment emb = embodiment_by_name(s.embodiment);

    auto t0 = std::chrono::steady_clock::now();
    model::ConditioningBundle cond = make_conditioning(net, s);
    Field heat = generate_heatmap(net, full, cond, sopt, Rng::derive(seed, "eval:" + s.id).next_u64());
    planner::Trajectory traj = planner::extract_path(heat, s.start, s.goal, opt.progress_weight);

    std::vector<Pixel> blocked = blocked_from_teacher(s.teacher);
    if (opt.apply_apf && !blocked.empty()) {
      planner::PointCloud cloud;
      cloud.pts.reserve(blocked.size());
      for (const Pixel& b : blocked)
        cloud.pts.push_back({static_cast<double>(b.row), static_cast<double>(b.col)});
      traj = planner::apf_refine(traj, cloud, opt.apf_radius, opt.apf_cs, opt.apf_iters);
    }
    auto t1 = std::chrono::steady_clock::now();

    EvalRow row;
    row.id = s.id;
    row.embodiment = s.embodiment;
    row.m.length = planner::path_length(traj);
    auto [cmean, cmin] = planner::path_clearance(traj, blocked);
    row.m.clearance_mean = cmean;
    row.m.clearance_min = cmin;
    row.m.cost = planner::path_cost(traj, s.teacher);
    auto [smin, smax] = planner::safety_bounds(traj, s.teacher);
    row.m.safety_min = smin;
    row.m.safety_max = smax;
    row.m.success = planner::success(traj, s.goal, s.teacher, emb.safety_threshold);
    row.m.latency = opt.measure_time ? std::chrono::duration<double>(t1 - t0).count() : 0.0;
    out.rows.push_back(row);

    if (!opt.viz_dir.empty() && i < opt.viz_count) write_viz(opt.viz_dir, s, heat, cond.trav, traj);
  }

  auto fold = [](Aggregate& a, const planner::Metrics& m) {
    a.length += m.length;
    if (std::isfinite(m.clearance_mean)) {
      a.clearance_mean += m.clearance_mean;
      a.clearance_min += m.clearance_min;
      a.clearance_count += 1;
    }
    a.cost += m.cost;
    a.latency += m.latency;
    a.safety_min += m.safety_min;
    a.safety_max += m.safety_max;
    a.success_rate += m.success ? 1.0 : 0.0;
    a.count += 1;
  };
  auto finish = [](Aggregate& a) {
    if (a.count == 0) return;
    const double inv = 1.0 / a.count;
    a.length *= inv;
    if (a.clearance_count > 0) {
      a.clearance_mean /= a.clearance_count;
      a.clearance_min /= a.clearance_count;
    } else {
      a.clearance_mean = std::numeric_limits<double>::infinity();
      a.clearance_min = std::numeric_limits<double>::infinity();
    }
    a.cost *= inv;
    a.latency *= inv;
    a.safety_min *= inv;
    a.safety_max *= inv;
    a.success_rate *= inv;
  };
  for (const EvalRow& r : out.rows) {
    fold(out.mean, r.m);
    fold(r.embodiment == "ground" ? out.ground : out.aerial, r.m);
  }
  finish(out.mean);
  finish(out.ground);
  finish(out.aerial);
  return out;
}

static std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_metrics_csv(const std::string& path, const EvalSummary& s) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "id,embodiment,Len,Clear,Clear_min,Cost,Lat,Safety_min,Safety_max,Success\n";
  for (const EvalRow& r : s.rows)
    f << r.id << ',' << r.embodiment << ',' << fmt(r.m.length) << ',' << fmt(r.m.clearance_mean)
      << ',' << fmt(r.m.clearance_min) << ',' << fmt(r.m.cost) << ',' << fmt(r.m.latency) << ','
      << fmt(r.m.safety_min) << ',' << fmt(r.m.safety_max) << ',' << (r.m.success ? 1 : 0)
      << "\n";
  f << "mean,all," << fmt(s.mean.length) << ',' << fmt(s.mean.clearance_mean) << ','
    << fmt(s.mean.clearance_min) << ',' << fmt(s.mean.cost) << ',' << fmt(s.mean.latency) << ','
    << fmt(s.mean.safety_min) << ',' << fmt(s.mean.safety_max) << ',' << fmt(s.mean.success_rate)
    << "\n";
}

void AblationSpec::validate() const {
  if (steps < 1) throw std::invalid_argument("ablation spec: steps must be >= 1");
  if (prediction_target != "epsilon" && prediction_target != "sample")
    throw std::invalid_argument("ablation spec: unknown prediction target");
  if (guidance != "conditional" && guidance != "cfg")
    throw std::invalid_argument("ablation spec: unknown guidance mode");
}

std::string AblationSpec::to_json() const {
  json j;
  j["name"] = name;
  j["use_trav_input"] = use_trav_input;
  j["use_sg_input"] = use_sg_input;
  j["use_film_cond"] = use_film_cond;
  j["use_mass_loss"] = use_mass_loss;
  j["use_trav_loss"] = use_trav_loss;
  j["use_sg_loss"] = use_sg_loss;
  j["prediction_target"] = prediction_target;
  j["steps"] = steps;
  j["guidance"] = guidance;
  j["cfg_weight"] = cfg_weight;
  j["zero_cond_at_eval"] = zero_cond_at_eval;
  return j.dump();
}

AblationSpec AblationSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  AblationSpec s;
  s.name = j.value("name", s.name);
  s.use_trav_input = j.value("use_trav_input", s.use_trav_input);
  s.use_sg_input = j.value("use_sg_input", s.use_sg_input);
  s.use_film_cond = j.value("use_film_cond", s.use_film_cond);
  s.use_mass_loss = j.value("use_mass_loss", s.use_mass_loss);
  s.use_trav_loss = j.value("use_trav_loss", s.use_trav_loss);
  s.use_sg_loss = j.value("use_sg_loss", s.use_sg_loss);
  s.prediction_target = j.value("prediction_target", s.prediction_target);
  s.steps = j.value("steps", s.steps);
  s.guidance = j.value("guidance", s.guidance);
  s.cfg_weight = j.value("cfg_weight", s.cfg_weight);
  s.zero_cond_at_eval = j.value("zero_cond_at_eval", s.zero_cond_at_eval);
  s.validate();
  return s;
}

trainer::TrainConfig apply_spec(const AblationSpec& spec, trainer::TrainConfig base) {
  base.toggles.mass = spec.use_mass_loss;
  base.toggles.trav = spec.use_trav_loss;
  base.use_trav_input = spec.use_trav_input;
  base.use_sg_input = spec.use_sg_input;
  base.use_film_cond = spec.use_film_cond;
  base.prediction_target = spec.prediction_target;
  if (spec.guidance == "cfg") base.cond_dropout = 0.1;
  return base;
}

EvalOptions eval_options(const AblationSpec& spec) {
  EvalOptions opt;
  opt.steps = spec.steps;
  opt.progress_weight = spec.use_sg_loss ? planner::kProgressWeight : 0.0;
  opt.zero_tokens = spec.zero_cond_at_eval;
  // An input disabled during training stays zeroed at eval; feeding it live
  // would push activations through weights that never saw that channel.
  opt.zero_sg = !spec.use_sg_input;
  opt.zero_trav = !spec.use_trav_input;
  opt.cfg_weight = spec.guidance == "cfg" ? spec.cfg_weight : 0.0;
  return opt;
}

// A saved checkpoint is reused only when it was produced by the identical
// training configuration on the identical dataset.
static bool compatible_checkpoint(const std::string& dir, const dataset::Dataset& ds,
                                  const trainer::TrainConfig& cfg, model::Net& out) {
  if (!fs::exists(dir + "/manifest.json")) return false;
  try {
    model::Net net = model::load_checkpoint(dir);
    if (net.dataset_hash != ds.data_hash || net.train_config_json != cfg.to_json()) return false;
    out = std::move(net);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

EvalSummary run_ablation(const AblationSpec& spec, const dataset::Dataset& ds,
                         const trainer::TrainConfig& base, const std::string& out_dir,
                         uint64_t eval_seed) {
  spec.validate();
  trainer::TrainConfig cfg = apply_spec(spec, base);
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/spec.json");
    if (!f) throw std::runtime_error("cannot write " + out_dir + "/spec.json");
    f << spec.to_json() << "\n";
  }

  model::Net net;
  if (!compatible_checkpoint(out_dir + "/checkpoint", ds, cfg, net)) {
    net = model::make_net(model::ModelConfig{}, cfg.seed);
    trainer::train(net, ds, cfg, out_dir);
  }

  EvalOptions eopt = eval_options(spec);
  eopt.viz_dir = out_dir + "/viz";
  EvalSummary summary = evaluate(net, ds, ds.test_idx, eopt, eval_seed);
  write_metrics_csv(out_dir + "/metrics.csv", summary);
  return summary;
}

TransferResult run_embodiment_transfer(const dataset::Dataset& ds, double fraction_percent,
                                       const trainer::TrainConfig& base, const EvalOptions& eopt,
                                       const std::string& out_dir, uint64_t eval_seed) {
  if (!(fraction_percent >= 0.0 && fraction_percent <= 100.0))
    throw std::invalid_argument("transfer: fraction must be in [0, 100]");

  std::vector<int> ground_idx, aerial_idx;
  for (int i : ds.train_idx) {
    if (ds.at(i).embodiment == "ground") ground_idx.push_back(i);
    else aerial_idx.push_back(i);
  }
  if (ground_idx.empty() || aerial_idx.empty())
    throw std::invalid_argument("transfer: dataset must contain both embodiments");

  std::sort(aerial_idx.begin(), aerial_idx.end(), [&](int a, int b) {
    const std::string &ia = ds.at(a).id, &ib = ds.at(b).id;
    const uint64_t ha = fnv1a(ia.data(), ia.size(), 0xcbf29ce484222325ULL ^ base.seed);
    const uint64_t hb = fnv1a(ib.data(), ib.size(), 0xcbf29ce484222325ULL ^ base.seed);
    return ha != hb ? ha < hb : ia < ib;
  });
  const int keep = static_cast<int>(
      std::lround(fraction_percent / 100.0 * static_cast<double>(aerial_idx.size())));
  aerial_idx.resize(static_cast<size_t>(keep));

  dataset::Dataset view = ds;
  view.train_idx = ground_idx;
  view.train_idx.insert(view.train_idx.end(), aerial_idx.begin(), aerial_idx.end());
  std::sort(view.train_idx.begin(), view.train_idx.end());

  if (!out_dir.empty()) fs::create_directories(out_dir);
  TransferResult res;
  res.trained_ground = static_cast<int>(ground_idx.size());
  res.trained_aerial = keep;

  // No checkpoint reuse here: the train config alone cannot tell two
  // fractions apart, so a cached model could belong to the wrong run.
  model::Net net = model::make_net(model::ModelConfig{}, base.seed);
  trainer::train(net, view, base, out_dir);

  res.summary = evaluate(net, ds, ds.test_idx, eopt, eval_seed);
  res.success_ground = res.summary.ground.success_rate;
  res.success_aerial = res.summary.aerial.success_rate;
  if (!out_dir.empty()) write_metrics_csv(out_dir + "/metrics.csv", res.summary);
  return res;
}

}  // namespace travdiff::ablation
