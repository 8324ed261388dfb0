// Command-line front end: data generation, training, evaluation, single-scene
// sampling, ablation variants and the embodiment-transfer protocol.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "travdiff/ablation.hpp"
#include "travdiff/dataset.hpp"
#include "travdiff/diffusion.hpp"
#include "travdiff/gridworld.hpp"
#include "travdiff/model.hpp"
#include "travdiff/planner.hpp"
#include "travdiff/supervision.hpp"
#include "travdiff/trainer.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace travdiff;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct CommonArgs {
  uint64_t seed = 1;
  std::string config;
  std::string out;
};

void add_common(CLI::App* sub, CommonArgs& a, bool out_required) {
  sub->add_option("--seed", a.seed, "root random seed");
  sub->add_option("--config", a.config, "JSON config file (flags override file values)");
  auto* o = sub->add_option("--out", a.out, "output directory");
  if (out_required) o->required();
}

int cmd_gen_data(const CommonArgs& common, int scenes, bool scenes_set) {
  dataset::GenConfig cfg;
  if (!common.config.empty()) cfg = dataset::GenConfig::from_json(read_text(common.config));
  if (scenes_set) cfg.n_scenes = scenes;
  dataset::Dataset ds = dataset::generate_dataset(common.out, common.seed, cfg);
  std::printf("wrote %zu samples (%zu train / %zu val / %zu test) to %s\n", ds.samples.size(),
              ds.train_idx.size(), ds.val_idx.size(), ds.test_idx.size(), common.out.c_str());
  return 0;
}

trainer::TrainConfig load_train_config(const CommonArgs& common) {
  trainer::TrainConfig cfg;
  if (!common.config.empty()) cfg = trainer::TrainConfig::from_json(read_text(common.config));
  cfg.seed = common.seed;
  return cfg;
}

int cmd_train(const CommonArgs& common, const std::string& data_dir, CLI::App* sub, int epochs,
              int batch, double lr, const std::string& target) {
  trainer::TrainConfig cfg = load_train_config(common);
  if (sub->count("--epochs")) cfg.epochs = epochs;
  if (sub->count("--batch")) cfg.batch = batch;
  if (sub->count("--lr")) cfg.lr = lr;
  if (sub->count("--target")) cfg.prediction_target = target;
  cfg.validate();

  dataset::Dataset ds = dataset::load_dataset(data_dir);
  fs::create_directories(common.out);
  model::Net net = model::make_net(model::ModelConfig{}, cfg.seed);
  trainer::train(net, ds, cfg, common.out);
  std::printf("checkpoint written to %s/checkpoint\n", common.out.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& ckpt, const std::string& data_dir,
             int steps, bool no_apf, int limit, bool measure_time) {
  model::Net net = model::load_checkpoint(ckpt);
  dataset::Dataset ds = dataset::load_dataset(data_dir);
  if (net.dataset_hash != ds.data_hash)
    throw std::runtime_error("checkpoint was trained on a different dataset (hash mismatch)");

  ablation::EvalOptions opt;
  opt.steps = steps;
  opt.apply_apf = !no_apf;
  opt.max_samples = limit;
  opt.measure_time = measure_time;
  fs::create_directories(common.out);
  opt.viz_dir = common.out + "/viz";
  ablation::EvalSummary s = ablation::evaluate(net, ds, ds.test_idx, opt, common.seed);
  ablation::write_metrics_csv(common.out + "/metrics.csv", s);
  std::printf("eval on %zu samples: success %.1f%%, mean cost %.2f%%, mean clearance %.2f px\n",
              s.rows.size(), 100.0 * s.mean.success_rate, s.mean.cost, s.mean.clearance_mean);
  return 0;
}

int cmd_sample(const CommonArgs& common, const std::string& ckpt, uint64_t scene_seed, int steps,
               const std::string& embodiment) {
  model::Net net = model::load_checkpoint(ckpt);
  gridworld::Embodiment emb = embodiment == "aerial" ? gridworld::Embodiment::aerial()
                                                     : gridworld::Embodiment::ground();

  gridworld::SceneConfig scfg;
  gridworld::Scene scene = gridworld::gen_scene(scene_seed, scfg);
  Rng rng_img = Rng::derive(common.seed, "image");
  Image image = gridworld::render_image(scene, 0.03, rng_img);
  Field teacher = gridworld::teacher_traversability(scene, emb);
  Rng rng_sg = Rng::derive(common.seed, "startgoal");
  auto [start, goal] = gridworld::sample_start_goal(teacher, emb, rng_sg);
  Rng rng_state = Rng::derive(common.seed, "state");
  gridworld::RobotState state = gridworld::sample_state(emb, rng_state);
  state.s[0] = start.col;
  state.s[1] = start.row;
  supervision::SGTensor sg =
      supervision::make_sg_tensor(start, goal, teacher.rows, teacher.cols, 1.5);

  model::ConditioningBundle cond;
  cond.sg_start = sg.start;
  cond.sg_goal = sg.goal;
  cond.trav = model::student_traversability(net, image, state);
  cond.tokens = model::state_to_film(net, state).second;

  diffusion::Schedule full = diffusion::cosine_schedule(net.train_T);
  ablation::SampleOptions sopt;
  sopt.steps = steps;
  Field heat = ablation::generate_heatmap(net, full, cond, sopt,
                                          Rng::derive(common.seed, "sample").next_u64());
  planner::Trajectory traj = planner::extract_path(heat, start, goal);
  std::vector<Pixel> blocked = ablation::blocked_from_teacher(teacher);
  if (!blocked.empty()) {
    planner::PointCloud cloud;
    for (const Pixel& b : blocked)
      cloud.pts.push_back({static_cast<double>(b.row), static_cast<double>(b.col)});
    traj = planner::apf_refine(traj, cloud, 2.0, 0.2, 5);
  }

  fs::create_directories(common.out);
  write_pgm(common.out + "/heatmap.pgm", heat);
  write_pgm(common.out + "/trav_pred.pgm", cond.trav);
  write_pgm(common.out + "/teacher.pgm", teacher);
  Image overlay = image;
  for (const PointF& p : traj.points) {
    const int r = std::clamp(static_cast<int>(std::lround(p.row)), 0, heat.rows - 1);
    const int c = std::clamp(static_cast<int>(std::lround(p.col)), 0, heat.cols - 1);
    overlay.ch[0].at(r, c) = 1.0f;
    overlay.ch[1].at(r, c) = 0.0f;
    overlay.ch[2].at(r, c) = 0.0f;
  }
  write_ppm(common.out + "/path.ppm", overlay);

  json tj;
  tj["scene_seed"] = scene_seed;
  tj["embodiment"] = emb.name();
  tj["start"] = {start.row, start.col};
  tj["goal"] = {goal.row, goal.col};
  tj["reached"] = traj.reached;
  tj["pixels"] = json::array();
  for (const Pixel& p : traj.pixels) tj["pixels"].push_back({p.row, p.col});
  tj["points"] = json::array();
  for (const PointF& p : traj.points) tj["points"].push_back({p.row, p.col});
  std::ofstream tf(common.out + "/trajectory.json");
  tf << tj.dump(2) << "\n";
  std::printf("sampled scene %llu (%s): reached=%d, %zu points\n",
              static_cast<unsigned long long>(scene_seed), emb.name(), traj.reached ? 1 : 0,
              traj.points.size());
  return 0;
}

ablation::AblationSpec variant_by_name(const std::string& name) {
  ablation::AblationSpec s;
  s.name = name;
  if (name == "full") return s;
  if (name == "no-trav-input") { s.use_trav_input = false; return s; }
  if (name == "no-sg-input") { s.use_sg_input = false; return s; }
  if (name == "no-film-cond") { s.use_film_cond = false; return s; }
  if (name == "no-mass-loss") { s.use_mass_loss = false; return s; }
  if (name == "no-trav-loss") { s.use_trav_loss = false; return s; }
  if (name == "no-sg-loss") { s.use_sg_loss = false; return s; }
  if (name == "no-cond-test") { s.zero_cond_at_eval = true; return s; }
  if (name == "sample-pred") { s.prediction_target = "sample"; return s; }
  if (name == "cfg") { s.guidance = "cfg"; return s; }
  throw std::invalid_argument("unknown ablation variant: " + name);
}

int cmd_ablate(const CommonArgs& common, const std::string& data_dir, const std::string& variant,
               const std::string& spec_file, CLI::App* sub, int steps, int epochs, int batch) {
  ablation::AblationSpec spec = spec_file.empty()
                                    ? variant_by_name(variant)
                                    : ablation::AblationSpec::from_json(read_text(spec_file));
  if (sub->count("--steps")) spec.steps = steps;

  trainer::TrainConfig base = load_train_config(common);
  if (sub->count("--epochs")) base.epochs = epochs;
  if (sub->count("--batch")) base.batch = batch;
  base.validate();

  dataset::Dataset ds = dataset::load_dataset(data_dir);
  const std::string dir = common.out + "/" + spec.name;
  ablation::EvalSummary s = ablation::run_ablation(spec, ds, base, dir, common.seed);
  std::printf("%s: success %.1f%%, clearance %.2f px, cost %.2f%%\n", spec.name.c_str(),
              100.0 * s.mean.success_rate, s.mean.clearance_mean, s.mean.cost);
  return 0;
}

int cmd_transfer(const CommonArgs& common, const std::string& data_dir, double fraction,
                 CLI::App* sub, int epochs, int batch, int steps) {
  trainer::TrainConfig base = load_train_config(common);
  if (sub->count("--epochs")) base.epochs = epochs;
  if (sub->count("--batch")) base.batch = batch;
  base.validate();

  ablation::EvalOptions eopt;
  if (sub->count("--steps")) eopt.steps = steps;

  dataset::Dataset ds = dataset::load_dataset(data_dir);
  char frac_name[32];
  std::snprintf(frac_name, sizeof(frac_name), "frac%03d", static_cast<int>(fraction));
  const std::string dir = common.out + "/" + frac_name;
  ablation::TransferResult r =
      ablation::run_embodiment_transfer(ds, fraction, base, eopt, dir, common.seed);

  json summary;
  summary["fraction_percent"] = fraction;
  summary["trained_ground"] = r.trained_ground;
  summary["trained_aerial"] = r.trained_aerial;
  summary["success_ground"] = r.success_ground;
  summary["success_aerial"] = r.success_aerial;
  std::ofstream f(dir + "/transfer.json");
  f << summary.dump(2) << "\n";
  std::printf("fraction %.0f%%: ground success %.1f%%, aerial success %.1f%%\n", fraction,
              100.0 * r.success_ground, 100.0 * r.success_aerial);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"traversability-conditioned trajectory diffusion on a 64x64 gridworld"};
  app.require_subcommand(1);

  CommonArgs common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  int scenes = 500;
  add_common(gen, common, true);
  gen->add_option("--scenes", scenes, "number of scenes (2 samples per scene)");

  auto* train = app.add_subcommand("train", "train on a generated dataset");
  std::string data_dir;
  int epochs = 20, batch = 8;
  double lr = 1e-3;
  std::string target = "epsilon";
  add_common(train, common, true);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--epochs", epochs);
  train->add_option("--batch", batch);
  train->add_option("--lr", lr);
  train->add_option("--target", target, "epsilon | sample");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string ckpt;
  int steps = 20, limit = 0;
  bool no_apf = false, measure_time = false;
  add_common(eval, common, true);
  eval->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--steps", steps, "denoising steps");
  eval->add_option("--limit", limit, "evaluate at most this many samples (0 = all)");
  eval->add_flag("--no-apf", no_apf, "skip the repulsive refinement stage");
  eval->add_flag("--measure-time", measure_time,
                 "fill the latency column with wall-clock times (non-reproducible bytes)");

  auto* sample = app.add_subcommand("sample", "sample one fresh scene and plan through it");
  uint64_t scene_seed = 7;
  std::string embodiment = "ground";
  add_common(sample, common, true);
  sample->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  sample->add_option("--scene-seed", scene_seed, "seed of the generated scene");
  sample->add_option("--steps", steps, "denoising steps");
  sample->add_option("--embodiment", embodiment, "ground | aerial");

  auto* ablate = app.add_subcommand("ablate", "train + evaluate one ablation variant");
  std::string variant = "full", spec_file;
  add_common(ablate, common, true);
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--variant", variant,
                     "full | no-trav-input | no-sg-input | no-film-cond | no-mass-loss | "
                     "no-trav-loss | no-sg-loss | no-cond-test | sample-pred | cfg");
  ablate->add_option("--spec", spec_file, "JSON AblationSpec file (overrides --variant)");
  ablate->add_option("--steps", steps, "denoising steps at evaluation");
  ablate->add_option("--epochs", epochs);
  ablate->add_option("--batch", batch);

  auto* transfer = app.add_subcommand("transfer", "embodiment transfer at a data fraction");
  double fraction = 100.0;
  add_common(transfer, common, true);
  transfer->add_option("--data", data_dir, "dataset directory")->required();
  transfer->add_option("--fraction", fraction, "percent of aerial training data kept");
  transfer->add_option("--epochs", epochs);
  transfer->add_option("--batch", batch);
  transfer->add_option("--steps", steps, "denoising steps at evaluation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, scenes, gen->count("--scenes") > 0);
    if (train->parsed()) return cmd_train(common, data_dir, train, epochs, batch, lr, target);
    if (eval->parsed()) return cmd_eval(common, ckpt, data_dir, steps, no_apf, limit, measure_time);
    if (sample->parsed()) return cmd_sample(common, ckpt, scene_seed, steps, embodiment);
    if (ablate->parsed())
      return cmd_ablate(common, data_dir, variant, spec_file, ablate, steps, epochs, batch);
    if (transfer->parsed())
      return cmd_transfer(common, data_dir, fraction, transfer, epochs, batch, steps);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
