// Shipping gate. Runs the twelve acceptance checks in order and prints one
// PASS/FAIL line per criterion; exit status is the number of failures.
//
// Heavy artifacts (the 500-scene corpus, trained checkpoints) live under a
// work directory (argv[1], default ./acceptance_work) and are reused across
// runs when the dataset fingerprint and training config still match, so a
// re-run after the first is minutes, not half an hour.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "travdiff/ablation.hpp"
#include "travdiff/dataset.hpp"
#include "travdiff/diffusion.hpp"
#include "travdiff/field.hpp"
#include "travdiff/gridworld.hpp"
#include "travdiff/losses.hpp"
#include "travdiff/model.hpp"
#include "travdiff/planner.hpp"
#include "travdiff/rng.hpp"
#include "travdiff/supervision.hpp"
#include "travdiff/tape.hpp"
#include "travdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace travdiff;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void note(const std::string& msg) { std::printf("              %s\n", msg.c_str()); }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Artifacts shared between criteria: the main corpus, the full trained
// model, its 20-step navigation evaluation (with the repulsive refinement
// stage, as deployed), and its raw 20-step evaluation (refinement off; the
// model-comparison criteria measure the generator, not the safety layer).
struct Shared {
  std::string work;
  dataset::Dataset ds;
  bool have_ds = false;
  model::Net net;
  bool have_net = false;
  ablation::EvalSummary eval20;
  ablation::EvalSummary raw20;
  bool have_raw20 = false;
};

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient check
// ---------------------------------------------------------------------------

constexpr double kFdEps = 1e-3;
constexpr double kFdTol = 1e-4;

using testutil::DTensor;

DTensor random_field8(Rng& rng, double lo, double hi) {
  return testutil::random_tensor({8, 8}, rng, lo, hi);
}

// Linear ramp 0.5 + a*row + b*col with optional jitter. The directional
// hinge is piecewise linear, so its finite-difference check is only valid on
// fields whose gradient projection is one-signed with margin; a ramp sloped
// against the start->goal direction keeps every pixel strictly inside the
// active branch (edge-clamped 3x3 gradients scale the slope by 4..8, so the
// worst-case margin is 4*slope, far above the jitter and probe step).
DTensor ramp_field8(double a, double b, Rng& rng, double noise) {
  DTensor t({8, 8});
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      t.data[static_cast<size_t>(r) * 8 + c] =
          0.5 + a * r + b * c + noise * (2.0 * rng.next_double() - 1.0);
  return t;
}

double fd_individual_losses(Rng& rng) {
  using losses::loss_dir;
  using losses::loss_mass;
  using losses::loss_trav;
  double worst = 0.0;
  auto check = [&](const std::vector<DTensor>& in, const testutil::GraphBuilder& build) {
    worst = std::max(worst, testutil::max_rel_fd_error(in, build, kFdEps));
  };

  // noise objective (MSE) and distillation (L1, values kept apart so the
  // absolute value never sits on its kink)
  check({random_field8(rng, -1, 1), random_field8(rng, -1, 1)},
        [](testutil::DTape& t, const std::vector<int>& l) { return losses::loss_noise(t, l[0], l[1]); });
  check({random_field8(rng, 0.4, 1.0), random_field8(rng, -1.0, -0.4)},
        [](testutil::DTape& t, const std::vector<int>& l) { return losses::loss_distill(t, l[0], l[1]); });

  // directional hinge and mass; hinge fed a ramp rising against the
  // start->goal direction (unit (-0.813, 0.581) for {7,1}->{0,6})
  check({ramp_field8(0.04 * 0.813, -0.04 * 0.581, rng, 0.003)},
        [](testutil::DTape& t, const std::vector<int>& l) {
          return loss_dir(t, l[0], Pixel{7, 1}, Pixel{0, 6});
        });
  check({random_field8(rng, 0.0, 1.0)},
        [](testutil::DTape& t, const std::vector<int>& l) { return loss_mass(t, l[0]); });

  // best-of-batch traversability expectation, arms separated so the max
  // cannot flip inside the FD step
  check({random_field8(rng, -1, 1), random_field8(rng, -1, 1), random_field8(rng, 0.6, 0.9),
         random_field8(rng, 0.1, 0.4)},
        [](testutil::DTape& t, const std::vector<int>& l) {
          return loss_trav(t, {l[0], l[1]}, {l[2], l[3]}, 1.0);
        });

  // softmax path distribution, scalarized against a fixed probe
  check({random_field8(rng, -1, 1), random_field8(rng, 0.5, 1.5)},
        [](testutil::DTape& t, const std::vector<int>& l) {
          return nn::dot_all(t, losses::path_distribution(t, l[0], 0.8), l[1]);
        });

  // one-step clean-signal estimate chained into the directional loss; the
  // recovered map is a ramp against {7,0}->{0,7} (unit (-0.707, 0.707)) with
  // range [0.30, 0.70], strictly inside the clamp
  check({ramp_field8(0.04 * 0.707, -0.04 * 0.707, rng, 0.0), random_field8(rng, -0.1, 0.1)},
        [](testutil::DTape& t, const std::vector<int>& l) {
          const double ab = 0.6;
          int scaled0 = nn::affine(t, l[0], std::sqrt(ab), 0.0);
          int scaled1 = nn::affine(t, l[1], std::sqrt(1.0 - ab), 0.0);
          int x_t = nn::add(t, scaled0, scaled1);
          int x0 = losses::x0_from_eps(t, x_t, l[1], ab);
          return loss_dir(t, x0, Pixel{7, 0}, Pixel{0, 7});
        });

  return worst;
}

struct OwnedSample {
  Image img;
  Field teacher, x0, sgs, sgg, eps;
};

Field random_fieldf(int rows, int cols, Rng& rng, double lo, double hi) {
  Field f(rows, cols);
  for (float& v : f.v) v = static_cast<float>(lo + (hi - lo) * rng.next_double());
  return f;
}

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.sc1 = 4;
  c.sc2 = 4;
  c.sc3 = 4;
  c.sd1 = 4;
  c.sd2 = 4;
  c.stem = 4;
  c.w1 = 6;
  c.w2 = 8;
  c.time_dim = 8;
  c.n_tokens = 2;
  c.token_dim = 4;
  c.state_hidden = 4;
  return c;
}

double objective_value(model::ParamStoreT<double>& ps, const model::ModelConfig& cfg,
                       const std::vector<losses::SampleInputs>& batch,
                       const losses::BatchOptions& opt) {
  nn::TapeT<double> tape;
  model::GraphCtx<double> g(tape, ps);
  auto nodes = losses::build_objective(g, cfg, batch, opt);
  return tape.val(nodes.total).data[0];
}

// FD over a sampled subset of every parameter tensor of the full objective
// (student + UNet + conditioning heads) on an 8x8 batch of two.
double fd_full_objective(Rng& rng) {
  const model::ModelConfig cfg = tiny_config();
  model::ParamStoreT<double> ps;
  model::register_params(ps, cfg);
  model::init_params(ps, 7);

  std::vector<OwnedSample> own(2);
  std::vector<losses::SampleInputs> batch(2);
  const double abar[2] = {0.9, 0.75};
  const int tstep[2] = {40, 400};
  for (int b = 0; b < 2; ++b) {
    OwnedSample& o = own[b];
    for (auto& ch : o.img.ch) ch = random_fieldf(8, 8, rng, 0.0, 1.0);
    o.teacher = random_fieldf(8, 8, rng, 0.0, 1.0);
    o.x0 = random_fieldf(8, 8, rng, 0.35, 0.65);
    o.sgs = random_fieldf(8, 8, rng, 0.0, 1.0);
    o.sgg = random_fieldf(8, 8, rng, 0.0, 1.0);
    o.eps = random_fieldf(8, 8, rng, -0.1, 0.1);

    losses::SampleInputs& s = batch[static_cast<size_t>(b)];
    s.image = &o.img;
    s.teacher = &o.teacher;
    s.x0 = &o.x0;
    s.sg_start = &o.sgs;
    s.sg_goal = &o.sgg;
    for (int k = 0; k < 6; ++k) s.state.s[static_cast<size_t>(k)] = rng.next_double() - 0.5;
    s.start = {7, b};
    s.goal = {0, 7 - b};
    s.eps = o.eps;
    s.t = tstep[b];
    s.alpha_bar = abar[b];
  }
  losses::BatchOptions opt;  // all terms on, epsilon prediction

  nn::TapeT<double> tape;
  model::GraphCtx<double> g(tape, ps);
  auto nodes = losses::build_objective(g, cfg, batch, opt);
  tape.backward(nodes.total);

  double worst = 0.0;
  for (size_t k = 0; k < ps.entries.size(); ++k) {
    const int node = g.leaf_of[k];
    if (node < 0) continue;  // parameter unused by this configuration
    const auto& analytic = tape.grad(node);
    auto& val = ps.entries[k].value;
    Rng pick = Rng::derive(42, "fd-pick", k);
    const int probes = std::min<int>(4, static_cast<int>(val.numel()));
    for (int p = 0; p < probes; ++p) {
      const size_t j = static_cast<size_t>(pick.next_int(0, static_cast<int>(val.numel()) - 1));
      const double saved = val.data[j];
      val.data[j] = saved + kFdEps;
      const double fp = objective_value(ps, cfg, batch, opt);
      val.data[j] = saved - kFdEps;
      const double fm = objective_value(ps, cfg, batch, opt);
      val.data[j] = saved;
      const double numeric = (fp - fm) / (2.0 * kFdEps);
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic.data[j]), 1e-6});
      worst = std::max(worst, std::fabs(numeric - analytic.data[j]) / denom);
    }
  }
  return worst;
}

bool criterion1() {
  Timer tm;
  Rng rng(101);
  const double worst_losses = fd_individual_losses(rng);
  const double worst_obj = fd_full_objective(rng);
  const double el = tm.s();
  note(fmt("losses max rel err %.3e, objective max rel err %.3e, %.1fs (tol %.0e, eps %.0e)",
           worst_losses, worst_obj, el, kFdTol, kFdEps));
  return worst_losses < kFdTol && worst_obj < kFdTol && el < 30.0;
}

// ---------------------------------------------------------------------------
// criterion 2: scheduler identities and the t=1 round trip
// ---------------------------------------------------------------------------

bool criterion2() {
  double worst_identity = 0.0;
  bool monotone = true, clipped = true;
  for (int T : {4, 100, 1000}) {
    diffusion::Schedule s = diffusion::cosine_schedule(T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= 1.0 - s.beta[static_cast<size_t>(t)];
      worst_identity =
          std::max(worst_identity, std::fabs(prod - s.alpha_bar[static_cast<size_t>(t)]));
      monotone = monotone &&
                 s.alpha_bar[static_cast<size_t>(t)] < s.alpha_bar[static_cast<size_t>(t - 1)];
      clipped = clipped && s.beta[static_cast<size_t>(t)] >= diffusion::kBetaMin &&
                s.beta[static_cast<size_t>(t)] <= diffusion::kBetaMax;
    }
  }

  // forward then reverse with the true noise and no fresh noise injection
  diffusion::Schedule one = diffusion::cosine_schedule(1);
  Rng rng(202);
  Field x0 = random_fieldf(64, 64, rng, 0.0, 1.0);
  Field eps(64, 64);
  for (float& v : eps.v) v = static_cast<float>(rng.next_gaussian());
  Field x1 = diffusion::forward_noise(x0, 1, one, eps);
  Field rec = diffusion::reverse_step(x1, eps, 1, one, nullptr);
  double mse = 0.0;
  for (size_t i = 0; i < rec.v.size(); ++i) {
    const double d = static_cast<double>(rec.v[i]) - static_cast<double>(x0.v[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(rec.v.size());

  note(fmt("product identity max err %.3e (tol 1e-12), round-trip MSE %.3e (tol 1e-10)",
           worst_identity, mse));
  return worst_identity <= 1e-12 && monotone && clipped && mse < 1e-10;
}

// ---------------------------------------------------------------------------
// criterion 3: supervision heatmap invariants over 1000 draws
// ---------------------------------------------------------------------------

bool trace_connected(const Field& raw, Pixel start, Pixel goal) {
  if (!(raw.at(start.row, start.col) > 0.0f) || !(raw.at(goal.row, goal.col) > 0.0f)) return false;
  int positive = 0;
  for (float v : raw.v) positive += v > 0.0f;
  std::vector<char> seen(raw.size(), 0);
  std::queue<Pixel> q;
  q.push(start);
  seen[static_cast<size_t>(start.row) * raw.cols + start.col] = 1;
  int reached = 0;
  while (!q.empty()) {
    Pixel p = q.front();
    q.pop();
    ++reached;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        int r = p.row + dr, c = p.col + dc;
        if (!raw.in_bounds(r, c)) continue;
        size_t i = static_cast<size_t>(r) * raw.cols + c;
        if (seen[i] || !(raw.v[i] > 0.0f)) continue;
        seen[i] = 1;
        q.push({r, c});
      }
  }
  return reached == positive;
}

// Width through a pixel = contiguous >= half-max run containing it; the
// trace is thin if the narrower of the row/column runs stays <= 3.
bool width_ok(const Field& f) {
  auto run = [&](int r, int c, int dr, int dc) {
    int n = 0;
    while (f.in_bounds(r, c) && f.at(r, c) >= 0.5f) {
      ++n;
      r += dr;
      c += dc;
    }
    return n;
  };
  for (int r = 0; r < f.rows; ++r)
    for (int c = 0; c < f.cols; ++c) {
      if (f.at(r, c) < 0.5f) continue;
      const int row_w = run(r, c, 0, 1) + run(r, c, 0, -1) - 1;
      const int col_w = run(r, c, 1, 0) + run(r, c, -1, 0) - 1;
      if (std::min(row_w, col_w) > 3) return false;
    }
  return true;
}

bool criterion3() {
  Timer tm;
  gridworld::SceneConfig scfg;
  const gridworld::Embodiment emb = gridworld::Embodiment::ground();
  supervision::SupervisionConfig sup;
  int made = 0, bad = 0;
  std::string first_bad;
  for (int i = 0; i < 250; ++i) {
    gridworld::Scene scene = gridworld::gen_scene(40000 + static_cast<uint64_t>(i), scfg);
    Field trav = gridworld::teacher_traversability(scene, emb);
    Rng rng = Rng::derive(7000, "c3", static_cast<uint64_t>(i));
    for (int d = 0; d < 4; ++d) {
      auto [start, goal] = gridworld::sample_start_goal(trav, emb, rng);
      const int k = rng.next_int(sup.min_waypoints, sup.max_waypoints);
      auto ctrl = supervision::sample_waypoints(start, goal, k, trav, emb.safety_threshold,
                                                sup.waypoint_sigma, sup.max_resamples, rng);
      auto curve = supervision::bezier_points(ctrl, sup.curve_samples);
      Field raw = supervision::rasterize_heatmap(curve, trav.rows, trav.cols, 0.0);
      Field hm = supervision::rasterize_heatmap(curve, trav.rows, trav.cols, sup.blur_sigma);
      ++made;

      bool ok = hm.min_value() >= 0.0f && hm.max_value() == 1.0f;
      ok = ok && hm.at(start.row, start.col) >= 0.5f && hm.at(goal.row, goal.col) >= 0.5f;
      ok = ok && trace_connected(raw, start, goal);
      ok = ok && width_ok(hm);
      if (!ok && bad++ == 0) first_bad = fmt("scene %d draw %d", i, d);
    }
  }
  const double el = tm.s();
  note(fmt("%d heatmaps, %d violations%s, %.1fs (budget 60s)", made, bad,
           bad ? (" (first: " + first_bad + ")").c_str() : "", el));
  return made == 1000 && bad == 0 && el < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 4: end-to-end training and held-out navigation quality
// ---------------------------------------------------------------------------

dataset::Dataset load_or_generate(const std::string& dir, uint64_t seed,
                                  const dataset::GenConfig& gc) {
  if (fs::exists(dir + "/dataset.json")) {
    try {
      dataset::Dataset ds = dataset::load_dataset(dir);
      if (ds.seed == seed &&
          static_cast<int>(ds.samples.size()) == gc.n_scenes * (gc.ground + gc.aerial))
        return ds;
    } catch (const std::exception&) {
      // fall through and rebuild
    }
    fs::remove_all(dir);
  }
  return dataset::generate_dataset(dir, seed, gc);
}

trainer::TrainConfig main_train_config() {
  trainer::TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch = 8;
  tc.epochs = 20;
  tc.seed = 1;
  tc.T = 1000;
  return tc;
}

bool criterion4(Shared& sh) {
  Timer tm;
  dataset::GenConfig gc;  // 500 scenes x both embodiments
  sh.ds = load_or_generate(sh.work + "/data_main", 1, gc);
  sh.have_ds = true;
  note(fmt("corpus: %zu samples, train/val/test %zu/%zu/%zu, fingerprint %s",
           sh.ds.samples.size(), sh.ds.train_idx.size(), sh.ds.val_idx.size(),
           sh.ds.test_idx.size(), sh.ds.data_hash.c_str()));

  ablation::AblationSpec full;  // defaults: every component on, 20 steps
  sh.eval20 = ablation::run_ablation(full, sh.ds, main_train_config(), sh.work + "/run_main", 777);
  sh.net = model::load_checkpoint(sh.work + "/run_main/checkpoint");
  sh.have_net = true;

  const auto& m = sh.eval20.mean;
  note(fmt("held-out (%d rows): success %.1f%% (need >=70), safety_min %.3f (need >=0.7), "
           "cost %.2f%% (need <=15), %.0fs",
           m.count, 100.0 * m.success_rate, m.safety_min, m.cost, tm.s()));
  return m.success_rate >= 0.70 && m.safety_min >= 0.7 && m.cost <= 15.0;
}

// ---------------------------------------------------------------------------
// criterion 5: denoising step-count trend on the trained model
// ---------------------------------------------------------------------------

// Raw generator evaluation: refinement off so the metrics reflect the model
// alone, not the safety layer smoothing every variant onto the same paths.
ablation::EvalSummary raw_eval(const model::Net& net, const dataset::Dataset& ds, int steps,
                               bool zero_trav = false) {
  ablation::EvalOptions e;
  e.steps = steps;
  e.apply_apf = false;
  e.zero_trav = zero_trav;
  return ablation::evaluate(net, ds, ds.test_idx, e, 777);
}

const ablation::EvalSummary& full_raw20(Shared& sh) {
  if (!sh.have_raw20) {
    sh.raw20 = raw_eval(sh.net, sh.ds, 20);
    sh.have_raw20 = true;
  }
  return sh.raw20;
}

bool criterion5(Shared& sh) {
  if (!sh.have_net) {
    note("skipped: no trained model available");
    return false;
  }
  ablation::EvalSummary s1 = raw_eval(sh.net, sh.ds, 1);
  ablation::EvalSummary s50 = raw_eval(sh.net, sh.ds, 50);
  const auto &m1 = s1.mean, &m20 = full_raw20(sh).mean, &m50 = s50.mean;
  note(fmt("clearance 1/20/50 steps: %.2f / %.2f / %.2f   success: %.1f%% / %.1f%% / %.1f%%",
           m1.clearance_mean, m20.clearance_mean, m50.clearance_mean, 100.0 * m1.success_rate,
           100.0 * m20.success_rate, 100.0 * m50.success_rate));
  return m20.clearance_mean > m1.clearance_mean && m20.success_rate > m1.success_rate &&
         m20.success_rate >= m50.success_rate - 0.05;
}

// ---------------------------------------------------------------------------
// criteria 6 and 7: prediction-target and input-ablation trends
// ---------------------------------------------------------------------------

// Both comparison arms train at the main protocol on the main corpus with
// the main seed; the epsilon/full reference is the criterion-4 model itself.
model::Net train_arm(Shared& sh, const ablation::AblationSpec& spec, const std::string& dir) {
  ablation::run_ablation(spec, sh.ds, main_train_config(), sh.work + "/" + dir, 777);
  return model::load_checkpoint(sh.work + "/" + dir + "/checkpoint");
}

bool criterion6(Shared& sh) {
  if (!sh.have_net) {
    note("skipped: no trained model available");
    return false;
  }
  ablation::AblationSpec sam;
  sam.name = "sample-pred";
  sam.prediction_target = "sample";
  model::Net sam_net = train_arm(sh, sam, "run_sample");
  ablation::EvalSummary s = raw_eval(sam_net, sh.ds, 20);
  note(fmt("mean cost: epsilon %.2f%% vs sample %.2f%% (same train/eval seeds)",
           full_raw20(sh).mean.cost, s.mean.cost));
  return full_raw20(sh).mean.cost <= s.mean.cost;
}

bool criterion7(Shared& sh) {
  if (!sh.have_net) {
    note("skipped: no trained model available");
    return false;
  }
  ablation::AblationSpec spec;
  spec.name = "no-trav-input";
  spec.use_trav_input = false;
  model::Net cut_net = train_arm(sh, spec, "run_notrav");
  ablation::EvalSummary cut = raw_eval(cut_net, sh.ds, 20, /*zero_trav=*/true);
  const auto &f = full_raw20(sh).mean, &c = cut.mean;
  note(fmt("clearance %.2f -> %.2f, cost %.2f%% -> %.2f%% (full -> no trav input)",
           f.clearance_mean, c.clearance_mean, f.cost, c.cost));
  return c.clearance_mean < f.clearance_mean && c.cost > f.cost;
}

// ---------------------------------------------------------------------------
// criterion 8: constructed detour scenes, ground vs aerial
// ---------------------------------------------------------------------------

bool criterion8(Shared& sh) {
  if (!sh.have_net) {
    note("skipped: no trained model available");
    return false;
  }
  const diffusion::Schedule full = diffusion::cosine_schedule(sh.net.train_T);
  const int n = 24;
  double len_sum[2] = {0, 0}, smin_sum[2] = {0, 0};
  int safe_count[2] = {0, 0};

  for (int i = 0; i < n; ++i) {
    const int c = 20 + i;  // straight start->goal line down column c
    gridworld::Scene scene;
    scene.seed = 500000 + static_cast<uint64_t>(i);
    gridworld::Obstacle ob;
    ob.height = gridworld::ObstacleHeight::low;
    for (int r = 31; r <= 32; ++r)
      for (int cc = c - 2; cc <= c + 1; ++cc) ob.cells.push_back({r, cc});
    scene.obstacles.push_back(ob);

    Rng img_rng = Rng::derive(9100, "c8img", static_cast<uint64_t>(i));
    Image img = gridworld::render_image(scene, 0.03, img_rng);
    const Pixel start{61, c}, goal{5, c};

    const gridworld::Embodiment embs[2] = {gridworld::Embodiment::ground(),
                                           gridworld::Embodiment::aerial()};
    for (int e = 0; e < 2; ++e) {
      const gridworld::Embodiment& emb = embs[e];
      dataset::Sample s;
      s.id = fmt("c8-%02d-%s", i, emb.name());
      s.scene_id = fmt("c8-%02d", i);
      s.embodiment = emb.name();
      s.image = img;
      s.teacher = gridworld::teacher_traversability(scene, emb);
      s.start = start;
      s.goal = goal;
      supervision::SGTensor sg = supervision::make_sg_tensor(start, goal, 64, 64, 1.5);
      s.sg_start = sg.start;
      s.sg_goal = sg.goal;
      Rng state_rng = Rng::derive(9100, "c8state:" + s.id);
      s.state = gridworld::sample_state(emb, state_rng);
      s.state.s[0] = start.col;
      s.state.s[1] = start.row;

      model::ConditioningBundle cond = ablation::make_conditioning(sh.net, s);
      ablation::SampleOptions sopt;  // 20 steps
      Field heat = ablation::generate_heatmap(sh.net, full, cond, sopt,
                                              Rng::derive(777, "eval:" + s.id).next_u64());
      planner::Trajectory traj = planner::extract_path(heat, start, goal);
      std::vector<Pixel> blocked = ablation::blocked_from_teacher(s.teacher);
      if (!blocked.empty()) {
        planner::PointCloud cloud;
        for (const Pixel& b : blocked)
          cloud.pts.push_back({static_cast<double>(b.row), static_cast<double>(b.col)});
        traj = planner::apf_refine(traj, cloud, 2.0, 0.2, 5);
      }
      len_sum[e] += planner::path_length(traj);
      const double smin = planner::safety_bounds(traj, s.teacher).first;
      smin_sum[e] += smin;
      safe_count[e] += smin >= emb.safety_threshold;
    }
  }
  const double lg = len_sum[0] / n, la = len_sum[1] / n;
  const double sg = smin_sum[0] / n, sa = smin_sum[1] / n;
  note(fmt("%d scenes: mean length ground %.2f vs aerial %.2f; mean safety_min %.3f / %.3f "
           "(>=0.3), per-path safe %d/%d and %d/%d",
           n, lg, la, sg, sa, safe_count[0], n, safe_count[1], n));
  return la < lg && sg >= 0.3 && sa >= 0.3;
}

// ---------------------------------------------------------------------------
// criterion 9: APF refinement guarantees over randomized pairs
// ---------------------------------------------------------------------------

bool criterion9() {
  gridworld::SceneConfig scfg;
  const gridworld::Embodiment emb = gridworld::Embodiment::ground();
  int bad = 0;
  std::string first_bad;
  for (int i = 0; i < 500; ++i) {
    gridworld::Scene scene = gridworld::gen_scene(3000 + static_cast<uint64_t>(i), scfg);
    Field trav = gridworld::teacher_traversability(scene, emb);
    Rng rng = Rng::derive(8000, "c9", static_cast<uint64_t>(i));
    auto [start, goal] = gridworld::sample_start_goal(trav, emb, rng);
    auto ctrl = supervision::sample_waypoints(start, goal, 1 + (i % 3), trav,
                                              emb.safety_threshold, 4.0, 50, rng);
    auto curve = supervision::bezier_points(ctrl, 48);

    planner::Trajectory traj;
    traj.points = curve;
    traj.reached = true;
    for (const PointF& p : curve)
      traj.pixels.push_back({static_cast<int>(std::lround(p.row)),
                             static_cast<int>(std::lround(p.col))});

    std::vector<Pixel> blocked = scene.blocked_cells(true);
    planner::PointCloud cloud;
    for (const Pixel& b : blocked)
      cloud.pts.push_back({static_cast<double>(b.row), static_cast<double>(b.col)});

    planner::Trajectory ref = planner::apf_refine(traj, cloud, 2.0, 0.2, 5);

    bool ok = ref.points.size() == traj.points.size();
    ok = ok && ref.points.front() == traj.points.front() && ref.points.back() == traj.points.back();
    const double before = planner::path_clearance(traj, blocked).second;
    const double after = planner::path_clearance(ref, blocked).second;
    ok = ok && after >= before;
    for (size_t j = 0; ok && j < traj.points.size(); ++j) {
      double nearest = std::numeric_limits<double>::infinity();
      for (const PointF& o : cloud.pts) nearest = std::min(nearest, dist(traj.points[j], o));
      if (nearest >= 2.0 && !(ref.points[j] == traj.points[j])) ok = false;
    }
    if (!ok && bad++ == 0) first_bad = fmt("pair %d", i);
  }
  note(fmt("500 pairs, %d violations%s", bad,
           bad ? (" (first: " + first_bad + ")").c_str() : ""));
  return bad == 0;
}

// ---------------------------------------------------------------------------
// criterion 10: metric implementations vs brute-force recomputation
// ---------------------------------------------------------------------------

bool criterion10() {
  Rng rng(606);
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    planner::Trajectory traj;
    const int n = 2 + rng.next_int(0, 38);
    for (int j = 0; j < n; ++j)
      traj.points.push_back({-1.0 + 66.0 * rng.next_double(), -1.0 + 66.0 * rng.next_double()});
    traj.reached = true;

    std::vector<Pixel> blocked;
    const int m = rng.next_int(0, 12);
    for (int j = 0; j < m; ++j) blocked.push_back({rng.next_int(0, 63), rng.next_int(0, 63)});
    Field teacher = random_fieldf(64, 64, rng, 0.0, 1.0);

    // straight re-derivations of each metric definition
    double olen = 0;
    for (size_t j = 1; j < traj.points.size(); ++j) {
      const double dr = traj.points[j - 1].row - traj.points[j].row;
      const double dc = traj.points[j - 1].col - traj.points[j].col;
      olen += std::sqrt(dr * dr + dc * dc);
    }
    const double inf = std::numeric_limits<double>::infinity();
    double osum = 0, omin = inf;
    for (const PointF& p : traj.points) {
      double d = inf;
      for (const Pixel& o : blocked) {
        const double dr = p.row - static_cast<double>(o.row);
        const double dc = p.col - static_cast<double>(o.col);
        d = std::min(d, std::sqrt(dr * dr + dc * dc));
      }
      osum += d;
      omin = std::min(omin, d);
    }
    const double omean = blocked.empty() ? inf : osum / static_cast<double>(traj.points.size());

    double csum = 0, smn = inf, smx = -inf;
    for (const PointF& p : traj.points) {
      int r = std::clamp(static_cast<int>(std::lround(p.row)), 0, 63);
      int c = std::clamp(static_cast<int>(std::lround(p.col)), 0, 63);
      csum += 1.0 - teacher.at(r, c);
      smn = std::min(smn, static_cast<double>(teacher.at(r, c)));
      smx = std::max(smx, static_cast<double>(teacher.at(r, c)));
    }
    const double ocost = 100.0 * csum / static_cast<double>(traj.points.size());

    const double len = planner::path_length(traj);
    auto [cmean, cmin] = planner::path_clearance(traj, blocked);
    const double cost = planner::path_cost(traj, teacher);
    auto [bmin, bmax] = planner::safety_bounds(traj, teacher);

    const bool ok = len == olen && cmean == omean && cmin == omin && cost == ocost &&
                    bmin == smn && bmax == smx;
    bad += !ok;
  }
  note(fmt("100 paths, %d mismatches (exact equality)", bad));
  return bad == 0;
}

// ---------------------------------------------------------------------------
// criterion 11: sampling latency and step-count linearity
// ---------------------------------------------------------------------------

bool criterion11(Shared& sh) {
  if (!sh.have_net) {
    note("skipped: no trained model available");
    return false;
  }
  const dataset::Sample& s = sh.ds.at(sh.ds.test_idx.front());
  model::ConditioningBundle cond = ablation::make_conditioning(sh.net, s);
  const diffusion::Schedule full = diffusion::cosine_schedule(sh.net.train_T);

  const int steps[4] = {1, 10, 20, 50};
  double lat[4], per_step[4];
  for (int i = 0; i < 4; ++i) {
    ablation::SampleOptions sopt;
    sopt.steps = steps[i];
    lat[i] = planner::measure_latency(
        [&] { ablation::generate_heatmap(sh.net, full, cond, sopt, 42); }, 3);
    per_step[i] = lat[i] / steps[i];
  }
  double mean_ps = 0;
  for (double v : per_step) mean_ps += v / 4.0;
  double dev = 0;
  for (double v : per_step) dev = std::max(dev, std::fabs(v - mean_ps) / mean_ps);
  note(fmt("latency 1/10/20/50 steps: %.3f / %.3f / %.3f / %.3f s; per-step spread %.1f%% "
           "(<=20%%), 20-step %.3fs (<2s)",
           lat[0], lat[1], lat[2], lat[3], 100.0 * dev, lat[2]));
  return lat[2] < 2.0 && dev <= 0.20;
}

// ---------------------------------------------------------------------------
// criterion 12: byte-identical pipeline runs
// ---------------------------------------------------------------------------

std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).string());
  std::sort(out.begin(), out.end());
  return out;
}

bool file_bytes_equal(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return sa == sb;
}

bool criterion12(Shared& sh) {
  auto pipeline = [](const std::string& root) {
    dataset::GenConfig gc;
    gc.n_scenes = 16;
    dataset::Dataset ds = dataset::generate_dataset(root + "/data", 5, gc);
    trainer::TrainConfig tc;
    tc.epochs = 2;
    tc.batch = 4;
    tc.T = 100;
    tc.seed = 5;
    model::Net net = model::make_net(model::ModelConfig{}, tc.seed);
    trainer::train(net, ds, tc, root + "/run");
    ablation::EvalOptions eo;
    eo.steps = 5;
    ablation::EvalSummary s = ablation::evaluate(net, ds, ds.test_idx, eo, 9);
    ablation::write_metrics_csv(root + "/run/metrics.csv", s);
  };
  const std::string a = sh.work + "/det_a", b = sh.work + "/det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  pipeline(a);
  pipeline(b);

  auto fa = list_files(a), fb = list_files(b);
  if (fa != fb) {
    note(fmt("file lists differ: %zu vs %zu entries", fa.size(), fb.size()));
    return false;
  }
  int diff = 0;
  std::string first;
  for (const std::string& rel : fa)
    if (!file_bytes_equal(fs::path(a) / rel, fs::path(b) / rel) && diff++ == 0) first = rel;
  note(fmt("%zu files compared, %d differ%s", fa.size(), diff,
           diff ? (" (first: " + first + ")").c_str() : ""));
  return diff == 0;
}

}  // namespace

int main(int argc, char** argv) {
  Shared sh;
  sh.work = argc > 1 ? argv[1] : "acceptance_work";
  fs::create_directories(sh.work);
  std::printf("acceptance gate; work dir: %s\n", sh.work.c_str());

  int failures = 0;
  auto run = [&](int id, const char* what, const std::function<bool()>& fn) {
    bool ok = false;
    std::string err;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      err = e.what();
    }
    if (!err.empty()) note(fmt("exception: %s", err.c_str()));
    std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", what);
    std::fflush(stdout);
    failures += !ok;
  };

  run(1, "finite-difference gradients: every loss and the full objective", criterion1);
  run(2, "scheduler product identity, monotonicity, t=1 round trip", criterion2);
  run(3, "heatmap supervision invariants over 1000 draws", criterion3);
  run(4, "end-to-end training and held-out navigation quality", [&] { return criterion4(sh); });
  run(5, "20-step sampling beats 1 step, holds against 50", [&] { return criterion5(sh); });
  run(6, "epsilon-prediction cost <= sample-prediction cost", [&] { return criterion6(sh); });
  run(7, "removing the traversability input hurts clearance and cost",
      [&] { return criterion7(sh); });
  run(8, "aerial paths shorter than ground detours, both safe", [&] { return criterion8(sh); });
  run(9, "APF refinement: clearance kept, endpoints and far points fixed", criterion9);
  run(10, "planner metrics match brute-force recomputation", criterion10);
  run(11, "20-step latency under 2s, linear in step count", [&] { return criterion11(sh); });
  run(12, "byte-identical dataset/train/eval reruns", [&] { return criterion12(sh); });

  std::printf("acceptance: %d/12 passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
