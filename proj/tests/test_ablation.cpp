#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "travdiff/ablation.hpp"

using namespace travdiff;
using namespace travdiff::ablation;
namespace fs = std::filesystem;

namespace {

model::ModelConfig tiny_cfg() {
  model::ModelConfig mc;
  mc.sc1 = mc.sc2 = mc.sc3 = 4;
  mc.sd1 = mc.sd2 = 4;
  mc.stem = 4;
  mc.w1 = 6;
  mc.w2 = 8;
  mc.time_dim = 8;
  mc.n_tokens = 2;
  mc.token_dim = 4;
  mc.state_hidden = 4;
  return mc;
}

struct Fixture {
  dataset::Dataset ds;
  model::Net net;

  Fixture() : net(model::make_net(tiny_cfg(), 33)) {
    fs::path dir = fs::temp_directory_path() / "travdiff_abl_ds";
    fs::remove_all(dir);
    dataset::GenConfig gc;
    gc.n_scenes = 4;
    ds = dataset::generate_dataset(dir.string(), 2, gc);
    fs::remove_all(dir);
    net.dataset_hash = ds.data_hash;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("spec validation and json round trip") {
  AblationSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.guidance = "unconditional";
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = AblationSpec{};
  spec.steps = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = AblationSpec{};
  spec.prediction_target = "x0";
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);

  AblationSpec full;
  full.name = "no-trav-input";
  full.use_trav_input = false;
  full.guidance = "cfg";
  full.cfg_weight = 1.5;
  full.zero_cond_at_eval = true;
  AblationSpec back = AblationSpec::from_json(full.to_json());
  CHECK(back.name == "no-trav-input");
  CHECK(!back.use_trav_input);
  CHECK(back.use_sg_input);
  CHECK(back.guidance == "cfg");
  CHECK(back.cfg_weight == doctest::Approx(1.5));
  CHECK(back.zero_cond_at_eval);
}

TEST_CASE("spec maps onto the train config") {
  trainer::TrainConfig base;
  AblationSpec spec;
  spec.use_trav_input = false;
  spec.use_mass_loss = false;
  spec.prediction_target = "sample";
  trainer::TrainConfig out = apply_spec(spec, base);
  CHECK(!out.use_trav_input);
  CHECK(!out.toggles.mass);
  CHECK(out.toggles.noise);
  CHECK(out.prediction_target == "sample");
  CHECK(out.cond_dropout == doctest::Approx(0.0));

  spec.guidance = "cfg";
  out = apply_spec(spec, base);
  CHECK(out.cond_dropout == doctest::Approx(0.1));

  EvalOptions eo = eval_options(spec);
  CHECK(eo.cfg_weight == doctest::Approx(spec.cfg_weight));
  spec.use_sg_loss = false;
  eo = eval_options(spec);
  CHECK(eo.progress_weight == doctest::Approx(0.0));
  spec.zero_cond_at_eval = true;
  CHECK(eval_options(spec).zero_tokens);
}

TEST_CASE("conditioning bundle wires the student prediction and tokens") {
  Fixture& fx = fixture();
  const dataset::Sample& s = fx.ds.samples[0];
  model::ConditioningBundle cond = make_conditioning(fx.net, s);
  CHECK(cond.sg_start.v == s.sg_start.v);
  CHECK(cond.sg_goal.v == s.sg_goal.v);
  Field stu = model::student_traversability(fx.net, s.image, s.state);
  CHECK(cond.trav.v == stu.v);
  CHECK(cond.tokens.shape == std::vector<int>{2, 4});
}

TEST_CASE("zeroing options equal manually zeroed conditioning") {
  Fixture& fx = fixture();
  const dataset::Sample& s = fx.ds.samples[1];
  model::ConditioningBundle cond = make_conditioning(fx.net, s);
  diffusion::Schedule full = diffusion::cosine_schedule(50);
  fx.net.train_T = 50;

  SampleOptions opt;
  opt.steps = 4;
  Field base = generate_heatmap(fx.net, full, cond, opt, 9);
  CHECK(base.rows == 64);
  CHECK(base.max_value() <= 1.0f);
  CHECK(base.min_value() >= 0.0f);
  Field again = generate_heatmap(fx.net, full, cond, opt, 9);
  CHECK(base.v == again.v);

  SampleOptions zs = opt;
  zs.zero_sg = true;
  zs.zero_trav = true;
  zs.zero_tokens = true;
  Field auto_zeroed = generate_heatmap(fx.net, full, cond, zs, 9);

  model::ConditioningBundle manual = cond;
  manual.sg_start = Field(64, 64, 0.0f);
  manual.sg_goal = Field(64, 64, 0.0f);
  manual.trav = Field(64, 64, 0.0f);
  manual.tokens = nn::Tensor(cond.tokens.shape);
  Field hand_zeroed = generate_heatmap(fx.net, full, manual, opt, 9);
  CHECK(auto_zeroed.v == hand_zeroed.v);
  CHECK(auto_zeroed.v != base.v);

  // Guided sampling blends conditional and unconditional branches; weight 0
  // must reduce to the plain conditional path.
  SampleOptions cfg0 = opt;
  cfg0.cfg_weight = 0.0;
  CHECK(generate_heatmap(fx.net, full, cond, cfg0, 9).v == base.v);
  SampleOptions cfg2 = opt;
  cfg2.cfg_weight = 2.0;
  CHECK(generate_heatmap(fx.net, full, cond, cfg2, 9).v != base.v);
}

TEST_CASE("evaluation is deterministic and aggregates per embodiment") {
  Fixture& fx = fixture();
  fx.net.train_T = 50;
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(fx.ds.samples.size()); ++i) idx.push_back(i);

  EvalOptions opt;
  opt.steps = 2;
  opt.apf_iters = 2;
  EvalSummary a = evaluate(fx.net, fx.ds, idx, opt, 4);
  EvalSummary b = evaluate(fx.net, fx.ds, idx, opt, 4);
  REQUIRE(a.rows.size() == fx.ds.samples.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].id == b.rows[i].id);
    CHECK(a.rows[i].m.length == b.rows[i].m.length);
    CHECK(a.rows[i].m.cost == b.rows[i].m.cost);
    CHECK(a.rows[i].m.success == b.rows[i].m.success);
    // Latency stays zero unless explicitly requested.
    CHECK(a.rows[i].m.latency == 0.0);
  }
  CHECK(a.ground.count + a.aerial.count == a.mean.count);
  CHECK(a.mean.count == static_cast<int>(a.rows.size()));
  CHECK(a.mean.success_rate >= 0.0);
  CHECK(a.mean.success_rate <= 1.0);

  // max_samples truncates the run.
  EvalOptions lim = opt;
  lim.max_samples = 3;
  CHECK(evaluate(fx.net, fx.ds, idx, lim, 4).rows.size() == 3);
}

TEST_CASE("metrics csv carries the table columns plus a mean row") {
  Fixture& fx = fixture();
  fx.net.train_T = 50;
  std::vector<int> idx = {0, 1};
  EvalOptions opt;
  opt.steps = 2;
  EvalSummary s = evaluate(fx.net, fx.ds, idx, opt, 4);

  fs::path csv = fs::temp_directory_path() / "travdiff_metrics.csv";
  write_metrics_csv(csv.string(), s);
  std::ifstream in(csv);
  std::string header, line;
  std::getline(in, header);
  CHECK(header ==
        "id,embodiment,Len,Clear,Clear_min,Cost,Lat,Safety_min,Safety_max,Success");
  int rows = 0;
  bool mean_row = false;
  while (std::getline(in, line))
    if (!line.empty()) {
      ++rows;
      if (line.rfind("mean,all,", 0) == 0) mean_row = true;
    }
  CHECK(rows == 3);  // two samples plus the aggregate
  CHECK(mean_row);
  fs::remove(csv.string());
}

TEST_CASE("blocked cells recovered from the teacher map") {
  Field teacher(8, 8, 1.0f);
  teacher.at(2, 3) = 0.0f;
  teacher.at(5, 5) = 0.0f;
  teacher.at(6, 6) = 0.2f;  // low but not blocked
  auto blocked = blocked_from_teacher(teacher);
  REQUIRE(blocked.size() == 2);
  CHECK(blocked[0] == Pixel{2, 3});
  CHECK(blocked[1] == Pixel{5, 5});
}
