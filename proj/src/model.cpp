#include "travdiff/model.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace travdiff::model {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string ModelConfig::to_json() const {
  json j;
  j["sc1"] = sc1; j["sc2"] = sc2; j["sc3"] = sc3; j["sd1"] = sd1; j["sd2"] = sd2;
  j["stem"] = stem; j["w1"] = w1; j["w2"] = w2;
  j["time_dim"] = time_dim;
  j["n_tokens"] = n_tokens; j["token_dim"] = token_dim;
  j["state_hidden"] = state_hidden;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.sc1 = j.at("sc1"); c.sc2 = j.at("sc2"); c.sc3 = j.at("sc3");
  c.sd1 = j.at("sd1"); c.sd2 = j.at("sd2");
  c.stem = j.at("stem"); c.w1 = j.at("w1"); c.w2 = j.at("w2");
  c.time_dim = j.at("time_dim");
  c.n_tokens = j.at("n_tokens"); c.token_dim = j.at("token_dim");
  c.state_hidden = j.at("state_hidden");
  return c;
}

Net make_net(const ModelConfig& cfg, uint64_t seed) {
  Net net;
  net.cfg = cfg;
  net.seed = seed;
  register_params(net.store, cfg);
  init_params(net.store, seed);
  return net;
}

static int field_leaf(nn::Tape& tape, const Field& f) {
  nn::Tensor t({1, f.rows, f.cols});
  std::copy(f.v.begin(), f.v.end(), t.data.begin());
  return tape.leaf(std::move(t));
}

static Field node_to_field(const nn::Tape& tape, int id) {
  const nn::Tensor& t = tape.val(id);
  Field f(t.dim(0), t.dim(1));
  std::copy(t.data.begin(), t.data.end(), f.v.begin());
  return f;
}

Field student_traversability(const Net& net, const Image& image, const gridworld::RobotState& st) {
  nn::Tape tape;
  auto& store = const_cast<ParamStore&>(net.store);  // leaves copy values; store is not mutated
  GraphCtx<float> g(tape, store);

  nn::Tensor img({3, image.rows(), image.cols()});
  for (int c = 0; c < 3; ++c)
    std::copy(image.ch[static_cast<size_t>(c)].v.begin(), image.ch[static_cast<size_t>(c)].v.end(),
              img.data.begin() + static_cast<size_t>(c) * image.rows() * image.cols());
  int image_node = tape.leaf(std::move(img));
  int state_node = tape.leaf(state_input<float>(st.s));
  auto [gamma, beta] = build_state_film(g, state_node, net.cfg);
  int out = build_student(g, image_node, gamma, beta, net.cfg);
  return node_to_field(tape, out);
}

std::pair<FilmParams, nn::Tensor> state_to_film(const Net& net, const gridworld::RobotState& st) {
  nn::Tape tape;
  auto& store = const_cast<ParamStore&>(net.store);
  GraphCtx<float> g(tape, store);
  int state_node = tape.leaf(state_input<float>(st.s));
  auto [gamma, beta] = build_state_film(g, state_node, net.cfg);
  int tokens = build_state_tokens(g, state_node, net.cfg);
  FilmParams fp;
  fp.gamma = tape.val(gamma).data;
  fp.beta = tape.val(beta).data;
  return {fp, tape.val(tokens)};
}

Field predict_noise(const Net& net, const Field& x_t, const ConditioningBundle& cond, int t) {
  if (t < 1) throw std::invalid_argument("predict_noise: bad timestep");
  nn::Tape tape;
  auto& store = const_cast<ParamStore&>(net.store);
  GraphCtx<float> g(tape, store);

  int xt = field_leaf(tape, x_t);
  int s0 = field_leaf(tape, cond.sg_start);
  int s1 = field_leaf(tape, cond.sg_goal);
  int tr = field_leaf(tape, cond.trav);
  int x4 = nn::concat_ch(tape, nn::concat_ch(tape, xt, s0), nn::concat_ch(tape, s1, tr));
  int tokens = tape.leaf(cond.tokens);
  int out = build_unet(g, x4, t, tokens, net.cfg);
  return node_to_field(tape, out);
}

void save_checkpoint(const Net& net, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "travdiff-checkpoint-v1";
  manifest["config"] = json::parse(net.cfg.to_json());
  manifest["seed"] = net.seed;
  manifest["prediction_target"] = net.prediction_target;
  manifest["dataset_hash"] = net.dataset_hash;
  manifest["schedule_hash"] = net.schedule_hash;
  manifest["train_T"] = net.train_T;
  manifest["train_config"] = json::parse(net.train_config_json);
  manifest["params"] = json::array();
  size_t total = 0;
  for (const auto& e : net.store.entries) {
    manifest["params"].push_back({{"name", e.name}, {"shape", e.value.shape}});
    total += e.value.data.size();
  }

  std::vector<float> blob;
  blob.reserve(total);
  for (const auto& e : net.store.entries)
    blob.insert(blob.end(), e.value.data.begin(), e.value.data.end());
  write_f32_blob(dir + "/weights.f32", blob.data(), blob.size());

  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("cannot write checkpoint manifest: " + dir);
  mf << manifest.dump(2) << "\n";
}

Net load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("missing checkpoint manifest: " + dir);
  json manifest = json::parse(mf);
  if (manifest.value("format", "") != "travdiff-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format: " + dir);

  Net net;
  net.cfg = ModelConfig::from_json(manifest.at("config").dump());
  net.seed = manifest.at("seed").get<uint64_t>();
  net.prediction_target = manifest.at("prediction_target").get<std::string>();
  net.dataset_hash = manifest.at("dataset_hash").get<std::string>();
  net.schedule_hash = manifest.at("schedule_hash").get<std::string>();
  net.train_T = manifest.at("train_T").get<int>();
  net.train_config_json = manifest.at("train_config").dump();
  register_params(net.store, net.cfg);

  const json& plist = manifest.at("params");
  if (plist.size() != net.store.entries.size())
    throw std::runtime_error("checkpoint parameter list does not match config");
  size_t total = 0;
  for (size_t i = 0; i < plist.size(); ++i) {
    const auto& e = net.store.entries[i];
    if (plist[i].at("name").get<std::string>() != e.name ||
        plist[i].at("shape").get<std::vector<int>>() != e.value.shape)
      throw std::runtime_error("checkpoint parameter mismatch at " + e.name);
    total += e.value.data.size();
  }
  std::vector<float> blob = read_f32_blob(dir + "/weights.f32", total);
  size_t off = 0;
  for (auto& e : net.store.entries) {
    std::copy(blob.begin() + static_cast<long>(off),
              blob.begin() + static_cast<long>(off + e.value.data.size()), e.value.data.begin());
    off += e.value.data.size();
  }
  return net;
}

}  // namespace travdiff::model
