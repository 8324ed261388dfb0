#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "travdiff/field.hpp"
#include "travdiff/gridworld.hpp"
#include "travdiff/rng.hpp"
#include "travdiff/tape.hpp"

namespace travdiff::model {

// Channel widths and embedding sizes. Defaults are the desk-scale shape:
// two UNet levels below the stem, bottleneck token attention, 64-dim
// sinusoidal time embedding. Tests shrink everything for gradient checks.
struct ModelConfig {
  // student traversability net
  int sc1 = 16, sc2 = 32, sc3 = 32;  // encoder widths (sc3 is FiLM-modulated)
  int sd1 = 16, sd2 = 8;             // decoder widths
  // denoising UNet
  int stem = 16, w1 = 32, w2 = 64;
  // conditioning
  int time_dim = 64;
  int n_tokens = 4, token_dim = 32;
  int state_hidden = 32;

  std::string to_json() const;
  static ModelConfig from_json(const std::string&);
  bool operator==(const ModelConfig&) const = default;
};

template <class S>
struct ParamStoreT {
  struct Entry {
    std::string name;
    nn::TensorT<S> value;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, int> index;

  int add(const std::string& name, std::vector<int> shape) {
    if (index.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    index[name] = static_cast<int>(entries.size());
    entries.push_back({name, nn::TensorT<S>(std::move(shape))});
    return static_cast<int>(entries.size()) - 1;
  }
  int id(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }
  nn::TensorT<S>& value(const std::string& name) { return entries[static_cast<size_t>(id(name))].value; }
  const nn::TensorT<S>& value(const std::string& name) const {
    return entries[static_cast<size_t>(id(name))].value;
  }
  int64_t total() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.numel();
    return n;
  }
};

// Registers every trainable tensor in a fixed order (the checkpoint blob
// order). Weights get uniform fan-in init from a per-name stream so the
// values do not depend on registration order; biases start at zero.
template <class S>
void register_params(ParamStoreT<S>& ps, const ModelConfig& c) {
  auto conv = [&](const std::string& n, int co, int ci, int k) {
    ps.add(n + ".w", {co, ci, k, k});
    ps.add(n + ".b", {co});
  };
  auto lin = [&](const std::string& n, int m, int in) {
    ps.add(n + ".w", {m, in});
    ps.add(n + ".b", {m});
  };
  // student
  conv("s.enc1", c.sc1, 3, 3);
  conv("s.enc2", c.sc2, c.sc1, 3);
  conv("s.enc3", c.sc3, c.sc2, 3);
  conv("s.dec1", c.sd1, c.sc3, 3);
  conv("s.dec2", c.sd2, c.sd1, 3);
  conv("s.head", 1, c.sd2, 1);
  // state conditioning
  lin("f.trunk", c.state_hidden, 6);
  lin("f.film", 2 * c.sc3, c.state_hidden);
  lin("f.tok.trunk", c.state_hidden, 6);
  lin("f.tok.head", c.n_tokens * c.token_dim, c.state_hidden);
  // UNet
  auto blk = [&](const std::string& n, int co, int ci) {
    conv(n, co, ci, 3);
    lin(n + ".t", co, c.time_dim);
  };
  blk("u.stem", c.stem, 4);
  blk("u.down1", c.w1, c.stem);
  blk("u.block1", c.w1, c.w1);
  blk("u.down2", c.w2, c.w1);
  blk("u.block2", c.w2, c.w2);
  ps.add("u.attn.wq", {c.token_dim, c.w2});
  ps.add("u.attn.wk", {c.token_dim, c.token_dim});
  ps.add("u.attn.wv", {c.w2, c.token_dim});
  blk("u.mid", c.w2, c.w2);
  conv("u.up1p", c.w1, c.w2, 1);
  blk("u.up1", c.w1, 2 * c.w1);
  conv("u.up2p", c.stem, c.w1, 1);
  blk("u.up2", c.stem, 2 * c.stem);
  conv("u.head", 1, c.stem, 1);
}

template <class S>
void init_params(ParamStoreT<S>& ps, uint64_t seed) {
  for (auto& e : ps.entries) {
    bool is_bias = e.name.size() > 2 && e.name.compare(e.name.size() - 2, 2, ".b") == 0;
    if (is_bias) {
      std::fill(e.value.data.begin(), e.value.data.end(), S(0));
      continue;
    }
    int fan_in = 1;
    if (e.value.ndim() == 4) fan_in = e.value.dim(1) * e.value.dim(2) * e.value.dim(3);
    else if (e.value.ndim() == 2) fan_in = e.value.dim(1);
    else fan_in = static_cast<int>(e.value.numel());
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng = Rng::derive(seed, e.name);
    for (S& v : e.value.data) v = static_cast<S>((2.0 * rng.next_double() - 1.0) * bound);
  }
}

// Per-tape cache of parameter leaves so a batch shares one leaf (and one
// gradient accumulator) per tensor.
template <class S>
struct GraphCtx {
  nn::TapeT<S>& tape;
  ParamStoreT<S>& ps;
  std::vector<int> leaf_of;

  GraphCtx(nn::TapeT<S>& t, ParamStoreT<S>& p)
      : tape(t), ps(p), leaf_of(p.entries.size(), -1) {}

  int p(const std::string& name) {
    int pid = ps.id(name);
    int& node = leaf_of[static_cast<size_t>(pid)];
    if (node < 0) node = tape.leaf(ps.entries[static_cast<size_t>(pid)].value, pid);
    return node;
  }
};

// 64-dim sinusoidal embedding of an integer timestep.
template <class S>
nn::TensorT<S> time_embedding(int t, int dim) {
  nn::TensorT<S> e({dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / (half - 1));
    e.data[static_cast<size_t>(i)] = static_cast<S>(std::sin(t * freq));
    e.data[static_cast<size_t>(half + i)] = static_cast<S>(std::cos(t * freq));
  }
  return e;
}

// Normalized 6-dim state input shared by every state head.
template <class S>
nn::TensorT<S> state_input(const std::array<double, 6>& s) {
  nn::TensorT<S> x({6});
  const double pi = 3.14159265358979323846;
  x.data[0] = static_cast<S>((s[0] - 32.0) / 32.0);
  x.data[1] = static_cast<S>((s[1] - 32.0) / 32.0);
  x.data[2] = static_cast<S>(s[2] / 8.0);
  for (int i = 3; i < 6; ++i) x.data[static_cast<size_t>(i)] = static_cast<S>(s[static_cast<size_t>(i)] / pi);
  return x;
}

// gamma/beta for the student FiLM layer, from the normalized state vector.
template <class S>
std::pair<int, int> build_state_film(GraphCtx<S>& g, int state, const ModelConfig& c) {
  int h = nn::silu(g.tape, nn::linear(g.tape, state, g.p("f.trunk.w"), g.p("f.trunk.b")));
  int gb = nn::linear(g.tape, h, g.p("f.film.w"), g.p("f.film.b"));
  int gamma = nn::slice(g.tape, gb, 0, c.sc3);
  int beta = nn::slice(g.tape, gb, c.sc3, c.sc3);
  return {gamma, beta};
}

// Conditioning tokens [N,D] for the UNet bottleneck.
template <class S>
int build_state_tokens(GraphCtx<S>& g, int state, const ModelConfig& c) {
  int h = nn::silu(g.tape, nn::linear(g.tape, state, g.p("f.tok.trunk.w"), g.p("f.tok.trunk.b")));
  int z = nn::linear(g.tape, h, g.p("f.tok.head.w"), g.p("f.tok.head.b"));
  return nn::reshape(g.tape, z, {c.n_tokens, c.token_dim});
}

// Student map from a [3,H,W] image node; returns a [H,W] node in (0,1).
template <class S>
int build_student(GraphCtx<S>& g, int image, int gamma, int beta, const ModelConfig&) {
  auto& t = g.tape;
  int e1 = nn::silu(t, nn::conv2d(t, image, g.p("s.enc1.w"), g.p("s.enc1.b"), 2));
  int e2 = nn::silu(t, nn::conv2d(t, e1, g.p("s.enc2.w"), g.p("s.enc2.b"), 2));
  int f = nn::conv2d(t, e2, g.p("s.enc3.w"), g.p("s.enc3.b"), 1);
  int a = nn::silu(t, nn::film(t, f, gamma, beta));
  int d1 = nn::silu(t, nn::conv2d(t, nn::upsample2(t, a), g.p("s.dec1.w"), g.p("s.dec1.b"), 1));
  int d2 = nn::silu(t, nn::conv2d(t, nn::upsample2(t, d1), g.p("s.dec2.w"), g.p("s.dec2.b"), 1));
  int o = nn::sigmoid(t, nn::conv2d(t, d2, g.p("s.head.w"), g.p("s.head.b"), 1));
  const auto& sh = t.val(o).shape;
  return nn::reshape(t, o, {sh[1], sh[2]});
}

// Denoising UNet over the 4-channel conditioned stack [x_t, sg_s, sg_g, trav].
// The sinusoidal embedding of t is projected and added per block; tokens are
// injected once at the bottleneck through attention pooling.
template <class S>
int build_unet(GraphCtx<S>& g, int x4, int t_step, int tokens, const ModelConfig& c) {
  auto& t = g.tape;
  int temb = t.leaf(time_embedding<S>(t_step, c.time_dim));
  auto blk = [&](int x, const std::string& n, int stride) {
    int y = nn::conv2d(t, x, g.p(n + ".w"), g.p(n + ".b"), stride);
    int tb = nn::linear(t, temb, g.p(n + ".t.w"), g.p(n + ".t.b"));
    return nn::silu(t, nn::add_chan_bias(t, y, tb));
  };
  int a = blk(x4, "u.stem", 1);
  int b = blk(a, "u.down1", 2);
  int cnode = blk(b, "u.block1", 1);
  int d = blk(cnode, "u.down2", 2);
  int e = blk(d, "u.block2", 1);
  int attn = nn::token_attention(t, e, tokens, g.p("u.attn.wq"), g.p("u.attn.wk"), g.p("u.attn.wv"));
  int f = nn::add(t, e, attn);
  int m = blk(f, "u.mid", 1);
  int h = nn::silu(t, nn::conv2d(t, nn::upsample2(t, m), g.p("u.up1p.w"), g.p("u.up1p.b"), 1));
  int j = blk(nn::concat_ch(t, h, cnode), "u.up1", 1);
  int k = nn::silu(t, nn::conv2d(t, nn::upsample2(t, j), g.p("u.up2p.w"), g.p("u.up2p.b"), 1));
  int mm = blk(nn::concat_ch(t, k, a), "u.up2", 1);
  int out = nn::conv2d(t, mm, g.p("u.head.w"), g.p("u.head.b"), 1);
  const auto& sh = t.val(out).shape;
  return nn::reshape(t, out, {sh[1], sh[2]});
}

// ---- float-instantiated inference API ----

using ParamStore = ParamStoreT<float>;

struct FilmParams {
  std::vector<float> gamma, beta;
};

// Everything the denoiser consumes besides x_t and the timestep. Ablations
// zero individual members without touching the rest.
struct ConditioningBundle {
  Field sg_start, sg_goal;
  Field trav;
  nn::Tensor tokens;  // [N,D]
};

struct Net {
  ModelConfig cfg;
  ParamStore store;
  // manifest metadata
  uint64_t seed = 0;
  std::string prediction_target = "epsilon";  // "epsilon" | "sample"
  std::string dataset_hash;
  std::string schedule_hash;
  int train_T = 1000;
  std::string train_config_json = "{}";
};

Net make_net(const ModelConfig& cfg, uint64_t seed);

Field student_traversability(const Net& net, const Image& image, const gridworld::RobotState& st);

// FiLM parameters plus conditioning tokens from one state vector. Zero
// weights give the exact identity modulation and all-bias tokens.
std::pair<FilmParams, nn::Tensor> state_to_film(const Net& net, const gridworld::RobotState& st);

// One denoiser evaluation. `t` is a timestep of the training schedule.
Field predict_noise(const Net& net, const Field& x_t, const ConditioningBundle& cond, int t);

void save_checkpoint(const Net& net, const std::string& dir);
Net load_checkpoint(const std::string& dir);

}  // namespace travdiff::model
