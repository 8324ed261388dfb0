#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "travdiff/tensor.hpp"

namespace travdiff::nn {

// Reverse-mode differentiation tape. Nodes are appended in topological
// order by construction, so backward() is a single reverse sweep. Gradients
// are allocated lazily on the first backward call.
template <class S>
class TapeT {
 public:
  using Tensor = TensorT<S>;

  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(TapeT&)> backward;  // empty for leaves
    int param_id = -1;                     // >= 0 when this leaf mirrors a parameter
  };

  std::vector<Node> nodes;

  int leaf(Tensor v, int param_id = -1) {
    nodes.push_back(Node{std::move(v), Tensor{}, nullptr, param_id});
    return static_cast<int>(nodes.size()) - 1;
  }

  int push(Tensor v, std::function<void(TapeT&)> bwd) {
    nodes.push_back(Node{std::move(v), Tensor{}, std::move(bwd), -1});
    return static_cast<int>(nodes.size()) - 1;
  }

  const Tensor& val(int id) const { return nodes[static_cast<size_t>(id)].value; }
  Tensor& grad(int id) { return nodes[static_cast<size_t>(id)].grad; }

  void add_grad(int id, size_t flat, S g) { nodes[static_cast<size_t>(id)].grad.data[flat] += g; }

  // Accumulates the whole of `g` into node id's gradient.
  void add_grad_all(int id, const std::vector<S>& g) {
    auto& dst = nodes[static_cast<size_t>(id)].grad.data;
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  void backward(int loss_id) {
    if (loss_id < 0 || loss_id >= static_cast<int>(nodes.size()))
      throw std::invalid_argument("backward: node id not on this tape");
    if (nodes[static_cast<size_t>(loss_id)].value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    for (Node& n : nodes) {
      n.grad.shape = n.value.shape;
      n.grad.data.assign(n.value.data.size(), S(0));
    }
    nodes[static_cast<size_t>(loss_id)].grad.data[0] = S(1);
    for (int i = loss_id; i >= 0; --i) {
      Node& n = nodes[static_cast<size_t>(i)];
      if (n.backward) n.backward(*this);
    }
  }
};

namespace detail {
template <class S>
void check_same_shape(const TapeT<S>& t, int a, int b, const char* who) {
  if (!t.val(a).same_shape(t.val(b)))
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}
}  // namespace detail

// Ops push a value node first, then attach a backward closure that knows the
// freshly assigned node id.
template <class S, class F>
int push_op(TapeT<S>& t, TensorT<S> value, F&& make_bwd) {
  int id = t.push(std::move(value), nullptr);
  t.nodes[static_cast<size_t>(id)].backward = make_bwd(id);
  return id;
}

// ---- elementwise ----

template <class S>
int add(TapeT<S>& t, int a, int b) {
  detail::check_same_shape(t, a, b, "add");
  TensorT<S> y = t.val(a);
  const auto& vb = t.val(b).data;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += vb[i];
  return push_op(t, std::move(y), [a, b](int id) {
    return [a, b, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      tp.add_grad_all(a, g);
      tp.add_grad_all(b, g);
    };
  });
}

template <class S>
int sub(TapeT<S>& t, int a, int b) {
  detail::check_same_shape(t, a, b, "sub");
  TensorT<S> y = t.val(a);
  const auto& vb = t.val(b).data;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= vb[i];
  return push_op(t, std::move(y), [a, b](int id) {
    return [a, b, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      tp.add_grad_all(a, g);
      auto& gb = tp.grad(b).data;
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    };
  });
}

template <class S>
int mul(TapeT<S>& t, int a, int b) {
  detail::check_same_shape(t, a, b, "mul");
  TensorT<S> y = t.val(a);
  const auto& vb = t.val(b).data;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= vb[i];
  return push_op(t, std::move(y), [a, b](int id) {
    return [a, b, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& va = tp.val(a).data;
      const auto& vb2 = tp.val(b).data;
      auto& ga = tp.grad(a).data;
      auto& gb = tp.grad(b).data;
      for (size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb2[i];
        gb[i] += g[i] * va[i];
      }
    };
  });
}

// y = k*x + c
template <class S>
int affine(TapeT<S>& t, int a, double k, double c) {
  TensorT<S> y = t.val(a);
  for (S& v : y.data) v = static_cast<S>(k) * v + static_cast<S>(c);
  return push_op(t, std::move(y), [a, k](int id) {
    return [a, k, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      auto& ga = tp.grad(a).data;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += static_cast<S>(k) * g[i];
    };
  });
}

template <class S>
int silu(TapeT<S>& t, int a) {
  TensorT<S> y = t.val(a);
  for (S& v : y.data) {
    S s = S(1) / (S(1) + std::exp(-v));
    v = v * s;
  }
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& x = tp.val(a).data;
      auto& ga = tp.grad(a).data;
      for (size_t i = 0; i < g.size(); ++i) {
        S s = S(1) / (S(1) + std::exp(-x[i]));
        ga[i] += g[i] * s * (S(1) + x[i] * (S(1) - s));
      }
    };
  });
}

template <class S>
int sigmoid(TapeT<S>& t, int a) {
  TensorT<S> y = t.val(a);
  for (S& v : y.data) v = S(1) / (S(1) + std::exp(-v));
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& y2 = tp.val(id).data;
      auto& ga = tp.grad(a).data;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y2[i] * (S(1) - y2[i]);
    };
  });
}

template <class S>
int relu(TapeT<S>& t, int a) {
  TensorT<S> y = t.val(a);
  for (S& v : y.data) v = v > S(0) ? v : S(0);
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& x = tp.val(a).data;
      auto& ga = tp.grad(a).data;
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] > S(0)) ga[i] += g[i];
    };
  });
}

template <class S>
int abs_op(TapeT<S>& t, int a) {
  TensorT<S> y = t.val(a);
  for (S& v : y.data) v = std::abs(v);
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& x = tp.val(a).data;
      auto& ga = tp.grad(a).data;
      for (size_t i = 0; i < g.size(); ++i) {
        if (x[i] > S(0)) ga[i] += g[i];
        else if (x[i] < S(0)) ga[i] -= g[i];
      }
    };
  });
}

// Clamp to [0,1]; gradient passes only strictly inside the interval.
template <class S>
int clamp01(TapeT<S>& t, int a) {
  TensorT<S> y = t.val(a);
  for (S& v : y.data) v = v < S(0) ? S(0) : (v > S(1) ? S(1) : v);
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& x = tp.val(a).data;
      auto& ga = tp.grad(a).data;
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] > S(0) && x[i] < S(1)) ga[i] += g[i];
    };
  });
}

// ---- shape ----

template <class S>
int reshape(TapeT<S>& t, int a, std::vector<int> new_shape) {
  if (TensorT<S>::numel_of(new_shape) != t.val(a).numel())
    throw std::invalid_argument("reshape: element count mismatch");
  TensorT<S> y;
  y.shape = std::move(new_shape);
  y.data = t.val(a).data;
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) { tp.add_grad_all(a, tp.grad(id).data); };
  });
}

template <class S>
int slice(TapeT<S>& t, int a, int offset, int len) {
  const auto& v = t.val(a);
  if (v.ndim() != 1 || offset < 0 || offset + len > v.dim(0))
    throw std::invalid_argument("slice: bad range");
  TensorT<S> y({len});
  for (int i = 0; i < len; ++i) y.data[static_cast<size_t>(i)] = v.data[static_cast<size_t>(offset + i)];
  return push_op(t, std::move(y), [a, offset, len](int id) {
    return [a, offset, len, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      auto& ga = tp.grad(a).data;
      for (int i = 0; i < len; ++i) ga[static_cast<size_t>(offset + i)] += g[static_cast<size_t>(i)];
    };
  });
}

template <class S>
int concat_ch(TapeT<S>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(1) != vb.dim(1) || va.dim(2) != vb.dim(2))
    throw std::invalid_argument("concat_ch: incompatible shapes");
  TensorT<S> y({va.dim(0) + vb.dim(0), va.dim(1), va.dim(2)});
  std::copy(va.data.begin(), va.data.end(), y.data.begin());
  std::copy(vb.data.begin(), vb.data.end(), y.data.begin() + va.data.size());
  return push_op(t, std::move(y), [a, b](int id) {
    return [a, b, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      auto& ga = tp.grad(a).data;
      auto& gb = tp.grad(b).data;
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i + ga.size()];
    };
  });
}

// Nearest-neighbor 2x upsampling of [C,H,W].
template <class S>
int upsample2(TapeT<S>& t, int a) {
  const auto& v = t.val(a);
  if (v.ndim() != 3) throw std::invalid_argument("upsample2: expect [C,H,W]");
  const int C = v.dim(0), H = v.dim(1), W = v.dim(2);
  TensorT<S> y({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int r = 0; r < 2 * H; ++r) {
      const S* src = v.data.data() + (static_cast<size_t>(c) * H + r / 2) * W;
      S* dst = y.data.data() + (static_cast<size_t>(c) * 2 * H + r) * 2 * W;
      for (int col = 0; col < 2 * W; ++col) dst[col] = src[col / 2];
    }
  return push_op(t, std::move(y), [a, C, H, W](int id) {
    return [a, C, H, W, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      auto& ga = tp.grad(a).data;
      for (int c = 0; c < C; ++c)
        for (int r = 0; r < 2 * H; ++r) {
          S* dst = ga.data() + (static_cast<size_t>(c) * H + r / 2) * W;
          const S* src = g.data() + (static_cast<size_t>(c) * 2 * H + r) * 2 * W;
          for (int col = 0; col < 2 * W; ++col) dst[col / 2] += src[col];
        }
    };
  });
}

// ---- dense / conditioning ----

// x [n], w [m,n], b [m] (or -1 for no bias) -> y [m].
template <class S>
int linear(TapeT<S>& t, int x, int w, int b) {
  const auto& vx = t.val(x);
  const auto& vw = t.val(w);
  if (vx.ndim() != 1 || vw.ndim() != 2 || vw.dim(1) != vx.dim(0))
    throw std::invalid_argument("linear: incompatible shapes");
  const int m = vw.dim(0), n = vw.dim(1);
  TensorT<S> y({m});
  for (int i = 0; i < m; ++i) {
    S acc = b >= 0 ? t.val(b).data[static_cast<size_t>(i)] : S(0);
    const S* row = vw.data.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * vx.data[static_cast<size_t>(j)];
    y.data[static_cast<size_t>(i)] = acc;
  }
  return push_op(t, std::move(y), [x, w, b, m, n](int id) {
    return [x, w, b, m, n, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& vx = tp.val(x).data;
      const auto& vw = tp.val(w).data;
      auto& gx = tp.grad(x).data;
      auto& gw = tp.grad(w).data;
      for (int i = 0; i < m; ++i) {
        const S gi = g[static_cast<size_t>(i)];
        const S* wrow = vw.data() + static_cast<size_t>(i) * n;
        S* gwrow = gw.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
          gx[static_cast<size_t>(j)] += gi * wrow[j];
          gwrow[j] += gi * vx[static_cast<size_t>(j)];
        }
      }
      if (b >= 0) tp.add_grad_all(b, g);
    };
  });
}

// Feature-wise affine modulation: y[c,:,:] = x[c,:,:] * (1 + gamma[c]) + beta[c].
template <class S>
int film(TapeT<S>& t, int x, int gamma, int beta) {
  const auto& vx = t.val(x);
  const auto& vg = t.val(gamma);
  const auto& vb = t.val(beta);
  if (vx.ndim() != 3 || vg.ndim() != 1 || vb.ndim() != 1 || vg.dim(0) != vx.dim(0) ||
      vb.dim(0) != vx.dim(0))
    throw std::invalid_argument("film: incompatible shapes");
  const int C = vx.dim(0);
  const int HW = vx.dim(1) * vx.dim(2);
  TensorT<S> y = vx;
  for (int c = 0; c < C; ++c) {
    const S scale = S(1) + vg.data[static_cast<size_t>(c)];
    const S shift = vb.data[static_cast<size_t>(c)];
    S* row = y.data.data() + static_cast<size_t>(c) * HW;
    for (int i = 0; i < HW; ++i) row[i] = row[i] * scale + shift;
  }
  return push_op(t, std::move(y), [x, gamma, beta, C, HW](int id) {
    return [x, gamma, beta, C, HW, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& vx = tp.val(x).data;
      const auto& vg = tp.val(gamma).data;
      auto& gx = tp.grad(x).data;
      auto& gg = tp.grad(gamma).data;
      auto& gb = tp.grad(beta).data;
      for (int c = 0; c < C; ++c) {
        const S scale = S(1) + vg[static_cast<size_t>(c)];
        const S* grow = g.data() + static_cast<size_t>(c) * HW;
        const S* xrow = vx.data() + static_cast<size_t>(c) * HW;
        S* gxrow = gx.data() + static_cast<size_t>(c) * HW;
        S sg = S(0), sb = S(0);
        for (int i = 0; i < HW; ++i) {
          gxrow[i] += grow[i] * scale;
          sg += grow[i] * xrow[i];
          sb += grow[i];
        }
        gg[static_cast<size_t>(c)] += sg;
        gb[static_cast<size_t>(c)] += sb;
      }
    };
  });
}

// Broadcast add of a per-channel bias vector onto [C,H,W].
template <class S>
int add_chan_bias(TapeT<S>& t, int x, int bias) {
  const auto& vx = t.val(x);
  const auto& vb = t.val(bias);
  if (vx.ndim() != 3 || vb.ndim() != 1 || vb.dim(0) != vx.dim(0))
    throw std::invalid_argument("add_chan_bias: incompatible shapes");
  const int C = vx.dim(0);
  const int HW = vx.dim(1) * vx.dim(2);
  TensorT<S> y = vx;
  for (int c = 0; c < C; ++c) {
    const S sh = vb.data[static_cast<size_t>(c)];
    S* row = y.data.data() + static_cast<size_t>(c) * HW;
    for (int i = 0; i < HW; ++i) row[i] += sh;
  }
  return push_op(t, std::move(y), [x, bias, C, HW](int id) {
    return [x, bias, C, HW, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      auto& gx = tp.grad(x).data;
      auto& gb = tp.grad(bias).data;
      for (int c = 0; c < C; ++c) {
        const S* grow = g.data() + static_cast<size_t>(c) * HW;
        S acc = S(0);
        for (int i = 0; i < HW; ++i) {
          gx[static_cast<size_t>(c) * HW + static_cast<size_t>(i)] += grow[i];
          acc += grow[i];
        }
        gb[static_cast<size_t>(c)] += acc;
      }
    };
  });
}

// ---- convolution ----

namespace detail {

// Gathers zero-padded k x k patches of x [C,H,W] into P [M, C*k*k] with
// M = Ho*Wo (pixel-major rows).
template <class S>
void im2col(const S* x, int C, int H, int W, int k, int stride, int Ho, int Wo,
            std::vector<S>& P) {
  const int K = C * k * k;
  const int pad = k / 2;
  P.assign(static_cast<size_t>(Ho) * Wo * K, S(0));
  for (int orow = 0; orow < Ho; ++orow)
    for (int ocol = 0; ocol < Wo; ++ocol) {
      S* dst = P.data() + (static_cast<size_t>(orow) * Wo + ocol) * K;
      for (int c = 0; c < C; ++c) {
        const S* plane = x + static_cast<size_t>(c) * H * W;
        for (int dr = 0; dr < k; ++dr) {
          const int r = orow * stride + dr - pad;
          for (int dc = 0; dc < k; ++dc) {
            const int col = ocol * stride + dc - pad;
            dst[(c * k + dr) * k + dc] =
                (r >= 0 && r < H && col >= 0 && col < W) ? plane[static_cast<size_t>(r) * W + col]
                                                         : S(0);
          }
        }
      }
    }
}

// Scatters patch-layout gradients back onto the input.
template <class S>
void col2im_acc(const std::vector<S>& dP, int C, int H, int W, int k, int stride, int Ho, int Wo,
                S* dx) {
  const int K = C * k * k;
  const int pad = k / 2;
  for (int orow = 0; orow < Ho; ++orow)
    for (int ocol = 0; ocol < Wo; ++ocol) {
      const S* src = dP.data() + (static_cast<size_t>(orow) * Wo + ocol) * K;
      for (int c = 0; c < C; ++c) {
        S* plane = dx + static_cast<size_t>(c) * H * W;
        for (int dr = 0; dr < k; ++dr) {
          const int r = orow * stride + dr - pad;
          if (r < 0 || r >= H) continue;
          for (int dc = 0; dc < k; ++dc) {
            const int col = ocol * stride + dc - pad;
            if (col < 0 || col >= W) continue;
            plane[static_cast<size_t>(r) * W + col] += src[(c * k + dr) * k + dc];
          }
        }
      }
    }
}

template <class S>
std::vector<S>& scratch(int which) {
  static thread_local std::vector<S> bufs[4];
  return bufs[which];
}

}  // namespace detail

// 2-D convolution of x [Ci,H,W] with w [Co,Ci,k,k] and bias b [Co] (-1 for
// none). k in {1,3}, stride in {1,2}, zero padding k/2 ("same" geometry).
template <class S>
int conv2d(TapeT<S>& t, int x, int w, int b, int stride) {
  const auto& vx = t.val(x);
  const auto& vw = t.val(w);
  if (vx.ndim() != 3 || vw.ndim() != 4)
    throw std::invalid_argument("conv2d: expect x [C,H,W], w [Co,Ci,k,k]");
  const int Ci = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  const int Co = vw.dim(0), k = vw.dim(2);
  if (vw.dim(1) != Ci || vw.dim(3) != k || (k != 1 && k != 3) || (stride != 1 && stride != 2))
    throw std::invalid_argument("conv2d: unsupported geometry");
  const int pad = k / 2;
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const int M = Ho * Wo, K = Ci * k * k;

  auto& P = detail::scratch<S>(0);
  detail::im2col(vx.data.data(), Ci, H, W, k, stride, Ho, Wo, P);

  auto& Wt = detail::scratch<S>(1);  // [K, Co]
  Wt.assign(static_cast<size_t>(K) * Co, S(0));
  transpose(vw.data.data(), Wt.data(), Co, K);

  auto& Ytmp = detail::scratch<S>(2);  // [M, Co]
  Ytmp.assign(static_cast<size_t>(M) * Co, S(0));
  matmul_acc(P.data(), Wt.data(), Ytmp.data(), M, K, Co);

  TensorT<S> y({Co, Ho, Wo});
  for (int m = 0; m < M; ++m) {
    const S* row = Ytmp.data() + static_cast<size_t>(m) * Co;
    for (int c = 0; c < Co; ++c) y.data[static_cast<size_t>(c) * M + m] = row[c];
  }
  if (b >= 0) {
    const auto& vb = t.val(b);
    if (vb.ndim() != 1 || vb.dim(0) != Co) throw std::invalid_argument("conv2d: bad bias");
    for (int c = 0; c < Co; ++c) {
      const S bias = vb.data[static_cast<size_t>(c)];
      S* plane = y.data.data() + static_cast<size_t>(c) * M;
      for (int m = 0; m < M; ++m) plane[m] += bias;
    }
  }

  return push_op(t, std::move(y), [x, w, b, stride, Ci, H, W, Co, k, Ho, Wo, M, K](int id) {
    return [x, w, b, stride, Ci, H, W, Co, k, Ho, Wo, M, K, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;  // [Co, M] channel-major
      const auto& vx = tp.val(x).data;
      const auto& vw = tp.val(w).data;

      // dY in pixel-major [M, Co].
      auto& dY = detail::scratch<S>(3);
      dY.assign(static_cast<size_t>(M) * Co, S(0));
      for (int c = 0; c < Co; ++c) {
        const S* plane = g.data() + static_cast<size_t>(c) * M;
        for (int m = 0; m < M; ++m) dY[static_cast<size_t>(m) * Co + c] = plane[m];
      }

      // Patches are rebuilt: cheaper than keeping them alive per node.
      auto& P = detail::scratch<S>(0);
      detail::im2col(vx.data(), Ci, H, W, k, stride, Ho, Wo, P);

      // dW[co,kk] = sum_m dY[m,co] * P[m,kk]
      auto& gw = tp.grad(w).data;
      for (int m = 0; m < M; ++m) {
        const S* drow = dY.data() + static_cast<size_t>(m) * Co;
        const S* prow = P.data() + static_cast<size_t>(m) * K;
        for (int c = 0; c < Co; ++c) {
          const S gv = drow[c];
          S* wrow = gw.data() + static_cast<size_t>(c) * K;
          for (int kk = 0; kk < K; ++kk) wrow[kk] += gv * prow[kk];
        }
      }

      // dP [M,K] = dY [M,Co] x Wflat [Co,K]; scatter back to dx.
      auto& dP = detail::scratch<S>(1);
      dP.assign(static_cast<size_t>(M) * K, S(0));
      matmul_acc(dY.data(), vw.data(), dP.data(), M, Co, K);
      detail::col2im_acc(dP, Ci, H, W, k, stride, Ho, Wo, tp.grad(x).data.data());

      if (b >= 0) {
        auto& gb = tp.grad(b).data;
        for (int m = 0; m < M; ++m) {
          const S* drow = dY.data() + static_cast<size_t>(m) * Co;
          for (int c = 0; c < Co; ++c) gb[static_cast<size_t>(c)] += drow[c];
        }
      }
    };
  });
}

// ---- attention pooling over conditioning tokens ----

// f [C,Hb,Wb] queries attend over tokens z [N,D]:
//   q_i = Wq f_i, k_n = Wk z_n, v_n = Wv z_n,
//   a_i = softmax_n(q_i . k_n / sqrt(D)),  out_i = sum_n a_in v_n.
// Wq [D,C], Wk [D,D], Wv [C,D]. The caller adds the residual.
template <class S>
int token_attention(TapeT<S>& t, int f, int z, int wq, int wk, int wv) {
  const auto& vf = t.val(f);
  const auto& vz = t.val(z);
  const auto& vwq = t.val(wq);
  const auto& vwk = t.val(wk);
  const auto& vwv = t.val(wv);
  if (vf.ndim() != 3 || vz.ndim() != 2) throw std::invalid_argument("token_attention: bad inputs");
  const int C = vf.dim(0), M = vf.dim(1) * vf.dim(2);
  const int N = vz.dim(0), D = vz.dim(1);
  if (vwq.shape != std::vector<int>{D, C} || vwk.shape != std::vector<int>{D, D} ||
      vwv.shape != std::vector<int>{C, D})
    throw std::invalid_argument("token_attention: bad projection shapes");

  const S scale = S(1) / std::sqrt(static_cast<S>(D));

  // K' [N,D], V [N,C]
  std::vector<S> Kt(static_cast<size_t>(N) * D, S(0)), Vt(static_cast<size_t>(N) * C, S(0));
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d) {
      S acc = S(0);
      for (int e = 0; e < D; ++e)
        acc += vwk.data[static_cast<size_t>(d) * D + e] * vz.data[static_cast<size_t>(n) * D + e];
      Kt[static_cast<size_t>(n) * D + d] = acc;
    }
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      S acc = S(0);
      for (int e = 0; e < D; ++e)
        acc += vwv.data[static_cast<size_t>(c) * D + e] * vz.data[static_cast<size_t>(n) * D + e];
      Vt[static_cast<size_t>(n) * C + c] = acc;
    }

  // Attention weights per pixel (kept for backward).
  auto attn = std::make_shared<std::vector<S>>(static_cast<size_t>(M) * N, S(0));
  auto Q = std::make_shared<std::vector<S>>(static_cast<size_t>(M) * D, S(0));
  TensorT<S> y(vf.shape);
  std::vector<S> fi(static_cast<size_t>(C));
  for (int m = 0; m < M; ++m) {
    for (int c = 0; c < C; ++c) fi[static_cast<size_t>(c)] = vf.data[static_cast<size_t>(c) * M + m];
    S* q = Q->data() + static_cast<size_t>(m) * D;
    for (int d = 0; d < D; ++d) {
      S acc = S(0);
      const S* row = vwq.data.data() + static_cast<size_t>(d) * C;
      for (int c = 0; c < C; ++c) acc += row[c] * fi[static_cast<size_t>(c)];
      q[d] = acc;
    }
    S* a = attn->data() + static_cast<size_t>(m) * N;
    S mx = -std::numeric_limits<S>::infinity();
    for (int n = 0; n < N; ++n) {
      S acc = S(0);
      const S* kr = Kt.data() + static_cast<size_t>(n) * D;
      for (int d = 0; d < D; ++d) acc += q[d] * kr[d];
      a[n] = acc * scale;
      mx = std::max(mx, a[n]);
    }
    S norm = S(0);
    for (int n = 0; n < N; ++n) {
      a[n] = std::exp(a[n] - mx);
      norm += a[n];
    }
    for (int n = 0; n < N; ++n) a[n] /= norm;
    for (int c = 0; c < C; ++c) {
      S acc = S(0);
      for (int n = 0; n < N; ++n) acc += a[n] * Vt[static_cast<size_t>(n) * C + c];
      y.data[static_cast<size_t>(c) * M + m] = acc;
    }
  }

  return push_op(t, std::move(y), [=](int id) {
    return [=](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;  // [C, M]
      const auto& vf2 = tp.val(f).data;
      const auto& vz2 = tp.val(z).data;
      const auto& q_wq = tp.val(wq).data;
      const auto& q_wk = tp.val(wk).data;
      const auto& q_wv = tp.val(wv).data;
      auto& gf = tp.grad(f).data;
      auto& gz = tp.grad(z).data;
      auto& gwq = tp.grad(wq).data;
      auto& gwk = tp.grad(wk).data;
      auto& gwv = tp.grad(wv).data;

      // Recompute K', V.
      std::vector<S> Kt2(static_cast<size_t>(N) * D, S(0)), Vt2(static_cast<size_t>(N) * C, S(0));
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) {
          S acc = S(0);
          for (int e = 0; e < D; ++e)
            acc += q_wk[static_cast<size_t>(d) * D + e] * vz2[static_cast<size_t>(n) * D + e];
          Kt2[static_cast<size_t>(n) * D + d] = acc;
        }
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          S acc = S(0);
          for (int e = 0; e < D; ++e)
            acc += q_wv[static_cast<size_t>(c) * D + e] * vz2[static_cast<size_t>(n) * D + e];
          Vt2[static_cast<size_t>(n) * C + c] = acc;
        }

      std::vector<S> dK(static_cast<size_t>(N) * D, S(0)), dV(static_cast<size_t>(N) * C, S(0));
      std::vector<S> dq(static_cast<size_t>(D)), da(static_cast<size_t>(N)),
          ds(static_cast<size_t>(N)), gi(static_cast<size_t>(C)), fi2(static_cast<size_t>(C));
      for (int m = 0; m < M; ++m) {
        const S* a = attn->data() + static_cast<size_t>(m) * N;
        const S* q = Q->data() + static_cast<size_t>(m) * D;
        for (int c = 0; c < C; ++c) gi[static_cast<size_t>(c)] = g[static_cast<size_t>(c) * M + m];
        // dV and da
        S dot = S(0);
        for (int n = 0; n < N; ++n) {
          S acc = S(0);
          for (int c = 0; c < C; ++c) acc += gi[static_cast<size_t>(c)] * Vt2[static_cast<size_t>(n) * C + c];
          da[static_cast<size_t>(n)] = acc;
          dot += a[n] * acc;
          for (int c = 0; c < C; ++c)
            dV[static_cast<size_t>(n) * C + c] += a[n] * gi[static_cast<size_t>(c)];
        }
        // softmax backward, then into q and K'.
        for (int n = 0; n < N; ++n) ds[static_cast<size_t>(n)] = a[n] * (da[static_cast<size_t>(n)] - dot) * scale;
        for (int d = 0; d < D; ++d) {
          S acc = S(0);
          for (int n = 0; n < N; ++n) acc += ds[static_cast<size_t>(n)] * Kt2[static_cast<size_t>(n) * D + d];
          dq[static_cast<size_t>(d)] = acc;
        }
        for (int n = 0; n < N; ++n)
          for (int d = 0; d < D; ++d)
            dK[static_cast<size_t>(n) * D + d] += ds[static_cast<size_t>(n)] * q[d];
        // dWq and df.
        for (int c = 0; c < C; ++c) fi2[static_cast<size_t>(c)] = vf2[static_cast<size_t>(c) * M + m];
        for (int d = 0; d < D; ++d) {
          const S dv = dq[static_cast<size_t>(d)];
          const S* wrow = q_wq.data() + static_cast<size_t>(d) * C;
          S* gwrow = gwq.data() + static_cast<size_t>(d) * C;
          for (int c = 0; c < C; ++c) {
            gwrow[c] += dv * fi2[static_cast<size_t>(c)];
            gf[static_cast<size_t>(c) * M + m] += dv * wrow[c];
          }
        }
      }
      // Token-side projections.
      for (int n = 0; n < N; ++n) {
        for (int d = 0; d < D; ++d) {
          const S dv = dK[static_cast<size_t>(n) * D + d];
          const S* wrow = q_wk.data() + static_cast<size_t>(d) * D;
          S* gwrow = gwk.data() + static_cast<size_t>(d) * D;
          for (int e = 0; e < D; ++e) {
            gwrow[e] += dv * vz2[static_cast<size_t>(n) * D + e];
            gz[static_cast<size_t>(n) * D + e] += dv * wrow[e];
          }
        }
        for (int c = 0; c < C; ++c) {
          const S dv = dV[static_cast<size_t>(n) * C + c];
          const S* wrow = q_wv.data() + static_cast<size_t>(c) * D;
          S* gwrow = gwv.data() + static_cast<size_t>(c) * D;
          for (int e = 0; e < D; ++e) {
            gwrow[e] += dv * vz2[static_cast<size_t>(n) * D + e];
            gz[static_cast<size_t>(n) * D + e] += dv * wrow[e];
          }
        }
      }
    };
  });
}

// ---- reductions / distributions ----

template <class S>
int sum_all(TapeT<S>& t, int a) {
  S acc = S(0);
  for (S v : t.val(a).data) acc += v;
  TensorT<S> y({1});
  y.data[0] = acc;
  return push_op(t, std::move(y), [a](int id) {
    return [a, id](TapeT<S>& tp) {
      const S g = tp.grad(id).data[0];
      auto& ga = tp.grad(a).data;
      for (S& v : ga) v += g;
    };
  });
}

template <class S>
int mean_all(TapeT<S>& t, int a) {
  const size_t n = t.val(a).data.size();
  S acc = S(0);
  for (S v : t.val(a).data) acc += v;
  TensorT<S> y({1});
  y.data[0] = acc / static_cast<S>(n);
  return push_op(t, std::move(y), [a, n](int id) {
    return [a, n, id](TapeT<S>& tp) {
      const S g = tp.grad(id).data[0] / static_cast<S>(n);
      auto& ga = tp.grad(a).data;
      for (S& v : ga) v += g;
    };
  });
}

template <class S>
int dot_all(TapeT<S>& t, int a, int b) {
  detail::check_same_shape(t, a, b, "dot_all");
  const auto& va = t.val(a).data;
  const auto& vb = t.val(b).data;
  S acc = S(0);
  for (size_t i = 0; i < va.size(); ++i) acc += va[i] * vb[i];
  TensorT<S> y({1});
  y.data[0] = acc;
  return push_op(t, std::move(y), [a, b](int id) {
    return [a, b, id](TapeT<S>& tp) {
      const S g = tp.grad(id).data[0];
      const auto& va2 = tp.val(a).data;
      const auto& vb2 = tp.val(b).data;
      auto& ga = tp.grad(a).data;
      auto& gb = tp.grad(b).data;
      for (size_t i = 0; i < va2.size(); ++i) {
        ga[i] += g * vb2[i];
        gb[i] += g * va2[i];
      }
    };
  });
}

// Softmax over every element (any shape), with max subtraction.
template <class S>
int softmax_all(TapeT<S>& t, int a, double temp) {
  if (temp <= 0.0) throw std::invalid_argument("softmax_all: temperature must be > 0");
  TensorT<S> y = t.val(a);
  S mx = y.data[0];
  for (S v : y.data) mx = std::max(mx, v);
  S norm = S(0);
  for (S& v : y.data) {
    v = std::exp((v - mx) / static_cast<S>(temp));
    norm += v;
  }
  for (S& v : y.data) v /= norm;
  return push_op(t, std::move(y), [a, temp](int id) {
    return [a, temp, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      const auto& y2 = tp.val(id).data;
      auto& ga = tp.grad(a).data;
      S dot = S(0);
      for (size_t i = 0; i < g.size(); ++i) dot += g[i] * y2[i];
      const S inv_t = S(1) / static_cast<S>(temp);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += y2[i] * (g[i] - dot) * inv_t;
    };
  });
}

// Maximum over a list of scalar nodes; gradient flows only to the argmax
// (first on ties).
template <class S>
int max_of(TapeT<S>& t, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("max_of: empty list");
  int best = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (t.val(ids[i]).numel() != 1) throw std::invalid_argument("max_of: non-scalar input");
    if (t.val(ids[i]).data[0] > t.val(ids[static_cast<size_t>(best)]).data[0])
      best = static_cast<int>(i);
  }
  TensorT<S> y({1});
  y.data[0] = t.val(ids[static_cast<size_t>(best)]).data[0];
  const int src = ids[static_cast<size_t>(best)];
  return push_op(t, std::move(y), [src](int id) {
    return [src, id](TapeT<S>& tp) { tp.grad(src).data[0] += tp.grad(id).data[0]; };
  });
}

// Weighted sum of scalar nodes (loss aggregation).
template <class S>
int weighted_sum(TapeT<S>& t, const std::vector<int>& ids, const std::vector<double>& w) {
  if (ids.size() != w.size() || ids.empty())
    throw std::invalid_argument("weighted_sum: bad arguments");
  S acc = S(0);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (t.val(ids[i]).numel() != 1) throw std::invalid_argument("weighted_sum: non-scalar input");
    acc += static_cast<S>(w[i]) * t.val(ids[i]).data[0];
  }
  TensorT<S> y({1});
  y.data[0] = acc;
  auto idsc = ids;
  auto wc = w;
  return push_op(t, std::move(y), [idsc, wc](int id) {
    return [idsc, wc, id](TapeT<S>& tp) {
      const S g = tp.grad(id).data[0];
      for (size_t i = 0; i < idsc.size(); ++i)
        tp.grad(idsc[i]).data[0] += static_cast<S>(wc[i]) * g;
    };
  });
}

// ---- fixed-kernel image gradients (edge-clamped 3x3 Sobel) ----

namespace detail {
template <class S>
int sobel(TapeT<S>& t, int a, bool horizontal) {
  const auto& v = t.val(a);
  if (v.ndim() != 2) throw std::invalid_argument("sobel: expect [H,W]");
  const int H = v.dim(0), W = v.dim(1);
  // kx detects variation along columns, ky along rows.
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  const int(*kk)[3] = horizontal ? kx : ky;
  TensorT<S> y({H, W});
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      S acc = S(0);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          int rr = std::clamp(r + dr, 0, H - 1);
          int cc = std::clamp(c + dc, 0, W - 1);
          acc += static_cast<S>(kk[dr + 1][dc + 1]) * v.data[static_cast<size_t>(rr) * W + cc];
        }
      y.data[static_cast<size_t>(r) * W + c] = acc;
    }
  return push_op(t, std::move(y), [a, H, W, kk](int id) {
    return [a, H, W, kk, id](TapeT<S>& tp) {
      const auto& g = tp.grad(id).data;
      auto& ga = tp.grad(a).data;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          const S gv = g[static_cast<size_t>(r) * W + c];
          if (gv == S(0)) continue;
          for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
              int rr = std::clamp(r + dr, 0, H - 1);
              int cc = std::clamp(c + dc, 0, W - 1);
              ga[static_cast<size_t>(rr) * W + cc] += static_cast<S>(kk[dr + 1][dc + 1]) * gv;
            }
        }
    };
  });
}
}  // namespace detail

template <class S>
int sobel_x(TapeT<S>& t, int a) {
  return detail::sobel(t, a, true);
}

template <class S>
int sobel_y(TapeT<S>& t, int a) {
  return detail::sobel(t, a, false);
}

using Tape = TapeT<float>;
using Tensor = TensorT<float>;

}  // namespace travdiff::nn
