#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace travdiff::nn {

// Dense row-major tensor. Production code instantiates S = float (the
// on-disk dtype is f32le); gradient-check tests instantiate S = double.
template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> sh, S fill = S(0)) : shape(std::move(sh)) {
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& sh) {
    int64_t n = 1;
    for (int d : sh) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

// C[M,N] += A[M,K] * B[K,N], all row-major. The j-inner loop is contiguous
// in both C and B so compilers vectorize it without reassociation licenses.
template <class S>
inline void matmul_acc(const S* A, const S* B, S* C, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const S* a = A + static_cast<size_t>(i) * K;
    S* c = C + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const S av = a[k];
      const S* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// B[N,M] = A[M,N] transposed.
template <class S>
inline void transpose(const S* A, S* B, int M, int N) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) B[static_cast<size_t>(j) * M + i] = A[static_cast<size_t>(i) * N + j];
}

}  // namespace travdiff::nn
