#pragma once

// Transformer building blocks with hand-written backward passes. Forward
// functions are const and take an optional cache; passing a cache records
// the activations the matching backward call needs. Inference passes none
// and touches no shared state.

#include <cstdint>
#include <string>
#include <vector>

#include "mtseg/random.hpp"
#include "mtseg/tensor.hpp"

namespace mtseg::nn {

// Dropout is active only when an RNG is supplied.
struct ForwardMode {
  Rng* rng = nullptr;
  double dropout = 0.0;
  double attention_dropout = 0.0;
  bool training() const { return rng != nullptr; }
};

// Applies inverted dropout in place and records the per-element scale.
template <typename T>
void dropout_forward(std::span<T> x, double p, const ForwardMode& mode, std::vector<T>* mask);
template <typename T>
void dropout_backward(std::span<T> dx, const std::vector<T>& mask);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), seeded per parameter name.
template <typename T>
void init_uniform_fan_in(Param<T>& p, int fan_in, std::uint64_t seed);

template <typename T>
struct Linear {
  Param<T> weight;  // out x in
  Param<T> bias;    // 1 x out
  bool has_bias = true;

  void init(const std::string& name, int in, int out, bool with_bias, std::uint64_t seed);
  int in_features() const { return weight.value.cols; }
  int out_features() const { return weight.value.rows; }

  void forward(const Matrix<T>& x, Matrix<T>& y) const;
  // Accumulates weight/bias gradients; writes dx when non-null.
  void backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>* dx, bool accumulate_dx = false);

  template <typename F>
  void visit(F&& f) {
    f(weight);
    if (has_bias) f(bias);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight);
    if (has_bias) f(bias);
  }
};

template <typename T>
struct LayerNorm {
  Param<T> gamma;
  Param<T> beta;
  static constexpr double kEps = 1e-5;

  struct Cache {
    Matrix<T> xhat;
    std::vector<T> rstd;
  };

  void init(const std::string& name, int dim);
  void forward(const Matrix<T>& x, Matrix<T>& y, Cache* cache) const;
  void backward(const Matrix<T>& dy, const Cache& cache, Matrix<T>& dx, bool accumulate_dx);

  template <typename F>
  void visit(F&& f) {
    f(gamma);
    f(beta);
  }
  template <typename F>
  void visit(F&& f) const {
    f(gamma);
    f(beta);
  }
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, o;
  int heads = 1;

  struct Cache {
    Matrix<T> xq, xkv, Q, K, V, ctx;
    std::vector<T> probs;  // softmax output per (sequence, head) block
    std::vector<T> drop;   // attention dropout scales, same layout as probs
    std::vector<std::size_t> block_offsets;
  };

  void init(const std::string& name, int dim, int num_heads, std::uint64_t seed);
  int dim() const { return q.out_features(); }
  int head_dim() const { return dim() / heads; }

  // Queries attend within their own sequence of `lk`; sequence i of `lq`
  // pairs with sequence i of `lk`. Causal masking needs lq == lk.
  void forward(const Matrix<T>& xq, const SeqLayout& lq, const Matrix<T>& xkv,
               const SeqLayout& lk, bool causal, Matrix<T>& out, Cache* cache,
               const ForwardMode& mode) const;
  // Overwrites dxq and dxkv.
  void backward(const Matrix<T>& dout, const Cache& cache, const SeqLayout& lq,
                const SeqLayout& lk, bool causal, Matrix<T>& dxq, Matrix<T>& dxkv);

  // Single-query attention against the first `len` rows of projected keys
  // and values; used by incremental decoding. `q_row` is already projected.
  void attend(const T* q_row, const Matrix<T>& keys, const Matrix<T>& values, int len,
              T* ctx_row, std::vector<T>& scratch) const;

  template <typename F>
  void visit(F&& f) {
    q.visit(f);
    k.visit(f);
    v.visit(f);
    o.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    q.visit(f);
    k.visit(f);
    v.visit(f);
    o.visit(f);
  }
};

template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;

  struct Cache {
    Matrix<T> x, hidden;
  };

  void init(const std::string& name, int dim, int hidden_dim, std::uint64_t seed);
  void forward(const Matrix<T>& x, Matrix<T>& y, Cache* cache) const;
  void backward(const Matrix<T>& dy, Cache& cache, Matrix<T>& dx);

  template <typename F>
  void visit(F&& f) {
    fc1.visit(f);
    fc2.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    fc1.visit(f);
    fc2.visit(f);
  }
};

template <typename T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src);

}  // namespace mtseg::nn
