#include "mtseg/layers.hpp"

#include <cmath>
#include <cstring>

#include "mtseg/kernels.hpp"

namespace mtseg::nn {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

template <typename T>
void dropout_forward(std::span<T> x, double p, const ForwardMode& mode, std::vector<T>* mask) {
  if (!mode.training() || p <= 0.0) {
    if (mask) mask->clear();
    return;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  if (mask) mask->resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = uniform_unit(*mode.rng) < p ? T(0) : keep_scale;
    x[i] *= s;
    if (mask) (*mask)[i] = s;
  }
}

template <typename T>
void dropout_backward(std::span<T> dx, const std::vector<T>& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
}

template <typename T>
void init_uniform_fan_in(Param<T>& p, int fan_in, std::uint64_t seed) {
  Rng rng(seed ^ fnv1a(p.name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& w : p.value.data) w = static_cast<T>((2.0 * uniform_unit(rng) - 1.0) * bound);
}

template <typename T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// ---------------------------------------------------------------- Linear

template <typename T>
void Linear<T>::init(const std::string& name, int in, int out, bool with_bias, std::uint64_t seed) {
  has_bias = with_bias;
  weight.allocate(name + ".weight", out, in);
  init_uniform_fan_in(weight, in, seed);
  if (has_bias) bias.allocate(name + ".bias", 1, out);
}

template <typename T>
void Linear<T>::forward(const Matrix<T>& x, Matrix<T>& y) const {
  const int n = x.rows;
  const int in = in_features();
  const int out = out_features();
  y.resize(n, out);
  if (n == 0) return;
  kernels::gemm_nt<T>(n, out, in, x.data.data(), in, weight.value.data.data(), in, y.data.data(), out);
  if (has_bias) {
    for (int r = 0; r < n; ++r) kernels::axpy<T>(out, T(1), bias.value.data.data(), y.row(r));
  }
}

template <typename T>
void Linear<T>::backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>* dx, bool accumulate_dx) {
  const int n = x.rows;
  const int in = in_features();
  const int out = out_features();
  if (n > 0) {
    kernels::gemm_tn<T>(out, in, n, dy.data.data(), out, x.data.data(), in, weight.grad.data.data(), in,
                        true);
    if (has_bias) {
      for (int r = 0; r < n; ++r) kernels::axpy<T>(out, T(1), dy.row(r), bias.grad.data.data());
    }
  }
  if (dx) {
    if (!accumulate_dx) dx->resize(n, in);
    if (n > 0)
      kernels::gemm_nn<T>(n, in, out, dy.data.data(), out, weight.value.data.data(), in, dx->data.data(),
                          in, accumulate_dx);
  }
}

// ------------------------------------------------------------- LayerNorm

template <typename T>
void LayerNorm<T>::init(const std::string& name, int dim) {
  gamma.allocate(name + ".gamma", 1, dim);
  beta.allocate(name + ".beta", 1, dim);
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), T(1));
}

template <typename T>
void LayerNorm<T>::forward(const Matrix<T>& x, Matrix<T>& y, Cache* cache) const {
  const int n = x.rows;
  const int d = x.cols;
  y.resize(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->rstd.assign(static_cast<std::size_t>(n), T(0));
  }
  const T* g = gamma.value.data.data();
  const T* b = beta.value.data.data();
  for (int r = 0; r < n; ++r) {
    const T* xr = x.row(r);
    T mean = 0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kEps));
    T* yr = y.row(r);
    T* xh = cache ? cache->xhat.row(r) : nullptr;
    for (int c = 0; c < d; ++c) {
      const T h = (xr[c] - mean) * rstd;
      if (xh) xh[c] = h;
      yr[c] = h * g[c] + b[c];
    }
    if (cache) cache->rstd[static_cast<std::size_t>(r)] = rstd;
  }
}

template <typename T>
void LayerNorm<T>::backward(const Matrix<T>& dy, const Cache& cache, Matrix<T>& dx, bool accumulate_dx) {
  const int n = dy.rows;
  const int d = dy.cols;
  if (!accumulate_dx) dx.resize(n, d);
  const T* g = gamma.value.data.data();
  T* dg = gamma.grad.data.data();
  T* db = beta.grad.data.data();
  std::vector<T> dxhat(static_cast<std::size_t>(d));
  for (int r = 0; r < n; ++r) {
    const T* dyr = dy.row(r);
    const T* xh = cache.xhat.row(r);
    T sum_dxhat = 0;
    T sum_dxhat_xhat = 0;
    for (int c = 0; c < d; ++c) {
      dg[c] += dyr[c] * xh[c];
      db[c] += dyr[c];
      dxhat[static_cast<std::size_t>(c)] = dyr[c] * g[c];
      sum_dxhat += dxhat[static_cast<std::size_t>(c)];
      sum_dxhat_xhat += dxhat[static_cast<std::size_t>(c)] * xh[c];
    }
    const T inv_d = T(1) / static_cast<T>(d);
    const T rstd = cache.rstd[static_cast<std::size_t>(r)];
    T* dxr = dx.row(r);
    for (int c = 0; c < d; ++c) {
      const T v = rstd * (dxhat[static_cast<std::size_t>(c)] - sum_dxhat * inv_d - xh[c] * sum_dxhat_xhat * inv_d);
      dxr[c] = accumulate_dx ? dxr[c] + v : v;
    }
  }
}

// ---------------------------------------------------- MultiHeadAttention

template <typename T>
void MultiHeadAttention<T>::init(const std::string& name, int dim, int num_heads, std::uint64_t seed) {
  heads = num_heads;
  q.init(name + ".q", dim, dim, true, seed);
  k.init(name + ".k", dim, dim, true, seed);
  v.init(name + ".v", dim, dim, true, seed);
  o.init(name + ".o", dim, dim, true, seed);
}

template <typename T>
void MultiHeadAttention<T>::forward(const Matrix<T>& xq, const SeqLayout& lq, const Matrix<T>& xkv,
                                    const SeqLayout& lk, bool causal, Matrix<T>& out, Cache* cache,
                                    const ForwardMode& mode) const {
  const int d = dim();
  const int dh = head_dim();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Cache local;
  Cache& c = cache ? *cache : local;
  if (cache) {
    c.xq = xq;
    c.xkv = xkv;
  }
  q.forward(xq, c.Q);
  k.forward(xkv, c.K);
  v.forward(xkv, c.V);
  c.ctx.resize(xq.rows, d);

  std::size_t total = 0;
  c.block_offsets.clear();
  for (int s = 0; s < lq.count(); ++s) {
    for (int h = 0; h < heads; ++h) {
      c.block_offsets.push_back(total);
      total += static_cast<std::size_t>(lq.length(s)) * lk.length(s);
    }
  }
  c.probs.assign(total, T(0));
  const bool drop_attn = mode.training() && mode.attention_dropout > 0.0;
  if (drop_attn) c.drop.assign(total, T(0));
  else c.drop.clear();

  for (int s = 0; s < lq.count(); ++s) {
    const int nq = lq.length(s);
    const int nk = lk.length(s);
    const int q0 = lq.begin(s);
    const int k0 = lk.begin(s);
    for (int h = 0; h < heads; ++h) {
      T* P = c.probs.data() + c.block_offsets[static_cast<std::size_t>(s * heads + h)];
      kernels::gemm_nt<T>(nq, nk, dh, c.Q.row(q0) + h * dh, d, c.K.row(k0) + h * dh, d, P, nk);
      for (int i = 0; i < nq; ++i) {
        T* row = P + static_cast<std::size_t>(i) * nk;
        const int allowed = causal ? std::min(i + 1, nk) : nk;
        for (int j = 0; j < allowed; ++j) row[j] *= scale;
        kernels::softmax<T>(allowed, row);
        for (int j = allowed; j < nk; ++j) row[j] = T(0);
      }
      const T* Pv = P;
      std::vector<T> dropped;
      if (drop_attn) {
        T* D = c.drop.data() + c.block_offsets[static_cast<std::size_t>(s * heads + h)];
        dropped.assign(P, P + static_cast<std::size_t>(nq) * nk);
        const T keep = static_cast<T>(1.0 / (1.0 - mode.attention_dropout));
        for (std::size_t i = 0; i < dropped.size(); ++i) {
          D[i] = uniform_unit(*mode.rng) < mode.attention_dropout ? T(0) : keep;
          dropped[i] *= D[i];
        }
        Pv = dropped.data();
      }
      kernels::gemm_nn<T>(nq, dh, nk, Pv, nk, c.V.row(k0) + h * dh, d, c.ctx.row(q0) + h * dh, d);
    }
  }
  o.forward(c.ctx, out);
}

template <typename T>
void MultiHeadAttention<T>::backward(const Matrix<T>& dout, const Cache& c, const SeqLayout& lq,
                                     const SeqLayout& lk, bool causal, Matrix<T>& dxq, Matrix<T>& dxkv) {
  (void)causal;  // masked probabilities are exact zeros, so their gradients vanish
  const int d = dim();
  const int dh = head_dim();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Matrix<T> dctx;
  o.backward(c.ctx, dout, &dctx);
  Matrix<T> dQ(c.Q.rows, d), dK(c.K.rows, d), dV(c.V.rows, d);
  std::vector<T> dP, Pd;
  for (int s = 0; s < lq.count(); ++s) {
    const int nq = lq.length(s);
    const int nk = lk.length(s);
    const int q0 = lq.begin(s);
    const int k0 = lk.begin(s);
    const std::size_t block = static_cast<std::size_t>(nq) * nk;
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = c.block_offsets[static_cast<std::size_t>(s * heads + h)];
      const T* P = c.probs.data() + off;
      const T* D = c.drop.empty() ? nullptr : c.drop.data() + off;
      dP.assign(block, T(0));
      // dP_dropped = dctx V^T
      kernels::gemm_nt<T>(nq, nk, dh, dctx.row(q0) + h * dh, d, c.V.row(k0) + h * dh, d, dP.data(), nk);
      // dV += P_dropped^T dctx
      const T* Pv = P;
      if (D) {
        Pd.assign(P, P + block);
        for (std::size_t i = 0; i < block; ++i) {
          Pd[i] *= D[i];
          dP[i] *= D[i];
        }
        Pv = Pd.data();
      }
      kernels::gemm_tn<T>(nk, dh, nq, Pv, nk, dctx.row(q0) + h * dh, d, dV.row(k0) + h * dh, d, true);
      // softmax backward, then the 1/sqrt(dh) scale
      for (int i = 0; i < nq; ++i) {
        T* g = dP.data() + static_cast<std::size_t>(i) * nk;
        const T* p = P + static_cast<std::size_t>(i) * nk;
        const T inner = kernels::dot<T>(nk, g, p);
        for (int j = 0; j < nk; ++j) g[j] = p[j] * (g[j] - inner) * scale;
      }
      kernels::gemm_nn<T>(nq, dh, nk, dP.data(), nk, c.K.row(k0) + h * dh, d, dQ.row(q0) + h * dh, d, true);
      kernels::gemm_tn<T>(nk, dh, nq, dP.data(), nk, c.Q.row(q0) + h * dh, d, dK.row(k0) + h * dh, d, true);
    }
  }
  q.backward(c.xq, dQ, &dxq);
  k.backward(c.xkv, dK, &dxkv);
  v.backward(c.xkv, dV, &dxkv, true);
}

template <typename T>
void MultiHeadAttention<T>::attend(const T* q_row, const Matrix<T>& keys, const Matrix<T>& values, int len,
                                   T* ctx_row, std::vector<T>& scratch) const {
  const int d = dim();
  const int dh = head_dim();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  scratch.resize(static_cast<std::size_t>(len));
  for (int h = 0; h < heads; ++h) {
    kernels::gemm_nt<T>(1, len, dh, q_row + h * dh, d, keys.data.data() + h * dh, d, scratch.data(), len);
    for (int j = 0; j < len; ++j) scratch[static_cast<std::size_t>(j)] *= scale;
    kernels::softmax<T>(len, scratch.data());
    kernels::gemm_nn<T>(1, dh, len, scratch.data(), len, values.data.data() + h * dh, d, ctx_row + h * dh, d);
  }
}

// ------------------------------------------------------------ FeedForward

template <typename T>
void FeedForward<T>::init(const std::string& name, int dim, int hidden_dim, std::uint64_t seed) {
  fc1.init(name + ".fc1", dim, hidden_dim, true, seed);
  fc2.init(name + ".fc2", hidden_dim, dim, true, seed);
}

template <typename T>
void FeedForward<T>::forward(const Matrix<T>& x, Matrix<T>& y, Cache* cache) const {
  Matrix<T> local;
  Matrix<T>& hidden = cache ? cache->hidden : local;
  fc1.forward(x, hidden);
  for (auto& h : hidden.data) h = h > T(0) ? h : T(0);
  fc2.forward(hidden, y);
  if (cache) cache->x = x;
}

template <typename T>
void FeedForward<T>::backward(const Matrix<T>& dy, Cache& cache, Matrix<T>& dx) {
  Matrix<T> dhidden;
  fc2.backward(cache.hidden, dy, &dhidden);
  for (std::size_t i = 0; i < dhidden.data.size(); ++i)
    if (cache.hidden.data[i] <= T(0)) dhidden.data[i] = T(0);
  fc1.backward(cache.x, dhidden, &dx);
}

#define MTSEG_INSTANTIATE(T)                                                              \
  template void dropout_forward<T>(std::span<T>, double, const ForwardMode&, std::vector<T>*); \
  template void dropout_backward<T>(std::span<T>, const std::vector<T>&);                \
  template void init_uniform_fan_in<T>(Param<T>&, int, std::uint64_t);                   \
  template void add_inplace<T>(Matrix<T>&, const Matrix<T>&);                            \
  template struct Linear<T>;                                                              \
  template struct LayerNorm<T>;                                                           \
  template struct MultiHeadAttention<T>;                                                  \
  template struct FeedForward<T>;

MTSEG_INSTANTIATE(float)
MTSEG_INSTANTIATE(double)

}  // namespace mtseg::nn
