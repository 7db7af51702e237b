#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsp/core.hpp"

namespace hsp::nn {

// Sparse feature vector: (index, value) pairs with value != 0. Observations
// are mostly zero, so the first layer only touches the active rows.
struct SparseInput {
  std::vector<std::uint32_t> idx;
  std::vector<float> val;

  void clear() {
    idx.clear();
    val.clear();
  }
  void push(std::uint32_t i, float v) {
    idx.push_back(i);
    val.push_back(v);
  }
  std::size_t nnz() const { return idx.size(); }

  static SparseInput from_dense(std::span<const float> x) {
    SparseInput s;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] != 0.0f) s.push(static_cast<std::uint32_t>(i), x[i]);
    return s;
  }
};

// Parameters live in one flat buffer so that optimizers, clipping, hashing
// and serialization are layer-agnostic. Layers hold offsets into it.
struct ParamBlock {
  std::size_t offset = 0;
  std::size_t size = 0;
};

class ParamLayout {
 public:
  ParamBlock add(std::size_t n) {
    ParamBlock b{total_, n};
    total_ += n;
    return b;
  }
  std::size_t total() const { return total_; }

 private:
  std::size_t total_ = 0;
};

// Orthogonal initialization (QR of a Gaussian matrix) scaled by `gain`,
// for a weight stored as [in][out].
inline void orthogonal_init(float* w, int in, int out, double gain, Rng& rng) {
  int rows = std::max(in, out), cols = std::min(in, out);
  std::vector<double> a(static_cast<std::size_t>(rows * cols));
  for (auto& v : a) v = rng.normal();
  // Modified Gram-Schmidt over columns of the rows x cols matrix.
  for (int j = 0; j < cols; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0;
      for (int i = 0; i < rows; ++i) dot += a[static_cast<std::size_t>(i * cols + j)] * a[static_cast<std::size_t>(i * cols + k)];
      for (int i = 0; i < rows; ++i) a[static_cast<std::size_t>(i * cols + j)] -= dot * a[static_cast<std::size_t>(i * cols + k)];
    }
    double norm = 0;
    for (int i = 0; i < rows; ++i) norm += a[static_cast<std::size_t>(i * cols + j)] * a[static_cast<std::size_t>(i * cols + j)];
    norm = std::sqrt(std::max(norm, 1e-12));
    for (int i = 0; i < rows; ++i) a[static_cast<std::size_t>(i * cols + j)] /= norm;
  }
  for (int i = 0; i < in; ++i)
    for (int o = 0; o < out; ++o) {
      double v = in >= out ? a[static_cast<std::size_t>(i * cols + o)] : a[static_cast<std::size_t>(o * cols + i)];
      w[static_cast<std::size_t>(i * out + o)] = static_cast<float>(gain * v);
    }
}

// Dense affine map y = x W + b with W stored [in][out].
struct Linear {
  int in = 0, out = 0;
  ParamBlock w, b;

  void build(ParamLayout& pl, int in_, int out_) {
    in = in_;
    out = out_;
    w = pl.add(static_cast<std::size_t>(in * out));
    b = pl.add(static_cast<std::size_t>(out));
  }

  void init(float* p, double gain, Rng& rng) const {
    orthogonal_init(p + w.offset, in, out, gain, rng);
    std::fill(p + b.offset, p + b.offset + b.size, 0.0f);
  }

  void forward(const float* p, const float* x, float* y) const {
    const float* W = p + w.offset;
    std::copy(p + b.offset, p + b.offset + out, y);
    for (int i = 0; i < in; ++i) {
      const float xi = x[i];
      if (xi == 0.0f) continue;
      const float* row = W + static_cast<std::size_t>(i * out);
      for (int o = 0; o < out; ++o) y[o] += xi * row[o];
    }
  }

  void forward_sparse(const float* p, const SparseInput& x, float* y) const {
    const float* W = p + w.offset;
    std::copy(p + b.offset, p + b.offset + out, y);
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const float xi = x.val[k];
      const float* row = W + static_cast<std::size_t>(x.idx[k]) * static_cast<std::size_t>(out);
      for (int o = 0; o < out; ++o) y[o] += xi * row[o];
    }
  }

  // Accumulates parameter gradients; writes dx if non-null.
  void backward(const float* p, const float* x, const float* dy, float* g, float* dx) const {
    float* gW = g + w.offset;
    float* gb = g + b.offset;
    for (int o = 0; o < out; ++o) gb[o] += dy[o];
    for (int i = 0; i < in; ++i) {
      const float xi = x[i];
      if (xi == 0.0f) continue;
      float* row = gW + static_cast<std::size_t>(i * out);
      for (int o = 0; o < out; ++o) row[o] += xi * dy[o];
    }
    if (dx) {
      const float* W = p + w.offset;
      for (int i = 0; i < in; ++i) {
        const float* row = W + static_cast<std::size_t>(i * out);
        float s = 0.0f;
        for (int o = 0; o < out; ++o) s += row[o] * dy[o];
        dx[i] = s;
      }
    }
  }

  void backward_sparse(const SparseInput& x, const float* dy, float* g) const {
    float* gW = g + w.offset;
    float* gb = g + b.offset;
    for (int o = 0; o < out; ++o) gb[o] += dy[o];
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const float xi = x.val[k];
      float* row = gW + static_cast<std::size_t>(x.idx[k]) * static_cast<std::size_t>(out);
      for (int o = 0; o < out; ++o) row[o] += xi * dy[o];
    }
  }
};

inline void relu_inplace(float* x, int n) {
  for (int i = 0; i < n; ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

// dx = dy where the post-activation is positive.
inline void relu_backward(const float* y, float* d, int n) {
  for (int i = 0; i < n; ++i)
    if (y[i] <= 0.0f) d[i] = 0.0f;
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Sparse input -> ReLU hidden -> ReLU hidden -> linear head.
class Mlp {
 public:
  struct Cache {
    std::vector<float> h1, h2, out;
  };

  Mlp() = default;
  Mlp(int in, int hidden, int out) { build(in, hidden, out); }

  void build(int in, int hidden, int out) {
    if (hidden <= 0 || hidden > 256) throw Error(Errc::InvalidArgument, "hidden size must be in [1, 256]");
    ParamLayout pl;
    l1_.build(pl, in, hidden);
    l2_.build(pl, hidden, hidden);
    l3_.build(pl, hidden, out);
    n_params_ = pl.total();
  }

  void init(std::vector<float>& p, double head_gain, Rng& rng) const {
    p.assign(n_params_, 0.0f);
    l1_.init(p.data(), std::sqrt(2.0), rng);
    l2_.init(p.data(), std::sqrt(2.0), rng);
    l3_.init(p.data(), head_gain, rng);
  }

  std::size_t num_params() const { return n_params_; }
  int in() const { return l1_.in; }
  int hidden() const { return l1_.out; }
  int out() const { return l3_.out; }

  void forward(const float* p, const SparseInput& x, Cache& c) const {
    c.h1.resize(static_cast<std::size_t>(l1_.out));
    c.h2.resize(static_cast<std::size_t>(l2_.out));
    c.out.resize(static_cast<std::size_t>(l3_.out));
    l1_.forward_sparse(p, x, c.h1.data());
    relu_inplace(c.h1.data(), l1_.out);
    l2_.forward(p, c.h1.data(), c.h2.data());
    relu_inplace(c.h2.data(), l2_.out);
    l3_.forward(p, c.h2.data(), c.out.data());
  }

  // Accumulates d(loss)/d(params) into g given d(loss)/d(out).
  void backward(const float* p, const SparseInput& x, const Cache& c, const float* dout, float* g) const {
    float d2[256], d1[256];
    l3_.backward(p, c.h2.data(), dout, g, d2);
    relu_backward(c.h2.data(), d2, l2_.out);
    l2_.backward(p, c.h1.data(), d2, g, d1);
    relu_backward(c.h1.data(), d1, l1_.out);
    l1_.backward_sparse(x, d1, g);
  }

 private:
  Linear l1_, l2_, l3_;
  std::size_t n_params_ = 0;
};

// Sparse input -> ReLU embed -> GRU -> ReLU hidden -> linear head.
class GruNet {
 public:
  struct StepCache {
    std::vector<float> e, h_prev, r, z, n, hn, h, f, out;
  };

  GruNet() = default;
  GruNet(int in, int hidden, int out) { build(in, hidden, out); }

  void build(int in, int hidden, int out) {
    if (hidden <= 0 || hidden > 256) throw Error(Errc::InvalidArgument, "hidden size must be in [1, 256]");
    ParamLayout pl;
    embed_.build(pl, in, hidden);
    for (auto& g : wi_) g.build(pl, hidden, hidden);
    for (auto& g : wh_) g.build(pl, hidden, hidden);
    fc_.build(pl, hidden, hidden);
    head_.build(pl, hidden, out);
    n_params_ = pl.total();
    hidden_ = hidden;
  }

  void init(std::vector<float>& p, double head_gain, Rng& rng) const {
    p.assign(n_params_, 0.0f);
    embed_.init(p.data(), std::sqrt(2.0), rng);
    for (const auto& g : wi_) g.init(p.data(), 1.0, rng);
    for (const auto& g : wh_) g.init(p.data(), 1.0, rng);
    fc_.init(p.data(), std::sqrt(2.0), rng);
    head_.init(p.data(), head_gain, rng);
  }

  std::size_t num_params() const { return n_params_; }
  int hidden() const { return hidden_; }
  int in() const { return embed_.in; }
  int out() const { return head_.out; }

  void step(const float* p, const SparseInput& x, const float* h_prev, StepCache& c) const {
    const auto H = static_cast<std::size_t>(hidden_);
    c.e.resize(H);
    c.h_prev.assign(h_prev, h_prev + H);
    c.r.resize(H);
    c.z.resize(H);
    c.n.resize(H);
    c.hn.resize(H);
    c.h.resize(H);
    c.f.resize(H);
    c.out.resize(static_cast<std::size_t>(head_.out));
    embed_.forward_sparse(p, x, c.e.data());
    relu_inplace(c.e.data(), hidden_);
    float ir[256], iz[256], in_[256], hr[256], hz[256];
    wi_[0].forward(p, c.e.data(), ir);
    wi_[1].forward(p, c.e.data(), iz);
    wi_[2].forward(p, c.e.data(), in_);
    wh_[0].forward(p, h_prev, hr);
    wh_[1].forward(p, h_prev, hz);
    wh_[2].forward(p, h_prev, c.hn.data());
    for (std::size_t k = 0; k < H; ++k) {
      c.r[k] = sigmoid(ir[k] + hr[k]);
      c.z[k] = sigmoid(iz[k] + hz[k]);
      c.n[k] = std::tanh(in_[k] + c.r[k] * c.hn[k]);
      c.h[k] = (1.0f - c.z[k]) * c.n[k] + c.z[k] * h_prev[k];
    }
    fc_.forward(p, c.h.data(), c.f.data());
    relu_inplace(c.f.data(), hidden_);
    head_.forward(p, c.f.data(), c.out.data());
  }

  // Backward through one step. `dh` holds d(loss)/d(h_t) from later steps
  // on entry and d(loss)/d(h_{t-1}) on exit.
  void step_backward(const float* p, const SparseInput& x, const StepCache& c, const float* dout, float* dh,
                     float* g) const {
    const auto H = static_cast<std::size_t>(hidden_);
    float df[256], dht[256];
    head_.backward(p, c.f.data(), dout, g, df);
    relu_backward(c.f.data(), df, hidden_);
    fc_.backward(p, c.h.data(), df, g, dht);
    for (std::size_t k = 0; k < H; ++k) dht[k] += dh[k];

    float dar[256], daz[256], dan[256], dhn[256], dhp[256];
    for (std::size_t k = 0; k < H; ++k) {
      float dn = dht[k] * (1.0f - c.z[k]);
      float dz = dht[k] * (c.h_prev[k] - c.n[k]);
      dhp[k] = dht[k] * c.z[k];
      dan[k] = dn * (1.0f - c.n[k] * c.n[k]);
      float dr = dan[k] * c.hn[k];
      dhn[k] = dan[k] * c.r[k];
      dar[k] = dr * c.r[k] * (1.0f - c.r[k]);
      daz[k] = dz * c.z[k] * (1.0f - c.z[k]);
    }
    float de[256], tmp[256];
    std::fill(de, de + H, 0.0f);
    const float* da[3] = {dar, daz, dan};
    for (int gidx = 0; gidx < 3; ++gidx) {
      wi_[gidx].backward(p, c.e.data(), da[gidx], g, tmp);
      for (std::size_t k = 0; k < H; ++k) de[k] += tmp[k];
    }
    const float* dh_in[3] = {dar, daz, dhn};
    for (int gidx = 0; gidx < 3; ++gidx) {
      wh_[gidx].backward(p, c.h_prev.data(), dh_in[gidx], g, tmp);
      for (std::size_t k = 0; k < H; ++k) dhp[k] += tmp[k];
    }
    relu_backward(c.e.data(), de, hidden_);
    embed_.backward_sparse(x, de, g);
    std::copy(dhp, dhp + H, dh);
  }

 private:
  Linear embed_;
  Linear wi_[3], wh_[3];  // reset, update, candidate
  Linear fc_, head_;
  std::size_t n_params_ = 0;
  int hidden_ = 0;
};

// Adam with global-norm gradient clipping.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double eps = 1e-5, double beta1 = 0.9, double beta2 = 0.999)
      : lr_(lr), eps_(eps), b1_(beta1), b2_(beta2), m_(n, 0.0f), v_(n, 0.0f) {}

  // Returns the pre-clip gradient norm.
  double step(std::vector<float>& p, std::vector<float>& g, double max_norm) {
    double sq = 0.0;
    for (float x : g) sq += static_cast<double>(x) * x;
    double norm = std::sqrt(sq);
    float scale = max_norm > 0 && norm > max_norm ? static_cast<float>(max_norm / (norm + 1e-6)) : 1.0f;
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const float step_size = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
    const float eps = static_cast<float>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < p.size(); ++i) {
      float gi = g[i] * scale;
      m_[i] = b1 * m_[i] + (1.0f - b1) * gi;
      v_[i] = b2 * v_[i] + (1.0f - b2) * gi * gi;
      p[i] -= step_size * m_[i] / (std::sqrt(v_[i]) + eps);
    }
    return norm;
  }

  void set_lr(double lr) { lr_ = lr; }
  long long steps() const { return t_; }

 private:
  double lr_ = 5e-4, eps_ = 1e-5, b1_ = 0.9, b2_ = 0.999;
  std::vector<float> m_, v_;
  long long t_ = 0;
};

// Numerically stable log-softmax over a small logit vector.
inline void log_softmax(const float* logits, int n, double* out) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(logits[i] - mx);
  double lse = mx + std::log(s);
  for (int i = 0; i < n; ++i) out[i] = logits[i] - lse;
}

inline std::uint64_t hash_params(const std::vector<float>& p) {
  Fnv1a h;
  h.update(p.data(), p.size() * sizeof(float));
  return h.digest();
}

}  // namespace hsp::nn
