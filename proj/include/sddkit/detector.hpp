#pragma once

// Depression detection head.
//
//   features (T x D)
//     -> linear projection D -> model_dim
//     -> + sinusoidal positional encoding (optional)
//     -> N post-norm Transformer encoder blocks
//          h1 = LN(x + Dropout(MHA(x)))
//          h2 = LN(h1 + Dropout(W2 relu(W1 h1)))
//     -> masked mean over the sequence
//     -> linear output layer model_dim -> 2
//
// Forward and backward passes are written out by hand; every kernel is a
// template on the scalar type so the same code runs in float for training
// and in double for finite-difference checks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sddkit/error.hpp"
#include "sddkit/fmat.hpp"
#include "sddkit/rng.hpp"

namespace sdd {

struct DetectorConfig {
  std::uint32_t input_dim = 768;
  std::uint32_t model_dim = 128;
  std::uint32_t heads = 4;
  std::uint32_t blocks = 2;
  std::uint32_t ffn_dim = 256;
  double dropout = 0.1;
  std::uint32_t max_len = 4096;
  bool positional_encoding = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim == 0 || model_dim == 0 || heads == 0 || blocks == 0)
      throw ConfigError("detector dimensions must be positive");
    if (model_dim % heads != 0)
      throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
                        std::to_string(heads));
    if (ffn_dim < model_dim) throw ConfigError("ffn_dim must be >= model_dim");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (max_len == 0) throw ConfigError("max_len must be positive");
  }
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct Linear {
  Mat<S> w;  // in x out
  Vec<S> b;  // out
};

template <typename S>
struct LayerNormParams {
  Vec<S> gamma;
  Vec<S> beta;
};

template <typename S>
struct EncoderBlockParams {
  Linear<S> q, k, v, o;
  LayerNormParams<S> ln1;
  Linear<S> ff1, ff2;
  LayerNormParams<S> ln2;
};

template <typename S>
struct DetectorParams {
  DetectorConfig config;
  Linear<S> proj;
  std::vector<EncoderBlockParams<S>> blocks;
  Linear<S> out;
};

/// Calls f(name, tensor) for every parameter tensor in a fixed order.
/// Works on const and non-const params.
template <typename P, typename F>
void visit_tensors(P& p, F&& f) {
  f("proj.w", p.proj.w);
  f("proj.b", p.proj.b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "block" + std::to_string(i) + ".";
    f(pre + "q.w", b.q.w);
    f(pre + "q.b", b.q.b);
    f(pre + "k.w", b.k.w);
    f(pre + "k.b", b.k.b);
    f(pre + "v.w", b.v.w);
    f(pre + "v.b", b.v.b);
    f(pre + "o.w", b.o.w);
    f(pre + "o.b", b.o.b);
    f(pre + "ln1.gamma", b.ln1.gamma);
    f(pre + "ln1.beta", b.ln1.beta);
    f(pre + "ff1.w", b.ff1.w);
    f(pre + "ff1.b", b.ff1.b);
    f(pre + "ff2.w", b.ff2.w);
    f(pre + "ff2.b", b.ff2.b);
    f(pre + "ln2.gamma", b.ln2.gamma);
    f(pre + "ln2.beta", b.ln2.beta);
  }
  f("out.w", p.out.w);
  f("out.b", p.out.b);
}

/// Visits matching tensors of two parameter sets in lockstep.
template <typename P, typename Q, typename F>
void visit_tensor_pairs(P& a, Q& b, F&& f) {
  auto pair = [&](auto& x, auto& y) { f(x, y); };
  pair(a.proj.w, b.proj.w);
  pair(a.proj.b, b.proj.b);
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    auto& x = a.blocks[i];
    auto& y = b.blocks[i];
    pair(x.q.w, y.q.w), pair(x.q.b, y.q.b), pair(x.k.w, y.k.w), pair(x.k.b, y.k.b);
    pair(x.v.w, y.v.w), pair(x.v.b, y.v.b), pair(x.o.w, y.o.w), pair(x.o.b, y.o.b);
    pair(x.ln1.gamma, y.ln1.gamma), pair(x.ln1.beta, y.ln1.beta);
    pair(x.ff1.w, y.ff1.w), pair(x.ff1.b, y.ff1.b), pair(x.ff2.w, y.ff2.w), pair(x.ff2.b, y.ff2.b);
    pair(x.ln2.gamma, y.ln2.gamma), pair(x.ln2.beta, y.ln2.beta);
  }
  pair(a.out.w, b.out.w);
  pair(a.out.b, b.out.b);
}

template <typename S>
std::size_t parameter_count(const DetectorParams<S>& p, bool include_projection = true) {
  std::size_t n = 0;
  visit_tensors(p, [&](const std::string& name, const auto& t) {
    if (!include_projection && name.rfind("proj.", 0) == 0) return;
    n += static_cast<std::size_t>(t.size());
  });
  return n;
}

namespace detector_detail {

template <typename S>
Linear<S> shaped_linear(std::uint32_t in, std::uint32_t out) {
  return {Mat<S>::Zero(in, out), Vec<S>::Zero(out)};
}

template <typename S>
LayerNormParams<S> shaped_ln(std::uint32_t d) {
  return {Vec<S>::Ones(d), Vec<S>::Zero(d)};
}

}  // namespace detector_detail

/// Parameters with the right shapes: zero weights, unit LayerNorm gains.
template <typename S>
DetectorParams<S> shaped_params(const DetectorConfig& c) {
  using namespace detector_detail;
  c.validate();
  DetectorParams<S> p;
  p.config = c;
  p.proj = shaped_linear<S>(c.input_dim, c.model_dim);
  for (std::uint32_t i = 0; i < c.blocks; ++i) {
    EncoderBlockParams<S> b;
    b.q = shaped_linear<S>(c.model_dim, c.model_dim);
    b.k = shaped_linear<S>(c.model_dim, c.model_dim);
    b.v = shaped_linear<S>(c.model_dim, c.model_dim);
    b.o = shaped_linear<S>(c.model_dim, c.model_dim);
    b.ln1 = shaped_ln<S>(c.model_dim);
    b.ff1 = shaped_linear<S>(c.model_dim, c.ffn_dim);
    b.ff2 = shaped_linear<S>(c.ffn_dim, c.model_dim);
    b.ln2 = shaped_ln<S>(c.model_dim);
    p.blocks.push_back(std::move(b));
  }
  p.out = shaped_linear<S>(c.model_dim, 2);
  return p;
}

/// Same shapes as `p`, every entry zero (gradient / optimizer buffers).
template <typename S>
DetectorParams<S> zeros_like(const DetectorParams<S>& p) {
  DetectorParams<S> z = p;
  visit_tensors(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

/// Xavier-uniform weights, zero biases, identity LayerNorms. Deterministic in config.seed.
template <typename S>
DetectorParams<S> init_detector(const DetectorConfig& c) {
  DetectorParams<S> p = shaped_params<S>(c);
  Rng rng(derive_seed(c.seed, 0x696e6974));
  visit_tensors(p, [&](const std::string& name, auto& t) {
    if (name.size() < 2 || name.compare(name.size() - 2, 2, ".w") != 0) return;
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = static_cast<S>(rng.uniform(-limit, limit));
  });
  return p;
}

template <typename To, typename From>
DetectorParams<To> cast_params(const DetectorParams<From>& p) {
  DetectorParams<To> out = shaped_params<To>(p.config);
  visit_tensor_pairs(out, p, [](auto& dst, const auto& src) { dst = src.template cast<To>(); });
  return out;
}

/// Rows of the sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(...).
template <typename S>
Mat<S> positional_encoding(std::size_t len, std::size_t d) {
  Mat<S> pe(len, d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Vec<S> inv_std;
};

template <typename S>
struct BlockCache {
  Mat<S> x;                 // block input
  Mat<S> q, k, v;           // T x d
  std::vector<Mat<S>> attn; // per head, T x T row-stochastic
  Mat<S> ctx;               // concatenated head outputs
  Mat<S> drop1, drop2;      // dropout scales (empty when inactive)
  LayerNormCache<S> ln1;
  Mat<S> h1;
  Mat<S> ff_pre;            // before ReLU
  Mat<S> ff_act;
  LayerNormCache<S> ln2;
};

template <typename S>
struct ForwardCache {
  Mat<S> x;                 // input features
  std::vector<char> valid;  // 1 for real rows
  S n_valid = 0;
  std::vector<BlockCache<S>> blocks;
  Mat<S> top;               // output of the last block
  Vec<S> pooled;
  Vec<S> logits;
};

namespace detector_detail {

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
Mat<S> linear(const Mat<S>& x, const Linear<S>& l) {
  Mat<S> y = x * l.w;
  y.rowwise() += l.b.transpose();
  return y;
}

template <typename S>
void linear_backward(const Mat<S>& x, const Mat<S>& dy, const Linear<S>& l, Linear<S>& g, Mat<S>* dx) {
  g.w.noalias() += x.transpose() * dy;
  g.b += dy.colwise().sum().transpose();
  if (dx) dx->noalias() = dy * l.w.transpose();
}

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const LayerNormParams<S>& ln, LayerNormCache<S>& c) {
  const auto d = static_cast<S>(x.cols());
  Vec<S> mean = x.rowwise().sum() / d;
  Mat<S> centered = x.colwise() - mean;
  Vec<S> var = centered.array().square().rowwise().sum() / d;
  c.inv_std = (var.array() + static_cast<S>(kLayerNormEps)).rsqrt();
  c.xhat = centered.array().colwise() * c.inv_std.array();
  Mat<S> y = c.xhat.array().rowwise() * ln.gamma.transpose().array();
  y.rowwise() += ln.beta.transpose();
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const LayerNormParams<S>& ln, const LayerNormCache<S>& c,
                           LayerNormParams<S>& g) {
  const auto d = static_cast<S>(dy.cols());
  g.gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix().transpose();
  g.beta += dy.colwise().sum().transpose();
  Mat<S> dxhat = dy.array().rowwise() * ln.gamma.transpose().array();
  Vec<S> sum_dxhat = dxhat.rowwise().sum();
  Vec<S> sum_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().sum();
  Mat<S> dx = (dxhat * d).colwise() - sum_dxhat;
  dx.array() -= c.xhat.array().colwise() * sum_dxhat_xhat.array();
  dx.array().colwise() *= c.inv_std.array() / d;
  return dx;
}

template <typename S>
Mat<S> dropout_scale(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<S> m(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.bernoulli(p) ? S(0) : keep;
  return m;
}

/// Row-wise softmax over the columns marked valid; masked columns get 0.
template <typename S>
void masked_softmax_rows(Mat<S>& s, const std::vector<char>& valid) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      if (valid[j]) mx = std::max(mx, s(i, j));
    S sum = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      S e = valid[j] ? std::exp(s(i, j) - mx) : S(0);
      s(i, j) = e;
      sum += e;
    }
    s.row(i) /= sum;
  }
}

template <typename S>
Mat<S> block_forward(const Mat<S>& x, const EncoderBlockParams<S>& p, const DetectorConfig& cfg,
                     const std::vector<char>& valid, BlockCache<S>& c, Rng* dropout_rng) {
  const auto T = x.rows();
  const Eigen::Index d = cfg.model_dim;
  const Eigen::Index dh = d / cfg.heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  c.x = x;
  c.q = linear(x, p.q);
  c.k = linear(x, p.k);
  c.v = linear(x, p.v);
  c.ctx.resize(T, d);
  c.attn.resize(cfg.heads);
  for (std::uint32_t h = 0; h < cfg.heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Mat<S> s = (c.q.middleCols(c0, dh) * c.k.middleCols(c0, dh).transpose()) * scale;
    masked_softmax_rows(s, valid);
    c.ctx.middleCols(c0, dh).noalias() = s * c.v.middleCols(c0, dh);
    c.attn[h] = std::move(s);
  }
  Mat<S> a = linear(c.ctx, p.o);
  if (dropout_rng && cfg.dropout > 0.0) {
    c.drop1 = dropout_scale<S>(T, d, cfg.dropout, *dropout_rng);
    a.array() *= c.drop1.array();
  } else {
    c.drop1.resize(0, 0);
  }
  c.h1 = layer_norm<S>(x + a, p.ln1, c.ln1);

  c.ff_pre = linear(c.h1, p.ff1);
  c.ff_act = c.ff_pre.cwiseMax(S(0));
  Mat<S> f = linear(c.ff_act, p.ff2);
  if (dropout_rng && cfg.dropout > 0.0) {
    c.drop2 = dropout_scale<S>(T, d, cfg.dropout, *dropout_rng);
    f.array() *= c.drop2.array();
  } else {
    c.drop2.resize(0, 0);
  }
  return layer_norm<S>(c.h1 + f, p.ln2, c.ln2);
}

template <typename S>
Mat<S> block_backward(const Mat<S>& dout, const EncoderBlockParams<S>& p, const DetectorConfig& cfg,
                      const BlockCache<S>& c, EncoderBlockParams<S>& g) {
  const auto T = dout.rows();
  const Eigen::Index d = cfg.model_dim;
  const Eigen::Index dh = d / cfg.heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  // h2 = LN2(h1 + drop2 * ff2(relu(ff1(h1))))
  Mat<S> dsum2 = layer_norm_backward<S>(dout, p.ln2, c.ln2, g.ln2);
  Mat<S> dh1 = dsum2;
  Mat<S> df = dsum2;
  if (c.drop2.size()) df.array() *= c.drop2.array();
  Mat<S> dact;
  linear_backward<S>(c.ff_act, df, p.ff2, g.ff2, &dact);
  dact.array() *= (c.ff_pre.array() > S(0)).template cast<S>();
  Mat<S> dh1_ff;
  linear_backward<S>(c.h1, dact, p.ff1, g.ff1, &dh1_ff);
  dh1 += dh1_ff;

  // h1 = LN1(x + drop1 * o(attention(x)))
  Mat<S> dsum1 = layer_norm_backward<S>(dh1, p.ln1, c.ln1, g.ln1);
  Mat<S> dx = dsum1;
  Mat<S> da = dsum1;
  if (c.drop1.size()) da.array() *= c.drop1.array();
  Mat<S> dctx;
  linear_backward<S>(c.ctx, da, p.o, g.o, &dctx);

  Mat<S> dq(T, d), dk(T, d), dv(T, d);
  for (std::uint32_t h = 0; h < cfg.heads; ++h) {
    const Eigen::Index c0 = h * dh;
    const Mat<S>& P = c.attn[h];
    Mat<S> dctx_h = dctx.middleCols(c0, dh);
    Mat<S> dP = dctx_h * c.v.middleCols(c0, dh).transpose();
    dv.middleCols(c0, dh).noalias() = P.transpose() * dctx_h;
    Vec<S> row_dot = (dP.array() * P.array()).rowwise().sum();
    Mat<S> dS = P.array() * (dP.colwise() - row_dot).array();
    dq.middleCols(c0, dh).noalias() = (dS * c.k.middleCols(c0, dh)) * scale;
    dk.middleCols(c0, dh).noalias() = (dS.transpose() * c.q.middleCols(c0, dh)) * scale;
  }
  Mat<S> tmp;
  linear_backward<S>(c.x, dq, p.q, g.q, &tmp);
  dx += tmp;
  linear_backward<S>(c.x, dk, p.k, g.k, &tmp);
  dx += tmp;
  linear_backward<S>(c.x, dv, p.v, g.v, &tmp);
  dx += tmp;
  return dx;
}

}  // namespace detector_detail

/// Runs the head on one (T x D) sequence. `padding` marks rows to ignore
/// (empty span: no padding). Padded rows never reach the logits. Pass a
/// dropout stream to train; nullptr for inference.
template <typename S>
Vec<S> forward(const DetectorParams<S>& p, const Mat<S>& x, std::span<const bool> padding = {},
               ForwardCache<S>* cache = nullptr, Rng* dropout_rng = nullptr) {
  using namespace detector_detail;
  const auto& cfg = p.config;
  const auto T = x.rows();
  if (T < 1) throw ValidationError("detector input has no rows");
  if (x.cols() != static_cast<Eigen::Index>(cfg.input_dim))
    throw ValidationError("detector expects " + std::to_string(cfg.input_dim) + " input columns, got " +
                          std::to_string(x.cols()));
  if (static_cast<std::uint64_t>(T) > cfg.max_len)
    throw ValidationError("sequence of " + std::to_string(T) + " rows exceeds max_len " + std::to_string(cfg.max_len));
  if (!x.allFinite()) throw ValidationError("non-finite detector input");
  if (!padding.empty() && padding.size() != static_cast<std::size_t>(T))
    throw ValidationError("padding mask length does not match the sequence");

  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  c.valid.assign(static_cast<std::size_t>(T), 1);
  std::size_t n_valid = static_cast<std::size_t>(T);
  if (!padding.empty()) {
    n_valid = 0;
    for (Eigen::Index i = 0; i < T; ++i) {
      c.valid[i] = !padding[i];
      n_valid += c.valid[i];
    }
  }
  if (n_valid == 0) throw ValidationError("every row is padding");
  c.n_valid = static_cast<S>(n_valid);
  if (cache) c.x = x;

  Mat<S> h = linear(x, p.proj);
  if (cfg.positional_encoding) h += positional_encoding<S>(static_cast<std::size_t>(T), cfg.model_dim);
  c.blocks.resize(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b) h = block_forward<S>(h, p.blocks[b], cfg, c.valid, c.blocks[b], dropout_rng);

  c.pooled = Vec<S>::Zero(cfg.model_dim);
  for (Eigen::Index i = 0; i < T; ++i)
    if (c.valid[i]) c.pooled += h.row(i).transpose();
  c.pooled /= c.n_valid;
  c.top = std::move(h);
  c.logits = p.out.w.transpose() * c.pooled + p.out.b;
  return c.logits;
}

template <typename S>
Vec<S> forward(const DetectorParams<S>& p, const FloatMatrix& features, std::span<const bool> padding = {}) {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      features.data.data(), features.rows, features.cols);
  return forward<S>(p, Mat<S>(m.template cast<S>()), padding);
}

/// Two-class cross-entropy of logits against `label`, via log-sum-exp.
template <typename S>
S cross_entropy(const Vec<S>& logits, int label) {
  const S mx = logits.maxCoeff();
  const S lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits(label);
}

/// Accumulates d(loss)/d(params) into `grads` for a cached forward pass
/// and returns the loss. `weight` scales the contribution (1/batch).
template <typename S>
S backward(const DetectorParams<S>& p, const ForwardCache<S>& c, int label, DetectorParams<S>& grads, S weight = 1) {
  using namespace detector_detail;
  const S loss = cross_entropy(c.logits, label);
  Vec<S> prob = (c.logits.array() - c.logits.maxCoeff()).exp();
  prob /= prob.sum();
  Vec<S> dlogits = prob;
  dlogits(label) -= 1;
  dlogits *= weight;

  grads.out.w.noalias() += c.pooled * dlogits.transpose();
  grads.out.b += dlogits;
  Vec<S> dpooled = p.out.w * dlogits;

  const auto T = c.top.rows();
  Mat<S> dh = Mat<S>::Zero(T, p.config.model_dim);
  for (Eigen::Index i = 0; i < T; ++i)
    if (c.valid[i]) dh.row(i) = dpooled.transpose() / c.n_valid;

  for (std::size_t b = p.blocks.size(); b-- > 0;)
    dh = block_backward<S>(dh, p.blocks[b], p.config, c.blocks[b], grads.blocks[b]);
  linear_backward<S>(c.x, dh, p.proj, grads.proj, nullptr);
  return loss * weight;
}

struct Prediction {
  int label = 0;
  double score = 0.0;  // P(depressed)
};

/// argmax of the logits; equal logits resolve to the negative class.
template <typename S>
Prediction prediction_from_logits(const Vec<S>& logits) {
  Prediction out;
  out.label = logits(1) > logits(0) ? 1 : 0;
  const double diff = static_cast<double>(logits(0)) - static_cast<double>(logits(1));
  out.score = 1.0 / (1.0 + std::exp(diff));
  return out;
}

template <typename S>
Prediction predict(const DetectorParams<S>& p, const FloatMatrix& features) {
  return prediction_from_logits<S>(forward<S>(p, features));
}

/// Adam with bias correction.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(const DetectorParams<S>& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(zeros_like(like)), v_(zeros_like(like)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(DetectorParams<S>& params, const DetectorParams<S>& grads) {
    ++t_;
    const S c1 = static_cast<S>(1.0 - std::pow(beta1_, t_));
    const S c2 = static_cast<S>(1.0 - std::pow(beta2_, t_));
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S lr = static_cast<S>(lr_), eps = static_cast<S>(eps_);
    std::vector<Eigen::Map<Vec<S>>> ps, ms, vs;
    std::vector<Eigen::Map<const Vec<S>>> gs;
    auto collect = [](auto& out) {
      return [&out](const std::string&, auto& t) { out.emplace_back(t.data(), t.size()); };
    };
    visit_tensors(params, collect(ps));
    visit_tensors(grads, collect(gs));
    visit_tensors(m_, collect(ms));
    visit_tensors(v_, collect(vs));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ms[i] = b1 * ms[i] + (S(1) - b1) * gs[i];
      vs[i] = b2 * vs[i] + (S(1) - b2) * gs[i].cwiseProduct(gs[i]);
      ps[i].array() -= lr * (ms[i].array() / c1) / ((vs[i].array() / c2).sqrt() + eps);
    }
  }

  long steps() const noexcept { return t_; }

 private:
  DetectorParams<S> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace sdd
