#include "mmsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <type_traits>

namespace mmsr {

namespace {

constexpr int kTensorsPerLayer = 12;
enum LayerTensor : int {
  kLn1G, kLn1B, kWqkv, kBqkv, kWout, kBout, kLn2G, kLn2B, kWfc, kBfc, kWproj, kBproj
};
constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

template <typename S>
using Mat = RowMatrix<S>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename T>
auto mat_view(T* base, const TensorInfo& t) {
  using S = std::remove_const_t<T>;
  using M = std::conditional_t<std::is_const_v<T>, const Mat<S>, Mat<S>>;
  return Eigen::Map<M>(base + t.offset, t.rows, t.cols);
}

template <typename T>
auto vec_view(T* base, const TensorInfo& t) {
  using S = std::remove_const_t<T>;
  using V = std::conditional_t<std::is_const_v<T>, const RowVec<S>, RowVec<S>>;
  return Eigen::Map<V>(base + t.offset, t.cols);
}

std::size_t layer_index(int layer, int tensor) {
  return 2 + static_cast<std::size_t>(layer) * kTensorsPerLayer + static_cast<std::size_t>(tensor);
}

template <typename S, typename G, typename B>
void layer_norm_forward(const Mat<S>& x, const G& gain, const B& bias, Mat<S>& xhat, ColVec<S>& rstd,
                        Mat<S>& y) {
  const ColVec<S> mean = x.rowwise().mean();
  xhat = x.colwise() - mean;
  const ColVec<S> var = xhat.rowwise().squaredNorm() / static_cast<S>(x.cols());
  rstd = (var.array() + static_cast<S>(kLayerNormEps)).rsqrt().matrix();
  xhat.array().colwise() *= rstd.array();
  y = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
}

// Adds dL/dx into dx.
template <typename S, typename G, typename DG, typename DB>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const ColVec<S>& rstd, const G& gain,
                         DG&& dgain, DB&& dbias, Mat<S>& dx) {
  dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  Mat<S> dxhat = (dy.array().rowwise() * gain.array()).matrix();
  const ColVec<S> mean1 = dxhat.rowwise().mean();
  const ColVec<S> mean2 = (dxhat.array() * xhat.array()).rowwise().mean().matrix();
  dxhat.colwise() -= mean1;
  dxhat.array() -= xhat.array().colwise() * mean2.array();
  dxhat.array().colwise() *= rstd.array();
  dx += dxhat;
}

template <typename S>
constexpr S gelu_c() {
  return static_cast<S>(0.7978845608028654);  // sqrt(2 / pi)
}

template <typename S>
Mat<S> gelu(const Mat<S>& x) {
  const auto u = gelu_c<S>() * (x.array() + static_cast<S>(0.044715) * x.array().cube());
  return (static_cast<S>(0.5) * x.array() * (static_cast<S>(1) + u.tanh())).matrix();
}

template <typename S>
Mat<S> gelu_grad(const Mat<S>& x) {
  const auto x2 = x.array().square();
  const auto t = (gelu_c<S>() * (x.array() + static_cast<S>(0.044715) * x.array() * x2)).tanh().eval();
  const auto du = gelu_c<S>() * (static_cast<S>(1) + static_cast<S>(3 * 0.044715) * x2);
  return (static_cast<S>(0.5) * (static_cast<S>(1) + t) +
          static_cast<S>(0.5) * x.array() * (static_cast<S>(1) - t.square()) * du)
      .matrix();
}

// Row i of `scores` may attend to columns [0, offset + i].
template <typename S>
void causal_softmax(Mat<S>& scores, int offset) {
  const Eigen::Index cols = scores.cols();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index visible = std::min<Eigen::Index>(offset + i + 1, cols);
    auto row = scores.row(i).head(visible);
    const S m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
    if (visible < cols) scores.row(i).tail(cols - visible).setZero();
  }
}

template <typename S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat<S> mask(rows, cols);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.bernoulli(rate) ? S(0) : keep_scale;
  }
  return mask;
}

template <typename S>
struct LayerCache {
  Mat<S> xhat1, h1, qkv, att, xhat2, h2, fc, act, mask_attn, mask_mlp;
  ColVec<S> rstd1, rstd2;
  std::vector<Mat<S>> probs;  // [sequence * heads + head], each T x T
};

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || max_seq_len < 1 || vocab_size < 1) {
    throw std::invalid_argument("ModelConfig: all sizes must be positive");
  }
  if (d_model % n_heads != 0) throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    throw std::invalid_argument("ModelConfig: dropout_rate must lie in [0, 1)");
  }
}

std::vector<TensorInfo> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), offset, rows, cols});
    offset += out.back().size();
  };
  const int d = cfg.d_model;
  add("wte", cfg.vocab_size, d);
  add("wpe", cfg.max_seq_len, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    add(p + "ln1.g", 1, d);
    add(p + "ln1.b", 1, d);
    add(p + "attn.w_qkv", d, 3 * d);
    add(p + "attn.b_qkv", 1, 3 * d);
    add(p + "attn.w_out", d, d);
    add(p + "attn.b_out", 1, d);
    add(p + "ln2.g", 1, d);
    add(p + "ln2.b", 1, d);
    add(p + "mlp.w_fc", d, cfg.d_ff);
    add(p + "mlp.b_fc", 1, cfg.d_ff);
    add(p + "mlp.w_proj", cfg.d_ff, d);
    add(p + "mlp.b_proj", 1, d);
  }
  add("lnf.g", 1, d);
  add("lnf.b", 1, d);
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t T = static_cast<std::size_t>(cfg.max_seq_len);
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t ff = static_cast<std::size_t>(cfg.d_ff);
  const std::size_t L = static_cast<std::size_t>(cfg.n_layers);
  return V * d + T * d + L * (4 * d * d + 2 * d * ff + 9 * d + ff) + 2 * d;
}

template <typename S>
Transformer<S>::Transformer(const ModelConfig& cfg) : config_(cfg), layout_(parameter_layout(cfg)) {
  params_.assign(layout_.back().offset + layout_.back().size(), S(0));
}

template <typename S>
void Transformer<S>::init_random(std::uint64_t seed) {
  Rng rng(mix_seed(seed, "model-init"));
  const double proj_std = kInitStd / std::sqrt(2.0 * config_.n_layers);
  for (const auto& t : layout_) {
    auto span = std::span<S>(params_).subspan(t.offset, t.size());
    const bool is_gain = t.name.ends_with(".g");
    const bool is_bias = t.name.ends_with(".b") || t.name.find(".b_") != std::string::npos;
    if (is_gain) {
      std::fill(span.begin(), span.end(), S(1));
    } else if (is_bias) {
      std::fill(span.begin(), span.end(), S(0));
    } else {
      const bool residual_out = t.name.ends_with("w_out") || t.name.ends_with("w_proj");
      const double std = residual_out ? proj_std : kInitStd;
      for (auto& v : span) v = static_cast<S>(std * rng.normal());
    }
  }
}

template <typename S>
typename Transformer<S>::Matrix Transformer<S>::logits(std::span<const int> ids) const {
  DecoderState<S> state;
  return forward_incremental(ids, state);
}

template <typename S>
std::vector<typename Transformer<S>::Matrix> Transformer<S>::logits_batch(
    std::span<const std::vector<int>> batch) const {
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (const auto& ids : batch) out.push_back(logits(ids));
  return out;
}

template <typename S>
typename Transformer<S>::Matrix Transformer<S>::forward_incremental(std::span<const int> ids,
                                                                   DecoderState<S>& state) const {
  const int d = config_.d_model;
  const int n_heads = config_.n_heads;
  const int dh = d / n_heads;
  const int n = static_cast<int>(ids.size());
  const int p0 = state.length;
  if (n == 0) throw std::invalid_argument("forward: empty input");
  if (p0 + n > config_.max_seq_len) {
    throw std::length_error("forward: sequence of " + std::to_string(p0 + n) + " tokens exceeds max_seq_len " +
                            std::to_string(config_.max_seq_len));
  }
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) + " outside the vocabulary");
    }
  }
  if (state.keys.empty()) {
    state.keys.assign(static_cast<std::size_t>(config_.n_layers), Mat<S>::Zero(config_.max_seq_len, d));
    state.values.assign(static_cast<std::size_t>(config_.n_layers), Mat<S>::Zero(config_.max_seq_len, d));
  }

  const S* P = params_.data();
  const auto wte = mat_view(P, layout_[0]);
  const auto wpe = mat_view(P, layout_[1]);
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  Mat<S> x(n, d);
  for (int i = 0; i < n; ++i) x.row(i) = wte.row(ids[static_cast<std::size_t>(i)]) + wpe.row(p0 + i);

  Mat<S> xhat, h, qkv, att(n, d), scores;
  ColVec<S> rstd;
  if (state.record_attention) state.attention.clear();
  for (int l = 0; l < config_.n_layers; ++l) {
    auto T = [&](int k) -> const TensorInfo& { return layout_[layer_index(l, k)]; };
    layer_norm_forward(x, vec_view(P, T(kLn1G)), vec_view(P, T(kLn1B)), xhat, rstd, h);
    qkv.noalias() = h * mat_view(P, T(kWqkv));
    qkv.rowwise() += vec_view(P, T(kBqkv));
    auto& keys = state.keys[static_cast<std::size_t>(l)];
    auto& values = state.values[static_cast<std::size_t>(l)];
    keys.middleRows(p0, n) = qkv.middleCols(d, d);
    values.middleRows(p0, n) = qkv.middleCols(2 * d, d);
    const int total = p0 + n;
    for (int hd = 0; hd < n_heads; ++hd) {
      scores.noalias() = qkv.block(0, hd * dh, n, dh) * keys.block(0, hd * dh, total, dh).transpose();
      scores *= scale;
      causal_softmax(scores, p0);
      if (state.record_attention) state.attention.push_back(scores);
      att.block(0, hd * dh, n, dh).noalias() = scores * values.block(0, hd * dh, total, dh);
    }
    Mat<S> a = att * mat_view(P, T(kWout));
    a.rowwise() += vec_view(P, T(kBout));
    x += a;
    layer_norm_forward(x, vec_view(P, T(kLn2G)), vec_view(P, T(kLn2B)), xhat, rstd, h);
    Mat<S> fc = h * mat_view(P, T(kWfc));
    fc.rowwise() += vec_view(P, T(kBfc));
    Mat<S> m = gelu(fc) * mat_view(P, T(kWproj));
    m.rowwise() += vec_view(P, T(kBproj));
    x += m;
  }
  state.length = p0 + n;

  const std::size_t nf = layout_.size() - 2;
  layer_norm_forward(x, vec_view(P, layout_[nf]), vec_view(P, layout_[nf + 1]), xhat, rstd, h);
  return h * wte.transpose();
}

template <typename S>
S Transformer<S>::loss_and_grad(std::span<const AssembledSequence> batch, std::span<S> grad,
                                Rng* dropout_rng) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("loss_and_grad: gradient size mismatch");
  // Accumulate in aligned storage for the same reason params_ is aligned.
  std::vector<S, Eigen::aligned_allocator<S>> scratch(params_.size(), S(0));
  const S total = run_batch(batch, scratch.data(), dropout_rng);
  std::copy(scratch.begin(), scratch.end(), grad.begin());
  return total;
}

template <typename S>
S Transformer<S>::loss(std::span<const AssembledSequence> batch) const {
  return run_batch(batch, nullptr, nullptr);
}

template <typename S>
S Transformer<S>::run_batch(std::span<const AssembledSequence> batch, S* grad, Rng* dropout_rng) const {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const int d = config_.d_model;
  const int n_heads = config_.n_heads;
  const int dh = d / n_heads;
  const int L = config_.n_layers;
  const auto B = static_cast<int>(batch.size());
  const double rate = dropout_rng ? static_cast<double>(config_.dropout_rate) : 0.0;
  const bool use_dropout = rate > 0.0;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  std::vector<int> off(static_cast<std::size_t>(B) + 1, 0);
  for (int b = 0; b < B; ++b) {
    const auto& seq = batch[static_cast<std::size_t>(b)];
    const int T = static_cast<int>(seq.ids.size());
    if (T > config_.max_seq_len) throw std::length_error("loss: sequence " + seq.example_id + " exceeds max_seq_len");
    if (seq.loss_mask.size() != seq.ids.size()) throw std::invalid_argument("loss: mask/ids length mismatch");
    if (seq.masked_count() == 0) {
      throw std::invalid_argument("loss: sequence " + seq.example_id + " has no masked positions");
    }
    for (int id : seq.ids) {
      if (id < 0 || id >= config_.vocab_size) throw std::out_of_range("loss: token id outside the vocabulary");
    }
    off[static_cast<std::size_t>(b) + 1] = off[static_cast<std::size_t>(b)] + T;
  }
  const int N = off.back();

  // Scored rows: row r = position t-1 predicts ids[t].
  std::vector<int> rows;
  std::vector<int> targets;
  std::vector<S> weights;
  for (int b = 0; b < B; ++b) {
    const auto& seq = batch[static_cast<std::size_t>(b)];
    if (seq.segments.empty()) throw std::invalid_argument("loss: sequence " + seq.example_id + " has no segments");
    const double seg_share = 1.0 / (static_cast<double>(seq.segments.size()) * B);
    for (const auto& seg : seq.segments) {
      int count = 0;
      for (int t = std::max(seg.start, 1); t < seg.end; ++t) count += seq.loss_mask[static_cast<std::size_t>(t)];
      if (count == 0) {
        throw std::invalid_argument("loss: segment " + seg.label + " of " + seq.example_id + " has no masked positions");
      }
      for (int t = std::max(seg.start, 1); t < seg.end; ++t) {
        if (!seq.loss_mask[static_cast<std::size_t>(t)]) continue;
        rows.push_back(off[static_cast<std::size_t>(b)] + t - 1);
        targets.push_back(seq.ids[static_cast<std::size_t>(t)]);
        weights.push_back(static_cast<S>(seg_share / count));
      }
    }
  }

  const S* P = params_.data();
  auto T = [&](int l, int k) -> const TensorInfo& { return layout_[layer_index(l, k)]; };
  const auto wte = mat_view(P, layout_[0]);
  const auto wpe = mat_view(P, layout_[1]);

  Mat<S> x(N, d);
  for (int b = 0; b < B; ++b) {
    const auto& ids = batch[static_cast<std::size_t>(b)].ids;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      x.row(off[static_cast<std::size_t>(b)] + static_cast<int>(t)) = wte.row(ids[t]) + wpe.row(static_cast<int>(t));
    }
  }
  Mat<S> mask_emb;
  if (use_dropout) {
    mask_emb = dropout_mask<S>(N, d, rate, *dropout_rng);
    x.array() *= mask_emb.array();
  }

  std::vector<LayerCache<S>> caches(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    auto& lc = caches[static_cast<std::size_t>(l)];
    layer_norm_forward(x, vec_view(P, T(l, kLn1G)), vec_view(P, T(l, kLn1B)), lc.xhat1, lc.rstd1, lc.h1);
    lc.qkv.noalias() = lc.h1 * mat_view(P, T(l, kWqkv));
    lc.qkv.rowwise() += vec_view(P, T(l, kBqkv));
    lc.att.resize(N, d);
    lc.probs.resize(static_cast<std::size_t>(B * n_heads));
    for (int b = 0; b < B; ++b) {
      const int o = off[static_cast<std::size_t>(b)];
      const int len = off[static_cast<std::size_t>(b) + 1] - o;
      for (int hd = 0; hd < n_heads; ++hd) {
        auto& probs = lc.probs[static_cast<std::size_t>(b * n_heads + hd)];
        probs.noalias() = lc.qkv.block(o, hd * dh, len, dh) * lc.qkv.block(o, d + hd * dh, len, dh).transpose();
        probs *= scale;
        causal_softmax(probs, 0);
        lc.att.block(o, hd * dh, len, dh).noalias() = probs * lc.qkv.block(o, 2 * d + hd * dh, len, dh);
      }
    }
    Mat<S> a = lc.att * mat_view(P, T(l, kWout));
    a.rowwise() += vec_view(P, T(l, kBout));
    if (use_dropout) {
      lc.mask_attn = dropout_mask<S>(N, d, rate, *dropout_rng);
      a.array() *= lc.mask_attn.array();
    }
    x += a;
    layer_norm_forward(x, vec_view(P, T(l, kLn2G)), vec_view(P, T(l, kLn2B)), lc.xhat2, lc.rstd2, lc.h2);
    lc.fc.noalias() = lc.h2 * mat_view(P, T(l, kWfc));
    lc.fc.rowwise() += vec_view(P, T(l, kBfc));
    lc.act = gelu(lc.fc);
    Mat<S> m = lc.act * mat_view(P, T(l, kWproj));
    m.rowwise() += vec_view(P, T(l, kBproj));
    if (use_dropout) {
      lc.mask_mlp = dropout_mask<S>(N, d, rate, *dropout_rng);
      m.array() *= lc.mask_mlp.array();
    }
    x += m;
  }

  const std::size_t nf = layout_.size() - 2;
  Mat<S> xhatf, hf;
  ColVec<S> rstdf;
  layer_norm_forward(x, vec_view(P, layout_[nf]), vec_view(P, layout_[nf + 1]), xhatf, rstdf, hf);

  const auto M = static_cast<Eigen::Index>(rows.size());
  Mat<S> hsel(M, d);
  for (Eigen::Index r = 0; r < M; ++r) hsel.row(r) = hf.row(rows[static_cast<std::size_t>(r)]);
  Mat<S> logits = hsel * wte.transpose();

  S total = 0;
  for (Eigen::Index r = 0; r < M; ++r) {
    auto row = logits.row(r);
    const int tgt = targets[static_cast<std::size_t>(r)];
    const S mx = row.maxCoeff();
    const S shifted_target = row(tgt) - mx;
    row = (row.array() - mx).exp();
    const S sum = row.sum();
    const S ce = std::log(sum) - shifted_target;
    total += weights[static_cast<std::size_t>(r)] * ce;
    if (grad) {
      row /= sum;
      row(tgt) -= S(1);
      row *= weights[static_cast<std::size_t>(r)];
    }
  }
  if (!grad || !std::isfinite(static_cast<double>(total))) return total;

  std::fill(grad, grad + params_.size(), S(0));
  const Mat<S>& dlogits = logits;
  auto gwte = mat_view(grad, layout_[0]);
  auto gwpe = mat_view(grad, layout_[1]);
  gwte.noalias() += dlogits.transpose() * hsel;
  const Mat<S> dhsel = dlogits * wte;
  Mat<S> dhf = Mat<S>::Zero(N, d);
  for (Eigen::Index r = 0; r < M; ++r) dhf.row(rows[static_cast<std::size_t>(r)]) += dhsel.row(r);

  Mat<S> dx = Mat<S>::Zero(N, d);
  layer_norm_backward(dhf, xhatf, rstdf, vec_view(P, layout_[nf]), vec_view(grad, layout_[nf]),
                      vec_view(grad, layout_[nf + 1]), dx);

  Mat<S> dqkv;
  for (int l = L - 1; l >= 0; --l) {
    auto& lc = caches[static_cast<std::size_t>(l)];

    Mat<S> dm = dx;
    if (use_dropout) dm.array() *= lc.mask_mlp.array();
    mat_view(grad, T(l, kWproj)).noalias() += lc.act.transpose() * dm;
    vec_view(grad, T(l, kBproj)) += dm.colwise().sum();
    Mat<S> dfc = dm * mat_view(P, T(l, kWproj)).transpose();
    dfc.array() *= gelu_grad(lc.fc).array();
    mat_view(grad, T(l, kWfc)).noalias() += lc.h2.transpose() * dfc;
    vec_view(grad, T(l, kBfc)) += dfc.colwise().sum();
    const Mat<S> dh2 = dfc * mat_view(P, T(l, kWfc)).transpose();
    layer_norm_backward(dh2, lc.xhat2, lc.rstd2, vec_view(P, T(l, kLn2G)), vec_view(grad, T(l, kLn2G)),
                        vec_view(grad, T(l, kLn2B)), dx);

    Mat<S> da = dx;
    if (use_dropout) da.array() *= lc.mask_attn.array();
    mat_view(grad, T(l, kWout)).noalias() += lc.att.transpose() * da;
    vec_view(grad, T(l, kBout)) += da.colwise().sum();
    const Mat<S> datt = da * mat_view(P, T(l, kWout)).transpose();

    dqkv.setZero(N, 3 * d);
    for (int b = 0; b < B; ++b) {
      const int o = off[static_cast<std::size_t>(b)];
      const int len = off[static_cast<std::size_t>(b) + 1] - o;
      for (int hd = 0; hd < n_heads; ++hd) {
        const auto& probs = lc.probs[static_cast<std::size_t>(b * n_heads + hd)];
        const auto q = lc.qkv.block(o, hd * dh, len, dh);
        const auto k = lc.qkv.block(o, d + hd * dh, len, dh);
        const auto v = lc.qkv.block(o, 2 * d + hd * dh, len, dh);
        const auto dout = datt.block(o, hd * dh, len, dh);
        Mat<S> dprobs = dout * v.transpose();
        dqkv.block(o, 2 * d + hd * dh, len, dh).noalias() = probs.transpose() * dout;
        const ColVec<S> inner = (dprobs.array() * probs.array()).rowwise().sum().matrix();
        Mat<S> dscores = (probs.array() * (dprobs.colwise() - inner).array()).matrix();
        dscores *= scale;
        dqkv.block(o, hd * dh, len, dh).noalias() = dscores * k;
        dqkv.block(o, d + hd * dh, len, dh).noalias() = dscores.transpose() * q;
      }
    }
    mat_view(grad, T(l, kWqkv)).noalias() += lc.h1.transpose() * dqkv;
    vec_view(grad, T(l, kBqkv)) += dqkv.colwise().sum();
    const Mat<S> dh1 = dqkv * mat_view(P, T(l, kWqkv)).transpose();
    layer_norm_backward(dh1, lc.xhat1, lc.rstd1, vec_view(P, T(l, kLn1G)), vec_view(grad, T(l, kLn1G)),
                        vec_view(grad, T(l, kLn1B)), dx);
  }

  if (use_dropout) dx.array() *= mask_emb.array();
  for (int b = 0; b < B; ++b) {
    const auto& ids = batch[static_cast<std::size_t>(b)].ids;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const auto row = dx.row(off[static_cast<std::size_t>(b)] + static_cast<int>(t));
      gwte.row(ids[t]) += row;
      gwpe.row(static_cast<int>(t)) += row;
    }
  }
  return total;
}

template <typename S>
S sequence_loss(const RowMatrix<S>& logits, const AssembledSequence& seq) {
  if (seq.segments.empty()) throw std::invalid_argument("sequence_loss: no segments");
  S total = 0;
  for (const auto& seg : seq.segments) {
    S seg_sum = 0;
    int count = 0;
    for (int t = std::max(seg.start, 1); t < seg.end; ++t) {
      if (!seq.loss_mask[static_cast<std::size_t>(t)]) continue;
      const auto row = logits.row(t - 1);
      const S mx = row.maxCoeff();
      const S lse = mx + std::log((row.array() - mx).exp().sum());
      seg_sum += lse - row(seq.ids[static_cast<std::size_t>(t)]);
      ++count;
    }
    if (count == 0) throw std::invalid_argument("sequence_loss: segment " + seg.label + " has no masked positions");
    total += seg_sum / static_cast<S>(count);
  }
  return total / static_cast<S>(seq.segments.size());
}

int argmax_lowest(std::span<const float> row) {
  if (row.empty()) throw std::invalid_argument("argmax: empty row");
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> greedy_decode(const Transformer<float>& model, std::span<const int> prefix, int max_new) {
  if (max_new < 1) throw std::invalid_argument("greedy_decode: max_new must be >= 1");
  DecoderState<float> state;
  RowMatrix<float> logits = model.forward_incremental(prefix, state);
  std::vector<int> out;
  const int limit = model.config().max_seq_len;
  for (;;) {
    const auto last = logits.row(logits.rows() - 1);
    const int next = argmax_lowest(std::span<const float>(last.data(), static_cast<std::size_t>(last.size())));
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    if (static_cast<int>(out.size()) >= max_new || state.length >= limit) break;
    const int one[1] = {next};
    logits = model.forward_incremental(one, state);
  }
  return out;
}

template class Transformer<float>;
template class Transformer<double>;
template float sequence_loss<float>(const RowMatrix<float>&, const AssembledSequence&);
template double sequence_loss<double>(const RowMatrix<double>&, const AssembledSequence&);

}  // namespace mmsr
