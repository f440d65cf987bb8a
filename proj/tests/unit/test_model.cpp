#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mmsr/model.hpp"
#include "mmsr/rng.hpp"

using namespace mmsr;

namespace {

ModelConfig tiny(int layers = 1, int heads = 2, int d = 8, int ff = 16, int T = 24, int V = 20) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = d;
  c.d_ff = ff;
  c.max_seq_len = T;
  c.vocab_size = V;
  return c;
}

// Larger-than-default init so attention and GELU are far from linear.
template <typename S>
Transformer<S> random_model(const ModelConfig& c, std::uint64_t seed, double scale = 0.3) {
  Transformer<S> m(c);
  Rng rng(seed);
  for (auto& p : m.parameters()) p = static_cast<S>(scale * rng.normal());
  return m;
}

std::vector<int> random_ids(Rng& rng, int n, int V) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (auto& t : ids) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(V)));
  return ids;
}

AssembledSequence sequence_with_target(std::vector<int> ids, int bos) {
  AssembledSequence s;
  s.example_id = "x";
  s.ids = std::move(ids);
  s.bos_position = bos;
  s.loss_mask.assign(s.ids.size(), 0);
  for (std::size_t t = static_cast<std::size_t>(bos) + 1; t < s.ids.size(); ++t) s.loss_mask[t] = 1;
  s.segments = {{"T", bos + 1, static_cast<int>(s.ids.size())}};
  return s;
}

// Straight-line reference forward pass over nested vectors.
using Grid = std::vector<std::vector<double>>;

struct Naive {
  const Transformer<double>& m;
  const ModelConfig& c;

  double p(std::size_t tensor, int r, int col) const {
    const auto& t = m.layout()[tensor];
    return m.parameters()[t.offset + static_cast<std::size_t>(r) * static_cast<std::size_t>(t.cols) +
                          static_cast<std::size_t>(col)];
  }

  Grid layer_norm(const Grid& x, std::size_t g, std::size_t b) const {
    Grid y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double mean = 0, var = 0;
      for (double v : x[i]) mean += v;
      mean /= static_cast<double>(x[i].size());
      for (double v : x[i]) var += (v - mean) * (v - mean);
      var /= static_cast<double>(x[i].size());
      for (std::size_t j = 0; j < x[i].size(); ++j) {
        y[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * p(g, 0, static_cast<int>(j)) + p(b, 0, static_cast<int>(j));
      }
    }
    return y;
  }

  Grid affine(const Grid& x, std::size_t w, std::size_t b) const {
    const auto& t = m.layout()[w];
    Grid y(x.size(), std::vector<double>(static_cast<std::size_t>(t.cols)));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int o = 0; o < t.cols; ++o) {
        double s = p(b, 0, o);
        for (int k = 0; k < t.rows; ++k) s += x[i][static_cast<std::size_t>(k)] * p(w, k, o);
        y[i][static_cast<std::size_t>(o)] = s;
      }
    return y;
  }

  Grid logits(const std::vector<int>& ids) const {
    const int d = c.d_model, H = c.n_heads, dh = d / H;
    const int n = static_cast<int>(ids.size());
    Grid x(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) x[i][j] = p(0, ids[static_cast<std::size_t>(i)], j) + p(1, i, j);
    for (int l = 0; l < c.n_layers; ++l) {
      const std::size_t base = 2 + static_cast<std::size_t>(l) * 12;
      const Grid qkv = affine(layer_norm(x, base + 0, base + 1), base + 2, base + 3);
      Grid att(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d), 0.0));
      for (int h = 0; h < H; ++h)
        for (int i = 0; i < n; ++i) {
          std::vector<double> w(static_cast<std::size_t>(i + 1));
          double mx = -1e300;
          for (int j = 0; j <= i; ++j) {
            double s = 0;
            for (int k = 0; k < dh; ++k) s += qkv[i][h * dh + k] * qkv[j][d + h * dh + k];
            w[j] = s / std::sqrt(static_cast<double>(dh));
            mx = std::max(mx, w[j]);
          }
          double z = 0;
          for (auto& v : w) z += (v = std::exp(v - mx));
          for (int j = 0; j <= i; ++j)
            for (int k = 0; k < dh; ++k) att[i][h * dh + k] += w[j] / z * qkv[j][2 * d + h * dh + k];
        }
      const Grid a = affine(att, base + 4, base + 5);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x[i][j] += a[i][j];
      Grid fc = affine(layer_norm(x, base + 6, base + 7), base + 8, base + 9);
      for (auto& row : fc)
        for (auto& v : row) v = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
      const Grid mo = affine(fc, base + 10, base + 11);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x[i][j] += mo[i][j];
    }
    const std::size_t nf = m.layout().size() - 2;
    const Grid h = layer_norm(x, nf, nf + 1);
    Grid out(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(c.vocab_size)));
    for (int i = 0; i < n; ++i)
      for (int v = 0; v < c.vocab_size; ++v) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += h[i][j] * p(0, v, j);
        out[i][v] = s;
      }
    return out;
  }
};

}  // namespace

TEST_CASE("parameter count matches the closed form and the layout") {
  for (const auto& c : {tiny(), tiny(2, 4, 16, 40, 30, 50), tiny(4, 4, 128, 512, 768, 180)}) {
    const auto layout = parameter_layout(c);
    const std::size_t d = static_cast<std::size_t>(c.d_model), ff = static_cast<std::size_t>(c.d_ff);
    const std::size_t expected = static_cast<std::size_t>(c.vocab_size) * d +
                                 static_cast<std::size_t>(c.max_seq_len) * d +
                                 static_cast<std::size_t>(c.n_layers) * (4 * d * d + 2 * d * ff + 9 * d + ff) + 2 * d;
    CHECK(parameter_count(c) == expected);
    CHECK(layout.back().offset + layout.back().size() == expected);
    CHECK(Transformer<float>(c).parameters().size() == expected);
    CHECK(layout.size() == 2 + 12 * static_cast<std::size_t>(c.n_layers) + 2);
  }
}

TEST_CASE("invalid configurations are rejected") {
  auto c = tiny();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.vocab_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.dropout_rate = 1.0f;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("logits match a naive double-precision forward pass") {
  for (int layers : {1, 2}) {
    const auto c = tiny(layers);
    const auto m = random_model<double>(c, 7 + static_cast<std::uint64_t>(layers));
    Rng rng(3);
    const auto ids = random_ids(rng, 13, c.vocab_size);
    const auto fast = m.logits(ids);
    const auto ref = Naive{m, c}.logits(ids);
    double worst = 0;
    for (int i = 0; i < fast.rows(); ++i)
      for (int v = 0; v < fast.cols(); ++v) worst = std::max(worst, std::abs(fast(i, v) - ref[i][v]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("logits are causal") {
  const auto c = tiny(2, 2, 16, 32, 32, 25);
  const auto m = random_model<float>(c, 11);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(30));
    auto ids = random_ids(rng, n, c.vocab_size);
    const int cut = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    const auto before = m.logits(ids);
    for (int t = cut + 1; t < n; ++t) ids[static_cast<std::size_t>(t)] = static_cast<int>(rng.below(25));
    const auto after = m.logits(ids);
    // Row `cut` only sees positions <= cut, which are unchanged.
    CHECK(before.topRows(cut + 1) == after.topRows(cut + 1));
  }
}

TEST_CASE("batched logits equal per-sequence logits") {
  const auto c = tiny(2);
  const auto m = random_model<float>(c, 13);
  Rng rng(8);
  std::vector<std::vector<int>> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_ids(rng, 5 + 3 * i, c.vocab_size));
  const auto all = m.logits_batch(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(all[i] == m.logits(batch[i]));
}

TEST_CASE("incremental decoding matches the full forward pass") {
  const auto c = tiny(2);
  const auto m = random_model<double>(c, 17);
  Rng rng(9);
  const auto ids = random_ids(rng, 20, c.vocab_size);
  const auto full = m.logits(ids);
  DecoderState<double> state;
  auto part = m.forward_incremental(std::span<const int>(ids).first(7), state);
  CHECK((part - full.topRows(7)).cwiseAbs().maxCoeff() < 1e-12);
  for (int t = 7; t < 20; ++t) {
    const auto row = m.forward_incremental(std::span<const int>(ids).subspan(static_cast<std::size_t>(t), 1), state);
    CHECK((row.row(0) - full.row(t)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(state.length == 20);
  CHECK_THROWS_AS(m.forward_incremental(std::span<const int>(ids).first(5), state), std::length_error);
}

TEST_CASE("attention rows are causal distributions") {
  const auto c = tiny(2, 2);
  const auto m = random_model<double>(c, 19);
  Rng rng(10);
  const auto ids = random_ids(rng, 12, c.vocab_size);
  DecoderState<double> state;
  state.record_attention = true;
  m.forward_incremental(ids, state);
  REQUIRE(state.attention.size() == 4);
  for (const auto& a : state.attention) {
    for (int i = 0; i < a.rows(); ++i) {
      CHECK(std::abs(a.row(i).sum() - 1.0) < 1e-12);
      CHECK(a.row(i).minCoeff() >= 0.0);
      if (i + 1 < a.cols()) CHECK(a.row(i).tail(a.cols() - i - 1).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("analytic gradient matches central differences") {
  for (int layers : {1, 2}) {
    const auto c = tiny(layers, 2, 8, 12, 16, 15);
    auto m = random_model<double>(c, 23 + static_cast<std::uint64_t>(layers));
    Rng rng(11);
    std::vector<AssembledSequence> batch = {sequence_with_target(random_ids(rng, 10, c.vocab_size), 4),
                                            sequence_with_target(random_ids(rng, 14, c.vocab_size), 6)};
    batch[1].segments = {{"a", 7, 9}, {"b", 9, 14}};
    std::vector<double> grad(m.parameters().size(), 0.0);
    const double base = m.loss_and_grad(batch, grad);
    CHECK(std::abs(base - m.loss(batch)) < 1e-14);

    const double h = 1e-4;
    for (const auto& t : m.layout()) {
      double worst = 0;
      // wpe rows past the longest sequence never receive gradient.
      for (std::size_t k = 0; k < t.size(); ++k) {
        const std::size_t i = t.offset + k;
        auto params = m.parameters();
        const double saved = params[i];
        params[i] = saved + h;
        const double up = m.loss(batch);
        params[i] = saved - h;
        const double down = m.loss(batch);
        params[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double err = std::abs(numeric - grad[i]) / std::max(1e-6, std::abs(numeric) + std::abs(grad[i]));
        worst = std::max(worst, err);
      }
      INFO(t.name);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("sequence loss averages within then across segments") {
  const auto c = tiny();
  const auto m = random_model<double>(c, 29);
  Rng rng(12);
  auto seq = sequence_with_target(random_ids(rng, 16, c.vocab_size), 3);
  const auto logits = m.logits(seq.ids);
  std::vector<double> ce(seq.ids.size(), 0.0);
  for (std::size_t t = 1; t < seq.ids.size(); ++t) {
    const auto row = logits.row(static_cast<Eigen::Index>(t) - 1);
    ce[t] = std::log(row.array().exp().sum()) - row(seq.ids[t]);
  }

  SUBCASE("single segment is the masked mean") {
    const double mean = std::accumulate(ce.begin() + 4, ce.end(), 0.0) / 12.0;
    CHECK(sequence_loss(logits, seq) == doctest::Approx(mean).epsilon(1e-12));
    std::vector<AssembledSequence> one = {seq};
    CHECK(m.loss(one) == doctest::Approx(mean).epsilon(1e-12));
  }
  SUBCASE("two segments weigh equally regardless of length") {
    seq.segments = {{"short", 4, 6}, {"long", 6, 16}};
    const double c1 = (ce[4] + ce[5]) / 2.0;
    const double c2 = std::accumulate(ce.begin() + 6, ce.end(), 0.0) / 10.0;
    CHECK(sequence_loss(logits, seq) == doctest::Approx((c1 + c2) / 2).epsilon(1e-12));
    auto swapped = seq;
    std::swap(swapped.segments[0], swapped.segments[1]);
    CHECK(sequence_loss(logits, swapped) == doctest::Approx(sequence_loss(logits, seq)).epsilon(1e-14));
    std::vector<AssembledSequence> one = {seq};
    CHECK(m.loss(one) == doctest::Approx((c1 + c2) / 2).epsilon(1e-12));
  }
  SUBCASE("batch loss is the mean of sequence losses") {
    auto other = sequence_with_target(random_ids(rng, 9, c.vocab_size), 5);
    std::vector<AssembledSequence> both = {seq, other};
    const double expect = (sequence_loss(logits, seq) + sequence_loss(m.logits(other.ids), other)) / 2;
    CHECK(m.loss(both) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("unmasked sequences are rejected") {
    std::fill(seq.loss_mask.begin(), seq.loss_mask.end(), 0);
    CHECK_THROWS_AS(sequence_loss(logits, seq), std::invalid_argument);
    std::vector<AssembledSequence> one = {seq};
    CHECK_THROWS_AS(m.loss(one), std::invalid_argument);
  }
}

TEST_CASE("float and double agree") {
  const auto c = tiny(2);
  const auto md = random_model<double>(c, 31, 0.1);
  const auto mf = md.cast<float>();
  Rng rng(13);
  const auto ids = random_ids(rng, 15, c.vocab_size);
  CHECK((mf.logits(ids).cast<double>() - md.logits(ids)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("argmax breaks ties toward the lowest id") {
  const std::vector<float> row = {0.1f, 0.7f, 0.2f, 0.7f};
  CHECK(argmax_lowest(row) == 1);
  CHECK_THROWS(argmax_lowest(std::span<const float>{}));
}

TEST_CASE("greedy decoding") {
  const auto c = tiny(1, 2, 8, 16, 24, 20);
  SUBCASE("a model that always prefers EOS decodes nothing") {
    Transformer<float> m(c);
    auto params = m.parameters();
    // Zero weights give zero final activations; a large lnf bias aligned with
    // the EOS embedding makes EOS win at every position.
    const auto& wte = m.layout()[0];
    const auto& lnf_b = m.layout().back();
    for (int j = 0; j < c.d_model; ++j) {
      params[wte.offset + static_cast<std::size_t>(Vocabulary::kEos) * static_cast<std::size_t>(c.d_model) +
             static_cast<std::size_t>(j)] = 1.0f;
      params[lnf_b.offset + static_cast<std::size_t>(j)] = 1.0f;
    }
    const std::vector<int> prefix = {5, 6, Vocabulary::kBos};
    CHECK(greedy_decode(m, prefix, 10).empty());
  }
  SUBCASE("decoding is deterministic and matches naive argmax") {
    const auto m = random_model<float>(c, 37);
    const std::vector<int> prefix = {4, 9, 11, Vocabulary::kBos};
    const auto out = greedy_decode(m, prefix, 8);
    CHECK(out == greedy_decode(m, prefix, 8));
    std::vector<int> ids = prefix, naive;
    for (int step = 0; step < 8; ++step) {
      const auto lg = m.logits(ids);
      const auto last = lg.row(lg.rows() - 1);
      const int next = argmax_lowest(std::span<const float>(last.data(), static_cast<std::size_t>(last.size())));
      if (next == Vocabulary::kEos) break;
      naive.push_back(next);
      ids.push_back(next);
    }
    CHECK(out == naive);
  }
  SUBCASE("decoding stops at max_seq_len") {
    const auto m = random_model<float>(c, 41);
    std::vector<int> prefix(20, 7);
    prefix.back() = Vocabulary::kBos;
    CHECK(greedy_decode(m, prefix, 100).size() <= 5);
  }
}
