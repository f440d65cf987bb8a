#pragma once

// Decoder-only transformer over the joint discrete vocabulary, with a
// hand-written backward pass. Parameters live in one flat buffer whose
// tensor order is fixed by parameter_layout(); the output head is tied to the
// token embedding.

#include <Eigen/Core>
#include <Eigen/StdVector>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmsr/assemble.hpp"
#include "mmsr/rng.hpp"

namespace mmsr {

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_seq_len = 768;
  int vocab_size = 0;
  float dropout_rate = 0.0f;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Tensor order: wte [V,d], wpe [T,d], then per layer
//   ln1.g, ln1.b [1,d], attn.w_qkv [d,3d], attn.b_qkv [1,3d], attn.w_out [d,d],
//   attn.b_out [1,d], ln2.g, ln2.b [1,d], mlp.w_fc [d,ff], mlp.b_fc [1,ff],
//   mlp.w_proj [ff,d], mlp.b_proj [1,d]
// and finally lnf.g, lnf.b [1,d].
std::vector<TensorInfo> parameter_layout(const ModelConfig& cfg);

// Closed form: V*d + T*d + L*(4d^2 + 2*d*ff + 9d + ff) + 2d.
std::size_t parameter_count(const ModelConfig& cfg);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Cached keys/values of one sequence for incremental decoding.
template <typename Scalar>
struct DecoderState {
  std::vector<RowMatrix<Scalar>> keys;
  std::vector<RowMatrix<Scalar>> values;
  int length = 0;
  // When set, each forward call replaces `attention` with the probability
  // matrices of that call, indexed [layer * n_heads + head].
  bool record_attention = false;
  std::vector<RowMatrix<Scalar>> attention;
};

template <typename Scalar>
class Transformer {
 public:
  using Matrix = RowMatrix<Scalar>;

  explicit Transformer(const ModelConfig& cfg);

  // N(0, 0.02) weights, residual output projections scaled by 1/sqrt(2L),
  // unit layer-norm gains and zero biases.
  void init_random(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<TensorInfo>& layout() const { return layout_; }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }

  // Next-token logits for every position of one sequence, [T, V].
  Matrix logits(std::span<const int> ids) const;
  std::vector<Matrix> logits_batch(std::span<const std::vector<int>> batch) const;

  // Appends `ids` to the cached prefix in `state` and returns their logits.
  Matrix forward_incremental(std::span<const int> ids, DecoderState<Scalar>& state) const;

  // Length-normalized batch loss; fills `grad` (same layout as parameters).
  // A non-null rng enables dropout.
  Scalar loss_and_grad(std::span<const AssembledSequence> batch, std::span<Scalar> grad,
                       Rng* dropout_rng = nullptr) const;
  Scalar loss(std::span<const AssembledSequence> batch) const;

  template <typename Other>
  Transformer<Other> cast() const {
    Transformer<Other> out(config_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
    return out;
  }

 private:
  Scalar run_batch(std::span<const AssembledSequence> batch, Scalar* grad, Rng* dropout_rng) const;

  ModelConfig config_;
  std::vector<TensorInfo> layout_;
  // Eigen's vectorized reductions peel by runtime alignment, so a fixed
  // alignment keeps results independent of where the buffer lands.
  std::vector<Scalar, Eigen::aligned_allocator<Scalar>> params_;
};

// Per segment mean cross-entropy over masked positions, averaged over
// segments. `logits` row t predicts ids[t+1].
template <typename Scalar>
Scalar sequence_loss(const RowMatrix<Scalar>& logits, const AssembledSequence& seq);

// Argmax with ties broken toward the lowest id.
int argmax_lowest(std::span<const float> row);

// Greedy decoding from a prefix ending in BOS. Stops at EOS (not returned),
// after max_new tokens, or at max_seq_len.
std::vector<int> greedy_decode(const Transformer<float>& model, std::span<const int> prefix, int max_new);

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace mmsr
