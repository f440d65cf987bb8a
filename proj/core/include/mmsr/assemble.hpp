#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmsr/dataset.hpp"
#include "mmsr/vocab.hpp"

namespace mmsr {

// A labelled half-open range of sequence positions whose tokens are scored
// together by the length-normalized loss.
struct LossSegment {
  std::string label;
  int start = 0;
  int end = 0;
  friend bool operator==(const LossSegment&, const LossSegment&) = default;
};

// Layout: [prompt] ([tag_M][stream M])... for M in A,I,L,O order, [BOS]
// [target words][EOS]. loss_mask[t] is set where ids[t] is a target word or
// the closing EOS; position t is predicted from logits row t-1.
struct AssembledSequence {
  std::string example_id;
  std::vector<int> ids;
  std::vector<std::uint8_t> loss_mask;
  std::vector<LossSegment> segments;
  int bos_position = 0;

  int masked_count() const;
  // ids[0..=bos_position], the decoding prefix.
  std::vector<int> prefix() const;
  // ids after BOS up to (excluding) EOS.
  std::vector<int> target() const;
};

AssembledSequence assemble(const Vocabulary& vocab, const Example& ex, Task task, int max_seq_len);

}  // namespace mmsr
