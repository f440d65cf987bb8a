#include "mmsr/assemble.hpp"

#include <algorithm>
#include <stdexcept>

namespace mmsr {

int AssembledSequence::masked_count() const {
  return static_cast<int>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

std::vector<int> AssembledSequence::prefix() const {
  return {ids.begin(), ids.begin() + bos_position + 1};
}

std::vector<int> AssembledSequence::target() const {
  std::vector<int> out;
  for (std::size_t t = static_cast<std::size_t>(bos_position) + 1; t < ids.size(); ++t) {
    if (ids[t] == Vocabulary::kEos) break;
    out.push_back(ids[t]);
  }
  return out;
}

AssembledSequence assemble(const Vocabulary& vocab, const Example& ex, Task task, int max_seq_len) {
  ModalitySet inputs;
  for (const auto& [m, stream] : ex.streams) {
    if (stream.ids.empty()) throw std::invalid_argument("example " + ex.id + " has an empty stream");
    inputs.insert(m);
  }
  if (inputs.empty()) throw std::invalid_argument("example " + ex.id + " has no input streams");
  if (ex.target.ids.empty() || ex.target.ids.back() != Vocabulary::kEos) {
    throw std::invalid_argument("example " + ex.id + " target must end with EOS");
  }

  AssembledSequence seq;
  seq.example_id = ex.id;
  seq.ids.push_back(vocab.prompt(task, inputs));
  for (auto m : inputs.ordered()) {
    const auto& stream = ex.streams.at(m);
    seq.ids.push_back(vocab.tag(m));
    seq.ids.insert(seq.ids.end(), stream.ids.begin(), stream.ids.end());
  }
  seq.bos_position = static_cast<int>(seq.ids.size());
  seq.ids.push_back(Vocabulary::kBos);
  const int target_start = static_cast<int>(seq.ids.size());
  seq.ids.insert(seq.ids.end(), ex.target.ids.begin(), ex.target.ids.end());

  if (static_cast<int>(seq.ids.size()) > max_seq_len) {
    throw std::length_error("example " + ex.id + " assembles to " + std::to_string(seq.ids.size()) +
                            " tokens, over max_seq_len " + std::to_string(max_seq_len));
  }
  seq.loss_mask.assign(seq.ids.size(), 0);
  std::fill(seq.loss_mask.begin() + target_start, seq.loss_mask.end(), std::uint8_t{1});
  seq.segments.push_back({"T", target_start, static_cast<int>(seq.ids.size())});
  return seq;
}

}  // namespace mmsr
