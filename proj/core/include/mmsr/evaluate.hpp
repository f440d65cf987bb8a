#pragma once

// Decoding-based evaluation: greedy transcripts scored with pooled WER.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmsr/assemble.hpp"
#include "mmsr/dataset.hpp"
#include "mmsr/evalkit.hpp"
#include "mmsr/model.hpp"

namespace mmsr {

inline constexpr int kDefaultMaxNewTokens = 48;

struct Transcript {
  std::string example_id;
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
  std::size_t edits = 0;
};

// Decodes each sequence from its prefix and pools edits over all of them.
WerTally score_sequences(const Transformer<float>& model, const Vocabulary& vocab,
                         std::span<const AssembledSequence> sequences, int max_new = kDefaultMaxNewTokens,
                         std::vector<Transcript>* transcripts = nullptr);

struct SnrCell {
  double snr_db = 0.0;
  std::size_t edits = 0;
  std::size_t ref_words = 0;
  double wer() const;
};

// Decodes the test split at every grid SNR. `limit` > 0 caps the number of
// test examples (the first `limit` in file order).
std::vector<SnrCell> evaluate_on_grid(const Transformer<float>& model, const std::filesystem::path& dataset,
                                      ModalitySet modalities, OcrVariant ocr, std::span<const double> grid,
                                      int limit = 0, Split split = Split::kTest);

ReportRow to_report_row(std::string label, std::span<const SnrCell> cells);

}  // namespace mmsr
