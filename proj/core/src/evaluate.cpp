#include "mmsr/evaluate.hpp"

#include <stdexcept>

namespace mmsr {

WerTally score_sequences(const Transformer<float>& model, const Vocabulary& vocab,
                         std::span<const AssembledSequence> sequences, int max_new,
                         std::vector<Transcript>* transcripts) {
  WerTally tally;
  for (const auto& seq : sequences) {
    const auto prefix = seq.prefix();
    const auto hyp_ids = greedy_decode(model, prefix, max_new);
    const auto ref_ids = seq.target();
    const auto ref = normalize_text(join_words(decode_words(vocab, ref_ids)));
    const auto hyp = normalize_text(join_words(decode_words(vocab, hyp_ids)));
    const std::size_t edits = edit_distance(ref, hyp);
    tally.edits += edits;
    tally.ref_words += ref.size();
    if (transcripts) transcripts->push_back({seq.example_id, ref, hyp, edits});
  }
  return tally;
}

double SnrCell::wer() const {
  if (ref_words == 0) throw std::logic_error("SnrCell: no reference words");
  return static_cast<double>(edits) / static_cast<double>(ref_words);
}

std::vector<SnrCell> evaluate_on_grid(const Transformer<float>& model, const std::filesystem::path& dataset,
                                      ModalitySet modalities, OcrVariant ocr, std::span<const double> grid,
                                      int limit, Split split) {
  const auto manifest = read_manifest(dataset);
  const Vocabulary vocab(manifest.channels.image_codebook);
  std::vector<SnrCell> cells;
  for (double snr : grid) {
    ExampleReader reader(dataset, split, SnrRequest::fixed(snr), modalities, ocr);
    std::vector<AssembledSequence> seqs;
    while (auto ex = reader.next()) {
      seqs.push_back(assemble(vocab, *ex, Task::kAsr, model.config().max_seq_len));
      if (limit > 0 && static_cast<int>(seqs.size()) >= limit) break;
    }
    if (seqs.empty()) throw std::runtime_error("evaluate: split " + std::string(split_name(split)) + " is empty");
    const WerTally t = score_sequences(model, vocab, seqs);
    cells.push_back({snr, t.edits, t.ref_words});
  }
  return cells;
}

ReportRow to_report_row(std::string label, std::span<const SnrCell> cells) {
  ReportRow row;
  row.config = std::move(label);
  for (const auto& c : cells) {
    row.snr_db.push_back(c.snr_db);
    row.wer.push_back(c.wer());
  }
  return row;
}

}  // namespace mmsr
