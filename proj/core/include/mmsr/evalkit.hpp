#pragma once

// Text normalization, word error rate, relative WER benefit and the per-SNR
// report tables built from them.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmsr {

// Lowercase, map everything outside [a-z0-9 ] to a space, collapse and split.
std::vector<std::string> normalize_text(std::string_view s);

// Unit-cost Levenshtein distance over word sequences.
std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

// edit_distance / |ref|. Throws std::invalid_argument on an empty reference.
double wer(std::span<const std::string> ref, std::span<const std::string> hyp);

// Pooled corpus WER: total edits over total reference words.
struct WerTally {
  std::size_t edits = 0;
  std::size_t ref_words = 0;

  void add(std::span<const std::string> ref, std::span<const std::string> hyp);
  double rate() const;  // throws when no reference words were added
};

// (wer_a - wer_xa) / wer_a, or nullopt when wer_a == 0 (benefit undefined).
std::optional<double> relative_benefit(double wer_a, double wer_xa);

// One modality configuration's row: WER per SNR cell (keys formatted with
// format_snr) in grid order.
struct ReportRow {
  std::string config;
  std::vector<double> snr_db;
  std::vector<double> wer;
  std::vector<double> wer_spread;  // across seeds; empty or zeros for single runs

  double average_wer() const;
};

struct EvalReport {
  std::string baseline = "A";
  std::vector<ReportRow> rows;

  const ReportRow* find(std::string_view config) const;
  // Benefit of `config` over the baseline in the same SNR cell.
  std::optional<double> benefit(std::string_view config, double snr_db) const;
  // Benefit computed from the unweighted mean WER over the grid.
  std::optional<double> average_benefit(std::string_view config) const;

  // Rows = configs, columns = SNR grid + Avg + Benefit.
  std::string to_table() const;
  std::string to_benefit_table() const;
  std::string to_json() const;
  static EvalReport from_json(std::string_view text);
};

}  // namespace mmsr
