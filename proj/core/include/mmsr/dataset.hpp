#pragma once

// Dataset assembly, persistence and the frequency-rank OCR filter.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmsr/channels.hpp"
#include "mmsr/eqgen.hpp"
#include "mmsr/vocab.hpp"

namespace mmsr {

enum class Split : std::uint8_t { kTrain, kDev, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct OcrVariant {
  enum class Kind : std::uint8_t { kNone, kReal, kOracle3, kOracle10, kFiltered };
  Kind kind = Kind::kNone;
  int k = 0;  // only for kFiltered

  static OcrVariant parse(std::string_view s);  // none|real|oracle3|oracle10|filtered(K)
  std::string str() const;
  friend bool operator==(const OcrVariant&, const OcrVariant&) = default;
};

struct Example {
  std::string id;
  std::uint64_t seed = 0;
  EquationTriple triple;
  std::map<Modality, TokenStream> streams;
  TokenStream target;
  double snr_db = std::numeric_limits<double>::infinity();
  OcrVariant ocr_variant;

  friend bool operator==(const Example&, const Example&) = default;
};

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int n_examples = 0;
  int n_train = 0;
  int n_dev = 0;
  int n_test = 0;
  SplitRatios ratios;
  ChannelConfig channels;
  std::uint64_t config_hash = 0;

  int count(Split s) const;
};

// word -> rank, 1 = most frequent. Unknown words rank as +infinity.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::unordered_map<std::string, long> ranks);

  // Plain text, one entry per line: "word" (rank = entry number) or
  // "word rank". Blank lines and lines starting with '#' are skipped.
  static FrequencyTable parse(std::string_view text);
  static FrequencyTable load(const std::filesystem::path& path);
  // Small built-in list covering common English words, the spoken lexicon
  // and the symbols that appear in equation OCR text.
  static const FrequencyTable& bundled();

  double rank(std::string_view word) const;
  std::size_t size() const { return ranks_.size(); }

 private:
  std::unordered_map<std::string, long> ranks_;
};

// Keeps at most k distinct words with the largest rank (rarest), in their
// original order. Rank ties keep the earlier word.
std::vector<std::string> fq_filter(std::span<const std::string> words, const FrequencyTable& table,
                                   int k);

// Splits OCR text into words: maximal [a-z0-9] runs plus single operator symbols.
std::vector<std::string> ocr_words(std::string_view text);

// Which SNR to apply to the audio stream when loading.
struct SnrRequest {
  enum class Mode : std::uint8_t { kStored, kFixed, kScheduleDraw };
  Mode mode = Mode::kStored;
  double snr_db = 0.0;

  static SnrRequest stored() { return {}; }
  static SnrRequest fixed(double snr) { return {Mode::kFixed, snr}; }
  // Per-example level drawn deterministically from the 9-level schedule.
  static SnrRequest schedule_draw() { return {Mode::kScheduleDraw, 0.0}; }
};

std::uint64_t audio_noise_seed(std::uint64_t example_seed, double snr_db);
double schedule_snr(std::uint64_t example_seed, std::string_view purpose);

// Builds one Example with every stream in its stored form.
Example make_example(const Vocabulary& vocab, const ChannelConfig& cfg, std::string id,
                     std::uint64_t seed, double snr_db);

// Writes manifest.json plus train/dev/test .jsonl files into dir.
DatasetManifest build_dataset(const std::filesystem::path& dir, int n_examples, std::uint64_t seed,
                              const ChannelConfig& channels, const SplitRatios& ratios = {});

DatasetManifest read_manifest(const std::filesystem::path& dir);

std::string example_to_record(const Example& ex);
Example example_from_record(std::string_view line);

// Streams one split. Each reader owns its cursor.
class ExampleReader {
 public:
  ExampleReader(const std::filesystem::path& dir, Split split, SnrRequest snr, ModalitySet modalities,
                OcrVariant ocr);

  std::optional<Example> next();
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  Example materialize(Example stored) const;

  DatasetManifest manifest_;
  Vocabulary vocab_;
  std::ifstream in_;
  SnrRequest snr_;
  ModalitySet modalities_;
  OcrVariant ocr_;
};

std::vector<Example> load_examples(const std::filesystem::path& dir, Split split, SnrRequest snr,
                                   ModalitySet modalities, OcrVariant ocr);

// Re-derives the requested streams of a stored example. Exposed for tests.
Example materialize_example(const Vocabulary& vocab, const ChannelConfig& cfg, Example stored,
                            SnrRequest snr, ModalitySet modalities, OcrVariant ocr);

}  // namespace mmsr
