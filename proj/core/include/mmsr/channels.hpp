#pragma once

// Lossy symbolic channels that turn an EquationTriple into modality token
// streams: audio (noisy), lip (ambiguous), image (hashed) and OCR (character
// noise). Every encoder is a pure function of its inputs and seed.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmsr/eqgen.hpp"
#include "mmsr/vocab.hpp"

namespace mmsr {

// Half-open [start, end) interval of stream positions belonging to one
// equation (or OCR sentence).
struct Span {
  int equation_index = 0;
  int start = 0;
  int end = 0;
  int length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

// Content ids lie in the modality's block; Vocabulary::kSep separates segments
// and the text stream ends with Vocabulary::kEos.
struct TokenStream {
  Modality modality = Modality::kText;
  std::vector<int> ids;
  std::vector<Span> spans;
  friend bool operator==(const TokenStream&, const TokenStream&) = default;
};

enum class NoiseRegion : std::uint8_t { kSecondHalfPerEquation, kWhole, kNone };

struct NoiseSpec {
  double snr_db = std::numeric_limits<double>::infinity();
  NoiseRegion region = NoiseRegion::kSecondHalfPerEquation;
};

// The nine-level SNR schedule, clean to pure noise.
std::span<const double> snr_grid();
std::string format_snr(double snr_db);  // "inf", "-inf", "20", "-5", "2.5"
double parse_snr(std::string_view s);

// Substitution probability p = 1 / (1 + 10^(snr/10)).
double snr_to_corruption(double snr_db);

// First corruptible offset inside a span of the given length.
int clean_prefix_length(int span_length);

struct ChannelConfig {
  int audio_repeat = 2;
  int image_grid = 56;
  int image_codebook = 64;
  double ocr_real_cer = 0.05;
  int depth_limit = 2;
};

// Lexicon word indices of a spoken string.
std::vector<int> word_indices(const std::string& spoken);

TokenStream encode_audio(const Vocabulary& vocab, const EquationTriple& triple, int repeat,
                         const NoiseSpec& noise, std::uint64_t seed);
TokenStream encode_lip(const Vocabulary& vocab, const EquationTriple& triple);
TokenStream encode_image(const Vocabulary& vocab, const EquationTriple& triple, int grid_len);
TokenStream encode_ocr(const Vocabulary& vocab, const EquationTriple& triple, double char_error_rate,
                       std::uint64_t seed, int n_sentences);
// OCR rendering of arbitrary sentences, one span per sentence.
TokenStream encode_ocr_sentences(const Vocabulary& vocab, std::span<const std::string> sentences,
                                 double char_error_rate, std::uint64_t seed);
TokenStream encode_target(const Vocabulary& vocab, const EquationTriple& triple);

// Sentences shown to the OCR channel: the 3 equation texts, followed by 7
// distinct distractor equations when n_sentences == 10.
std::vector<std::string> ocr_sentences(const EquationTriple& triple, std::uint64_t seed,
                                       int n_sentences, int depth_limit = 2);

// Viseme class (0..kLipClasses-1) of each unit a word produces.
std::vector<int> viseme_classes(std::string_view word);
int bigram_code(char a, char b, int codebook);

// Words up to the first EOS (or the end). Non-word ids are skipped.
std::vector<std::string> decode_words(const Vocabulary& vocab, std::span<const int> ids);

}  // namespace mmsr
