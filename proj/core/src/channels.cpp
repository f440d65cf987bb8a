#include "mmsr/channels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mmsr/rng.hpp"

namespace mmsr {

namespace {

constexpr std::array<double, 9> kSnrGrid = {
    std::numeric_limits<double>::infinity(), 20.0, 10.0, 5.0, 0.0, -5.0, -10.0, -20.0,
    -std::numeric_limits<double>::infinity()};

constexpr int kDistractors = 7;

// Viseme classes: 0 {b,p,m}  1 {f,v,th}  2 {t,d,s,z,n,l,x}  3 {k,g,q,c}
//                 4 {e,i,y}  5 {a}       6 {o,u,w}          7 {r,h,j}
int letter_viseme(char c) {
  switch (c) {
    case 'b': case 'p': case 'm': return 0;
    case 'f': case 'v': return 1;
    case 't': case 'd': case 's': case 'z': case 'n': case 'l': case 'x': return 2;
    case 'k': case 'g': case 'q': case 'c': return 3;
    case 'e': case 'i': case 'y': return 4;
    case 'a': return 5;
    case 'o': case 'u': case 'w': return 6;
    case 'r': case 'h': case 'j': return 7;
    default: break;
  }
  throw std::invalid_argument(std::string("no viseme for character '") + c + "'");
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

std::string compact(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c != ' ') out += c;
  }
  return out;
}

void require_spoken(const EquationTriple& triple) {
  const auto [a, b] = triple.spoken_indices;
  if (a < 0 || a > 2 || b < 0 || b > 2 || a == b) {
    throw std::invalid_argument("triple has invalid spoken_indices");
  }
}

}  // namespace

std::span<const double> snr_grid() { return kSnrGrid; }

std::string format_snr(double snr_db) {
  if (std::isnan(snr_db)) throw std::invalid_argument("format_snr: NaN");
  if (std::isinf(snr_db)) return snr_db > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << snr_db;
  return os.str();
}

double parse_snr(std::string_view s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const std::string str(s);
  double v = 0.0;
  try {
    v = std::stod(str, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid SNR '" + str + "'");
  }
  if (used != str.size() || std::isnan(v)) throw std::invalid_argument("invalid SNR '" + str + "'");
  return v;
}

double snr_to_corruption(double snr_db) {
  if (std::isnan(snr_db)) throw std::invalid_argument("snr_to_corruption: NaN");
  return 1.0 / (1.0 + std::pow(10.0, snr_db / 10.0));
}

int clean_prefix_length(int span_length) { return (span_length + 1) / 2; }

std::vector<int> word_indices(const std::string& spoken) {
  const auto lex = lexicon();
  std::vector<int> out;
  for (const auto& w : split_words(spoken)) {
    const auto it = std::find(lex.begin(), lex.end(), w);
    if (it == lex.end()) throw std::invalid_argument("word '" + w + "' is not in the lexicon");
    out.push_back(static_cast<int>(it - lex.begin()));
  }
  return out;
}

TokenStream encode_audio(const Vocabulary& vocab, const EquationTriple& triple, int repeat,
                         const NoiseSpec& noise, std::uint64_t seed) {
  if (repeat < 1) throw std::invalid_argument("encode_audio: repeat rate must be >= 1");
  require_spoken(triple);
  TokenStream s{Modality::kAudio, {}, {}};
  for (int k = 0; k < 2; ++k) {
    const int eq = triple.spoken_indices[static_cast<std::size_t>(k)];
    if (k > 0) s.ids.push_back(Vocabulary::kSep);
    const int start = static_cast<int>(s.ids.size());
    for (int w : word_indices(triple.equations[static_cast<std::size_t>(eq)].spoken)) {
      for (int r = 0; r < repeat; ++r) s.ids.push_back(vocab.audio_unit_for_word(w));
    }
    s.spans.push_back({eq, start, static_cast<int>(s.ids.size())});
  }

  const double p = noise.region == NoiseRegion::kNone ? 0.0 : snr_to_corruption(noise.snr_db);
  if (p <= 0.0) return s;
  const IdBlock audio = vocab.block(Modality::kAudio);
  Rng rng(mix_seed(seed, "audio-noise"));
  for (const Span& span : s.spans) {
    const int first = noise.region == NoiseRegion::kWhole
                          ? span.start
                          : span.start + clean_prefix_length(span.length());
    for (int i = first; i < span.end; ++i) {
      if (rng.bernoulli(p)) {
        s.ids[static_cast<std::size_t>(i)] =
            audio.begin + static_cast<int>(rng.below(static_cast<std::uint64_t>(audio.size)));
      }
    }
  }
  return s;
}

std::vector<int> viseme_classes(std::string_view word) {
  std::vector<int> out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (word[i] == 't' && i + 1 < word.size() && word[i + 1] == 'h') {
      out.push_back(1);  // "th" is a single labiodental-like unit
      ++i;
      continue;
    }
    out.push_back(letter_viseme(word[i]));
  }
  return out;
}

TokenStream encode_lip(const Vocabulary& vocab, const EquationTriple& triple) {
  require_spoken(triple);
  TokenStream s{Modality::kLip, {}, {}};
  for (int k = 0; k < 2; ++k) {
    const int eq = triple.spoken_indices[static_cast<std::size_t>(k)];
    if (k > 0) s.ids.push_back(Vocabulary::kSep);
    const int start = static_cast<int>(s.ids.size());
    bool first_word = true;
    for (const auto& w : split_words(triple.equations[static_cast<std::size_t>(eq)].spoken)) {
      if (!first_word) s.ids.push_back(vocab.lip_gap_id());
      first_word = false;
      for (int c : viseme_classes(w)) s.ids.push_back(vocab.lip_class_id(c));
    }
    s.spans.push_back({eq, start, static_cast<int>(s.ids.size())});
  }
  return s;
}

int bigram_code(char a, char b, int codebook) {
  const char pair[2] = {a, b};
  const std::uint64_t h = fnv1a64(std::string_view(pair, 2));
  return static_cast<int>(h % static_cast<std::uint64_t>(codebook));
}

TokenStream encode_image(const Vocabulary& vocab, const EquationTriple& triple, int grid_len) {
  if (grid_len < 1) throw std::invalid_argument("encode_image: grid length must be positive");
  TokenStream s{Modality::kImage, {}, {}};
  for (int eq = 0; eq < 3; ++eq) {
    const std::string glyphs = compact(triple.equations[static_cast<std::size_t>(eq)].text);
    const int start = static_cast<int>(s.ids.size());
    for (std::size_t i = 0; i + 1 < glyphs.size(); ++i) {
      if (static_cast<int>(s.ids.size()) == grid_len) break;
      s.ids.push_back(vocab.image_unit(bigram_code(glyphs[i], glyphs[i + 1], vocab.image_codebook())));
    }
    const int end = static_cast<int>(s.ids.size());
    if (end > start) s.spans.push_back({eq, start, end});
  }
  s.ids.resize(static_cast<std::size_t>(grid_len), vocab.image_pad_id());
  return s;
}

std::vector<std::string> ocr_sentences(const EquationTriple& triple, std::uint64_t seed,
                                       int n_sentences, int depth_limit) {
  if (n_sentences != 3 && n_sentences != 3 + kDistractors) {
    throw std::invalid_argument("encode_ocr: n_sentences must be 3 or 10, got " +
                                std::to_string(n_sentences));
  }
  std::vector<std::string> out;
  for (const auto& eq : triple.equations) out.push_back(eq.text);
  std::uint64_t salt = 0;
  while (static_cast<int>(out.size()) < n_sentences) {
    Equation d = generate_equation(mix_seed(mix_seed(seed, "ocr-distractor"), salt++), depth_limit);
    if (std::find(out.begin(), out.end(), d.text) == out.end()) out.push_back(std::move(d.text));
  }
  return out;
}

TokenStream encode_ocr_sentences(const Vocabulary& vocab, std::span<const std::string> sentences,
                                 double char_error_rate, std::uint64_t seed) {
  if (!(char_error_rate >= 0.0 && char_error_rate <= 1.0)) {
    throw std::invalid_argument("encode_ocr: char_error_rate must lie in [0, 1]");
  }
  const IdBlock ocr = vocab.block(Modality::kOcr);
  Rng rng(mix_seed(seed, "ocr-noise"));
  TokenStream s{Modality::kOcr, {}, {}};
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i > 0) s.ids.push_back(Vocabulary::kSep);
    const int start = static_cast<int>(s.ids.size());
    for (char c : sentences[i]) {
      int id = vocab.ocr_char_id(c);
      if (char_error_rate > 0.0 && rng.bernoulli(char_error_rate)) {
        id = ocr.begin + static_cast<int>(rng.below(static_cast<std::uint64_t>(ocr.size)));
      }
      s.ids.push_back(id);
    }
    s.spans.push_back({static_cast<int>(i), start, static_cast<int>(s.ids.size())});
  }
  return s;
}

TokenStream encode_ocr(const Vocabulary& vocab, const EquationTriple& triple, double char_error_rate,
                       std::uint64_t seed, int n_sentences) {
  const auto sentences = ocr_sentences(triple, seed, n_sentences);
  return encode_ocr_sentences(vocab, sentences, char_error_rate, seed);
}

TokenStream encode_target(const Vocabulary& vocab, const EquationTriple& triple) {
  require_spoken(triple);
  TokenStream s{Modality::kText, {}, {}};
  for (int k = 0; k < 2; ++k) {
    const int eq = triple.spoken_indices[static_cast<std::size_t>(k)];
    const int start = static_cast<int>(s.ids.size());
    for (const auto& w : split_words(triple.equations[static_cast<std::size_t>(eq)].spoken)) {
      s.ids.push_back(vocab.word_id(w));
    }
    s.spans.push_back({eq, start, static_cast<int>(s.ids.size())});
  }
  s.ids.push_back(Vocabulary::kEos);
  return s;
}

std::vector<std::string> decode_words(const Vocabulary& vocab, std::span<const int> ids) {
  const IdBlock words = vocab.block(Modality::kText);
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    if (words.contains(id)) out.emplace_back(vocab.word(id));
  }
  return out;
}

}  // namespace mmsr
