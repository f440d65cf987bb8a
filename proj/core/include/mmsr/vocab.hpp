#pragma once

// Joint discrete vocabulary. Every modality owns a disjoint block of ids in a
// single table so one embedding matrix serves all streams.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmsr {

enum class Modality : std::uint8_t { kAudio = 0, kImage = 1, kLip = 2, kOcr = 3, kText = 4 };

inline constexpr std::array<Modality, 4> kInputModalities = {Modality::kAudio, Modality::kImage,
                                                            Modality::kLip, Modality::kOcr};

char modality_letter(Modality m);
Modality modality_from_letter(char c);

// Subset of the input modalities {A, I, L, O}. Iteration order is always the
// canonical A, I, L, O order regardless of how the set was built.
class ModalitySet {
 public:
  constexpr ModalitySet() = default;
  ModalitySet(std::initializer_list<Modality> ms);

  static ModalitySet parse(std::string_view letters);  // e.g. "OLA", "A,I"

  void insert(Modality m);
  bool contains(Modality m) const { return (bits_ >> static_cast<int>(m)) & 1U; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }
  std::vector<Modality> ordered() const;
  std::string letters() const;  // canonical, e.g. "AIL"

  friend bool operator==(ModalitySet, ModalitySet) = default;

 private:
  std::uint8_t bits_ = 0;
};

enum class Task : std::uint8_t { kAsr = 0, kLipToText = 1 };

inline constexpr int kLipClasses = 8;

// Symbol kinds used to map an id back to its meaning.
enum class SymbolKind : std::uint8_t {
  kSpecial, kTag, kPrompt, kWord, kAudioUnit, kLipUnit, kImageUnit, kOcrChar
};

struct Symbol {
  SymbolKind kind;
  int index;  // index within its block
};

struct IdBlock {
  int begin = 0;
  int size = 0;
  int end() const { return begin + size; }
  bool contains(int id) const { return id >= begin && id < begin + size; }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  explicit Vocabulary(int image_codebook = 64);

  int size() const { return size_; }
  int image_codebook() const { return image_codebook_; }

  int tag(Modality m) const;
  int prompt(Task task, ModalitySet inputs) const;

  // Content blocks. The image block holds codebook units followed by a pad
  // unit; the lip block holds kLipClasses viseme classes followed by a gap unit.
  IdBlock block(Modality m) const;

  int word_id(std::string_view word) const;  // throws for words outside the lexicon
  std::optional<int> find_word(std::string_view word) const;
  std::string_view word(int id) const;       // throws for non-word ids

  int audio_unit_for_word(int word_index) const { return audio_.begin + word_index; }
  int lip_class_id(int viseme_class) const { return lip_.begin + viseme_class; }
  int lip_gap_id() const { return lip_.begin + kLipClasses; }
  int image_unit(int code) const { return image_.begin + code; }
  int image_pad_id() const { return image_.begin + image_codebook_; }
  int ocr_char_id(char c) const;  // throws for characters outside the OCR alphabet
  char ocr_char(int id) const;
  static std::string_view ocr_alphabet();

  Symbol symbol(int id) const;
  std::string describe(int id) const;

  // Stable hash of the full layout, stored in checkpoints.
  std::uint64_t layout_hash() const;

 private:
  int image_codebook_;
  IdBlock tags_, prompts_, words_, audio_, lip_, image_, ocr_;
  int size_ = 0;
};

}  // namespace mmsr
