#include "mmsr/vocab.hpp"

#include <stdexcept>

#include "mmsr/eqgen.hpp"
#include "mmsr/rng.hpp"

namespace mmsr {

namespace {
constexpr std::string_view kOcrAlphabet = "0123456789abcdefghijklmnopqrstuvwxyz +-/^=()";
constexpr int kSpecialCount = 4;
constexpr int kTagCount = 5;
constexpr int kPromptCount = 2 * 16;
}  // namespace

char modality_letter(Modality m) {
  switch (m) {
    case Modality::kAudio: return 'A';
    case Modality::kImage: return 'I';
    case Modality::kLip: return 'L';
    case Modality::kOcr: return 'O';
    case Modality::kText: return 'T';
  }
  return '?';
}

Modality modality_from_letter(char c) {
  switch (c) {
    case 'A': case 'a': return Modality::kAudio;
    case 'I': case 'i': return Modality::kImage;
    case 'L': case 'l': return Modality::kLip;
    case 'O': case 'o': return Modality::kOcr;
    case 'T': case 't': return Modality::kText;
    default: break;
  }
  throw std::invalid_argument(std::string("unknown modality letter '") + c + "'");
}

ModalitySet::ModalitySet(std::initializer_list<Modality> ms) {
  for (auto m : ms) insert(m);
}

ModalitySet ModalitySet::parse(std::string_view letters) {
  ModalitySet s;
  for (char c : letters) {
    if (c == ',' || c == '+' || c == ' ') continue;
    s.insert(modality_from_letter(c));
  }
  return s;
}

void ModalitySet::insert(Modality m) {
  if (m == Modality::kText) throw std::invalid_argument("ModalitySet holds input modalities only");
  bits_ = static_cast<std::uint8_t>(bits_ | (1U << static_cast<int>(m)));
}

std::vector<Modality> ModalitySet::ordered() const {
  std::vector<Modality> out;
  for (auto m : kInputModalities) {
    if (contains(m)) out.push_back(m);
  }
  return out;
}

std::string ModalitySet::letters() const {
  std::string s;
  for (auto m : ordered()) s += modality_letter(m);
  return s;
}

Vocabulary::Vocabulary(int image_codebook) : image_codebook_(image_codebook) {
  if (image_codebook < 1) throw std::invalid_argument("Vocabulary: image codebook must be positive");
  int next = kSpecialCount;
  auto take = [&next](int n) {
    IdBlock b{next, n};
    next += n;
    return b;
  };
  tags_ = take(kTagCount);
  prompts_ = take(kPromptCount);
  const int n_words = static_cast<int>(lexicon().size());
  words_ = take(n_words);
  audio_ = take(n_words);
  lip_ = take(kLipClasses + 1);
  image_ = take(image_codebook + 1);
  ocr_ = take(static_cast<int>(kOcrAlphabet.size()));
  size_ = next;
}

int Vocabulary::tag(Modality m) const { return tags_.begin + static_cast<int>(m); }

int Vocabulary::prompt(Task task, ModalitySet inputs) const {
  if (inputs.empty()) throw std::invalid_argument("prompt: empty modality set");
  return prompts_.begin + static_cast<int>(task) * 16 + inputs.bits();
}

IdBlock Vocabulary::block(Modality m) const {
  switch (m) {
    case Modality::kAudio: return audio_;
    case Modality::kImage: return image_;
    case Modality::kLip: return lip_;
    case Modality::kOcr: return ocr_;
    case Modality::kText: return words_;
  }
  return {};
}

std::optional<int> Vocabulary::find_word(std::string_view word) const {
  const auto lex = lexicon();
  for (std::size_t i = 0; i < lex.size(); ++i) {
    if (lex[i] == word) return words_.begin + static_cast<int>(i);
  }
  return std::nullopt;
}

int Vocabulary::word_id(std::string_view word) const {
  if (auto id = find_word(word)) return *id;
  throw std::invalid_argument("word '" + std::string(word) + "' is not in the lexicon");
}

std::string_view Vocabulary::word(int id) const {
  if (!words_.contains(id)) throw std::out_of_range("id " + std::to_string(id) + " is not a word");
  return lexicon()[static_cast<std::size_t>(id - words_.begin)];
}

int Vocabulary::ocr_char_id(char c) const {
  const auto pos = kOcrAlphabet.find(c);
  if (pos == std::string_view::npos) {
    throw std::invalid_argument(std::string("character '") + c + "' outside the OCR alphabet");
  }
  return ocr_.begin + static_cast<int>(pos);
}

char Vocabulary::ocr_char(int id) const {
  if (!ocr_.contains(id)) throw std::out_of_range("id " + std::to_string(id) + " is not an OCR character");
  return kOcrAlphabet[static_cast<std::size_t>(id - ocr_.begin)];
}

std::string_view Vocabulary::ocr_alphabet() { return kOcrAlphabet; }

Symbol Vocabulary::symbol(int id) const {
  if (id >= 0 && id < kSpecialCount) return {SymbolKind::kSpecial, id};
  const std::pair<IdBlock, SymbolKind> table[] = {
      {tags_, SymbolKind::kTag},         {prompts_, SymbolKind::kPrompt},
      {words_, SymbolKind::kWord},       {audio_, SymbolKind::kAudioUnit},
      {lip_, SymbolKind::kLipUnit},      {image_, SymbolKind::kImageUnit},
      {ocr_, SymbolKind::kOcrChar}};
  for (const auto& [b, kind] : table) {
    if (b.contains(id)) return {kind, id - b.begin};
  }
  throw std::out_of_range("id " + std::to_string(id) + " outside the vocabulary");
}

std::string Vocabulary::describe(int id) const {
  const Symbol s = symbol(id);
  switch (s.kind) {
    case SymbolKind::kSpecial: {
      static constexpr std::string_view names[] = {"<pad>", "<bos>", "<eos>", "<sep>"};
      return std::string(names[s.index]);
    }
    case SymbolKind::kTag:
      return std::string("<tag:") + modality_letter(static_cast<Modality>(s.index)) + ">";
    case SymbolKind::kPrompt:
      return "<prompt:" + std::to_string(s.index) + ">";
    case SymbolKind::kWord:
      return std::string(word(id));
    case SymbolKind::kAudioUnit:
      return "a:" + std::string(lexicon()[static_cast<std::size_t>(s.index)]);
    case SymbolKind::kLipUnit:
      return s.index == kLipClasses ? "l:_" : "l:" + std::to_string(s.index);
    case SymbolKind::kImageUnit:
      return s.index == image_codebook_ ? "i:pad" : "i:" + std::to_string(s.index);
    case SymbolKind::kOcrChar:
      return std::string("o:") + ocr_char(id);
  }
  return "?";
}

std::uint64_t Vocabulary::layout_hash() const {
  std::string desc = "mmsr-vocab-v1";
  for (auto w : lexicon()) {
    desc += '|';
    desc += w;
  }
  desc += "|codebook=" + std::to_string(image_codebook_);
  desc += "|lip=" + std::to_string(kLipClasses);
  desc += "|ocr=";
  desc += kOcrAlphabet;
  desc += "|size=" + std::to_string(size_);
  return fnv1a64(desc);
}

}  // namespace mmsr
