#include "mmsr/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "mmsr/io.hpp"
#include "mmsr/rng.hpp"

namespace mmsr {

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kFormat = "mmsr-dataset-v1";
constexpr int kOracleSentences = 3;
constexpr int kDistractorSentences = 10;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

json snr_to_json(double snr) {
  if (std::isinf(snr)) return snr > 0 ? "inf" : "-inf";
  return snr;
}

double snr_from_json(const json& j) {
  if (j.is_string()) return parse_snr(j.get<std::string>());
  return j.get<double>();
}

json spans_to_json(const std::vector<Span>& spans) {
  json arr = json::array();
  for (const auto& s : spans) arr.push_back({s.equation_index, s.start, s.end});
  return arr;
}

std::vector<Span> spans_from_json(const json& j) {
  std::vector<Span> out;
  for (const auto& t : j) out.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
  return out;
}

json channels_to_json(const ChannelConfig& c) {
  return {{"audio_repeat", c.audio_repeat},
          {"image_grid", c.image_grid},
          {"image_codebook", c.image_codebook},
          {"ocr_real_cer", c.ocr_real_cer},
          {"depth_limit", c.depth_limit}};
}

ChannelConfig channels_from_json(const json& j) {
  ChannelConfig c;
  c.audio_repeat = j.at("audio_repeat").get<int>();
  c.image_grid = j.at("image_grid").get<int>();
  c.image_codebook = j.at("image_codebook").get<int>();
  c.ocr_real_cer = j.at("ocr_real_cer").get<double>();
  c.depth_limit = j.at("depth_limit").get<int>();
  return c;
}

std::filesystem::path split_path(const std::filesystem::path& dir, Split s) {
  return dir / (std::string(split_name(s)) + ".jsonl");
}

std::uint64_t ocr_seed(std::uint64_t example_seed) { return mix_seed(example_seed, "ocr"); }

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

OcrVariant OcrVariant::parse(std::string_view s) {
  if (s == "none") return {Kind::kNone, 0};
  if (s == "real") return {Kind::kReal, 0};
  if (s == "oracle3") return {Kind::kOracle3, 0};
  if (s == "oracle10") return {Kind::kOracle10, 0};
  if (s.starts_with("filtered(") && s.ends_with(")")) {
    const std::string num(s.substr(9, s.size() - 10));
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == num.size() && !num.empty() && k >= 1) return {Kind::kFiltered, k};
  }
  throw std::invalid_argument("unknown OCR variant '" + std::string(s) + "'");
}

std::string OcrVariant::str() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kReal: return "real";
    case Kind::kOracle3: return "oracle3";
    case Kind::kOracle10: return "oracle10";
    case Kind::kFiltered: return "filtered(" + std::to_string(k) + ")";
  }
  return "?";
}

int DatasetManifest::count(Split s) const {
  switch (s) {
    case Split::kTrain: return n_train;
    case Split::kDev: return n_dev;
    case Split::kTest: return n_test;
  }
  return 0;
}

std::uint64_t audio_noise_seed(std::uint64_t example_seed, double snr_db) {
  return mix_seed(mix_seed(example_seed, "audio"), format_snr(snr_db));
}

double schedule_snr(std::uint64_t example_seed, std::string_view purpose) {
  Rng rng(mix_seed(example_seed, purpose));
  const auto grid = snr_grid();
  return grid[rng.below(grid.size())];
}

Example make_example(const Vocabulary& vocab, const ChannelConfig& cfg, std::string id,
                     std::uint64_t seed, double snr_db) {
  Example ex;
  ex.id = std::move(id);
  ex.seed = seed;
  ex.triple = generate_triple(seed, cfg.depth_limit);
  ex.snr_db = snr_db;
  ex.streams[Modality::kAudio] =
      encode_audio(vocab, ex.triple, cfg.audio_repeat, NoiseSpec{snr_db}, audio_noise_seed(seed, snr_db));
  ex.streams[Modality::kImage] = encode_image(vocab, ex.triple, cfg.image_grid);
  ex.streams[Modality::kLip] = encode_lip(vocab, ex.triple);
  ex.streams[Modality::kOcr] = encode_ocr(vocab, ex.triple, 0.0, ocr_seed(seed), kOracleSentences);
  ex.target = encode_target(vocab, ex.triple);
  ex.ocr_variant = {OcrVariant::Kind::kOracle3, 0};
  return ex;
}

std::string example_to_record(const Example& ex) {
  json j;
  j["id"] = ex.id;
  j["seed"] = hex64(ex.seed);
  j["snr_db"] = snr_to_json(ex.snr_db);
  j["spoken_indices"] = {ex.triple.spoken_indices[0], ex.triple.spoken_indices[1]};
  j["equations"] = {ex.triple.equations[0].text, ex.triple.equations[1].text, ex.triple.equations[2].text};
  for (const auto& [m, stream] : ex.streams) {
    const std::string suffix(1, modality_letter(m));
    j["tokens_" + suffix] = stream.ids;
    j["spans_" + suffix] = spans_to_json(stream.spans);
  }
  j["tokens_T"] = ex.target.ids;
  j["spans_T"] = spans_to_json(ex.target.spans);
  j["ocr_variant"] = ex.ocr_variant.str();
  return j.dump();
}

Example example_from_record(std::string_view line) {
  const json j = json::parse(line);
  Example ex;
  ex.id = j.at("id").get<std::string>();
  ex.seed = parse_hex64(j.at("seed").get<std::string>());
  ex.snr_db = snr_from_json(j.at("snr_db"));
  const auto& texts = j.at("equations");
  for (std::size_t i = 0; i < 3; ++i) ex.triple.equations[i].text = texts.at(i).get<std::string>();
  ex.triple.spoken_indices = {j.at("spoken_indices").at(0).get<int>(),
                              j.at("spoken_indices").at(1).get<int>()};
  for (auto m : kInputModalities) {
    const std::string suffix(1, modality_letter(m));
    if (!j.contains("tokens_" + suffix)) continue;
    TokenStream s{m, j.at("tokens_" + suffix).get<std::vector<int>>(),
                  spans_from_json(j.at("spans_" + suffix))};
    ex.streams.emplace(m, std::move(s));
  }
  ex.target = {Modality::kText, j.at("tokens_T").get<std::vector<int>>(), spans_from_json(j.at("spans_T"))};
  ex.ocr_variant = OcrVariant::parse(j.at("ocr_variant").get<std::string>());
  return ex;
}

DatasetManifest build_dataset(const std::filesystem::path& dir, int n_examples, std::uint64_t seed,
                              const ChannelConfig& channels, const SplitRatios& ratios) {
  if (n_examples < 10) throw std::invalid_argument("build_dataset: need at least 10 examples");
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("build_dataset: split ratios must be non-negative and sum to 1");
  }
  const Vocabulary vocab(channels.image_codebook);

  DatasetManifest m;
  m.seed = seed;
  m.n_examples = n_examples;
  m.ratios = ratios;
  m.channels = channels;
  m.n_train = static_cast<int>(std::lround(n_examples * ratios.train));
  m.n_dev = static_cast<int>(std::lround(n_examples * ratios.dev));
  m.n_test = n_examples - m.n_train - m.n_dev;
  if (m.n_test < 0) throw std::invalid_argument("build_dataset: split ratios round past the total");

  json cfg = {{"format", kFormat},
              {"seed", hex64(seed)},
              {"n_examples", n_examples},
              {"split_ratios", {ratios.train, ratios.dev, ratios.test}},
              {"channels", channels_to_json(channels)},
              {"vocab_hash", hex64(vocab.layout_hash())}};
  m.config_hash = fnv1a64(cfg.dump());

  std::filesystem::create_directories(dir);
  const std::pair<Split, int> plan[] = {{Split::kTrain, m.n_train}, {Split::kDev, m.n_dev}, {Split::kTest, m.n_test}};
  int index = 0;
  for (const auto& [split, count] : plan) {
    std::string contents;
    for (int i = 0; i < count; ++i, ++index) {
      char id[32];
      std::snprintf(id, sizeof id, "eq-%06d", index);
      const std::uint64_t ex_seed = mix_seed(seed, static_cast<std::uint64_t>(index));
      // Training audio carries its drawn noise; dev/test are stored clean and
      // re-noised on load.
      const double snr = split == Split::kTrain ? schedule_snr(ex_seed, "train-snr")
                                                : std::numeric_limits<double>::infinity();
      contents += example_to_record(make_example(vocab, channels, id, ex_seed, snr));
      contents += '\n';
    }
    write_file_atomic(split_path(dir, split), contents);
  }

  json grid = json::array();
  for (double s : snr_grid()) grid.push_back(format_snr(s));
  json manifest = cfg;
  manifest["counts"] = {{"train", m.n_train}, {"dev", m.n_dev}, {"test", m.n_test}};
  manifest["train_snr_schedule"] = grid;
  manifest["config_hash"] = hex64(m.config_hash);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no dataset manifest in " + dir.string());
  const json j = json::parse(in);
  if (j.at("format").get<std::string>() != kFormat) {
    throw std::runtime_error("unsupported dataset format in " + dir.string());
  }
  DatasetManifest m;
  m.seed = parse_hex64(j.at("seed").get<std::string>());
  m.n_examples = j.at("n_examples").get<int>();
  const auto& r = j.at("split_ratios");
  m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  m.channels = channels_from_json(j.at("channels"));
  m.n_train = j.at("counts").at("train").get<int>();
  m.n_dev = j.at("counts").at("dev").get<int>();
  m.n_test = j.at("counts").at("test").get<int>();
  m.config_hash = parse_hex64(j.at("config_hash").get<std::string>());
  return m;
}

Example materialize_example(const Vocabulary& vocab, const ChannelConfig& cfg, Example stored,
                            SnrRequest snr, ModalitySet modalities, OcrVariant ocr) {
  const EquationTriple triple = generate_triple(stored.seed, cfg.depth_limit);
  for (std::size_t i = 0; i < 3; ++i) {
    if (triple.equations[i].text != stored.triple.equations[i].text) {
      throw std::runtime_error("example " + stored.id + " does not match its generator seed");
    }
  }
  Example ex;
  ex.id = std::move(stored.id);
  ex.seed = stored.seed;
  ex.triple = triple;
  ex.target = std::move(stored.target);
  ex.snr_db = stored.snr_db;

  if (modalities.contains(Modality::kOcr) == (ocr.kind == OcrVariant::Kind::kNone)) {
    throw std::invalid_argument("OCR variant '" + ocr.str() + "' does not match modality set " +
                                modalities.letters());
  }

  for (auto m : modalities.ordered()) {
    switch (m) {
      case Modality::kAudio:
        if (snr.mode != SnrRequest::Mode::kStored) {
          ex.snr_db = snr.mode == SnrRequest::Mode::kFixed ? snr.snr_db : schedule_snr(ex.seed, "eval-snr");
          ex.streams[m] = encode_audio(vocab, triple, cfg.audio_repeat, NoiseSpec{ex.snr_db},
                                       audio_noise_seed(ex.seed, ex.snr_db));
        } else {
          ex.streams[m] = stored.streams.at(m);
        }
        break;
      case Modality::kImage:
      case Modality::kLip:
        ex.streams[m] = stored.streams.at(m);
        break;
      case Modality::kOcr:
        switch (ocr.kind) {
          case OcrVariant::Kind::kOracle3:
            ex.streams[m] = stored.streams.at(m);
            break;
          case OcrVariant::Kind::kReal:
            ex.streams[m] = encode_ocr(vocab, triple, cfg.ocr_real_cer, ocr_seed(ex.seed), kOracleSentences);
            break;
          case OcrVariant::Kind::kOracle10:
            ex.streams[m] = encode_ocr(vocab, triple, 0.0, ocr_seed(ex.seed), kDistractorSentences);
            break;
          case OcrVariant::Kind::kFiltered: {
            std::vector<std::string> words;
            for (const auto& s : ocr_sentences(triple, ocr_seed(ex.seed), kDistractorSentences, cfg.depth_limit)) {
              auto w = ocr_words(s);
              words.insert(words.end(), w.begin(), w.end());
            }
            const auto kept = fq_filter(words, FrequencyTable::bundled(), ocr.k);
            const std::string sentence = join_words(kept);
            ex.streams[m] = encode_ocr_sentences(vocab, std::span(&sentence, 1), 0.0, ocr_seed(ex.seed));
            break;
          }
          case OcrVariant::Kind::kNone:
            break;
        }
        break;
      case Modality::kText:
        break;
    }
  }
  ex.ocr_variant = ocr;
  return ex;
}

ExampleReader::ExampleReader(const std::filesystem::path& dir, Split split, SnrRequest snr,
                             ModalitySet modalities, OcrVariant ocr)
    : manifest_(read_manifest(dir)),
      vocab_(manifest_.channels.image_codebook),
      in_(split_path(dir, split)),
      snr_(snr),
      modalities_(modalities),
      ocr_(ocr) {
  if (!in_) throw std::runtime_error("missing split file " + split_path(dir, split).string());
  if (modalities.empty()) throw std::invalid_argument("empty modality set");
}

std::optional<Example> ExampleReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    if (line.empty()) continue;
    return materialize(example_from_record(line));
  }
  return std::nullopt;
}

Example ExampleReader::materialize(Example stored) const {
  return materialize_example(vocab_, manifest_.channels, std::move(stored), snr_, modalities_, ocr_);
}

std::vector<Example> load_examples(const std::filesystem::path& dir, Split split, SnrRequest snr,
                                   ModalitySet modalities, OcrVariant ocr) {
  ExampleReader reader(dir, split, snr, modalities, ocr);
  std::vector<Example> out;
  while (auto ex = reader.next()) out.push_back(std::move(*ex));
  return out;
}

}  // namespace mmsr
