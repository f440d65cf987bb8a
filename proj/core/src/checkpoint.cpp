#include "mmsr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "mmsr/rng.hpp"

namespace mmsr {

namespace {

using json = nlohmann::ordered_json;
constexpr char kMagic[8] = {'M', 'M', 'S', 'R', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_floats(std::ostream& out, const std::vector<float>& xs) {
  std::vector<char> buf(xs.size() * 4);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(xs[i]);
    for (int k = 0; k < 4; ++k) buf[i * 4 + static_cast<std::size_t>(k)] = static_cast<char>((u >> (8 * k)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> get_floats(std::istream& in, std::size_t n) {
  std::vector<unsigned char> buf(n * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("checkpoint: truncated tensor data");
  }
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(buf[i * 4 + static_cast<std::size_t>(k)]) << (8 * k);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

ModelCheckpoint ModelCheckpoint::from_model(const Transformer<float>& model, std::uint64_t vocab_hash) {
  ModelCheckpoint c;
  c.config = model.config();
  c.vocab_hash = vocab_hash;
  c.parameters.assign(model.parameters().begin(), model.parameters().end());
  return c;
}

Transformer<float> ModelCheckpoint::to_model() const {
  Transformer<float> m(config);
  if (parameters.size() != m.parameters().size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  std::copy(parameters.begin(), parameters.end(), m.parameters().begin());
  return m;
}

std::uint64_t ModelCheckpoint::parameter_hash() const {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(parameters.data()), parameters.size() * sizeof(float)));
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  const auto layout = parameter_layout(ckpt.config);
  if (ckpt.parameters.size() != parameter_count(ckpt.config)) {
    throw std::invalid_argument("save_checkpoint: parameter count does not match config");
  }
  json header;
  header["format"] = "mmsr-checkpoint";
  header["config"] = {{"n_layers", ckpt.config.n_layers},   {"n_heads", ckpt.config.n_heads},
                      {"d_model", ckpt.config.d_model},     {"d_ff", ckpt.config.d_ff},
                      {"max_seq_len", ckpt.config.max_seq_len}, {"vocab_size", ckpt.config.vocab_size},
                      {"dropout_rate", ckpt.config.dropout_rate}};
  header["vocab_hash"] = hex64(ckpt.vocab_hash);
  header["parameter_count"] = ckpt.parameters.size();
  json tensors = json::array();
  for (const auto& t : layout) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = tensors;
  header["optimizer"] = ckpt.optimizer ? json{{"present", true}, {"step", ckpt.optimizer->step}}
                                       : json{{"present", false}};
  header["metadata"] = {{"step", ckpt.metadata.step}, {"dev_wer_history", ckpt.metadata.dev_wer_history}};
  const std::string text = header.dump();

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_floats(out, ckpt.parameters);
    if (ckpt.optimizer) {
      if (ckpt.optimizer->m.size() != ckpt.parameters.size() || ckpt.optimizer->v.size() != ckpt.parameters.size()) {
        throw std::invalid_argument("save_checkpoint: optimizer state size mismatch");
      }
      put_floats(out, ckpt.optimizer->m);
      put_floats(out, ckpt.optimizer->v);
    }
    if (!out) throw std::runtime_error("write failed for checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error(path.string() + " is not an mmsr checkpoint");
  }
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = get_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(text);

  ModelCheckpoint c;
  const auto& cfg = header.at("config");
  c.config.n_layers = cfg.at("n_layers").get<int>();
  c.config.n_heads = cfg.at("n_heads").get<int>();
  c.config.d_model = cfg.at("d_model").get<int>();
  c.config.d_ff = cfg.at("d_ff").get<int>();
  c.config.max_seq_len = cfg.at("max_seq_len").get<int>();
  c.config.vocab_size = cfg.at("vocab_size").get<int>();
  c.config.dropout_rate = cfg.at("dropout_rate").get<float>();
  c.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
  const std::size_t n = parameter_count(c.config);
  if (header.at("parameter_count").get<std::size_t>() != n) {
    throw std::runtime_error("checkpoint: header parameter count disagrees with config");
  }
  c.parameters = get_floats(in, n);
  if (header.at("optimizer").at("present").get<bool>()) {
    OptimizerState st;
    st.step = header.at("optimizer").at("step").get<long>();
    st.m = get_floats(in, n);
    st.v = get_floats(in, n);
    c.optimizer = std::move(st);
  }
  c.metadata.step = header.at("metadata").at("step").get<long>();
  c.metadata.dev_wer_history = header.at("metadata").at("dev_wer_history").get<std::vector<double>>();
  return c;
}

}  // namespace mmsr
