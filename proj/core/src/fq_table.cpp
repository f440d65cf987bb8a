#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mmsr/dataset.hpp"

namespace mmsr {

namespace detail {
extern const std::string_view kBundledFrequencyRanks;
}

FrequencyTable::FrequencyTable(std::unordered_map<std::string, long> ranks) : ranks_(std::move(ranks)) {
  std::unordered_set<long> seen;
  for (const auto& [word, r] : ranks_) {
    if (r < 1) throw std::invalid_argument("FrequencyTable: rank of '" + word + "' must be positive");
    if (!seen.insert(r).second) {
      throw std::invalid_argument("FrequencyTable: duplicate rank " + std::to_string(r));
    }
  }
}

FrequencyTable FrequencyTable::parse(std::string_view text) {
  std::unordered_map<std::string, long> ranks;
  std::istringstream in{std::string(text)};
  long next_rank = 1;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string word;
    long rank = next_rank;
    fields >> word;
    if (word.empty()) continue;
    if (!(fields >> rank)) rank = next_rank;
    if (!ranks.emplace(word, rank).second) {
      throw std::invalid_argument("FrequencyTable: duplicate word '" + word + "'");
    }
    next_rank = rank + 1;
  }
  return FrequencyTable(std::move(ranks));
}

FrequencyTable FrequencyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open frequency table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const FrequencyTable& FrequencyTable::bundled() {
  static const FrequencyTable table = parse(detail::kBundledFrequencyRanks);
  return table;
}

double FrequencyTable::rank(std::string_view word) const {
  const auto it = ranks_.find(std::string(word));
  return it == ranks_.end() ? std::numeric_limits<double>::infinity() : static_cast<double>(it->second);
}

std::vector<std::string> fq_filter(std::span<const std::string> words, const FrequencyTable& table,
                                   int k) {
  if (k < 1) throw std::invalid_argument("fq_filter: K must be >= 1");
  std::vector<std::string> unique;
  std::unordered_set<std::string> seen;
  for (const auto& w : words) {
    if (seen.insert(w).second) unique.push_back(w);
  }
  if (static_cast<int>(unique.size()) <= k) return unique;

  std::vector<std::size_t> order(unique.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.rank(unique[a]) > table.rank(unique[b]);
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(unique[i]);
  return out;
}

std::vector<std::string> ocr_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur += static_cast<char>(std::tolower(uc));
    } else {
      flush();
      if (!std::isspace(uc)) out.emplace_back(1, c);
    }
  }
  flush();
  return out;
}

}  // namespace mmsr
