#include "mmsr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mmsr/channels.hpp"

namespace mmsr {

std::vector<std::string> normalize_text(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char raw : s) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (keep) {
      cur += c;
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  // Single-row DP over the hypothesis.
  std::vector<std::size_t> row(hyp.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row.back();
}

double wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

void WerTally::add(std::span<const std::string> ref, std::span<const std::string> hyp) {
  edits += edit_distance(ref, hyp);
  ref_words += ref.size();
}

double WerTally::rate() const {
  if (ref_words == 0) throw std::invalid_argument("WerTally: no reference words");
  return static_cast<double>(edits) / static_cast<double>(ref_words);
}

std::optional<double> relative_benefit(double wer_a, double wer_xa) {
  if (!(wer_a > 0.0)) return std::nullopt;
  return (wer_a - wer_xa) / wer_a;
}

double ReportRow::average_wer() const {
  if (wer.empty()) throw std::logic_error("ReportRow: no cells");
  return std::accumulate(wer.begin(), wer.end(), 0.0) / static_cast<double>(wer.size());
}

const ReportRow* EvalReport::find(std::string_view config) const {
  for (const auto& r : rows) {
    if (r.config == config) return &r;
  }
  return nullptr;
}

namespace {

std::optional<double> cell(const ReportRow& row, double snr) {
  for (std::size_t i = 0; i < row.snr_db.size(); ++i) {
    if (row.snr_db[i] == snr) return row.wer[i];
  }
  return std::nullopt;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace

std::optional<double> EvalReport::benefit(std::string_view config, double snr_db) const {
  const ReportRow* base = find(baseline);
  const ReportRow* row = find(config);
  if (!base || !row) return std::nullopt;
  const auto a = cell(*base, snr_db);
  const auto x = cell(*row, snr_db);
  if (!a || !x) return std::nullopt;
  return relative_benefit(*a, *x);
}

std::optional<double> EvalReport::average_benefit(std::string_view config) const {
  const ReportRow* base = find(baseline);
  const ReportRow* row = find(config);
  if (!base || !row) return std::nullopt;
  return relative_benefit(base->average_wer(), row->average_wer());
}

std::string EvalReport::to_table() const {
  std::size_t name_w = 8;
  for (const auto& r : rows) name_w = std::max(name_w, r.config.size() + 2);
  std::ostringstream os;
  os << pad_right("config", name_w);
  const std::vector<double> grid = rows.empty() ? std::vector<double>{} : rows.front().snr_db;
  for (double s : grid) os << pad_left(format_snr(s), 8);
  os << pad_left("Avg", 8) << pad_left("Benefit", 9) << '\n';
  for (const auto& r : rows) {
    os << pad_right(r.config, name_w);
    for (double w : r.wer) os << pad_left(fmt("%.1f", 100.0 * w), 8);
    os << pad_left(fmt("%.1f", 100.0 * r.average_wer()), 8);
    if (r.config == baseline) {
      os << pad_left("-", 9);
    } else if (auto b = average_benefit(r.config)) {
      os << pad_left(fmt("%+.1f%%", 100.0 * *b), 9);
    } else {
      os << pad_left("n/a", 9);
    }
    os << '\n';
  }
  return os.str();
}

std::string EvalReport::to_benefit_table() const {
  std::size_t name_w = 8;
  for (const auto& r : rows) name_w = std::max(name_w, r.config.size() + 2);
  std::ostringstream os;
  os << pad_right("benefit", name_w);
  const std::vector<double> grid = rows.empty() ? std::vector<double>{} : rows.front().snr_db;
  for (double s : grid) os << pad_left(format_snr(s), 8);
  os << pad_left("Avg", 8) << '\n';
  for (const auto& r : rows) {
    if (r.config == baseline) continue;
    os << pad_right(r.config, name_w);
    for (double s : r.snr_db) {
      const auto b = benefit(r.config, s);
      os << pad_left(b ? fmt("%+.1f", 100.0 * *b) : "n/a", 8);
    }
    const auto avg = average_benefit(r.config);
    os << pad_left(avg ? fmt("%+.1f", 100.0 * *avg) : "n/a", 8) << '\n';
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  using json = nlohmann::ordered_json;
  json j;
  j["baseline"] = baseline;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    json row;
    row["config"] = r.config;
    json cells = json::array();
    for (std::size_t i = 0; i < r.snr_db.size(); ++i) {
      json c;
      c["snr_db"] = format_snr(r.snr_db[i]);
      c["wer"] = r.wer[i];
      if (i < r.wer_spread.size()) c["wer_spread"] = r.wer_spread[i];
      if (r.config != baseline) {
        const auto b = benefit(r.config, r.snr_db[i]);
        c["benefit"] = b ? json(*b) : json(nullptr);
      }
      cells.push_back(c);
    }
    row["cells"] = cells;
    row["avg_wer"] = r.average_wer();
    if (r.config != baseline) {
      const auto b = average_benefit(r.config);
      row["avg_benefit"] = b ? json(*b) : json(nullptr);
    }
    j["rows"].push_back(row);
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport rep;
  rep.baseline = j.at("baseline").get<std::string>();
  for (const auto& row : j.at("rows")) {
    ReportRow r;
    r.config = row.at("config").get<std::string>();
    for (const auto& c : row.at("cells")) {
      r.snr_db.push_back(parse_snr(c.at("snr_db").get<std::string>()));
      r.wer.push_back(c.at("wer").get<double>());
      if (c.contains("wer_spread")) r.wer_spread.push_back(c.at("wer_spread").get<double>());
    }
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

}  // namespace mmsr
