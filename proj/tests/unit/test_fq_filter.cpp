#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mmsr/dataset.hpp"
#include "mmsr/rng.hpp"

using namespace mmsr;

namespace {

FrequencyTable toy_table() {
  return FrequencyTable({{"the", 1}, {"of", 2}, {"gradient", 5000}, {"transformer", 9000}});
}

using Words = std::vector<std::string>;

}  // namespace

TEST_CASE("toy table keeps the rarest words in order") {
  const Words words = {"the", "gradient", "of", "transformer"};
  CHECK(fq_filter(words, toy_table(), 2) == Words{"gradient", "transformer"});
  CHECK(fq_filter(words, toy_table(), 1) == Words{"transformer"});
  CHECK(fq_filter(words, toy_table(), 4) == words);
  CHECK(fq_filter(words, toy_table(), 50) == words);
}

TEST_CASE("duplicates keep their first occurrence") {
  const Words words = {"of", "the", "of", "gradient", "the"};
  CHECK(fq_filter(words, toy_table(), 10) == Words{"of", "the", "gradient"});
  CHECK(fq_filter(words, toy_table(), 2) == Words{"of", "gradient"});
}

TEST_CASE("unknown words rank as rarest") {
  CHECK(std::isinf(toy_table().rank("zeitgeist")));
  const Words words = {"gradient", "zeitgeist", "the"};
  CHECK(fq_filter(words, toy_table(), 1) == Words{"zeitgeist"});
  // Ties keep the earlier word.
  CHECK(fq_filter(Words{"qq", "zz", "the"}, toy_table(), 1) == Words{"qq"});
}

TEST_CASE("K must be positive") {
  CHECK_THROWS_AS(fq_filter(Words{"a"}, toy_table(), 0), std::invalid_argument);
}

TEST_CASE("filter is idempotent on random word lists") {
  const Words pool = {"the", "of", "and", "1", "2", "17", "+", "=", "log", "^", "gradient", "zeta", "omega", "12"};
  const auto& table = FrequencyTable::bundled();
  Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    Words words(1 + rng.below(25));
    for (auto& w : words) w = pool[rng.below(pool.size())];
    const int k = 1 + static_cast<int>(rng.below(12));
    const auto once = fq_filter(words, table, k);
    CHECK(fq_filter(once, table, k) == once);
    CHECK(static_cast<int>(once.size()) <= k);
  }
}

TEST_CASE("table parsing") {
  const auto t = FrequencyTable::parse("# comment\nthe\nof\n\nrare 100\nrarer\n");
  CHECK(t.rank("the") == 1);
  CHECK(t.rank("of") == 2);
  CHECK(t.rank("rare") == 100);
  CHECK(t.rank("rarer") == 101);
  CHECK(t.size() == 4);
  CHECK_THROWS_AS(FrequencyTable::parse("a\na\n"), std::invalid_argument);
  CHECK_THROWS_AS(FrequencyTable::parse("a 3\nb 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(FrequencyTable::parse("a 0\n"), std::invalid_argument);
  CHECK_THROWS(FrequencyTable::load("/nonexistent/ranks.txt"));
}

TEST_CASE("bundled table covers stopwords and equation symbols") {
  const auto& t = FrequencyTable::bundled();
  CHECK(t.rank("the") == 1);
  CHECK(t.rank("of") < t.rank("seventeen"));
  for (const char* w : {"+", "=", "^", "log", "0", "20", "/", "-"}) CHECK(std::isfinite(t.rank(w)));
}

TEST_CASE("OCR word splitting") {
  CHECK(ocr_words("(3 + 15) - 2 = 16") == Words{"(", "3", "+", "15", ")", "-", "2", "=", "16"});
  CHECK(ocr_words("log 8 = 3") == Words{"log", "8", "=", "3"});
  CHECK(ocr_words("") == Words{});
}
