#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mmsr/checkpoint.hpp"
#include "mmsr/io.hpp"
#include "test_support.hpp"

using namespace mmsr;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.max_seq_len = 40;
  c.vocab_size = 30;
  c.dropout_rate = 0.1f;
  return c;
}

ModelCheckpoint sample(bool with_optimizer) {
  Transformer<float> m(small_config());
  m.init_random(99);
  auto c = ModelCheckpoint::from_model(m, 0xdeadbeefcafef00dULL);
  c.metadata.step = 1234;
  c.metadata.dev_wer_history = {0.9, 0.5, 0.123456789012345};
  if (with_optimizer) {
    OptimizerState st;
    st.step = 77;
    Rng rng(4);
    for (std::size_t i = 0; i < c.parameters.size(); ++i) {
      st.m.push_back(static_cast<float>(rng.normal()));
      st.v.push_back(static_cast<float>(rng.uniform()));
    }
    c.optimizer = std::move(st);
  }
  return c;
}

}  // namespace

TEST_CASE("round trip is exact") {
  test::TempDir dir("ckpt");
  for (bool opt : {false, true}) {
    const auto c = sample(opt);
    save_checkpoint(dir / "a.ckpt", c);
    const auto back = load_checkpoint(dir / "a.ckpt");
    CHECK(back == c);
    CHECK(back.parameter_hash() == c.parameter_hash());
    const auto model = back.to_model();
    const std::vector<int> ids = {1, 4, 9, 2};
    CHECK(model.logits(ids) == c.to_model().logits(ids));
  }
}

TEST_CASE("saving twice gives identical bytes") {
  test::TempDir dir("ckpt");
  const auto c = sample(true);
  save_checkpoint(dir / "a.ckpt", c);
  save_checkpoint(dir / "b.ckpt", c);
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
}

TEST_CASE("parameter hash tracks parameter changes") {
  auto c = sample(false);
  const auto h = c.parameter_hash();
  c.parameters[17] += 1e-3f;
  CHECK(c.parameter_hash() != h);
}

TEST_CASE("corrupt files are rejected") {
  test::TempDir dir("ckpt");
  save_checkpoint(dir / "good.ckpt", sample(true));
  const std::string bytes = read_file(dir / "good.ckpt");

  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    write_file_atomic(dir / "bad.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  }
  SUBCASE("unknown version") {
    std::string bad = bytes;
    bad[8] = 9;
    write_file_atomic(dir / "bad.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  }
  SUBCASE("truncated tensor data") {
    write_file_atomic(dir / "bad.ckpt", bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  }
  SUBCASE("truncated header") {
    write_file_atomic(dir / "bad.ckpt", bytes.substr(0, 20));
    CHECK_THROWS(load_checkpoint(dir / "bad.ckpt"));
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), std::runtime_error); }
}

TEST_CASE("mismatched sizes are refused on save") {
  test::TempDir dir("ckpt");
  auto c = sample(true);
  c.optimizer->m.pop_back();
  CHECK_THROWS_AS(save_checkpoint(dir / "x.ckpt", c), std::invalid_argument);
  c = sample(false);
  c.parameters.pop_back();
  CHECK_THROWS_AS(save_checkpoint(dir / "x.ckpt", c), std::invalid_argument);
}
