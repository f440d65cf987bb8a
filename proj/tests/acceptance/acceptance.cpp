// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code
// is nonzero when any criterion fails.
//
// Property criteria (1-8) and the memorization check (14) run live. Trend
// criteria (9-13) are recomputed from the stored per-cell WERs of the results
// bundle, after verifying every cell against the plan files. --rerun trains
// the bundle first (hours on one core).

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mmsr/dataset.hpp"
#include "mmsr/evalkit.hpp"
#include "mmsr/harness.hpp"
#include "mmsr/io.hpp"
#include "mmsr/model.hpp"
#include "mmsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmsr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  char t[32];
  std::snprintf(t, sizeof t, "%.1fs", secs);
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << " " << name << " -- " << o.detail << " [" << t << "]"
            << std::endl;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- A1 ----------------------------------------------------------------

using Words = std::vector<std::string>;

std::size_t edit_recursive(const Words& r, std::size_t i, const Words& h, std::size_t j) {
  if (i == 0) return j;
  if (j == 0) return i;
  return std::min({edit_recursive(r, i - 1, h, j - 1) + (r[i - 1] == h[j - 1] ? 0 : 1),
                   edit_recursive(r, i - 1, h, j) + 1, edit_recursive(r, i, h, j - 1) + 1});
}

Outcome wer_oracle() {
  std::vector<Words> all = {{}};
  for (std::size_t len = 1; len <= 4; ++len) {
    const std::size_t start = all.size();
    for (std::size_t i = 0; i < start; ++i) {
      if (all[i].size() != len - 1) continue;
      for (const char* s : {"a", "b", "c"}) {
        auto w = all[i];
        w.push_back(s);
        all.push_back(w);
      }
    }
  }
  std::size_t pairs = 0, mismatches = 0;
  for (const auto& r : all)
    for (const auto& h : all) {
      ++pairs;
      mismatches += edit_distance(r, h) != edit_recursive(r, r.size(), h, h.size());
    }
  return {mismatches == 0 && pairs == 121 * 121,
          std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches"};
}

// ---- A2, A3, A6 --------------------------------------------------------

AssembledSequence masked_after(std::vector<int> ids, int bos) {
  AssembledSequence s;
  s.example_id = "synthetic";
  s.ids = std::move(ids);
  s.bos_position = bos;
  s.loss_mask.assign(s.ids.size(), 0);
  for (std::size_t t = static_cast<std::size_t>(bos) + 1; t < s.ids.size(); ++t) s.loss_mask[t] = 1;
  s.segments = {{"T", bos + 1, static_cast<int>(s.ids.size())}};
  return s;
}

std::vector<int> random_ids(Rng& rng, int n, int v) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (auto& x : ids) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
  return ids;
}

Outcome gradient_check() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.max_seq_len = 16;
  c.vocab_size = 32;
  Transformer<double> m(c);
  Rng rng(2024);
  for (auto& p : m.parameters()) p = 0.3 * rng.normal();
  const std::vector<AssembledSequence> batch = {masked_after(random_ids(rng, 9, 32), 4),
                                                masked_after(random_ids(rng, 13, 32), 5)};
  std::vector<double> grad(m.parameters().size());
  m.loss_and_grad(batch, grad);
  const double h = 1e-4;
  double worst = 0;
  std::string worst_name;
  for (const auto& t : m.layout()) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      auto p = m.parameters();
      const std::size_t i = t.offset + k;
      const double saved = p[i];
      p[i] = saved + h;
      const double up = m.loss(batch);
      p[i] = saved - h;
      const double down = m.loss(batch);
      p[i] = saved;
      const double num = (up - down) / (2 * h);
      // Relative error with a floor so exact zeros compare absolutely.
      const double err = std::abs(num - grad[i]) / std::max(1e-6, std::abs(num) + std::abs(grad[i]));
      if (err > worst) {
        worst = err;
        worst_name = t.name;
      }
    }
  }
  return {worst < 1e-4, fmt("max relative error %.2e", worst) + " (" + worst_name + ") over " +
                            std::to_string(m.parameters().size()) + " parameters"};
}

Outcome causality() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.max_seq_len = 40;
  c.vocab_size = 32;
  Transformer<float> m(c);
  m.init_random(5);
  Rng rng(6);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(38));
    auto ids = random_ids(rng, n, 32);
    const int cut = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    const auto before = m.logits(ids);
    for (int t = cut + 1; t < n; ++t) ids[static_cast<std::size_t>(t)] = static_cast<int>(rng.below(32));
    const auto after = m.logits(ids);
    violations += !(before.topRows(cut + 1) == after.topRows(cut + 1));
  }
  return {violations == 0, "100 cases, " + std::to_string(violations) + " with changed prefix logits"};
}

Outcome loss_normalization() {
  // Constructed logits: row t-1 scores ids[t]; values chosen per position.
  AssembledSequence s;
  s.example_id = "segments";
  s.ids = {1, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  s.bos_position = 0;
  s.loss_mask.assign(s.ids.size(), 1);
  s.loss_mask[0] = 0;
  s.segments = {{"short", 1, 3}, {"long", 3, 13}};
  RowMatrix<double> logits = RowMatrix<double>::Zero(static_cast<Eigen::Index>(s.ids.size()), 16);
  for (std::size_t t = 1; t < s.ids.size(); ++t) logits(static_cast<Eigen::Index>(t) - 1, s.ids[t]) = 0.25 * t;
  std::vector<double> ce(s.ids.size(), 0.0);
  for (std::size_t t = 1; t < s.ids.size(); ++t) {
    const auto row = logits.row(static_cast<Eigen::Index>(t) - 1);
    ce[t] = std::log(row.array().exp().sum()) - row(s.ids[t]);
  }
  double c1 = 0, c2 = 0;
  for (std::size_t t = 1; t < 3; ++t) c1 += ce[t];
  for (std::size_t t = 3; t < 13; ++t) c2 += ce[t];
  c1 /= 2;
  c2 /= 10;
  const double got = sequence_loss(logits, s);
  auto swapped = s;
  std::swap(swapped.segments[0], swapped.segments[1]);
  const double got_swapped = sequence_loss(logits, swapped);
  const double expect = (c1 + c2) / 2;
  const bool ok = std::abs(got - expect) < 1e-12 && std::abs(got_swapped - expect) < 1e-12;
  return {ok, fmt("lengths (2,10): loss %.12f, (c1+c2)/2 %.12f, swapped %.12f", got, expect, got_swapped)};
}

// ---- A4, A5 ------------------------------------------------------------

Outcome noise_placement() {
  const Vocabulary v;
  const double snr = -10.0;
  long first_changes = 0, trials = 0, changed = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto triple = generate_triple(mix_seed(7, s));
    const double inf = std::numeric_limits<double>::infinity();
    const auto clean = encode_audio(v, triple, ChannelConfig{}.audio_repeat,
                                    {inf, NoiseRegion::kSecondHalfPerEquation}, mix_seed(8, s)).ids;
    const auto a = encode_audio(v, triple, ChannelConfig{}.audio_repeat,
                                {snr, NoiseRegion::kSecondHalfPerEquation}, mix_seed(8, s));
    for (const auto& sp : a.spans) {
      const int boundary = sp.start + clean_prefix_length(sp.length());
      for (int i = sp.start; i < sp.end; ++i) {
        const bool diff = a.ids[static_cast<std::size_t>(i)] != clean[static_cast<std::size_t>(i)];
        if (i < boundary) {
          first_changes += diff;
        } else {
          ++trials;
          changed += diff;
        }
      }
    }
  }
  const double q = snr_to_corruption(snr) * (1.0 - 1.0 / v.block(Modality::kAudio).size);
  const double rate = static_cast<double>(changed) / static_cast<double>(trials);
  const double sigma = std::sqrt(q * (1 - q) / static_cast<double>(trials));
  const bool ok = first_changes == 0 && std::abs(rate - q) < 3 * sigma;
  return {ok, std::to_string(first_changes) + " first-half substitutions; second-half rate " +
                  fmt("%.5f vs %.5f (3 sigma %.5f)", rate, q, 3 * sigma)};
}

Outcome corruption_endpoints() {
  const double inf = std::numeric_limits<double>::infinity();
  const double a = snr_to_corruption(inf), b = snr_to_corruption(-inf), c = snr_to_corruption(0.0);
  return {a == 0.0 && b == 1.0 && c == 0.5, fmt("p(+inf)=%g p(-inf)=%g p(0)=%g", a, b, c)};
}

// ---- A7, A8 ------------------------------------------------------------

Outcome dataset_round_trip(const fs::path& scratch) {
  const ChannelConfig cfg;
  const Vocabulary vocab;
  const fs::path a = scratch / "ds-a", b = scratch / "ds-b";
  build_dataset(a, 400, 31, cfg);
  build_dataset(b, 400, 31, cfg);
  int mismatched_files = 0;
  for (const char* f : {"manifest.json", "train.jsonl", "dev.jsonl", "test.jsonl"}) {
    mismatched_files += read_file(a / f) != read_file(b / f);
  }
  const ModalitySet all{Modality::kAudio, Modality::kImage, Modality::kLip, Modality::kOcr};
  int index = 0, unequal = 0;
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    for (const auto& ex : load_examples(a, s, SnrRequest::stored(), all, {OcrVariant::Kind::kOracle3, 0})) {
      char id[32];
      std::snprintf(id, sizeof id, "eq-%06d", index);
      const std::uint64_t seed = mix_seed(31, static_cast<std::uint64_t>(index));
      const double snr = s == Split::kTrain ? schedule_snr(seed, "train-snr") : std::numeric_limits<double>::infinity();
      unequal += !(ex == make_example(vocab, cfg, id, seed, snr));
      ++index;
    }
  }
  const bool ok = mismatched_files == 0 && unequal == 0 && index == 400;
  return {ok, std::to_string(index) + " examples, " + std::to_string(unequal) + " structural mismatches, " +
                  std::to_string(mismatched_files) + " differing files on rebuild"};
}

Outcome fq_filter_check() {
  const FrequencyTable toy({{"the", 1}, {"of", 2}, {"gradient", 5000}, {"transformer", 9000}});
  const Words words = {"the", "gradient", "of", "transformer"};
  int bad = 0;
  bad += fq_filter(words, toy, 2) != Words{"gradient", "transformer"};
  bad += fq_filter(words, toy, 1) != Words{"transformer"};
  bad += fq_filter(words, toy, 4) != words;
  bad += fq_filter(Words{"of", "the", "of", "gradient"}, toy, 2) != Words{"of", "gradient"};
  bad += fq_filter(Words{"gradient", "zeitgeist", "the"}, toy, 1) != Words{"zeitgeist"};
  const auto& table = FrequencyTable::bundled();
  Words pool = {"the", "of", "and", "gradient", "zeta"};
  for (std::uint64_t s = 0; s < 50; ++s)
    for (const auto& eq : generate_triple(s).equations)
      for (const auto& w : ocr_words(eq.text)) pool.push_back(w);
  Rng rng(99);
  int not_idempotent = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Words w(1 + rng.below(30));
    for (auto& x : w) x = pool[rng.below(pool.size())];
    const int k = 1 + static_cast<int>(rng.below(15));
    const auto once = fq_filter(w, table, k);
    not_idempotent += fq_filter(once, table, k) != once;
  }
  return {bad == 0 && not_idempotent == 0, std::to_string(bad) + " toy-table mismatches, " +
                                               std::to_string(not_idempotent) + "/1000 non-idempotent lists"};
}

// ---- B14 ---------------------------------------------------------------

Outcome memorization() {
  const Vocabulary vocab;
  const ChannelConfig ch;
  const auto stored = make_example(vocab, ch, "memo", 424242, std::numeric_limits<double>::infinity());
  const auto ex = materialize_example(vocab, ch, stored, SnrRequest::stored(), ModalitySet{Modality::kAudio}, {});
  ModelConfig mc;  // default toy scale
  mc.vocab_size = vocab.size();
  const std::vector<AssembledSequence> data = {assemble(vocab, ex, Task::kAsr, mc.max_seq_len)};
  Transformer<float> init(mc);
  init.init_random(mix_seed(1, "init"));
  TrainConfig tc;
  tc.max_steps = 2000;
  tc.eval_every = 50;
  tc.seed = 1;
  const DevEvaluator wer_on_it = [&](const Transformer<float>& m) { return score_sequences(m, vocab, data).rate(); };
  const auto r = train(init, data, wer_on_it, tc, nullptr);
  // The first evaluation reaching the best value bounds the steps needed.
  return {r.best_dev_wer == 0.0,
          fmt("WER %.3f on the training example, first reached at step %.0f", r.best_dev_wer,
              static_cast<double>(r.best_step))};
}

// ---- B9-B13 ------------------------------------------------------------

struct Bundle {
  bool ok = false;
  std::string problem;
  std::map<std::string, Verdict> verdicts;
};

Bundle load_bundle(const fs::path& plans_dir, const fs::path& results) {
  Bundle b;
  for (const char* exp : kExperimentIds) {
    const fs::path plan_path = plans_dir / (std::string(exp) + ".json");
    if (!fs::exists(plan_path)) {
      b.problem = "missing plan " + plan_path.string();
      return b;
    }
    const auto plan = ExperimentPlan::load(plan_path);
    const fs::path manifest_dir = results / plan.experiment / "dataset";
    if (!fs::exists(manifest_dir / "manifest.json")) {
      b.problem = "no results for " + plan.experiment + " under " + results.string();
      return b;
    }
    const auto manifest = read_manifest(manifest_dir);
    if (manifest.n_examples < 5000) {
      b.problem = plan.experiment + " used only " + std::to_string(manifest.n_examples) + " examples";
      return b;
    }
    if (plan.seeds.size() < 3) {
      b.problem = plan.experiment + " has fewer than three seeds";
      return b;
    }
    const ModelConfig toy;
    if (plan.model.n_layers != toy.n_layers || plan.model.d_model != toy.d_model) {
      b.problem = plan.experiment + " does not use the 4x128 toy model";
      return b;
    }
    const auto bad = unverified_cells(plan, results, manifest.config_hash);
    if (!bad.empty()) {
      b.problem = plan.experiment + ": " + std::to_string(bad.size()) + " unverified cells, first " + bad.front();
      return b;
    }
    const auto r = collect_results(plan, results);
    for (const auto& name : required_verdicts(plan.experiment)) {
      for (const auto& v : r.verdicts)
        if (v.name == name) b.verdicts[name] = v;
    }
  }
  b.ok = true;
  return b;
}

void trend(const Bundle& b, const std::string& id, const std::string& title, std::vector<std::string> names) {
  report(id, title, [&]() -> Outcome {
    if (!b.ok) return {false, b.problem};
    bool all = true;
    std::string detail;
    for (const auto& n : names) {
      const auto it = b.verdicts.find(n);
      if (it == b.verdicts.end()) return {false, n + " was not produced"};
      const auto& v = it->second;
      all = all && v.computed && v.holds;
      if (!detail.empty()) detail += "; ";
      detail += n + ": " + (!v.computed ? "not computed" : v.holds ? "holds" : "fails") + " (" + v.detail + ")";
    }
    return {all, detail};
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string results = "results", plans = "plans", scratch_arg;
  bool rerun = false, skip_trends = false;
  app.add_option("--results", results, "Results bundle directory");
  app.add_option("--plans", plans, "Directory holding exp1/exp2/exp3 plan files");
  app.add_option("--scratch", scratch_arg, "Scratch directory (default: system temp)");
  app.add_flag("--rerun", rerun, "Run the plans into the results bundle before checking trends");
  app.add_flag("--skip-trends", skip_trends, "Only run the live criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path scratch = scratch_arg.empty()
                               ? fs::temp_directory_path() / ("mmsr-acceptance-" + std::to_string(std::random_device{}()))
                               : fs::path(scratch_arg);
  fs::create_directories(scratch);

  report("A1", "WER oracle equivalence", wer_oracle);
  report("A2", "gradient check", gradient_check);
  report("A3", "causality", causality);
  report("A4", "noise placement", noise_placement);
  report("A5", "corruption endpoints", corruption_endpoints);
  report("A6", "loss length normalization", loss_normalization);
  report("A7", "dataset round trip", [&] { return dataset_round_trip(scratch); });
  report("A8", "FQ filter", fq_filter_check);

  if (!skip_trends) {
    if (rerun) {
      for (const char* exp : kExperimentIds) {
        const auto plan = ExperimentPlan::load(fs::path(plans) / (std::string(exp) + ".json"));
        run_plan(plan, results, &std::cerr);
      }
    }
    const Bundle b = load_bundle(plans, results);
    trend(b, "B9", "lip amplification", {"lip_amplifies"});
    trend(b, "B10", "interior sweet spot", {"sweet_spot_O_real", "sweet_spot_I"});
    trend(b, "B11", "representation ladder", {"representation_ladder"});
    trend(b, "B12", "irrelevance penalty", {"irrelevance_penalty"});
    trend(b, "B13", "filtering helps", {"filtering_helps"});
  }
  report("B14", "memorization", memorization);

  std::error_code ec;
  if (scratch_arg.empty()) fs::remove_all(scratch, ec);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
