// mmsr: dataset generation, training, evaluation and experiment plans.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "mmsr/checkpoint.hpp"
#include "mmsr/dataset.hpp"
#include "mmsr/evaluate.hpp"
#include "mmsr/harness.hpp"
#include "mmsr/io.hpp"
#include "mmsr/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  return json::parse(mmsr::read_file(path));
}

fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw CLI::ValidationError("--out", "an output directory is required");
  return g.out;
}

int cmd_gen_data(const GlobalOptions& g, int n) {
  const json cfg = load_config(g.config);
  mmsr::ChannelConfig ch;
  mmsr::SplitRatios ratios;
  if (cfg.contains("n_examples") && n <= 0) n = cfg.at("n_examples").get<int>();
  if (cfg.contains("channels")) {
    const auto& c = cfg.at("channels");
    ch.audio_repeat = c.value("audio_repeat", ch.audio_repeat);
    ch.image_grid = c.value("image_grid", ch.image_grid);
    ch.image_codebook = c.value("image_codebook", ch.image_codebook);
    ch.ocr_real_cer = c.value("ocr_real_cer", ch.ocr_real_cer);
    ch.depth_limit = c.value("depth_limit", ch.depth_limit);
  }
  if (cfg.contains("split")) {
    const auto& s = cfg.at("split");
    ratios = {s.value("train", ratios.train), s.value("dev", ratios.dev), s.value("test", ratios.test)};
  }
  if (n <= 0) n = 10000;
  const auto m = mmsr::build_dataset(require_out(g), n, g.seed.value_or(0), ch, ratios);
  std::cout << "wrote " << m.n_examples << " examples (" << m.n_train << " train, " << m.n_dev << " dev, "
            << m.n_test << " test) to " << g.out << '\n';
  return 0;
}

void apply_train_json(const json& t, mmsr::TrainConfig& tc) {
  tc.lr = t.value("lr", tc.lr);
  tc.beta1 = t.value("beta1", tc.beta1);
  tc.beta2 = t.value("beta2", tc.beta2);
  tc.weight_decay = t.value("weight_decay", tc.weight_decay);
  tc.batch_size = t.value("batch_size", tc.batch_size);
  tc.patience = t.value("patience", tc.patience);
  tc.max_steps = t.value("max_steps", tc.max_steps);
  tc.eval_every = t.value("eval_every", tc.eval_every);
  tc.max_grad_norm = t.value("max_grad_norm", tc.max_grad_norm);
}

void apply_model_json(const json& m, mmsr::ModelConfig& mc) {
  mc.n_layers = m.value("n_layers", mc.n_layers);
  mc.n_heads = m.value("n_heads", mc.n_heads);
  mc.d_model = m.value("d_model", mc.d_model);
  mc.d_ff = m.value("d_ff", mc.d_ff);
  mc.max_seq_len = m.value("max_seq_len", mc.max_seq_len);
  mc.dropout_rate = m.value("dropout", mc.dropout_rate);
}

int cmd_train(const GlobalOptions& g, const std::string& dataset, const std::string& label, long max_steps,
              int dev_limit) {
  const json cfg = load_config(g.config);
  mmsr::TrainConfig tc;
  mmsr::ModelConfig mc;
  if (cfg.contains("train")) apply_train_json(cfg.at("train"), tc);
  if (cfg.contains("model")) apply_model_json(cfg.at("model"), mc);
  if (max_steps >= 0) tc.max_steps = max_steps;
  tc.seed = g.seed.value_or(0);

  const auto config = mmsr::ModalityConfig::parse(label);
  const auto manifest = mmsr::read_manifest(dataset);
  const mmsr::Vocabulary vocab(manifest.channels.image_codebook);
  mc.vocab_size = vocab.size();

  const fs::path out = require_out(g);
  fs::create_directories(out);
  const auto data = mmsr::prepare_data(dataset, config, mc.max_seq_len, dev_limit);
  mmsr::Transformer<float> init(mc);
  init.init_random(mmsr::mix_seed(tc.seed, "init"));
  const mmsr::DevEvaluator dev = [&](const mmsr::Transformer<float>& m) {
    return mmsr::score_sequences(m, vocab, data.dev).rate();
  };
  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  const auto tr = mmsr::train(init, data.train, dev, tc, &log);
  auto ckpt = mmsr::ModelCheckpoint::from_model(tr.best, vocab.layout_hash());
  ckpt.metadata.step = tr.best_step;
  ckpt.metadata.dev_wer_history = tr.dev_wer_history;
  mmsr::save_checkpoint(out / "best.ckpt", ckpt);
  std::cout << config.label() << ": " << tr.steps_run << " steps, best dev WER " << tr.best_dev_wer << " at step "
            << tr.best_step << (tr.early_stopped ? " (early stop)" : "") << '\n';
  return 0;
}

int cmd_eval(const GlobalOptions& g, const std::string& ckpt_path, const std::string& dataset,
             const std::string& label, int test_limit) {
  const auto config = mmsr::ModalityConfig::parse(label);
  const auto ckpt = mmsr::load_checkpoint(ckpt_path);
  const auto manifest = mmsr::read_manifest(dataset);
  if (ckpt.vocab_hash != mmsr::Vocabulary(manifest.channels.image_codebook).layout_hash()) {
    throw std::runtime_error("checkpoint vocabulary does not match dataset " + dataset);
  }
  const auto model = ckpt.to_model();
  const auto cells =
      mmsr::evaluate_on_grid(model, dataset, config.inputs, config.ocr, mmsr::snr_grid(), test_limit);
  mmsr::EvalReport rep;
  rep.baseline = "A";
  rep.rows.push_back(mmsr::to_report_row(config.label(), cells));
  std::cout << rep.to_table();
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    mmsr::write_file_atomic(fs::path(g.out) / "report.json", rep.to_json() + "\n");
  }
  return 0;
}

mmsr::ExperimentPlan load_plan(const GlobalOptions& g) {
  if (g.config.empty()) throw CLI::ValidationError("--config", "a plan file is required");
  auto plan = mmsr::ExperimentPlan::load(g.config);
  if (g.seed) plan.seeds = {*g.seed};
  return plan;
}

void print_verdicts(const mmsr::PlanResult& r) {
  for (const auto& v : r.verdicts) {
    std::cout << "  " << v.name << ": " << (!v.computed ? "not computed" : v.holds ? "holds" : "fails") << "  ("
              << v.detail << ")\n";
  }
}

int finish(const mmsr::ExperimentPlan& plan, const mmsr::PlanResult& r, bool assert_trends) {
  std::cout << "\nWER (seed mean)\n" << r.report.to_table() << "\nRelative benefit vs A (%)\n"
            << r.report.to_benefit_table() << "\nVerdicts\n";
  print_verdicts(r);
  if (!r.all_cells_ok()) {
    std::cerr << "some cells did not complete\n";
    return 1;
  }
  if (!r.all_verdicts_computed(plan.experiment)) {
    std::cerr << "some trend verdicts could not be computed\n";
    return 1;
  }
  if (assert_trends && !r.all_verdicts_hold(plan.experiment)) {
    std::cerr << "trend verdicts failed\n";
    return 3;
  }
  return 0;
}

int cmd_run_plan(const GlobalOptions& g, bool assert_trends) {
  const auto plan = load_plan(g);
  const auto r = mmsr::run_plan(plan, require_out(g), &std::cout);
  std::cout << "executed " << r.runs_executed << " of " << r.cells.size() << " cells\n";
  return finish(plan, r, assert_trends);
}

int cmd_report(const GlobalOptions& g, bool assert_trends) {
  const auto plan = load_plan(g);
  const auto r = mmsr::collect_results(plan, require_out(g));
  const std::size_t expected = plan.configs.size() * plan.seeds.size();
  if (r.cells.size() != expected) {
    std::cerr << "found " << r.cells.size() << " of " << expected << " cell results\n";
    finish(plan, r, false);
    return 1;
  }
  return finish(plan, r, assert_trends);
}

int cmd_emit_plots(const GlobalOptions& g) {
  const auto plan = load_plan(g);
  const auto path = mmsr::emit_plots(plan, require_out(g));
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal speech recognition on symbolic equation data"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (run-plan/report: restrict to this seed)");
  app.add_option("--config", g.config, "Config or plan file (JSON)");
  app.add_option("--out", g.out, "Output directory");

  int n_examples = 0;
  auto* gen = app.add_subcommand("gen-data", "Build a dataset directory");
  gen->add_option("-n,--examples", n_examples, "Number of examples (default 10000)");

  std::string dataset, label = "A", ckpt;
  long max_steps = -1;
  int dev_limit = 200;
  int test_limit = 0;
  auto* tr = app.add_subcommand("train", "Fine-tune one modality configuration");
  tr->add_option("--dataset", dataset, "Dataset directory")->required();
  tr->add_option("--modalities", label, "Configuration label, e.g. O_real+L+A");
  tr->add_option("--max-steps", max_steps, "Override train.max_steps");
  tr->add_option("--dev-limit", dev_limit, "Dev examples used for early stopping");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the SNR grid");
  ev->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  ev->add_option("--dataset", dataset, "Dataset directory")->required();
  ev->add_option("--modalities", label, "Configuration label");
  ev->add_option("--test-limit", test_limit, "Use only the first N test examples");

  bool assert_trends = false;
  auto* rp = app.add_subcommand("run-plan", "Train and evaluate every cell of a plan");
  rp->add_flag("--assert-trends", assert_trends, "Exit nonzero when a trend verdict fails");
  auto* rep = app.add_subcommand("report", "Rebuild the report from stored cell results");
  rep->add_flag("--assert-trends", assert_trends, "Exit nonzero when a trend verdict fails");
  auto* plots = app.add_subcommand("emit-plots", "Write benefit-vs-SNR plot data");

  for (auto* sub : {gen, tr, ev, rp, rep, plots}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen) return cmd_gen_data(g, n_examples);
    if (*tr) return cmd_train(g, dataset, label, max_steps, dev_limit);
    if (*ev) return cmd_eval(g, ckpt, dataset, label, test_limit);
    if (*rp) return cmd_run_plan(g, assert_trends);
    if (*rep) return cmd_report(g, assert_trends);
    if (*plots) return cmd_emit_plots(g);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
