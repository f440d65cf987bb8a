#include "mmsr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mmsr/checkpoint.hpp"
#include "mmsr/rng.hpp"

namespace mmsr {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr std::string_view kCellFormat = "mmsr-cell-v1";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split_plus(std::string_view s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find('+', start);
    parts.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string cell_slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (c == '+') out += '_';
    else if (c != '(' && c != ')') out += c;
  }
  return out;
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Sample standard deviation; zero for fewer than two values.
double spread_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

json train_to_json(const TrainConfig& t) {
  return json{{"lr", t.lr},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"weight_decay", t.weight_decay},
              {"batch_size", t.batch_size},
              {"patience", t.patience},
              {"max_steps", t.max_steps},
              {"eval_every", t.eval_every},
              {"max_grad_norm", t.max_grad_norm}};
}

json model_to_json(const ModelConfig& m) {
  return json{{"n_layers", m.n_layers}, {"n_heads", m.n_heads},        {"d_model", m.d_model},
              {"d_ff", m.d_ff},         {"max_seq_len", m.max_seq_len}, {"dropout", m.dropout_rate}};
}

json grid_to_json(std::span<const double> grid) {
  json g = json::array();
  for (double s : grid) g.push_back(format_snr(s));
  return g;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

struct CellKey {
  ModalityConfig config;
  std::uint64_t seed = 0;
};

fs::path cell_dir(const fs::path& out, const CellKey& key) {
  return out / "cells" / cell_slug(key.config.label()) / ("seed-" + std::to_string(key.seed));
}

std::uint64_t key_hash(const ExperimentPlan& plan, std::uint64_t dataset_hash, const CellKey& key) {
  const json j{{"dataset", hex64(dataset_hash)},
               {"config", key.config.label()},
               {"seed", key.seed},
               {"train", train_to_json(plan.train)},
               {"model", model_to_json(plan.model)},
               {"test_limit", plan.eval.test_limit},
               {"dev_limit", plan.eval.dev_limit},
               {"grid", grid_to_json(plan.eval.grid)}};
  return fnv1a64(j.dump());
}

json cells_to_json(std::span<const SnrCell> cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    json e{{"snr_db", format_snr(c.snr_db)}, {"edits", c.edits}, {"ref_words", c.ref_words}};
    e["wer"] = c.ref_words ? json(c.wer()) : json(nullptr);
    arr.push_back(e);
  }
  return arr;
}

CellOutcome outcome_from_json(const nlohmann::json& j) {
  CellOutcome o;
  o.config = j.at("config").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.status = j.at("status").get<std::string>();
  o.message = j.value("message", "");
  o.best_dev_wer = j.value("best_dev_wer", 0.0);
  o.best_step = j.value("best_step", 0L);
  o.steps_run = j.value("steps_run", 0L);
  for (const auto& c : j.at("cells")) {
    o.cells.push_back({parse_snr(c.at("snr_db").get<std::string>()), c.at("edits").get<std::size_t>(),
                       c.at("ref_words").get<std::size_t>()});
  }
  return o;
}

std::optional<nlohmann::json> read_cell_result(const fs::path& dir) {
  const auto path = dir / "result.json";
  if (!fs::exists(path)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

bool cell_complete(const fs::path& dir, std::uint64_t hash) {
  const auto j = read_cell_result(dir);
  return j && j->value("cell_hash", "") == hex64(hash) && j->value("status", "") == "ok" &&
         fs::exists(dir / "best.ckpt");
}

CellOutcome run_cell(const ExperimentPlan& plan, const DatasetManifest& manifest, const PreparedData& data,
                     const CellKey& key, std::uint64_t hash, const fs::path& dir) {
  fs::create_directories(dir);
  const Vocabulary vocab(manifest.channels.image_codebook);
  ModelConfig mcfg = plan.model;
  mcfg.vocab_size = vocab.size();

  Transformer<float> init(mcfg);
  init.init_random(mix_seed(key.seed, "init"));
  TrainConfig tcfg = plan.train;
  tcfg.seed = key.seed;

  CellOutcome o;
  o.config = key.config.label();
  o.seed = key.seed;
  json result{{"format", kCellFormat}, {"cell_hash", hex64(hash)}, {"config", o.config}, {"seed", key.seed}};

  const DevEvaluator dev = [&](const Transformer<float>& m) { return score_sequences(m, vocab, data.dev).rate(); };
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  try {
    TrainResult tr = train(init, data.train, dev, tcfg, &log);
    ModelCheckpoint ckpt = ModelCheckpoint::from_model(tr.best, vocab.layout_hash());
    ckpt.metadata.step = tr.best_step;
    ckpt.metadata.dev_wer_history = tr.dev_wer_history;
    save_checkpoint(dir / "best.ckpt", ckpt);
    o.cells = evaluate_on_grid(tr.best, plan.dataset, key.config.inputs, key.config.ocr, plan.eval.grid,
                               plan.eval.test_limit);
    o.status = "ok";
    o.best_dev_wer = tr.best_dev_wer;
    o.best_step = tr.best_step;
    o.steps_run = tr.steps_run;
    result["status"] = "ok";
    result["best_dev_wer"] = tr.best_dev_wer;
    result["best_step"] = tr.best_step;
    result["steps_run"] = tr.steps_run;
    result["early_stopped"] = tr.early_stopped;
    result["parameter_hash"] = hex64(ckpt.parameter_hash());
  } catch (const TrainingDiverged& e) {
    o.status = "diverged";
    o.message = e.what();
    result["status"] = "diverged";
    result["message"] = o.message;
  }
  result["cells"] = cells_to_json(o.cells);
  write_file_atomic(dir / "result.json", result.dump(2) + "\n");
  return o;
}

// Seed-mean WER per cell over successful seeds, rows in plan order.
EvalReport aggregate(const ExperimentPlan& plan, std::span<const CellOutcome> outcomes) {
  EvalReport rep;
  rep.baseline = "A";
  for (const auto& cfg : plan.configs) {
    const std::string label = cfg.label();
    std::vector<const CellOutcome*> ok;
    for (const auto& o : outcomes)
      if (o.config == label && o.status == "ok") ok.push_back(&o);
    if (ok.empty()) continue;
    ReportRow row;
    row.config = label;
    for (std::size_t i = 0; i < plan.eval.grid.size(); ++i) {
      std::vector<double> w;
      for (const auto* o : ok) w.push_back(o->cells.at(i).wer());
      row.snr_db.push_back(plan.eval.grid[i]);
      row.wer.push_back(mean_of(w));
      row.wer_spread.push_back(spread_of(w));
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

void write_outputs(const ExperimentPlan& plan, const fs::path& out, const PlanResult& r) {
  const fs::path dir = out / plan.experiment;
  fs::create_directories(dir);
  write_file_atomic(dir / "plan.resolved.json", plan.to_json() + "\n");
  write_file_atomic(dir / "report.json", r.report.to_json() + "\n");
  std::string text = "WER (seed mean)\n" + r.report.to_table() + "\nRelative benefit vs A (%)\n" +
                     r.report.to_benefit_table();
  text += "\nVerdicts\n";
  for (const auto& v : r.verdicts) {
    text += "  " + v.name + ": " + (!v.computed ? "not computed" : v.holds ? "holds" : "fails") + "  (" +
            v.detail + ")\n";
  }
  write_file_atomic(dir / "report.txt", text);
  write_file_atomic(dir / "verdicts.json", verdicts_json(r.verdicts) + "\n");
}

std::string fmt_pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f%%", 100.0 * x);
  return buf;
}

Verdict missing(std::string name, std::string_view config) {
  return {std::move(name), false, false, "no results for " + std::string(config)};
}

std::optional<double> avg_benefit(const EvalReport& rep, std::string_view cfg) {
  return rep.find(cfg) ? rep.average_benefit(cfg) : std::nullopt;
}

Verdict sweet_spot(const EvalReport& rep, const std::string& name, const std::string& cfg) {
  const ReportRow* row = rep.find(cfg);
  if (!row || !rep.find(rep.baseline)) return missing(name, cfg);
  std::vector<double> finite;
  for (double s : row->snr_db)
    if (std::isfinite(s)) finite.push_back(s);
  if (finite.size() < 3) return {name, false, false, "fewer than three finite SNR levels"};
  std::optional<std::size_t> best;
  double best_val = 0.0;
  std::string detail;
  for (std::size_t i = 0; i < finite.size(); ++i) {
    const auto b = rep.benefit(cfg, finite[i]);
    detail += format_snr(finite[i]) + "dB:" + (b ? fmt_pct(*b) : std::string("n/a")) + " ";
    if (b && (!best || *b > best_val)) {
      best = i;
      best_val = *b;
    }
  }
  if (!best) return {name, false, false, "benefit undefined at every finite SNR"};
  const bool interior = *best > 0 && *best + 1 < finite.size();
  return {name, true, interior, "argmax " + format_snr(finite[*best]) + "dB; " + detail.substr(0, detail.size() - 1)};
}

}  // namespace

ModalityConfig ModalityConfig::parse(std::string_view label) {
  ModalityConfig c;
  for (const auto& part : split_plus(label)) {
    Modality m;
    if (part == "A") m = Modality::kAudio;
    else if (part == "I") m = Modality::kImage;
    else if (part == "L") m = Modality::kLip;
    else if (part.rfind("O_", 0) == 0) {
      m = Modality::kOcr;
      c.ocr = OcrVariant::parse(part.substr(2));
      if (c.ocr.kind == OcrVariant::Kind::kNone) throw std::invalid_argument("config: OCR variant required in " + part);
    } else {
      throw std::invalid_argument("config: unknown part '" + part + "' in " + std::string(label));
    }
    if (c.inputs.contains(m)) throw std::invalid_argument("config: repeated modality in " + std::string(label));
    c.inputs.insert(m);
  }
  if (!c.inputs.contains(Modality::kAudio)) throw std::invalid_argument("config: audio missing in " + std::string(label));
  return c;
}

std::string ModalityConfig::label() const {
  std::string out;
  auto add = [&](const std::string& part) { out += (out.empty() ? "" : "+") + part; };
  if (inputs.contains(Modality::kImage)) add("I");
  if (inputs.contains(Modality::kOcr)) add("O_" + ocr.str());
  if (inputs.contains(Modality::kLip)) add("L");
  if (inputs.contains(Modality::kAudio)) add("A");
  return out;
}

void ExperimentPlan::validate() const {
  if (std::find(std::begin(kExperimentIds), std::end(kExperimentIds), experiment) == std::end(kExperimentIds)) {
    throw std::invalid_argument("plan: unknown experiment id '" + experiment + "'");
  }
  if (seeds.empty()) throw std::invalid_argument("plan: no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("plan: duplicate seeds");
  }
  std::set<std::string> labels;
  bool has_baseline = false;
  bool has_distractor_ocr = false;
  for (const auto& c : configs) {
    const auto l = c.label();
    if (!labels.insert(l).second) throw std::invalid_argument("plan: duplicate config " + l);
    has_baseline |= l == "A";
    has_distractor_ocr |= l == "O_oracle10+A" || c.ocr.kind == OcrVariant::Kind::kFiltered;
  }
  if (!has_baseline) throw std::invalid_argument("plan: the A baseline is required");
  if (experiment == "exp3_irrelevance" && !has_distractor_ocr) {
    throw std::invalid_argument("plan: exp3_irrelevance needs O_oracle10 or O_filtered(K)");
  }
  if (eval.grid.empty()) throw std::invalid_argument("plan: empty SNR grid");
  if (eval.test_limit < 0 || eval.dev_limit < 1) throw std::invalid_argument("plan: bad eval limits");
  train.validate();
  if (train.max_steps < 1) throw std::invalid_argument("plan: train.max_steps must be >= 1");
}

ExperimentPlan ExperimentPlan::from_json(std::string_view text, const fs::path& base_dir) {
  const auto j = nlohmann::json::parse(text);
  ExperimentPlan p;
  p.experiment = j.at("experiment").get<std::string>();
  fs::path ds = j.at("dataset").get<std::string>();
  p.dataset = ds.is_relative() && !base_dir.empty() ? base_dir / ds : ds;
  if (j.contains("seeds")) p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  else p.seeds = {1, 2, 3};
  for (const auto& c : j.at("configs")) p.configs.push_back(ModalityConfig::parse(c.get<std::string>()));

  const auto& t = j.at("train");
  if (!t.contains("max_steps")) throw std::invalid_argument("plan: train.max_steps is required");
  read_opt(t, "lr", p.train.lr);
  read_opt(t, "beta1", p.train.beta1);
  read_opt(t, "beta2", p.train.beta2);
  read_opt(t, "weight_decay", p.train.weight_decay);
  read_opt(t, "batch_size", p.train.batch_size);
  read_opt(t, "patience", p.train.patience);
  read_opt(t, "max_steps", p.train.max_steps);
  read_opt(t, "eval_every", p.train.eval_every);
  read_opt(t, "max_grad_norm", p.train.max_grad_norm);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    read_opt(m, "n_layers", p.model.n_layers);
    read_opt(m, "n_heads", p.model.n_heads);
    read_opt(m, "d_model", p.model.d_model);
    read_opt(m, "d_ff", p.model.d_ff);
    read_opt(m, "max_seq_len", p.model.max_seq_len);
    read_opt(m, "dropout", p.model.dropout_rate);
  }

  const auto grid = snr_grid();
  p.eval.grid.assign(grid.begin(), grid.end());
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    read_opt(e, "test_limit", p.eval.test_limit);
    read_opt(e, "dev_limit", p.eval.dev_limit);
    if (e.contains("grid")) {
      p.eval.grid.clear();
      for (const auto& s : e.at("grid")) p.eval.grid.push_back(parse_snr(s.get<std::string>()));
    }
  }
  p.validate();
  return p;
}

ExperimentPlan ExperimentPlan::load(const fs::path& path) {
  return from_json(read_file(path), path.parent_path());
}

std::string ExperimentPlan::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["dataset"] = dataset.string();
  j["seeds"] = seeds;
  json cfgs = json::array();
  for (const auto& c : configs) cfgs.push_back(c.label());
  j["configs"] = cfgs;
  j["train"] = train_to_json(train);
  j["model"] = model_to_json(model);
  j["eval"] = json{{"test_limit", eval.test_limit}, {"dev_limit", eval.dev_limit}, {"grid", grid_to_json(eval.grid)}};
  return j.dump(2);
}

PreparedData prepare_data(const fs::path& dataset, const ModalityConfig& config, int max_seq_len, int dev_limit) {
  const auto manifest = read_manifest(dataset);
  const Vocabulary vocab(manifest.channels.image_codebook);
  PreparedData d;
  {
    ExampleReader r(dataset, Split::kTrain, SnrRequest::stored(), config.inputs, config.ocr);
    while (auto ex = r.next()) d.train.push_back(assemble(vocab, *ex, Task::kAsr, max_seq_len));
  }
  {
    ExampleReader r(dataset, Split::kDev, SnrRequest::schedule_draw(), config.inputs, config.ocr);
    while (auto ex = r.next()) {
      d.dev.push_back(assemble(vocab, *ex, Task::kAsr, max_seq_len));
      if (static_cast<int>(d.dev.size()) >= dev_limit) break;
    }
  }
  if (d.train.empty() || d.dev.empty()) throw std::runtime_error("prepare_data: empty train or dev split");
  return d;
}

bool PlanResult::all_cells_ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.status == "ok"; });
}

bool PlanResult::all_verdicts_computed(const std::string& experiment) const {
  for (const auto& name : required_verdicts(experiment)) {
    auto it = std::find_if(verdicts.begin(), verdicts.end(), [&](const Verdict& v) { return v.name == name; });
    if (it == verdicts.end() || !it->computed) return false;
  }
  return true;
}

bool PlanResult::all_verdicts_hold(const std::string& experiment) const {
  if (!all_verdicts_computed(experiment)) return false;
  for (const auto& name : required_verdicts(experiment)) {
    auto it = std::find_if(verdicts.begin(), verdicts.end(), [&](const Verdict& v) { return v.name == name; });
    if (!it->holds) return false;
  }
  return true;
}

PlanResult run_plan(const ExperimentPlan& plan, const fs::path& out, std::ostream* progress) {
  plan.validate();
  const auto manifest = read_manifest(plan.dataset);
  PlanResult result;
  for (const auto& cfg : plan.configs) {
    std::optional<PreparedData> data;
    for (std::uint64_t seed : plan.seeds) {
      const CellKey key{cfg, seed};
      const auto dir = cell_dir(out, key);
      const auto hash = key_hash(plan, manifest.config_hash, key);
      if (cell_complete(dir, hash)) {
        CellOutcome o = outcome_from_json(*read_cell_result(dir));
        o.reused = true;
        if (progress) *progress << "[skip] " << cfg.label() << " seed " << seed << '\n' << std::flush;
        result.cells.push_back(std::move(o));
        continue;
      }
      if (progress) *progress << "[run]  " << cfg.label() << " seed " << seed << '\n' << std::flush;
      if (!data) data = prepare_data(plan.dataset, cfg, plan.model.max_seq_len, plan.eval.dev_limit);
      CellOutcome o = run_cell(plan, manifest, *data, key, hash, dir);
      ++result.runs_executed;
      if (progress) {
        *progress << "       " << o.status;
        if (o.status == "ok") *progress << " steps " << o.steps_run << " best dev WER " << o.best_dev_wer;
        else *progress << ": " << o.message;
        *progress << '\n' << std::flush;
      }
      result.cells.push_back(std::move(o));
    }
  }
  result.report = aggregate(plan, result.cells);
  result.verdicts = compute_verdicts(result.report);
  write_outputs(plan, out, result);
  fs::create_directories(out / plan.experiment / "dataset");
  write_file_atomic(out / plan.experiment / "dataset" / "manifest.json", read_file(plan.dataset / "manifest.json"));
  return result;
}

std::uint64_t cell_hash(const ExperimentPlan& plan, std::uint64_t dataset_hash, const ModalityConfig& config,
                        std::uint64_t seed) {
  return key_hash(plan, dataset_hash, {config, seed});
}

std::vector<std::string> unverified_cells(const ExperimentPlan& plan, const fs::path& out,
                                          std::uint64_t dataset_hash) {
  std::vector<std::string> bad;
  for (const auto& cfg : plan.configs) {
    for (std::uint64_t seed : plan.seeds) {
      const CellKey key{cfg, seed};
      const auto j = read_cell_result(cell_dir(out, key));
      const std::string name = cfg.label() + "@seed-" + std::to_string(seed);
      if (!j) bad.push_back(name + " (missing)");
      else if (j->value("cell_hash", "") != hex64(key_hash(plan, dataset_hash, key))) bad.push_back(name + " (stale)");
      else if (j->value("status", "") != "ok") bad.push_back(name + " (" + j->value("status", "?") + ")");
    }
  }
  return bad;
}

PlanResult collect_results(const ExperimentPlan& plan, const fs::path& out) {
  PlanResult result;
  for (const auto& cfg : plan.configs) {
    for (std::uint64_t seed : plan.seeds) {
      const auto j = read_cell_result(cell_dir(out, {cfg, seed}));
      if (!j) continue;
      result.cells.push_back(outcome_from_json(*j));
    }
  }
  result.report = aggregate(plan, result.cells);
  result.verdicts = compute_verdicts(result.report);
  return result;
}

std::vector<std::string> required_verdicts(const std::string& experiment) {
  if (experiment == "exp1_modality_ablation") return {"representation_ladder"};
  if (experiment == "exp2_noise_curves") return {"lip_amplifies", "sweet_spot_O_real", "sweet_spot_I"};
  if (experiment == "exp3_irrelevance") return {"irrelevance_penalty", "filtering_helps"};
  throw std::invalid_argument("unknown experiment id '" + experiment + "'");
}

std::vector<Verdict> compute_verdicts(const EvalReport& rep) {
  std::vector<Verdict> out;

  {
    const std::string cfg = "L+A";
    if (!rep.find(cfg) || !rep.find(rep.baseline)) {
      out.push_back(missing("lip_amplifies", cfg));
    } else {
      const auto lo = rep.benefit(cfg, -10.0);
      const auto hi = rep.benefit(cfg, 20.0);
      if (!lo || !hi) out.push_back({"lip_amplifies", false, false, "benefit undefined at -10dB or 20dB"});
      else out.push_back({"lip_amplifies", true, *lo > *hi, "-10dB " + fmt_pct(*lo) + " vs 20dB " + fmt_pct(*hi)});
    }
  }
  out.push_back(sweet_spot(rep, "sweet_spot_O_real", "O_real+A"));
  out.push_back(sweet_spot(rep, "sweet_spot_I", "I+A"));

  {
    const auto i = avg_benefit(rep, "I+A");
    const auto o = avg_benefit(rep, "O_real+A");
    const auto o3 = avg_benefit(rep, "O_oracle3+A");
    if (!i || !o || !o3) {
      out.push_back({"representation_ladder", false, false, "needs I+A, O_real+A and O_oracle3+A"});
    } else {
      out.push_back({"representation_ladder", true, *i < *o && *o < *o3,
                     "I " + fmt_pct(*i) + " < O_real " + fmt_pct(*o) + " < O_oracle3 " + fmt_pct(*o3)});
    }
  }
  {
    const auto o10 = avg_benefit(rep, "O_oracle10+A");
    const auto o3 = avg_benefit(rep, "O_oracle3+A");
    if (!o10 || !o3) {
      out.push_back({"irrelevance_penalty", false, false, "needs O_oracle10+A and O_oracle3+A"});
    } else {
      out.push_back({"irrelevance_penalty", true, *o10 < *o3,
                     "O_oracle10 " + fmt_pct(*o10) + " < O_oracle3 " + fmt_pct(*o3)});
    }
  }
  {
    std::optional<int> k_min;
    for (const auto& row : rep.rows) {
      const auto c = ModalityConfig::parse(row.config);
      if (c.ocr.kind == OcrVariant::Kind::kFiltered && c.inputs == ModalitySet{Modality::kOcr, Modality::kAudio} &&
          (!k_min || c.ocr.k < *k_min)) {
        k_min = c.ocr.k;
      }
    }
    const auto o10 = avg_benefit(rep, "O_oracle10+A");
    if (!k_min || !o10) {
      out.push_back({"filtering_helps", false, false, "needs O_filtered(K)+A and O_oracle10+A"});
    } else {
      const std::string label = "O_filtered(" + std::to_string(*k_min) + ")+A";
      const auto f = avg_benefit(rep, label);
      if (!f) out.push_back({"filtering_helps", false, false, "benefit undefined for " + label});
      else out.push_back({"filtering_helps", true, *f >= *o10,
                          "O_filtered(" + std::to_string(*k_min) + ") " + fmt_pct(*f) + " >= O_oracle10 " + fmt_pct(*o10)});
    }
  }
  return out;
}

std::string verdicts_json(std::span<const Verdict> verdicts) {
  json arr = json::array();
  for (const auto& v : verdicts) {
    arr.push_back(json{{"name", v.name}, {"computed", v.computed}, {"holds", v.holds}, {"detail", v.detail}});
  }
  return arr.dump(2);
}

std::string plot_table(const PlanResult& result, std::span<const double> grid) {
  const std::string baseline = result.report.baseline;
  // Per-seed WER by (config, seed, snr index).
  std::map<std::pair<std::string, std::uint64_t>, const CellOutcome*> by_cell;
  std::vector<std::string> configs;
  for (const auto& o : result.cells) {
    if (o.status != "ok") continue;
    by_cell[{o.config, o.seed}] = &o;
    if (std::find(configs.begin(), configs.end(), o.config) == configs.end()) configs.push_back(o.config);
  }

  std::vector<std::string> missing_cells;
  for (const auto& row : result.report.rows) {
    for (double s : grid) {
      if (std::find(row.snr_db.begin(), row.snr_db.end(), s) == row.snr_db.end()) {
        missing_cells.push_back(row.config + "@" + format_snr(s));
      }
    }
  }
  if (!result.report.find(baseline)) missing_cells.push_back(baseline + "@all");
  std::set<std::uint64_t> seeds;
  for (const auto& [key, o] : by_cell) seeds.insert(key.second);
  for (const auto& row : result.report.rows) {
    for (std::uint64_t seed : seeds) {
      if (!by_cell.count({row.config, seed})) missing_cells.push_back(row.config + "@seed-" + std::to_string(seed));
    }
  }
  for (const auto& o : result.cells) {
    if (o.status != "ok") missing_cells.push_back(o.config + "@seed-" + std::to_string(o.seed));
  }
  if (!missing_cells.empty()) {
    std::string msg = "emit_plots: incomplete results, missing cells:";
    for (const auto& m : missing_cells) msg += " " + m;
    throw std::runtime_error(msg);
  }

  std::ostringstream os;
  os << "config\tsnr_db\tbenefit_mean\tbenefit_spread\n";
  char buf[64];
  for (const auto& row : result.report.rows) {
    if (row.config == baseline) continue;
    for (double s : grid) {
      const auto idx = static_cast<std::size_t>(std::find(row.snr_db.begin(), row.snr_db.end(), s) - row.snr_db.begin());
      const auto mean = result.report.benefit(row.config, s);
      std::vector<double> per_seed;
      for (const auto& [key, o] : by_cell) {
        if (key.first != row.config) continue;
        const auto base = by_cell.find({baseline, key.second});
        if (base == by_cell.end()) continue;
        const auto b = relative_benefit(base->second->cells.at(idx).wer(), o->cells.at(idx).wer());
        if (b) per_seed.push_back(*b);
      }
      os << row.config << '\t' << format_snr(s) << '\t';
      if (mean) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f", *mean, spread_of(per_seed));
        os << buf;
      } else {
        os << "n/a\tn/a";
      }
      os << '\n';
    }
  }
  return os.str();
}

fs::path emit_plots(const ExperimentPlan& plan, const fs::path& out) {
  const PlanResult r = collect_results(plan, out);
  std::vector<std::string> absent;
  for (const auto& cfg : plan.configs) {
    for (std::uint64_t seed : plan.seeds) {
      const bool found = std::any_of(r.cells.begin(), r.cells.end(), [&](const CellOutcome& o) {
        return o.config == cfg.label() && o.seed == seed;
      });
      if (!found) absent.push_back(cfg.label() + "@seed-" + std::to_string(seed));
    }
  }
  if (!absent.empty()) {
    std::string msg = "emit_plots: incomplete results, missing cells:";
    for (const auto& m : absent) msg += " " + m;
    throw std::runtime_error(msg);
  }
  const fs::path dir = out / plan.experiment;
  fs::create_directories(dir);
  const fs::path path = dir / "benefit_curves.tsv";
  write_file_atomic(path, plot_table(r, plan.eval.grid));
  return path;
}

}  // namespace mmsr
