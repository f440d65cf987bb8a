#pragma once

// Experiment orchestration: plan files, resumable (config, seed) cells,
// seed aggregation, trend verdicts and plot-data emission.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mmsr/dataset.hpp"
#include "mmsr/evalkit.hpp"
#include "mmsr/evaluate.hpp"
#include "mmsr/io.hpp"
#include "mmsr/model.hpp"
#include "mmsr/trainer.hpp"

namespace mmsr {

// Input modalities plus the OCR rendering, labelled like "O_real+L+A".
struct ModalityConfig {
  ModalitySet inputs;
  OcrVariant ocr;

  // Accepts "+"-joined parts: A, I, L, O_real, O_oracle3, O_oracle10,
  // O_filtered(K). Audio must be present.
  static ModalityConfig parse(std::string_view label);
  // Canonical order I, O, L, A.
  std::string label() const;
  friend bool operator==(const ModalityConfig&, const ModalityConfig&) = default;
};

inline constexpr const char* kExperimentIds[] = {"exp1_modality_ablation", "exp2_noise_curves",
                                                 "exp3_irrelevance"};

struct EvalSettings {
  int test_limit = 0;  // 0 = whole test split
  int dev_limit = 200;
  std::vector<double> grid;
};

struct ExperimentPlan {
  std::string experiment;
  std::filesystem::path dataset;
  std::vector<std::uint64_t> seeds;
  std::vector<ModalityConfig> configs;
  TrainConfig train;  // train.seed is replaced per cell
  ModelConfig model;  // vocab_size is filled from the dataset
  EvalSettings eval;

  void validate() const;
  // max_steps is required; every other key falls back to its default.
  // Relative dataset paths resolve against base_dir.
  static ExperimentPlan from_json(std::string_view text, const std::filesystem::path& base_dir = {});
  static ExperimentPlan load(const std::filesystem::path& path);
  // Fully resolved plan, every default spelled out.
  std::string to_json() const;
};

// Builds the training and dev sequences for one configuration.
struct PreparedData {
  std::vector<AssembledSequence> train;
  std::vector<AssembledSequence> dev;
};
PreparedData prepare_data(const std::filesystem::path& dataset, const ModalityConfig& config, int max_seq_len,
                          int dev_limit);

struct CellOutcome {
  std::string config;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or "diverged"
  std::string message;
  bool reused = false;
  std::vector<SnrCell> cells;
  double best_dev_wer = 0.0;
  long best_step = 0;
  long steps_run = 0;
};

struct Verdict {
  std::string name;
  bool computed = false;
  bool holds = false;
  std::string detail;
};

struct PlanResult {
  std::vector<CellOutcome> cells;
  EvalReport report;  // WER per cell averaged over successful seeds
  std::vector<Verdict> verdicts;
  int runs_executed = 0;

  bool all_cells_ok() const;
  // Only the verdicts required by `experiment` are considered.
  bool all_verdicts_computed(const std::string& experiment) const;
  bool all_verdicts_hold(const std::string& experiment) const;
};

// Trains and evaluates every (config, seed) cell under out/cells, skipping
// cells whose stored result matches the cell hash and whose checkpoint is
// present. Writes the report, verdicts and resolved plan under
// out/<experiment>/. Progress lines go to `progress` when given.
PlanResult run_plan(const ExperimentPlan& plan, const std::filesystem::path& out,
                    std::ostream* progress = nullptr);

// Identity of one (config, seed) cell: dataset, plan settings and seed.
std::uint64_t cell_hash(const ExperimentPlan& plan, std::uint64_t dataset_hash, const ModalityConfig& config,
                        std::uint64_t seed);

// Cells of `plan` under `out` that are missing, failed, or were produced by
// different settings. A copy of the dataset manifest is kept at
// out/<experiment>/dataset/manifest.json so this works without the data.
std::vector<std::string> unverified_cells(const ExperimentPlan& plan, const std::filesystem::path& out,
                                          std::uint64_t dataset_hash);

// Rebuilds the aggregate report and verdicts from stored cell results.
PlanResult collect_results(const ExperimentPlan& plan, const std::filesystem::path& out);

// Every trend check on seed-averaged WERs. A verdict whose configs are
// absent, or whose benefits are all undefined, has computed = false.
std::vector<Verdict> compute_verdicts(const EvalReport& report);

// Verdicts each experiment is expected to produce.
std::vector<std::string> required_verdicts(const std::string& experiment);

// Columnar plot data: header then one row per (config, snr) for every
// non-baseline config. Throws std::runtime_error listing missing cells when
// the grid is incomplete.
std::string plot_table(const PlanResult& result, std::span<const double> grid);
std::filesystem::path emit_plots(const ExperimentPlan& plan, const std::filesystem::path& out);

std::string verdicts_json(std::span<const Verdict> verdicts);

}  // namespace mmsr
