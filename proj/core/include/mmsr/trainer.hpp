#pragma once

// Fine-tuning loop: AdamW steps on shuffled mini-batches, periodic dev WER,
// patience-based early stopping on the number of evaluations.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "mmsr/assemble.hpp"
#include "mmsr/model.hpp"
#include "mmsr/optimizer.hpp"

namespace mmsr {

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  int batch_size = 4;
  int patience = 5;
  long max_steps = 0;
  int eval_every = 500;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  AdamWConfig optimizer() const { return {lr, beta1, beta2, 1e-8, weight_decay}; }
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tracks the best metric (lower is better). Only strict improvements reset
// the counter; stop() becomes true after `patience` non-improving
// observations in a row.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  // Returns true when this observation is a new best.
  bool observe(double metric, long step);
  bool stop() const { return bad_ >= patience_; }
  double best() const { return best_; }
  long best_step() const { return best_step_; }
  int evaluations() const { return evaluations_; }

 private:
  int patience_;
  int bad_ = 0;
  int evaluations_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  long best_step_ = -1;
};

struct TrainLogRecord {
  long step = 0;
  double train_loss = 0.0;
  std::optional<double> dev_wer;
  double lr = 0.0;
};

struct TrainResult {
  Transformer<float> best;
  double best_dev_wer = std::numeric_limits<double>::infinity();
  long best_step = 0;
  long steps_run = 0;
  bool early_stopped = false;
  std::vector<TrainLogRecord> log;
  std::vector<double> dev_wer_history;
};

using DevEvaluator = std::function<double(const Transformer<float>&)>;

// Trains a copy of `init`. Dev WER is measured at step 0, every eval_every
// steps, and after the last step. The returned model is the best-dev one.
// Throws TrainingDiverged on a non-finite loss. Each log record is also
// written to `log_sink` as one JSON line when provided.
TrainResult train(const Transformer<float>& init, std::span<const AssembledSequence> train_set,
                  const DevEvaluator& dev_wer, const TrainConfig& cfg, std::ostream* log_sink = nullptr);

std::string log_record_json(const TrainLogRecord& r);

}  // namespace mmsr
