#include "mmsr/trainer.hpp"

#include <cmath>
#include <json.hpp>
#include <numeric>

namespace mmsr {

void TrainConfig::validate() const {
  optimizer().validate();
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("EarlyStopping: patience must be >= 1");
}

bool EarlyStopping::observe(double metric, long step) {
  ++evaluations_;
  if (metric < best_) {
    best_ = metric;
    best_step_ = step;
    bad_ = 0;
    return true;
  }
  ++bad_;
  return false;
}

std::string log_record_json(const TrainLogRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["train_loss"] = r.train_loss;
  j["dev_wer"] = r.dev_wer ? nlohmann::ordered_json(*r.dev_wer) : nlohmann::ordered_json(nullptr);
  j["lr"] = r.lr;
  return j.dump();
}

TrainResult train(const Transformer<float>& init, std::span<const AssembledSequence> train_set,
                  const DevEvaluator& dev_wer, const TrainConfig& cfg, std::ostream* log_sink) {
  cfg.validate();
  TrainResult result{init, std::numeric_limits<double>::infinity(), 0, 0, false, {}, {}};
  if (cfg.max_steps == 0) return result;
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  Transformer<float> model = init;
  AdamW opt(cfg.optimizer(), model.parameters().size());
  std::vector<float> grad(model.parameters().size());
  Rng shuffle_rng(mix_seed(cfg.seed, "shuffle"));
  Rng dropout_rng(mix_seed(cfg.seed, "dropout"));
  EarlyStopping stopper(cfg.patience);

  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  auto emit = [&](const TrainLogRecord& r) {
    result.log.push_back(r);
    if (log_sink) *log_sink << log_record_json(r) << '\n' << std::flush;
  };
  auto evaluate = [&](long step, double train_loss) {
    const double w = dev_wer(model);
    result.dev_wer_history.push_back(w);
    if (stopper.observe(w, step)) {
      result.best = model;
      result.best_dev_wer = w;
      result.best_step = step;
    }
    emit({step, train_loss, w, cfg.lr});
  };

  evaluate(0, std::numeric_limits<double>::quiet_NaN());

  std::vector<AssembledSequence> batch;
  double loss_sum = 0.0;
  int loss_count = 0;
  long step = 0;
  while (step < cfg.max_steps && !stopper.stop()) {
    batch.clear();
    for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(train_set[next_index()]);
    const float loss = model.loss_and_grad(batch, grad, &dropout_rng);
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("train: non-finite loss at step " + std::to_string(step + 1));
    }
    clip_grad_norm(grad, cfg.max_grad_norm);
    opt.step(model.parameters(), grad);
    ++step;
    loss_sum += loss;
    ++loss_count;
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      evaluate(step, loss_sum / loss_count);
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  result.steps_run = step;
  result.early_stopped = stopper.stop();
  return result;
}

}  // namespace mmsr
