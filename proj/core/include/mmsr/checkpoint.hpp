#pragma once

// Checkpoint file:
//   "MMSRCKPT"            8-byte magic
//   uint32 LE             format version (1)
//   uint32 LE             header length H
//   H bytes               JSON header: config, vocab hash, tensor table,
//                         optimizer presence/step, training metadata
//   float32 LE x P        parameters in parameter_layout() order
//   float32 LE x 2P       AdamW first then second moments, if present

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mmsr/model.hpp"
#include "mmsr/optimizer.hpp"

namespace mmsr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerState {
  long step = 0;
  std::vector<float> m;
  std::vector<float> v;
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct TrainingMetadata {
  long step = 0;
  std::vector<double> dev_wer_history;
  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct ModelCheckpoint {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::vector<float> parameters;
  std::optional<OptimizerState> optimizer;
  TrainingMetadata metadata;

  static ModelCheckpoint from_model(const Transformer<float>& model, std::uint64_t vocab_hash);
  Transformer<float> to_model() const;
  // FNV-1a over the raw parameter bytes.
  std::uint64_t parameter_hash() const;

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmsr
