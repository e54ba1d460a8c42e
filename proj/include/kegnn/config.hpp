/*
 * Copyright 2026 The kegnn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "kegnn/knowledge.hpp"
#include "kegnn/model.hpp"
#include "kegnn/tensor.hpp"

namespace kegnn {

enum class LossKind { cross_entropy, bce };

struct EarlyStoppingConfig {
  bool enabled = true;
  double min_delta = 0.001;
  std::size_t patience = 10;
  bool operator==(const EarlyStoppingConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  std::optional<std::size_t> batch_size;  // nullopt: full batch
  EarlyStoppingConfig early_stopping;
  double edges_drop_rate = 0.0;
  AdamConfig adam;
  std::uint64_t seed = 1234;
  std::size_t runs = 1;
  LossKind loss = LossKind::cross_entropy;

  void check() const;
};

struct KnowledgeConfig {
  std::size_t layers = 1;
  double binary_preactivation = 500.0;
  ClauseWeightConfig weights;
  BoostMode mode = BoostMode::signed_literals;
};

/// Flat key=value file with `#` comments and `model.`, `train.`, `ke.`
/// prefixes. Unknown keys are errors.
struct ExperimentConfig {
  std::filesystem::path dataset;
  /// "template" for the per-class homophily clauses, otherwise a clause file.
  std::string clauses = "template";
  std::filesystem::path out = "out";
  ModelConfig model;
  TrainConfig train;
  KnowledgeConfig ke;

  /// Relative paths resolve against `base_dir`. Throws ConfigError with the
  /// offending line.
  static ExperimentConfig parse(std::string_view text, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Applies one key=value assignment; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir);

  /// Every key, with defaults filled in; parse(render()) reproduces *this.
  std::string render() const;

  void check() const;
  bool uses_template() const { return clauses == "template"; }
};

bool operator==(const ModelConfig& a, const ModelConfig& b);
bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const KnowledgeConfig& a, const KnowledgeConfig& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace kegnn
