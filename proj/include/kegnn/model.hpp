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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kegnn/graph.hpp"
#include "kegnn/random.hpp"
#include "kegnn/tensor.hpp"

namespace kegnn {

enum class ModelKind { mlp, gcn, gat };

std::string_view to_string(ModelKind kind);
/// Accepts mlp|gcn|gat; throws ConfigError otherwise.
ModelKind parse_model_kind(std::string_view text);

enum class Mode { train, eval };

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  /// Number of linear/propagation layers in the stack, the output layer
  /// included. 1 means a single layer from features to classes.
  std::size_t hidden_layers = 2;
  std::size_t hidden_channels = 32;
  std::size_t attention_heads = 1;
  double dropout = 0.5;
  bool batch_norm = true;
  /// GCN only: symmetric degree normalisation; otherwise every coefficient is 1.
  bool normalize_edges = true;

  void check() const;
};

/// Ordered, named matrices. Order is fixed at construction and is the order
/// used by bind() and the optimiser.
class ParameterStore {
 public:
  std::size_t add(std::string name, Matrix value);
  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Matrix& value(std::size_t i) { return values_.at(i); }
  const Matrix& value(std::size_t i) const { return values_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws ContractError for unknown names.
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;
  std::size_t scalar_count() const;

  /// One tape variable per entry, holding a copy of the current value.
  std::vector<Var> bind(Tape& tape) const;

  bool operator==(const ParameterStore&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// Multiplies by an inverted-dropout mask. Identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);

/// H' = sum over in-neighbours j of i (self-loop included) of coeff(j->i) * (H W)[j].
Var gcn_layer_forward(Var h, Var weight, const Propagation& propagation);
Var gcn_layer_forward(const Matrix& x, Var weight, const Propagation& propagation);

struct GatLayerOutput {
  Var h;
  std::vector<Var> attention;  // per head, E' x 1, aligned with the propagation index
};

/// Multi-head attention layer. `weight` is d x (heads*F); `att_src` and
/// `att_dst` are F x heads. Heads are concatenated (n x heads*F) or averaged
/// (n x F). Attention dropout is applied when `rng` is non-null.
GatLayerOutput gat_layer_forward(Var h, Var weight, Var att_src, Var att_dst, const Propagation& propagation,
                                 std::size_t heads, bool concat, double attention_dropout = 0.0,
                                 Rng* rng = nullptr);
GatLayerOutput gat_layer_forward(const Matrix& x, Var weight, Var att_src, Var att_dst,
                                 const Propagation& propagation, std::size_t heads, bool concat,
                                 double attention_dropout = 0.0, Rng* rng = nullptr);

constexpr double kBatchNormEpsilon = 1e-5;
/// Share of the previous running statistic kept on each update.
constexpr double kBatchNormMomentum = 0.9;
constexpr double kAttentionSlope = 0.2;

/// Base network producing raw per-class preactivations (no final activation).
class Model {
 public:
  Model(const ModelConfig& config, std::size_t in_features, std::size_t num_classes, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t in_features() const noexcept { return in_features_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }
  /// Non-trainable state (batch-norm running statistics).
  ParameterStore& buffers() noexcept { return buffers_; }
  const ParameterStore& buffers() const noexcept { return buffers_; }

  /// `bound` holds params().bind(tape). `propagation` is required for gcn/gat.
  /// Training mode draws dropout masks from `rng` and updates running statistics.
  Var forward(Tape& tape, std::span<const Var> bound, const Matrix& features, const Propagation* propagation,
              Mode mode, Rng* rng);

 private:
  struct Layer {
    std::size_t weight = 0;
    std::optional<std::size_t> bias;  // absent when batch norm follows
    std::optional<std::size_t> gamma, beta, running_mean, running_var;
    std::optional<std::size_t> att_src, att_dst;
    std::size_t heads = 1;
    bool concat = true;
  };

  Var batch_norm_layer(Tape& tape, std::span<const Var> bound, const Layer& layer, Var x, Mode mode);

  ModelConfig config_;
  std::size_t in_features_;
  std::size_t num_classes_;
  ParameterStore params_;
  ParameterStore buffers_;
  std::vector<Layer> layers_;
};

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace kegnn
