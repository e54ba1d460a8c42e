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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kegnn/config.hpp"
#include "kegnn/graph.hpp"
#include "kegnn/knowledge.hpp"
#include "kegnn/logic.hpp"
#include "kegnn/model.hpp"

namespace kegnn {

/// Mean loss of the final preactivations over `rows`. Throws ContractError
/// for an empty row set.
Var loss(Var z, std::span<const int> labels, std::span<const std::size_t> rows, LossKind kind = LossKind::cross_entropy);

/// Share of `rows` whose arg-max class (lowest id on ties) equals the label.
double accuracy(const Matrix& z, std::span<const int> labels, std::span<const std::size_t> rows);

/// Validation-loss early stopping: an epoch improves when its loss is below
/// best - min_delta; training stops after `patience` epochs without one.
class EarlyStopper {
 public:
  EarlyStopper(double min_delta, std::size_t patience);
  /// Returns true when training should stop after this epoch.
  bool update(double valid_loss);
  std::size_t waited() const noexcept { return waited_; }

 private:
  double min_delta_;
  std::size_t patience_;
  double best_;
  std::size_t waited_ = 0;
};

bool early_stop_check(std::span<const double> valid_history, double min_delta, std::size_t patience);
/// 1-based epoch at which the rule fires, if it does.
std::optional<std::size_t> early_stop_epoch(std::span<const double> valid_history, double min_delta,
                                            std::size_t patience);

enum class NodeSet { train, valid, test, all };
std::string_view to_string(NodeSet set);
NodeSet parse_node_set(std::string_view text);

/// Share of out-neighbours of class-k nodes that are class k, with nodes and
/// neighbours both restricted to `set`; edge multiplicity counts. nullopt when
/// no class-k node of the set has a neighbour in it.
std::optional<double> clause_compliance(const Graph& graph, std::size_t k, NodeSet set = NodeSet::train);

/// Class index c when `clause` is the homophily clause nC(x),nLink(x,y),C(y).
std::optional<std::size_t> template_class(const Clause& clause, const PredicateSchema& schema);

/// Base network, knowledge layers and clause weights for one graph.
class Network {
 public:
  Network(const Graph& graph, const ExperimentConfig& config, std::vector<Clause> clauses, PredicateSchema schema,
          std::uint64_t seed);

  const Graph& graph() const noexcept { return *graph_; }
  const ExperimentConfig& config() const noexcept { return config_; }
  Model& model() noexcept { return model_; }
  const Model& model() const noexcept { return model_; }
  ClauseWeights& weights() noexcept { return weights_; }
  const ClauseWeights& weights() const noexcept { return weights_; }
  const std::vector<Clause>& clauses() const noexcept { return clauses_; }
  const PredicateSchema& schema() const noexcept { return schema_; }
  const std::vector<CompiledClause>& compiled() const noexcept { return compiled_; }
  const Propagation& full_propagation() const noexcept { return propagation_; }
  const GroundingTables& full_tables() const noexcept { return tables_; }

  struct Bound {
    std::vector<Var> params;
    std::vector<std::vector<Var>> weights;
  };
  Bound bind(Tape& tape) const;

  /// Final preactivations. Null propagation/tables mean the full edge set.
  Var forward(Tape& tape, const Bound& bound, Mode mode, Rng* rng, const Propagation* propagation = nullptr,
              const GroundingTables* tables = nullptr);

  /// Eval-mode preactivations on the full graph.
  Matrix predict();

  /// Named copies of parameters, batch-norm buffers and clause weights.
  std::vector<std::pair<std::string, Matrix>> state() const;
  /// Inverse of state(); throws ContractError on missing names or shape mismatch.
  void load_state(const std::vector<std::pair<std::string, Matrix>>& state);

 private:
  const Graph* graph_;
  ExperimentConfig config_;
  std::vector<Clause> clauses_;
  PredicateSchema schema_;
  std::vector<CompiledClause> compiled_;
  Model model_;
  ClauseWeights weights_;
  Propagation propagation_;
  GroundingTables tables_;
};

/// Clauses of the experiment: the class template or the parsed clause file,
/// validated against the graph's schema. Throws ConfigError on invalid clauses.
std::vector<Clause> experiment_clauses(const ExperimentConfig& config, const PredicateSchema& schema);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
  double seconds = 0.0;
};

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::optional<std::size_t> stopped_epoch;
  double best_valid_loss = 0.0;
  double valid_accuracy = 0.0;  // at the selected parameters
  double test_accuracy = 0.0;   // computed once, at the selected parameters
  /// Clause weights after the last epoch, [layer][clause].
  std::vector<std::vector<double>> last_epoch_weights;
  /// Selected network state (parameters, buffers, clause weights).
  std::vector<std::pair<std::string, Matrix>> state;
};

/// Trains one run end to end. Throws DivergenceError with run/epoch context
/// when a value becomes non-finite.
RunResult train(const Graph& graph, const ExperimentConfig& config, const std::vector<Clause>& clauses,
                const PredicateSchema& schema, std::uint64_t seed, std::size_t run_index = 0);

struct ExperimentResult {
  std::vector<RunResult> runs;
  double mean_test_accuracy = 0.0;
  double std_test_accuracy = 0.0;  // sample standard deviation; 0 for one run
};

/// Runs `config.train.runs` runs with seeds seed + run_index, on up to
/// `parallel` threads; results are ordered by run index.
ExperimentResult run_experiment(const Graph& graph, const ExperimentConfig& config, const std::vector<Clause>& clauses,
                                const PredicateSchema& schema, std::size_t parallel = 1);

double mean(std::span<const double> xs);
double sample_std(std::span<const double> xs);
/// Spearman rank correlation with average ranks for ties; nullopt when either
/// side is constant or the sizes differ.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

struct WeightComplianceRow {
  std::string clause;
  double weight = 0.0;                // mean over runs and layers of last-epoch weights
  std::optional<double> compliance;   // training-set compliance for class clauses
};

std::vector<WeightComplianceRow> weight_compliance_report(const std::vector<RunResult>& runs, const Graph& graph,
                                                          const std::vector<Clause>& clauses,
                                                          const PredicateSchema& schema);
std::string weight_compliance_csv(const std::vector<WeightComplianceRow>& rows);

/// Per run: Spearman correlation of layer-averaged last-epoch class clause
/// weights against training compliance.
std::vector<std::optional<double>> weight_compliance_correlations(const std::vector<RunResult>& runs,
                                                                  const Graph& graph,
                                                                  const std::vector<Clause>& clauses,
                                                                  const PredicateSchema& schema);

struct Checkpoint {
  std::string config;  // rendered effective config
  std::vector<Clause> clauses;
  std::vector<std::pair<std::string, Matrix>> matrices;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Worst relative finite-difference error of the full pipeline (base network,
/// knowledge layers, clause weights) on a small synthetic instance shaped by
/// `config`: 6 nodes, dropout off, at most 4 channels and 2 heads.
double end_to_end_grad_check(const ExperimentConfig& config, std::uint64_t seed, double eps = 1e-5);

}  // namespace kegnn
