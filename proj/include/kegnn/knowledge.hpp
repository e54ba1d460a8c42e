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
#include <memory>
#include <span>
#include <vector>

#include "kegnn/graph.hpp"
#include "kegnn/logic.hpp"
#include "kegnn/random.hpp"
#include "kegnn/tensor.hpp"

namespace kegnn {

/// The matrix M of grounded predicate preactivations, one row per grounding.
/// Column 2c holds class c of the row's first node (x), column 2c+1 class c of
/// its second node (y), and the last column the constant link preactivation.
/// A node table grounds single-variable clauses with one row (i,i) per node.
struct GroundingTable {
  std::size_t num_nodes = 0;
  std::size_t num_classes = 0;
  double binary_preactivation = 0.0;
  std::vector<Edge> rows;
  /// rows x columns, row-major: target cell node*m + class of each entry, -1
  /// for the link column.
  std::shared_ptr<const std::vector<std::int64_t>> group_by;

  std::size_t columns() const noexcept { return 2 * num_classes + 1; }
  std::size_t binary_column() const noexcept { return 2 * num_classes; }
  static std::size_t x_column(std::size_t c) noexcept { return 2 * c; }
  static std::size_t y_column(std::size_t c) noexcept { return 2 * c + 1; }

  /// Subtable keeping the listed rows in the given order.
  GroundingTable select_rows(std::span<const std::size_t> keep) const;
};

GroundingTable build_grounding_table(std::size_t num_nodes, std::span<const Edge> edges, std::size_t num_classes,
                                     double binary_preactivation);
GroundingTable build_node_table(std::size_t num_nodes, std::size_t num_classes, double binary_preactivation);

struct GroundingTables {
  GroundingTable pairs;
  GroundingTable nodes;
};

/// Sign-consistent boost (default) or the unsigned variant where every
/// literal uses its predicate preactivation and receives a positive delta.
enum class BoostMode { signed_literals, verbatim };

/// A clause resolved against the table layout.
struct CompiledClause {
  std::vector<std::size_t> columns;  // one table column per literal
  std::vector<double> signs;         // +1 positive, -1 negated
  bool node_grounded = false;        // single-variable clause without the link predicate
  std::string text;
};

/// Throws GroundingError naming the literal and clause when a predicate is
/// not in the schema or a literal does not fit the layout.
CompiledClause compile_clause(const Clause& clause, const PredicateSchema& schema);
std::vector<CompiledClause> compile_clauses(const std::vector<Clause>& clauses, const PredicateSchema& schema);

/// M = the table's view of z (n x m): rows x columns.
Var table_preactivations(Var z, const GroundingTable& table);

/// Per-row, per-literal deltas (rows x literals) of one clause: with u = s*z
/// over the clause's columns, delta = s * w * softmax(u).
Var clause_boost(Var table_values, const CompiledClause& clause, Var weight,
                 BoostMode mode = BoostMode::signed_literals);

/// Sums table-space deltas (rows x columns) into node/class cells (n x m).
/// Link-column deltas are discarded.
Var group_by_scatter(Var table_deltas, const GroundingTable& table);

/// z + sum over clauses of the grouped boosts. `weights` holds one 1x1 node per clause.
Var ke_layer_forward(Var z, const GroundingTables& tables, std::span<const CompiledClause> clauses,
                     std::span<const Var> weights, BoostMode mode = BoostMode::signed_literals);

/// Applies one knowledge layer per entry of `layer_weights`.
Var stack_forward(Var z, const GroundingTables& tables, std::span<const CompiledClause> clauses,
                  const std::vector<std::vector<Var>>& layer_weights, BoostMode mode = BoostMode::signed_literals);

struct ClauseWeightConfig {
  double initial = 0.5;
  bool random_initial = false;  // uniform on [0,1)
  double min = 0.0;
  double max = 500.0;
  bool operator==(const ClauseWeightConfig&) const = default;
};

/// One 1x1 weight per (layer, clause); fixed clauses are never updated or clipped.
class ClauseWeights {
 public:
  ClauseWeights() = default;
  ClauseWeights(const std::vector<Clause>& clauses, std::size_t layers, const ClauseWeightConfig& config, Rng& rng);

  std::size_t layers() const noexcept { return layers_; }
  std::size_t clauses() const noexcept { return learnable_.size(); }
  bool learnable(std::size_t clause) const { return learnable_.at(clause); }
  double value(std::size_t layer, std::size_t clause) const { return values_.at(layer * clauses() + clause)(0, 0); }
  void set(std::size_t layer, std::size_t clause, double v) { values_.at(layer * clauses() + clause)(0, 0) = v; }
  const ClauseWeightConfig& config() const noexcept { return config_; }

  /// Variables for learnable clauses, constants for fixed ones; [layer][clause].
  std::vector<std::vector<Var>> bind(Tape& tape) const;

  /// Learnable entries, layer-major, with their tape positions in bind().
  std::vector<Matrix*> learnable_values();
  std::vector<std::pair<std::size_t, std::size_t>> learnable_slots() const;

  /// Clamps learnable weights into [min, max].
  void clip();

  bool operator==(const ClauseWeights&) const = default;

 private:
  std::size_t layers_ = 0;
  std::vector<bool> learnable_;
  std::vector<Matrix> values_;
  ClauseWeightConfig config_;
};

}  // namespace kegnn
