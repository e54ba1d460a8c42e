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

#include "kegnn/knowledge.hpp"

#include <algorithm>
#include <set>

#include "kegnn/errors.hpp"

namespace kegnn {

namespace {

GroundingTable make_table(std::size_t num_nodes, std::vector<Edge> rows, std::size_t m, double binary) {
  GroundingTable table;
  table.num_nodes = num_nodes;
  table.num_classes = m;
  table.binary_preactivation = binary;
  table.rows = std::move(rows);
  const std::size_t cols = table.columns();
  auto index = std::make_shared<std::vector<std::int64_t>>(table.rows.size() * cols);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const Edge& e = table.rows[r];
    if (e.src >= num_nodes || e.dst >= num_nodes) {
      throw IndexError("grounding row " + std::to_string(r) + " references a node >= " + std::to_string(num_nodes));
    }
    std::int64_t* row = index->data() + r * cols;
    for (std::size_t c = 0; c < m; ++c) {
      row[GroundingTable::x_column(c)] = static_cast<std::int64_t>(e.src * m + c);
      row[GroundingTable::y_column(c)] = static_cast<std::int64_t>(e.dst * m + c);
    }
    row[table.binary_column()] = -1;
  }
  table.group_by = std::move(index);
  return table;
}

}  // namespace

GroundingTable GroundingTable::select_rows(std::span<const std::size_t> keep) const {
  GroundingTable out;
  out.num_nodes = num_nodes;
  out.num_classes = num_classes;
  out.binary_preactivation = binary_preactivation;
  const std::size_t cols = columns();
  auto index = std::make_shared<std::vector<std::int64_t>>();
  index->reserve(keep.size() * cols);
  out.rows.reserve(keep.size());
  for (std::size_t r : keep) {
    if (r >= rows.size()) throw IndexError("select_rows: row " + std::to_string(r) + " of " + std::to_string(rows.size()));
    out.rows.push_back(rows[r]);
    index->insert(index->end(), group_by->begin() + static_cast<std::ptrdiff_t>(r * cols),
                  group_by->begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  out.group_by = std::move(index);
  return out;
}

GroundingTable build_grounding_table(std::size_t num_nodes, std::span<const Edge> edges, std::size_t num_classes,
                                     double binary_preactivation) {
  return make_table(num_nodes, std::vector<Edge>(edges.begin(), edges.end()), num_classes, binary_preactivation);
}

GroundingTable build_node_table(std::size_t num_nodes, std::size_t num_classes, double binary_preactivation) {
  std::vector<Edge> rows(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) rows[i] = {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i)};
  return make_table(num_nodes, std::move(rows), num_classes, binary_preactivation);
}

CompiledClause compile_clause(const Clause& clause, const PredicateSchema& schema) {
  CompiledClause out;
  out.text = render_clause(clause);
  if (clause.literals.empty()) throw GroundingError("clause " + out.text + " has no literals");
  std::set<std::string> vars;
  bool has_binary = false;
  for (const Literal& lit : clause.literals) {
    vars.insert(lit.variables.begin(), lit.variables.end());
    has_binary |= lit.predicate == schema.binary;
  }
  out.node_grounded = !has_binary && vars.size() == 1;
  for (const Literal& lit : clause.literals) {
    const auto fail = [&](const std::string& why) {
      throw GroundingError("literal " + render_literal(lit) + " of clause " + out.text + ": " + why);
    };
    std::size_t column = 0;
    if (lit.predicate == schema.binary) {
      if (lit.variables != std::vector<std::string>{"x", "y"}) fail("the link predicate must be applied to (x,y)");
      column = 2 * schema.unary.size();
    } else if (const auto c = schema.unary_index(lit.predicate)) {
      if (lit.variables.size() != 1) fail("unary predicate applied to " + std::to_string(lit.variables.size()) + " variables");
      if (out.node_grounded || lit.variables[0] == "x") column = GroundingTable::x_column(*c);
      else if (lit.variables[0] == "y") column = GroundingTable::y_column(*c);
      else fail("unknown variable '" + lit.variables[0] + "'");
    } else {
      fail("unknown predicate");
    }
    out.columns.push_back(column);
    out.signs.push_back(lit.negated ? -1.0 : 1.0);
  }
  return out;
}

std::vector<CompiledClause> compile_clauses(const std::vector<Clause>& clauses, const PredicateSchema& schema) {
  std::vector<CompiledClause> out;
  out.reserve(clauses.size());
  for (const Clause& c : clauses) out.push_back(compile_clause(c, schema));
  return out;
}

Var table_preactivations(Var z, const GroundingTable& table) {
  if (z.rows() != table.num_nodes || z.cols() != table.num_classes) {
    throw DimensionError("grounding table for " + std::to_string(table.num_nodes) + "x" +
                         std::to_string(table.num_classes) + " preactivations, got " + shape_string(z.value()));
  }
  return gather_cells(z, table.group_by, table.rows.size(), table.columns(), table.binary_preactivation);
}

Var clause_boost(Var table_values, const CompiledClause& clause, Var weight, BoostMode mode) {
  if (weight.rows() != 1 || weight.cols() != 1) {
    throw DimensionError("clause weight must be 1x1, got " + shape_string(weight.value()));
  }
  for (std::size_t col : clause.columns) {
    if (col >= table_values.cols()) {
      throw GroundingError("clause " + clause.text + " needs column " + std::to_string(col) + " of a " +
                           std::to_string(table_values.cols()) + "-column table");
    }
  }
  Tape& tape = table_values.tape();
  Var predicates = select_cols(table_values, clause.columns);
  if (mode == BoostMode::verbatim) return scale_by(rowwise_softmax(predicates), weight);
  Var signs = tape.constant(Matrix(1, clause.signs.size(), clause.signs));
  Var literals = mul(predicates, signs);
  return mul(scale_by(rowwise_softmax(literals), weight), signs);
}

Var group_by_scatter(Var table_deltas, const GroundingTable& table) {
  if (table_deltas.rows() != table.rows.size() || table_deltas.cols() != table.columns()) {
    throw DimensionError("group_by_scatter: deltas " + shape_string(table_deltas.value()) + " for a " +
                         std::to_string(table.rows.size()) + "x" + std::to_string(table.columns()) + " table");
  }
  return scatter_cells(table_deltas, table.group_by, table.num_nodes, table.num_classes);
}

Var ke_layer_forward(Var z, const GroundingTables& tables, std::span<const CompiledClause> clauses,
                     std::span<const Var> weights, BoostMode mode) {
  if (weights.size() != clauses.size()) {
    throw ContractError("ke layer: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(clauses.size()) + " clauses");
  }
  Var out = z;
  for (const bool nodes : {false, true}) {
    const GroundingTable& table = nodes ? tables.nodes : tables.pairs;
    std::optional<Var> m;
    std::optional<Var> total;
    for (std::size_t k = 0; k < clauses.size(); ++k) {
      if (clauses[k].node_grounded != nodes) continue;
      if (!m) m = table_preactivations(z, table);
      Var delta = place_cols(clause_boost(*m, clauses[k], weights[k], mode), clauses[k].columns, table.columns());
      total = total ? add(*total, delta) : delta;
    }
    if (total) out = add(out, group_by_scatter(*total, table));
  }
  return out;
}

Var stack_forward(Var z, const GroundingTables& tables, std::span<const CompiledClause> clauses,
                  const std::vector<std::vector<Var>>& layer_weights, BoostMode mode) {
  Var out = z;
  for (const auto& weights : layer_weights) out = ke_layer_forward(out, tables, clauses, weights, mode);
  return out;
}

ClauseWeights::ClauseWeights(const std::vector<Clause>& clauses, std::size_t layers, const ClauseWeightConfig& config,
                             Rng& rng)
    : layers_(layers), config_(config) {
  if (!(config.min >= 0.0 && config.min <= config.max)) {
    throw ConfigError("clause weight bounds must satisfy 0 <= min <= max");
  }
  for (const Clause& c : clauses) learnable_.push_back(c.weight.learnable);
  values_.reserve(layers * clauses.size());
  for (std::size_t l = 0; l < layers; ++l) {
    for (const Clause& c : clauses) {
      double v;
      if (c.weight.value) v = *c.weight.value;
      else v = config.random_initial ? rng.uniform() : config.initial;
      if (!(v >= 0.0)) throw ConfigError("clause weight for " + render_clause(c) + " must be non-negative");
      values_.emplace_back(1, 1, v);
    }
  }
}

std::vector<std::vector<Var>> ClauseWeights::bind(Tape& tape) const {
  std::vector<std::vector<Var>> out(layers_);
  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t c = 0; c < clauses(); ++c) {
      const Matrix& v = values_[l * clauses() + c];
      out[l].push_back(learnable_[c] ? tape.variable(v) : tape.constant(v));
    }
  }
  return out;
}

std::vector<Matrix*> ClauseWeights::learnable_values() {
  std::vector<Matrix*> out;
  for (const auto& [l, c] : learnable_slots()) out.push_back(&values_[l * clauses() + c]);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> ClauseWeights::learnable_slots() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t c = 0; c < clauses(); ++c)
      if (learnable_[c]) out.emplace_back(l, c);
  return out;
}

void ClauseWeights::clip() {
  for (std::size_t l = 0; l < layers_; ++l)
    for (std::size_t c = 0; c < clauses(); ++c)
      if (learnable_[c]) {
        double& v = values_[l * clauses() + c](0, 0);
        v = std::clamp(v, config_.min, config_.max);
      }
}

}  // namespace kegnn
