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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kegnn {

/// Predicate vocabulary: one unary predicate per class (index == label id)
/// and the single binary link predicate.
struct PredicateSchema {
  std::vector<std::string> unary;
  std::string binary;

  /// Names C0..C{m-1} and Link.
  static PredicateSchema for_classes(std::size_t num_classes);

  /// Throws ConfigError for empty, duplicate or malformed names. Names may not
  /// start with a lowercase 'n', which the clause syntax reserves for negation.
  void check() const;

  std::optional<std::size_t> unary_index(std::string_view name) const;
};

/// 1-based position inside a clause file; zero when built programmatically.
struct SourcePos {
  std::size_t line = 0;
  std::size_t column = 0;
};

struct Literal {
  bool negated = false;
  std::string predicate;
  std::vector<std::string> variables;
  SourcePos pos;

  /// Structural equality; source positions are ignored.
  bool operator==(const Literal& other) const {
    return negated == other.negated && predicate == other.predicate && variables == other.variables;
  }
};

struct WeightSpec {
  bool learnable = true;
  /// Learnable: initial value, or nullopt for the configured default.
  /// Fixed: the constant weight.
  std::optional<double> value;

  static WeightSpec learned(std::optional<double> initial = std::nullopt) { return {true, initial}; }
  static WeightSpec fixed(double v) { return {false, v}; }
  bool operator==(const WeightSpec&) const = default;
};

struct Clause {
  std::vector<Literal> literals;
  WeightSpec weight;
  SourcePos pos;

  bool operator==(const Clause& other) const { return literals == other.literals && weight == other.weight; }
};

/// Grammar, one clause per line, `#` starts a comment:
///   clause  := weight ':' literal (',' literal)*
///   weight  := '_' [real] | real          ('_' = learnable)
///   literal := ['n'] Name '(' var [',' var] ')'     var in {x, y}
/// Throws ParseError carrying line and column.
std::vector<Clause> parse_clauses(std::string_view text);

/// As parse_clauses, with the file name prefixed to error messages.
std::vector<Clause> load_clause_file(const std::filesystem::path& path);

std::string render_literal(const Literal& literal);
std::string render_clause(const Clause& clause);

struct Diagnostic {
  SourcePos pos;
  std::string message;
};

struct ValidationReport {
  std::vector<Diagnostic> errors;
  std::vector<Diagnostic> warnings;
  bool ok() const noexcept { return errors.empty(); }
  /// Errors one per line, each prefixed with its position.
  std::string describe() const;
};

ValidationReport validate(const std::vector<Clause>& clauses, const PredicateSchema& schema);

/// One clause per class c: nC(x), nLink(x,y), C(y) with a learnable weight.
std::vector<Clause> instantiate_class_template(const PredicateSchema& schema);

}  // namespace kegnn
