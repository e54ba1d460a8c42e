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

#include "kegnn/fuzzy.hpp"

#include <algorithm>

#include "kegnn/errors.hpp"

namespace kegnn {

namespace {

void require_truth(double t, const char* where) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError(std::string(where) + ": truth value " + std::to_string(t) + " outside [0,1]");
  }
}

}  // namespace

double godel_tconorm(std::span<const double> truths) {
  if (truths.empty()) throw ContractError("godel_tconorm: empty truth vector");
  double best = 0.0;
  for (double t : truths) {
    require_truth(t, "godel_tconorm");
    best = std::max(best, t);
  }
  return best;
}

double fuzzy_not(double t) {
  require_truth(t, "fuzzy_not");
  return 1.0 - t;
}

double literal_truth(const Literal& literal, double predicate_truth) {
  require_truth(predicate_truth, "literal_truth");
  return literal.negated ? 1.0 - predicate_truth : predicate_truth;
}

int literal_preactivation_sign(const Literal& literal) { return literal.negated ? -1 : 1; }

void TruthAssignment::set(GroundAtom atom, double t) {
  require_truth(t, "TruthAssignment");
  values_[std::move(atom)] = t;
}

double TruthAssignment::at(const GroundAtom& atom) const {
  const auto it = values_.find(atom);
  if (it == values_.end()) {
    std::string args;
    for (auto a : atom.arguments) args += (args.empty() ? "" : ",") + std::to_string(a);
    throw ContractError("no truth value for " + atom.predicate + "(" + args + ")");
  }
  return it->second;
}

double clause_truth(const Clause& clause, const TruthAssignment& assignment, std::uint32_t x, std::uint32_t y) {
  std::vector<double> truths;
  truths.reserve(clause.literals.size());
  for (const Literal& lit : clause.literals) {
    GroundAtom atom{lit.predicate, {}};
    for (const auto& v : lit.variables) {
      if (v == "x") atom.arguments.push_back(x);
      else if (v == "y") atom.arguments.push_back(y);
      else throw ContractError("clause_truth: unbound variable '" + v + "'");
    }
    truths.push_back(literal_truth(lit, assignment.at(atom)));
  }
  return godel_tconorm(truths);
}

}  // namespace kegnn
