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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kegnn/logic.hpp"

namespace kegnn {

/// max over the vector. Throws ContractError when empty and DomainError for
/// values outside [0,1].
double godel_tconorm(std::span<const double> truths);

double fuzzy_not(double t);

double literal_truth(const Literal& literal, double predicate_truth);

/// +1 for a positive literal, -1 for a negated one, so that
/// sigmoid(sign * z) == literal_truth(literal, sigmoid(z)).
int literal_preactivation_sign(const Literal& literal);

struct GroundAtom {
  std::string predicate;
  std::vector<std::uint32_t> arguments;
  auto operator<=>(const GroundAtom&) const = default;
};

class TruthAssignment {
 public:
  /// Throws DomainError unless t lies in [0,1].
  void set(GroundAtom atom, double t);
  /// Throws ContractError for unassigned atoms.
  double at(const GroundAtom& atom) const;
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::map<GroundAtom, double> values_;
};

/// Truth of the clause with variable x bound to node `x` and y to node `y`.
double clause_truth(const Clause& clause, const TruthAssignment& assignment, std::uint32_t x,
                    std::uint32_t y = 0);

}  // namespace kegnn
