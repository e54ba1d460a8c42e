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

#include "kegnn/logic.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "kegnn/errors.hpp"

namespace kegnn {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::string format_real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  Clause parse() {
    Clause clause;
    skip_space();
    clause.pos = here();
    clause.weight = parse_weight();
    expect(':');
    std::set<std::tuple<bool, std::string, std::vector<std::string>>> seen;
    skip_space();
    if (at_end()) fail("empty clause: expected at least one literal");
    while (true) {
      Literal lit = parse_literal();
      if (!seen.emplace(lit.negated, lit.predicate, lit.variables).second) {
        throw ParseError(lit.pos.line, lit.pos.column, "duplicate literal " + render_literal(lit));
      }
      clause.literals.push_back(std::move(lit));
      skip_space();
      if (at_end()) break;
      expect(',');
    }
    return clause;
  }

 private:
  SourcePos here() const { return {line_, i_ + 1}; }
  bool at_end() const { return i_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[i_]; }

  [[noreturn]] void fail(const std::string& message) const { throw ParseError(line_, i_ + 1, message); }

  void skip_space() {
    while (!at_end() && (text_[i_] == ' ' || text_[i_] == '\t')) ++i_;
  }

  void expect(char c) {
    skip_space();
    if (peek() != c) {
      fail(std::string("expected '") + c + "', found " +
           (at_end() ? std::string("end of line") : "'" + std::string(1, peek()) + "'"));
    }
    ++i_;
  }

  WeightSpec parse_weight() {
    WeightSpec spec;
    if (peek() == '_') {
      ++i_;
      spec.learnable = true;
      if (at_end() || peek() == ':' || peek() == ' ' || peek() == '\t') return spec;
      spec.value = parse_real();
      return spec;
    }
    spec.learnable = false;
    spec.value = parse_real();
    return spec;
  }

  double parse_real() {
    const std::size_t start = i_;
    while (!at_end() && peek() != ':' && peek() != ' ' && peek() != '\t') ++i_;
    const std::string_view token = text_.substr(start, i_ - start);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
      throw ParseError(line_, start + 1, "bad clause weight '" + std::string(token) + "'");
    }
    return v;
  }

  std::string parse_ident(const char* what) {
    skip_space();
    if (!ident_start(peek())) {
      fail(std::string("expected ") + what + ", found " +
           (at_end() ? std::string("end of line") : "'" + std::string(1, peek()) + "'"));
    }
    const std::size_t start = i_;
    while (!at_end() && ident_char(peek())) ++i_;
    return std::string(text_.substr(start, i_ - start));
  }

  Literal parse_literal() {
    skip_space();
    Literal lit;
    lit.pos = here();
    std::string name = parse_ident("predicate");
    if (name.size() > 1 && name[0] == 'n') {
      lit.negated = true;
      name.erase(0, 1);
    }
    lit.predicate = std::move(name);
    expect('(');
    while (true) {
      skip_space();
      const std::size_t col = i_ + 1;
      std::string var = parse_ident("variable");
      if (var != "x" && var != "y") {
        throw ParseError(line_, col, "unknown variable '" + var + "' (only x and y are allowed)");
      }
      lit.variables.push_back(std::move(var));
      skip_space();
      if (peek() == ')') {
        ++i_;
        break;
      }
      expect(',');
    }
    if (lit.variables.size() > 2) {
      throw ParseError(lit.pos.line, lit.pos.column,
                       "literal " + lit.predicate + " has " + std::to_string(lit.variables.size()) +
                           " arguments; predicates are unary or binary");
    }
    return lit;
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t i_ = 0;
};

}  // namespace

PredicateSchema PredicateSchema::for_classes(std::size_t num_classes) {
  PredicateSchema schema;
  for (std::size_t c = 0; c < num_classes; ++c) schema.unary.push_back("C" + std::to_string(c));
  schema.binary = "Link";
  return schema;
}

void PredicateSchema::check() const {
  if (unary.empty()) throw ConfigError("predicate schema needs at least one unary predicate");
  std::set<std::string> names;
  auto check_name = [&](const std::string& name) {
    if (name.empty() || !ident_start(name[0])) {
      throw ConfigError("predicate name '" + name + "' must start with a letter");
    }
    for (char c : name) {
      if (!ident_char(c)) throw ConfigError("predicate name '" + name + "' contains '" + std::string(1, c) + "'");
    }
    if (name[0] == 'n') throw ConfigError("predicate name '" + name + "' starts with the negation prefix 'n'");
    if (!names.insert(name).second) throw ConfigError("duplicate predicate name '" + name + "'");
  };
  for (const auto& name : unary) check_name(name);
  check_name(binary);
}

std::optional<std::size_t> PredicateSchema::unary_index(std::string_view name) const {
  for (std::size_t c = 0; c < unary.size(); ++c)
    if (unary[c] == name) return c;
  return std::nullopt;
}

std::vector<Clause> parse_clauses(std::string_view text) {
  std::vector<Clause> clauses;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    clauses.push_back(LineParser(line, line_no).parse());
  }
  return clauses;
}

std::vector<Clause> load_clause_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open clause file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_clauses(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.column(), path.string() + ": " + std::string(e.what()));
  }
}

std::string render_literal(const Literal& literal) {
  std::string out = literal.negated ? "n" : "";
  out += literal.predicate;
  out += '(';
  for (std::size_t k = 0; k < literal.variables.size(); ++k) {
    if (k) out += ',';
    out += literal.variables[k];
  }
  out += ')';
  return out;
}

std::string render_clause(const Clause& clause) {
  std::string out;
  if (clause.weight.learnable) {
    out = "_";
    if (clause.weight.value) out += format_real(*clause.weight.value);
  } else {
    out = format_real(clause.weight.value.value_or(0.0));
  }
  out += ':';
  for (std::size_t k = 0; k < clause.literals.size(); ++k) {
    if (k) out += ',';
    out += render_literal(clause.literals[k]);
  }
  return out;
}

std::string ValidationReport::describe() const {
  std::string out;
  for (const auto& d : errors) {
    if (!out.empty()) out += '\n';
    out += "line " + std::to_string(d.pos.line) + ", column " + std::to_string(d.pos.column) + ": " + d.message;
  }
  return out;
}

ValidationReport validate(const std::vector<Clause>& clauses, const PredicateSchema& schema) {
  ValidationReport report;
  for (const Clause& clause : clauses) {
    const std::string where = "clause " + render_clause(clause);
    if (clause.literals.empty()) {
      report.errors.push_back({clause.pos, "empty clause"});
      continue;
    }
    if (!clause.weight.learnable && !clause.weight.value) {
      report.errors.push_back({clause.pos, where + ": fixed weight without a value"});
    }
    if (clause.weight.value && !(std::isfinite(*clause.weight.value) && *clause.weight.value >= 0.0)) {
      report.errors.push_back({clause.pos, where + ": clause weights must be finite and non-negative"});
    }
    bool has_unary = false;
    std::set<std::tuple<bool, std::string, std::vector<std::string>>> seen;
    for (const Literal& lit : clause.literals) {
      if (!seen.emplace(lit.negated, lit.predicate, lit.variables).second) {
        report.errors.push_back({lit.pos, "duplicate literal " + render_literal(lit) + " in " + where});
      }
      for (const auto& v : lit.variables) {
        if (v != "x" && v != "y") {
          report.errors.push_back({lit.pos, "literal " + render_literal(lit) + " uses variable '" + v +
                                                "'; only x and y are allowed"});
        }
      }
      if (lit.predicate == schema.binary) {
        if (lit.variables != std::vector<std::string>{"x", "y"}) {
          report.errors.push_back({lit.pos, "binary predicate " + schema.binary + " must be applied as " +
                                                schema.binary + "(x,y), got " + render_literal(lit)});
        }
      } else if (schema.unary_index(lit.predicate)) {
        has_unary = true;
        if (lit.variables.size() != 1) {
          report.errors.push_back({lit.pos, "unary predicate " + lit.predicate + " takes one argument, got " +
                                                std::to_string(lit.variables.size())});
        }
      } else {
        report.errors.push_back({lit.pos, "unknown predicate '" + lit.predicate + "' in " + where});
      }
    }
    if (!has_unary) {
      report.warnings.push_back({clause.pos, where + " has no unary literal and cannot change any prediction"});
    }
  }
  return report;
}

std::vector<Clause> instantiate_class_template(const PredicateSchema& schema) {
  std::vector<Clause> clauses;
  clauses.reserve(schema.unary.size());
  for (const auto& name : schema.unary) {
    Clause c;
    c.weight = WeightSpec::learned();
    c.literals.push_back({true, name, {"x"}, {}});
    c.literals.push_back({true, schema.binary, {"x", "y"}, {}});
    c.literals.push_back({false, name, {"y"}, {}});
    clauses.push_back(std::move(c));
  }
  return clauses;
}

}  // namespace kegnn
