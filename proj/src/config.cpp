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

#include "kegnn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kegnn/errors.hpp"

namespace kegnn {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double to_real(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(value) + "'");
  }
  return v;
}

std::uint64_t to_count(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(value) + "'");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(value) + "'");
}

std::filesystem::path resolve(std::string_view value, const std::filesystem::path& base_dir) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative()) p = base_dir / p;
  return p.lexically_normal();
}

}  // namespace

void TrainConfig::check() const {
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size && *batch_size < 1) throw ConfigError("train.batch_size must be positive or 'full'");
  if (early_stopping.patience < 1) throw ConfigError("train.patience must be at least 1");
  if (!(early_stopping.min_delta >= 0.0)) throw ConfigError("train.min_delta must be non-negative");
  if (!(edges_drop_rate >= 0.0 && edges_drop_rate < 1.0)) throw ConfigError("train.edges_drop_rate must lie in [0,1)");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
    throw ConfigError("train.adam_* must satisfy 0 <= beta < 1 and epsilon > 0");
  }
  if (runs < 1) throw ConfigError("train.runs must be at least 1");
}

void ExperimentConfig::check() const {
  model.check();
  train.check();
  if (!(ke.weights.min >= 0.0 && ke.weights.min <= ke.weights.max)) {
    throw ConfigError("ke.min_clause_weight/ke.max_clause_weight must satisfy 0 <= min <= max");
  }
  if (!ke.weights.random_initial && !(ke.weights.initial >= 0.0)) {
    throw ConfigError("ke.clause_weight_init must be non-negative");
  }
  if (!std::isfinite(ke.binary_preactivation)) throw ConfigError("ke.binary_preactivation must be finite");
  if (clauses.empty()) throw ConfigError("clauses must be 'template' or a clause file path");
}

void ExperimentConfig::set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir) {
  if (key == "dataset") dataset = value.empty() ? std::filesystem::path() : resolve(value, base_dir);
  else if (key == "clauses") clauses = value == "template" ? std::string("template") : resolve(value, base_dir).string();
  else if (key == "out") out = resolve(value, base_dir);
  else if (key == "model.kind") model.kind = parse_model_kind(value);
  else if (key == "model.hidden_layers") model.hidden_layers = to_count(key, value);
  else if (key == "model.hidden_channels") model.hidden_channels = to_count(key, value);
  else if (key == "model.attention_heads") model.attention_heads = to_count(key, value);
  else if (key == "model.dropout") model.dropout = to_real(key, value);
  else if (key == "model.batch_norm") model.batch_norm = to_bool(key, value);
  else if (key == "model.normalize_edges") model.normalize_edges = to_bool(key, value);
  else if (key == "train.epochs") train.epochs = to_count(key, value);
  else if (key == "train.learning_rate") train.learning_rate = to_real(key, value);
  else if (key == "train.batch_size") {
    if (value == "full") train.batch_size.reset();
    else train.batch_size = to_count(key, value);
  } else if (key == "train.early_stopping") train.early_stopping.enabled = to_bool(key, value);
  else if (key == "train.min_delta") train.early_stopping.min_delta = to_real(key, value);
  else if (key == "train.patience") train.early_stopping.patience = to_count(key, value);
  else if (key == "train.edges_drop_rate") train.edges_drop_rate = to_real(key, value);
  else if (key == "train.adam_beta1") train.adam.beta1 = to_real(key, value);
  else if (key == "train.adam_beta2") train.adam.beta2 = to_real(key, value);
  else if (key == "train.adam_epsilon") train.adam.epsilon = to_real(key, value);
  else if (key == "train.seed") train.seed = to_count(key, value);
  else if (key == "train.runs") train.runs = to_count(key, value);
  else if (key == "train.loss") {
    if (value == "ce") train.loss = LossKind::cross_entropy;
    else if (value == "bce") train.loss = LossKind::bce;
    else throw ConfigError("train.loss: expected ce or bce, got '" + std::string(value) + "'");
  } else if (key == "ke.layers") ke.layers = to_count(key, value);
  else if (key == "ke.binary_preactivation") ke.binary_preactivation = to_real(key, value);
  else if (key == "ke.clause_weight_init") {
    if (value == "random") ke.weights.random_initial = true;
    else {
      ke.weights.random_initial = false;
      ke.weights.initial = to_real(key, value);
    }
  } else if (key == "ke.min_clause_weight") ke.weights.min = to_real(key, value);
  else if (key == "ke.max_clause_weight") ke.weights.max = to_real(key, value);
  else if (key == "ke.literal_signs") {
    if (value == "signed") ke.mode = BoostMode::signed_literals;
    else if (value == "verbatim") ke.mode = BoostMode::verbatim;
    else throw ConfigError("ke.literal_signs: expected signed or verbatim, got '" + std::string(value) + "'");
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse(buffer.str(), std::filesystem::absolute(path).parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::render() const {
  std::ostringstream text;
  text << "dataset=" << dataset.string() << '\n';
  text << "clauses=" << clauses << '\n';
  text << "out=" << out.string() << '\n';
  text << "model.kind=" << to_string(model.kind) << '\n';
  text << "model.hidden_layers=" << model.hidden_layers << '\n';
  text << "model.hidden_channels=" << model.hidden_channels << '\n';
  text << "model.attention_heads=" << model.attention_heads << '\n';
  text << "model.dropout=" << fmt(model.dropout) << '\n';
  text << "model.batch_norm=" << (model.batch_norm ? "true" : "false") << '\n';
  text << "model.normalize_edges=" << (model.normalize_edges ? "true" : "false") << '\n';
  text << "train.epochs=" << train.epochs << '\n';
  text << "train.learning_rate=" << fmt(train.learning_rate) << '\n';
  text << "train.batch_size=" << (train.batch_size ? std::to_string(*train.batch_size) : std::string("full")) << '\n';
  text << "train.early_stopping=" << (train.early_stopping.enabled ? "true" : "false") << '\n';
  text << "train.min_delta=" << fmt(train.early_stopping.min_delta) << '\n';
  text << "train.patience=" << train.early_stopping.patience << '\n';
  text << "train.edges_drop_rate=" << fmt(train.edges_drop_rate) << '\n';
  text << "train.adam_beta1=" << fmt(train.adam.beta1) << '\n';
  text << "train.adam_beta2=" << fmt(train.adam.beta2) << '\n';
  text << "train.adam_epsilon=" << fmt(train.adam.epsilon) << '\n';
  text << "train.seed=" << train.seed << '\n';
  text << "train.runs=" << train.runs << '\n';
  text << "train.loss=" << (train.loss == LossKind::bce ? "bce" : "ce") << '\n';
  text << "ke.layers=" << ke.layers << '\n';
  text << "ke.clause_weight_init=" << (ke.weights.random_initial ? std::string("random") : fmt(ke.weights.initial))
      << '\n';
  text << "ke.binary_preactivation=" << fmt(ke.binary_preactivation) << '\n';
  text << "ke.min_clause_weight=" << fmt(ke.weights.min) << '\n';
  text << "ke.max_clause_weight=" << fmt(ke.weights.max) << '\n';
  text << "ke.literal_signs=" << (ke.mode == BoostMode::verbatim ? "verbatim" : "signed") << '\n';
  return text.str();
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.kind == b.kind && a.hidden_layers == b.hidden_layers && a.hidden_channels == b.hidden_channels &&
         a.attention_heads == b.attention_heads && a.dropout == b.dropout && a.batch_norm == b.batch_norm &&
         a.normalize_edges == b.normalize_edges;
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.epochs == b.epochs && a.learning_rate == b.learning_rate && a.batch_size == b.batch_size &&
         a.early_stopping == b.early_stopping && a.edges_drop_rate == b.edges_drop_rate &&
         a.adam.beta1 == b.adam.beta1 && a.adam.beta2 == b.adam.beta2 && a.adam.epsilon == b.adam.epsilon &&
         a.seed == b.seed && a.runs == b.runs && a.loss == b.loss;
}

bool operator==(const KnowledgeConfig& a, const KnowledgeConfig& b) {
  return a.layers == b.layers && a.binary_preactivation == b.binary_preactivation && a.weights == b.weights &&
         a.mode == b.mode;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.dataset == b.dataset && a.clauses == b.clauses && a.out == b.out && a.model == b.model &&
         a.train == b.train && a.ke == b.ke;
}

}  // namespace kegnn
