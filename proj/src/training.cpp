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

#include "kegnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "kegnn/errors.hpp"

namespace kegnn {

Var loss(Var z, std::span<const int> labels, std::span<const std::size_t> rows, LossKind kind) {
  if (rows.empty()) throw ContractError("loss: empty node mask");
  if (kind == LossKind::bce) return bce_with_logits(z, labels, rows);
  return nll_loss(log_softmax(z), labels, rows);
}

double accuracy(const Matrix& z, std::span<const int> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("accuracy: empty node mask");
  if (labels.size() != z.rows()) {
    throw DimensionError("accuracy: " + std::to_string(labels.size()) + " labels for " + shape_string(z));
  }
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    if (r >= z.rows()) throw IndexError("accuracy: row " + std::to_string(r) + " outside " + shape_string(z));
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.cols(); ++c)
      if (z(r, c) > z(r, best)) best = c;
    correct += static_cast<int>(best) == labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

EarlyStopper::EarlyStopper(double min_delta, std::size_t patience)
    : min_delta_(min_delta), patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (!(min_delta >= 0.0)) throw ConfigError("early stopping: min_delta must be non-negative");
  if (patience < 1) throw ConfigError("early stopping: patience must be at least 1");
}

bool EarlyStopper::update(double valid_loss) {
  if (valid_loss < best_ - min_delta_) {
    best_ = valid_loss;
    waited_ = 0;
    return false;
  }
  return ++waited_ >= patience_;
}

std::optional<std::size_t> early_stop_epoch(std::span<const double> valid_history, double min_delta,
                                            std::size_t patience) {
  EarlyStopper stopper(min_delta, patience);
  for (std::size_t e = 0; e < valid_history.size(); ++e)
    if (stopper.update(valid_history[e])) return e + 1;
  return std::nullopt;
}

bool early_stop_check(std::span<const double> valid_history, double min_delta, std::size_t patience) {
  return early_stop_epoch(valid_history, min_delta, patience).has_value();
}

std::string_view to_string(NodeSet set) {
  switch (set) {
    case NodeSet::train: return "train";
    case NodeSet::valid: return "valid";
    case NodeSet::test: return "test";
    case NodeSet::all: return "all";
  }
  return "?";
}

NodeSet parse_node_set(std::string_view text) {
  if (text == "train") return NodeSet::train;
  if (text == "valid") return NodeSet::valid;
  if (text == "test") return NodeSet::test;
  if (text == "all") return NodeSet::all;
  throw ConfigError("unknown node set '" + std::string(text) + "' (expected train, valid, test or all)");
}

std::optional<double> clause_compliance(const Graph& graph, std::size_t k, NodeSet set) {
  if (k >= graph.num_classes) {
    throw IndexError("class " + std::to_string(k) + " outside [0," + std::to_string(graph.num_classes) + ")");
  }
  auto member = [&](std::uint32_t v) {
    switch (set) {
      case NodeSet::train: return graph.split[v] == Split::train;
      case NodeSet::valid: return graph.split[v] == Split::valid;
      case NodeSet::test: return graph.split[v] == Split::test;
      case NodeSet::all: return true;
    }
    return false;
  };
  std::size_t matching = 0;
  std::size_t total = 0;
  for (const Edge& e : graph.edges) {
    if (static_cast<std::size_t>(graph.labels[e.src]) != k || !member(e.src) || !member(e.dst)) continue;
    ++total;
    matching += static_cast<std::size_t>(graph.labels[e.dst]) == k;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(matching) / static_cast<double>(total);
}

std::optional<std::size_t> template_class(const Clause& clause, const PredicateSchema& schema) {
  if (clause.literals.size() != 3) return std::nullopt;
  const Literal& a = clause.literals[0];
  const Literal& link = clause.literals[1];
  const Literal& b = clause.literals[2];
  const auto c = schema.unary_index(a.predicate);
  if (!c || !a.negated || a.variables != std::vector<std::string>{"x"}) return std::nullopt;
  if (!link.negated || link.predicate != schema.binary || link.variables != std::vector<std::string>{"x", "y"}) {
    return std::nullopt;
  }
  if (b.negated || b.predicate != a.predicate || b.variables != std::vector<std::string>{"y"}) return std::nullopt;
  return c;
}

std::vector<Clause> experiment_clauses(const ExperimentConfig& config, const PredicateSchema& schema) {
  std::vector<Clause> clauses =
      config.uses_template() ? instantiate_class_template(schema) : load_clause_file(config.clauses);
  const ValidationReport report = validate(clauses, schema);
  if (!report.ok()) {
    throw ConfigError((config.uses_template() ? std::string("template") : config.clauses) + ": " + report.describe());
  }
  return clauses;
}

// --- Network -----------------------------------------------------------------

Network::Network(const Graph& graph, const ExperimentConfig& config, std::vector<Clause> clauses,
                 PredicateSchema schema, std::uint64_t seed)
    : graph_(&graph),
      config_(config),
      clauses_(std::move(clauses)),
      schema_(std::move(schema)),
      compiled_(compile_clauses(clauses_, schema_)),
      model_(config.model, graph.num_features(), graph.num_classes, Rng::derive(seed, 0).next_u64()) {
  if (schema_.unary.size() != graph.num_classes) {
    throw ConfigError("predicate schema has " + std::to_string(schema_.unary.size()) + " classes, graph has " +
                      std::to_string(graph.num_classes));
  }
  Rng weight_rng = Rng::derive(seed, 1);
  weights_ = ClauseWeights(clauses_, config.ke.layers, config.ke.weights, weight_rng);
  if (config.model.kind != ModelKind::mlp) {
    propagation_ = build_propagation(graph.num_nodes, graph.edges,
                                     config.model.kind == ModelKind::gcn && config.model.normalize_edges);
  }
  if (config.ke.layers > 0) {
    tables_.pairs = build_grounding_table(graph.num_nodes, graph.edges, graph.num_classes, config.ke.binary_preactivation);
    tables_.nodes = build_node_table(graph.num_nodes, graph.num_classes, config.ke.binary_preactivation);
  }
}

Network::Bound Network::bind(Tape& tape) const { return {model_.params().bind(tape), weights_.bind(tape)}; }

Var Network::forward(Tape& tape, const Bound& bound, Mode mode, Rng* rng, const Propagation* propagation,
                     const GroundingTables* tables) {
  const Propagation* prop = config_.model.kind == ModelKind::mlp ? nullptr : (propagation ? propagation : &propagation_);
  Var z = model_.forward(tape, bound.params, graph_->features, prop, mode, rng);
  if (config_.ke.layers == 0) return z;
  return stack_forward(z, tables ? *tables : tables_, compiled_, bound.weights, config_.ke.mode);
}

Matrix Network::predict() {
  Tape tape;
  const Bound bound = bind(tape);
  return forward(tape, bound, Mode::eval, nullptr).value();
}

namespace {

std::string weight_name(std::size_t layer, std::size_t clause) {
  return "ke.layer" + std::to_string(layer) + ".clause" + std::to_string(clause);
}

}  // namespace

std::vector<std::pair<std::string, Matrix>> Network::state() const {
  std::vector<std::pair<std::string, Matrix>> out;
  for (std::size_t i = 0; i < model_.params().size(); ++i) out.emplace_back(model_.params().name(i), model_.params().value(i));
  for (std::size_t i = 0; i < model_.buffers().size(); ++i) {
    out.emplace_back(model_.buffers().name(i), model_.buffers().value(i));
  }
  for (std::size_t l = 0; l < weights_.layers(); ++l)
    for (std::size_t c = 0; c < weights_.clauses(); ++c) out.emplace_back(weight_name(l, c), Matrix(1, 1, weights_.value(l, c)));
  return out;
}

void Network::load_state(const std::vector<std::pair<std::string, Matrix>>& state) {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, value] : state) by_name[name] = &value;
  auto take = [&](const std::string& name, const Matrix& like) -> const Matrix& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ContractError("state has no entry '" + name + "'");
    if (!it->second->same_shape(like)) {
      throw ContractError("state entry '" + name + "' is " + shape_string(*it->second) + ", expected " +
                          shape_string(like));
    }
    return *it->second;
  };
  for (std::size_t i = 0; i < model_.params().size(); ++i) {
    model_.params().value(i) = take(model_.params().name(i), model_.params().value(i));
  }
  for (std::size_t i = 0; i < model_.buffers().size(); ++i) {
    model_.buffers().value(i) = take(model_.buffers().name(i), model_.buffers().value(i));
  }
  for (std::size_t l = 0; l < weights_.layers(); ++l)
    for (std::size_t c = 0; c < weights_.clauses(); ++c) weights_.set(l, c, take(weight_name(l, c), Matrix(1, 1))(0, 0));
}

// --- training ------------------------------------------------------------------

namespace {

struct Step {
  std::vector<Matrix*> params;
  std::vector<const Matrix*> grads;
};

Step collect(Network& net, const Network::Bound& bound, const std::map<NodeId, Matrix>& grads) {
  Step step;
  auto grad_of = [&](const Var& v) -> const Matrix* {
    const auto it = grads.find(v.id());
    return it == grads.end() ? nullptr : &it->second;
  };
  for (std::size_t i = 0; i < net.model().params().size(); ++i) {
    step.params.push_back(&net.model().params().value(i));
    step.grads.push_back(grad_of(bound.params[i]));
  }
  auto values = net.weights().learnable_values();
  const auto slots = net.weights().learnable_slots();
  for (std::size_t k = 0; k < slots.size(); ++k) {
    step.params.push_back(values[k]);
    step.grads.push_back(grad_of(bound.weights[slots[k].first][slots[k].second]));
  }
  return step;
}

}  // namespace

RunResult train(const Graph& graph, const ExperimentConfig& config, const std::vector<Clause>& clauses,
                const PredicateSchema& schema, std::uint64_t seed, std::size_t run_index) {
  config.check();
  const std::vector<std::size_t> train_rows = graph.nodes_in(Split::train);
  const std::vector<std::size_t> valid_rows = graph.nodes_in(Split::valid);
  const std::vector<std::size_t> test_rows = graph.nodes_in(Split::test);
  if (train_rows.empty() || valid_rows.empty() || test_rows.empty()) {
    throw DataError("training needs non-empty train, valid and test node sets");
  }

  Network net(graph, config, clauses, schema, seed);
  Rng dropout_rng = Rng::derive(seed, 2);
  Rng batch_rng = Rng::derive(seed, 3);
  Rng edge_rng = Rng::derive(seed, 4);
  AdamState adam(config.train.adam);
  EarlyStopper stopper(config.train.early_stopping.min_delta, config.train.early_stopping.patience);
  const bool graph_model = config.model.kind != ModelKind::mlp;
  const bool drop = config.train.edges_drop_rate > 0.0 && !graph.edges.empty() && (graph_model || config.ke.layers > 0);

  RunResult result;
  result.run = run_index;
  result.seed = seed;
  result.best_valid_loss = std::numeric_limits<double>::infinity();

  const auto context = [&](std::size_t epoch) {
    return "run " + std::to_string(run_index) + " (seed " + std::to_string(seed) + "), epoch " + std::to_string(epoch);
  };

  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    try {
      std::optional<Propagation> dropped_prop;
      std::optional<GroundingTables> dropped_tables;
      if (drop) {
        const EdgeSubset subset = drop_edges(graph, config.train.edges_drop_rate, edge_rng.next_u64());
        if (graph_model) {
          dropped_prop = build_propagation(graph.num_nodes, select_edges(graph.edges, subset),
                                           config.model.kind == ModelKind::gcn && config.model.normalize_edges);
        }
        if (config.ke.layers > 0) {
          dropped_tables = GroundingTables{net.full_tables().pairs.select_rows(subset.kept), net.full_tables().nodes};
        }
      }

      std::vector<std::vector<std::size_t>> batches;
      if (!config.train.batch_size || *config.train.batch_size >= train_rows.size()) {
        batches.push_back(train_rows);
      } else {
        std::vector<std::size_t> order = train_rows;
        batch_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += *config.train.batch_size) {
          const std::size_t end = std::min(order.size(), start + *config.train.batch_size);
          batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
        }
      }

      double loss_sum = 0.0;
      double correct = 0.0;
      for (const auto& batch : batches) {
        Tape tape;
        const Network::Bound bound = net.bind(tape);
        Var z = net.forward(tape, bound, Mode::train, &dropout_rng, dropped_prop ? &*dropped_prop : nullptr,
                            dropped_tables ? &*dropped_tables : nullptr);
        Var l = loss(z, graph.labels, batch, config.train.loss);
        const auto grads = tape.backward(l);
        Step step = collect(net, bound, grads);
        adam_step(step.params, step.grads, adam, config.train.learning_rate);
        net.weights().clip();
        for (const Matrix* p : step.params) {
          if (!all_finite(*p)) throw DivergenceError("parameters became non-finite after the optimiser step");
        }
        const double n = static_cast<double>(batch.size());
        loss_sum += l.value()(0, 0) * n;
        correct += accuracy(z.value(), graph.labels, batch) * n;
      }
      record.train_loss = loss_sum / static_cast<double>(train_rows.size());
      record.train_accuracy = correct / static_cast<double>(train_rows.size());

      Tape tape;
      const Network::Bound bound = net.bind(tape);
      Var z = net.forward(tape, bound, Mode::eval, nullptr);
      record.valid_loss = loss(z, graph.labels, valid_rows, config.train.loss).value()(0, 0);
      record.valid_accuracy = accuracy(z.value(), graph.labels, valid_rows);
    } catch (const DivergenceError& e) {
      throw DivergenceError(context(epoch) + ": " + e.what());
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.epochs.push_back(record);

    if (record.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = record.valid_loss;
      result.best_epoch = epoch;
      result.state = net.state();
    }
    if (config.train.early_stopping.enabled && stopper.update(record.valid_loss)) {
      result.stopped_epoch = epoch;
      break;
    }
  }

  result.last_epoch_weights.assign(net.weights().layers(), {});
  for (std::size_t l = 0; l < net.weights().layers(); ++l)
    for (std::size_t c = 0; c < net.weights().clauses(); ++c) result.last_epoch_weights[l].push_back(net.weights().value(l, c));

  if (result.state.empty()) result.state = net.state();
  net.load_state(result.state);
  const Matrix z = net.predict();
  result.valid_accuracy = accuracy(z, graph.labels, valid_rows);
  result.test_accuracy = accuracy(z, graph.labels, test_rows);
  return result;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

ExperimentResult run_experiment(const Graph& graph, const ExperimentConfig& config, const std::vector<Clause>& clauses,
                                const PredicateSchema& schema, std::size_t parallel) {
  config.check();
  const std::size_t runs = config.train.runs;
  ExperimentResult out;
  out.runs.resize(runs);
  std::vector<std::exception_ptr> errors(runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < runs; r = next++) {
      try {
        out.runs[r] = train(graph, config, clauses, schema, config.train.seed + r, r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(parallel, 1, runs);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<double> acc;
  for (const auto& r : out.runs) acc.push_back(r.test_accuracy);
  out.mean_test_accuracy = mean(acc);
  out.std_test_accuracy = sample_std(acc);
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double ma = mean(ra);
  const double mb = mean(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::vector<WeightComplianceRow> weight_compliance_report(const std::vector<RunResult>& runs, const Graph& graph,
                                                          const std::vector<Clause>& clauses,
                                                          const PredicateSchema& schema) {
  std::vector<WeightComplianceRow> rows;
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    WeightComplianceRow row;
    row.clause = render_clause(clauses[c]);
    std::vector<double> values;
    for (const auto& run : runs)
      for (const auto& layer : run.last_epoch_weights)
        if (c < layer.size()) values.push_back(layer[c]);
    row.weight = mean(values);
    if (const auto k = template_class(clauses[c], schema)) row.compliance = clause_compliance(graph, *k, NodeSet::train);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string weight_compliance_csv(const std::vector<WeightComplianceRow>& rows) {
  std::string out = "clause,weight,compliance\n";
  for (const auto& row : rows) {
    std::string quoted = "\"";
    for (char ch : row.clause) {
      if (ch == '"') quoted += '"';
      quoted += ch;
    }
    quoted += '"';
    out += quoted + ',' + fmt(row.weight) + ',' + (row.compliance ? fmt(*row.compliance) : std::string()) + '\n';
  }
  return out;
}

std::vector<std::optional<double>> weight_compliance_correlations(const std::vector<RunResult>& runs,
                                                                  const Graph& graph,
                                                                  const std::vector<Clause>& clauses,
                                                                  const PredicateSchema& schema) {
  std::vector<std::size_t> slots;
  std::vector<double> compliance;
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    const auto k = template_class(clauses[c], schema);
    if (!k) continue;
    const auto value = clause_compliance(graph, *k, NodeSet::train);
    if (!value) continue;
    slots.push_back(c);
    compliance.push_back(*value);
  }
  std::vector<std::optional<double>> out;
  for (const auto& run : runs) {
    if (run.last_epoch_weights.empty()) {
      out.push_back(std::nullopt);
      continue;
    }
    std::vector<double> weights;
    for (std::size_t c : slots) {
      double total = 0.0;
      for (const auto& layer : run.last_epoch_weights) total += layer[c];
      weights.push_back(total / static_cast<double>(run.last_epoch_weights.size()));
    }
    out.push_back(spearman(weights, compliance));
  }
  return out;
}

// --- checkpoints ---------------------------------------------------------------

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  std::size_t config_lines = 0;
  for (char ch : checkpoint.config) config_lines += ch == '\n';
  if (!checkpoint.config.empty() && checkpoint.config.back() != '\n') ++config_lines;
  out << "kegnn-checkpoint 1\n";
  out << "config " << config_lines << '\n' << checkpoint.config;
  if (!checkpoint.config.empty() && checkpoint.config.back() != '\n') out << '\n';
  out << "clauses " << checkpoint.clauses.size() << '\n';
  for (const Clause& c : checkpoint.clauses) out << render_clause(c) << '\n';
  out << "matrices " << checkpoint.matrices.size() << '\n';
  for (const auto& [name, m] : checkpoint.matrices) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << fmt(m(r, c));
      out << '\n';
    }
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::size_t line_no = 0;
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw DataError(path.string() + ": unexpected end of file after line " + std::to_string(line_no));
    ++line_no;
    return line;
  };
  auto fail = [&](const std::string& why) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  auto header = [&](const std::string& keyword) -> std::size_t {
    std::istringstream fields(next());
    std::string word;
    std::size_t count = 0;
    if (!(fields >> word >> count) || word != keyword) fail("expected '" + keyword + " <count>'");
    return count;
  };
  if (next() != "kegnn-checkpoint 1") fail("not a checkpoint file");
  Checkpoint cp;
  const std::size_t config_lines = header("config");
  for (std::size_t k = 0; k < config_lines; ++k) cp.config += next() + '\n';
  const std::size_t clause_count = header("clauses");
  for (std::size_t k = 0; k < clause_count; ++k) {
    try {
      auto parsed = parse_clauses(next());
      if (parsed.size() != 1) fail("expected one clause");
      cp.clauses.push_back(std::move(parsed[0]));
    } catch (const ParseError& e) {
      fail(e.what());
    }
  }
  const std::size_t matrix_count = header("matrices");
  for (std::size_t k = 0; k < matrix_count; ++k) {
    std::istringstream fields(next());
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(fields >> name >> rows >> cols)) fail("expected '<name> <rows> <cols>'");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::string& row = next();
      const char* p = row.data();
      const char* end = row.data() + row.size();
      for (std::size_t c = 0; c < cols; ++c) {
        while (p < end && *p == ' ') ++p;
        const auto [ptr, ec] = std::from_chars(p, end, m(r, c));
        if (ec != std::errc()) fail("bad value in matrix '" + name + "'");
        p = ptr;
      }
      while (p < end && *p == ' ') ++p;
      if (p != end) fail("too many values in matrix '" + name + "'");
    }
    cp.matrices.emplace_back(std::move(name), std::move(m));
  }
  return cp;
}

// --- end-to-end gradient check -------------------------------------------------

double end_to_end_grad_check(const ExperimentConfig& config, std::uint64_t seed, double eps) {
  ExperimentConfig small = config;
  small.model.hidden_channels = std::min<std::size_t>(small.model.hidden_channels, 4);
  small.model.attention_heads = std::min<std::size_t>(small.model.attention_heads, 2);
  small.model.dropout = 0.0;
  small.check();

  SyntheticSpec spec;
  spec.num_nodes = 6;
  spec.num_classes = 3;
  spec.num_features = 4;
  spec.homophily = 0.7;
  spec.average_degree = 3.0;
  spec.train_fraction = 0.5;
  spec.valid_fraction = 0.25;
  spec.seed = seed;
  const Graph graph = synthetic_homophilous(spec);
  const PredicateSchema schema = PredicateSchema::for_classes(spec.num_classes);
  Network net(graph, small, instantiate_class_template(schema), schema, seed);

  // Weights away from the clipping bounds so the check sees interior points.
  Rng rng = Rng::derive(seed, 9);
  for (Matrix* w : net.weights().learnable_values()) (*w)(0, 0) = rng.uniform(0.2, 1.5);

  std::vector<Matrix> inputs;
  for (std::size_t i = 0; i < net.model().params().size(); ++i) inputs.push_back(net.model().params().value(i));
  const auto slots = net.weights().learnable_slots();
  for (const auto& [l, c] : slots) inputs.emplace_back(1, 1, net.weights().value(l, c));
  const std::vector<std::size_t> rows = graph.nodes_in(Split::train);
  const std::size_t num_params = net.model().params().size();

  return grad_check(
      [&](Tape& tape, std::span<const Var> in) {
        Network::Bound bound;
        bound.params.assign(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(num_params));
        bound.weights = net.weights().bind(tape);
        for (std::size_t k = 0; k < slots.size(); ++k) bound.weights[slots[k].first][slots[k].second] = in[num_params + k];
        Var z = net.forward(tape, bound, Mode::train, nullptr);
        return loss(z, graph.labels, rows, small.train.loss);
      },
      inputs, eps);
}

}  // namespace kegnn
