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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "kegnn/config.hpp"
#include "kegnn/errors.hpp"
#include "kegnn/graph.hpp"
#include "kegnn/logic.hpp"
#include "kegnn/training.hpp"

namespace kegnn::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr double kGradCheckTolerance = 1e-3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::string> out;
  std::vector<std::string> assignments;  // key=value
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Base seed; run r uses seed + r");
  cmd->add_option("--runs", o.runs, "Number of independent runs");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--set", o.assignments, "Override a config key (key=value); repeatable");
}

ExperimentConfig resolve_config(const std::optional<std::string>& path, const Overrides& o) {
  ExperimentConfig cfg = path ? ExperimentConfig::load(*path) : ExperimentConfig();
  const fs::path cwd = fs::current_path();
  for (const std::string& a : o.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + a + "'");
    cfg.set(a.substr(0, eq), a.substr(eq + 1), cwd);
  }
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.runs) cfg.train.runs = *o.runs;
  if (o.out) cfg.out = fs::absolute(*o.out).lexically_normal();
  cfg.check();
  return cfg;
}

Graph load_graph(const fs::path& dataset) {
  if (dataset.empty()) throw ConfigError("no dataset given (set 'dataset' in the config or pass --dataset)");
  Graph g = load_dataset(dataset);
  g.validate();
  return g;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// --- train -------------------------------------------------------------------

int cmd_train(const std::string& config_path, const Overrides& o, std::size_t parallel, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(config_path, o);
  const Graph graph = load_graph(cfg.dataset);
  const PredicateSchema schema = PredicateSchema::for_classes(graph.num_classes);
  const std::vector<Clause> clauses = experiment_clauses(cfg, schema);
  const ExperimentResult result = run_experiment(graph, cfg, clauses, schema, parallel);

  fs::create_directories(cfg.out);
  write_file(cfg.out / "config.effective", cfg.render());

  std::string metrics;
  std::string timings;
  Json summary;
  summary["dataset"] = cfg.dataset.string();
  summary["model"] = std::string(to_string(cfg.model.kind));
  summary["ke_layers"] = cfg.ke.layers;
  summary["runs"] = result.runs.size();
  Json per_run = Json::array();
  const bool analyse = cfg.ke.layers > 0;
  const auto correlations =
      analyse ? weight_compliance_correlations(result.runs, graph, clauses, schema) : std::vector<std::optional<double>>();
  for (const RunResult& r : result.runs) {
    for (const EpochRecord& e : r.epochs) {
      Json line;
      line["type"] = "epoch";
      line["run"] = r.run;
      line["epoch"] = e.epoch;
      line["train_loss"] = e.train_loss;
      line["train_accuracy"] = e.train_accuracy;
      line["valid_loss"] = e.valid_loss;
      line["valid_accuracy"] = e.valid_accuracy;
      metrics += line.dump() + '\n';
      timings += Json{{"run", r.run}, {"epoch", e.epoch}, {"seconds", e.seconds}}.dump() + '\n';
    }
    Json line;
    line["type"] = "run";
    line["run"] = r.run;
    line["seed"] = r.seed;
    line["epochs"] = r.epochs.size();
    line["best_epoch"] = r.best_epoch;
    line["stopped_epoch"] = r.stopped_epoch ? Json(*r.stopped_epoch) : Json(nullptr);
    line["best_valid_loss"] = r.best_valid_loss;
    line["valid_accuracy"] = r.valid_accuracy;
    line["test_accuracy"] = r.test_accuracy;
    line["clause_weights"] = r.last_epoch_weights;
    if (analyse) line["weight_compliance_spearman"] = optional_json(correlations[r.run]);
    metrics += line.dump() + '\n';
    per_run.push_back({{"run", r.run},
                       {"seed", r.seed},
                       {"best_epoch", r.best_epoch},
                       {"valid_accuracy", r.valid_accuracy},
                       {"test_accuracy", r.test_accuracy}});
  }
  summary["mean_test_accuracy"] = result.mean_test_accuracy;
  summary["std_test_accuracy"] = result.std_test_accuracy;
  summary["per_run"] = per_run;
  if (analyse) {
    Json rho = Json::array();
    std::size_t positive = 0;
    for (const auto& c : correlations) {
      rho.push_back(optional_json(c));
      positive += c && *c > 0.0;
    }
    summary["weight_compliance_spearman"] = rho;
    summary["runs_with_positive_spearman"] = positive;
  }
  Json final_line{{"type", "summary"}};
  for (const auto& [key, value] : summary.items())
    if (key != "per_run") final_line[key] = value;
  metrics += final_line.dump() + '\n';

  write_file(cfg.out / "metrics.jsonl", metrics);
  write_file(cfg.out / "timings.jsonl", timings);
  write_file(cfg.out / "summary.json", summary.dump(2) + '\n');
  if (analyse) {
    write_file(cfg.out / "weights.csv",
               weight_compliance_csv(weight_compliance_report(result.runs, graph, clauses, schema)));
  }
  save_checkpoint({cfg.render(), clauses, result.runs.front().state}, cfg.out / "checkpoint.txt");

  char line[160];
  std::snprintf(line, sizeof line, "%s %s ke_layers=%zu: test accuracy %.4f +- %.4f over %zu run(s)\n",
                cfg.dataset.filename().string().c_str(), std::string(to_string(cfg.model.kind)).c_str(),
                cfg.ke.layers, result.mean_test_accuracy, result.std_test_accuracy, result.runs.size());
  out << line << "artifacts in " << cfg.out.string() << '\n';
  return ok;
}

// --- evaluate ------------------------------------------------------------------

int cmd_evaluate(const std::string& checkpoint_path, const std::optional<std::string>& dataset, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = ExperimentConfig::parse(cp.config, "");
  if (dataset) cfg.dataset = fs::absolute(*dataset).lexically_normal();
  const Graph graph = load_graph(cfg.dataset);
  const PredicateSchema schema = PredicateSchema::for_classes(graph.num_classes);
  Network net(graph, cfg, cp.clauses, schema, cfg.train.seed);
  try {
    net.load_state(cp.matrices);
  } catch (const ContractError& e) {
    throw DataError(checkpoint_path + " does not match the dataset: " + e.what());
  }
  const Matrix z = net.predict();
  Json record;
  record["checkpoint"] = checkpoint_path;
  record["dataset"] = cfg.dataset.string();
  record["valid_accuracy"] = accuracy(z, graph.labels, graph.nodes_in(Split::valid));
  record["test_accuracy"] = accuracy(z, graph.labels, graph.nodes_in(Split::test));
  out << record.dump() << '\n';
  return ok;
}

// --- compliance ------------------------------------------------------------------

int cmd_compliance(const std::string& dataset, const std::string& clause_path, const std::string& node_set,
                   std::ostream& out) {
  const NodeSet set = parse_node_set(node_set);
  const Graph graph = load_graph(fs::absolute(dataset));
  const PredicateSchema schema = PredicateSchema::for_classes(graph.num_classes);
  ExperimentConfig cfg;
  cfg.clauses = clause_path == "template" ? clause_path : fs::absolute(clause_path).string();
  const std::vector<Clause> clauses = experiment_clauses(cfg, schema);
  out << "clause,compliance\n";
  for (const Clause& c : clauses) {
    out << '"' << render_clause(c) << "\",";
    if (const auto k = template_class(c, schema)) {
      if (const auto value = clause_compliance(graph, *k, set)) {
        char buf[32];
        const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, *value);
        out << std::string_view(buf, static_cast<std::size_t>(end - buf));
      }
    }
    out << '\n';
  }
  return ok;
}

// --- gen-data --------------------------------------------------------------------

int cmd_gen_data(const SyntheticSpec& spec, const std::string& dir, std::ostream& out) {
  const Graph g = synthetic_homophilous(spec);
  fs::create_directories(dir);
  save_dataset(g, dir);
  out << "wrote " << g.num_nodes << " nodes, " << g.edges.size() << " directed edges, " << g.num_features()
      << " features, " << g.num_classes << " classes to " << dir << '\n';
  return ok;
}

// --- inspect ---------------------------------------------------------------------

int cmd_inspect(const std::string& checkpoint_path, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(checkpoint_path);
  out << "checkpoint " << checkpoint_path << "\n\nconfig:\n";
  std::size_t start = 0;
  while (start < cp.config.size()) {
    const std::size_t end = cp.config.find('\n', start);
    out << "  " << cp.config.substr(start, end - start) << '\n';
    if (end == std::string::npos) break;
    start = end + 1;
  }
  out << "\nclauses (" << cp.clauses.size() << "):\n";
  for (std::size_t c = 0; c < cp.clauses.size(); ++c) out << "  [" << c << "] " << render_clause(cp.clauses[c]) << '\n';

  out << "\nmatrices (" << cp.matrices.size() << "):\n";
  char buf[256];
  for (const auto& [name, m] : cp.matrices) {
    double sq = 0.0;
    for (double v : m.data()) sq += v * v;
    std::snprintf(buf, sizeof buf, "  %-32s %6zu x %-6zu  frobenius %.6g\n", name.c_str(), m.rows(), m.cols(),
                  std::sqrt(sq));
    out << buf;
  }

  // Clause weights are stored as ke.layer{l}.clause{c} scalars.
  std::vector<std::vector<std::optional<double>>> table;
  for (const auto& [name, m] : cp.matrices) {
    std::size_t l = 0, c = 0;
    if (std::sscanf(name.c_str(), "ke.layer%zu.clause%zu", &l, &c) != 2 || m.size() != 1) continue;
    if (table.size() <= l) table.resize(l + 1);
    if (table[l].size() <= c) table[l].resize(c + 1);
    table[l][c] = m(0, 0);
  }
  if (!table.empty()) {
    out << "\nclause weights:\n";
    for (std::size_t l = 0; l < table.size(); ++l)
      for (std::size_t c = 0; c < table[l].size(); ++c) {
        if (!table[l][c]) continue;
        std::snprintf(buf, sizeof buf, "  layer %zu  clause %-3zu %12.6g  ", l, c, *table[l][c]);
        out << buf << (c < cp.clauses.size() ? render_clause(cp.clauses[c]) : std::string("?")) << '\n';
      }
  }
  return ok;
}

// --- grad-check ------------------------------------------------------------------

int cmd_grad_check(const std::optional<std::string>& config_path, const Overrides& o, double eps, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(config_path, o);
  const double worst = end_to_end_grad_check(cfg, cfg.train.seed, eps);
  char buf[160];
  std::snprintf(buf, sizeof buf, "grad-check %s ke_layers=%zu: max relative error %.3e (tolerance %.0e) %s\n",
                std::string(to_string(cfg.model.kind)).c_str(), cfg.ke.layers, worst, kGradCheckTolerance,
                worst <= kGradCheckTolerance ? "PASS" : "FAIL");
  out << buf;
  return worst <= kGradCheckTolerance ? ok : numerical_error;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-enhanced graph neural networks for node classification"};
  app.name("kegnn");
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> optional_config;
  std::optional<std::string> dataset;
  std::string checkpoint;
  std::string clauses = "template";
  std::string node_set = "train";
  std::string dataset_dir;
  std::string gen_out;
  std::size_t parallel = 1;
  double eps = 1e-5;
  Overrides overrides;
  SyntheticSpec spec;

  CLI::App* train = app.add_subcommand("train", "Train and evaluate a configured experiment");
  train->add_option("--config", config_path, "Experiment config file")->required();
  train->add_option("--parallel-runs", parallel, "Runs executed concurrently")->check(CLI::PositiveNumber);
  add_override_flags(train, overrides);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Test accuracy of a saved checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
  evaluate->add_option("--dataset", dataset, "Dataset directory (defaults to the one in the checkpoint)");

  CLI::App* compliance = app.add_subcommand("compliance", "Clause compliance of a dataset as CSV");
  compliance->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  compliance->add_option("--clauses", clauses, "Clause file, or 'template'");
  compliance->add_option("--node-set", node_set, "train, valid, test or all");

  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic homophilous dataset");
  gen->add_option("--nodes", spec.num_nodes, "Number of nodes");
  gen->add_option("--classes", spec.num_classes, "Number of classes");
  gen->add_option("--features", spec.num_features, "Feature dimension");
  gen->add_option("--homophily", spec.homophily, "Probability that an edge joins two nodes of one class");
  gen->add_option("--degree", spec.average_degree, "Average undirected degree");
  gen->add_option("--noise", spec.feature_noise, "Feature noise standard deviation");
  gen->add_option("--train", spec.train_fraction, "Share of training nodes");
  gen->add_option("--valid", spec.valid_fraction, "Share of validation nodes");
  gen->add_option("--seed", spec.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  CLI::App* inspect = app.add_subcommand("inspect", "Print the parameter manifest of a checkpoint");
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();

  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference check of the full pipeline");
  grad->add_option("--config", optional_config, "Experiment config file (defaults apply when omitted)");
  grad->add_option("--eps", eps, "Central-difference step");
  add_override_flags(grad, overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "kegnn: " << e.what() << '\n';
    return config_error;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, parallel, out);
    if (*evaluate) return cmd_evaluate(checkpoint, dataset, out);
    if (*compliance) return cmd_compliance(dataset_dir, clauses, node_set, out);
    if (*gen) return cmd_gen_data(spec, gen_out, out);
    if (*inspect) return cmd_inspect(checkpoint, out);
    if (*grad) return cmd_grad_check(optional_config, overrides, eps, out);
  } catch (const DataError& e) {
    err << "kegnn: data error: " << e.what() << '\n';
    return data_error;
  } catch (const DivergenceError& e) {
    err << "kegnn: numerical divergence: " << e.what() << '\n';
    return numerical_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "kegnn: data error: " << e.what() << '\n';
    return data_error;
  } catch (const std::exception& e) {
    // Config, parse and grounding errors, plus anything unexpected.
    err << "kegnn: config error: " << e.what() << '\n';
    return config_error;
  }
  return config_error;
}

}  // namespace kegnn::cli
