// Acceptance suite. `core` checks everything that runs on synthetic data;
// `datasets` needs the Planetoid citation graphs converted with
// tools/planetoid_to_text.py and exits 77 (skipped) when they are absent.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cli.hpp"
#include "kegnn/errors.hpp"
#include "kegnn/fuzzy.hpp"
#include "kegnn/random.hpp"
#include "kegnn/training.hpp"

namespace fs = std::filesystem;
using namespace kegnn;

namespace {

// Pinned tolerances.
constexpr double kEndToEndGradTolerance = 1e-3;
constexpr double kPerOpGradTolerance = 1e-4;
constexpr double kPerOpEps = 1e-5;
constexpr double kOracleTolerance = 1e-12;
constexpr double kHomophilyTolerance = 0.05;
constexpr double kMlpTolerance = 0.03;
constexpr double kGnnTolerance = 0.02;
constexpr double kEnhancedGnnGap = 0.015;
constexpr double kCoraKeMlpGap = 0.05;
constexpr double kCiteseerGatFloor = 0.76;
constexpr std::size_t kSpearmanRunsRequired = 8;

enum class Status { pass, fail, blocked };

struct Outcome {
  Status status;
  std::string detail;
};

int failures = 0;
int blocked = 0;

void report(const char* id, const char* title, const Outcome& o) {
  const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "BLOCKED";
  std::printf("[%s] %s %s: %s\n", tag, id, title, o.detail.c_str());
  std::fflush(stdout);
  failures += o.status == Status::fail;
  blocked += o.status == Status::blocked;
}

template <typename F>
void run_criterion(const char* id, const char* title, F&& body) {
  try {
    report(id, title, body());
  } catch (const std::exception& e) {
    report(id, title, {Status::fail, std::string("threw: ") + e.what()});
  }
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0, double hi = 2.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

Var contract(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, tape.constant(random_matrix(rng, out.rows(), out.cols(), -1.0, 1.0))));
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// --- criterion 5 -------------------------------------------------------------

Outcome zero_weight_identity() {
  std::size_t identical = 0;
  const std::size_t seeds = 20;
  std::string first_mismatch;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    SyntheticSpec spec;
    spec.num_nodes = 60 + 7 * seed;
    spec.num_classes = 2 + seed % 4;
    spec.num_features = 5;
    spec.homophily = 0.7;
    spec.seed = 1000 + seed;
    const Graph g = synthetic_homophilous(spec);
    const auto schema = PredicateSchema::for_classes(g.num_classes);
    auto clauses = instantiate_class_template(schema);
    for (Clause& c : clauses) c.weight = WeightSpec::fixed(0.0);

    ExperimentConfig base;
    base.model.kind = static_cast<ModelKind>(seed % 3);
    base.model.hidden_channels = 8;
    base.model.attention_heads = 2;
    base.model.dropout = 0.3;
    base.train.epochs = 6;
    base.train.batch_size = 16;
    base.train.edges_drop_rate = 0.2;
    base.ke.layers = 0;
    ExperimentConfig enhanced = base;
    enhanced.ke.layers = 1 + seed % 3;

    Network a(g, base, clauses, schema, seed);
    Network b(g, enhanced, clauses, schema, seed);
    bool same = a.predict() == b.predict();

    const RunResult ra = train(g, base, clauses, schema, seed);
    const RunResult rb = train(g, enhanced, clauses, schema, seed);
    a.load_state(ra.state);
    b.load_state(rb.state);
    same = same && a.predict() == b.predict() && ra.test_accuracy == rb.test_accuracy &&
           ra.valid_accuracy == rb.valid_accuracy && ra.epochs.size() == rb.epochs.size();
    for (std::size_t e = 0; same && e < ra.epochs.size(); ++e) {
      same = ra.epochs[e].train_loss == rb.epochs[e].train_loss && ra.epochs[e].valid_loss == rb.epochs[e].valid_loss;
    }
    identical += same;
    if (!same && first_mismatch.empty()) first_mismatch = " (first mismatch at seed " + std::to_string(seed) + ")";
  }
  return {identical == seeds ? Status::pass : Status::fail,
          std::to_string(identical) + "/" + std::to_string(seeds) +
              " seeds bit-identical in preactivations, losses and accuracies" + first_mismatch};
}

// --- criterion 6 -------------------------------------------------------------

Outcome monotonicity() {
  Rng rng(6);
  const auto schema = PredicateSchema::for_classes(4);
  const std::size_t instances = 1000;
  std::size_t increased = 0;
  double smallest_gain = std::numeric_limits<double>::infinity();
  for (std::size_t trial = 0; trial < instances; ++trial) {
    Clause clause;
    clause.weight = WeightSpec::learned();
    std::vector<std::size_t> classes{0, 1, 2, 3};
    rng.shuffle(classes);
    const std::size_t unary = 1 + rng.below(3);
    for (std::size_t k = 0; k < unary; ++k) {
      clause.literals.push_back({rng.bernoulli(0.5), schema.unary[classes[k]], {rng.bernoulli(0.5) ? "x" : "y"}, {}});
    }
    if (rng.bernoulli(0.5)) clause.literals.push_back({true, "Link", {"x", "y"}, {}});
    const CompiledClause compiled = compile_clause(clause, schema);
    const GroundingTable table = compiled.node_grounded
                                     ? build_node_table(2, 4, 0.0)
                                     : build_grounding_table(2, std::vector<Edge>{{0, 1}}, 4, rng.uniform(-3, 3));
    Tape tape;
    Var m = table_preactivations(tape.constant(random_matrix(rng, 2, 4, -4, 4)), table);
    const double w = rng.uniform(0.01, 5.0);
    const Matrix deltas = clause_boost(m, compiled, tape.constant(Matrix(1, 1, w))).value();
    bool all_rows = true;
    for (std::size_t r = 0; r < deltas.rows(); ++r) {
      std::vector<double> before, after;
      for (std::size_t j = 0; j < compiled.columns.size(); ++j) {
        const double z = m.value()(r, compiled.columns[j]);
        before.push_back(literal_truth(clause.literals[j], logistic(z)));
        after.push_back(literal_truth(clause.literals[j], logistic(z + deltas(r, j))));
      }
      const double gain = godel_tconorm(after) - godel_tconorm(before);
      all_rows = all_rows && gain > 0.0;
      smallest_gain = std::min(smallest_gain, gain);
    }
    increased += all_rows;
  }
  return {increased == instances ? Status::pass : Status::fail,
          std::to_string(increased) + "/" + std::to_string(instances) +
              " instances strictly increased; smallest gain " + fmt("%.3e", smallest_gain)};
}

// --- criterion 7 -------------------------------------------------------------

double per_op_suite() {
  Rng rng(77);
  double worst = 0.0;
  auto track = [&](double e) { worst = std::max(worst, e); };
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t rows = 2 + rng.below(5);
    const std::size_t cols = 1 + rng.below(6);
    const std::uint64_t seed = rng.next_u64();
    const Matrix x = random_matrix(rng, rows, cols);
    const Matrix y = random_matrix(rng, rows, cols);
    const Matrix row_vec = random_matrix(rng, 1, cols);
    const Matrix col_vec = random_matrix(rng, rows, 1);
    const Matrix positive = random_matrix(rng, rows, cols, 0.1, 2.0);
    const Matrix right = random_matrix(rng, cols, 3);
    auto one = [&](auto op, const Matrix& in) {
      track(grad_check([&](Tape& t, Var v) { return contract(t, op(v), seed); }, in, kPerOpEps));
    };
    auto two = [&](auto op, const Matrix& p, const Matrix& q) {
      track(grad_check([&](Tape& t, std::span<const Var> v) { return contract(t, op(v[0], v[1]), seed); }, {p, q},
                       kPerOpEps));
    };
    two([](Var p, Var q) { return matmul(p, q); }, x, right);
    one([&](Var v) { return matmul(x, v); }, right);
    two([](Var p, Var q) { return add(p, q); }, x, row_vec);
    two([](Var p, Var q) { return sub(p, q); }, x, y);
    two([](Var p, Var q) { return mul(p, q); }, x, col_vec);
    one([](Var v) { return scale(v, -1.3); }, x);
    one([](Var v) { return add_scalar(v, 0.7); }, x);
    one([](Var v) { return exp(v); }, x);
    one([](Var v) { return log(v); }, positive);
    one([](Var v) { return sigmoid(v); }, x);
    one([](Var v) { return relu(v); }, x);
    one([](Var v) { return leaky_relu(v, 0.2); }, x);
    one([](Var v) { return rowwise_softmax(v); }, x);
    one([](Var v) { return log_softmax(v); }, x);
    one([](Var v) { return select_cols(v, {0, 0}); }, x);
    one([&](Var v) { return place_cols(v, std::vector<std::size_t>(cols, 1), 3); }, x);
    two([](Var p, Var q) { Var parts[] = {p, q}; return concat_cols(parts); }, x, y);
    std::vector<std::uint32_t> index(rows);
    for (auto& i : index) i = static_cast<std::uint32_t>(rng.below(3));
    one([&](Var v) { return scatter_add_rows(v, index, 3); }, x);
    one([&](Var v) { return gather_rows(v, index); }, random_matrix(rng, 3, cols));
    auto cells = std::make_shared<std::vector<std::int64_t>>();
    for (std::size_t k = 0; k < 5; ++k) cells->push_back(k == 1 ? -1 : static_cast<std::int64_t>(rng.below(rows * cols)));
    one([&](Var v) { return gather_cells(v, cells, 5, 1, 2.0); }, x);
    one([&](Var v) { return scatter_cells(v, cells, rows, cols); }, random_matrix(rng, 5, 1));
    const Matrix gamma = random_matrix(rng, 1, cols, 0.5, 1.5);
    track(grad_check(
        [&](Tape& t, std::span<const Var> v) { return contract(t, batch_norm(v[0], v[1], v[2], 1e-5), seed); },
        {x, gamma, row_vec}, kPerOpEps));
    auto edges = std::make_shared<EdgeIndex>();
    edges->num_nodes = rows;
    for (std::uint32_t i = 0; i < rows; ++i) {
      edges->src.push_back(i);
      edges->dst.push_back(i);
      edges->src.push_back(static_cast<std::uint32_t>(rng.below(rows)));
      edges->dst.push_back(i);
    }
    const Matrix coeff = random_matrix(rng, edges->src.size(), 1);
    two([&](Var c, Var h) { return aggregate(c, h, edges); }, coeff, x);
    one([&](Var s) { return segment_softmax(s, edges); }, coeff);
    std::vector<int> labels(rows);
    for (auto& l : labels) l = static_cast<int>(rng.below(cols));
    std::vector<std::size_t> all(rows);
    std::iota(all.begin(), all.end(), 0);
    track(grad_check([&](Tape&, Var v) { return nll_loss(log_softmax(v), labels, all); }, x, kPerOpEps));
    track(grad_check([&](Tape&, Var v) { return bce_with_logits(v, labels, all); }, x, kPerOpEps));
  }
  return worst;
}

Outcome gradient_suite() {
  double end_to_end = 0.0;
  int cli_failures = 0;
  for (ModelKind kind : {ModelKind::mlp, ModelKind::gcn, ModelKind::gat}) {
    for (std::size_t layers : {0, 1, 2}) {
      ExperimentConfig cfg;
      cfg.model.kind = kind;
      cfg.model.attention_heads = 2;
      cfg.ke.layers = layers;
      cfg.ke.weights.random_initial = true;
      cfg.ke.binary_preactivation = 1.0;
      end_to_end = std::max(end_to_end, end_to_end_grad_check(cfg, 7));

      std::vector<std::string> args{"kegnn", "grad-check", "--set", "model.kind=" + std::string(to_string(kind)),
                                    "--set", "ke.layers=" + std::to_string(layers)};
      std::vector<char*> argv;
      for (auto& s : args) argv.push_back(s.data());
      std::ostringstream out, err;
      cli_failures += cli::run(static_cast<int>(argv.size()), argv.data(), out, err) != cli::ok;
    }
  }
  const double per_op = per_op_suite();
  const bool ok = end_to_end <= kEndToEndGradTolerance && per_op <= kPerOpGradTolerance && cli_failures == 0;
  return {ok ? Status::pass : Status::fail,
          fmt("end-to-end max rel err %.2e (<= %.0e) over mlp/gcn/gat x 0-2 layers on 6 nodes; per-op max %.2e "
              "(<= %.0e); ",
              end_to_end, kEndToEndGradTolerance, per_op, kPerOpGradTolerance) +
              std::to_string(cli_failures) + " grad-check command failures"};
}

// --- criterion 8 -------------------------------------------------------------

std::optional<double> brute_force_compliance(const Graph& g, std::size_t k) {
  double same = 0.0, total = 0.0;
  for (std::uint32_t i = 0; i < g.num_nodes; ++i) {
    if (g.split[i] != Split::train || static_cast<std::size_t>(g.labels[i]) != k) continue;
    for (std::uint32_t j = 0; j < g.num_nodes; ++j) {
      if (g.split[j] != Split::train) continue;
      for (const Edge& e : g.edges) {
        if (e.src != i || e.dst != j) continue;
        total += 1.0;
        same += static_cast<std::size_t>(g.labels[j]) == k;
      }
    }
  }
  if (total == 0.0) return std::nullopt;
  return same / total;
}

Outcome compliance_oracle() {
  Rng rng(8);
  std::size_t exact = 0, compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    g.num_nodes = 2 + rng.below(49);
    g.num_classes = 2 + rng.below(4);
    g.features = Matrix(g.num_nodes, 1, 1.0);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      g.labels.push_back(static_cast<int>(rng.below(g.num_classes)));
      g.split.push_back(rng.bernoulli(0.7) ? Split::train : Split::test);
    }
    const std::size_t edges = rng.below(4 * g.num_nodes);
    for (std::size_t e = 0; e < edges; ++e) {
      g.edges.push_back({static_cast<std::uint32_t>(rng.below(g.num_nodes)),
                         static_cast<std::uint32_t>(rng.below(g.num_nodes))});
    }
    for (std::size_t k = 0; k < g.num_classes; ++k) {
      ++compared;
      exact += clause_compliance(g, k, NodeSet::train) == brute_force_compliance(g, k);
    }
  }
  double worst = 0.0;
  for (double h : {0.1, 0.4, 0.7, 0.95}) {
    SyntheticSpec spec;
    spec.num_nodes = 2000;
    spec.num_classes = 5;
    spec.average_degree = 8.0;
    spec.homophily = h;
    spec.seed = 88;
    const Graph g = synthetic_homophilous(spec);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      const auto c = clause_compliance(g, k, NodeSet::all);
      worst = std::max(worst, c ? std::abs(*c - h) : 1.0);
    }
  }
  const bool ok = exact == compared && worst <= kHomophilyTolerance;
  return {ok ? Status::pass : Status::fail,
          std::to_string(exact) + "/" + std::to_string(compared) +
              " (graph, class) pairs exact on 100 graphs with n <= 50; " +
              fmt("homophily deviation %.4f (<= %.2f) at n = 2000", worst, kHomophilyTolerance)};
}

// --- criterion 9 -------------------------------------------------------------

Outcome boost_oracle() {
  const PredicateSchema schema{{"AI", "ML"}, "Cite"};
  const auto clause = compile_clause(parse_clauses("_:nAI(x),nCite(x,y),AI(y)").at(0), schema);
  const auto table = build_grounding_table(2, std::vector<Edge>{{0, 1}}, 2, 0.0);
  Tape tape;
  Var m = table_preactivations(tape.constant(Matrix(2, 2)), table);
  const Matrix deltas = clause_boost(m, clause, tape.constant(Matrix(1, 1, 1.0))).value();
  const double expected[] = {-1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0};
  double worst = 0.0;
  for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, std::abs(deltas(0, j) - expected[j]));
  const Matrix grouped =
      group_by_scatter(place_cols(tape.constant(deltas), clause.columns, table.columns()), table).value();
  worst = std::max({worst, std::abs(grouped(0, 0) + 1.0 / 3.0), std::abs(grouped(1, 0) - 1.0 / 3.0),
                    std::abs(grouped(0, 1)), std::abs(grouped(1, 1))});
  return {worst <= kOracleTolerance ? Status::pass : Status::fail,
          fmt("deltas (%.15f, %.15f, %.15f), max deviation %.1e", deltas(0, 0), deltas(0, 1), deltas(0, 2), worst) +
              fmt(" (<= %.0e)", kOracleTolerance)};
}

// --- criterion 11 ------------------------------------------------------------

Graph cora_sized_graph() {
  SyntheticSpec spec;
  spec.num_nodes = 2708;
  spec.num_classes = 7;
  spec.num_features = 1433;
  spec.homophily = 0.8;
  spec.average_degree = 10556.0 / 2708.0;
  spec.train_fraction = 1208.0 / 2708.0;
  spec.valid_fraction = 500.0 / 2708.0;
  spec.seed = 2708;
  Graph g = synthetic_homophilous(spec);
  // Bag-of-words-like sparsity, about 1.3% non-zeros.
  Rng rng(1433);
  for (double& v : g.features.data()) v = rng.bernoulli(0.013) ? std::abs(v) : 0.0;
  return g;
}

double median_epoch_seconds(const Graph& g, ExperimentConfig cfg) {
  cfg.train.epochs = 5;
  cfg.train.early_stopping.enabled = false;
  const auto schema = PredicateSchema::for_classes(g.num_classes);
  const RunResult r = train(g, cfg, instantiate_class_template(schema), schema, cfg.train.seed);
  std::vector<double> seconds;
  for (std::size_t e = 1; e < r.epochs.size(); ++e) seconds.push_back(r.epochs[e].seconds);  // skip warm-up
  std::sort(seconds.begin(), seconds.end());
  return seconds[seconds.size() / 2];
}

Outcome epoch_time_ordering(const fs::path& config_dir) {
  const Graph g = cora_sized_graph();
  std::string detail;
  bool ok = true;
  for (const char* model : {"kemlp", "kegcn", "kegat"}) {
    const ExperimentConfig enhanced = ExperimentConfig::load(config_dir / (std::string("cora_") + model + ".cfg"));
    ExperimentConfig base = enhanced;
    base.ke.layers = 0;
    const double tb = median_epoch_seconds(g, base);
    const double tk = median_epoch_seconds(g, enhanced);
    ok = ok && tk > tb;
    detail += std::string(detail.empty() ? "" : "; ") + model + fmt(" %.3fs vs base %.3fs", tk, tb);
  }
  return {ok ? Status::pass : Status::fail, "median epoch time on a Cora-sized synthetic graph: " + detail};
}

// --- dataset criteria ----------------------------------------------------------

struct Shape {
  std::size_t nodes, edges, features, classes, train, valid, test;
};

const std::map<std::string, Shape> kShapes = {
    {"cora", {2708, 10556, 1433, 7, 1208, 500, 1000}},
    {"citeseer", {3327, 9104, 3703, 6, 1817, 500, 1000}},
    {"pubmed", {19717, 88648, 500, 3, 18217, 500, 1000}},
};

const std::map<std::string, std::map<std::string, double>> kReference = {
    {"cora", {{"mlp", 0.7098}, {"kemlp", 0.8072}, {"gcn", 0.8538}, {"kegcn", 0.8587}, {"gat", 0.8517}, {"kegat", 0.8498}}},
    {"citeseer", {{"mlp", 0.7278}, {"kemlp", 0.7529}, {"gcn", 0.748}, {"kegcn", 0.7506}, {"gat", 0.7718}, {"kegat", 0.7734}}},
    {"pubmed", {{"mlp", 0.8844}, {"kemlp", 0.8931}, {"gcn", 0.8855}, {"kegcn", 0.8840}, {"gat", 0.8769}, {"kegat", 0.8686}}},
};

class DatasetRunner {
 public:
  DatasetRunner(fs::path data_dir, fs::path config_dir, std::size_t runs)
      : data_dir_(std::move(data_dir)), config_dir_(std::move(config_dir)), runs_(runs) {}

  bool available(const std::string& ds) const { return fs::exists(data_dir_ / ds / "meta"); }
  std::string missing(const std::string& ds) const { return (data_dir_ / ds).string() + " not found"; }

  const Graph& graph(const std::string& ds) {
    auto it = graphs_.find(ds);
    if (it == graphs_.end()) it = graphs_.emplace(ds, load_dataset(data_dir_ / ds)).first;
    return it->second;
  }

  // Differences from the reference dataset statistics, empty when they match.
  std::string shape_note(const std::string& ds) {
    const Graph& g = graph(ds);
    const Shape& s = kShapes.at(ds);
    std::string note;
    auto cmp = [&](const char* what, std::size_t got, std::size_t want) {
      if (got != want) note += std::string(" ") + what + " " + std::to_string(got) + " (reference " + std::to_string(want) + ")";
    };
    cmp("nodes", g.num_nodes, s.nodes);
    cmp("edges", g.edges.size(), s.edges);
    cmp("features", g.num_features(), s.features);
    cmp("classes", g.num_classes, s.classes);
    cmp("train", g.nodes_in(Split::train).size(), s.train);
    cmp("valid", g.nodes_in(Split::valid).size(), s.valid);
    cmp("test", g.nodes_in(Split::test).size(), s.test);
    return note.empty() ? std::string() : "; shape differs:" + note;
  }

  // `model` is mlp/gcn/gat (base, ke.layers = 0) or kemlp/kegcn/kegat.
  const ExperimentResult& result(const std::string& ds, const std::string& model) {
    const std::string key = ds + "/" + model;
    if (auto it = results_.find(key); it != results_.end()) return it->second;
    const bool base = model.rfind("ke", 0) != 0;
    const std::string file = ds + "_" + (base ? "ke" + model : model) + ".cfg";
    ExperimentConfig cfg = ExperimentConfig::load(config_dir_ / file);
    cfg.dataset = data_dir_ / ds;
    cfg.train.runs = runs_;
    if (base) cfg.ke.layers = 0;
    const Graph& g = graph(ds);
    const auto schema = PredicateSchema::for_classes(g.num_classes);
    const auto clauses = experiment_clauses(cfg, schema);
    const std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    return results_.emplace(key, run_experiment(g, cfg, clauses, schema, threads)).first->second;
  }

  double mean_accuracy(const std::string& ds, const std::string& model) { return result(ds, model).mean_test_accuracy; }

 private:
  fs::path data_dir_;
  fs::path config_dir_;
  std::size_t runs_;
  std::map<std::string, Graph> graphs_;
  std::map<std::string, ExperimentResult> results_;
};

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

void dataset_criteria(DatasetRunner& runner) {
  auto needs = [&](const char* id, const char* title, const std::string& ds, auto body) {
    if (!runner.available(ds)) {
      report(id, title, {Status::blocked, runner.missing(ds) + "; convert the raw Planetoid files with tools/planetoid_to_text.py"});
      return;
    }
    run_criterion(id, title, body);
  };

  needs("C1", "Cora MLP/KeMLP gap", "cora", [&] {
    const double mlp = runner.mean_accuracy("cora", "mlp");
    const double ke = runner.mean_accuracy("cora", "kemlp");
    const bool ok = within(mlp, 0.71, kMlpTolerance) && within(ke, 0.81, kMlpTolerance) && ke - mlp >= kCoraKeMlpGap;
    return Outcome{ok ? Status::pass : Status::fail,
                   fmt("MLP %.4f (0.71 +- %.2f), KeMLP %.4f (0.81 +- %.2f)", mlp, kMlpTolerance, ke, kMlpTolerance) +
                       fmt(", gap %.4f (>= %.2f)", ke - mlp, kCoraKeMlpGap) + runner.shape_note("cora")};
  });

  needs("C2", "Cora GCN/KeGCN and GAT/KeGAT", "cora", [&] {
    const double gcn = runner.mean_accuracy("cora", "gcn");
    const double kegcn = runner.mean_accuracy("cora", "kegcn");
    const double gat = runner.mean_accuracy("cora", "gat");
    const double kegat = runner.mean_accuracy("cora", "kegat");
    const bool ok = within(gcn, 0.854, kGnnTolerance) && within(kegcn, gcn, kEnhancedGnnGap) &&
                    within(gat, 0.8517, kGnnTolerance) && within(kegat, gat, kEnhancedGnnGap);
    return Outcome{ok ? Status::pass : Status::fail,
                   fmt("GCN %.4f (0.854 +- %.2f), KeGCN %.4f (GCN +- %.3f)", gcn, kGnnTolerance, kegcn, kEnhancedGnnGap) +
                       fmt(", GAT %.4f (0.8517 +- %.2f), KeGAT %.4f (GAT +- %.3f)", gat, kGnnTolerance, kegat,
                           kEnhancedGnnGap)};
  });

  needs("C3", "Citeseer", "citeseer", [&] {
    const double mlp = runner.mean_accuracy("citeseer", "mlp");
    const double ke = runner.mean_accuracy("citeseer", "kemlp");
    const double gat = runner.mean_accuracy("citeseer", "gat");
    const double kegat = runner.mean_accuracy("citeseer", "kegat");
    const bool ok = within(mlp, 0.728, kMlpTolerance) && within(ke, 0.753, kMlpTolerance) && ke > mlp &&
                    gat >= kCiteseerGatFloor && kegat >= kCiteseerGatFloor;
    return Outcome{ok ? Status::pass : Status::fail,
                   fmt("MLP %.4f (0.728 +- %.2f), KeMLP %.4f (0.753 +- %.2f)", mlp, kMlpTolerance, ke, kMlpTolerance) +
                       fmt(", GAT %.4f, KeGAT %.4f (>= %.2f)", gat, kegat, kCiteseerGatFloor) +
                       runner.shape_note("citeseer")};
  });

  needs("C4", "PubMed", "pubmed", [&] {
    std::string detail;
    bool ok = true;
    for (const auto& [model, target] : kReference.at("pubmed")) {
      const double acc = runner.mean_accuracy("pubmed", model);
      ok = ok && within(acc, target, kMlpTolerance);
      detail += model + fmt(" %.4f (%.4f +- %.2f); ", acc, target, kMlpTolerance);
    }
    const double gap = runner.mean_accuracy("pubmed", "kemlp") - runner.mean_accuracy("pubmed", "mlp");
    ok = ok && gap >= 0.0;
    return Outcome{ok ? Status::pass : Status::fail, detail + fmt("KeMLP - MLP %.4f (>= 0)", gap) + runner.shape_note("pubmed")};
  });

  needs("C10", "Cora KeMLP clause weights vs compliance", "cora", [&] {
    const ExperimentResult& r = runner.result("cora", "kemlp");
    const Graph& g = runner.graph("cora");
    const auto schema = PredicateSchema::for_classes(g.num_classes);
    const auto rho = weight_compliance_correlations(r.runs, g, instantiate_class_template(schema), schema);
    std::size_t positive = 0;
    std::string values;
    for (const auto& v : rho) {
      positive += v && *v > 0.0;
      values += v ? fmt(" %.2f", *v) : std::string(" n/a");
    }
    const bool ok = r.runs.size() >= 10 && positive >= kSpearmanRunsRequired;
    return Outcome{ok ? Status::pass : Status::fail, std::to_string(positive) + "/" + std::to_string(rho.size()) +
                                                         " runs with Spearman > 0 (need >= 8 of 10):" + values};
  });
}

int usage() {
  std::fprintf(stderr,
               "usage: kegnn_acceptance core --configs DIR\n"
               "       kegnn_acceptance datasets --data DIR --configs DIR [--runs N]\n");
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  const std::string mode = argv[1];
  fs::path data_dir = "data";
  fs::path config_dir = "configs";
  std::size_t runs = 10;
  for (int i = 2; i + 1 < argc; i += 2) {
    if (!std::strcmp(argv[i], "--data")) data_dir = argv[i + 1];
    else if (!std::strcmp(argv[i], "--configs")) config_dir = argv[i + 1];
    else if (!std::strcmp(argv[i], "--runs")) runs = std::stoul(argv[i + 1]);
    else return usage();
  }

  if (mode == "core") {
    run_criterion("C5", "zero-weight identity", zero_weight_identity);
    run_criterion("C6", "satisfaction monotonicity", monotonicity);
    run_criterion("C7", "gradient suite", gradient_suite);
    run_criterion("C8", "compliance oracle", compliance_oracle);
    run_criterion("C9", "boost-formula oracle", boost_oracle);
    run_criterion("C11", "KeX per-epoch time exceeds base X", [&] { return epoch_time_ordering(config_dir); });
  } else if (mode == "datasets") {
    DatasetRunner runner(data_dir, config_dir, runs);
    dataset_criteria(runner);
  } else {
    return usage();
  }
  if (failures > 0) return 1;
  if (blocked > 0) return 77;
  return 0;
}
