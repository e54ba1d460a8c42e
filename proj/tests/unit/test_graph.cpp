#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "kegnn/errors.hpp"
#include "kegnn/graph.hpp"
#include "kegnn/random.hpp"

using namespace kegnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("kegnn_graph_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& name, const std::string& body) const { std::ofstream(path / name) << body; }
};

// Dense oracle: (D+I)^-1/2 (A+I) (D+I)^-1/2 with A[dst][src] counting edges.
Matrix dense_normalized(std::size_t n, const std::vector<Edge>& edges) {
  Matrix a(n, n);
  for (const Edge& e : edges) a(e.dst, e.src) += 1.0;
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= std::sqrt(deg[i] * deg[j]);
  return a;
}

std::vector<Edge> random_edges(Rng& rng, std::size_t n, std::size_t count, bool symmetric) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  std::vector<Edge> out;
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = static_cast<std::uint32_t>(rng.below(n));
    const auto d = static_cast<std::uint32_t>(rng.below(n));
    if (s == d || !seen.insert({s, d}).second) continue;
    out.push_back({s, d});
    if (symmetric && seen.insert({d, s}).second) out.push_back({d, s});
  }
  return out;
}

Graph tiny_graph(std::vector<Edge> edges, std::size_t n, bool undirected) {
  Graph g;
  g.num_nodes = n;
  g.num_classes = 2;
  g.undirected = undirected;
  g.edges = std::move(edges);
  g.features = Matrix(n, 1, 1.0);
  g.labels.assign(n, 0);
  g.split.assign(n, Split::train);
  return g;
}

}  // namespace

TEST_CASE("normalised propagation equals the dense operator") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(12);
    const auto edges = random_edges(rng, n, rng.below(3 * n), seed % 2 == 0);
    const Matrix h = [&] {
      Matrix m(n, 3);
      for (double& v : m.data()) v = rng.uniform(-1, 1);
      return m;
    }();
    const Propagation prop = build_propagation(n, edges, true);
    Tape tape;
    const Matrix got = aggregate(tape.constant(prop.coefficients), tape.constant(h), prop.index).value();
    const Matrix want = multiply(dense_normalized(n, edges), h);
    CHECK(max_abs_diff(got, want) <= 1e-12);
  }
}

TEST_CASE("normalisation coefficients on hand-computed graphs") {
  SUBCASE("star with three leaves") {
    const std::vector<Edge> star{{0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}};
    const auto norm = normalization_coefficients(4, star);
    for (double c : norm.edge) CHECK(c == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-15));
    CHECK(norm.self_loop[0] == doctest::Approx(0.25));
    CHECK(norm.self_loop[1] == doctest::Approx(0.5));
  }
  SUBCASE("mutual pair and an isolated node") {
    const auto norm = normalization_coefficients(3, std::vector<Edge>{{0, 1}, {1, 0}});
    CHECK(norm.edge[0] == 0.5);
    CHECK(norm.edge[1] == 0.5);
    CHECK(norm.self_loop[2] == 1.0);
  }
  SUBCASE("unnormalised propagation uses unit weights and trailing self-loops") {
    const Propagation prop = build_propagation(3, std::vector<Edge>{{0, 1}}, false);
    REQUIRE(prop.index->src.size() == 4);
    CHECK(prop.index->src[1] == 0);
    CHECK(prop.index->dst[3] == 2);
    for (double c : prop.coefficients.data()) CHECK(c == 1.0);
  }
}

TEST_CASE("edge dropping") {
  SyntheticSpec spec;
  spec.num_nodes = 4000;
  spec.average_degree = 5.0;
  spec.seed = 3;
  const Graph g = synthetic_homophilous(spec);
  REQUIRE(g.edges.size() == 20000);

  const EdgeSubset half = drop_edges(g, 0.5, 9);
  const double kept = static_cast<double>(half.kept.size()) / static_cast<double>(g.edges.size());
  CHECK(kept >= 0.45);
  CHECK(kept <= 0.55);

  // Both directions of a pair survive or vanish together.
  std::set<std::pair<std::uint32_t, std::uint32_t>> survivors;
  for (const Edge& e : select_edges(g.edges, half)) survivors.insert({e.src, e.dst});
  for (const auto& [s, d] : survivors) CHECK(survivors.count({d, s}) == 1);

  CHECK(drop_edges(g, 0.5, 9).kept == half.kept);
  CHECK(drop_edges(g, 0.5, 10).kept != half.kept);
  CHECK(drop_edges(g, 0.0, 9).kept.size() == g.edges.size());
  CHECK_THROWS_AS(drop_edges(g, 1.0, 9), ConfigError);
  CHECK_THROWS_AS(drop_edges(g, -0.1, 9), ConfigError);

  Rng edge_rng(1);
  const Graph directed = tiny_graph(random_edges(edge_rng, 200, 10000, false), 200, false);
  const double directed_kept =
      static_cast<double>(drop_edges(directed, 0.3, 4).kept.size()) / static_cast<double>(directed.edges.size());
  CHECK(directed_kept >= 0.65);
  CHECK(directed_kept <= 0.75);
}

TEST_CASE("synthetic generator invariants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.homophily = seed % 2 == 0 ? 1.0 : 0.5;
    const Graph g = synthetic_homophilous(spec);
    CHECK_NOTHROW(g.validate());
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    REQUIRE(g.edges.size() % 2 == 0);
    for (std::size_t k = 0; k < g.edges.size(); k += 2) {
      CHECK(g.edges[k].src != g.edges[k].dst);
      CHECK(g.edges[k + 1] == Edge{g.edges[k].dst, g.edges[k].src});
    }
    for (const Edge& e : g.edges) CHECK(seen.insert({e.src, e.dst}).second);
    if (spec.homophily == 1.0) {
      for (const Edge& e : g.edges) CHECK(g.labels[e.src] == g.labels[e.dst]);
    }
    CHECK(g.nodes_in(Split::train).size() == 60);
    CHECK(g.nodes_in(Split::valid).size() == 40);
    CHECK(g.nodes_in(Split::test).size() == 100);
    std::vector<int> per_class(3, 0);
    for (int y : g.labels) ++per_class[static_cast<std::size_t>(y)];
    CHECK(std::abs(per_class[0] - per_class[2]) <= 1);
  }
  SyntheticSpec bad;
  bad.homophily = 1.5;
  CHECK_THROWS_AS(synthetic_homophilous(bad), ConfigError);
  bad = SyntheticSpec{};
  bad.train_fraction = 0.9;
  CHECK_THROWS_AS(synthetic_homophilous(bad), ConfigError);
}

TEST_CASE("save then load is the identity") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    TempDir dir("roundtrip" + std::to_string(seed));
    SyntheticSpec spec;
    spec.seed = seed;
    spec.num_nodes = 60;
    Graph g = synthetic_homophilous(spec);
    if (seed % 2 == 1) {
      // Mostly-zero features exercise the sparse layout.
      for (std::size_t i = 0; i < g.num_nodes; ++i)
        for (std::size_t c = 1; c < g.num_features(); ++c) g.features(i, c) = 0.0;
    }
    save_dataset(g, dir.path);
    CHECK(load_dataset(dir.path) == g);
  }
}

TEST_CASE("two-node fixture loads as expected") {
  TempDir dir("fixture");
  dir.write("meta", "# tiny\nnodes=2\nfeatures=3\nclasses=2\nundirected=true\n");
  dir.write("features.txt", "0:1.5 2:-2\n1:0.25\n");
  dir.write("labels.txt", "1\n0\n");
  dir.write("edges.txt", "0 1\n1 0\n0 1\n");
  dir.write("split.txt", "train\ntest\n");
  const Graph g = load_dataset(dir.path);
  CHECK(g.num_nodes == 2);
  CHECK(g.undirected);
  CHECK(g.edges == std::vector<Edge>{{0, 1}, {1, 0}});
  CHECK(g.features == Matrix::from_rows({{1.5, 0.0, -2.0}, {0.0, 0.25, 0.0}}));
  CHECK(g.labels == std::vector<int>{1, 0});
  CHECK(g.mask(Split::train) == std::vector<bool>{true, false});
  CHECK(g.nodes_in(Split::test) == std::vector<std::size_t>{1});
}

TEST_CASE("malformed datasets name the file and line") {
  TempDir dir("broken");
  dir.write("meta", "nodes=2\nfeatures=2\nclasses=2\nundirected=false\n");
  dir.write("labels.txt", "0\n1\n");
  dir.write("edges.txt", "0 1\n");
  dir.write("split.txt", "train\nvalid\n");

  auto message = [&] {
    try {
      load_dataset(dir.path);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };

  dir.write("features.txt", "1 2\n0:1\n");
  CHECK(message().find("features.txt:2") != std::string::npos);
  dir.write("features.txt", "1 0:2\n0 0\n");
  CHECK(message().find("features.txt:1") != std::string::npos);
  dir.write("features.txt", "1 2\n3\n");
  CHECK(message().find("expected 2 values") != std::string::npos);
  dir.write("features.txt", "1 2\n3 4\n");
  CHECK(message() == "no error");

  dir.write("edges.txt", "0 1\n0 7\n");
  CHECK(message().find("edges.txt:2") != std::string::npos);
  dir.write("edges.txt", "0 1\n");
  dir.write("labels.txt", "0\n2\n");
  CHECK(message().find("labels.txt:2") != std::string::npos);
  dir.write("labels.txt", "0\n1\n");
  dir.write("split.txt", "train\ndev\n");
  CHECK(message().find("split.txt:2") != std::string::npos);
  dir.write("split.txt", "train\n");
  CHECK(message().find("1 entries for 2 nodes") != std::string::npos);
  dir.write("split.txt", "train\nvalid\n");
  dir.write("meta", "nodes=2\nfeatures=2\nclasses=2\nundirected=maybe\n");
  CHECK(message().find("meta:4") != std::string::npos);
  CHECK_THROWS_AS(load_dataset(dir.path / "missing"), DataError);
}
