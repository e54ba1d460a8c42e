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

#include <charconv>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>

#include "kegnn/errors.hpp"
#include "kegnn/graph.hpp"

namespace kegnn {

namespace {

namespace fs = std::filesystem;

class LineReader {
 public:
  explicit LineReader(fs::path path) : path_(std::move(path)), in_(path_) {
    if (!in_) throw DataError("cannot open " + path_.string());
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no_;
    return true;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw DataError(path_.string() + ":" + std::to_string(line_no_) + ": " + message);
  }

  std::size_t line_no() const { return line_no_; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Meta {
  std::size_t nodes = 0;
  std::size_t features = 0;
  std::size_t classes = 0;
  bool undirected = false;
};

Meta read_meta(const fs::path& path) {
  LineReader reader(path);
  std::optional<std::size_t> nodes, features, classes;
  std::optional<bool> undirected;
  std::string line;
  while (reader.next(line)) {
    const std::string_view body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) reader.fail("expected key=value");
    const std::string_view key = trim(body.substr(0, eq));
    const std::string_view value = trim(body.substr(eq + 1));
    auto count = [&](std::optional<std::size_t>& slot) {
      const auto v = parse_number<std::size_t>(value);
      if (!v) reader.fail("'" + std::string(key) + "' needs a non-negative integer, got '" + std::string(value) + "'");
      slot = *v;
    };
    if (key == "nodes") count(nodes);
    else if (key == "features") count(features);
    else if (key == "classes") count(classes);
    else if (key == "undirected") {
      if (value == "true") undirected = true;
      else if (value == "false") undirected = false;
      else reader.fail("'undirected' must be true or false, got '" + std::string(value) + "'");
    } else {
      reader.fail("unknown key '" + std::string(key) + "'");
    }
  }
  if (!nodes || !features || !classes || !undirected) {
    throw DataError(path.string() + ": requires nodes, features, classes and undirected");
  }
  return {*nodes, *features, *classes, *undirected};
}

Matrix read_features(const fs::path& path, std::size_t n, std::size_t d) {
  LineReader reader(path);
  Matrix x(n, d);
  enum class Layout { unknown, dense, sparse } layout = Layout::unknown;
  std::string line;
  std::size_t row = 0;
  while (reader.next(line)) {
    if (row == n) {
      if (trim(line).empty()) continue;
      reader.fail("more than " + std::to_string(n) + " feature rows");
    }
    const auto toks = tokens(line);
    std::size_t sparse_tokens = 0;
    for (auto t : toks) sparse_tokens += t.find(':') != std::string_view::npos;
    if (sparse_tokens != 0 && sparse_tokens != toks.size()) reader.fail("line mixes dense and idx:val entries");
    const Layout here = toks.empty() || sparse_tokens != 0 ? Layout::sparse : Layout::dense;
    if (!toks.empty()) {
      if (layout == Layout::unknown) layout = here;
      else if (layout != here) reader.fail("dense and sparse feature lines are mixed");
    }
    if (here == Layout::dense) {
      if (toks.size() != d) {
        reader.fail("expected " + std::to_string(d) + " values, found " + std::to_string(toks.size()));
      }
      for (std::size_t c = 0; c < d; ++c) {
        const auto v = parse_number<double>(toks[c]);
        if (!v) reader.fail("bad number '" + std::string(toks[c]) + "'");
        x(row, c) = *v;
      }
    } else {
      if (layout == Layout::dense) reader.fail("empty line in dense feature file");
      for (auto t : toks) {
        const auto colon = t.find(':');
        const auto idx = parse_number<std::size_t>(t.substr(0, colon));
        const auto v = parse_number<double>(t.substr(colon + 1));
        if (!idx || !v) reader.fail("bad entry '" + std::string(t) + "'");
        if (*idx >= d) reader.fail("feature index " + std::to_string(*idx) + " >= " + std::to_string(d));
        x(row, *idx) = *v;
      }
    }
    ++row;
  }
  if (row != n) throw DataError(path.string() + ": " + std::to_string(row) + " rows for " + std::to_string(n) + " nodes");
  return x;
}

std::vector<int> read_labels(const fs::path& path, std::size_t n, std::size_t m) {
  LineReader reader(path);
  std::vector<int> labels;
  labels.reserve(n);
  std::string line;
  while (reader.next(line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto v = parse_number<int>(body);
    if (!v) reader.fail("bad label '" + std::string(body) + "'");
    if (*v < 0 || static_cast<std::size_t>(*v) >= m) {
      reader.fail("label " + std::to_string(*v) + " outside [0," + std::to_string(m) + ")");
    }
    labels.push_back(*v);
  }
  if (labels.size() != n) {
    throw DataError(path.string() + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " nodes");
  }
  return labels;
}

std::vector<Edge> read_edges(const fs::path& path, std::size_t n, bool undirected) {
  LineReader reader(path);
  std::vector<Edge> edges;
  std::unordered_set<std::uint64_t> seen;
  auto add = [&](std::uint32_t s, std::uint32_t d) {
    if (seen.insert((static_cast<std::uint64_t>(s) << 32) | d).second) edges.push_back({s, d});
  };
  std::string line;
  while (reader.next(line)) {
    const auto toks = tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) reader.fail("expected 'src dst', found " + std::to_string(toks.size()) + " fields");
    const auto s = parse_number<std::uint32_t>(toks[0]);
    const auto d = parse_number<std::uint32_t>(toks[1]);
    if (!s || !d) reader.fail("bad node id");
    if (*s >= n || *d >= n) reader.fail("node id out of range [0," + std::to_string(n) + ")");
    if (undirected) {
      add(*s, *d);
      add(*d, *s);
    } else {
      edges.push_back({*s, *d});
    }
  }
  return edges;
}

std::vector<Split> read_split(const fs::path& path, std::size_t n) {
  LineReader reader(path);
  std::vector<Split> split;
  split.reserve(n);
  std::string line;
  while (reader.next(line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    if (body == "train") split.push_back(Split::train);
    else if (body == "valid") split.push_back(Split::valid);
    else if (body == "test") split.push_back(Split::test);
    else reader.fail("unknown split '" + std::string(body) + "'");
  }
  if (split.size() != n) {
    throw DataError(path.string() + ": " + std::to_string(split.size()) + " entries for " + std::to_string(n) + " nodes");
  }
  return split;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

Graph load_dataset(const std::filesystem::path& directory) {
  if (!fs::is_directory(directory)) throw DataError("dataset directory not found: " + directory.string());
  const Meta meta = read_meta(directory / "meta");
  if (meta.nodes == 0) throw DataError((directory / "meta").string() + ": nodes must be positive");
  if (meta.nodes > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError((directory / "meta").string() + ": too many nodes");
  }
  Graph g;
  g.num_nodes = meta.nodes;
  g.num_classes = meta.classes;
  g.undirected = meta.undirected;
  g.features = read_features(directory / "features.txt", meta.nodes, meta.features);
  g.labels = read_labels(directory / "labels.txt", meta.nodes, meta.classes);
  g.edges = read_edges(directory / "edges.txt", meta.nodes, meta.undirected);
  g.split = read_split(directory / "split.txt", meta.nodes);
  g.validate();
  return g;
}

void save_dataset(const Graph& graph, const std::filesystem::path& directory) {
  graph.validate();
  fs::create_directories(directory);
  {
    auto out = open_out(directory / "meta");
    out << "nodes=" << graph.num_nodes << "\nfeatures=" << graph.num_features()
        << "\nclasses=" << graph.num_classes << "\nundirected=" << (graph.undirected ? "true" : "false") << "\n";
  }
  {
    std::size_t nonzero = 0;
    for (double v : graph.features.data()) nonzero += v != 0.0;
    const bool sparse = 2 * nonzero < graph.features.size();
    auto out = open_out(directory / "features.txt");
    std::string line;
    for (std::size_t i = 0; i < graph.num_nodes; ++i) {
      line.clear();
      for (std::size_t c = 0; c < graph.num_features(); ++c) {
        const double v = graph.features(i, c);
        if (sparse) {
          if (v == 0.0) continue;
          if (!line.empty()) line += ' ';
          line += std::to_string(c) + ':' + format_double(v);
        } else {
          if (c) line += ' ';
          line += format_double(v);
        }
      }
      out << line << '\n';
    }
  }
  {
    auto out = open_out(directory / "labels.txt");
    for (int y : graph.labels) out << y << '\n';
  }
  {
    // Undirected graphs are written as stored; reloading re-adds nothing because
    // every pair already has its reverse.
    auto out = open_out(directory / "edges.txt");
    for (const Edge& e : graph.edges) out << e.src << ' ' << e.dst << '\n';
  }
  {
    auto out = open_out(directory / "split.txt");
    for (Split s : graph.split) out << to_string(s) << '\n';
  }
}

}  // namespace kegnn
