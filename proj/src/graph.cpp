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

#include "kegnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "kegnn/errors.hpp"
#include "kegnn/random.hpp"

namespace kegnn {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<std::size_t> Graph::nodes_in(Split role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == role) out.push_back(i);
  return out;
}

std::vector<bool> Graph::mask(Split role) const {
  std::vector<bool> out(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) out[i] = split[i] == role;
  return out;
}

void Graph::validate() const {
  if (num_classes < 2) throw DataError("graph needs at least 2 classes, has " + std::to_string(num_classes));
  if (features.cols() < 1) throw DataError("graph needs at least one feature column");
  if (features.rows() != num_nodes) {
    throw DataError("feature matrix has " + std::to_string(features.rows()) + " rows for " +
                    std::to_string(num_nodes) + " nodes");
  }
  if (labels.size() != num_nodes) {
    throw DataError(std::to_string(labels.size()) + " labels for " + std::to_string(num_nodes) + " nodes");
  }
  if (split.size() != num_nodes) {
    throw DataError(std::to_string(split.size()) + " split entries for " + std::to_string(num_nodes) + " nodes");
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("node " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                      " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].src >= num_nodes || edges[e].dst >= num_nodes) {
      throw DataError("edge " + std::to_string(e) + " (" + std::to_string(edges[e].src) + "," +
                      std::to_string(edges[e].dst) + ") references a node >= " + std::to_string(num_nodes));
    }
  }
}

EdgeNormalization normalization_coefficients(std::size_t num_nodes, std::span<const Edge> edges) {
  std::vector<double> degree(num_nodes, 1.0);
  for (const Edge& e : edges) degree.at(e.dst) += 1.0;
  EdgeNormalization norm;
  norm.edge.reserve(edges.size());
  for (const Edge& e : edges) norm.edge.push_back(1.0 / std::sqrt(degree[e.src] * degree[e.dst]));
  norm.self_loop.reserve(num_nodes);
  for (double d : degree) norm.self_loop.push_back(1.0 / d);
  return norm;
}

EdgeNormalization normalization_coefficients(const Graph& graph) {
  return normalization_coefficients(graph.num_nodes, graph.edges);
}

namespace {

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
}

}  // namespace

EdgeSubset drop_edges(const Graph& graph, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("edge drop rate must lie in [0,1), got " + std::to_string(rate));
  }
  EdgeSubset subset;
  subset.kept.reserve(graph.edges.size());
  if (rate == 0.0) {
    for (std::size_t e = 0; e < graph.edges.size(); ++e) subset.kept.push_back(e);
    return subset;
  }
  Rng rng(seed);
  std::unordered_map<std::uint64_t, bool> decided;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    bool keep;
    if (graph.undirected) {
      const auto [it, fresh] = decided.try_emplace(pair_key(graph.edges[e].src, graph.edges[e].dst), false);
      if (fresh) it->second = rng.uniform() >= rate;
      keep = it->second;
    } else {
      keep = rng.uniform() >= rate;
    }
    if (keep) subset.kept.push_back(e);
  }
  return subset;
}

std::vector<Edge> select_edges(std::span<const Edge> edges, const EdgeSubset& subset) {
  std::vector<Edge> out;
  out.reserve(subset.kept.size());
  for (std::size_t e : subset.kept) out.push_back(edges[e]);
  return out;
}

Propagation build_propagation(std::size_t num_nodes, std::span<const Edge> edges, bool normalize) {
  auto index = std::make_shared<EdgeIndex>();
  index->num_nodes = num_nodes;
  index->src.reserve(edges.size() + num_nodes);
  index->dst.reserve(edges.size() + num_nodes);
  for (const Edge& e : edges) {
    index->src.push_back(e.src);
    index->dst.push_back(e.dst);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    index->src.push_back(static_cast<std::uint32_t>(i));
    index->dst.push_back(static_cast<std::uint32_t>(i));
  }
  Matrix coefficients(index->src.size(), 1, 1.0);
  if (normalize) {
    const EdgeNormalization norm = normalization_coefficients(num_nodes, edges);
    for (std::size_t e = 0; e < edges.size(); ++e) coefficients(e, 0) = norm.edge[e];
    for (std::size_t i = 0; i < num_nodes; ++i) coefficients(edges.size() + i, 0) = norm.self_loop[i];
  }
  return {std::move(index), std::move(coefficients)};
}

Graph synthetic_homophilous(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.num_nodes < spec.num_classes) {
    throw ConfigError("synthetic graph needs n >= m >= 2 (n=" + std::to_string(spec.num_nodes) +
                      ", m=" + std::to_string(spec.num_classes) + ")");
  }
  if (spec.num_features < 1) throw ConfigError("synthetic graph needs at least one feature");
  if (!(spec.homophily >= 0.0 && spec.homophily <= 1.0)) throw ConfigError("homophily must lie in [0,1]");
  if (!(spec.average_degree >= 0.0)) throw ConfigError("average degree must be non-negative");
  if (!(spec.feature_noise >= 0.0)) throw ConfigError("feature noise must be non-negative");
  if (!(spec.train_fraction >= 0.0 && spec.valid_fraction >= 0.0 &&
        spec.train_fraction + spec.valid_fraction <= 1.0)) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }

  Rng rng(spec.seed);
  const std::size_t n = spec.num_nodes;
  const std::size_t m = spec.num_classes;

  Graph g;
  g.num_nodes = n;
  g.num_classes = m;
  g.undirected = true;
  g.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.labels[i] = static_cast<int>(i % m);
  rng.shuffle(g.labels);

  std::vector<std::vector<std::uint32_t>> members(m);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(g.labels[i])].push_back(static_cast<std::uint32_t>(i));

  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.average_degree / 2.0));
  std::unordered_set<std::uint64_t> seen;
  const std::size_t max_attempts = 50 * target + 100;
  for (std::size_t attempt = 0; attempt < max_attempts && seen.size() < target; ++attempt) {
    const auto src = static_cast<std::uint32_t>(rng.below(n));
    const auto& own = members[static_cast<std::size_t>(g.labels[src])];
    std::uint32_t dst;
    if (rng.bernoulli(spec.homophily)) {
      if (own.size() < 2) continue;
      dst = own[rng.below(own.size())];
      if (dst == src) continue;
    } else {
      const std::size_t other = (static_cast<std::size_t>(g.labels[src]) + 1 + rng.below(m - 1)) % m;
      dst = members[other][rng.below(members[other].size())];
    }
    if (!seen.insert(pair_key(src, dst)).second) continue;
    g.edges.push_back({src, dst});
    g.edges.push_back({dst, src});
  }

  Matrix means(m, spec.num_features);
  for (double& v : means.data()) v = rng.normal();
  g.features = Matrix(n, spec.num_features);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < spec.num_features; ++c)
      g.features(i, c) = means(static_cast<std::size_t>(g.labels[i]), c) + spec.feature_noise * rng.normal();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_fraction * static_cast<double>(n)));
  g.split.assign(n, Split::test);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) g.split[order[k]] = Split::train;
    else if (k < n_train + n_valid) g.split[order[k]] = Split::valid;
  }
  g.validate();
  return g;
}

}  // namespace kegnn
