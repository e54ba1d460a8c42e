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
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "kegnn/tensor.hpp"

namespace kegnn {

/// Ordered node pair. Messages and groundings flow from src to dst.
struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  bool operator==(const Edge&) const = default;
};

enum class Split : std::uint8_t { train, valid, test };

std::string_view to_string(Split split);

/// Homogeneous, attributed, labelled graph. Immutable once loaded.
struct Graph {
  std::size_t num_nodes = 0;
  std::size_t num_classes = 0;
  bool undirected = false;
  std::vector<Edge> edges;
  Matrix features;          // num_nodes x d
  std::vector<int> labels;  // class id per node
  std::vector<Split> split;  // one role per node, so masks are disjoint by construction

  std::size_t num_features() const noexcept { return features.cols(); }
  std::vector<std::size_t> nodes_in(Split role) const;
  std::vector<bool> mask(Split role) const;

  /// Throws DataError describing the first violated invariant.
  void validate() const;

  bool operator==(const Graph&) const = default;
};

/// Loads the text dataset layout (meta, features.txt, labels.txt, edges.txt,
/// split.txt). With `undirected=true` every pair is closed under reversal and
/// duplicates are dropped, keeping first-appearance order.
Graph load_dataset(const std::filesystem::path& directory);
void save_dataset(const Graph& graph, const std::filesystem::path& directory);

/// Self-loop-augmented symmetric normalisation: for an edge s->d the
/// coefficient is 1/sqrt(deg(s) deg(d)) with deg(i) = 1 + in-degree(i);
/// the implicit self-loop of i gets 1/deg(i).
struct EdgeNormalization {
  std::vector<double> edge;       // aligned with the edge list it was built from
  std::vector<double> self_loop;  // one per node
};

EdgeNormalization normalization_coefficients(const Graph& graph);
EdgeNormalization normalization_coefficients(std::size_t num_nodes, std::span<const Edge> edges);

/// Edges kept by one draw of edge dropping, as indices into graph.edges.
struct EdgeSubset {
  std::vector<std::size_t> kept;
};

/// Keeps each edge with probability 1 - rate. For undirected graphs both
/// directions of a pair share one draw.
EdgeSubset drop_edges(const Graph& graph, double rate, std::uint64_t seed);

std::vector<Edge> select_edges(std::span<const Edge> edges, const EdgeSubset& subset);

/// Message-passing index over `edges` plus one self-loop per node (appended
/// after the edges), with per-entry coefficients.
struct Propagation {
  std::shared_ptr<const EdgeIndex> index;
  Matrix coefficients;  // E' x 1
};

Propagation build_propagation(std::size_t num_nodes, std::span<const Edge> edges, bool normalize);

struct SyntheticSpec {
  std::size_t num_nodes = 200;
  std::size_t num_classes = 3;
  std::size_t num_features = 8;
  double homophily = 0.8;
  double average_degree = 4.0;
  double feature_noise = 1.0;
  double train_fraction = 0.3;
  double valid_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Balanced random labels, undirected edges whose endpoints share a class
/// with probability `homophily`, features = class mean + Gaussian noise.
Graph synthetic_homophilous(const SyntheticSpec& spec);

}  // namespace kegnn
