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

// Dense row-major matrices and a reverse-mode tape over them.
//
// Every operation appends one node to a Tape. Nodes are stored in creation
// order, which is a topological order of the DAG, so backward() is a single
// reverse sweep. Only leaves created with Tape::variable() keep gradients
// between calls; intermediate adjoints live in a scratch buffer per sweep,
// which makes repeated backward() calls add up exactly.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kegnn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> data() noexcept { return values_; }
  std::span<const double> data() const noexcept { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix& operator+=(const Matrix& other);
  void fill(double value);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

std::string shape_string(const Matrix& m);
bool all_finite(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Plain (non-differentiable) product; used by oracles and evaluation code.
Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

using NodeId = std::size_t;

class Tape;

/// Handle to a tape node. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Accumulated gradient (leaves only); zeros of the value's shape otherwise.
  const Matrix& grad() const;
  NodeId id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  /// Receives the adjoint of the node and one slot per parent; a slot is null
  /// when that parent does not need a gradient.
  using BackwardFn = std::function<void(const Matrix& out_grad, std::span<Matrix* const> parent_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Appends an op node. Throws DivergenceError if `value` holds NaN/Inf.
  Var record(std::string_view op, Matrix value, std::vector<NodeId> parents, BackwardFn backward);

  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
  const Matrix& grad(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a 1x1 loss. Adds into leaf gradients and returns the
  /// accumulated gradient of every variable leaf, keyed by node id.
  std::map<NodeId, Matrix> backward(Var loss);
  void zero_grad();

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;  // leaves only; empty until first backward
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = true;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  mutable Matrix zeros_scratch_;
};

// --- differentiable operations -------------------------------------------

Var matmul(Var a, Var b);
/// Product with a constant left operand held by reference; `a` must outlive
/// the tape. Zero entries of `a` are skipped, which pays off for sparse
/// bag-of-words features.
Var matmul(const Matrix& a, Var b);

/// Elementwise binary ops under row/column/scalar broadcasting: each
/// dimension must match or be 1 on one side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var relu(Var a);
Var leaky_relu(Var a, double negative_slope);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var rowwise_softmax(Var z);
Var log_softmax(Var z);

enum class ElementwiseOp { add, subtract, multiply, relu, log, exp, scale };

/// Dispatcher over the elementwise family; `b` is required for binary kinds,
/// `factor` is used by `scale`.
Var elementwise(ElementwiseOp kind, Var a, const Var* b = nullptr, double factor = 1.0);

/// Sum of all entries as a 1x1 node.
Var sum(Var a);
/// Multiplies every entry of `a` by the 1x1 node `s`.
Var scale_by(Var a, Var s);

Var select_cols(Var a, std::vector<std::size_t> columns);
/// Adjoint of select_cols: column k of `a` is added into column columns[k].
Var place_cols(Var a, std::vector<std::size_t> columns, std::size_t total_cols);
Var concat_cols(std::span<const Var> parts);

Var gather_rows(Var src, std::vector<std::uint32_t> index);
/// out[i] = sum of src rows j with index[j] == i.
Var scatter_add_rows(Var src, std::vector<std::uint32_t> index, std::size_t out_rows);

/// out.flat[k] = src.flat[index[k]], or `fill` where index[k] < 0.
Var gather_cells(Var src, std::shared_ptr<const std::vector<std::int64_t>> index, std::size_t rows,
                 std::size_t cols, double fill);
/// out.flat[index[k]] += src.flat[k]; entries with index[k] < 0 are dropped.
Var scatter_cells(Var src, std::shared_ptr<const std::vector<std::int64_t>> index,
                  std::size_t out_rows, std::size_t out_cols);

/// Source/destination lists of a message-passing pattern over `num_nodes`.
struct EdgeIndex {
  std::size_t num_nodes = 0;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
};

/// out[dst[e]] += coeff[e] * h[src[e]]; coeff is E x 1.
Var aggregate(Var coeff, Var h, std::shared_ptr<const EdgeIndex> edges);
/// Softmax of the E x 1 scores within each group of edges sharing a destination.
Var segment_softmax(Var scores, std::shared_ptr<const EdgeIndex> edges);

struct BatchNormStats {
  Matrix mean;      // 1 x cols
  Matrix variance;  // 1 x cols, biased
};
/// Training-mode batch normalisation over rows; reports the batch statistics.
Var batch_norm(Var x, Var gamma, Var beta, double epsilon, BatchNormStats* stats = nullptr);

/// Mean negative log-likelihood of `labels[r]` in rows `rows` of `log_probs`.
Var nll_loss(Var log_probs, std::span<const int> labels, std::span<const std::size_t> rows);
/// Mean binary cross-entropy of sigmoid(z) against one-hot labels over `rows`.
Var bce_with_logits(Var z, std::span<const int> labels, std::span<const std::size_t> rows);

// --- optimisation ----------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-7;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step() const noexcept { return step_; }
  const std::vector<Matrix>& first_moments() const noexcept { return first_; }
  const std::vector<Matrix>& second_moments() const noexcept { return second_; }

 private:
  friend void adam_step(std::span<Matrix* const>, std::span<const Matrix* const>, AdamState&,
                        double);
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

/// Bias-corrected Adam update of params[i] with grads[i]; a null gradient is
/// treated as zero.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, double learning_rate);

// --- gradient checking -----------------------------------------------------

using ScalarFunction = std::function<Var(Tape&, std::span<const Var> inputs)>;

/// Central-difference check of every input coordinate; returns the worst
/// relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double grad_check(const ScalarFunction& f, const std::vector<Matrix>& inputs, double eps);
double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps);

}  // namespace kegnn
