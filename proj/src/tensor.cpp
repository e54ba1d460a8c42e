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

#include "kegnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "kegnn/errors.hpp"

namespace kegnn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         " given " + std::to_string(values_.size()) + " values");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged initializer for matrix");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) {
    throw DimensionError("cannot add " + shape_string(other) + " into " + shape_string(*this));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

void Matrix::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul " + shape_string(a) + " by " + shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double v = a(i, k);
      if (v == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += v * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// --- Var -------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// --- Tape ------------------------------------------------------------------

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::variable(Matrix value) {
  Node node;
  node.op = "variable";
  node.value = std::move(value);
  node.requires_grad = true;
  return push(std::move(node));
}

Var Tape::record(std::string_view op, Matrix value, std::vector<NodeId> parents,
                 BackwardFn backward) {
  if (!all_finite(value)) {
    throw DivergenceError("non-finite value produced by " + std::string(op) + " (" +
                          shape_string(value) + ")");
  }
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  node.leaf = false;
  for (NodeId p : parents) {
    if (p >= nodes_.size()) throw IndexError("parent node " + std::to_string(p) + " not on tape");
    node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
  }
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

const Matrix& Tape::grad(NodeId id) const {
  const Node& node = nodes_.at(id);
  if (node.grad.same_shape(node.value) && !node.grad.empty()) return node.grad;
  zeros_scratch_ = Matrix(node.value.rows(), node.value.cols());
  return zeros_scratch_;
}

std::map<NodeId, Matrix> Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss node belongs to another tape");
  const Matrix& loss_value = value(loss.id());
  if (loss_value.rows() != 1 || loss_value.cols() != 1) {
    throw ContractError("backward needs a 1x1 loss, got " + shape_string(loss_value));
  }

  std::vector<Matrix> adjoint(loss.id() + 1);
  if (nodes_[loss.id()].requires_grad) adjoint[loss.id()] = Matrix(1, 1, 1.0);

  std::vector<Matrix*> slots;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (adjoint[id].empty() || !node.requires_grad) continue;
    if (node.leaf) {
      if (node.grad.empty()) node.grad = Matrix(node.value.rows(), node.value.cols());
      node.grad += adjoint[id];
      adjoint[id] = Matrix();
      continue;
    }
    slots.assign(node.parents.size(), nullptr);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const NodeId p = node.parents[k];
      if (!nodes_[p].requires_grad) continue;
      if (adjoint[p].empty()) {
        adjoint[p] = Matrix(nodes_[p].value.rows(), nodes_[p].value.cols());
      }
      slots[k] = &adjoint[p];
    }
    node.backward(adjoint[id], slots);
    adjoint[id] = Matrix();
  }

  std::map<NodeId, Matrix> result;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.leaf && node.requires_grad) result.emplace(id, grad(id));
  }
  return result;
}

void Tape::zero_grad() {
  for (Node& node : nodes_) node.grad = Matrix();
}

}  // namespace kegnn
