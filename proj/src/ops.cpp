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

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "kegnn/errors.hpp"
#include "kegnn/tensor.hpp"

namespace kegnn {
namespace {

#ifdef KEGNN_FAULT_INJECTION
// Negative-control builds scale one adjoint so gradient checks must fail.
constexpr double kMatmulGradFactor = 1.01;
#else
constexpr double kMatmulGradFactor = 1.0;
#endif

void require_same_tape(Var a, Var b, std::string_view op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

struct BroadcastShape {
  std::size_t rows;
  std::size_t cols;
};

BroadcastShape broadcast_shape(const Matrix& a, const Matrix& b, std::string_view op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                         shape_string(b));
  };
  return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

inline std::size_t flat_index(const Matrix& m, std::size_t r, std::size_t c) {
  return (m.rows() == 1 ? 0 : r) * m.cols() + (m.cols() == 1 ? 0 : c);
}

// Shared driver for broadcasting binary ops. `f` computes the value, `da`/`db`
// the partial derivatives with respect to each operand at (x, y).
template <typename F, typename DA, typename DB>
Var broadcast_binary(std::string_view op, Var a, Var b, F f, DA da, DB db) {
  require_same_tape(a, b, op);
  Tape& tape = a.tape();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const BroadcastShape shape = broadcast_shape(av, bv, op);
  Matrix out(shape.rows, shape.cols);
  for (std::size_t r = 0; r < shape.rows; ++r)
    for (std::size_t c = 0; c < shape.cols; ++c)
      out(r, c) = f(av.data()[flat_index(av, r, c)], bv.data()[flat_index(bv, r, c)]);

  const NodeId ia = a.id();
  const NodeId ib = b.id();
  return tape.record(op, std::move(out), {ia, ib},
                     [&tape, ia, ib, shape, da, db](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& x = tape.value(ia);
                       const Matrix& y = tape.value(ib);
                       for (std::size_t r = 0; r < shape.rows; ++r) {
                         for (std::size_t c = 0; c < shape.cols; ++c) {
                           const std::size_t ix = flat_index(x, r, c);
                           const std::size_t iy = flat_index(y, r, c);
                           const double gv = g(r, c);
                           if (grads[0]) grads[0]->data()[ix] += gv * da(x.data()[ix], y.data()[iy]);
                           if (grads[1]) grads[1]->data()[iy] += gv * db(x.data()[ix], y.data()[iy]);
                         }
                       }
                     });
}

template <typename F, typename DF>
Var unary(std::string_view op, Var a, F f, DF df) {
  Tape& tape = a.tape();
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out.data()[i] = f(av.data()[i]);
  const NodeId ia = a.id();
  const NodeId self = tape.size();
  return tape.record(op, std::move(out), {ia},
                     [&tape, ia, self, df](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& x = tape.value(ia);
                       const Matrix& y = tape.value(self);
                       auto gx = grads[0]->data();
                       for (std::size_t i = 0; i < x.size(); ++i)
                         gx[i] += g.data()[i] * df(x.data()[i], y.data()[i]);
                     });
}

double stable_sigmoid(double z) {
  constexpr double kLow = std::numeric_limits<double>::min();
  constexpr double kHigh = 1.0 - 0x1.0p-53;
  const double e = std::exp(-std::abs(z));
  const double s = z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  return std::clamp(s, kLow, kHigh);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& tape = a.tape();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av) + " by " + shape_string(bv));
  }
  Matrix out = multiply(av, bv);
  const NodeId ia = a.id();
  const NodeId ib = b.id();
  return tape.record("matmul", std::move(out), {ia, ib},
                     [&tape, ia, ib](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& x = tape.value(ia);
                       const Matrix& y = tape.value(ib);
                       if (grads[0]) {
                         Matrix& gx = *grads[0];
                         for (std::size_t i = 0; i < x.rows(); ++i) {
                           const auto g_row = g.row(i);
                           for (std::size_t k = 0; k < x.cols(); ++k) {
                             const auto y_row = y.row(k);
                             double acc = 0.0;
                             for (std::size_t j = 0; j < y.cols(); ++j) acc += g_row[j] * y_row[j];
                             gx(i, k) += kMatmulGradFactor * acc;
                           }
                         }
                       }
                       if (grads[1]) {
                         Matrix& gy = *grads[1];
                         for (std::size_t i = 0; i < x.rows(); ++i) {
                           const auto g_row = g.row(i);
                           for (std::size_t k = 0; k < x.cols(); ++k) {
                             const double v = x(i, k);
                             if (v == 0.0) continue;
                             auto gy_row = gy.row(k);
                             for (std::size_t j = 0; j < y.cols(); ++j)
                               gy_row[j] += kMatmulGradFactor * v * g_row[j];
                           }
                         }
                       }
                     });
}

Var matmul(const Matrix& a, Var b) {
  Tape& tape = b.tape();
  const Matrix& bv = b.value();
  if (a.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(a) + " by " + shape_string(bv));
  }
  Matrix out = multiply(a, bv);
  const Matrix* x = &a;
  return tape.record("matmul_const", std::move(out), {b.id()},
                     [x](const Matrix& g, std::span<Matrix* const> grads) {
                       Matrix& gy = *grads[0];
                       for (std::size_t i = 0; i < x->rows(); ++i) {
                         const auto g_row = g.row(i);
                         for (std::size_t k = 0; k < x->cols(); ++k) {
                           const double v = (*x)(i, k);
                           if (v == 0.0) continue;
                           auto gy_row = gy.row(k);
                           for (std::size_t j = 0; j < g.cols(); ++j)
                             gy_row[j] += kMatmulGradFactor * v * g_row[j];
                         }
                       }
                     });
}

Var add(Var a, Var b) {
  return broadcast_binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return broadcast_binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return broadcast_binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double negative_slope) {
  return unary(
      "leaky_relu", a, [negative_slope](double x) { return x > 0.0 ? x : negative_slope * x; },
      [negative_slope](double x, double) { return x > 0.0 ? 1.0 : negative_slope; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var rowwise_softmax(Var z) {
  Tape& tape = z.tape();
  const Matrix& zv = z.value();
  if (zv.cols() == 0) throw DimensionError("rowwise_softmax: matrix " + shape_string(zv) + " has no columns");
  Matrix out(zv.rows(), zv.cols());
  for (std::size_t r = 0; r < zv.rows(); ++r) {
    const auto in = zv.row(r);
    auto o = out.row(r);
    const double hi = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) total += (o[c] = std::exp(in[c] - hi));
    for (double& v : o) v /= total;
  }
  const NodeId self = tape.size();
  return tape.record("rowwise_softmax", std::move(out), {z.id()},
                     [&tape, self](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& s = tape.value(self);
                       Matrix& gz = *grads[0];
                       for (std::size_t r = 0; r < s.rows(); ++r) {
                         const auto sr = s.row(r);
                         const auto gr = g.row(r);
                         double dot = 0.0;
                         for (std::size_t c = 0; c < sr.size(); ++c) dot += gr[c] * sr[c];
                         auto out = gz.row(r);
                         for (std::size_t c = 0; c < sr.size(); ++c) out[c] += sr[c] * (gr[c] - dot);
                       }
                     });
}

Var log_softmax(Var z) {
  Tape& tape = z.tape();
  const Matrix& zv = z.value();
  if (zv.cols() == 0) throw DimensionError("log_softmax: matrix " + shape_string(zv) + " has no columns");
  Matrix out(zv.rows(), zv.cols());
  for (std::size_t r = 0; r < zv.rows(); ++r) {
    const auto in = zv.row(r);
    auto o = out.row(r);
    const double hi = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - hi);
    const double lse = hi + std::log(total);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  const NodeId self = tape.size();
  return tape.record("log_softmax", std::move(out), {z.id()},
                     [&tape, self](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& y = tape.value(self);
                       Matrix& gz = *grads[0];
                       for (std::size_t r = 0; r < y.rows(); ++r) {
                         const auto yr = y.row(r);
                         const auto gr = g.row(r);
                         double total = 0.0;
                         for (double v : gr) total += v;
                         auto out = gz.row(r);
                         for (std::size_t c = 0; c < yr.size(); ++c) out[c] += gr[c] - std::exp(yr[c]) * total;
                       }
                     });
}

Var elementwise(ElementwiseOp kind, Var a, const Var* b, double factor) {
  auto need_b = [&]() -> Var {
    if (b == nullptr) throw ContractError("elementwise: binary kind needs a second operand");
    return *b;
  };
  switch (kind) {
    case ElementwiseOp::add: return add(a, need_b());
    case ElementwiseOp::subtract: return sub(a, need_b());
    case ElementwiseOp::multiply: return mul(a, need_b());
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::scale: return scale(a, factor);
  }
  throw ContractError("elementwise: unknown op kind");
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record("sum", Matrix(1, 1, total), {a.id()},
                         [](const Matrix& g, std::span<Matrix* const> grads) {
                           const double gv = g(0, 0);
                           for (double& v : grads[0]->data()) v += gv;
                         });
}

Var scale_by(Var a, Var s) {
  require_same_tape(a, s, "scale_by");
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionError("scale_by: factor must be 1x1, got " + shape_string(s.value()));
  }
  return mul(a, s);
}

Var select_cols(Var a, std::vector<std::size_t> columns) {
  const Matrix& av = a.value();
  for (std::size_t c : columns) {
    if (c >= av.cols()) {
      throw IndexError("select_cols: column " + std::to_string(c) + " outside " + shape_string(av));
    }
  }
  Matrix out(av.rows(), columns.size());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t k = 0; k < columns.size(); ++k) out(r, k) = av(r, columns[k]);
  return a.tape().record("select_cols", std::move(out), {a.id()},
                         [columns = std::move(columns)](const Matrix& g, std::span<Matrix* const> grads) {
                           Matrix& ga = *grads[0];
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t k = 0; k < columns.size(); ++k) ga(r, columns[k]) += g(r, k);
                         });
}

Var place_cols(Var a, std::vector<std::size_t> columns, std::size_t total_cols) {
  const Matrix& av = a.value();
  if (columns.size() != av.cols()) {
    throw DimensionError("place_cols: " + std::to_string(columns.size()) + " targets for " +
                         shape_string(av));
  }
  for (std::size_t c : columns) {
    if (c >= total_cols) throw IndexError("place_cols: target column " + std::to_string(c) + " >= " + std::to_string(total_cols));
  }
  Matrix out(av.rows(), total_cols);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t k = 0; k < columns.size(); ++k) out(r, columns[k]) += av(r, k);
  return a.tape().record("place_cols", std::move(out), {a.id()},
                         [columns = std::move(columns)](const Matrix& g, std::span<Matrix* const> grads) {
                           Matrix& ga = *grads[0];
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t k = 0; k < columns.size(); ++k) ga(r, k) += g(r, columns[k]);
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: nothing to concatenate");
  Tape& tape = parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::vector<NodeId> ids;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().value()) +
                           " vs " + shape_string(p.value()));
    }
    ids.push_back(p.id());
    offsets.push_back(total);
    total += p.cols();
  }
  Matrix out(rows, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offsets[k]));
  }
  return tape.record("concat_cols", std::move(out), ids,
                     [offsets](const Matrix& g, std::span<Matrix* const> grads) {
                       for (std::size_t k = 0; k < grads.size(); ++k) {
                         if (!grads[k]) continue;
                         Matrix& gk = *grads[k];
                         for (std::size_t r = 0; r < gk.rows(); ++r)
                           for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
                       }
                     });
}

Var gather_rows(Var src, std::vector<std::uint32_t> index) {
  const Matrix& sv = src.value();
  Matrix out(index.size(), sv.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= sv.rows()) {
      throw IndexError("gather_rows: entry " + std::to_string(k) + " selects row " +
                       std::to_string(index[k]) + " of " + shape_string(sv));
    }
    std::copy(sv.row(index[k]).begin(), sv.row(index[k]).end(), out.row(k).begin());
  }
  return src.tape().record("gather_rows", std::move(out), {src.id()},
                           [index = std::move(index)](const Matrix& g, std::span<Matrix* const> grads) {
                             Matrix& gs = *grads[0];
                             for (std::size_t k = 0; k < index.size(); ++k) {
                               auto dst = gs.row(index[k]);
                               const auto gr = g.row(k);
                               for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c];
                             }
                           });
}

Var scatter_add_rows(Var src, std::vector<std::uint32_t> index, std::size_t out_rows) {
  const Matrix& sv = src.value();
  if (index.size() != sv.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_string(sv));
  }
  Matrix out(out_rows, sv.cols());
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] >= out_rows) {
      throw IndexError("scatter_add_rows: source row " + std::to_string(j) + " maps to " +
                       std::to_string(index[j]) + " but output has " + std::to_string(out_rows) + " rows");
    }
    auto dst = out.row(index[j]);
    const auto s = sv.row(j);
    for (std::size_t c = 0; c < s.size(); ++c) dst[c] += s[c];
  }
  return src.tape().record("scatter_add_rows", std::move(out), {src.id()},
                           [index = std::move(index)](const Matrix& g, std::span<Matrix* const> grads) {
                             Matrix& gs = *grads[0];
                             for (std::size_t j = 0; j < index.size(); ++j) {
                               auto dst = gs.row(j);
                               const auto gr = g.row(index[j]);
                               for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c];
                             }
                           });
}

Var gather_cells(Var src, std::shared_ptr<const std::vector<std::int64_t>> index, std::size_t rows,
                 std::size_t cols, double fill) {
  const Matrix& sv = src.value();
  if (index->size() != rows * cols) {
    throw DimensionError("gather_cells: " + std::to_string(index->size()) + " indices for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out(rows, cols);
  auto o = out.data();
  for (std::size_t k = 0; k < index->size(); ++k) {
    const std::int64_t at = (*index)[k];
    if (at >= static_cast<std::int64_t>(sv.size())) {
      throw IndexError("gather_cells: cell " + std::to_string(at) + " outside " + shape_string(sv));
    }
    o[k] = at < 0 ? fill : sv.data()[static_cast<std::size_t>(at)];
  }
  return src.tape().record("gather_cells", std::move(out), {src.id()},
                           [index](const Matrix& g, std::span<Matrix* const> grads) {
                             auto gs = grads[0]->data();
                             for (std::size_t k = 0; k < index->size(); ++k) {
                               const std::int64_t at = (*index)[k];
                               if (at >= 0) gs[static_cast<std::size_t>(at)] += g.data()[k];
                             }
                           });
}

Var scatter_cells(Var src, std::shared_ptr<const std::vector<std::int64_t>> index,
                  std::size_t out_rows, std::size_t out_cols) {
  const Matrix& sv = src.value();
  if (index->size() != sv.size()) {
    throw DimensionError("scatter_cells: " + std::to_string(index->size()) + " indices for " +
                         shape_string(sv));
  }
  Matrix out(out_rows, out_cols);
  auto o = out.data();
  for (std::size_t k = 0; k < index->size(); ++k) {
    const std::int64_t at = (*index)[k];
    if (at < 0) continue;
    if (at >= static_cast<std::int64_t>(o.size())) {
      throw IndexError("scatter_cells: cell " + std::to_string(at) + " outside " + shape_string(out));
    }
    o[static_cast<std::size_t>(at)] += sv.data()[k];
  }
  return src.tape().record("scatter_cells", std::move(out), {src.id()},
                           [index](const Matrix& g, std::span<Matrix* const> grads) {
                             auto gs = grads[0]->data();
                             for (std::size_t k = 0; k < index->size(); ++k) {
                               const std::int64_t at = (*index)[k];
                               if (at >= 0) gs[k] += g.data()[static_cast<std::size_t>(at)];
                             }
                           });
}

Var aggregate(Var coeff, Var h, std::shared_ptr<const EdgeIndex> edges) {
  require_same_tape(coeff, h, "aggregate");
  Tape& tape = h.tape();
  const Matrix& cv = coeff.value();
  const Matrix& hv = h.value();
  const std::size_t num_edges = edges->src.size();
  if (edges->dst.size() != num_edges || cv.rows() != num_edges || cv.cols() != 1) {
    throw DimensionError("aggregate: coefficients " + shape_string(cv) + " for " +
                         std::to_string(num_edges) + " edges");
  }
  if (hv.rows() != edges->num_nodes) {
    throw DimensionError("aggregate: features " + shape_string(hv) + " for " +
                         std::to_string(edges->num_nodes) + " nodes");
  }
  Matrix out(edges->num_nodes, hv.cols());
  for (std::size_t e = 0; e < num_edges; ++e) {
    const double w = cv(e, 0);
    const auto s = hv.row(edges->src[e]);
    auto d = out.row(edges->dst[e]);
    for (std::size_t c = 0; c < s.size(); ++c) d[c] += w * s[c];
  }
  const NodeId ic = coeff.id();
  const NodeId ih = h.id();
  return tape.record("aggregate", std::move(out), {ic, ih},
                     [&tape, ic, ih, edges](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& cv = tape.value(ic);
                       const Matrix& hv = tape.value(ih);
                       for (std::size_t e = 0; e < edges->src.size(); ++e) {
                         const auto gd = g.row(edges->dst[e]);
                         if (grads[0]) {
                           const auto s = hv.row(edges->src[e]);
                           double dot = 0.0;
                           for (std::size_t c = 0; c < s.size(); ++c) dot += s[c] * gd[c];
                           (*grads[0])(e, 0) += dot;
                         }
                         if (grads[1]) {
                           const double w = cv(e, 0);
                           auto gs = grads[1]->row(edges->src[e]);
                           for (std::size_t c = 0; c < gd.size(); ++c) gs[c] += w * gd[c];
                         }
                       }
                     });
}

Var segment_softmax(Var scores, std::shared_ptr<const EdgeIndex> edges) {
  Tape& tape = scores.tape();
  const Matrix& sv = scores.value();
  const std::size_t num_edges = edges->dst.size();
  if (sv.rows() != num_edges || sv.cols() != 1) {
    throw DimensionError("segment_softmax: scores " + shape_string(sv) + " for " +
                         std::to_string(num_edges) + " edges");
  }
  std::vector<double> hi(edges->num_nodes, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < num_edges; ++e) hi[edges->dst[e]] = std::max(hi[edges->dst[e]], sv(e, 0));
  std::vector<double> total(edges->num_nodes, 0.0);
  Matrix out(num_edges, 1);
  for (std::size_t e = 0; e < num_edges; ++e) {
    out(e, 0) = std::exp(sv(e, 0) - hi[edges->dst[e]]);
    total[edges->dst[e]] += out(e, 0);
  }
  for (std::size_t e = 0; e < num_edges; ++e) out(e, 0) /= total[edges->dst[e]];
  const NodeId self = tape.size();
  return tape.record("segment_softmax", std::move(out), {scores.id()},
                     [&tape, self, edges](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& a = tape.value(self);
                       std::vector<double> dot(edges->num_nodes, 0.0);
                       for (std::size_t e = 0; e < a.rows(); ++e) dot[edges->dst[e]] += a(e, 0) * g(e, 0);
                       Matrix& gs = *grads[0];
                       for (std::size_t e = 0; e < a.rows(); ++e)
                         gs(e, 0) += a(e, 0) * (g(e, 0) - dot[edges->dst[e]]);
                     });
}

Var batch_norm(Var x, Var gamma, Var beta, double epsilon, BatchNormStats* stats) {
  require_same_tape(x, gamma, "batch_norm");
  require_same_tape(x, beta, "batch_norm");
  Tape& tape = x.tape();
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t f = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 || beta.cols() != f) {
    throw DimensionError("batch_norm: scale " + shape_string(gamma.value()) + " / shift " +
                         shape_string(beta.value()) + " for input " + shape_string(xv));
  }
  if (n == 0) throw DimensionError("batch_norm: empty batch");

  Matrix mean(1, f);
  Matrix var(1, f);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) mean(0, c) += xv(r, c);
  for (std::size_t c = 0; c < f; ++c) mean(0, c) /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      const double d = xv(r, c) - mean(0, c);
      var(0, c) += d * d;
    }
  for (std::size_t c = 0; c < f; ++c) var(0, c) /= static_cast<double>(n);

  auto inv_std = std::make_shared<std::vector<double>>(f);
  for (std::size_t c = 0; c < f; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var(0, c) + epsilon);
  auto xhat = std::make_shared<Matrix>(n, f);
  Matrix out(n, f);
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      const double h = (xv(r, c) - mean(0, c)) * (*inv_std)[c];
      (*xhat)(r, c) = h;
      out(r, c) = gv(0, c) * h + bv(0, c);
    }
  if (stats != nullptr) *stats = BatchNormStats{mean, var};

  const NodeId ig = gamma.id();
  return tape.record("batch_norm", std::move(out), {x.id(), ig, beta.id()},
                     [&tape, ig, xhat, inv_std](const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& gv = tape.value(ig);
                       const std::size_t n = g.rows();
                       const std::size_t f = g.cols();
                       std::vector<double> sum_g(f, 0.0);
                       std::vector<double> sum_gh(f, 0.0);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < f; ++c) {
                           sum_g[c] += g(r, c);
                           sum_gh[c] += g(r, c) * (*xhat)(r, c);
                         }
                       if (grads[1])
                         for (std::size_t c = 0; c < f; ++c) (*grads[1])(0, c) += sum_gh[c];
                       if (grads[2])
                         for (std::size_t c = 0; c < f; ++c) (*grads[2])(0, c) += sum_g[c];
                       if (grads[0]) {
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t c = 0; c < f; ++c) {
                             const double k = gv(0, c) * (*inv_std)[c];
                             (*grads[0])(r, c) +=
                                 k * (g(r, c) - inv_n * sum_g[c] - (*xhat)(r, c) * inv_n * sum_gh[c]);
                           }
                       }
                     });
}

Var nll_loss(Var log_probs, std::span<const int> labels, std::span<const std::size_t> rows) {
  const Matrix& lp = log_probs.value();
  if (rows.empty()) throw ContractError("nll_loss: empty node mask");
  if (labels.size() != lp.rows()) {
    throw DimensionError("nll_loss: " + std::to_string(labels.size()) + " labels for " + shape_string(lp));
  }
  std::vector<std::size_t> picked;
  picked.reserve(rows.size());
  double total = 0.0;
  for (std::size_t r : rows) {
    if (r >= lp.rows()) throw IndexError("nll_loss: row " + std::to_string(r) + " outside " + shape_string(lp));
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= lp.cols()) {
      throw IndexError("nll_loss: label " + std::to_string(y) + " of row " + std::to_string(r) +
                       " outside " + std::to_string(lp.cols()) + " classes");
    }
    const std::size_t cell = r * lp.cols() + static_cast<std::size_t>(y);
    picked.push_back(cell);
    total -= lp.data()[cell];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  return log_probs.tape().record("nll_loss", Matrix(1, 1, total * inv), {log_probs.id()},
                                 [picked = std::move(picked), inv](const Matrix& g, std::span<Matrix* const> grads) {
                                   auto gl = grads[0]->data();
                                   for (std::size_t cell : picked) gl[cell] -= g(0, 0) * inv;
                                 });
}

Var bce_with_logits(Var z, std::span<const int> labels, std::span<const std::size_t> rows) {
  Tape& tape = z.tape();
  const Matrix& zv = z.value();
  if (rows.empty()) throw ContractError("bce_with_logits: empty node mask");
  if (labels.size() != zv.rows()) {
    throw DimensionError("bce_with_logits: " + std::to_string(labels.size()) + " labels for " + shape_string(zv));
  }
  std::vector<std::size_t> sel(rows.begin(), rows.end());
  std::vector<int> targets;
  targets.reserve(sel.size());
  double total = 0.0;
  for (std::size_t r : sel) {
    if (r >= zv.rows()) throw IndexError("bce_with_logits: row " + std::to_string(r) + " outside " + shape_string(zv));
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= zv.cols()) {
      throw IndexError("bce_with_logits: label " + std::to_string(y) + " outside class range");
    }
    targets.push_back(y);
    for (std::size_t c = 0; c < zv.cols(); ++c) {
      const double v = zv(r, c);
      const double t = static_cast<std::size_t>(y) == c ? 1.0 : 0.0;
      total += std::max(v, 0.0) - v * t + std::log1p(std::exp(-std::abs(v)));
    }
  }
  const double inv = 1.0 / static_cast<double>(sel.size() * zv.cols());
  const NodeId iz = z.id();
  return tape.record("bce_with_logits", Matrix(1, 1, total * inv), {iz},
                     [&tape, iz, sel = std::move(sel), targets = std::move(targets), inv](
                         const Matrix& g, std::span<Matrix* const> grads) {
                       const Matrix& zv = tape.value(iz);
                       Matrix& gz = *grads[0];
                       for (std::size_t k = 0; k < sel.size(); ++k) {
                         const std::size_t r = sel[k];
                         for (std::size_t c = 0; c < zv.cols(); ++c) {
                           const double t = static_cast<std::size_t>(targets[k]) == c ? 1.0 : 0.0;
                           gz(r, c) += g(0, 0) * inv * (stable_sigmoid(zv(r, c)) - t);
                         }
                       }
                     });
}

}  // namespace kegnn
