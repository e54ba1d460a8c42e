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

#include "kegnn/errors.hpp"
#include "kegnn/tensor.hpp"

namespace kegnn {

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, double learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("adam: learning rate must be positive, got " + std::to_string(learning_rate));
  }
  if (params.size() != grads.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_.empty()) {
    for (const Matrix* p : params) {
      state.first_.emplace_back(p->rows(), p->cols());
      state.second_.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first_.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state.first_.size()) +
                         " parameters, step given " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!state.first_[i].same_shape(*params[i]) || (grads[i] && !grads[i]->same_shape(*params[i]))) {
      throw DimensionError("adam: parameter " + std::to_string(i) + " is " + shape_string(*params[i]) +
                           ", moment " + shape_string(state.first_[i]) +
                           (grads[i] ? ", gradient " + shape_string(*grads[i]) : std::string()));
    }
  }

  ++state.step_;
  const AdamConfig& cfg = state.config_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto m = state.first_[i].data();
    auto v = state.second_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i] ? grads[i]->data()[k] : 0.0;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

double grad_check(const ScalarFunction& f, const std::vector<Matrix>& inputs, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw ContractError("grad_check: eps must lie in (0, 1e-2], got " + std::to_string(eps));
  }
  auto evaluate = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* analytic) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(xs.size());
    for (const Matrix& x : xs) leaves.push_back(tape.variable(x));
    Var out = f(tape, leaves);
    if (out.rows() != 1 || out.cols() != 1) {
      throw ContractError("grad_check: function must return a 1x1 value, got " + shape_string(out.value()));
    }
    if (analytic != nullptr) {
      tape.backward(out);
      for (const Var& leaf : leaves) analytic->push_back(leaf.grad());
    }
    return out.value()(0, 0);
  };

  std::vector<Matrix> analytic;
  evaluate(inputs, &analytic);

  double worst = 0.0;
  std::vector<Matrix> probe = inputs;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t k = 0; k < probe[i].size(); ++k) {
      const double original = probe[i].data()[k];
      probe[i].data()[k] = original + eps;
      const double up = evaluate(probe, nullptr);
      probe[i].data()[k] = original - eps;
      const double down = evaluate(probe, nullptr);
      probe[i].data()[k] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[i].data()[k];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps) {
  return grad_check([&](Tape& tape, std::span<const Var> in) { return f(tape, in[0]); },
                    std::vector<Matrix>{x}, eps);
}

}  // namespace kegnn
