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

#include "kegnn/model.hpp"

#include <cmath>

#include "kegnn/errors.hpp"

namespace kegnn {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "mlp") return ModelKind::mlp;
  if (text == "gcn") return ModelKind::gcn;
  if (text == "gat") return ModelKind::gat;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (expected mlp, gcn or gat)");
}

void ModelConfig::check() const {
  if (hidden_layers < 1) throw ConfigError("model.hidden_layers must be at least 1");
  if (hidden_channels < 1) throw ConfigError("model.hidden_channels must be at least 1");
  if (attention_heads < 1) throw ConfigError("model.attention_heads must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("model.dropout must lie in [0,1), got " + std::to_string(dropout));
  }
}

std::size_t ParameterStore::add(std::string name, Matrix value) {
  if (find(name)) throw ContractError("duplicate parameter '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

Matrix& ParameterStore::at(std::string_view name) {
  const auto i = find(name);
  if (!i) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return values_[*i];
}

const Matrix& ParameterStore::at(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& v : values_) total += v.size();
  return total;
}

std::vector<Var> ParameterStore::bind(Tape& tape) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(tape.variable(v));
  return out;
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

Var dropout(Var x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (double& v : mask.data()) v = rng.uniform() >= rate ? keep_scale : 0.0;
  return mul(x, x.tape().constant(std::move(mask)));
}

namespace {

void require_propagation(const Propagation& p, std::size_t rows, const char* where) {
  if (!p.index) throw ContractError(std::string(where) + ": propagation has no edge index");
  if (p.index->num_nodes != rows) {
    throw DimensionError(std::string(where) + ": input has " + std::to_string(rows) + " rows, graph has " +
                         std::to_string(p.index->num_nodes) + " nodes");
  }
}

Var propagate(Tape& tape, Var hw, const Propagation& p) {
  return aggregate(tape.constant(p.coefficients), hw, p.index);
}

GatLayerOutput attend(Var hw, Var att_src, Var att_dst, const Propagation& p, std::size_t heads, bool concat,
                      double attention_dropout, Rng* rng) {
  if (heads == 0 || hw.cols() % heads != 0) {
    throw DimensionError("gat: projected width " + std::to_string(hw.cols()) + " is not a multiple of " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t f = hw.cols() / heads;
  if (att_src.rows() != f || att_src.cols() != heads || att_dst.rows() != f || att_dst.cols() != heads) {
    throw DimensionError("gat: attention vectors " + shape_string(att_src.value()) + " / " +
                         shape_string(att_dst.value()) + " for " + std::to_string(heads) + " heads of width " +
                         std::to_string(f));
  }
  GatLayerOutput result;
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<std::size_t> cols(f);
    for (std::size_t k = 0; k < f; ++k) cols[k] = h * f + k;
    Var wh = select_cols(hw, std::move(cols));
    Var s_src = matmul(wh, select_cols(att_src, {h}));
    Var s_dst = matmul(wh, select_cols(att_dst, {h}));
    Var scores = leaky_relu(add(gather_rows(s_src, p.index->src), gather_rows(s_dst, p.index->dst)), kAttentionSlope);
    Var alpha = segment_softmax(scores, p.index);
    result.attention.push_back(alpha);
    if (rng != nullptr && attention_dropout > 0.0) alpha = dropout(alpha, attention_dropout, *rng);
    outs.push_back(aggregate(alpha, wh, p.index));
  }
  if (concat) {
    result.h = heads == 1 ? outs[0] : concat_cols(outs);
  } else {
    Var total = outs[0];
    for (std::size_t h = 1; h < heads; ++h) total = add(total, outs[h]);
    result.h = heads == 1 ? total : scale(total, 1.0 / static_cast<double>(heads));
  }
  return result;
}

}  // namespace

Var gcn_layer_forward(Var h, Var weight, const Propagation& propagation) {
  require_propagation(propagation, h.rows(), "gcn_layer_forward");
  return propagate(h.tape(), matmul(h, weight), propagation);
}

Var gcn_layer_forward(const Matrix& x, Var weight, const Propagation& propagation) {
  require_propagation(propagation, x.rows(), "gcn_layer_forward");
  return propagate(weight.tape(), matmul(x, weight), propagation);
}

GatLayerOutput gat_layer_forward(Var h, Var weight, Var att_src, Var att_dst, const Propagation& propagation,
                                 std::size_t heads, bool concat, double attention_dropout, Rng* rng) {
  require_propagation(propagation, h.rows(), "gat_layer_forward");
  return attend(matmul(h, weight), att_src, att_dst, propagation, heads, concat, attention_dropout, rng);
}

GatLayerOutput gat_layer_forward(const Matrix& x, Var weight, Var att_src, Var att_dst,
                                 const Propagation& propagation, std::size_t heads, bool concat,
                                 double attention_dropout, Rng* rng) {
  require_propagation(propagation, x.rows(), "gat_layer_forward");
  return attend(matmul(x, weight), att_src, att_dst, propagation, heads, concat, attention_dropout, rng);
}

Model::Model(const ModelConfig& config, std::size_t in_features, std::size_t num_classes, std::uint64_t seed)
    : config_(config), in_features_(in_features), num_classes_(num_classes) {
  config_.check();
  if (in_features == 0 || num_classes == 0) throw ConfigError("model needs positive input and output widths");
  Rng rng(seed);
  const bool gat = config_.kind == ModelKind::gat;
  std::size_t width = in_features;
  for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
    const bool last = l + 1 == config_.hidden_layers;
    const std::string prefix = "layer" + std::to_string(l) + ".";
    Layer layer;
    layer.heads = gat ? config_.attention_heads : 1;
    layer.concat = !last;
    const std::size_t per_head = last ? num_classes : config_.hidden_channels;
    const std::size_t projected = per_head * layer.heads;
    const std::size_t out = last ? num_classes : projected;
    layer.weight = params_.add(prefix + "weight", glorot_uniform(width, projected, rng));
    if (gat) {
      const double limit = std::sqrt(6.0 / static_cast<double>(per_head + 1));
      Matrix a_src(per_head, layer.heads), a_dst(per_head, layer.heads);
      for (double& v : a_src.data()) v = rng.uniform(-limit, limit);
      for (double& v : a_dst.data()) v = rng.uniform(-limit, limit);
      layer.att_src = params_.add(prefix + "att_src", std::move(a_src));
      layer.att_dst = params_.add(prefix + "att_dst", std::move(a_dst));
    }
    // A bias right before batch norm is cancelled by the mean subtraction.
    if (last || !config_.batch_norm) layer.bias = params_.add(prefix + "bias", Matrix(1, out));
    if (!last && config_.batch_norm) {
      layer.gamma = params_.add(prefix + "bn.gamma", Matrix(1, out, 1.0));
      layer.beta = params_.add(prefix + "bn.beta", Matrix(1, out));
      layer.running_mean = buffers_.add(prefix + "bn.running_mean", Matrix(1, out));
      layer.running_var = buffers_.add(prefix + "bn.running_var", Matrix(1, out, 1.0));
    }
    layers_.push_back(layer);
    width = out;
  }
}

Var Model::batch_norm_layer(Tape& tape, std::span<const Var> bound, const Layer& layer, Var x, Mode mode) {
  Var gamma = bound[*layer.gamma];
  Var beta = bound[*layer.beta];
  Matrix& running_mean = buffers_.value(*layer.running_mean);
  Matrix& running_var = buffers_.value(*layer.running_var);
  if (mode == Mode::train && x.rows() > 1) {
    BatchNormStats stats;
    Var out = batch_norm(x, gamma, beta, kBatchNormEpsilon, &stats);
    const double n = static_cast<double>(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      running_mean(0, c) = kBatchNormMomentum * running_mean(0, c) + (1.0 - kBatchNormMomentum) * stats.mean(0, c);
      running_var(0, c) = kBatchNormMomentum * running_var(0, c) +
                          (1.0 - kBatchNormMomentum) * stats.variance(0, c) * n / (n - 1.0);
    }
    return out;
  }
  Matrix inv_std(1, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) inv_std(0, c) = 1.0 / std::sqrt(running_var(0, c) + kBatchNormEpsilon);
  Var normalized = mul(sub(x, tape.constant(running_mean)), tape.constant(std::move(inv_std)));
  return add(mul(normalized, gamma), beta);
}

Var Model::forward(Tape& tape, std::span<const Var> bound, const Matrix& features, const Propagation* propagation,
                   Mode mode, Rng* rng) {
  if (bound.size() != params_.size()) {
    throw ContractError("model forward: " + std::to_string(bound.size()) + " bound parameters, model has " +
                        std::to_string(params_.size()));
  }
  if (features.cols() != in_features_) {
    throw DimensionError("model forward: features " + shape_string(features) + ", model expects " +
                         std::to_string(in_features_) + " columns");
  }
  if (config_.kind != ModelKind::mlp && propagation == nullptr) {
    throw ContractError("model forward: " + std::string(to_string(config_.kind)) + " needs a propagation index");
  }
  const bool training = mode == Mode::train;
  if (training && config_.dropout > 0.0 && rng == nullptr) {
    throw ContractError("model forward: training with dropout needs a random source");
  }

  std::optional<Var> h;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const bool last = l + 1 == layers_.size();
    Var w = bound[layer.weight];
    Var out;
    switch (config_.kind) {
      case ModelKind::mlp:
        out = h ? matmul(*h, w) : matmul(features, w);
        break;
      case ModelKind::gcn:
        out = h ? gcn_layer_forward(*h, w, *propagation) : gcn_layer_forward(features, w, *propagation);
        break;
      case ModelKind::gat: {
        const double att_drop = training && !last ? config_.dropout : 0.0;
        Rng* att_rng = att_drop > 0.0 ? rng : nullptr;
        Var a_src = bound[*layer.att_src];
        Var a_dst = bound[*layer.att_dst];
        out = (h ? gat_layer_forward(*h, w, a_src, a_dst, *propagation, layer.heads, layer.concat, att_drop, att_rng)
                 : gat_layer_forward(features, w, a_src, a_dst, *propagation, layer.heads, layer.concat, att_drop,
                                     att_rng))
                  .h;
        break;
      }
    }
    if (layer.bias) out = add(out, bound[*layer.bias]);
    if (!last) {
      if (layer.gamma) out = batch_norm_layer(tape, bound, layer, out, mode);
      out = relu(out);
      if (training && config_.dropout > 0.0) out = dropout(out, config_.dropout, *rng);
    }
    h = out;
  }
  return *h;
}

}  // namespace kegnn
