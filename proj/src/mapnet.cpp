// Copyright 2026 The CMDR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cmdr/mapnet.hpp"

#include <cmath>
#include <numeric>

namespace cmdr::mapnet {

MapperModel MapperModel::init(const MapperConfig& cfg, Rng& rng) {
  CMDR_REQUIRE(cfg.in_dim > 0 && cfg.out_dim > 0, "mapper dims must be positive");
  CMDR_REQUIRE(cfg.depth >= 1, "mapper depth must be >= 1");
  const int h = cfg.resolved_hidden();
  MapperModel m;
  m.config = cfg;
  m.w_in = nn::xavier_uniform(cfg.in_dim, h, cfg.in_dim, h, rng);
  m.b_in = Matrix::Zero(1, h);
  for (int i = 0; i < cfg.depth; ++i) {
    HiddenBlock b;
    if (i > 0) {
      b.weight = nn::xavier_uniform(h, h, h, h, rng);
      b.bias = Matrix::Zero(1, h);
    }
    b.gamma = Matrix::Ones(1, h);
    b.beta = Matrix::Zero(1, h);
    m.blocks.push_back(std::move(b));
  }
  m.w_out = nn::xavier_uniform(h, cfg.out_dim, h, cfg.out_dim, rng);
  m.b_out = Matrix::Zero(1, cfg.out_dim);
  return m;
}

MapperModel MapperModel::zeros_like() const {
  MapperModel z = *this;
  for (auto& p : z.parameters()) p.value->setZero();
  return z;
}

std::vector<nn::ParamRef> MapperModel::parameters() {
  std::vector<nn::ParamRef> out{{"input.weight", &w_in}, {"input.bias", &b_in}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    if (i > 0) {
      out.push_back({p + "weight", &blocks[i].weight});
      out.push_back({p + "bias", &blocks[i].bias});
    }
    out.push_back({p + "norm.scale", &blocks[i].gamma});
    out.push_back({p + "norm.shift", &blocks[i].beta});
  }
  out.push_back({"output.weight", &w_out});
  out.push_back({"output.bias", &b_out});
  return out;
}

std::vector<nn::ConstParamRef> MapperModel::parameters() const {
  std::vector<nn::ConstParamRef> out;
  for (const auto& p : const_cast<MapperModel*>(this)->parameters())
    out.push_back({p.name, p.value});
  return out;
}

namespace {

struct BlockCache {
  Matrix input;  // pre-activation fed to GELU
  nn::LayerNormCache norm;
  Matrix block_input;  // input to the block's linear (blocks > 0)
};

struct ForwardCache {
  Matrix x;
  std::vector<BlockCache> blocks;
  Matrix hidden;  // input to output projection
};

Matrix forward_impl(const MapperModel& m, const Matrix& x, ForwardCache* cache) {
  CMDR_REQUIRE(x.cols() == m.config.in_dim, "mapper: channel count does not match D_in");
  Matrix h = nn::linear(x, m.w_in, m.b_in);
  if (cache) {
    cache->x = x;
    cache->blocks.resize(m.blocks.size());
  }
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const HiddenBlock& b = m.blocks[i];
    if (i > 0) {
      if (cache) cache->blocks[i].block_input = h;
      h = nn::linear(h, b.weight, b.bias);
    }
    if (cache) cache->blocks[i].input = h;
    h = nn::layer_norm(nn::gelu(h), b.gamma, b.beta, cache ? &cache->blocks[i].norm : nullptr);
  }
  if (cache) cache->hidden = h;
  return nn::linear(h, m.w_out, m.b_out);
}

}  // namespace

Matrix mapper_forward_tokens(const MapperModel& model, const Matrix& x) {
  return forward_impl(model, x, nullptr);
}

DenseFeatureMap mapper_forward(const MapperModel& model, const DenseFeatureMap& features) {
  CMDR_REQUIRE(features.channels == model.config.in_dim,
               "mapper_forward: channel count does not match D_in");
  DenseFeatureMap out(features.height, features.width, model.config.out_dim);
  out.validity = features.validity;
  nn::as_tokens(out) = forward_impl(model, nn::as_tokens(features), nullptr);
  out.zero_invalid();
  return out;
}

nn::LossResult masked_cosine_loss(const DenseFeatureMap& pred, const DenseFeatureMap& target,
                                  std::span<const std::uint8_t> mask) {
  CMDR_REQUIRE(pred.same_shape(target), "masked_cosine_loss: shape mismatch");
  CMDR_REQUIRE(mask.size() == pred.pixels(), "masked_cosine_loss: mask shape mismatch");
  return nn::masked_cosine_loss(nn::as_tokens(pred), nn::as_tokens(target), mask, nullptr);
}

MapperGradients mapper_backward(const MapperModel& model, const DenseFeatureMap& features,
                                const DenseFeatureMap& target,
                                std::span<const std::uint8_t> mask) {
  CMDR_REQUIRE(features.channels == model.config.in_dim,
               "mapper_backward: channel count does not match D_in");
  CMDR_REQUIRE(target.channels == model.config.out_dim &&
                   target.height == features.height && target.width == features.width,
               "mapper_backward: target shape mismatch");
  MapperGradients out{model.zeros_like(), {}};
  ForwardCache cache;
  Matrix pred = forward_impl(model, nn::as_tokens(features), &cache);
  for (std::size_t p = 0; p < features.pixels(); ++p)
    if (!features.validity[p]) pred.row(static_cast<Eigen::Index>(p)).setZero();

  Matrix dpred;
  out.loss = nn::masked_cosine_loss(pred, nn::as_tokens(target), mask, &dpred);
  if (out.loss.empty_batch) return out;
  for (std::size_t p = 0; p < features.pixels(); ++p)
    if (!features.validity[p]) dpred.row(static_cast<Eigen::Index>(p)).setZero();

  MapperModel& g = out.grads;
  Matrix dh = nn::linear_backward(cache.hidden, model.w_out, dpred, g.w_out, g.b_out);
  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    const HiddenBlock& b = model.blocks[i];
    const BlockCache& bc = cache.blocks[i];
    dh = nn::layer_norm_backward(bc.norm, b.gamma, dh, g.blocks[i].gamma, g.blocks[i].beta);
    dh = nn::gelu_backward(bc.input, dh);
    if (i > 0)
      dh = nn::linear_backward(bc.block_input, b.weight, dh, g.blocks[i].weight,
                               g.blocks[i].bias);
  }
  nn::linear_backward(cache.x, model.w_in, dh, g.w_in, g.b_in);
  return out;
}

TrainResult train_mapper(MapperModel& model, std::span<const MapperSample> data,
                         const TrainOptions& opts, Rng& rng) {
  CMDR_REQUIRE(!data.empty(), "train_mapper: dataset is empty");
  CMDR_REQUIRE(opts.epochs >= 0, "train_mapper: epochs must be >= 0");
  TrainResult result;
  nn::AdamState adam;
  adam.learning_rate = opts.learning_rate;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t idx : order) {
      const MapperSample& s = data[idx];
      auto g = mapper_backward(model, s.source, s.target, s.mask);
      if (g.loss.empty_batch) continue;
      if (!std::isfinite(g.loss.loss))
        throw Error("diverged", "non-finite mapper loss at epoch " + std::to_string(epoch));
      try {
        nn::adam_step(adam, model.parameters(), std::as_const(g.grads).parameters());
      } catch (const Error& e) {
        throw Error("diverged", "mapper training epoch " + std::to_string(epoch) + ": " +
                                    e.what());
      }
      total += g.loss.loss;
      ++steps;
    }
    const double mean = steps == 0 ? 0.0 : total / static_cast<double>(steps);
    result.loss_trace.push_back(mean);
    if (opts.on_epoch) opts.on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace cmdr::mapnet
