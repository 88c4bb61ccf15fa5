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

// Cross-modal mapping networks: per-pixel MLPs predicting one modality's
// features from the other's.

#pragma once

#include <functional>
#include <vector>

#include "cmdr/nn.hpp"

namespace cmdr::mapnet {

using nn::Matrix;

struct MapperConfig {
  int in_dim = 0;
  int out_dim = 0;
  int hidden_dim = 0;  // 0 selects max(in_dim, out_dim)
  int depth = 1;       // number of GELU + LayerNorm blocks

  int resolved_hidden() const { return hidden_dim > 0 ? hidden_dim : std::max(in_dim, out_dim); }
};

struct HiddenBlock {
  // Present for every block after the first (h x h projection).
  Matrix weight, bias;
  Matrix gamma, beta;
};

// input projection -> [GELU -> LayerNorm] -> (Linear -> GELU -> LayerNorm)*
// -> output projection.
struct MapperModel {
  MapperConfig config;
  Matrix w_in, b_in;
  std::vector<HiddenBlock> blocks;
  Matrix w_out, b_out;

  static MapperModel init(const MapperConfig& cfg, Rng& rng);
  MapperModel zeros_like() const;
  std::vector<nn::ParamRef> parameters();
  std::vector<nn::ConstParamRef> parameters() const;
};

// Evaluates the mapper independently at every pixel. Pixels whose source
// feature is invalid map to the zero vector and stay invalid.
DenseFeatureMap mapper_forward(const MapperModel& model, const DenseFeatureMap& features);

// Token-level forward used by tests and the training loop.
Matrix mapper_forward_tokens(const MapperModel& model, const Matrix& x);

// Masked cosine loss between two feature maps of identical shape.
nn::LossResult masked_cosine_loss(const DenseFeatureMap& pred, const DenseFeatureMap& target,
                                  std::span<const std::uint8_t> mask);

struct MapperGradients {
  MapperModel grads;
  nn::LossResult loss;
};

// Analytic gradients of masked_cosine_loss(mapper_forward(features), target).
MapperGradients mapper_backward(const MapperModel& model, const DenseFeatureMap& features,
                                const DenseFeatureMap& target,
                                std::span<const std::uint8_t> mask);

struct MapperSample {
  DenseFeatureMap source;
  DenseFeatureMap target;
  std::vector<std::uint8_t> mask;
};

struct TrainOptions {
  int epochs = 50;
  double learning_rate = 1e-3;
  // Invoked after each epoch with (epoch index, mean loss).
  std::function<void(int, double)> on_epoch;
};

struct TrainResult {
  std::vector<double> loss_trace;
};

// Adam with batch size 1 over a seeded shuffle each epoch. Samples with an
// all-false mask are skipped without an optimizer step.
TrainResult train_mapper(MapperModel& model, std::span<const MapperSample> data,
                         const TrainOptions& opts, Rng& rng);

}  // namespace cmdr::mapnet
