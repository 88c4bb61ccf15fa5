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

// Modality-specific reconstruction branches.
//
// Decoder2D: patch embedding (linear + GELU + LayerNorm) down to a latent
// grid, windowed single-head attention with a residual, an MLP refinement
// with a residual, then transposed 2D convolutions back to full resolution.
//
// Decoder3D: the grid is flattened row-major into a sequence; a patch
// projection (linear + GELU) shortens it, transposed 1D convolutions restore
// its length, and a gating block (conv1d -> GELU -> conv1d -> sigmoid)
// produces a mask that multiplies the upsampled residual pathway.

#pragma once

#include <functional>
#include <vector>

#include "cmdr/mapnet.hpp"
#include "cmdr/nn.hpp"

namespace cmdr::decoders {

using nn::Matrix;

struct UpStage {
  Matrix weight, bias;
};

struct Decoder2DConfig {
  int channels = 0;
  int latent = 128;
  int window = 4;
  int mlp_hidden = 0;  // 0 selects latent
  int stages = 2;
  nn::ConvGeometry geometry{};

  int downsample() const;
  int stage_out(int i) const;  // output channels of upsampling stage i
  void validate() const;
};

struct Decoder2DModel {
  Decoder2DConfig config;
  Matrix patch_w, patch_b, norm_gamma, norm_beta;
  Matrix wq, wk, wv, wo, bo;
  Matrix mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::vector<UpStage> up;

  static Decoder2DModel init(const Decoder2DConfig& cfg, Rng& rng);
  Decoder2DModel zeros_like() const;
  std::vector<nn::ParamRef> parameters();
  std::vector<nn::ConstParamRef> parameters() const;
};

struct Decoder3DConfig {
  int channels = 0;
  int latent = 128;
  int stages = 2;
  int gate_kernel = 3;
  nn::ConvGeometry geometry{};

  int downsample() const;
  int stage_out(int i) const;
  void validate() const;
};

struct Decoder3DModel {
  Decoder3DConfig config;
  Matrix proj_w, proj_b;
  std::vector<UpStage> up;
  Matrix gate1_w, gate1_b, gate2_w, gate2_b;

  static Decoder3DModel init(const Decoder3DConfig& cfg, Rng& rng);
  Decoder3DModel zeros_like() const;
  std::vector<nn::ParamRef> parameters();
  std::vector<nn::ConstParamRef> parameters() const;
};

// Reconstructs the input map. Invalid input pixels are zeroed before
// decoding; validity is passed through unchanged.
DenseFeatureMap decoder2d_forward(const Decoder2DModel& model, const DenseFeatureMap& features);
DenseFeatureMap decoder3d_forward(const Decoder3DModel& model, const DenseFeatureMap& features);

// Intermediate quantities of the 3D decoder, exposed for inspection.
struct Decoder3DTrace {
  Matrix residual;  // upsampled pathway
  Matrix gate;      // sigmoid mask
  Matrix output;
};
Decoder3DTrace decoder3d_trace(const Decoder3DModel& model, const DenseFeatureMap& features);

template <typename Model>
struct DecoderGradients {
  Model grads;
  nn::LossResult loss;
};

// Gradients of masked_cosine_loss(decoder(features), features, mask).
DecoderGradients<Decoder2DModel> decoder_backward(const Decoder2DModel& model,
                                                  const DenseFeatureMap& features,
                                                  std::span<const std::uint8_t> mask);
DecoderGradients<Decoder3DModel> decoder_backward(const Decoder3DModel& model,
                                                  const DenseFeatureMap& features,
                                                  std::span<const std::uint8_t> mask);

struct DecoderSample {
  DenseFeatureMap features;
  std::vector<std::uint8_t> mask;
};

mapnet::TrainResult train_decoder(Decoder2DModel& model, std::span<const DecoderSample> data,
                                  const mapnet::TrainOptions& opts, Rng& rng);
mapnet::TrainResult train_decoder(Decoder3DModel& model, std::span<const DecoderSample> data,
                                  const mapnet::TrainOptions& opts, Rng& rng);

// Gathers p x p patches of an H x W grid into (H/p * W/p) x (p*p*C) tokens,
// patch element order (dy, dx, c).
Matrix patchify2d(const Matrix& x, int h, int w, int p);
Matrix unpatchify2d(const Matrix& patches, int h, int w, int p, int c);

}  // namespace cmdr::decoders
