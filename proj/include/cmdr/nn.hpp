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

// Small dense neural-network toolkit with hand-written backward passes.
//
// Activations are token matrices: one row per spatial position (row-major
// over the grid or sequence), one column per channel. Every backward
// function takes the cached forward quantities it needs and accumulates
// parameter gradients into caller-owned matrices.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmdr/numcore.hpp"

namespace cmdr::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamRef {
  std::string name;
  Matrix* value;
};

struct ConstParamRef {
  std::string name;
  const Matrix* value;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(int rows, int cols, int fan_in, int fan_out, Rng& rng);

// y = x W + b, W is in x out, b is 1 x out.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b);
// Accumulates dW and db; returns dx.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw,
                       Matrix& db);

// Exact (erf) GELU.
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

Matrix sigmoid(const Matrix& x);
Matrix sigmoid_backward(const Matrix& y, const Matrix& dy);

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kLayerNormDegenerate = 1e-12;

struct LayerNormCache {
  Matrix normalized;
  Eigen::VectorXd inv_std;  // 0 for degenerate rows
};

// Row-wise layer norm with learned scale/shift (1 x C each). Rows whose
// variance is below kLayerNormDegenerate normalize to the zero vector.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  LayerNormCache* cache);
Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma,
                           const Matrix& dy, Matrix& dgamma, Matrix& dbeta);

// Single-head softmax attention restricted to non-overlapping win x win
// windows of a grid_h x grid_w token grid (edge windows are clipped).
struct WindowGrid {
  int grid_h;
  int grid_w;
  int window;
};

struct AttentionCache {
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one per window
};

std::vector<std::vector<int>> window_partition(const WindowGrid& g);

// Returns softmax(Q K^T / sqrt(d)) V per window, with Q = x Wq etc.
Matrix window_attention(const Matrix& x, const WindowGrid& g, const Matrix& wq,
                        const Matrix& wk, const Matrix& wv, AttentionCache* cache);
Matrix window_attention_backward(const Matrix& x, const WindowGrid& g, const Matrix& wq,
                                 const Matrix& wk, const Matrix& wv,
                                 const AttentionCache& cache, const Matrix& dout,
                                 Matrix& dwq, Matrix& dwk, Matrix& dwv);

struct ConvGeometry {
  int kernel = 4;
  int stride = 2;
  int padding = 1;

  int output_size(int in) const { return (in - 1) * stride - 2 * padding + kernel; }
  // Throws unless kernel >= stride >= 1 and output == in * stride.
  void validate() const;
};

// Transposed 2D convolution on an h x w grid. Weight is C_in x (k*k*C_out)
// laid out as [c_in][ky][kx][c_out]; bias is 1 x C_out.
Matrix conv_transpose2d(const Matrix& x, int h, int w, const Matrix& weight,
                        const Matrix& bias, const ConvGeometry& g);
Matrix conv_transpose2d_backward(const Matrix& x, int h, int w, const Matrix& weight,
                                 const ConvGeometry& g, const Matrix& dy, Matrix& dweight,
                                 Matrix& dbias);

// Transposed 1D convolution over a sequence. Weight is C_in x (k*C_out).
Matrix conv_transpose1d(const Matrix& x, const Matrix& weight, const Matrix& bias,
                        const ConvGeometry& g);
Matrix conv_transpose1d_backward(const Matrix& x, const Matrix& weight,
                                 const ConvGeometry& g, const Matrix& dy, Matrix& dweight,
                                 Matrix& dbias);

// Stride-1 1D convolution with zero "same" padding. Weight is
// (k*C_in) x C_out laid out as [tap][c_in]; kernel must be odd.
Matrix conv1d_same(const Matrix& x, const Matrix& weight, const Matrix& bias, int kernel);
Matrix conv1d_same_backward(const Matrix& x, const Matrix& weight, int kernel,
                            const Matrix& dy, Matrix& dweight, Matrix& dbias);

struct LossResult {
  double loss = 0.0;
  std::size_t count = 0;
  bool empty_batch = true;
};

// Mean over mask-true rows of 1 - cos(pred_row, target_row). A row with a
// near-zero vector has cos := 0 and contributes zero gradient. When `dpred`
// is given it receives d(loss)/d(pred); masked-out rows get exact zeros.
LossResult masked_cosine_loss(const Matrix& pred, const Matrix& target,
                              std::span<const std::uint8_t> mask, Matrix* dpred);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// Bias-corrected Adam. Throws Error("diverged") on a non-finite gradient.
void adam_step(AdamState& state, std::span<const ParamRef> params,
               std::span<const ConstParamRef> grads);

// Views a feature map's values as a pixels x channels matrix.
inline Eigen::Map<const Matrix> as_tokens(const DenseFeatureMap& m) {
  return {m.values.data(), static_cast<Eigen::Index>(m.pixels()), m.channels};
}
inline Eigen::Map<Matrix> as_tokens(DenseFeatureMap& m) {
  return {m.values.data(), static_cast<Eigen::Index>(m.pixels()), m.channels};
}

bool all_finite(const Matrix& m);

}  // namespace cmdr::nn
