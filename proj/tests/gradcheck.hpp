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

// Central finite-difference checks for every trainable layer and for the
// full mapper and decoder models. Each check draws one random instance and
// returns the largest relative error over all parameters and inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cmdr/decoders.hpp"
#include "cmdr/mapnet.hpp"
#include "cmdr/nn.hpp"

namespace cmdr::gradcheck {

using nn::Matrix;

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;
// Relative error is |a - n| / max(|a|, |n|, kFloor); below the floor the
// comparison is absolute, which keeps roundoff on near-zero entries out.
inline constexpr double kFloor = 1e-3;

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFloor});
}

inline double compare(Matrix& param, const Matrix& analytic, const std::function<double()>& loss) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + kStep;
    const double up = loss();
    param.data()[i] = saved - kStep;
    const double down = loss();
    param.data()[i] = saved;
    worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (2.0 * kStep)));
  }
  return worst;
}

inline Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline int between(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

// Projection loss sum(Y .* R) whose output gradient is R.
inline double project(const Matrix& y, const Matrix& r) { return (y.array() * r.array()).sum(); }

inline double linear(Rng& rng) {
  const int n = between(rng, 1, 6), i = between(rng, 1, 6), o = between(rng, 1, 6);
  Matrix x = randn(n, i, rng), w = randn(i, o, rng), b = randn(1, o, rng), r = randn(n, o, rng);
  Matrix dw = Matrix::Zero(i, o), db = Matrix::Zero(1, o);
  const Matrix dx = nn::linear_backward(x, w, r, dw, db);
  auto loss = [&] { return project(nn::linear(x, w, b), r); };
  return std::max({compare(x, dx, loss), compare(w, dw, loss), compare(b, db, loss)});
}

inline double gelu(Rng& rng) {
  Matrix x = randn(between(rng, 1, 5), between(rng, 1, 5), rng, 2.0);
  const Matrix r = randn(x.rows(), x.cols(), rng);
  const Matrix dx = nn::gelu_backward(x, r);
  return compare(x, dx, [&] { return project(nn::gelu(x), r); });
}

inline double sigmoid(Rng& rng) {
  Matrix x = randn(between(rng, 1, 5), between(rng, 1, 5), rng, 2.0);
  const Matrix r = randn(x.rows(), x.cols(), rng);
  const Matrix dx = nn::sigmoid_backward(nn::sigmoid(x), r);
  return compare(x, dx, [&] { return project(nn::sigmoid(x), r); });
}

inline double layer_norm(Rng& rng) {
  const int n = between(rng, 1, 5), c = between(rng, 2, 8);
  Matrix x = randn(n, c, rng), g = randn(1, c, rng), b = randn(1, c, rng), r = randn(n, c, rng);
  nn::LayerNormCache cache;
  nn::layer_norm(x, g, b, &cache);
  Matrix dg = Matrix::Zero(1, c), db = Matrix::Zero(1, c);
  const Matrix dx = nn::layer_norm_backward(cache, g, r, dg, db);
  auto loss = [&] { return project(nn::layer_norm(x, g, b, nullptr), r); };
  return std::max({compare(x, dx, loss), compare(g, dg, loss), compare(b, db, loss)});
}

inline double window_attention(Rng& rng) {
  nn::WindowGrid grid{between(rng, 1, 5), between(rng, 1, 5), between(rng, 1, 3)};
  const int n = grid.grid_h * grid.grid_w, c = between(rng, 1, 5), d = between(rng, 1, 5);
  Matrix x = randn(n, c, rng), wq = randn(c, d, rng, 0.7), wk = randn(c, d, rng, 0.7),
         wv = randn(c, d, rng), r = randn(n, d, rng);
  nn::AttentionCache cache;
  nn::window_attention(x, grid, wq, wk, wv, &cache);
  Matrix dq = Matrix::Zero(c, d), dk = Matrix::Zero(c, d), dv = Matrix::Zero(c, d);
  const Matrix dx = nn::window_attention_backward(x, grid, wq, wk, wv, cache, r, dq, dk, dv);
  auto loss = [&] { return project(nn::window_attention(x, grid, wq, wk, wv, nullptr), r); };
  return std::max({compare(x, dx, loss), compare(wq, dq, loss), compare(wk, dk, loss),
                   compare(wv, dv, loss)});
}

inline nn::ConvGeometry random_geometry(Rng& rng) {
  // kernel - stride must be even so that padding realizes the exact factor.
  const int stride = between(rng, 1, 3);
  const int pad = between(rng, 0, 2);
  return {stride + 2 * pad, stride, pad};
}

inline double conv_transpose2d(Rng& rng) {
  const nn::ConvGeometry g = random_geometry(rng);
  const int h = between(rng, 1, 4), w = between(rng, 1, 4), ci = between(rng, 1, 3),
            co = between(rng, 1, 3);
  Matrix x = randn(h * w, ci, rng), wt = randn(ci, g.kernel * g.kernel * co, rng),
         b = randn(1, co, rng);
  const Matrix r = randn(h * g.stride * w * g.stride, co, rng);
  Matrix dw = Matrix::Zero(wt.rows(), wt.cols()), db = Matrix::Zero(1, co);
  const Matrix dx = nn::conv_transpose2d_backward(x, h, w, wt, g, r, dw, db);
  auto loss = [&] { return project(nn::conv_transpose2d(x, h, w, wt, b, g), r); };
  return std::max({compare(x, dx, loss), compare(wt, dw, loss), compare(b, db, loss)});
}

inline double conv_transpose1d(Rng& rng) {
  const nn::ConvGeometry g = random_geometry(rng);
  const int n = between(rng, 1, 8), ci = between(rng, 1, 3), co = between(rng, 1, 3);
  Matrix x = randn(n, ci, rng), wt = randn(ci, g.kernel * co, rng), b = randn(1, co, rng);
  const Matrix r = randn(n * g.stride, co, rng);
  Matrix dw = Matrix::Zero(wt.rows(), wt.cols()), db = Matrix::Zero(1, co);
  const Matrix dx = nn::conv_transpose1d_backward(x, wt, g, r, dw, db);
  auto loss = [&] { return project(nn::conv_transpose1d(x, wt, b, g), r); };
  return std::max({compare(x, dx, loss), compare(wt, dw, loss), compare(b, db, loss)});
}

inline double conv1d_same(Rng& rng) {
  const int k = 2 * between(rng, 0, 2) + 1;
  const int n = between(rng, 1, 8), ci = between(rng, 1, 3), co = between(rng, 1, 3);
  Matrix x = randn(n, ci, rng), wt = randn(k * ci, co, rng), b = randn(1, co, rng);
  const Matrix r = randn(n, co, rng);
  Matrix dw = Matrix::Zero(wt.rows(), wt.cols()), db = Matrix::Zero(1, co);
  const Matrix dx = nn::conv1d_same_backward(x, wt, k, r, dw, db);
  auto loss = [&] { return project(nn::conv1d_same(x, wt, b, k), r); };
  return std::max({compare(x, dx, loss), compare(wt, dw, loss), compare(b, db, loss)});
}

inline std::vector<std::uint8_t> random_mask(std::size_t n, Rng& rng, double p_false) {
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = rng.uniform() < p_false ? 0 : 1;
  return m;
}

inline double cosine_loss(Rng& rng) {
  const int n = between(rng, 1, 8), c = between(rng, 1, 6);
  Matrix p = randn(n, c, rng);
  const Matrix t = randn(n, c, rng);
  const auto mask = random_mask(static_cast<std::size_t>(n), rng, 0.3);
  Matrix dp;
  nn::masked_cosine_loss(p, t, mask, &dp);
  return compare(p, dp, [&] { return nn::masked_cosine_loss(p, t, mask, nullptr).loss; });
}

inline DenseFeatureMap random_features(int h, int w, int c, Rng& rng, double invalid_rate) {
  DenseFeatureMap m(h, w, c);
  for (double& v : m.values) v = rng.normal();
  for (auto& v : m.validity) v = rng.uniform() < invalid_rate ? 0 : 1;
  m.zero_invalid();
  return m;
}

template <typename Model>
double compare_model(Model& model, Model& grads, const std::function<double()>& loss) {
  auto params = model.parameters();
  auto g = grads.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    worst = std::max(worst, compare(*params[i].value, *g[i].value, loss));
  return worst;
}

inline double mapper(Rng& rng) {
  mapnet::MapperConfig cfg{between(rng, 2, 6), between(rng, 2, 6), between(rng, 0, 6),
                           between(rng, 1, 2)};
  auto model = mapnet::MapperModel::init(cfg, rng);
  // Nonzero shifts so no pre-activation sits exactly at a degenerate point.
  for (auto& b : model.blocks) b.beta = randn(1, b.beta.cols(), rng, 0.3);
  const int h = between(rng, 2, 4), w = between(rng, 2, 4);
  const auto src = random_features(h, w, cfg.in_dim, rng, 0.2);
  const auto dst = random_features(h, w, cfg.out_dim, rng, 0.0);
  const auto mask = random_mask(src.pixels(), rng, 0.2);
  auto g = mapnet::mapper_backward(model, src, dst, mask);
  return compare_model(model, g.grads, [&] {
    return mapnet::masked_cosine_loss(mapnet::mapper_forward(model, src), dst, mask).loss;
  });
}

inline double decoder_loss(const DenseFeatureMap& pred, const DenseFeatureMap& input,
                           std::span<const std::uint8_t> mask) {
  DenseFeatureMap target = input;
  target.zero_invalid();
  return mapnet::masked_cosine_loss(pred, target, mask).loss;
}

inline double decoder2d(Rng& rng) {
  decoders::Decoder2DConfig cfg;
  cfg.channels = between(rng, 1, 3);
  cfg.latent = between(rng, 2, 6);
  cfg.window = between(rng, 1, 3);
  cfg.mlp_hidden = between(rng, 0, 5);
  cfg.stages = between(rng, 1, 2);
  auto model = decoders::Decoder2DModel::init(cfg, rng);
  for (auto* m : {&model.norm_beta, &model.bo, &model.mlp_b1, &model.mlp_b2})
    *m = randn(m->rows(), m->cols(), rng, 0.3);
  for (auto& s : model.up) s.bias = randn(1, s.bias.cols(), rng, 0.3);
  const int p = cfg.downsample();
  const int h = p * between(rng, 1, 3), w = p * between(rng, 1, 3);
  const auto x = random_features(h, w, cfg.channels, rng, 0.15);
  const auto mask = random_mask(x.pixels(), rng, 0.1);
  auto g = decoders::decoder_backward(model, x, mask);
  return compare_model(model, g.grads,
                       [&] { return decoder_loss(decoders::decoder2d_forward(model, x), x, mask); });
}

inline double decoder3d(Rng& rng) {
  decoders::Decoder3DConfig cfg;
  cfg.channels = between(rng, 1, 3);
  cfg.latent = between(rng, 2, 6);
  cfg.stages = between(rng, 1, 2);
  cfg.gate_kernel = 2 * between(rng, 0, 2) + 1;
  auto model = decoders::Decoder3DModel::init(cfg, rng);
  for (auto* m : {&model.proj_b, &model.gate1_b, &model.gate2_b})
    *m = randn(m->rows(), m->cols(), rng, 0.3);
  for (auto& s : model.up) s.bias = randn(1, s.bias.cols(), rng, 0.3);
  const int p = cfg.downsample();
  const int h = between(rng, 1, 3), w = p * between(rng, 1, 3);
  const auto x = random_features(h, w, cfg.channels, rng, 0.15);
  const auto mask = random_mask(x.pixels(), rng, 0.1);
  auto g = decoders::decoder_backward(model, x, mask);
  return compare_model(model, g.grads,
                       [&] { return decoder_loss(decoders::decoder3d_forward(model, x), x, mask); });
}

struct Check {
  const char* name;
  double (*run)(Rng&);
};

inline constexpr Check kAllChecks[] = {
    {"linear", linear},
    {"gelu", gelu},
    {"sigmoid", sigmoid},
    {"layer_norm", layer_norm},
    {"window_attention", window_attention},
    {"conv_transpose2d", conv_transpose2d},
    {"conv_transpose1d", conv_transpose1d},
    {"conv1d_same", conv1d_same},
    {"masked_cosine_loss", cosine_loss},
    {"mapper", mapper},
    {"decoder2d", decoder2d},
    {"decoder3d", decoder3d},
};

}  // namespace cmdr::gradcheck
