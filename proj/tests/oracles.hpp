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

// Straight-line reference implementations written with explicit loops,
// used as independent oracles for the vectorized layers and models.

#pragma once

#include <cmath>
#include <vector>

#include "cmdr/decoders.hpp"
#include "cmdr/mapnet.hpp"

namespace cmdr::oracle {

using nn::Matrix;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y(x.rows(), w.cols());
  for (Eigen::Index n = 0; n < x.rows(); ++n)
    for (Eigen::Index o = 0; o < w.cols(); ++o) {
      double s = b(0, o);
      for (Eigen::Index i = 0; i < x.cols(); ++i) s += x(n, i) * w(i, o);
      y(n, o) = s;
    }
  return y;
}

inline Matrix gelu(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = gelu(x.data()[i]);
  return y;
}

inline Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b) {
  Matrix y(x.rows(), x.cols());
  const double c = static_cast<double>(x.cols());
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) mean += x(n, i);
    mean /= c;
    double var = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) var += (x(n, i) - mean) * (x(n, i) - mean);
    var /= c;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const double z = var < 1e-12 ? 0.0 : (x(n, i) - mean) / std::sqrt(var + 1e-5);
      y(n, i) = g(0, i) * z + b(0, i);
    }
  }
  return y;
}

inline Matrix window_attention(const Matrix& x, int gh, int gw, int win, const Matrix& wq,
                               const Matrix& wk, const Matrix& wv) {
  const Matrix q = linear(x, wq, Matrix::Zero(1, wq.cols()));
  const Matrix k = linear(x, wk, Matrix::Zero(1, wk.cols()));
  const Matrix v = linear(x, wv, Matrix::Zero(1, wv.cols()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  Matrix out = Matrix::Zero(x.rows(), wv.cols());
  for (int y0 = 0; y0 < gh; y0 += win)
    for (int x0 = 0; x0 < gw; x0 += win) {
      std::vector<int> tokens;
      for (int y = y0; y < std::min(gh, y0 + win); ++y)
        for (int xx = x0; xx < std::min(gw, x0 + win); ++xx) tokens.push_back(y * gw + xx);
      for (int i : tokens) {
        std::vector<double> logits;
        double mx = -1e300;
        for (int j : tokens) {
          double s = 0.0;
          for (Eigen::Index c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
          logits.push_back(s * scale);
          mx = std::max(mx, logits.back());
        }
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t t = 0; t < tokens.size(); ++t)
          for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += logits[t] / z * v(tokens[t], c);
      }
    }
  return out;
}

// Scatter definition: input (y, x) adds w[ci][ky][kx][co] * in to output
// (y*s - p + ky, x*s - p + kx) when in bounds.
inline Matrix conv_transpose2d(const Matrix& x, int h, int w, const Matrix& wt, const Matrix& b,
                               const nn::ConvGeometry& g) {
  const int ci = static_cast<int>(x.cols()), co = static_cast<int>(b.cols()), k = g.kernel;
  const int oh = g.output_size(h), ow = g.output_size(w);
  Matrix out(static_cast<Eigen::Index>(oh) * ow, co);
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = b;
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int oy = y * g.stride - g.padding + ky, ox = xx * g.stride - g.padding + kx;
          if (oy < 0 || ox < 0 || oy >= oh || ox >= ow) continue;
          for (int a = 0; a < ci; ++a)
            for (int c = 0; c < co; ++c)
              out(oy * ow + ox, c) += x(y * w + xx, a) * wt(a, (ky * k + kx) * co + c);
        }
  return out;
}

inline Matrix conv_transpose1d(const Matrix& x, const Matrix& wt, const Matrix& b,
                               const nn::ConvGeometry& g) {
  const int n = static_cast<int>(x.rows()), ci = static_cast<int>(x.cols());
  const int co = static_cast<int>(b.cols()), k = g.kernel, on = g.output_size(n);
  Matrix out(on, co);
  for (int r = 0; r < on; ++r) out.row(r) = b;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < k; ++t) {
      const int o = i * g.stride - g.padding + t;
      if (o < 0 || o >= on) continue;
      for (int a = 0; a < ci; ++a)
        for (int c = 0; c < co; ++c) out(o, c) += x(i, a) * wt(a, t * co + c);
    }
  return out;
}

inline Matrix conv1d_same(const Matrix& x, const Matrix& wt, const Matrix& b, int k) {
  const int n = static_cast<int>(x.rows()), ci = static_cast<int>(x.cols());
  const int co = static_cast<int>(b.cols()), r = k / 2;
  Matrix out(n, co);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < co; ++c) {
      double s = b(0, c);
      for (int t = 0; t < k; ++t) {
        const int j = i + t - r;
        if (j < 0 || j >= n) continue;
        for (int a = 0; a < ci; ++a) s += x(j, a) * wt(t * ci + a, c);
      }
      out(i, c) = s;
    }
  return out;
}

inline Matrix sigmoid(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  return y;
}

inline Matrix masked_tokens(const DenseFeatureMap& f) {
  Matrix x(static_cast<Eigen::Index>(f.pixels()), f.channels);
  for (std::size_t p = 0; p < f.pixels(); ++p)
    for (int c = 0; c < f.channels; ++c)
      x(static_cast<Eigen::Index>(p), c) = f.validity[p] ? f.values[p * f.channels + c] : 0.0;
  return x;
}

inline Matrix mapper(const mapnet::MapperModel& m, const DenseFeatureMap& f) {
  const Matrix x = masked_tokens(f);
  Matrix hdn = linear(x, m.w_in, m.b_in);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    if (i > 0) hdn = linear(hdn, m.blocks[i].weight, m.blocks[i].bias);
    hdn = layer_norm(gelu(hdn), m.blocks[i].gamma, m.blocks[i].beta);
  }
  Matrix y = linear(hdn, m.w_out, m.b_out);
  for (std::size_t p = 0; p < f.pixels(); ++p)
    if (!f.validity[p]) y.row(static_cast<Eigen::Index>(p)).setZero();
  return y;
}

inline Matrix decoder2d(const decoders::Decoder2DModel& m, const DenseFeatureMap& f) {
  const int p = m.config.downsample(), gh = f.height / p, gw = f.width / p, c = f.channels;
  const Matrix x = masked_tokens(f);
  Matrix patches(static_cast<Eigen::Index>(gh) * gw, p * p * c);
  for (int ty = 0; ty < gh; ++ty)
    for (int tx = 0; tx < gw; ++tx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int ch = 0; ch < c; ++ch)
            patches(ty * gw + tx, (dy * p + dx) * c + ch) = x((ty * p + dy) * f.width + tx * p + dx, ch);
  const Matrix z = layer_norm(gelu(linear(patches, m.patch_w, m.patch_b)), m.norm_gamma, m.norm_beta);
  const Matrix z2 = z + linear(window_attention(z, gh, gw, m.config.window, m.wq, m.wk, m.wv), m.wo, m.bo);
  Matrix u = z2 + linear(gelu(linear(z2, m.mlp_w1, m.mlp_b1)), m.mlp_w2, m.mlp_b2);
  int sh = gh, sw = gw;
  for (std::size_t i = 0; i < m.up.size(); ++i) {
    u = oracle::conv_transpose2d(u, sh, sw, m.up[i].weight, m.up[i].bias, m.config.geometry);
    sh = m.config.geometry.output_size(sh);
    sw = m.config.geometry.output_size(sw);
    if (i + 1 < m.up.size()) u = gelu(u);
  }
  return u;
}

inline Matrix decoder3d(const decoders::Decoder3DModel& m, const DenseFeatureMap& f) {
  const int p = m.config.downsample(), c = f.channels;
  const Matrix x = masked_tokens(f);
  const Eigen::Index n = x.rows() / p;
  Matrix patches(n, p * c);
  for (Eigen::Index t = 0; t < n; ++t)
    for (int j = 0; j < p; ++j)
      for (int ch = 0; ch < c; ++ch) patches(t, j * c + ch) = x(t * p + j, ch);
  Matrix u = gelu(linear(patches, m.proj_w, m.proj_b));
  for (std::size_t i = 0; i < m.up.size(); ++i) {
    u = oracle::conv_transpose1d(u, m.up[i].weight, m.up[i].bias, m.config.geometry);
    if (i + 1 < m.up.size()) u = gelu(u);
  }
  const int k = m.config.gate_kernel;
  const Matrix gate = sigmoid(conv1d_same(gelu(conv1d_same(u, m.gate1_w, m.gate1_b, k)), m.gate2_w, m.gate2_b, k));
  return gate.cwiseProduct(u);
}

}  // namespace cmdr::oracle
