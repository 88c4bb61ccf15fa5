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

#include "cmdr/nn.hpp"

#include <algorithm>
#include <cmath>

namespace cmdr::nn {

Matrix xavier_uniform(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  CMDR_REQUIRE(x.cols() == w.rows(), "linear: input width does not match weight");
  Matrix y(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw,
                       Matrix& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  Matrix dx(dy.rows(), w.rows());
  dx.noalias() = dy * w.transpose();
  return dx;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    dx.data()[i] = dy.data()[i] * (cdf + v * pdf);
  }
  return dx;
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Matrix sigmoid_backward(const Matrix& y, const Matrix& dy) {
  return dy.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  LayerNormCache* cache) {
  const Eigen::Index n = x.rows(), c = x.cols();
  CMDR_REQUIRE(gamma.cols() == c && beta.cols() == c, "layer_norm: parameter width mismatch");
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    if (var < kLayerNormDegenerate) {
      xhat.row(i).setZero();
      inv_std(i) = 0.0;
    } else {
      inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEpsilon);
      xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
    }
  }
  Matrix y = xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma,
                           const Matrix& dy, Matrix& dgamma, Matrix& dbeta) {
  const Matrix& xhat = cache.normalized;
  dgamma.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    if (cache.inv_std(i) == 0.0) {
      dx.row(i).setZero();
      continue;
    }
    const double m1 = dxhat.row(i).mean();
    const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(dy.cols());
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

std::vector<std::vector<int>> window_partition(const WindowGrid& g) {
  CMDR_REQUIRE(g.grid_h > 0 && g.grid_w > 0 && g.window > 0,
               "window_partition: invalid grid");
  std::vector<std::vector<int>> windows;
  for (int wy = 0; wy < g.grid_h; wy += g.window) {
    for (int wx = 0; wx < g.grid_w; wx += g.window) {
      std::vector<int> idx;
      for (int y = wy; y < std::min(g.grid_h, wy + g.window); ++y)
        for (int x = wx; x < std::min(g.grid_w, wx + g.window); ++x)
          idx.push_back(y * g.grid_w + x);
      windows.push_back(std::move(idx));
    }
  }
  return windows;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

Matrix window_attention(const Matrix& x, const WindowGrid& g, const Matrix& wq,
                        const Matrix& wk, const Matrix& wv, AttentionCache* cache) {
  CMDR_REQUIRE(x.rows() == static_cast<Eigen::Index>(g.grid_h) * g.grid_w,
               "window_attention: token count does not match grid");
  const Matrix q = x * wq, k = x * wk, v = x * wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  Matrix out = Matrix::Zero(x.rows(), wv.cols());
  std::vector<Matrix> probs;
  for (const auto& idx : window_partition(g)) {
    const Matrix qw = gather_rows(q, idx), kw = gather_rows(k, idx), vw = gather_rows(v, idx);
    Matrix s = (qw * kw.transpose()) * scale;
    softmax_rows(s);
    const Matrix ow = s * vw;
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) = ow.row(i);
    if (cache) probs.push_back(std::move(s));
  }
  if (cache) {
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->probs = std::move(probs);
  }
  return out;
}

Matrix window_attention_backward(const Matrix& x, const WindowGrid& g, const Matrix& wq,
                                 const Matrix& wk, const Matrix& wv,
                                 const AttentionCache& cache, const Matrix& dout,
                                 Matrix& dwq, Matrix& dwk, Matrix& dwv) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  Matrix dq = Matrix::Zero(cache.q.rows(), cache.q.cols());
  Matrix dk = Matrix::Zero(cache.k.rows(), cache.k.cols());
  Matrix dv = Matrix::Zero(cache.v.rows(), cache.v.cols());
  const auto windows = window_partition(g);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& idx = windows[w];
    const Matrix& a = cache.probs[w];
    const Matrix qw = gather_rows(cache.q, idx), kw = gather_rows(cache.k, idx),
                 vw = gather_rows(cache.v, idx), dow = gather_rows(dout, idx);
    const Matrix dvw = a.transpose() * dow;
    const Matrix da = dow * vw.transpose();
    Matrix ds(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double dot = da.row(i).dot(a.row(i));
      ds.row(i) = a.row(i).array() * (da.row(i).array() - dot);
    }
    ds *= scale;
    const Matrix dqw = ds * kw;
    const Matrix dkw = ds.transpose() * qw;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      dq.row(idx[i]) = dqw.row(i);
      dk.row(idx[i]) = dkw.row(i);
      dv.row(idx[i]) = dvw.row(i);
    }
  }
  dwq.noalias() += x.transpose() * dq;
  dwk.noalias() += x.transpose() * dk;
  dwv.noalias() += x.transpose() * dv;
  Matrix dx(x.rows(), x.cols());
  dx.noalias() = dq * wq.transpose();
  dx.noalias() += dk * wk.transpose();
  dx.noalias() += dv * wv.transpose();
  return dx;
}

void ConvGeometry::validate() const {
  CMDR_REQUIRE(stride >= 1, "conv geometry: stride must be >= 1");
  CMDR_REQUIRE(kernel >= stride, "conv geometry: kernel must be >= stride");
  CMDR_REQUIRE(padding >= 0 && kernel - stride == 2 * padding,
               "conv geometry: padding must equal (kernel - stride) / 2 for exact upsampling");
}

Matrix conv_transpose2d(const Matrix& x, int h, int w, const Matrix& weight,
                        const Matrix& bias, const ConvGeometry& g) {
  g.validate();
  CMDR_REQUIRE(x.rows() == static_cast<Eigen::Index>(h) * w,
               "conv_transpose2d: token count does not match grid");
  CMDR_REQUIRE(weight.rows() == x.cols(), "conv_transpose2d: weight rows must equal C_in");
  const int k = g.kernel;
  const Eigen::Index cout = bias.cols();
  CMDR_REQUIRE(weight.cols() == k * k * cout, "conv_transpose2d: weight shape mismatch");
  const int oh = g.output_size(h), ow = g.output_size(w);
  Matrix cols(x.rows(), weight.cols());
  cols.noalias() = x * weight;
  Matrix out(static_cast<Eigen::Index>(oh) * ow, cout);
  out.rowwise() = bias.row(0);
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      const Eigen::Index i = static_cast<Eigen::Index>(iy) * w + ix;
      for (int ky = 0; ky < k; ++ky) {
        const int oy = iy * g.stride - g.padding + ky;
        if (oy < 0 || oy >= oh) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ox = ix * g.stride - g.padding + kx;
          if (ox < 0 || ox >= ow) continue;
          out.row(static_cast<Eigen::Index>(oy) * ow + ox) +=
              cols.row(i).segment((ky * k + kx) * cout, cout);
        }
      }
    }
  }
  return out;
}

Matrix conv_transpose2d_backward(const Matrix& x, int h, int w, const Matrix& weight,
                                 const ConvGeometry& g, const Matrix& dy, Matrix& dweight,
                                 Matrix& dbias) {
  const int k = g.kernel;
  const Eigen::Index cout = dy.cols();
  const int oh = g.output_size(h), ow = g.output_size(w);
  Matrix dcols = Matrix::Zero(x.rows(), weight.cols());
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      const Eigen::Index i = static_cast<Eigen::Index>(iy) * w + ix;
      for (int ky = 0; ky < k; ++ky) {
        const int oy = iy * g.stride - g.padding + ky;
        if (oy < 0 || oy >= oh) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ox = ix * g.stride - g.padding + kx;
          if (ox < 0 || ox >= ow) continue;
          dcols.row(i).segment((ky * k + kx) * cout, cout) =
              dy.row(static_cast<Eigen::Index>(oy) * ow + ox);
        }
      }
    }
  }
  dweight.noalias() += x.transpose() * dcols;
  dbias.row(0) += dy.colwise().sum();
  Matrix dx(x.rows(), x.cols());
  dx.noalias() = dcols * weight.transpose();
  return dx;
}

Matrix conv_transpose1d(const Matrix& x, const Matrix& weight, const Matrix& bias,
                        const ConvGeometry& g) {
  g.validate();
  CMDR_REQUIRE(weight.rows() == x.cols(), "conv_transpose1d: weight rows must equal C_in");
  const int k = g.kernel;
  const Eigen::Index cout = bias.cols();
  CMDR_REQUIRE(weight.cols() == k * cout, "conv_transpose1d: weight shape mismatch");
  const int len = static_cast<int>(x.rows());
  const int olen = g.output_size(len);
  Matrix cols(x.rows(), weight.cols());
  cols.noalias() = x * weight;
  Matrix out(olen, cout);
  out.rowwise() = bias.row(0);
  for (int i = 0; i < len; ++i) {
    for (int t = 0; t < k; ++t) {
      const int o = i * g.stride - g.padding + t;
      if (o < 0 || o >= olen) continue;
      out.row(o) += cols.row(i).segment(t * cout, cout);
    }
  }
  return out;
}

Matrix conv_transpose1d_backward(const Matrix& x, const Matrix& weight,
                                 const ConvGeometry& g, const Matrix& dy, Matrix& dweight,
                                 Matrix& dbias) {
  const int k = g.kernel;
  const Eigen::Index cout = dy.cols();
  const int len = static_cast<int>(x.rows());
  const int olen = g.output_size(len);
  Matrix dcols = Matrix::Zero(x.rows(), weight.cols());
  for (int i = 0; i < len; ++i) {
    for (int t = 0; t < k; ++t) {
      const int o = i * g.stride - g.padding + t;
      if (o < 0 || o >= olen) continue;
      dcols.row(i).segment(t * cout, cout) = dy.row(o);
    }
  }
  dweight.noalias() += x.transpose() * dcols;
  dbias.row(0) += dy.colwise().sum();
  Matrix dx(x.rows(), x.cols());
  dx.noalias() = dcols * weight.transpose();
  return dx;
}

namespace {

Matrix im2col_same(const Matrix& x, int kernel) {
  const Eigen::Index len = x.rows(), cin = x.cols();
  const int half = kernel / 2;
  Matrix cols = Matrix::Zero(len, kernel * cin);
  for (Eigen::Index l = 0; l < len; ++l) {
    for (int t = 0; t < kernel; ++t) {
      const Eigen::Index src = l + t - half;
      if (src < 0 || src >= len) continue;
      cols.row(l).segment(t * cin, cin) = x.row(src);
    }
  }
  return cols;
}

}  // namespace

Matrix conv1d_same(const Matrix& x, const Matrix& weight, const Matrix& bias, int kernel) {
  CMDR_REQUIRE(kernel >= 1 && kernel % 2 == 1, "conv1d_same: kernel must be odd");
  CMDR_REQUIRE(weight.rows() == kernel * x.cols(), "conv1d_same: weight shape mismatch");
  Matrix y(x.rows(), weight.cols());
  y.noalias() = im2col_same(x, kernel) * weight;
  y.rowwise() += bias.row(0);
  return y;
}

Matrix conv1d_same_backward(const Matrix& x, const Matrix& weight, int kernel,
                            const Matrix& dy, Matrix& dweight, Matrix& dbias) {
  const Eigen::Index len = x.rows(), cin = x.cols();
  const int half = kernel / 2;
  dweight.noalias() += im2col_same(x, kernel).transpose() * dy;
  dbias.row(0) += dy.colwise().sum();
  Matrix dcols(len, weight.rows());
  dcols.noalias() = dy * weight.transpose();
  Matrix dx = Matrix::Zero(len, cin);
  for (Eigen::Index l = 0; l < len; ++l) {
    for (int t = 0; t < kernel; ++t) {
      const Eigen::Index src = l + t - half;
      if (src < 0 || src >= len) continue;
      dx.row(src) += dcols.row(l).segment(t * cin, cin);
    }
  }
  return dx;
}

LossResult masked_cosine_loss(const Matrix& pred, const Matrix& target,
                              std::span<const std::uint8_t> mask, Matrix* dpred) {
  CMDR_REQUIRE(pred.rows() == target.rows() && pred.cols() == target.cols(),
               "masked_cosine_loss: prediction and target shapes differ");
  CMDR_REQUIRE(mask.size() == static_cast<std::size_t>(pred.rows()),
               "masked_cosine_loss: mask size does not match pixel count");
  LossResult r;
  if (dpred) dpred->setZero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    if (mask[i]) ++r.count;
  if (r.count == 0) return r;
  r.empty_batch = false;
  const double inv_n = 1.0 / static_cast<double>(r.count);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!mask[i]) continue;
    const double np = pred.row(i).norm();
    const double nt = target.row(i).norm();
    if (np < kNormEpsilon || nt < kNormEpsilon) {
      total += 1.0;
      continue;
    }
    const double dot = pred.row(i).dot(target.row(i));
    const double cos = dot / (np * nt);
    total += 1.0 - cos;
    if (dpred) {
      // d(1 - cos)/dp = -(t / (|p||t|) - cos * p / |p|^2)
      dpred->row(i) = -inv_n * (target.row(i) / (np * nt) - cos * pred.row(i) / (np * np));
    }
  }
  r.loss = total * inv_n;
  return r;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void adam_step(AdamState& state, std::span<const ParamRef> params,
               std::span<const ConstParamRef> grads) {
  CMDR_REQUIRE(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      state.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  CMDR_REQUIRE(state.first_moment.size() == params.size(),
               "adam_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    CMDR_REQUIRE(params[i].value->rows() == grads[i].value->rows() &&
                     params[i].value->cols() == grads[i].value->cols() &&
                     state.first_moment[i].rows() == params[i].value->rows() &&
                     state.first_moment[i].cols() == params[i].value->cols(),
                 "adam_step: shape mismatch for " + params[i].name);
    if (!grads[i].value->allFinite())
      throw Error("diverged", "non-finite gradient for " + params[i].name);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = *grads[i].value;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    Matrix& p = *params[i].value;
    p.array() -= state.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + state.epsilon);
    if (!p.allFinite())
      throw Error("diverged", "non-finite parameter after update: " + params[i].name);
  }
}

}  // namespace cmdr::nn
