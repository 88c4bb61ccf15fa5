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

#include "cmdr/decoders.hpp"

#include <cmath>
#include <numeric>

namespace cmdr::decoders {

namespace {

int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

UpStage init_stage(int cin, int cout, int kernel_taps, Rng& rng) {
  UpStage s;
  s.weight = nn::xavier_uniform(cin, kernel_taps * cout, cin * kernel_taps, cout * kernel_taps,
                                rng);
  s.bias = Matrix::Zero(1, cout);
  return s;
}

Matrix reshape_rows(const Matrix& m, Eigen::Index rows) {
  return Eigen::Map<const Matrix>(m.data(), rows, m.size() / rows);
}

}  // namespace

// ---------------------------------------------------------------------------
// 2D decoder

int Decoder2DConfig::downsample() const { return ipow(geometry.stride, stages); }

int Decoder2DConfig::stage_out(int i) const {
  if (i == stages - 1) return channels;
  return std::max(1, latent >> (i + 1));
}

void Decoder2DConfig::validate() const {
  CMDR_REQUIRE(channels > 0 && latent > 0, "decoder2d: channel counts must be positive");
  CMDR_REQUIRE(window >= 1, "decoder2d: window must be >= 1");
  CMDR_REQUIRE(stages >= 1, "decoder2d: at least one upsampling stage is required");
  geometry.validate();
}

Decoder2DModel Decoder2DModel::init(const Decoder2DConfig& cfg, Rng& rng) {
  cfg.validate();
  const int p = cfg.downsample();
  const int c = cfg.latent;
  const int hid = cfg.mlp_hidden > 0 ? cfg.mlp_hidden : c;
  const int in = p * p * cfg.channels;
  Decoder2DModel m;
  m.config = cfg;
  m.patch_w = nn::xavier_uniform(in, c, in, c, rng);
  m.patch_b = Matrix::Zero(1, c);
  m.norm_gamma = Matrix::Ones(1, c);
  m.norm_beta = Matrix::Zero(1, c);
  m.wq = nn::xavier_uniform(c, c, c, c, rng);
  m.wk = nn::xavier_uniform(c, c, c, c, rng);
  m.wv = nn::xavier_uniform(c, c, c, c, rng);
  m.wo = nn::xavier_uniform(c, c, c, c, rng);
  m.bo = Matrix::Zero(1, c);
  m.mlp_w1 = nn::xavier_uniform(c, hid, c, hid, rng);
  m.mlp_b1 = Matrix::Zero(1, hid);
  m.mlp_w2 = nn::xavier_uniform(hid, c, hid, c, rng);
  m.mlp_b2 = Matrix::Zero(1, c);
  const int taps = cfg.geometry.kernel * cfg.geometry.kernel;
  int cin = c;
  for (int i = 0; i < cfg.stages; ++i) {
    m.up.push_back(init_stage(cin, cfg.stage_out(i), taps, rng));
    cin = cfg.stage_out(i);
  }
  return m;
}

Decoder2DModel Decoder2DModel::zeros_like() const {
  Decoder2DModel z = *this;
  for (auto& p : z.parameters()) p.value->setZero();
  return z;
}

std::vector<nn::ParamRef> Decoder2DModel::parameters() {
  std::vector<nn::ParamRef> out{
      {"embed.weight", &patch_w},   {"embed.bias", &patch_b},
      {"embed.norm.scale", &norm_gamma}, {"embed.norm.shift", &norm_beta},
      {"attn.query", &wq},          {"attn.key", &wk},
      {"attn.value", &wv},          {"attn.out.weight", &wo},
      {"attn.out.bias", &bo},       {"mlp.fc1.weight", &mlp_w1},
      {"mlp.fc1.bias", &mlp_b1},    {"mlp.fc2.weight", &mlp_w2},
      {"mlp.fc2.bias", &mlp_b2}};
  for (std::size_t i = 0; i < up.size(); ++i) {
    out.push_back({"up" + std::to_string(i) + ".weight", &up[i].weight});
    out.push_back({"up" + std::to_string(i) + ".bias", &up[i].bias});
  }
  return out;
}

std::vector<nn::ConstParamRef> Decoder2DModel::parameters() const {
  std::vector<nn::ConstParamRef> out;
  for (const auto& p : const_cast<Decoder2DModel*>(this)->parameters())
    out.push_back({p.name, p.value});
  return out;
}

Matrix patchify2d(const Matrix& x, int h, int w, int p) {
  CMDR_REQUIRE(h % p == 0 && w % p == 0, "patchify2d: grid not divisible by patch size");
  const Eigen::Index c = x.cols();
  const int gh = h / p, gw = w / p;
  Matrix out(static_cast<Eigen::Index>(gh) * gw, p * p * c);
  for (int ty = 0; ty < gh; ++ty)
    for (int tx = 0; tx < gw; ++tx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          out.row(static_cast<Eigen::Index>(ty) * gw + tx).segment((dy * p + dx) * c, c) =
              x.row(static_cast<Eigen::Index>(ty * p + dy) * w + tx * p + dx);
  return out;
}

Matrix unpatchify2d(const Matrix& patches, int h, int w, int p, int c) {
  const int gh = h / p, gw = w / p;
  Matrix out(static_cast<Eigen::Index>(h) * w, c);
  for (int ty = 0; ty < gh; ++ty)
    for (int tx = 0; tx < gw; ++tx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          out.row(static_cast<Eigen::Index>(ty * p + dy) * w + tx * p + dx) =
              patches.row(static_cast<Eigen::Index>(ty) * gw + tx).segment((dy * p + dx) * c, c);
  return out;
}

namespace {

struct Forward2D {
  int gh = 0, gw = 0;
  Matrix patches, z0;
  nn::LayerNormCache norm;
  Matrix z;  // attention input
  nn::AttentionCache attn;
  Matrix attn_core;  // softmax(QK^T)V
  Matrix z2;         // after attention residual
  Matrix m1;         // MLP pre-activation
  Matrix g1;
  std::vector<Matrix> stage_in;   // input of each upsampling stage
  std::vector<Matrix> stage_pre;  // output of each stage before GELU
  std::vector<int> stage_h, stage_w;
  Matrix output;
};

void check_input(const Decoder2DConfig& cfg, const DenseFeatureMap& f) {
  CMDR_REQUIRE(f.channels == cfg.channels, "decoder2d: channel count does not match model");
  const int p = cfg.downsample();
  CMDR_REQUIRE(f.height % p == 0 && f.width % p == 0,
               "decoder2d: spatial dims must be divisible by the downsampling factor");
}

Forward2D run2d(const Decoder2DModel& m, const Matrix& x, int h, int w) {
  const auto& cfg = m.config;
  const int p = cfg.downsample();
  Forward2D f;
  f.gh = h / p;
  f.gw = w / p;
  f.patches = patchify2d(x, h, w, p);
  f.z0 = nn::linear(f.patches, m.patch_w, m.patch_b);
  f.z = nn::layer_norm(nn::gelu(f.z0), m.norm_gamma, m.norm_beta, &f.norm);
  const nn::WindowGrid grid{f.gh, f.gw, cfg.window};
  f.attn_core = nn::window_attention(f.z, grid, m.wq, m.wk, m.wv, &f.attn);
  f.z2 = f.z + nn::linear(f.attn_core, m.wo, m.bo);
  f.m1 = nn::linear(f.z2, m.mlp_w1, m.mlp_b1);
  f.g1 = nn::gelu(f.m1);
  Matrix u = f.z2 + nn::linear(f.g1, m.mlp_w2, m.mlp_b2);
  int sh = f.gh, sw = f.gw;
  for (std::size_t i = 0; i < m.up.size(); ++i) {
    f.stage_in.push_back(u);
    f.stage_h.push_back(sh);
    f.stage_w.push_back(sw);
    Matrix y = nn::conv_transpose2d(u, sh, sw, m.up[i].weight, m.up[i].bias, cfg.geometry);
    sh = cfg.geometry.output_size(sh);
    sw = cfg.geometry.output_size(sw);
    f.stage_pre.push_back(y);
    u = (i + 1 < m.up.size()) ? nn::gelu(y) : std::move(y);
  }
  f.output = std::move(u);
  return f;
}

Matrix masked_input(const DenseFeatureMap& features) {
  Matrix x = nn::as_tokens(features);
  for (std::size_t p = 0; p < features.pixels(); ++p)
    if (!features.validity[p]) x.row(static_cast<Eigen::Index>(p)).setZero();
  return x;
}

void backward2d(const Decoder2DModel& m, const Forward2D& f, const Matrix& dout,
                Decoder2DModel& g) {
  const auto& cfg = m.config;
  Matrix du = dout;
  for (std::size_t i = m.up.size(); i-- > 0;) {
    if (i + 1 < m.up.size()) du = nn::gelu_backward(f.stage_pre[i], du);
    du = nn::conv_transpose2d_backward(f.stage_in[i], f.stage_h[i], f.stage_w[i],
                                       m.up[i].weight, cfg.geometry, du, g.up[i].weight,
                                       g.up[i].bias);
  }
  // u = z2 + fc2(gelu(fc1(z2)))
  Matrix dz2 = du;
  Matrix dg1 = nn::linear_backward(f.g1, m.mlp_w2, du, g.mlp_w2, g.mlp_b2);
  Matrix dm1 = nn::gelu_backward(f.m1, dg1);
  dz2 += nn::linear_backward(f.z2, m.mlp_w1, dm1, g.mlp_w1, g.mlp_b1);
  // z2 = z + out(attn(z))
  Matrix dz = dz2;
  Matrix dcore = nn::linear_backward(f.attn_core, m.wo, dz2, g.wo, g.bo);
  const nn::WindowGrid grid{f.gh, f.gw, cfg.window};
  dz += nn::window_attention_backward(f.z, grid, m.wq, m.wk, m.wv, f.attn, dcore, g.wq, g.wk,
                                      g.wv);
  Matrix dg0 = nn::layer_norm_backward(f.norm, m.norm_gamma, dz, g.norm_gamma, g.norm_beta);
  Matrix dz0 = nn::gelu_backward(f.z0, dg0);
  nn::linear_backward(f.patches, m.patch_w, dz0, g.patch_w, g.patch_b);
}

}  // namespace

DenseFeatureMap decoder2d_forward(const Decoder2DModel& model, const DenseFeatureMap& features) {
  check_input(model.config, features);
  Forward2D f = run2d(model, masked_input(features), features.height, features.width);
  DenseFeatureMap out(features.height, features.width, features.channels);
  out.validity = features.validity;
  nn::as_tokens(out) = f.output;
  return out;
}

DecoderGradients<Decoder2DModel> decoder_backward(const Decoder2DModel& model,
                                                  const DenseFeatureMap& features,
                                                  std::span<const std::uint8_t> mask) {
  check_input(model.config, features);
  DecoderGradients<Decoder2DModel> out{model.zeros_like(), {}};
  const Matrix x = masked_input(features);
  Forward2D f = run2d(model, x, features.height, features.width);
  Matrix dout;
  out.loss = nn::masked_cosine_loss(f.output, x, mask, &dout);
  if (out.loss.empty_batch) return out;
  backward2d(model, f, dout, out.grads);
  return out;
}

// ---------------------------------------------------------------------------
// 3D decoder

int Decoder3DConfig::downsample() const { return ipow(geometry.stride, stages); }

int Decoder3DConfig::stage_out(int i) const {
  if (i == stages - 1) return channels;
  return std::max(1, latent >> (i + 1));
}

void Decoder3DConfig::validate() const {
  CMDR_REQUIRE(channels > 0 && latent > 0, "decoder3d: channel counts must be positive");
  CMDR_REQUIRE(stages >= 1, "decoder3d: at least one upsampling stage is required");
  CMDR_REQUIRE(gate_kernel >= 1 && gate_kernel % 2 == 1, "decoder3d: gate kernel must be odd");
  geometry.validate();
}

Decoder3DModel Decoder3DModel::init(const Decoder3DConfig& cfg, Rng& rng) {
  cfg.validate();
  const int p = cfg.downsample();
  const int in = p * cfg.channels;
  Decoder3DModel m;
  m.config = cfg;
  m.proj_w = nn::xavier_uniform(in, cfg.latent, in, cfg.latent, rng);
  m.proj_b = Matrix::Zero(1, cfg.latent);
  int cin = cfg.latent;
  for (int i = 0; i < cfg.stages; ++i) {
    m.up.push_back(init_stage(cin, cfg.stage_out(i), cfg.geometry.kernel, rng));
    cin = cfg.stage_out(i);
  }
  const int d = cfg.channels, k = cfg.gate_kernel;
  m.gate1_w = nn::xavier_uniform(k * d, d, k * d, d, rng);
  m.gate1_b = Matrix::Zero(1, d);
  m.gate2_w = nn::xavier_uniform(k * d, d, k * d, d, rng);
  m.gate2_b = Matrix::Zero(1, d);
  return m;
}

Decoder3DModel Decoder3DModel::zeros_like() const {
  Decoder3DModel z = *this;
  for (auto& p : z.parameters()) p.value->setZero();
  return z;
}

std::vector<nn::ParamRef> Decoder3DModel::parameters() {
  std::vector<nn::ParamRef> out{{"proj.weight", &proj_w}, {"proj.bias", &proj_b}};
  for (std::size_t i = 0; i < up.size(); ++i) {
    out.push_back({"up" + std::to_string(i) + ".weight", &up[i].weight});
    out.push_back({"up" + std::to_string(i) + ".bias", &up[i].bias});
  }
  out.push_back({"gate.conv1.weight", &gate1_w});
  out.push_back({"gate.conv1.bias", &gate1_b});
  out.push_back({"gate.conv2.weight", &gate2_w});
  out.push_back({"gate.conv2.bias", &gate2_b});
  return out;
}

std::vector<nn::ConstParamRef> Decoder3DModel::parameters() const {
  std::vector<nn::ConstParamRef> out;
  for (const auto& p : const_cast<Decoder3DModel*>(this)->parameters())
    out.push_back({p.name, p.value});
  return out;
}

namespace {

struct Forward3D {
  Matrix patches, z0;
  std::vector<Matrix> stage_in, stage_pre;
  Matrix residual;
  Matrix gate_pre1, gate_act1, gate_pre2, gate;
  Matrix output;
};

void check_input(const Decoder3DConfig& cfg, const DenseFeatureMap& f) {
  CMDR_REQUIRE(f.channels == cfg.channels, "decoder3d: channel count does not match model");
  CMDR_REQUIRE(f.pixels() % static_cast<std::size_t>(cfg.downsample()) == 0,
               "decoder3d: sequence length must be divisible by the downsampling factor");
}

Forward3D run3d(const Decoder3DModel& m, const Matrix& x) {
  const auto& cfg = m.config;
  const int p = cfg.downsample();
  Forward3D f;
  f.patches = reshape_rows(x, x.rows() / p);
  f.z0 = nn::linear(f.patches, m.proj_w, m.proj_b);
  Matrix u = nn::gelu(f.z0);
  for (std::size_t i = 0; i < m.up.size(); ++i) {
    f.stage_in.push_back(u);
    Matrix y = nn::conv_transpose1d(u, m.up[i].weight, m.up[i].bias, cfg.geometry);
    f.stage_pre.push_back(y);
    u = (i + 1 < m.up.size()) ? nn::gelu(y) : std::move(y);
  }
  f.residual = std::move(u);
  f.gate_pre1 = nn::conv1d_same(f.residual, m.gate1_w, m.gate1_b, cfg.gate_kernel);
  f.gate_act1 = nn::gelu(f.gate_pre1);
  f.gate_pre2 = nn::conv1d_same(f.gate_act1, m.gate2_w, m.gate2_b, cfg.gate_kernel);
  f.gate = nn::sigmoid(f.gate_pre2);
  f.output = f.gate.cwiseProduct(f.residual);
  return f;
}

void backward3d(const Decoder3DModel& m, const Forward3D& f, const Matrix& dout,
                Decoder3DModel& g) {
  const auto& cfg = m.config;
  Matrix dres = dout.cwiseProduct(f.gate);
  Matrix dgate = dout.cwiseProduct(f.residual);
  Matrix dpre2 = nn::sigmoid_backward(f.gate, dgate);
  Matrix dact1 =
      nn::conv1d_same_backward(f.gate_act1, m.gate2_w, cfg.gate_kernel, dpre2, g.gate2_w, g.gate2_b);
  Matrix dpre1 = nn::gelu_backward(f.gate_pre1, dact1);
  dres += nn::conv1d_same_backward(f.residual, m.gate1_w, cfg.gate_kernel, dpre1, g.gate1_w,
                                   g.gate1_b);
  Matrix du = std::move(dres);
  for (std::size_t i = m.up.size(); i-- > 0;) {
    if (i + 1 < m.up.size()) du = nn::gelu_backward(f.stage_pre[i], du);
    du = nn::conv_transpose1d_backward(f.stage_in[i], m.up[i].weight, cfg.geometry, du,
                                       g.up[i].weight, g.up[i].bias);
  }
  Matrix dz0 = nn::gelu_backward(f.z0, du);
  nn::linear_backward(f.patches, m.proj_w, dz0, g.proj_w, g.proj_b);
}

}  // namespace

Decoder3DTrace decoder3d_trace(const Decoder3DModel& model, const DenseFeatureMap& features) {
  check_input(model.config, features);
  Forward3D f = run3d(model, masked_input(features));
  return {std::move(f.residual), std::move(f.gate), std::move(f.output)};
}

DenseFeatureMap decoder3d_forward(const Decoder3DModel& model, const DenseFeatureMap& features) {
  check_input(model.config, features);
  Forward3D f = run3d(model, masked_input(features));
  DenseFeatureMap out(features.height, features.width, features.channels);
  out.validity = features.validity;
  nn::as_tokens(out) = f.output;
  return out;
}

DecoderGradients<Decoder3DModel> decoder_backward(const Decoder3DModel& model,
                                                  const DenseFeatureMap& features,
                                                  std::span<const std::uint8_t> mask) {
  check_input(model.config, features);
  DecoderGradients<Decoder3DModel> out{model.zeros_like(), {}};
  const Matrix x = masked_input(features);
  Forward3D f = run3d(model, x);
  Matrix dout;
  out.loss = nn::masked_cosine_loss(f.output, x, mask, &dout);
  if (out.loss.empty_batch) return out;
  backward3d(model, f, dout, out.grads);
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename Model>
mapnet::TrainResult train_impl(Model& model, std::span<const DecoderSample> data,
                               const mapnet::TrainOptions& opts, Rng& rng) {
  CMDR_REQUIRE(!data.empty(), "train_decoder: dataset is empty");
  CMDR_REQUIRE(opts.epochs >= 0, "train_decoder: epochs must be >= 0");
  mapnet::TrainResult result;
  nn::AdamState adam;
  adam.learning_rate = opts.learning_rate;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t idx : order) {
      auto g = decoder_backward(model, data[idx].features, data[idx].mask);
      if (g.loss.empty_batch) continue;
      if (!std::isfinite(g.loss.loss))
        throw Error("diverged", "non-finite decoder loss at epoch " + std::to_string(epoch));
      try {
        nn::adam_step(adam, model.parameters(), std::as_const(g.grads).parameters());
      } catch (const Error& e) {
        throw Error("diverged",
                    "decoder training epoch " + std::to_string(epoch) + ": " + e.what());
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

}  // namespace

mapnet::TrainResult train_decoder(Decoder2DModel& model, std::span<const DecoderSample> data,
                                  const mapnet::TrainOptions& opts, Rng& rng) {
  return train_impl(model, data, opts, rng);
}

mapnet::TrainResult train_decoder(Decoder3DModel& model, std::span<const DecoderSample> data,
                                  const mapnet::TrainOptions& opts, Rng& rng) {
  return train_impl(model, data, opts, rng);
}

}  // namespace cmdr::decoders
