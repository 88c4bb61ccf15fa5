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

#include <cmath>

#include "doctest.h"

#include "cmdr/decoders.hpp"
#include "cmdr/error.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cmdr;
using nn::Matrix;

namespace {

decoders::Decoder2DModel random2d(Rng& rng, int channels, int& h, int& w) {
  decoders::Decoder2DConfig cfg;
  cfg.channels = channels;
  cfg.latent = gradcheck::between(rng, 2, 8);
  cfg.window = gradcheck::between(rng, 1, 3);
  cfg.mlp_hidden = gradcheck::between(rng, 0, 6);
  cfg.stages = gradcheck::between(rng, 1, 3);
  cfg.geometry = gradcheck::random_geometry(rng);
  auto m = decoders::Decoder2DModel::init(cfg, rng);
  for (auto* p : {&m.norm_beta, &m.bo, &m.mlp_b1, &m.mlp_b2})
    *p = gradcheck::randn(p->rows(), p->cols(), rng, 0.3);
  const int p = cfg.downsample();
  h = p * gradcheck::between(rng, 1, 3);
  w = p * gradcheck::between(rng, 1, 3);
  return m;
}

decoders::Decoder3DModel random3d(Rng& rng, int channels, int& h, int& w) {
  decoders::Decoder3DConfig cfg;
  cfg.channels = channels;
  cfg.latent = gradcheck::between(rng, 2, 8);
  cfg.stages = gradcheck::between(rng, 1, 3);
  cfg.gate_kernel = 2 * gradcheck::between(rng, 0, 2) + 1;
  cfg.geometry = gradcheck::random_geometry(rng);
  auto m = decoders::Decoder3DModel::init(cfg, rng);
  for (auto* p : {&m.proj_b, &m.gate1_b, &m.gate2_b})
    *p = gradcheck::randn(p->rows(), p->cols(), rng, 0.3);
  h = gradcheck::between(rng, 1, 3);
  w = cfg.downsample() * gradcheck::between(rng, 1, 3);
  return m;
}

}  // namespace

TEST_CASE("decoder output shape equals input shape over random configurations") {
  Rng rng(21);
  for (int t = 0; t < 60; ++t) {
    const int c = gradcheck::between(rng, 1, 4);
    int h = 0, w = 0;
    const auto m2 = random2d(rng, c, h, w);
    const auto x2 = gradcheck::random_features(h, w, c, rng, 0.2);
    const auto y2 = decoders::decoder2d_forward(m2, x2);
    CHECK(y2.height == h);
    CHECK(y2.width == w);
    CHECK(y2.channels == c);
    CHECK(y2.validity == x2.validity);

    const auto m3 = random3d(rng, c, h, w);
    const auto x3 = gradcheck::random_features(h, w, c, rng, 0.2);
    const auto y3 = decoders::decoder3d_forward(m3, x3);
    CHECK(y3.height == h);
    CHECK(y3.width == w);
    CHECK(y3.channels == c);
  }
}

TEST_CASE("decoders match the per-layer oracle") {
  Rng rng(22);
  for (int t = 0; t < 30; ++t) {
    const int c = gradcheck::between(rng, 1, 4);
    int h = 0, w = 0;
    const auto m2 = random2d(rng, c, h, w);
    const auto x2 = gradcheck::random_features(h, w, c, rng, 0.2);
    CHECK((nn::as_tokens(decoders::decoder2d_forward(m2, x2)) - oracle::decoder2d(m2, x2))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    const auto m3 = random3d(rng, c, h, w);
    const auto x3 = gradcheck::random_features(h, w, c, rng, 0.2);
    const auto trace = decoders::decoder3d_trace(m3, x3);
    CHECK((trace.output - oracle::decoder3d(m3, x3)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((trace.output - trace.gate.cwiseProduct(trace.residual)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("decoders ignore values at invalid input pixels") {
  Rng rng(23);
  int h = 0, w = 0;
  const auto m2 = random2d(rng, 3, h, w);
  auto x = gradcheck::random_features(h, w, 3, rng, 0.3);
  const auto base = decoders::decoder2d_forward(m2, x);
  for (std::size_t p = 0; p < x.pixels(); ++p)
    if (!x.validity[p])
      for (double& v : x.pixel(p)) v = 50.0;
  CHECK(decoders::decoder2d_forward(m2, x).values == base.values);
}

TEST_CASE("zero final stage gives a zero map") {
  Rng rng(24);
  decoders::Decoder2DConfig c2;
  c2.channels = 3;
  c2.latent = 8;
  auto m2 = decoders::Decoder2DModel::init(c2, rng);
  m2.up.back().weight.setZero();
  m2.up.back().bias.setZero();
  for (double v : decoders::decoder2d_forward(m2, gradcheck::random_features(8, 8, 3, rng, 0.1)).values)
    CHECK(v == 0.0);

  decoders::Decoder3DConfig c3;
  c3.channels = 3;
  c3.latent = 8;
  auto m3 = decoders::Decoder3DModel::init(c3, rng);
  m3.up.back().weight.setZero();
  m3.up.back().bias.setZero();
  for (double v : decoders::decoder3d_forward(m3, gradcheck::random_features(2, 8, 3, rng, 0.1)).values)
    CHECK(v == 0.0);
}

TEST_CASE("gate saturation") {
  Rng rng(25);
  decoders::Decoder3DConfig cfg;
  cfg.channels = 2;
  cfg.latent = 6;
  auto m = decoders::Decoder3DModel::init(cfg, rng);
  const auto x = gradcheck::random_features(2, 8, 2, rng, 0.0);
  m.gate2_w.setZero();
  m.gate2_b.setConstant(40.0);
  auto t = decoders::decoder3d_trace(m, x);
  CHECK((t.output - t.residual).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + t.residual.cwiseAbs().maxCoeff()));
  m.gate2_b.setConstant(-40.0);
  t = decoders::decoder3d_trace(m, x);
  CHECK(t.output.cwiseAbs().maxCoeff() < 1e-15 * (1.0 + t.residual.cwiseAbs().maxCoeff()));
}

TEST_CASE("zeroed refinement output layer makes the refinement block the identity") {
  Rng rng(26);
  for (int t = 0; t < 10; ++t) {
    int h = 0, w = 0;
    auto m = random2d(rng, 2, h, w);
    m.mlp_w2.setZero();
    m.mlp_b2.setZero();
    const auto x = gradcheck::random_features(h, w, 2, rng, 0.1);
    const auto y = decoders::decoder2d_forward(m, x);

    // Same pipeline with the refinement block removed.
    const int p = m.config.downsample(), gh = h / p, gw = w / p;
    const Matrix patches = decoders::patchify2d(oracle::masked_tokens(x), h, w, p);
    const Matrix z = oracle::layer_norm(oracle::gelu(oracle::linear(patches, m.patch_w, m.patch_b)),
                                        m.norm_gamma, m.norm_beta);
    Matrix u = z + oracle::linear(oracle::window_attention(z, gh, gw, m.config.window, m.wq, m.wk, m.wv),
                                  m.wo, m.bo);
    int sh = gh, sw = gw;
    for (std::size_t i = 0; i < m.up.size(); ++i) {
      u = oracle::conv_transpose2d(u, sh, sw, m.up[i].weight, m.up[i].bias, m.config.geometry);
      sh = m.config.geometry.output_size(sh);
      sw = m.config.geometry.output_size(sw);
      if (i + 1 < m.up.size()) u = oracle::gelu(u);
    }
    CHECK((nn::as_tokens(y) - u).cwiseAbs().maxCoeff() < 1e-10);

    m.mlp_w1 = gradcheck::randn(m.mlp_w1.rows(), m.mlp_w1.cols(), rng);
    CHECK(decoders::decoder2d_forward(m, x).values == y.values);
  }
}

TEST_CASE("patchify round trip") {
  Rng rng(27);
  const Matrix x = gradcheck::randn(8 * 12, 3, rng);
  const Matrix p = decoders::patchify2d(x, 8, 12, 4);
  CHECK(p.rows() == 6);
  CHECK(p.cols() == 48);
  CHECK(p(1, (1 * 4 + 2) * 3 + 1) == x((0 * 4 + 1) * 12 + 4 + 2, 1));
  CHECK(decoders::unpatchify2d(p, 8, 12, 4, 3) == x);
}

TEST_CASE("decoder contract violations") {
  Rng rng(28);
  decoders::Decoder2DConfig c2;
  c2.channels = 3;
  c2.latent = 4;
  const auto m2 = decoders::Decoder2DModel::init(c2, rng);
  CHECK_THROWS_AS(decoders::decoder2d_forward(m2, DenseFeatureMap(8, 8, 2)), ContractViolation);
  CHECK_THROWS_AS(decoders::decoder2d_forward(m2, DenseFeatureMap(6, 8, 3)), ContractViolation);
  decoders::Decoder3DConfig c3;
  c3.channels = 3;
  c3.latent = 4;
  const auto m3 = decoders::Decoder3DModel::init(c3, rng);
  CHECK_THROWS_AS(decoders::decoder3d_forward(m3, DenseFeatureMap(1, 6, 3)), ContractViolation);
  c2.geometry = {3, 2, 1};
  CHECK_THROWS_AS(c2.validate(), ContractViolation);
  c3.gate_kernel = 2;
  CHECK_THROWS_AS(c3.validate(), ContractViolation);
}

TEST_CASE("decoder gradients match finite differences") {
  Rng rng(29);
  for (int t = 0; t < 5; ++t) {
    CHECK(gradcheck::decoder2d(rng) < gradcheck::kTolerance);
    CHECK(gradcheck::decoder3d(rng) < gradcheck::kTolerance);
  }
}

TEST_CASE("decoders memorize a repeated map") {
  Rng rng(30);
  const auto x2 = gradcheck::random_features(16, 16, 16, rng, 0.0);
  const auto x3 = gradcheck::random_features(16, 16, 16, rng, 0.1);
  const std::vector<decoders::DecoderSample> d2(4, {x2, std::vector<std::uint8_t>(256, 1)});
  const std::vector<decoders::DecoderSample> d3(4, {x3, x3.validity});
  decoders::Decoder2DConfig c2;
  c2.channels = 16;
  decoders::Decoder3DConfig c3;
  c3.channels = 16;
  auto m2 = decoders::Decoder2DModel::init(c2, rng);
  auto m3 = decoders::Decoder3DModel::init(c3, rng);
  Rng order(31);
  const auto r2 = decoders::train_decoder(m2, d2, {}, order);
  const auto r3 = decoders::train_decoder(m3, d3, {}, order);
  REQUIRE(r2.loss_trace.size() == 50);
  CHECK(r2.loss_trace.back() < 0.01);
  CHECK(r3.loss_trace.back() < 0.01);
}

TEST_CASE("decoder training: zero epochs, all-false masks, determinism") {
  Rng rng(32);
  decoders::Decoder3DConfig cfg;
  cfg.channels = 3;
  cfg.latent = 6;
  const auto init = decoders::Decoder3DModel::init(cfg, rng);
  std::vector<decoders::DecoderSample> data;
  for (int s = 0; s < 3; ++s) {
    auto x = gradcheck::random_features(2, 8, 3, rng, 0.2);
    data.push_back({x, x.validity});
  }
  const auto same = [](const decoders::Decoder3DModel& a, const decoders::Decoder3DModel& b) {
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (*pa[i].value != *pb[i].value) return false;
    return true;
  };

  auto m = init;
  mapnet::TrainOptions zero;
  zero.epochs = 0;
  Rng o(1);
  CHECK(decoders::train_decoder(m, data, zero, o).loss_trace.empty());
  CHECK(same(m, init));

  auto empty = data;
  for (auto& s : empty) std::fill(s.mask.begin(), s.mask.end(), 0);
  mapnet::TrainOptions three;
  three.epochs = 3;
  decoders::train_decoder(m, empty, three, o);
  CHECK(same(m, init));

  auto a = init, b = init;
  Rng ra(5), rb(5);
  decoders::train_decoder(a, data, three, ra);
  decoders::train_decoder(b, data, three, rb);
  CHECK(same(a, b));
  CHECK_FALSE(same(a, init));

  CHECK_THROWS_AS(decoders::train_decoder(m, std::vector<decoders::DecoderSample>{}, three, o),
                  ContractViolation);
}
