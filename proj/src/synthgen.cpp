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

#include "cmdr/synthgen.hpp"

#include <algorithm>
#include <cmath>

namespace cmdr::synthgen {

DefectMode parse_defect_mode(std::string_view name) {
  if (name == "appearance") return DefectMode::kAppearance;
  if (name == "geometry") return DefectMode::kGeometry;
  if (name == "cross" || name == "cross-modal") return DefectMode::kCrossModal;
  throw ContractViolation("unknown defect mode '" + std::string(name) + "'");
}

std::string_view defect_mode_name(DefectMode m) {
  switch (m) {
    case DefectMode::kAppearance: return "appearance";
    case DefectMode::kGeometry: return "geometry";
    case DefectMode::kCrossModal: return "cross";
  }
  return "?";
}

void SynthConfig::validate() const {
  CMDR_REQUIRE(height > 0 && width > 0, "synth: grid must be positive");
  CMDR_REQUIRE(dim_2d > 0 && dim_3d > 0 && latent_factors > 0, "synth: dims must be positive");
  CMDR_REQUIRE(dropout >= 0.0 && dropout < 1.0, "synth: dropout must lie in [0, 1)");
  CMDR_REQUIRE(defect_count_min >= 0 && defect_count_max >= defect_count_min,
               "synth: invalid defect count range");
  CMDR_REQUIRE(radius_min > 0 && radius_max >= radius_min, "synth: invalid radius range");
  CMDR_REQUIRE(2.0 * radius_max + 1.0 <= std::min(height, width),
               "synth: defect radius does not fit in the grid");
  CMDR_REQUIRE(!modes.empty(), "synth: at least one defect mode is required");
}

double Ellipse::radius(int y, int x) const {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (dx * c + dy * s) / a;
  const double v = (-dx * s + dy * c) / b;
  return std::sqrt(u * u + v * v);
}

bool Ellipse::contains(int y, int x) const {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (dx * c + dy * s) / a;
  const double v = (-dx * s + dy * c) / b;
  return u * u + v * v <= 1.0;
}

std::vector<std::uint8_t> rasterize(const std::vector<Ellipse>& ellipses, int height, int width) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
  for (const auto& e : ellipses)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (e.contains(y, x)) mask[static_cast<std::size_t>(y) * width + x] = 1;
  return mask;
}

std::vector<double> smooth_field(int height, int width, double sigma, Rng& rng) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    kernel[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + r];
  }
  double sq = 0.0;
  for (double& k : kernel) {
    k /= sum;
    sq += k * k;
  }
  // Filtered unit white noise has variance (sum k^2)^2; rescale to 1.
  const double gain = 1.0 / sq;

  const int ph = height + 2 * r, pw = width + 2 * r;
  std::vector<double> noise(static_cast<std::size_t>(ph) * pw);
  for (double& v : noise) v = rng.normal();
  std::vector<double> rows(static_cast<std::size_t>(ph) * width, 0.0);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (int k = 0; k <= 2 * r; ++k) s += kernel[k] * noise[static_cast<std::size_t>(y) * pw + x + k];
      rows[static_cast<std::size_t>(y) * width + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(height) * width, 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (int k = 0; k <= 2 * r; ++k) s += kernel[k] * rows[static_cast<std::size_t>(y + k) * width + x];
      out[static_cast<std::size_t>(y) * width + x] = s * gain;
    }
  return out;
}

namespace {

struct ModalityMaps {
  std::vector<double> a2, a3;  // K x D row-major
  std::vector<double> m2, m3;
};

ModalityMaps dataset_maps(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "synth/modality-maps"));
  ModalityMaps maps;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_factors));
  auto fill = [&](std::vector<double>& v, std::size_t n, double s) {
    v.resize(n);
    for (double& x : v) x = s * rng.normal();
  };
  fill(maps.a2, static_cast<std::size_t>(cfg.latent_factors) * cfg.dim_2d, scale);
  fill(maps.a3, static_cast<std::size_t>(cfg.latent_factors) * cfg.dim_3d, scale);
  fill(maps.m2, cfg.dim_2d, cfg.offset);
  fill(maps.m3, cfg.dim_3d, cfg.offset);
  return maps;
}

using Fields = std::vector<std::vector<double>>;

Fields draw_latents(const SynthConfig& cfg, Rng& rng) {
  Fields z;
  for (int k = 0; k < cfg.latent_factors; ++k)
    z.push_back(smooth_field(cfg.height, cfg.width, cfg.smoothing_sigma, rng));
  return z;
}

// Writes A^T z(p) + mean into the pixel's feature vector (noise added by caller).
void project(const Fields& z, std::size_t p, const std::vector<double>& a,
             const std::vector<double>& mean, std::span<double> out) {
  const std::size_t d = out.size();
  for (std::size_t c = 0; c < d; ++c) out[c] = mean[c];
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double zk = z[k][p];
    for (std::size_t c = 0; c < d; ++c) out[c] += zk * a[k * d + c];
  }
}

Sample nominal_with_latents(const SynthConfig& cfg, Rng& rng, const ModalityMaps& maps,
                            Fields& latents, std::vector<double>& noise2,
                            std::vector<double>& noise3) {
  latents = draw_latents(cfg, rng);
  Sample s;
  s.f2 = DenseFeatureMap(cfg.height, cfg.width, cfg.dim_2d);
  s.f3 = DenseFeatureMap(cfg.height, cfg.width, cfg.dim_3d);
  noise2.resize(s.f2.values.size());
  noise3.resize(s.f3.values.size());
  for (double& v : noise2) v = cfg.noise * rng.normal();
  for (double& v : noise3) v = cfg.noise * rng.normal();
  for (std::size_t p = 0; p < s.f2.pixels(); ++p) {
    project(latents, p, maps.a2, maps.m2, s.f2.pixel(p));
    project(latents, p, maps.a3, maps.m3, s.f3.pixel(p));
  }
  for (std::size_t i = 0; i < noise2.size(); ++i) s.f2.values[i] += noise2[i];
  for (std::size_t i = 0; i < noise3.size(); ++i) s.f3.values[i] += noise3[i];
  for (auto& v : s.f3.validity) v = rng.uniform() < cfg.dropout ? 0 : 1;
  s.f3.zero_invalid();
  s.gt_mask.assign(s.f2.pixels(), 0);
  return s;
}

std::vector<double> random_unit(int d, Rng& rng) {
  std::vector<double> u(d);
  double n = 0.0;
  for (double& v : u) {
    v = rng.normal();
    n += v * v;
  }
  n = std::sqrt(n);
  for (double& v : u) v /= n;
  return u;
}

}  // namespace

Sample gen_nominal(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const ModalityMaps maps = dataset_maps(cfg);
  Fields z;
  std::vector<double> n2, n3;
  return nominal_with_latents(cfg, rng, maps, z, n2, n3);
}

Sample gen_anomalous(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const ModalityMaps maps = dataset_maps(cfg);
  Fields z;
  std::vector<double> n2, n3;
  Sample s = nominal_with_latents(cfg, rng, maps, z, n2, n3);

  // A fixed count draws nothing, so zero regions leaves the stream in step
  // with gen_nominal.
  const int spread = cfg.defect_count_max - cfg.defect_count_min;
  const int n_regions =
      cfg.defect_count_min +
      (spread > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(spread + 1))) : 0);
  if (n_regions == 0) return s;
  s.anomalous = true;
  s.mode = cfg.modes[rng.below(cfg.modes.size())];

  std::vector<Ellipse> regions;
  for (int i = 0; i < n_regions; ++i) {
    Ellipse e;
    e.a = rng.uniform(cfg.radius_min, cfg.radius_max);
    e.b = rng.uniform(cfg.radius_min, cfg.radius_max);
    e.angle = rng.uniform(0.0, M_PI);
    const double r = std::max(e.a, e.b);
    e.cy = rng.uniform(r, cfg.height - 1 - r);
    e.cx = rng.uniform(r, cfg.width - 1 - r);
    regions.push_back(e);
  }
  s.gt_mask = rasterize(regions, cfg.height, cfg.width);
  s.regions = regions;
  const double intensity = rng.uniform(cfg.intensity_min, cfg.intensity_max);

  switch (s.mode) {
    case DefectMode::kAppearance:
    case DefectMode::kGeometry: {
      DenseFeatureMap& f = s.mode == DefectMode::kAppearance ? s.f2 : s.f3;
      const double magnitude = intensity * std::sqrt(static_cast<double>(f.channels));
      for (const auto& e : regions) {
        const auto u = random_unit(f.channels, rng);
        for (int y = 0; y < f.height; ++y)
          for (int x = 0; x < f.width; ++x) {
            if (!e.contains(y, x) || !f.valid(y, x)) continue;
            auto v = f.at(y, x);
            for (int c = 0; c < f.channels; ++c) v[c] += magnitude * u[c];
          }
      }
      break;
    }
    case DefectMode::kCrossModal: {
      // Rotate each modality's latents toward an independent redraw. The
      // rotation keeps every latent's marginal variance at 1, and its angle
      // falls off smoothly to 0 at the region boundary so both fields stay
      // smooth.
      const Fields z2 = draw_latents(cfg, rng);
      const Fields z3 = draw_latents(cfg, rng);
      const double theta_max = std::clamp(intensity, 0.0, 1.0) * M_PI / 2.0;
      Fields mixed2 = z, mixed3 = z;
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
          double weight = 0.0;
          for (const auto& e : regions) {
            const double rho = e.radius(y, x);
            if (rho <= 1.0) weight = std::max(weight, std::pow(std::cos(0.5 * M_PI * rho), 2));
          }
          if (weight == 0.0) continue;
          const double theta = weight * theta_max;
          const double c = std::cos(theta), sn = std::sin(theta);
          const std::size_t p = static_cast<std::size_t>(y) * cfg.width + x;
          for (std::size_t k = 0; k < z.size(); ++k) {
            mixed2[k][p] = c * z[k][p] + sn * z2[k][p];
            mixed3[k][p] = c * z[k][p] + sn * z3[k][p];
          }
        }
      for (std::size_t p = 0; p < s.f2.pixels(); ++p) {
        if (!s.gt_mask[p]) continue;
        auto v2 = s.f2.pixel(p);
        project(mixed2, p, maps.a2, maps.m2, v2);
        for (int ch = 0; ch < s.f2.channels; ++ch) v2[ch] += n2[p * s.f2.channels + ch];
        if (!s.f3.validity[p]) continue;
        auto v3 = s.f3.pixel(p);
        project(mixed3, p, maps.a3, maps.m3, v3);
        for (int ch = 0; ch < s.f3.channels; ++ch) v3[ch] += n3[p * s.f3.channels + ch];
      }
      break;
    }
  }
  return s;
}

}  // namespace cmdr::synthgen
