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

#include "cmdr/config.hpp"

#include <cstdio>

#include "cmdr/io.hpp"

namespace cmdr {

using nlohmann::json;

Mode parse_mode(std::string_view name) {
  if (name == "2d3d") return Mode::kJoint;
  if (name == "2d") return Mode::k2D;
  if (name == "3d") return Mode::k3D;
  throw ContractViolation("unknown mode '" + std::string(name) + "' (expected 2d3d, 2d or 3d)");
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kJoint: return "2d3d";
    case Mode::k2D: return "2d";
    case Mode::k3D: return "3d";
  }
  return "?";
}

namespace {

std::string_view detector_name(polyprep::Detector d) {
  switch (d) {
    case polyprep::Detector::kIso: return "iso";
    case polyprep::Detector::kLof: return "lof";
    case polyprep::Detector::kHybrid: return "hybrid";
  }
  return "?";
}

json geometry_json(const nn::ConvGeometry& g) {
  return {{"kernel", g.kernel}, {"stride", g.stride}, {"padding", g.padding}};
}

nn::ConvGeometry geometry_from(const json& j) {
  nn::ConvGeometry g;
  g.kernel = j.at("kernel").get<int>();
  g.stride = j.at("stride").get<int>();
  g.padding = j.at("padding").get<int>();
  return g;
}

void reject_unknown(const json& defaults, const json& given, const std::string& path) {
  if (!given.is_object()) return;
  for (const auto& [k, v] : given.items()) {
    const std::string here = path + "." + k;
    if (!defaults.contains(k)) throw ContractViolation("config: unknown key " + here);
    if (defaults.at(k).is_object()) {
      if (!v.is_object()) throw ContractViolation("config: " + here + " must be an object");
      reject_unknown(defaults.at(k), v, here);
    }
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  json modes = json::array();
  for (auto m : c.synth.modes) modes.push_back(std::string(synthgen::defect_mode_name(m)));
  json smoothing = c.fusion.smoothing;
  return {
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"dataset", c.dataset},
      {"mode", std::string(mode_name(c.mode))},
      {"synth",
       {{"height", c.synth.height},
        {"width", c.synth.width},
        {"dim_2d", c.synth.dim_2d},
        {"dim_3d", c.synth.dim_3d},
        {"latent_factors", c.synth.latent_factors},
        {"smoothing_sigma", c.synth.smoothing_sigma},
        {"noise", c.synth.noise},
        {"offset", c.synth.offset},
        {"dropout", c.synth.dropout},
        {"defect_count_min", c.synth.defect_count_min},
        {"defect_count_max", c.synth.defect_count_max},
        {"radius_min", c.synth.radius_min},
        {"radius_max", c.synth.radius_max},
        {"intensity_min", c.synth.intensity_min},
        {"intensity_max", c.synth.intensity_max},
        {"modes", modes},
        {"train", c.counts.train},
        {"test_normal", c.counts.test_normal},
        {"test_anomalous", c.counts.test_anomalous}}},
      {"mapper", {{"hidden_dim", c.mapper.hidden_dim}, {"depth", c.mapper.depth}}},
      {"decoder2d",
       {{"latent", c.decoder2d.latent},
        {"window", c.decoder2d.window},
        {"mlp_hidden", c.decoder2d.mlp_hidden},
        {"stages", c.decoder2d.stages},
        {"geometry", geometry_json(c.decoder2d.geometry)}}},
      {"decoder3d",
       {{"latent", c.decoder3d.latent},
        {"stages", c.decoder3d.stages},
        {"gate_kernel", c.decoder3d.gate_kernel},
        {"geometry", geometry_json(c.decoder3d.geometry)}}},
      {"train", {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}}},
      {"fusion",
       {{"temperature", c.fusion.temperature},
        {"epsilon", c.fusion.epsilon},
        {"gate_window", c.fusion.gate_window},
        {"gate_steepness", c.fusion.gate_steepness},
        {"smoothing", smoothing},
        {"variant", std::string(fusion::variant_name(c.fusion.variant))}}},
      {"metrics",
       {{"fpr_limit", c.fpr_limit},
        {"max_thresholds", c.pro.max_thresholds},
        {"connectivity", c.pro.connectivity}}},
      {"polyprep",
       {{"detector", std::string(detector_name(c.polyprep.detector))},
        {"contamination", c.polyprep.contamination},
        {"chunk_size", c.polyprep.chunk_size},
        {"tau", c.polyprep.tau},
        {"remainder", c.polyprep.remainder == polyprep::Remainder::kDrop ? "drop" : "pad"},
        {"train_fraction", c.polyprep.train_fraction},
        {"trees", c.polyprep.iso.trees},
        {"subsample", c.polyprep.iso.subsample},
        {"lof_neighbors", c.polyprep.lof_neighbors}}},
      {"bench", {{"samples", c.bench_samples}}},
  };
}

RunConfig config_from_json(const json& given) {
  RunConfig c;
  json j = to_json(c);
  reject_unknown(j, given, "$");
  j.merge_patch(given);
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.dataset = j.at("dataset").get<std::string>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    const json& s = j.at("synth");
    c.synth.height = s.at("height");
    c.synth.width = s.at("width");
    c.synth.dim_2d = s.at("dim_2d");
    c.synth.dim_3d = s.at("dim_3d");
    c.synth.latent_factors = s.at("latent_factors");
    c.synth.smoothing_sigma = s.at("smoothing_sigma");
    c.synth.noise = s.at("noise");
    c.synth.offset = s.at("offset");
    c.synth.dropout = s.at("dropout");
    c.synth.defect_count_min = s.at("defect_count_min");
    c.synth.defect_count_max = s.at("defect_count_max");
    c.synth.radius_min = s.at("radius_min");
    c.synth.radius_max = s.at("radius_max");
    c.synth.intensity_min = s.at("intensity_min");
    c.synth.intensity_max = s.at("intensity_max");
    c.synth.modes.clear();
    for (const auto& m : s.at("modes")) c.synth.modes.push_back(synthgen::parse_defect_mode(m.get<std::string>()));
    c.counts.train = s.at("train");
    c.counts.test_normal = s.at("test_normal");
    c.counts.test_anomalous = s.at("test_anomalous");
    c.mapper.hidden_dim = j.at("mapper").at("hidden_dim");
    c.mapper.depth = j.at("mapper").at("depth");
    const json& d2 = j.at("decoder2d");
    c.decoder2d.latent = d2.at("latent");
    c.decoder2d.window = d2.at("window");
    c.decoder2d.mlp_hidden = d2.at("mlp_hidden");
    c.decoder2d.stages = d2.at("stages");
    c.decoder2d.geometry = geometry_from(d2.at("geometry"));
    const json& d3 = j.at("decoder3d");
    c.decoder3d.latent = d3.at("latent");
    c.decoder3d.stages = d3.at("stages");
    c.decoder3d.gate_kernel = d3.at("gate_kernel");
    c.decoder3d.geometry = geometry_from(d3.at("geometry"));
    c.epochs = j.at("train").at("epochs");
    c.learning_rate = j.at("train").at("learning_rate");
    const json& f = j.at("fusion");
    c.fusion.temperature = f.at("temperature");
    c.fusion.epsilon = f.at("epsilon");
    c.fusion.gate_window = f.at("gate_window");
    c.fusion.gate_steepness = f.at("gate_steepness");
    c.fusion.smoothing = f.at("smoothing").get<std::vector<int>>();
    c.fusion.variant = fusion::parse_variant(f.at("variant").get<std::string>());
    c.fpr_limit = j.at("metrics").at("fpr_limit");
    c.pro.max_thresholds = j.at("metrics").at("max_thresholds");
    c.pro.connectivity = j.at("metrics").at("connectivity");
    const json& p = j.at("polyprep");
    c.polyprep.detector = polyprep::parse_detector(p.at("detector").get<std::string>());
    c.polyprep.contamination = p.at("contamination");
    c.polyprep.chunk_size = p.at("chunk_size");
    c.polyprep.tau = p.at("tau");
    const auto rem = p.at("remainder").get<std::string>();
    if (rem != "drop" && rem != "pad")
      throw ContractViolation("config: $.polyprep.remainder must be 'drop' or 'pad'");
    c.polyprep.remainder = rem == "drop" ? polyprep::Remainder::kDrop : polyprep::Remainder::kPadRepeat;
    c.polyprep.train_fraction = p.at("train_fraction");
    c.polyprep.iso.trees = p.at("trees");
    c.polyprep.iso.subsample = p.at("subsample");
    c.polyprep.lof_neighbors = p.at("lof_neighbors");
    c.bench_samples = j.at("bench").at("samples");
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw io::ParseError(path.string() + ": " + e.what(), e.byte, e.byte);
  }
  return config_from_json(j);
}

void RunConfig::validate() const {
  synth.validate();
  CMDR_REQUIRE(counts.train > 0 && counts.test_normal >= 0 && counts.test_anomalous >= 0,
               "config: synth sample counts must be nonnegative with a nonempty train split");
  CMDR_REQUIRE(mapper.depth >= 1 && mapper.hidden_dim >= 0, "config: invalid mapper geometry");
  decoders::Decoder2DConfig d2 = decoder2d;
  d2.channels = 1;
  d2.validate();
  decoders::Decoder3DConfig d3 = decoder3d;
  d3.channels = 1;
  d3.validate();
  CMDR_REQUIRE(epochs >= 0, "config: epochs must be nonnegative");
  CMDR_REQUIRE(learning_rate > 0.0, "config: learning rate must be positive");
  fusion.validate();
  CMDR_REQUIRE(fpr_limit > 0.0 && fpr_limit <= 1.0, "config: fpr_limit must lie in (0, 1]");
  CMDR_REQUIRE(pro.connectivity == 4 || pro.connectivity == 8, "config: connectivity must be 4 or 8");
  CMDR_REQUIRE(pro.max_thresholds >= 2, "config: max_thresholds must be at least 2");
  CMDR_REQUIRE(polyprep.contamination > 0.0 && polyprep.contamination < 0.5,
               "config: contamination must lie in (0, 0.5)");
  CMDR_REQUIRE(polyprep.chunk_size > 0, "config: chunk_size must be positive");
  CMDR_REQUIRE(polyprep.train_fraction > 0.0 && polyprep.train_fraction < 1.0,
               "config: train_fraction must lie in (0, 1)");
  CMDR_REQUIRE(bench_samples > 0, "config: bench samples must be positive");
}

std::filesystem::path RunConfig::dataset_dir() const {
  return dataset.empty() ? std::filesystem::path(out_dir) / "data" : std::filesystem::path(dataset);
}

std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

}  // namespace cmdr
