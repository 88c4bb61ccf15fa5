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

#include "cmdr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cmdr/metrics.hpp"

namespace cmdr::pipeline {

namespace {

constexpr const char* kRole2D = "f2d";
constexpr const char* kRole3D = "f3d";

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", prefix, i);
  return buf;
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

// Restores the reader's phase on scope exit.
class PhaseGuard {
 public:
  PhaseGuard(const io::SampleReader& reader, io::SampleReader::Phase p)
      : reader_(const_cast<io::SampleReader&>(reader)), saved_(reader.phase()) {
    reader_.set_phase(p);
  }
  ~PhaseGuard() { reader_.set_phase(saved_); }

 private:
  io::SampleReader& reader_;
  io::SampleReader::Phase saved_;
};

mapnet::TrainOptions train_options(const RunConfig& cfg, const std::string& name,
                                   const Logger& log) {
  mapnet::TrainOptions o;
  o.epochs = cfg.epochs;
  o.learning_rate = cfg.learning_rate;
  o.on_epoch = [name, log, total = cfg.epochs](int epoch, double loss) {
    if (epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == total) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s epoch %d/%d loss %.6f", name.c_str(), epoch + 1, total,
                    loss);
      say(log, buf);
    }
  };
  return o;
}

nlohmann::json loss_json(const mapnet::TrainResult& r) {
  return {{"final", r.loss_trace.empty() ? 0.0 : r.loss_trace.back()}, {"trace", r.loss_trace}};
}

mapnet::MapperConfig mapper_config(const RunConfig& cfg, int in_dim, int out_dim) {
  mapnet::MapperConfig c = cfg.mapper;
  c.in_dim = in_dim;
  c.out_dim = out_dim;
  return c;
}

decoders::Decoder2DConfig dec2d_config(const RunConfig& cfg, int channels) {
  auto c = cfg.decoder2d;
  c.channels = channels;
  return c;
}

decoders::Decoder3DConfig dec3d_config(const RunConfig& cfg, int channels) {
  auto c = cfg.decoder3d;
  c.channels = channels;
  return c;
}

std::vector<Point3> read_scan(const fs::path& path) {
  std::vector<Point3> pts;
  if (path.extension() == ".cmdr") {
    const io::Tensor t = io::read_tensor(path);
    if (t.dims.size() != 2 || t.dims[1] != 3)
      throw Error("parse error", path.string() + ": expected an [N, 3] tensor");
    const auto v = t.to_f64();
    for (std::size_t i = 0; i < t.dims[0]; ++i) pts.push_back({v[3 * i], v[3 * i + 1], v[3 * i + 2]});
    return pts;
  }
  std::ifstream in(path);
  if (!in) throw Error("io error", "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Point3 p;
    if (!(ss >> p[0] >> p[1] >> p[2]))
      throw Error("parse error", path.string() + ":" + std::to_string(line_no) +
                                     ": expected three coordinates");
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

DatasetManifest write_synthetic(const RunConfig& cfg, const fs::path& dir, bool with_2d) {
  synthgen::SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  sc.validate();
  DatasetManifest m;
  m.has_2d = with_2d;
  m.has_3d = true;
  m.grid_height = sc.height;
  m.grid_width = sc.width;
  m.dim_2d = with_2d ? sc.dim_2d : 0;
  m.dim_3d = sc.dim_3d;
  m.seed = cfg.seed;
  m.provenance = "synthgen";

  auto emit = [&](const std::string& id, Split split, bool anomalous_draw) {
    Rng rng(derive_seed(cfg.seed, "synth/sample/" + id));
    const synthgen::Sample s =
        anomalous_draw ? synthgen::gen_anomalous(sc, rng) : synthgen::gen_nominal(sc, rng);
    SampleRecord r;
    r.id = id;
    r.split = split;
    r.label = s.anomalous ? Label::kAnomalous : Label::kNormal;
    if (s.anomalous) r.tag = std::string(synthgen::defect_mode_name(s.mode));
    if (with_2d) {
      r.features[kRole2D] = "f2d/" + id + ".cmdr";
      io::write_feature_map(dir / r.features[kRole2D], s.f2);
    }
    r.features[kRole3D] = "f3d/" + id + ".cmdr";
    io::write_feature_map(dir / r.features[kRole3D], s.f3);
    r.validity = "validity/" + id + ".cmdr";
    io::write_mask(dir / *r.validity, sc.height, sc.width, s.f3.validity);
    if (split == Split::kTest) {
      r.gt_mask = "gt/" + id + ".cmdr";
      io::write_mask(dir / *r.gt_mask, sc.height, sc.width, s.gt_mask);
    }
    m.samples.push_back(std::move(r));
  };
  for (int i = 0; i < cfg.counts.train; ++i) emit(numbered("train", i), Split::kTrain, false);
  for (int i = 0; i < cfg.counts.test_normal; ++i) emit(numbered("good", i), Split::kTest, false);
  for (int i = 0; i < cfg.counts.test_anomalous; ++i) emit(numbered("bad", i), Split::kTest, true);
  io::write_manifest(dir / kManifestFile, m);
  return m;
}

DatasetManifest preprocess_scans(const RunConfig& cfg, const fs::path& input, const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".xyz" || ext == ".txt" || ext == ".cmdr"))
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(input);
  }
  if (files.empty()) throw Error("no nominal data", "no scans found under " + input.string());

  const auto& pc = cfg.polyprep;
  std::vector<polyprep::PointCloudChunk> chunks;
  for (const auto& f : files) {
    const auto pts = read_scan(f);
    const std::string scan = f.stem().string();
    Rng rng(derive_seed(cfg.seed, "polyprep/detect/" + scan));
    const auto mask = polyprep::detect_outliers(pts, pc, rng);
    for (auto& c : polyprep::chunk_and_label(pts, mask, pc.chunk_size, pc.tau, pc.remainder, scan))
      chunks.push_back(polyprep::minmax_normalize(std::move(c)));
  }
  if (chunks.empty())
    throw Error("no nominal data", "scans are shorter than one chunk of " +
                                       std::to_string(pc.chunk_size) + " points");

  Rng split_rng(derive_seed(cfg.seed, "polyprep/split"));
  DatasetManifest m = polyprep::build_dataset(chunks, pc.train_fraction, split_rng);
  m.seed = cfg.seed;
  std::map<std::string, const polyprep::PointCloudChunk*> by_id;
  for (const auto& c : chunks) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%05d", c.chunk_index);
    by_id[c.scan_id + "_" + idx] = &c;
  }
  for (const auto& r : m.samples) {
    const auto& c = *by_id.at(r.id);
    DenseFeatureMap f(m.grid_height, m.grid_width, 3);
    for (std::size_t i = 0; i < c.points.size(); ++i)
      std::copy(c.points[i].begin(), c.points[i].end(), f.values.begin() + 3 * i);
    io::write_feature_map(dir / r.features.at(kRole3D), f);
    io::write_mask(dir / *r.gt_mask, m.grid_height, m.grid_width, c.outlier_mask);
  }
  io::write_manifest(dir / kManifestFile, m);
  return m;
}

DatasetManifest load_dataset(const fs::path& dir, const Logger& log) {
  std::vector<std::string> warnings;
  DatasetManifest m = io::read_manifest(dir / kManifestFile, &warnings);
  for (const auto& w : warnings) say(log, "warning: " + w);
  io::validate_manifest(m, dir);
  return m;
}

void require_modalities(const DatasetManifest& m, Mode mode) {
  if ((mode == Mode::kJoint || mode == Mode::k2D) && !m.has_2d)
    throw Error("modality unavailable", "mode " + std::string(mode_name(mode)) +
                                            " needs 2D features but the dataset has none");
  if ((mode == Mode::kJoint || mode == Mode::k3D) && !m.has_3d)
    throw Error("modality unavailable", "mode " + std::string(mode_name(mode)) +
                                            " needs 3D features but the dataset has none");
}

TrainReport train(const RunConfig& cfg, const io::SampleReader& reader, Mode mode,
                  const Logger& log) {
  const DatasetManifest& m = reader.manifest();
  require_modalities(m, mode);
  PhaseGuard guard(reader, io::SampleReader::Phase::kTraining);
  const auto idx = reader.indices(Split::kTrain);
  if (idx.empty()) throw Error("no nominal data", "the train split is empty");

  std::vector<DenseFeatureMap> f2s, f3s;
  for (std::size_t i : idx) {
    // 2D features are measured everywhere; 3D validity applies to 3D only.
    if (mode != Mode::k3D) f2s.push_back(reader.feature(i, kRole2D, false));
    if (mode != Mode::k2D) f3s.push_back(reader.feature(i, kRole3D));
  }

  TrainReport report;
  auto seeded = [&](const std::string& purpose) { return Rng(derive_seed(cfg.seed, purpose)); };

  if (mode == Mode::kJoint) {
    for (bool forward : {true, false}) {
      const std::string name = forward ? "map_2to3" : "map_3to2";
      const auto& src = forward ? f2s : f3s;
      const auto& dst = forward ? f3s : f2s;
      std::vector<mapnet::MapperSample> data;
      for (std::size_t k = 0; k < src.size(); ++k) data.push_back({src[k], dst[k], f3s[k].validity});
      Rng init = seeded("init/" + name);
      auto model = mapnet::MapperModel::init(
          mapper_config(cfg, src.front().channels, dst.front().channels), init);
      Rng order = seeded("train/" + name);
      const auto result = mapnet::train_mapper(model, data, train_options(cfg, name, log), order);
      report.losses[name] = loss_json(result);
      (forward ? report.models.map_2to3 : report.models.map_3to2) = std::move(model);
    }
  }
  if (mode != Mode::k3D) {
    std::vector<decoders::DecoderSample> data;
    for (const auto& f : f2s) data.push_back({f, f.validity});
    Rng init = seeded("init/dec2d");
    auto model = decoders::Decoder2DModel::init(dec2d_config(cfg, f2s.front().channels), init);
    Rng order = seeded("train/dec2d");
    const auto result = decoders::train_decoder(model, data, train_options(cfg, "dec2d", log), order);
    report.losses["dec2d"] = loss_json(result);
    report.models.dec2d = std::move(model);
  }
  if (mode != Mode::k2D) {
    std::vector<decoders::DecoderSample> data;
    for (const auto& f : f3s) data.push_back({f, f.validity});
    Rng init = seeded("init/dec3d");
    auto model = decoders::Decoder3DModel::init(dec3d_config(cfg, f3s.front().channels), init);
    Rng order = seeded("train/dec3d");
    const auto result = decoders::train_decoder(model, data, train_options(cfg, "dec3d", log), order);
    report.losses["dec3d"] = loss_json(result);
    report.models.dec3d = std::move(model);
  }
  return report;
}

void save_models(const fs::path& dir, const Models& models, Mode mode) {
  const nlohmann::json meta{{"mode", std::string(mode_name(mode))}};
  if (models.map_2to3) io::save_checkpoint(dir / "map_2to3", models.map_2to3->parameters(), meta);
  if (models.map_3to2) io::save_checkpoint(dir / "map_3to2", models.map_3to2->parameters(), meta);
  if (models.dec2d) io::save_checkpoint(dir / "dec2d", models.dec2d->parameters(), meta);
  if (models.dec3d) io::save_checkpoint(dir / "dec3d", models.dec3d->parameters(), meta);
}

Models load_models(const fs::path& dir, const RunConfig& cfg, const DatasetManifest& m, Mode mode) {
  require_modalities(m, mode);
  auto need = [&](const char* name) {
    const fs::path p = dir / name;
    if (!fs::exists(p / "checkpoint.json"))
      throw Error("missing checkpoint", "no trained '" + std::string(name) + "' under " +
                                            dir.string() + "; run train with this mode first");
    return p;
  };
  Rng scratch(0);
  Models models;
  if (mode == Mode::kJoint) {
    models.map_2to3 = mapnet::MapperModel::init(mapper_config(cfg, m.dim_2d, m.dim_3d), scratch);
    io::load_checkpoint(need("map_2to3"), models.map_2to3->parameters());
    models.map_3to2 = mapnet::MapperModel::init(mapper_config(cfg, m.dim_3d, m.dim_2d), scratch);
    io::load_checkpoint(need("map_3to2"), models.map_3to2->parameters());
  }
  if (mode != Mode::k3D) {
    models.dec2d = decoders::Decoder2DModel::init(dec2d_config(cfg, m.dim_2d), scratch);
    io::load_checkpoint(need("dec2d"), models.dec2d->parameters());
  }
  if (mode != Mode::k2D) {
    models.dec3d = decoders::Decoder3DModel::init(dec3d_config(cfg, m.dim_3d), scratch);
    io::load_checkpoint(need("dec3d"), models.dec3d->parameters());
  }
  return models;
}

TestItem discrepancies(const Models& models, const io::SampleReader& reader, std::size_t index,
                       Mode mode) {
  const auto& r = reader.manifest().samples[index];
  TestItem item;
  item.id = r.id;
  item.label = r.label;
  item.tag = r.tag;
  item.gt = reader.gt_mask(index);
  switch (mode) {
    case Mode::kJoint: {
      const DenseFeatureMap f2 = reader.feature(index, kRole2D, false);
      const DenseFeatureMap f3 = reader.feature(index, kRole3D);
      item.validity = f3.validity;
      item.bundle = fusion::discrepancy_maps(
          f2, f3, mapnet::mapper_forward(*models.map_3to2, f3),
          mapnet::mapper_forward(*models.map_2to3, f2), decoders::decoder2d_forward(*models.dec2d, f2),
          decoders::decoder3d_forward(*models.dec3d, f3));
      break;
    }
    case Mode::k2D: {
      const DenseFeatureMap f2 = reader.feature(index, kRole2D, false);
      item.validity = f2.validity;
      item.bundle.d2d_rec =
          fusion::distance_map(decoders::decoder2d_forward(*models.dec2d, f2), f2, f2.validity);
      break;
    }
    case Mode::k3D: {
      const DenseFeatureMap f3 = reader.feature(index, kRole3D);
      item.validity = f3.validity;
      item.bundle.d3d_rec =
          fusion::distance_map(decoders::decoder3d_forward(*models.dec3d, f3), f3, f3.validity);
      break;
    }
  }
  return item;
}

std::vector<TestItem> discrepancies(const Models& models, const io::SampleReader& reader,
                                    Mode mode) {
  require_modalities(reader.manifest(), mode);
  std::vector<TestItem> items;
  for (std::size_t i : reader.indices(Split::kTest))
    items.push_back(discrepancies(models, reader, i, mode));
  return items;
}

fusion::ScoredMap score(const TestItem& item, const fusion::FusionConfig& cfg, Mode mode) {
  switch (mode) {
    case Mode::kJoint: return fusion::finalize(fusion::fuse(item.bundle, cfg), cfg);
    case Mode::k2D: return fusion::score_single(item.bundle.d2d_rec, cfg);
    case Mode::k3D: return fusion::score_single(item.bundle.d3d_rec, cfg);
  }
  throw ContractViolation("unknown mode");
}

fusion::ScoredMap score_reconstruction_only(const TestItem& item, const fusion::FusionConfig& cfg,
                                            bool use_2d) {
  return fusion::finalize(use_2d ? item.bundle.d2d_rec : item.bundle.d3d_rec, cfg);
}

nlohmann::json Evaluation::to_json(double fpr_limit) const {
  char key[32];
  std::snprintf(key, sizeof key, "aupro@%g", fpr_limit);
  return {{"i_auroc", i_auroc}, {"p_auroc", p_auroc}, {key, aupro}, {"aupro@0.01", aupro_1}};
}

Evaluation evaluate(std::span<const fusion::ScoredMap> scored, std::span<const TestItem> items,
                    double fpr_limit, const metrics::ProOptions& pro) {
  CMDR_REQUIRE(scored.size() == items.size(), "evaluate: score and item counts differ");
  metrics::ScoredSet image;
  std::vector<AnomalyMap> maps;
  std::vector<std::vector<std::uint8_t>> gts;
  for (std::size_t i = 0; i < items.size(); ++i) {
    image.scores.push_back(scored[i].score);
    image.labels.push_back(items[i].label == Label::kAnomalous);
    maps.push_back(scored[i].map);
    gts.push_back(items[i].gt);
  }
  Evaluation e;
  e.i_auroc = metrics::auroc(image);
  e.p_auroc = metrics::auroc(metrics::pool_pixels(maps, gts));
  const auto curve = metrics::pro_curve(maps, gts, pro);
  e.aupro = metrics::area_to_limit(curve, fpr_limit) / fpr_limit;
  e.aupro_1 = metrics::area_to_limit(curve, 0.01) / 0.01;
  return e;
}

double subset_auroc(std::span<const double> scores, std::span<const TestItem> items,
                    const std::string& tag) {
  metrics::ScoredSet set;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].label == Label::kAnomalous && items[i].tag != tag) continue;
    set.scores.push_back(scores[i]);
    set.labels.push_back(items[i].label == Label::kAnomalous);
  }
  return metrics::auroc(set);
}

}  // namespace cmdr::pipeline
