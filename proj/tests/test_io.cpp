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
#include <cstring>
#include <filesystem>
#include <string>

#include "cmdr/io.hpp"
#include "doctest.h"
#include "io_oracles.hpp"
#include "support.hpp"

using namespace cmdr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cmdr_io_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

template <typename F>
io::ParseError parse_error(F&& f) {
  try {
    f();
  } catch (const io::ParseError& e) {
    return e;
  }
  FAIL("expected a parse error");
  return io::ParseError("", 0, 0);
}

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("crc32 check value") {
  const std::string s = "123456789";
  CHECK(io::crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
  CHECK(io::crc32({}) == 0u);
}

TEST_CASE("container byte layout") {
  const std::vector<std::uint8_t> values{7, 9, 11};
  const auto bytes = io::encode(io::Tensor::from_u8({1, 3}, values));
  const std::vector<std::uint8_t> head{'C', 'M', 'D', 'R', 0x00, 0x01, 3, 2,
                                       1,   0,   0,   0,   0,    0,    0, 0,
                                       3,   0,   0,   0,   0,    0,    0, 0,
                                       7,   9,   11};
  REQUIRE(bytes.size() == head.size() + 4);
  CHECK(std::equal(head.begin(), head.end(), bytes.begin()));
  const std::uint32_t crc = io::crc32(values);
  for (int i = 0; i < 4; ++i) CHECK(bytes[head.size() + i] == ((crc >> (8 * i)) & 0xff));

  // f64 payload is the little-endian IEEE pattern.
  const double one = 1.0;
  const auto f = io::encode(io::Tensor::from_f64({1}, std::span(&one, 1)));
  const std::vector<std::uint8_t> le_one{0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  CHECK(std::equal(le_one.begin(), le_one.end(), f.begin() + 16));
  CHECK(f[6] == 2);
}

TEST_CASE("tensor round trips are bitwise") {
  Rng rng(1);
  TempDir dir;
  for (int i = 0; i < 200; ++i) {
    const auto t = testing::random_tensor(rng);
    const auto back = io::decode(io::encode(t));
    CHECK(testing::same_tensor(t, back));
    if (i % 20 == 0) {
      const auto path = dir.path / ("t" + std::to_string(i) + ".cmdr");
      io::write_tensor(path, t);
      CHECK(testing::same_tensor(io::read_tensor(path), t));
    }
  }
  // Rank 0 is a scalar with one element.
  io::Tensor scalar;
  scalar.dtype = io::DType::kU8;
  scalar.payload = {42};
  CHECK(testing::same_tensor(io::decode(io::encode(scalar)), scalar));
}

TEST_CASE("f32 and u8 widen to double") {
  const std::vector<double> v{0.5, -2.25, 1048576.0};
  const auto t = io::Tensor::from_f32({3}, v);
  CHECK(io::decode(io::encode(t)).to_f64() == v);
  const std::vector<std::uint8_t> u{0, 1, 255};
  CHECK(io::Tensor::from_u8({3}, u).to_f64() == std::vector<double>{0, 1, 255});
  CHECK_THROWS_AS(t.to_u8(), Error);
  CHECK_THROWS_AS(io::Tensor::from_f64({2, 2}, v), ContractViolation);
}

TEST_CASE("every truncation names the missing byte range") {
  Rng rng(2);
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const auto bytes = io::encode(io::Tensor::from_f64({2, 3}, v));
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    const std::span<const std::uint8_t> prefix(bytes.data(), len);
    const auto e = parse_error([&] { io::decode(prefix); });
    CHECK(e.code() == "parse error");
    CHECK(e.begin() == len);
    CHECK(e.end() > len);
    CHECK(e.end() <= bytes.size());
    const std::string want = "[" + std::to_string(len) + ", " + std::to_string(e.end()) + ")";
    CHECK(std::string(e.what()).find(want) != std::string::npos);
  }
  // The header range is reported in full, the payload range up to the CRC end.
  CHECK(parse_error([&] { io::decode(std::span(bytes.data(), 3)); }).end() == 8);
  CHECK(parse_error([&] { io::decode(std::span(bytes.data(), 30)); }).end() == bytes.size());
}

TEST_CASE("corruption is rejected with the offending bytes") {
  const std::vector<double> v{1, 2, 3};
  const auto good = io::encode(io::Tensor::from_f64({3}, v));
  Rng rng(3);
  // Any single flipped payload or CRC bit fails the CRC check.
  for (std::size_t at = 16; at < good.size(); ++at) {
    auto bad = good;
    bad[at] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    const auto e = parse_error([&] { io::decode(bad); });
    CHECK(e.begin() == good.size() - 4);
    CHECK(e.end() == good.size());
    CHECK(std::string(e.what()).find("CRC") != std::string::npos);
  }
  auto magic = good;
  magic[0] = 'X';
  CHECK(parse_error([&] { io::decode(magic); }).end() == 4);
  auto major = good;
  major[5] = 2;
  CHECK(parse_error([&] { io::decode(major); }).begin() == 4);
  auto dtype = good;
  dtype[6] = 9;
  CHECK(parse_error([&] { io::decode(dtype); }).begin() == 6);
  auto trailing = good;
  trailing.push_back(0);
  const auto t = parse_error([&] { io::decode(trailing); });
  CHECK(t.begin() == good.size());
  CHECK(t.end() == good.size() + 1);
  auto huge = good;
  for (int i = 8; i < 16; ++i) huge[i] = 0xff;
  CHECK(parse_error([&] { io::decode(huge); }).begin() == 8);
}

TEST_CASE("newer container minor is accepted with a warning") {
  const std::vector<double> v{1.5};
  auto bytes = io::encode(io::Tensor::from_f64({1}, v));
  bytes[4] = 3;  // minor
  std::vector<std::string> warnings;
  const auto t = io::decode(bytes, &warnings);
  CHECK(t.to_f64() == v);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("minor") != std::string::npos);
  CHECK_NOTHROW(io::decode(bytes));
}

TEST_CASE("feature maps, masks and score maps") {
  TempDir dir;
  Rng rng(4);
  auto m = testing::random_map(5, 7, 3, rng, 0.2);
  io::write_feature_map(dir.path / "f.cmdr", m);
  const auto back = io::read_feature_map(dir.path / "f.cmdr");
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  CHECK(back.channels == 3);
  CHECK(back.values == m.values);

  std::vector<std::uint8_t> mask(35);
  for (auto& v : mask) v = rng.below(2);
  io::write_mask(dir.path / "m.cmdr", 5, 7, mask);
  CHECK(io::read_mask(dir.path / "m.cmdr", 5, 7) == mask);
  CHECK(code_of([&] { io::read_mask(dir.path / "m.cmdr", 7, 5); }) == "parse error");
  CHECK(code_of([&] { io::read_feature_map(dir.path / "m.cmdr"); }) == "parse error");

  const auto a = testing::random_anomaly_map(5, 7, rng, 0.1);
  io::write_scores(dir.path / "s.cmdr", a);
  CHECK(io::read_scores(dir.path / "s.cmdr", 5, 7) == a.scores);
  CHECK(code_of([&] { io::read_tensor(dir.path / "missing.cmdr"); }) == "io error");
}

TEST_CASE("atomic writes leave no temporaries") {
  TempDir dir;
  io::atomic_write(dir.path / "sub" / "a.txt", std::string_view("one"));
  io::atomic_write(dir.path / "sub" / "a.txt", std::string_view("two"));
  CHECK(io::read_text(dir.path / "sub" / "a.txt") == "two");
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "sub")) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
}

TEST_CASE("manifest round trips") {
  Rng rng(5);
  TempDir dir;
  for (int i = 0; i < 200; ++i) {
    const auto m = testing::random_manifest(rng);
    std::vector<std::string> warnings;
    const auto back = io::manifest_from_jsonl(io::manifest_to_jsonl(m), &warnings);
    CHECK(testing::same_manifest(m, back));
    CHECK(warnings.empty());
    if (i % 50 == 0) {
      io::write_manifest(dir.path / "manifest.jsonl", m);
      CHECK(testing::same_manifest(io::read_manifest(dir.path / "manifest.jsonl"), m));
    }
  }
}

TEST_CASE("manifest schema errors carry a field path") {
  DatasetManifest m;
  m.grid_height = m.grid_width = 4;
  SampleRecord r;
  r.id = "a";
  r.features["f2d"] = "a.cmdr";
  m.samples.push_back(r);
  const std::string text = io::manifest_to_jsonl(m);
  const auto nl = text.find('\n');
  const std::string header = text.substr(0, nl + 1);

  auto field_of = [](const std::string& t) {
    return parse_error([&] { io::manifest_from_jsonl(t); }).field_path();
  };
  CHECK(field_of(header + R"({"id":"a","split":"val","label":"normal","features":{}})" "\n") ==
        "line 2: .split");
  CHECK(field_of(header + R"({"id":"a","split":"train","features":{}})" "\n") ==
        "line 2: .label");
  CHECK(field_of(header + R"({"id":3,"split":"train","label":"normal","features":{}})" "\n") ==
        "line 2: .id");
  CHECK(field_of(header + R"({"id":"a","split":"train","label":"normal","features":{},"x":1})" "\n") ==
        "line 2: .x");
  CHECK(field_of(R"({"cmdr_manifest":"2.0"})" "\n") == "line 1: .cmdr_manifest");
  std::string no_dims = header;
  no_dims.replace(no_dims.find("\"dims\""), 6, "\"dimz\"");
  CHECK(field_of(no_dims) == "line 1: .dimz");
  CHECK(field_of("") == "line 1");
  const auto syntax = parse_error([&] { io::manifest_from_jsonl(header + "{\"id\":\n"); });
  CHECK(syntax.field_path() == "line 2");
  CHECK(syntax.begin() >= header.size());
}

TEST_CASE("newer manifest minor accepts unknown fields with warnings") {
  DatasetManifest m;
  m.grid_height = m.grid_width = 2;
  std::string text = io::manifest_to_jsonl(m);
  text.replace(text.find("\"1.0\""), 5, "\"1.4\"");
  text.insert(text.find('\n') - 1, R"(,"color":"blue")");
  text += R"({"id":"x","split":"test","label":"anomalous","features":{},"extra":[1,2]})" "\n";
  std::vector<std::string> warnings;
  const auto back = io::manifest_from_jsonl(text, &warnings);
  CHECK(back.schema_minor == 4);
  REQUIRE(back.samples.size() == 1);
  CHECK(back.samples[0].label == Label::kAnomalous);
  REQUIRE(warnings.size() == 3);
  CHECK(warnings[0].find("newer") != std::string::npos);
  CHECK(warnings[1].find(".color") != std::string::npos);
  CHECK(warnings[2].find("line 2: .extra") != std::string::npos);
}

TEST_CASE("manifest validation enforces the one-class protocol") {
  TempDir dir;
  DatasetManifest m;
  m.grid_height = m.grid_width = 2;
  const std::vector<std::uint8_t> mask(4, 1);
  io::write_mask(dir.path / "v.cmdr", 2, 2, mask);
  SampleRecord a;
  a.id = "a";
  a.features["f3d"] = "v.cmdr";
  m.samples.push_back(a);
  CHECK_NOTHROW(io::validate_manifest(m, dir.path));

  auto dup = m;
  dup.samples.push_back(a);
  CHECK(code_of([&] { io::validate_manifest(dup); }) == "protocol violation");
  auto bad = m;
  bad.samples[0].label = Label::kAnomalous;
  CHECK(code_of([&] { io::validate_manifest(bad); }) == "protocol violation");
  auto missing = m;
  missing.samples[0].gt_mask = "nope.cmdr";
  CHECK(code_of([&] { io::validate_manifest(missing, dir.path); }) == "protocol violation");
  CHECK_NOTHROW(io::validate_manifest(missing));
  io::atomic_write(dir.path / "junk.cmdr", std::string_view("junk"));
  auto junk = m;
  junk.samples[0].validity = "junk.cmdr";
  CHECK(code_of([&] { io::validate_manifest(junk, dir.path); }) == "parse error");
}

TEST_CASE("training cannot read outside the train split") {
  TempDir dir;
  Rng rng(6);
  DatasetManifest m;
  m.grid_height = 3;
  m.grid_width = 3;
  m.dim_3d = 2;
  m.has_3d = true;
  for (const char* id : {"train0", "canary"}) {
    auto f = testing::random_map(3, 3, 2, rng);
    io::write_feature_map(dir.path / (std::string(id) + ".cmdr"), f);
    SampleRecord r;
    r.id = id;
    r.features["f3d"] = std::string(id) + ".cmdr";
    m.samples.push_back(r);
  }
  m.samples[1].split = Split::kTest;
  m.samples[1].label = Label::kAnomalous;
  std::vector<std::uint8_t> gt(9, 0);
  gt[4] = 1;
  io::write_mask(dir.path / "gt.cmdr", 3, 3, gt);
  m.samples[1].gt_mask = "gt.cmdr";

  io::SampleReader reader(m, dir.path);
  reader.set_phase(io::SampleReader::Phase::kTraining);
  CHECK(reader.indices(Split::kTrain) == std::vector<std::size_t>{0});
  CHECK_NOTHROW(reader.feature(0, "f3d"));
  const auto before = reader.reads();
  CHECK(code_of([&] { reader.feature(1, "f3d"); }) == "protocol violation");
  CHECK(code_of([&] { reader.gt_mask(1); }) == "protocol violation");
  CHECK(code_of([&] { reader.validity(1); }) == "protocol violation");
  CHECK(reader.reads() == before);

  reader.set_phase(io::SampleReader::Phase::kEvaluation);
  CHECK(reader.gt_mask(1) == gt);
  CHECK(reader.validity(1) == std::vector<std::uint8_t>(9, 1));
  CHECK(reader.gt_mask(0) == std::vector<std::uint8_t>(9, 0));
  CHECK(code_of([&] { reader.feature(0, "f2d"); }) == "modality unavailable");
}

TEST_CASE("reader applies the validity mask") {
  TempDir dir;
  Rng rng(7);
  DatasetManifest m;
  m.grid_height = m.grid_width = 3;
  const auto f = testing::random_map(3, 3, 2, rng);
  io::write_feature_map(dir.path / "f.cmdr", f);
  std::vector<std::uint8_t> valid(9, 1);
  valid[2] = valid[5] = 0;
  io::write_mask(dir.path / "v.cmdr", 3, 3, valid);
  SampleRecord r;
  r.id = "a";
  r.features["f3d"] = "f.cmdr";
  r.validity = "v.cmdr";
  m.samples.push_back(r);
  io::SampleReader reader(m, dir.path);
  const auto masked = reader.feature(0, "f3d");
  CHECK(masked.validity == valid);
  for (std::size_t p = 0; p < 9; ++p)
    for (int c = 0; c < 2; ++c)
      CHECK(masked.pixel(p)[c] == (valid[p] ? f.pixel(p)[c] : 0.0));
  const auto raw = reader.feature(0, "f3d", false);
  CHECK(raw.values == f.values);
  CHECK(raw.valid_count() == 9);

  auto wrong = m;
  wrong.grid_width = 4;
  io::SampleReader r2(wrong, dir.path);
  CHECK(code_of([&] { r2.feature(0, "f3d"); }) == "protocol violation");
}

TEST_CASE("ledger append and read") {
  TempDir dir;
  const auto path = dir.path / "ledger.jsonl";
  io::LedgerEntry e;
  e.command = "train";
  e.config_hash = "00ff";
  e.config = {{"seed", 3}};
  e.metrics = {{"loss", 0.25}};
  e.wall_clock_seconds = 1.5;
  e.seed = 3;
  io::append_ledger(path, e);
  e.command = "infer";
  e.artifacts = {"maps/a.cmdr"};
  io::append_ledger(path, e);
  const auto back = io::read_ledger(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].command == "train");
  CHECK(back[1].command == "infer");
  CHECK(back[0].metrics == e.metrics);
  CHECK(back[1].artifacts == e.artifacts);
  CHECK(back[1].seed == 3);
  CHECK(back[1].wall_clock_seconds == 1.5);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  Rng rng(8);
  nn::Matrix a = testing::random_matrix(3, 4, rng), b = testing::random_matrix(1, 5, rng);
  const std::vector<nn::ConstParamRef> out{{"a", &a}, {"b", &b}};
  io::save_checkpoint(dir.path / "ckpt", out, {{"kind", "test"}});
  nn::Matrix a2 = nn::Matrix::Zero(3, 4), b2 = nn::Matrix::Zero(1, 5);
  const std::vector<nn::ParamRef> in{{"a", &a2}, {"b", &b2}};
  CHECK(io::load_checkpoint(dir.path / "ckpt", in)["kind"] == "test");
  CHECK(a2 == a);
  CHECK(b2 == b);

  nn::Matrix wrong = nn::Matrix::Zero(4, 3);
  const std::vector<nn::ParamRef> shape{{"a", &wrong}, {"b", &b2}};
  CHECK(code_of([&] { io::load_checkpoint(dir.path / "ckpt", shape); }) == "parse error");
  const std::vector<nn::ParamRef> names{{"b", &b2}, {"a", &a2}};
  CHECK(code_of([&] { io::load_checkpoint(dir.path / "ckpt", names); }) == "parse error");
  const std::vector<nn::ParamRef> count{{"a", &a2}};
  CHECK(code_of([&] { io::load_checkpoint(dir.path / "ckpt", count); }) == "parse error");
}
