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

#include "cmdr/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace cmdr {

std::size_t DatasetManifest::count(Split s) const {
  std::size_t n = 0;
  for (const auto& r : samples) n += r.split == s;
  return n;
}

std::size_t DatasetManifest::count(Split s, Label l) const {
  std::size_t n = 0;
  for (const auto& r : samples) n += r.split == s && r.label == l;
  return n;
}

std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }
std::string_view to_string(Label l) { return l == Label::kNormal ? "normal" : "anomalous"; }

}  // namespace cmdr

namespace cmdr::io {

namespace {

std::string range(std::uint64_t a, std::uint64_t b) {
  return "[" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  throw ContractViolation("unknown dtype");
}

std::uint64_t Tensor::elements() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor Tensor::from_f64(std::vector<std::uint64_t> dims, std::span<const double> values) {
  Tensor t;
  t.dtype = DType::kF64;
  t.dims = std::move(dims);
  CMDR_REQUIRE(t.elements() == values.size(), "tensor: value count does not match dims");
  t.payload.reserve(values.size() * 8);
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_le(t.payload, bits);
  }
  return t;
}

Tensor Tensor::from_f32(std::vector<std::uint64_t> dims, std::span<const double> values) {
  Tensor t;
  t.dtype = DType::kF32;
  t.dims = std::move(dims);
  CMDR_REQUIRE(t.elements() == values.size(), "tensor: value count does not match dims");
  t.payload.reserve(values.size() * 4);
  for (double v : values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le(t.payload, bits);
  }
  return t;
}

Tensor Tensor::from_u8(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values) {
  Tensor t;
  t.dtype = DType::kU8;
  t.dims = std::move(dims);
  CMDR_REQUIRE(t.elements() == values.size(), "tensor: value count does not match dims");
  t.payload.assign(values.begin(), values.end());
  return t;
}

std::vector<double> Tensor::to_f64() const {
  const std::size_t n = elements();
  std::vector<double> out(n);
  const std::uint8_t* p = payload.data();
  switch (dtype) {
    case DType::kF64:
      for (std::size_t i = 0; i < n; ++i) {
        const auto bits = get_le<std::uint64_t>(p + 8 * i);
        std::memcpy(&out[i], &bits, 8);
      }
      break;
    case DType::kF32:
      for (std::size_t i = 0; i < n; ++i) {
        const auto bits = get_le<std::uint32_t>(p + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        out[i] = f;
      }
      break;
    case DType::kU8:
      for (std::size_t i = 0; i < n; ++i) out[i] = p[i];
      break;
  }
  return out;
}

std::vector<std::uint8_t> Tensor::to_u8() const {
  if (dtype != DType::kU8) throw Error("parse error", "expected a u8 tensor");
  return payload;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const Tensor& t) {
  CMDR_REQUIRE(t.dims.size() <= 255, "tensor: rank exceeds 255");
  CMDR_REQUIRE(t.payload.size() == t.elements() * dtype_size(t.dtype),
               "tensor: payload length does not match dims");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderFixed + 8 * t.dims.size() + t.payload.size() + 4);
  for (char c : {'C', 'M', 'D', 'R'}) out.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>((kContainerMajor << 8) | kContainerMinor));
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  out.insert(out.end(), t.payload.begin(), t.payload.end());
  put_le<std::uint32_t>(out, crc32(t.payload));
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes, std::vector<std::string>* warnings) {
  const std::uint64_t size = bytes.size();
  if (size < kHeaderFixed)
    throw ParseError("truncated header: missing bytes " + range(size, kHeaderFixed), size,
                     kHeaderFixed);
  if (std::memcmp(bytes.data(), "CMDR", 4) != 0)
    throw ParseError("bad magic at bytes " + range(0, 4), 0, 4);
  const auto version = get_le<std::uint16_t>(bytes.data() + 4);
  const int major = version >> 8, minor = version & 0xff;
  if (major != kContainerMajor)
    throw ParseError("unsupported container major version " + std::to_string(major) +
                         " at bytes " + range(4, 6),
                     4, 6);
  if (minor > kContainerMinor && warnings)
    warnings->push_back("container minor version " + std::to_string(minor) +
                        " is newer than " + std::to_string(kContainerMinor));
  Tensor t;
  const std::uint8_t code = bytes[6];
  if (code < 1 || code > 3)
    throw ParseError("unknown dtype code " + std::to_string(code) + " at bytes " + range(6, 7), 6,
                     7);
  t.dtype = static_cast<DType>(code);
  const std::uint64_t rank = bytes[7];
  const std::uint64_t dims_end = kHeaderFixed + 8 * rank;
  if (size < dims_end)
    throw ParseError("truncated dims: missing bytes " + range(size, dims_end), size, dims_end);
  std::uint64_t elements = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    const auto d = get_le<std::uint64_t>(bytes.data() + kHeaderFixed + 8 * i);
    const std::uint64_t at = kHeaderFixed + 8 * i;
    if (d != 0 && elements > (std::uint64_t{1} << 48) / d)
      throw ParseError("dims overflow at bytes " + range(at, at + 8), at, at + 8);
    elements *= d;
    t.dims.push_back(d);
  }
  const std::uint64_t payload_end = dims_end + elements * dtype_size(t.dtype);
  const std::uint64_t total = payload_end + 4;
  if (size < total)
    throw ParseError("truncated payload: missing bytes " + range(size, total), size, total);
  if (size > total)
    throw ParseError("trailing bytes " + range(total, size), total, size);
  t.payload.assign(bytes.begin() + dims_end, bytes.begin() + payload_end);
  const auto stored = get_le<std::uint32_t>(bytes.data() + payload_end);
  if (stored != crc32(t.payload))
    throw ParseError("CRC mismatch at bytes " + range(payload_end, total), payload_end, total);
  return t;
}

void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io error", "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("io error", "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void atomic_write(const fs::path& path, std::string_view text) {
  atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io error", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_tensor(const fs::path& path, const Tensor& t) { atomic_write(path, encode(t)); }

Tensor read_tensor(const fs::path& path, std::vector<std::string>* warnings) {
  const auto bytes = read_bytes(path);
  try {
    return decode(bytes, warnings);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.begin(), e.end());
  }
}

void write_feature_map(const fs::path& path, const DenseFeatureMap& m) {
  write_tensor(path, Tensor::from_f64({static_cast<std::uint64_t>(m.height),
                                       static_cast<std::uint64_t>(m.width),
                                       static_cast<std::uint64_t>(m.channels)},
                                      m.values));
}

DenseFeatureMap read_feature_map(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dims.size() != 3)
    throw Error("parse error", path.string() + ": feature map must have rank 3");
  DenseFeatureMap m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                    static_cast<int>(t.dims[2]));
  m.values = t.to_f64();
  return m;
}

void write_mask(const fs::path& path, int height, int width, std::span<const std::uint8_t> mask) {
  write_tensor(path, Tensor::from_u8({static_cast<std::uint64_t>(height),
                                      static_cast<std::uint64_t>(width)},
                                     mask));
}

std::vector<std::uint8_t> read_mask(const fs::path& path, int height, int width) {
  const Tensor t = read_tensor(path);
  if (t.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(height),
                                           static_cast<std::uint64_t>(width)})
    throw Error("parse error", path.string() + ": mask shape does not match the grid");
  return t.to_u8();
}

void write_scores(const fs::path& path, const AnomalyMap& m) {
  write_tensor(path, Tensor::from_f64({static_cast<std::uint64_t>(m.height),
                                       static_cast<std::uint64_t>(m.width)},
                                      m.scores));
}

std::vector<double> read_scores(const fs::path& path, int height, int width) {
  const Tensor t = read_tensor(path);
  if (t.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(height),
                                           static_cast<std::uint64_t>(width)})
    throw Error("parse error", path.string() + ": score map shape does not match the grid");
  return t.to_f64();
}

// ---- Manifest -------------------------------------------------------------

namespace {

const std::set<std::string> kHeaderKeys{"cmdr_manifest", "has_2d", "has_3d", "grid",
                                        "dims",          "seed",   "provenance"};
const std::set<std::string> kRecordKeys{"id",       "split",   "label", "features",
                                        "validity", "gt_mask", "tag"};

std::string field(std::size_t line, const std::string& key) {
  return "line " + std::to_string(line) + ": ." + key;
}

[[noreturn]] void fail_field(std::size_t line, const std::string& key, const std::string& why) {
  const std::string path = field(line, key);
  throw ParseError(path + ": " + why, 0, 0, path);
}

template <typename T>
T get(const Json& obj, std::size_t line, const std::string& key, const std::string& prefix = {}) {
  if (!obj.is_object() || !obj.contains(key)) fail_field(line, prefix + key, "missing field");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail_field(line, prefix + key, "wrong type");
  }
}

void check_keys(const Json& obj, const std::set<std::string>& known, std::size_t line,
                bool newer_minor, std::vector<std::string>* warnings) {
  for (const auto& [k, v] : obj.items()) {
    if (known.count(k)) continue;
    if (!newer_minor) fail_field(line, k, "unknown field");
    if (warnings) warnings->push_back("ignoring unknown field " + field(line, k));
  }
}

}  // namespace

std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  Json header{{"cmdr_manifest", std::to_string(m.schema_major) + "." + std::to_string(m.schema_minor)},
              {"has_2d", m.has_2d},
              {"has_3d", m.has_3d},
              {"grid", {m.grid_height, m.grid_width}},
              {"dims", {{"2d", m.dim_2d}, {"3d", m.dim_3d}}},
              {"seed", m.seed},
              {"provenance", m.provenance}};
  out += header.dump() + "\n";
  for (const auto& r : m.samples) {
    Json j{{"id", r.id},
           {"split", std::string(to_string(r.split))},
           {"label", std::string(to_string(r.label))},
           {"features", r.features}};
    if (r.validity) j["validity"] = *r.validity;
    if (r.gt_mask) j["gt_mask"] = *r.gt_mask;
    if (!r.tag.empty()) j["tag"] = r.tag;
    out += j.dump() + "\n";
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text, std::vector<std::string>* warnings) {
  DatasetManifest m;
  std::size_t line_no = 0, pos = 0;
  bool have_header = false, newer_minor = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    const std::uint64_t line_begin = pos;
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(),
                       line_begin + (e.byte > 0 ? e.byte - 1 : 0), line_begin + line.size(),
                       "line " + std::to_string(line_no));
    }
    if (!j.is_object()) fail_field(line_no, "", "expected an object");

    if (!have_header) {
      const auto version = get<std::string>(j, line_no, "cmdr_manifest");
      int major = 0, minor = 0;
      if (std::sscanf(version.c_str(), "%d.%d", &major, &minor) != 2)
        fail_field(line_no, "cmdr_manifest", "malformed version '" + version + "'");
      if (major != DatasetManifest::kSchemaMajor)
        fail_field(line_no, "cmdr_manifest", "unsupported major version " + std::to_string(major));
      newer_minor = minor > DatasetManifest::kSchemaMinor;
      if (newer_minor && warnings)
        warnings->push_back("manifest schema " + version + " is newer than " +
                            std::to_string(DatasetManifest::kSchemaMajor) + "." +
                            std::to_string(DatasetManifest::kSchemaMinor));
      check_keys(j, kHeaderKeys, line_no, newer_minor, warnings);
      m.schema_major = major;
      m.schema_minor = minor;
      m.has_2d = get<bool>(j, line_no, "has_2d");
      m.has_3d = get<bool>(j, line_no, "has_3d");
      const auto grid = get<std::vector<int>>(j, line_no, "grid");
      if (grid.size() != 2) fail_field(line_no, "grid", "expected [height, width]");
      m.grid_height = grid[0];
      m.grid_width = grid[1];
      const auto dims = get<Json>(j, line_no, "dims");
      m.dim_2d = get<int>(dims, line_no, "2d", "dims.");
      m.dim_3d = get<int>(dims, line_no, "3d", "dims.");
      m.seed = get<std::uint64_t>(j, line_no, "seed");
      m.provenance = get<std::string>(j, line_no, "provenance");
      have_header = true;
      continue;
    }

    check_keys(j, kRecordKeys, line_no, newer_minor, warnings);
    SampleRecord r;
    r.id = get<std::string>(j, line_no, "id");
    const auto split = get<std::string>(j, line_no, "split");
    if (split == "train") r.split = Split::kTrain;
    else if (split == "test") r.split = Split::kTest;
    else fail_field(line_no, "split", "expected 'train' or 'test', got '" + split + "'");
    const auto label = get<std::string>(j, line_no, "label");
    if (label == "normal") r.label = Label::kNormal;
    else if (label == "anomalous") r.label = Label::kAnomalous;
    else fail_field(line_no, "label", "expected 'normal' or 'anomalous', got '" + label + "'");
    r.features = get<std::map<std::string, std::string>>(j, line_no, "features");
    if (j.contains("validity")) r.validity = get<std::string>(j, line_no, "validity");
    if (j.contains("gt_mask")) r.gt_mask = get<std::string>(j, line_no, "gt_mask");
    if (j.contains("tag")) r.tag = get<std::string>(j, line_no, "tag");
    m.samples.push_back(std::move(r));
  }
  if (!have_header) throw ParseError("manifest has no header line", 0, 0, "line 1");
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  atomic_write(path, manifest_to_jsonl(m));
}

DatasetManifest read_manifest(const fs::path& path, std::vector<std::string>* warnings) {
  return manifest_from_jsonl(read_text(path), warnings);
}

void validate_manifest(const DatasetManifest& m, const fs::path& root) {
  CMDR_REQUIRE(m.grid_height > 0 && m.grid_width > 0, "manifest: grid must be positive");
  std::set<std::string> ids;
  for (const auto& r : m.samples) {
    if (!ids.insert(r.id).second)
      throw Error("protocol violation", "sample id '" + r.id + "' appears more than once");
    if (r.split == Split::kTrain && r.label != Label::kNormal)
      throw Error("protocol violation",
                  "train split contains non-normal sample '" + r.id + "'");
    if (root.empty()) continue;
    auto check = [&](const std::string& rel) {
      const fs::path p = root / rel;
      if (!fs::exists(p))
        throw Error("protocol violation", "sample '" + r.id + "' references missing file " + p.string());
      read_tensor(p);
    };
    for (const auto& [role, rel] : r.features) check(rel);
    if (r.validity) check(*r.validity);
    if (r.gt_mask) check(*r.gt_mask);
  }
}

SampleReader::SampleReader(const DatasetManifest& manifest, fs::path root)
    : manifest_(manifest), root_(std::move(root)) {}

std::vector<std::size_t> SampleReader::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest_.samples.size(); ++i)
    if (manifest_.samples[i].split == s) out.push_back(i);
  return out;
}

void SampleReader::check_access(std::size_t index) const {
  CMDR_REQUIRE(index < manifest_.samples.size(), "sample index out of range");
  const auto& r = manifest_.samples[index];
  if (phase_ == Phase::kTraining && r.split != Split::kTrain)
    throw Error("protocol violation",
                "training attempted to read " + std::string(to_string(r.split)) + " sample '" +
                    r.id + "'");
  ++reads_;
}

DenseFeatureMap SampleReader::feature(std::size_t index, const std::string& role,
                                      bool apply_validity) const {
  check_access(index);
  const auto& r = manifest_.samples[index];
  const auto it = r.features.find(role);
  if (it == r.features.end())
    throw Error("modality unavailable", "sample '" + r.id + "' has no '" + role + "' features");
  DenseFeatureMap m = read_feature_map(root_ / it->second);
  if (m.height != manifest_.grid_height || m.width != manifest_.grid_width)
    throw Error("protocol violation", "sample '" + r.id + "' grid does not match the manifest");
  if (apply_validity && r.validity) {
    m.validity = read_mask(root_ / *r.validity, m.height, m.width);
    m.zero_invalid();
  }
  return m;
}

std::vector<std::uint8_t> SampleReader::validity(std::size_t index) const {
  check_access(index);
  const auto& r = manifest_.samples[index];
  if (!r.validity)
    return std::vector<std::uint8_t>(
        static_cast<std::size_t>(manifest_.grid_height) * manifest_.grid_width, 1);
  return read_mask(root_ / *r.validity, manifest_.grid_height, manifest_.grid_width);
}

std::vector<std::uint8_t> SampleReader::gt_mask(std::size_t index) const {
  check_access(index);
  const auto& r = manifest_.samples[index];
  if (!r.gt_mask)
    return std::vector<std::uint8_t>(
        static_cast<std::size_t>(manifest_.grid_height) * manifest_.grid_width, 0);
  return read_mask(root_ / *r.gt_mask, manifest_.grid_height, manifest_.grid_width);
}

// ---- Ledger ---------------------------------------------------------------

Json to_json(const LedgerEntry& e) {
  return Json{{"command", e.command},
              {"config_hash", e.config_hash},
              {"config", e.config},
              {"metrics", e.metrics},
              {"wall_clock_seconds", e.wall_clock_seconds},
              {"seed", e.seed},
              {"artifacts", e.artifacts}};
}

void append_ledger(const fs::path& path, const LedgerEntry& e) {
  std::string text = fs::exists(path) ? read_text(path) : std::string();
  if (!text.empty() && text.back() != '\n') text += '\n';
  text += to_json(e).dump() + "\n";
  atomic_write(path, text);
}

std::vector<LedgerEntry> read_ledger(const fs::path& path) {
  std::vector<LedgerEntry> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    LedgerEntry e;
    e.command = j.at("command").get<std::string>();
    e.config_hash = j.at("config_hash").get<std::string>();
    e.config = j.at("config");
    e.metrics = j.at("metrics");
    e.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.artifacts = j.value("artifacts", Json::array());
    out.push_back(std::move(e));
  }
  return out;
}

// ---- Checkpoints ----------------------------------------------------------

void save_checkpoint(const fs::path& dir, std::span<const nn::ConstParamRef> params,
                     const Json& meta) {
  fs::create_directories(dir);
  Json index{{"meta", meta}, {"parameters", Json::array()}};
  for (const auto& p : params) {
    const std::string file = p.name + ".cmdr";
    write_tensor(dir / file,
                 Tensor::from_f64({static_cast<std::uint64_t>(p.value->rows()),
                                   static_cast<std::uint64_t>(p.value->cols())},
                                  std::span(p.value->data(), p.value->size())));
    index["parameters"].push_back(
        {{"name", p.name}, {"file", file}, {"shape", {p.value->rows(), p.value->cols()}}});
  }
  atomic_write(dir / "checkpoint.json", index.dump(2) + "\n");
}

Json load_checkpoint(const fs::path& dir, std::span<const nn::ParamRef> params) {
  const Json index = Json::parse(read_text(dir / "checkpoint.json"));
  const auto& listed = index.at("parameters");
  if (listed.size() != params.size())
    throw Error("parse error", dir.string() + ": checkpoint has " + std::to_string(listed.size()) +
                                   " parameters, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = listed[i];
    const auto name = entry.at("name").get<std::string>();
    if (name != params[i].name)
      throw Error("parse error", dir.string() + ": parameter " + std::to_string(i) + " is '" +
                                     name + "', expected '" + params[i].name + "'");
    const Tensor t = read_tensor(dir / entry.at("file").get<std::string>());
    nn::Matrix& target = *params[i].value;
    if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(target.rows()) ||
        t.dims[1] != static_cast<std::uint64_t>(target.cols()))
      throw Error("parse error", dir.string() + ": shape mismatch for '" + name + "'");
    const auto values = t.to_f64();
    std::copy(values.begin(), values.end(), target.data());
  }
  return index.at("meta");
}

}  // namespace cmdr::io
