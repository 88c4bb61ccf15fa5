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

// On-disk formats: the binary tensor container, the JSONL dataset manifest,
// the results ledger and parameter checkpoints.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmdr/error.hpp"
#include "cmdr/manifest.hpp"
#include "cmdr/nn.hpp"
#include "cmdr/numcore.hpp"

namespace cmdr::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// Structured parse failure. For binary input begin/end delimit the offending
// byte range; for text input field_path names the JSON location.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::uint64_t begin, std::uint64_t end,
             std::string field_path = {})
      : Error("parse error", message),
        begin_(begin),
        end_(end),
        field_path_(std::move(field_path)) {}

  std::uint64_t begin() const noexcept { return begin_; }
  std::uint64_t end() const noexcept { return end_; }
  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::uint64_t begin_;
  std::uint64_t end_;
  std::string field_path_;
};

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kU8 = 3 };

std::size_t dtype_size(DType t);

inline constexpr std::uint8_t kContainerMajor = 1;
inline constexpr std::uint8_t kContainerMinor = 0;
inline constexpr std::size_t kHeaderFixed = 8;  // magic, version, dtype, rank

struct Tensor {
  DType dtype = DType::kF64;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;  // little-endian, row-major

  std::uint64_t elements() const;

  static Tensor from_f64(std::vector<std::uint64_t> dims, std::span<const double> values);
  static Tensor from_f32(std::vector<std::uint64_t> dims, std::span<const double> values);
  static Tensor from_u8(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values);

  // Widens f32/u8 payloads to double.
  std::vector<double> to_f64() const;
  std::vector<std::uint8_t> to_u8() const;
};

std::vector<std::uint8_t> encode(const Tensor& t);
// Warnings (e.g. a newer minor version) are appended to `warnings` if given.
Tensor decode(std::span<const std::uint8_t> bytes, std::vector<std::string>* warnings = nullptr);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Writes to a sibling temporary file, then renames over the target.
void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const fs::path& path, std::string_view text);
std::vector<std::uint8_t> read_bytes(const fs::path& path);
std::string read_text(const fs::path& path);

void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path, std::vector<std::string>* warnings = nullptr);

// Feature maps are stored as f64 [H, W, C]; validity and masks as u8 [H, W].
void write_feature_map(const fs::path& path, const DenseFeatureMap& m);
DenseFeatureMap read_feature_map(const fs::path& path);
void write_mask(const fs::path& path, int height, int width, std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> read_mask(const fs::path& path, int height, int width);
void write_scores(const fs::path& path, const AnomalyMap& m);
std::vector<double> read_scores(const fs::path& path, int height, int width);

// ---- Dataset manifest --------------------------------------------------

std::string manifest_to_jsonl(const DatasetManifest& m);
DatasetManifest manifest_from_jsonl(std::string_view text,
                                    std::vector<std::string>* warnings = nullptr);
void write_manifest(const fs::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const fs::path& path, std::vector<std::string>* warnings = nullptr);

// Checks split partitioning, the one-class train split and (when `root` is
// non-empty) that every referenced file exists and parses.
void validate_manifest(const DatasetManifest& m, const fs::path& root = {});

// Mediates sample access. While the training phase is active, touching a
// record outside the train split raises "protocol violation".
class SampleReader {
 public:
  enum class Phase { kTraining, kEvaluation };

  SampleReader(const DatasetManifest& manifest, fs::path root);

  void set_phase(Phase p) { phase_ = p; }
  Phase phase() const { return phase_; }
  const DatasetManifest& manifest() const { return manifest_; }

  std::vector<std::size_t> indices(Split s) const;
  // Applies the record's validity mask (zeroing invalid pixels) unless
  // `apply_validity` is false, in which case every pixel is valid.
  DenseFeatureMap feature(std::size_t index, const std::string& role,
                          bool apply_validity = true) const;
  std::vector<std::uint8_t> validity(std::size_t index) const;
  std::vector<std::uint8_t> gt_mask(std::size_t index) const;
  std::size_t reads() const { return reads_; }

 private:
  void check_access(std::size_t index) const;

  const DatasetManifest& manifest_;
  fs::path root_;
  Phase phase_ = Phase::kEvaluation;
  mutable std::size_t reads_ = 0;
};

// ---- Ledger and checkpoints ---------------------------------------------

struct LedgerEntry {
  std::string command;
  std::string config_hash;
  Json config;
  Json metrics;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  Json artifacts = Json::array();
};

Json to_json(const LedgerEntry& e);
void append_ledger(const fs::path& path, const LedgerEntry& e);
std::vector<LedgerEntry> read_ledger(const fs::path& path);

void save_checkpoint(const fs::path& dir, std::span<const nn::ConstParamRef> params,
                     const Json& meta);
// Loads into already-shaped parameters; names and shapes must match.
Json load_checkpoint(const fs::path& dir, std::span<const nn::ParamRef> params);

}  // namespace cmdr::io
