#pragma once

// Newline-delimited JSON dataset files and their manifest.
//
// One sample per line:
//   {"user_id":1,"country_id":2,
//    "behaviors":[{"item_id":5,"category_id":1,"company_id":3,"ts":100},...],
//    "trigger":{"item_id":..,"category_id":..,"company_id":..},
//    "target":{...},"page":1,"ts":200,"label":0}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dei2n/features.hpp"
#include "json.hpp"

namespace dei2n {

void to_json(nlohmann::json& j, const ItemRef& item);
void to_json(nlohmann::json& j, const RawSample& sample);
/// Strict parse: every field present, no unknown fields. Throws DataError.
RawSample sample_from_json(const nlohmann::json& j);

/// Streams samples from a dataset file in file order.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);
  /// Next sample, or nullopt at end of file. Throws DataError naming the
  /// line for malformed records or invariant violations.
  std::optional<RawSample> next();
  std::size_t line() const { return line_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

std::vector<RawSample> load_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const RawSample> samples);

struct DatasetManifest {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_categories = 0;
  std::size_t n_companies = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double positive_rate = 0.0;
  /// Smallest recommendation timestamp of the test split.
  std::int64_t split_ts = 0;
  std::string config_hash;
  nlohmann::json generator = nlohmann::json::object();

  std::size_t n_samples() const { return n_train + n_test; }
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

/// Counts distinct users/items/categories/companies over both splits.
DatasetManifest count_manifest(std::span<const RawSample> train, std::span<const RawSample> test);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Grows the vocabulary sizes in `config` to cover every id in `samples`.
void fit_vocabulary(FeatureConfig& config, std::span<const RawSample> samples);

/// Standard file names inside a dataset directory.
struct DatasetPaths {
  std::filesystem::path train, test, manifest;
  explicit DatasetPaths(const std::filesystem::path& dir)
      : train(dir / "train.jsonl"), test(dir / "test.jsonl"), manifest(dir / "manifest.json") {}
};

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dei2n
