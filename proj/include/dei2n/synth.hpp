#pragma once

// Synthetic trigger-induced recommendation data, plus the trigger
// attribution and negative sampling used to turn generic logs into TIR
// samples.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dei2n/dataset.hpp"
#include "dei2n/features.hpp"
#include "json.hpp"

namespace dei2n {

/// Generator parameters.
///
/// Click probability of a candidate on page p is
///   sigmoid(base_logit + trigger_affinity * page_decay^(p-1) * [same category as trigger]
///           + preference_weight * preference(user, candidate category))
/// and a candidate shares the trigger's category with probability
///   min(1, 0.9 * page_decay^(p-1) + 0.05).
struct SynthConfig {
  std::size_t n_users = 2000;
  std::size_t n_countries = 10;
  std::size_t n_categories = 20;
  std::size_t items_per_category = 50;
  std::size_t n_sessions = 2500;
  std::size_t pages_per_session = 8;
  std::size_t items_per_page = 10;
  std::size_t history_min = 5;
  std::size_t history_max = 30;
  double trigger_affinity = 2.0;
  double page_decay = 0.8;
  double preference_weight = 1.0;
  double base_logit = -2.0;
  /// Symmetric Dirichlet concentration of per-user category preferences.
  double preference_concentration = 0.5;
  double test_fraction = 0.1;
  std::int64_t start_ts = 1'700'000'000;
  std::int64_t span_seconds = 30 * 86400;
  std::int64_t history_seconds = 14 * 86400;
  std::int64_t page_interval_seconds = 30;
  std::uint64_t seed = 7;

  /// Throws std::invalid_argument on zero counts, page_decay outside
  /// (0, 1], or an inverted history range.
  void validate() const;

  /// ~200k samples.
  static SynthConfig fig2();
  /// <= 1k samples for quick runs.
  static SynthConfig tiny();
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SyntheticDataset {
  std::vector<RawSample> train;
  std::vector<RawSample> test;
  DatasetManifest manifest;
};

/// Pure function of the config (including its seed). Sessions are ordered
/// by timestamp and the last test_fraction of them form the test split.
SyntheticDataset generate_synthetic(const SynthConfig& config);

/// Writes train.jsonl, test.jsonl and manifest.json into `dir`.
void write_dataset_dir(const std::filesystem::path& dir, const SyntheticDataset& data);

/// One row of a generic interaction log.
struct Event {
  std::int64_t user_id = 0;
  std::int64_t country_id = 0;
  ItemRef item;
  std::int64_t ts = 0;
  /// "click" or "exposure". Exposures become samples; clicks and positive
  /// exposures are the user's behaviors and trigger candidates.
  std::string kind = "exposure";
  std::int64_t page = 1;
  int label = 0;

  bool is_click() const { return kind == "click" || (kind == "exposure" && label == 1); }
};

void to_json(nlohmann::json& j, const Event& e);
Event event_from_json(const nlohmann::json& j);
std::vector<Event> load_event_log(const std::filesystem::path& path);

/// Joins every exposure with the user's latest click at most
/// `window_seconds` earlier (ts_click <= ts_exposure); exposures without
/// such a click are dropped. Behaviors are all of the user's clicks up to
/// the exposure. Events must be time-ordered per user (DataError otherwise).
std::vector<RawSample> synthesize_triggers(std::span<const Event> events,
                                           std::int64_t window_seconds);

/// Each positive followed by `ratio` label-0 copies whose target is drawn
/// uniformly from `pool`, excluding the positive's target item. Throws
/// std::invalid_argument on an empty pool, ratio < 1, or a pool with no
/// item other than the target.
std::vector<RawSample> negative_sample(std::span<const RawSample> positives,
                                       std::span<const ItemRef> pool, std::size_t ratio,
                                       std::uint64_t seed);

/// Unstructured samples for model-level checks. Ids range slightly past the
/// vocabularies in `features` so out-of-vocabulary handling is exercised;
/// histories range from empty to beyond max_behaviors.
std::vector<RawSample> random_samples(const FeatureConfig& features, std::size_t count,
                                      std::uint64_t seed);

/// Splits time-ordered samples so the latest `test_fraction` go to test.
SyntheticDataset split_by_time(std::vector<RawSample> samples, double test_fraction);

}  // namespace dei2n
