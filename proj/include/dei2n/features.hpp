#pragma once

// Raw trigger-induced recommendation samples and their embedded form.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dei2n/tensor.hpp"

namespace dei2n {

struct ItemRef {
  std::int64_t item_id = 0;
  std::int64_t category_id = 0;
  std::int64_t company_id = 0;

  friend bool operator==(const ItemRef&, const ItemRef&) = default;
};

struct Behavior {
  ItemRef item;
  std::int64_t ts = 0;  // interaction time, seconds

  friend bool operator==(const Behavior&, const Behavior&) = default;
};

/// One impression on a trigger-induced page.
struct RawSample {
  std::int64_t user_id = 0;
  std::int64_t country_id = 0;
  std::vector<Behavior> behaviors;  // ascending by ts
  ItemRef trigger;
  ItemRef target;
  std::int64_t page = 1;
  std::int64_t ts = 0;  // recommendation time, seconds
  int label = 0;

  friend bool operator==(const RawSample&, const RawSample&) = default;
};

/// Throws DataError if behaviors are out of order, postdate the
/// recommendation, or label/page are out of range.
void validate(const RawSample& sample);

struct FieldSpec {
  std::string name;
  std::size_t vocab = 1;
  std::size_t dim = 1;
};

/// Vocabulary sizes, embedding widths and sequence caps.
///
/// Item embeddings are the concatenation item_id | category_id | company_id,
/// the user profile is user_id | country_id and the context is the page
/// number. Index 0 of every table is reserved for padding and
/// out-of-vocabulary ids.
struct FeatureConfig {
  std::size_t item_vocab = 1;
  std::size_t category_vocab = 1;
  std::size_t company_vocab = 1;
  std::size_t user_vocab = 1;
  std::size_t country_vocab = 1;
  std::size_t page_vocab = 50;

  std::size_t item_dim = 32;
  std::size_t category_dim = 24;
  std::size_t company_dim = 16;
  std::size_t user_dim = 24;
  std::size_t country_dim = 12;
  std::size_t page_dim = 10;
  std::size_t time_dim = 36;

  std::size_t max_behaviors = 20;
  std::size_t max_hard = 10;
  std::int64_t time_factor = 60;
  std::size_t max_bucket = 20160;

  std::size_t model_dim() const { return item_dim + category_dim + company_dim; }
  std::size_t user_profile_dim() const { return user_dim + country_dim; }
  std::size_t context_dim() const { return page_dim; }

  std::vector<FieldSpec> fields() const;
  /// Throws std::invalid_argument on zero sizes or caps.
  void validate() const;
};

/// Embedding tables, one per field plus the time-interval table.
struct EmbeddingTables {
  Tensor item, category, company, user, country, page, time;

  /// Uniform(-0.05, 0.05) initialisation.
  static EmbeddingTables create(const FeatureConfig& config, std::mt19937_64& rng);
};

/// floor((recommendation_ts - behavior_ts) / time_factor), clamped to
/// [0, max_bucket]. Throws std::invalid_argument on a negative interval or
/// a non-positive time_factor.
std::size_t time_bucket(std::int64_t recommendation_ts, std::int64_t behavior_ts,
                        std::int64_t time_factor, std::size_t max_bucket);

/// Positions of behaviors in `category`, keeping the `max_length` most
/// recent, in chronological order.
std::vector<std::size_t> build_hard_subsequence(std::span<const Behavior> behaviors,
                                                std::int64_t category, std::size_t max_length);

/// Table indices for one sample. Sequences are padded to the configured
/// caps; padding uses index 0 and a false mask entry.
struct SampleIds {
  std::size_t user = 0, country = 0, page = 0;
  std::array<std::size_t, 3> trigger{}, target{};
  std::vector<std::array<std::size_t, 3>> behaviors;  // max_behaviors
  std::vector<std::size_t> buckets;                   // max_behaviors
  std::vector<std::uint8_t> mask;                     // max_behaviors
  std::vector<std::size_t> hard_indices;              // positions into behaviors
};

SampleIds encode_ids(const RawSample& sample, const FeatureConfig& config);

/// Embedded form of one sample. Padding rows of `behaviors` and `times`
/// are zero.
struct EncodedSample {
  Tensor user;       // [user_profile_dim]
  Tensor context;    // [context_dim]
  Tensor trigger;    // [model_dim]
  Tensor target;     // [model_dim]
  Tensor behaviors;  // [max_behaviors x model_dim]
  Tensor times;      // [max_behaviors x time_dim]
  std::vector<std::uint8_t> behavior_mask;
  std::vector<std::size_t> hard_indices;
  std::vector<std::uint8_t> hard_mask;  // max_hard
};

EncodedSample encode_sample(const RawSample& sample, const EmbeddingTables& tables,
                            const FeatureConfig& config);

}  // namespace dei2n
