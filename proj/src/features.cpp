#include "dei2n/features.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "dei2n/errors.hpp"

namespace dei2n {
namespace {

std::size_t vocab_index(std::int64_t id, std::size_t vocab) {
  if (id <= 0 || static_cast<std::uint64_t>(id) >= vocab) return 0;
  return static_cast<std::size_t>(id);
}

std::array<std::size_t, 3> item_index(const ItemRef& item, const FeatureConfig& c) {
  return {vocab_index(item.item_id, c.item_vocab), vocab_index(item.category_id, c.category_vocab),
          vocab_index(item.company_id, c.company_vocab)};
}

Tensor uniform_table(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  std::vector<double> values(rows * cols);
  for (double& v : values) v = dist(rng);
  return Tensor({rows, cols}, std::move(values), true);
}

void copy_row(const Tensor& table, std::size_t row, std::span<double> dst) {
  const std::size_t d = table.dim(1);
  auto src = table.values().subspan(row * d, d);
  std::copy(src.begin(), src.end(), dst.begin());
}

void copy_item(const EmbeddingTables& t, const std::array<std::size_t, 3>& idx,
               std::span<double> dst) {
  const std::size_t a = t.item.dim(1), b = t.category.dim(1), c = t.company.dim(1);
  copy_row(t.item, idx[0], dst.subspan(0, a));
  copy_row(t.category, idx[1], dst.subspan(a, b));
  copy_row(t.company, idx[2], dst.subspan(a + b, c));
}

}  // namespace

void validate(const RawSample& s) {
  const std::string who = "sample (user " + std::to_string(s.user_id) + ", ts " +
                          std::to_string(s.ts) + ")";
  for (std::size_t i = 0; i < s.behaviors.size(); ++i) {
    if (i > 0 && s.behaviors[i].ts < s.behaviors[i - 1].ts)
      throw DataError(who + ": behaviors not sorted by timestamp at position " +
                      std::to_string(i));
    if (s.behaviors[i].ts > s.ts)
      throw DataError(who + ": behavior " + std::to_string(i) +
                      " is later than the recommendation timestamp");
  }
  if (s.label != 0 && s.label != 1)
    throw DataError(who + ": label must be 0 or 1, got " + std::to_string(s.label));
  if (s.page < 1) throw DataError(who + ": page must be >= 1, got " + std::to_string(s.page));
}

std::vector<FieldSpec> FeatureConfig::fields() const {
  return {{"item_id", item_vocab, item_dim},       {"category_id", category_vocab, category_dim},
          {"company_id", company_vocab, company_dim}, {"user_id", user_vocab, user_dim},
          {"country_id", country_vocab, country_dim}, {"page", page_vocab, page_dim},
          {"time_bucket", max_bucket + 1, time_dim}};
}

void FeatureConfig::validate() const {
  for (const FieldSpec& f : fields())
    if (f.vocab < 1 || f.dim < 1)
      throw std::invalid_argument("field " + f.name + " needs vocabulary and dimension >= 1");
  if (max_behaviors < 1 || max_hard < 1)
    throw std::invalid_argument("sequence caps must be >= 1");
  if (time_factor <= 0) throw std::invalid_argument("time_factor must be positive");
}

EmbeddingTables EmbeddingTables::create(const FeatureConfig& c, std::mt19937_64& rng) {
  EmbeddingTables t;
  t.item = uniform_table(c.item_vocab, c.item_dim, rng);
  t.category = uniform_table(c.category_vocab, c.category_dim, rng);
  t.company = uniform_table(c.company_vocab, c.company_dim, rng);
  t.user = uniform_table(c.user_vocab, c.user_dim, rng);
  t.country = uniform_table(c.country_vocab, c.country_dim, rng);
  t.page = uniform_table(c.page_vocab, c.page_dim, rng);
  t.time = uniform_table(c.max_bucket + 1, c.time_dim, rng);
  return t;
}

std::size_t time_bucket(std::int64_t recommendation_ts, std::int64_t behavior_ts,
                        std::int64_t time_factor, std::size_t max_bucket) {
  if (time_factor <= 0)
    throw std::invalid_argument("time factor must be positive, got " + std::to_string(time_factor));
  if (recommendation_ts < behavior_ts)
    throw std::invalid_argument("negative time interval: behavior at " +
                                std::to_string(behavior_ts) + " after recommendation at " +
                                std::to_string(recommendation_ts));
  const auto bucket = static_cast<std::uint64_t>((recommendation_ts - behavior_ts) / time_factor);
  return static_cast<std::size_t>(std::min<std::uint64_t>(bucket, max_bucket));
}

std::vector<std::size_t> build_hard_subsequence(std::span<const Behavior> behaviors,
                                                std::int64_t category, std::size_t max_length) {
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < behaviors.size(); ++i)
    if (behaviors[i].item.category_id == category) hits.push_back(i);
  if (hits.size() > max_length)
    hits.erase(hits.begin(), hits.end() - static_cast<std::ptrdiff_t>(max_length));
  return hits;
}

SampleIds encode_ids(const RawSample& s, const FeatureConfig& c) {
  SampleIds ids;
  ids.user = vocab_index(s.user_id, c.user_vocab);
  ids.country = vocab_index(s.country_id, c.country_vocab);
  ids.page = s.page <= 0 ? 0 : std::min<std::size_t>(static_cast<std::size_t>(s.page), c.page_vocab - 1);
  ids.trigger = item_index(s.trigger, c);
  ids.target = item_index(s.target, c);

  const std::size_t total = s.behaviors.size();
  const std::size_t kept = std::min(total, c.max_behaviors);
  const auto recent = std::span<const Behavior>(s.behaviors).subspan(total - kept);

  ids.behaviors.assign(c.max_behaviors, {0, 0, 0});
  ids.buckets.assign(c.max_behaviors, 0);
  ids.mask.assign(c.max_behaviors, 0);
  for (std::size_t i = 0; i < kept; ++i) {
    ids.behaviors[i] = item_index(recent[i].item, c);
    ids.buckets[i] = time_bucket(s.ts, recent[i].ts, c.time_factor, c.max_bucket);
    ids.mask[i] = 1;
  }
  ids.hard_indices = build_hard_subsequence(recent, s.trigger.category_id, c.max_hard);
  return ids;
}

EncodedSample encode_sample(const RawSample& s, const EmbeddingTables& t, const FeatureConfig& c) {
  const SampleIds ids = encode_ids(s, c);
  const std::size_t dm = c.model_dim(), T = c.max_behaviors;

  EncodedSample e;
  e.user = Tensor({c.user_profile_dim()});
  copy_row(t.user, ids.user, e.user.values().subspan(0, c.user_dim));
  copy_row(t.country, ids.country, e.user.values().subspan(c.user_dim, c.country_dim));
  e.context = Tensor({c.context_dim()});
  copy_row(t.page, ids.page, e.context.values());
  e.trigger = Tensor({dm});
  copy_item(t, ids.trigger, e.trigger.values());
  e.target = Tensor({dm});
  copy_item(t, ids.target, e.target.values());

  e.behaviors = Tensor({T, dm});
  e.times = Tensor({T, c.time_dim});
  for (std::size_t i = 0; i < T; ++i) {
    if (!ids.mask[i]) continue;
    copy_item(t, ids.behaviors[i], e.behaviors.values().subspan(i * dm, dm));
    copy_row(t.time, ids.buckets[i], e.times.values().subspan(i * c.time_dim, c.time_dim));
  }
  e.behavior_mask = ids.mask;
  e.hard_indices = ids.hard_indices;
  e.hard_mask.assign(c.max_hard, 0);
  for (std::size_t i = 0; i < ids.hard_indices.size(); ++i) e.hard_mask[i] = 1;
  return e;
}

}  // namespace dei2n
