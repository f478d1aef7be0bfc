#include <random>
#include <vector>

#include "dei2n/errors.hpp"
#include "dei2n/features.hpp"
#include "dei2n/synth.hpp"
#include "doctest.h"

using namespace dei2n;

namespace {

Behavior behavior(std::int64_t item, std::int64_t category, std::int64_t ts) {
  return {{item, category, 1}, ts};
}

FeatureConfig small_vocab() {
  FeatureConfig f;
  f.item_vocab = 100;
  f.category_vocab = 10;
  f.company_vocab = 5;
  f.user_vocab = 10;
  f.country_vocab = 4;
  return f;
}

RawSample sample_with(std::size_t n_behaviors) {
  RawSample s;
  s.user_id = 3;
  s.country_id = 1;
  for (std::size_t i = 0; i < n_behaviors; ++i)
    s.behaviors.push_back(behavior(static_cast<std::int64_t>(i + 1), 1 + static_cast<std::int64_t>(i % 3),
                                   1000 + 60 * static_cast<std::int64_t>(i)));
  s.trigger = {7, 1, 2};
  s.target = {8, 2, 3};
  s.page = 2;
  s.ts = 10'000;
  return s;
}

}  // namespace

TEST_CASE("time buckets") {
  CHECK(time_bucket(100, 100, 60, 20160) == 0);
  CHECK(time_bucket(7200, 0, 60, 20160) == 120);
  CHECK(time_bucket(1'000'000'000, 0, 60, 20160) == 20160);
  CHECK(time_bucket(119, 0, 60, 20160) == 1);
  CHECK_THROWS_AS(time_bucket(0, 1, 60, 20160), std::invalid_argument);
  CHECK_THROWS_AS(time_bucket(1, 0, 0, 20160), std::invalid_argument);
}

TEST_CASE("hard subsequence") {
  const std::vector<Behavior> abac{behavior(1, 1, 0), behavior(2, 2, 1), behavior(3, 1, 2),
                                   behavior(4, 3, 3)};
  CHECK(build_hard_subsequence(abac, 1, 10) == std::vector<std::size_t>{0, 2});
  CHECK(build_hard_subsequence(abac, 9, 10).empty());

  std::vector<Behavior> many;
  for (int i = 0; i < 15; ++i) many.push_back(behavior(i, 4, i));
  std::vector<std::size_t> last10(10);
  for (std::size_t i = 0; i < 10; ++i) last10[i] = 5 + i;
  CHECK(build_hard_subsequence(many, 4, 10) == last10);
}

TEST_CASE("sample validation") {
  RawSample s = sample_with(3);
  CHECK_NOTHROW(validate(s));
  RawSample unordered = s;
  std::swap(unordered.behaviors[0], unordered.behaviors[2]);
  CHECK_THROWS_AS(validate(unordered), DataError);
  RawSample late = s;
  late.behaviors.back().ts = s.ts + 1;
  CHECK_THROWS_AS(validate(late), DataError);
  RawSample label = s;
  label.label = 2;
  CHECK_THROWS_AS(validate(label), DataError);
  RawSample page = s;
  page.page = 0;
  CHECK_THROWS_AS(validate(page), DataError);
}

TEST_CASE("encoded shapes at the default widths") {
  const FeatureConfig f = small_vocab();
  std::mt19937_64 rng(1);
  const EmbeddingTables t = EmbeddingTables::create(f, rng);
  const EncodedSample e = encode_sample(sample_with(5), t, f);
  CHECK(e.behaviors.shape() == Shape{20, 72});
  CHECK(e.times.shape() == Shape{20, 36});
  CHECK(e.user.shape() == Shape{36});
  CHECK(e.context.shape() == Shape{10});
  CHECK(e.trigger.shape() == Shape{72});
  CHECK(e.target.shape() == Shape{72});
  CHECK(e.hard_mask.size() == 10);
  CHECK(t.time.dim(0) == 20161);
}

TEST_CASE("empty histories encode to zeros") {
  const FeatureConfig f = small_vocab();
  std::mt19937_64 rng(2);
  const EmbeddingTables t = EmbeddingTables::create(f, rng);
  const EncodedSample e = encode_sample(sample_with(0), t, f);
  for (auto m : e.behavior_mask) CHECK(m == 0);
  for (double v : e.behaviors.values()) CHECK(v == 0.0);
  for (double v : e.times.values()) CHECK(v == 0.0);
  CHECK(e.hard_indices.empty());
}

TEST_CASE("long histories keep the most recent behaviors") {
  const FeatureConfig f = small_vocab();
  const RawSample s = sample_with(25);
  const SampleIds ids = encode_ids(s, f);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(ids.mask[i] == 1);
    CHECK(ids.behaviors[i][0] == static_cast<std::size_t>(s.behaviors[5 + i].item.item_id));
  }
}

TEST_CASE("padding rows are zero and valid rows are table rows") {
  const FeatureConfig f = small_vocab();
  std::mt19937_64 rng(3);
  const EmbeddingTables t = EmbeddingTables::create(f, rng);
  const RawSample s = sample_with(4);
  const EncodedSample e = encode_sample(s, t, f);
  const std::size_t dm = f.model_dim();
  for (std::size_t r = 4; r < 20; ++r)
    for (std::size_t j = 0; j < dm; ++j) CHECK(e.behaviors[r * dm + j] == 0.0);
  // First behavior: item 1, category 1, company 1.
  for (std::size_t j = 0; j < f.item_dim; ++j) CHECK(e.behaviors[j] == t.item[1 * f.item_dim + j]);
  for (std::size_t j = 0; j < f.category_dim; ++j)
    CHECK(e.behaviors[f.item_dim + j] == t.category[1 * f.category_dim + j]);
  // Bucket of the first behavior: (10000 - 1000) / 60 = 150.
  for (std::size_t j = 0; j < f.time_dim; ++j) CHECK(e.times[j] == t.time[150 * f.time_dim + j]);
}

TEST_CASE("out-of-vocabulary ids and large pages map to reserved rows") {
  const FeatureConfig f = small_vocab();
  RawSample s = sample_with(2);
  s.user_id = 1000;
  s.trigger.item_id = 5000;
  s.page = 400;
  const SampleIds ids = encode_ids(s, f);
  CHECK(ids.user == 0);
  CHECK(ids.trigger[0] == 0);
  CHECK(ids.page == f.page_vocab - 1);
}

TEST_CASE("hard indices point at valid trigger-category behaviors") {
  FeatureConfig f = small_vocab();
  const std::vector<RawSample> samples = random_samples(f, 300, 9);
  for (const RawSample& s : samples) {
    const SampleIds ids = encode_ids(s, f);
    const std::size_t kept = std::min(s.behaviors.size(), f.max_behaviors);
    const std::size_t offset = s.behaviors.size() - kept;
    CHECK(ids.hard_indices.size() <= f.max_hard);
    for (std::size_t h : ids.hard_indices) {
      REQUIRE(h < kept);
      CHECK(ids.mask[h] == 1);
      CHECK(s.behaviors[offset + h].item.category_id == s.trigger.category_id);
    }
  }
}

TEST_CASE("re-encoding is bit-identical") {
  const FeatureConfig f = small_vocab();
  std::mt19937_64 rng(4);
  const EmbeddingTables t = EmbeddingTables::create(f, rng);
  const RawSample s = sample_with(12);
  const EncodedSample a = encode_sample(s, t, f), b = encode_sample(s, t, f);
  CHECK(std::equal(a.behaviors.values().begin(), a.behaviors.values().end(),
                   b.behaviors.values().begin()));
  CHECK(std::equal(a.times.values().begin(), a.times.values().end(), b.times.values().begin()));
  CHECK(a.hard_indices == b.hard_indices);
}

TEST_CASE("feature config validation") {
  FeatureConfig f;
  CHECK_NOTHROW(f.validate());
  CHECK(f.model_dim() == 72);
  CHECK(f.user_profile_dim() == 36);
  CHECK(f.fields().size() == 7);
  f.item_dim = 0;
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
}
