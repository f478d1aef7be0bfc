#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "dei2n/errors.hpp"
#include "dei2n/metrics.hpp"
#include "dei2n/synth.hpp"
#include "dei2n/train.hpp"
#include "doctest.h"

using namespace dei2n;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model = ModelConfig::tiny();
  c.dropout = 0.0;
  c.batch_size = 16;
  c.learning_rate = 0.01;
  return c;
}

std::vector<RawSample> tiny_samples(std::size_t n, std::uint64_t seed) {
  auto samples = random_samples(ModelConfig::tiny().features, n, seed);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].label = static_cast<int>(i % 2);
  return samples;
}

bool same_values(const ModelParams& a, const ModelParams& b) {
  for (std::size_t i = 0; i < a.named().size(); ++i) {
    const auto x = a.named()[i].second.values(), y = b.named()[i].second.values();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("auc examples") {
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 0, 1, 0}) == 0.75);
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0}) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  }

  TEST_CASE("auc matches the pairwise oracle") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng() % 60;
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng() % 7) / 7.0;
        y[i] = static_cast<int>(rng() % 2);
      }
      y[0] = 1;
      y[1] = 0;
      CHECK(std::abs(auc(s, y) - pairwise_auc(s, y)) <= 1e-12);
    }
  }

  TEST_CASE("auc is invariant under increasing transforms") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    std::vector<double> s(100), t(100);
    std::vector<int> y(100);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = normal(rng);
      t[i] = std::exp(3 * s[i]) + 1;
      y[i] = normal(rng) + s[i] > 0;
    }
    CHECK(auc(s, y) == auc(t, y));
  }

  TEST_CASE("relative improvement reproduces the published table") {
    CHECK(std::abs(rela_impr(0.7671, 0.6107) - 141.28) <= 0.01);
    CHECK(std::abs(rela_impr(0.6180, 0.6154) - 2.25) <= 0.01);
    CHECK(std::abs(rela_impr(0.6096, 0.6107) - -0.99) <= 0.01);
    CHECK(rela_impr(0.7, 0.7) == 0.0);
    CHECK_THROWS_AS(rela_impr(0.7, 0.5), std::domain_error);
  }

  TEST_CASE("spearman") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(spearman(x, std::vector<double>{10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman(x, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman(x, std::vector<double>{1, 1, 2, 2}) == doctest::Approx(0.894427191));
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("zero gradients or a zero rate leave parameters unchanged") {
    Tensor w({3}, {1, 2, 3}, true);
    Adam zero_grad({w}, {});
    zero_grad.step();
    CHECK(w[0] == 1.0);
    CHECK(w[2] == 3.0);

    for (double& g : w.grad()) g = 1.0;
    Adam zero_rate({w}, {.learning_rate = 0.0});
    zero_rate.step();
    CHECK(w[1] == 2.0);
  }

  TEST_CASE("first step moves each coordinate by the learning rate") {
    Tensor w({2}, {1, 1}, true);
    w.grad()[0] = 5.0;
    w.grad()[1] = -0.01;
    Adam adam({w}, {.learning_rate = 0.1});
    adam.step();
    CHECK(w[0] == doctest::Approx(0.9));
    CHECK(w[1] == doctest::Approx(1.1));
    adam.zero_grad();
    CHECK(w.grad()[0] == 0.0);
  }

  TEST_CASE("an epoch at learning rate zero changes nothing") {
    TrainConfig c = tiny_train_config();
    c.learning_rate = 0.0;
    const auto data = tiny_samples(40, 3);
    const TrainResult r = train(c, data, data);
    TrainConfig untrained = c;
    untrained.epochs = 0;
    CHECK(same_values(train(untrained, data, data).params, r.params));
  }
}

TEST_SUITE("training") {
  TEST_CASE("a small set can be memorised") {
    TrainConfig c = tiny_train_config();
    c.batch_size = 20;
    c.epochs = 500;
    const auto data = tiny_samples(20, 4);
    const TrainResult r = train(c, data, data);
    CHECK(r.report.epoch_loss.back() < 0.05);
    CHECK(r.report.auc == 1.0);
  }

  TEST_CASE("training is deterministic") {
    TrainConfig c = tiny_train_config();
    c.epochs = 2;
    c.dropout = 0.1;
    const auto data = tiny_samples(100, 5);
    const TrainResult a = train(c, data, data), b = train(c, data, data);
    CHECK(same_values(a.params, b.params));
    CHECK(a.report.epoch_loss == b.report.epoch_loss);
    c.seed = 2;
    CHECK_FALSE(same_values(a.params, train(c, data, data).params));
  }

  TEST_CASE("prediction does not depend on batch size") {
    const TrainConfig c = tiny_train_config();
    const auto data = tiny_samples(50, 6);
    const TrainResult r = train(c, data, data);
    const Predictions a = predict(r.params, data, 7), b = predict(r.params, data, 512);
    for (std::size_t i = 0; i < data.size(); ++i) {
      CHECK(a.ctr[i] == doctest::Approx(b.ctr[i]).epsilon(1e-12));
      CHECK(a.p_trigger[i] == doctest::Approx(b.p_trigger[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("invalid configs are rejected") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.learning_rate = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}

TEST_SUITE("reports") {
  TEST_CASE("one page gives one row") {
    const TrainConfig c = tiny_train_config();
    auto data = tiny_samples(30, 7);
    for (RawSample& s : data) s.page = 3;
    const TrainResult r = train(c, data, data);
    const auto rows = page_report(r.params, data);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].page == 3);
    CHECK(rows[0].samples == 30);
    CHECK(rows[0].same_proportion >= 0.0);
    CHECK(rows[0].same_proportion <= 1.0);
  }

  TEST_CASE("models without a gate report no trigger probability") {
    TrainConfig c = tiny_train_config();
    c.ablation = AblationConfig::from_name("NO-UI2M");
    const auto data = tiny_samples(30, 8);
    const TrainResult r = train(c, data, data);
    for (const PageStats& p : page_report(r.params, data)) CHECK(std::isnan(p.mean_p_trigger));
  }

  TEST_CASE("ablation suite covers every variant") {
    TrainConfig c = tiny_train_config();
    const auto data = tiny_samples(40, 9);
    const AblationResult r = ablation_suite(c, data, data);
    REQUIRE(r.rows.size() == 6);
    CHECK(r.rows.back().variant == "FULL");
    CHECK(r.rows.back().rela_impr == 0.0);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      CHECK(r.rows[i].variant == ablation_variant_names()[i]);
      CHECK(r.runs[i].params.ablation() == AblationConfig::from_name(r.rows[i].variant));
    }
    CHECK(ablation_table(r.rows).find("FULL        ") != std::string::npos);
    CHECK(ablation_table(r.rows).find("0.00%") != std::string::npos);
  }
}
