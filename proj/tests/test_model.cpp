#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dei2n/model.hpp"
#include "dei2n/synth.hpp"
#include "dei2n/train.hpp"
#include "doctest.h"

using namespace dei2n;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

Mlp random_mlp(std::size_t in, std::vector<std::size_t> widths, std::mt19937_64& rng) {
  Mlp mlp;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    mlp.layers.push_back({random_tensor({in, widths[i]}, rng, 0.5), random_tensor({widths[i]}, rng, 0.1)});
    if (i + 1 < widths.size()) mlp.slopes.push_back(random_tensor({widths[i]}, rng, 0.3));
    in = widths[i];
  }
  return mlp;
}

std::vector<SampleIds> tiny_batch(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::vector<SampleIds> ids;
  for (const RawSample& s : random_samples(c.features, n, seed)) ids.push_back(encode_ids(s, c.features));
  return ids;
}

ModelConfig tiny_no_dropout() {
  ModelConfig c = ModelConfig::tiny();
  c.dropout = 0.0;
  return c;
}

std::vector<double> predict(const ModelParams& params, const ModelInputs& in) {
  Graph g({.record = false});
  const Tensor p = forward(g, params, in).prediction;
  return {p.values().begin(), p.values().end()};
}

ModelInputs detached_inputs(const ModelParams& params, std::span<const SampleIds> ids) {
  Graph g({.record = false});
  ModelInputs in = embed(g, params, ids);
  for (Tensor* t : {&in.user, &in.context, &in.trigger, &in.target, &in.behaviors, &in.times,
                    &in.hard_behaviors, &in.hard_times})
    *t = t->clone();
  return in;
}

double prelu(double v, double slope) { return v > 0 ? v : slope * v; }

// Scores every position with the concatenated (seq, time, q, seq*q, seq-q)
// input, one sample and position at a time.
std::vector<double> naive_attention(const Mlp& scorer, const Tensor& query, const Tensor& seq,
                                    const Tensor& times, const Mask& mask) {
  const std::size_t B = seq.dim(0), L = seq.dim(1), d = seq.dim(2), dt = times.dim(2);
  std::vector<double> out(B * d, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> scores(L, 0.0);
    for (std::size_t j = 0; j < L; ++j) {
      std::vector<double> x;
      for (std::size_t k = 0; k < d; ++k) x.push_back(seq[(b * L + j) * d + k]);
      for (std::size_t k = 0; k < dt; ++k) x.push_back(times[(b * L + j) * dt + k]);
      for (std::size_t k = 0; k < d; ++k) x.push_back(query[b * d + k]);
      for (std::size_t k = 0; k < d; ++k) x.push_back(seq[(b * L + j) * d + k] * query[b * d + k]);
      for (std::size_t k = 0; k < d; ++k) x.push_back(seq[(b * L + j) * d + k] - query[b * d + k]);
      for (std::size_t l = 0; l < scorer.layers.size(); ++l) {
        const Dense& layer = scorer.layers[l];
        const std::size_t n = layer.weight.dim(1);
        std::vector<double> y(n);
        for (std::size_t o = 0; o < n; ++o) {
          double s = layer.bias[o];
          for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * layer.weight[i * n + o];
          y[o] = l < scorer.slopes.size() ? prelu(s, scorer.slopes[l][o]) : s;
        }
        x = y;
      }
      scores[j] = x[0];
    }
    double top = -INFINITY, z = 0;
    for (std::size_t j = 0; j < L; ++j)
      if (mask[b * L + j]) top = std::max(top, scores[j]);
    for (std::size_t j = 0; j < L; ++j)
      if (mask[b * L + j]) z += std::exp(scores[j] - top);
    for (std::size_t j = 0; j < L; ++j) {
      if (!mask[b * L + j]) continue;
      const double w = std::exp(scores[j] - top) / z;
      for (std::size_t k = 0; k < d; ++k) out[b * d + k] += w * seq[(b * L + j) * d + k];
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("ablation config") {
  TEST_CASE("names round-trip") {
    for (const std::string& name : ablation_variant_names())
      CHECK(AblationConfig::from_name(name).name() == name);
    CHECK_THROWS_AS(AblationConfig::from_name("NO-SUCH"), std::invalid_argument);
    AblationConfig neither;
    neither.use_hard = neither.use_soft = false;
    CHECK_THROWS_AS(neither.validate(), std::invalid_argument);
  }

  TEST_CASE("head input width follows the enabled components") {
    const ModelConfig c;
    CHECK(ModelParams(c, AblationConfig::from_name("FULL"), 1).head_input_dim() == 36 + 72 + 72 + 72);
    CHECK(ModelParams(c, AblationConfig::from_name("NO-UI2M"), 1).head_input_dim() == 252);
    CHECK(ModelParams(c, AblationConfig::from_name("NO-UHIM"), 1).head_input_dim() == 180);
    CHECK(ModelParams(c, AblationConfig::from_name("NO-USIM"), 1).head_input_dim() == 180);
    CHECK(ModelParams(c, AblationConfig::from_name("NO-IL"), 1).head_input_dim() == 180);
  }

  TEST_CASE("parameter names are unique") {
    const ModelParams p(ModelConfig::tiny(), {}, 3);
    std::vector<std::string> names;
    for (const auto& [name, t] : p.named()) names.push_back(name);
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
    CHECK(std::binary_search(names.begin(), names.end(), "mhsa.head1.key"));
  }
}

TEST_SUITE("layers") {
  TEST_CASE("single-position attention returns that position") {
    std::mt19937_64 rng(1);
    Graph g;
    const Mlp scorer = random_mlp(4 * 3 + 2, {5, 1}, rng);
    const Tensor seq = random_tensor({1, 1, 3}, rng), times = random_tensor({1, 1, 2}, rng);
    Tensor w;
    const Tensor out = attention_unit(g, scorer, random_tensor({1, 3}, rng), seq, times,
                                      Mask::all({1, 1}), &w);
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t k = 0; k < 3; ++k) CHECK(out[k] == doctest::Approx(seq[k]).epsilon(1e-15));
  }

  TEST_CASE("identical positions share the weight evenly") {
    std::mt19937_64 rng(2);
    Graph g;
    const Mlp scorer = random_mlp(4 * 3 + 2, {5, 1}, rng);
    const Tensor row = random_tensor({3}, rng), time = random_tensor({2}, rng);
    Tensor seq({1, 2, 3}), times({1, 2, 2});
    for (std::size_t j = 0; j < 2; ++j) {
      std::copy(row.values().begin(), row.values().end(), seq.values().begin() + j * 3);
      std::copy(time.values().begin(), time.values().end(), times.values().begin() + j * 2);
    }
    Tensor w;
    attention_unit(g, scorer, random_tensor({1, 3}, rng), seq, times, Mask::all({1, 2}), &w);
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.5));
  }

  TEST_CASE("empty histories pool to zero") {
    std::mt19937_64 rng(3);
    Graph g;
    const Mlp scorer = random_mlp(4 * 3 + 2, {5, 1}, rng);
    const Tensor out = attention_unit(g, scorer, random_tensor({2, 3}, rng), random_tensor({2, 4, 3}, rng),
                                      random_tensor({2, 4, 2}, rng),
                                      Mask({2, 4}, {0, 0, 0, 0, 1, 0, 1, 0}));
    for (std::size_t k = 0; k < 3; ++k) CHECK(out[k] == 0.0);
    CHECK(out[3] != 0.0);
  }

  TEST_CASE("attention unit matches the concatenated-input scorer") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t B = 1 + rng() % 4, L = 1 + rng() % 6, d = 1 + rng() % 5, dt = 1 + rng() % 3;
      const Mlp scorer = random_mlp(4 * d + dt, {1 + rng() % 6, 1 + rng() % 4, 1}, rng);
      const Tensor query = random_tensor({B, d}, rng), seq = random_tensor({B, L, d}, rng);
      const Tensor times = random_tensor({B, L, dt}, rng);
      std::vector<std::uint8_t> bits(B * L);
      for (auto& b : bits) b = rng() % 3 != 0;
      const Mask mask({B, L}, bits);
      Graph g;
      const Tensor out = attention_unit(g, scorer, query, seq, times, mask);
      const std::vector<double> expected = naive_attention(scorer, query, seq, times, mask);
      for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-10));
    }
  }

  TEST_CASE("gate outputs one half each when its last layer is zero") {
    std::mt19937_64 rng(5);
    Mlp mlp = random_mlp(2 + 1 + 3 + 3, {4, 2}, rng);
    std::fill(mlp.layers.back().weight.values().begin(), mlp.layers.back().weight.values().end(), 0.0);
    std::fill(mlp.layers.back().bias.values().begin(), mlp.layers.back().bias.values().end(), 0.0);
    Graph g;
    auto [tr, ta] = ui2m_forward(g, mlp, random_tensor({3, 2}, rng), random_tensor({3, 1}, rng),
                                 random_tensor({3, 3}, rng), random_tensor({3, 3}, rng));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(tr[i] == 0.5);
      CHECK(ta[i] == 0.5);
    }
  }

  TEST_CASE("fusion weights each interest by its gate") {
    Graph g;
    const Tensor out = fuse(g, Tensor::vector({0.3}), Tensor::vector({0.7}), Tensor({1, 2}, {1, 0}),
                            Tensor({1, 2}, {0, 1}));
    CHECK(out[0] == doctest::Approx(0.3));
    CHECK(out[1] == doctest::Approx(0.7));
  }

  TEST_CASE("interaction distinguishes trigger from target") {
    std::mt19937_64 rng(6);
    const Mlp mlp = random_mlp(9, {4, 2}, rng);
    const Tensor a = random_tensor({1, 3}, rng), b = random_tensor({1, 3}, rng);
    Graph g;
    const Tensor ab = interaction(g, mlp, a, b), ba = interaction(g, mlp, b, a);
    CHECK(std::abs(ab[0] - ba[0]) + std::abs(ab[1] - ba[1]) > 1e-6);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("zero head output layer predicts one half") {
    const ModelConfig c = tiny_no_dropout();
    ModelParams p(c, {}, 7);
    Dense& last = p.head.layers.back();
    std::fill(last.weight.values().begin(), last.weight.values().end(), 0.0);
    std::fill(last.bias.values().begin(), last.bias.values().end(), 0.0);
    const auto ids = tiny_batch(c, 8, 1);
    Graph g;
    const Tensor pred = forward(g, p, ids).prediction;
    for (double v : pred.values()) CHECK(v == 0.5);
  }

  TEST_CASE("probabilities and attention rows are normalised") {
    const ModelConfig c = tiny_no_dropout();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const ModelParams p(c, {}, seed);
      const auto ids = tiny_batch(c, 16, seed + 100);
      Graph g({.record = false});
      const ModelInputs in = embed(g, p, ids);
      const ForwardResult r = forward(g, p, in);
      const std::size_t B = ids.size(), T = c.features.max_behaviors, Th = c.features.max_hard;
      for (std::size_t b = 0; b < B; ++b) {
        CHECK(std::abs(r.trace.p_trigger[b] + r.trace.p_target[b] - 1.0) < 1e-12);
        CHECK(r.prediction[b] > 0.0);
        CHECK(r.prediction[b] < 1.0);
        auto row_sum = [&](const Tensor& w, const Mask& m, std::size_t base, std::size_t mbase,
                           std::size_t len) {
          double s = 0;
          for (std::size_t j = 0; j < len; ++j)
            if (m[mbase + j]) s += w[base + j];
          return s;
        };
        const bool any = std::any_of(ids[b].mask.begin(), ids[b].mask.end(), [](auto v) { return v; });
        if (any) {
          CHECK(std::abs(row_sum(r.trace.trigger_weights, in.behavior_mask, b * T, b * T, T) - 1) < 1e-12);
          CHECK(std::abs(row_sum(r.trace.target_weights, in.behavior_mask, b * T, b * T, T) - 1) < 1e-12);
          for (const Tensor& w : r.trace.mhsa_weights)
            for (std::size_t i = 0; i < T; ++i)
              if (in.behavior_mask[b * T + i])
                CHECK(std::abs(row_sum(w, in.behavior_mask, (b * T + i) * T, b * T, T) - 1) < 1e-12);
        }
        if (!ids[b].hard_indices.empty())
          CHECK(std::abs(row_sum(r.trace.hard_weights, in.hard_mask, b * Th, b * Th, Th) - 1) < 1e-12);
      }
    }
  }

  TEST_CASE("duplicate samples get identical predictions") {
    const ModelConfig c = tiny_no_dropout();
    const ModelParams p(c, {}, 11);
    auto ids = tiny_batch(c, 5, 12);
    ids.push_back(ids[2]);
    Graph g;
    const Tensor pred = forward(g, p, ids).prediction;
    CHECK(pred[2] == pred[5]);
  }

  TEST_CASE("values at masked positions do not reach the prediction") {
    const ModelConfig c = tiny_no_dropout();
    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal(0.0, 5.0);
    for (const std::string& variant : ablation_variant_names()) {
      const ModelParams p(c, AblationConfig::from_name(variant), 14);
      const auto ids = tiny_batch(c, 12, 15);
      ModelInputs in = detached_inputs(p, ids);
      const std::vector<double> before = predict(p, in);
      auto scramble = [&](Tensor& t, const Mask& m) {
        const std::size_t width = t.size() / m.size();
        for (std::size_t r = 0; r < m.size(); ++r)
          if (!m[r])
            for (std::size_t k = 0; k < width; ++k) t.values()[r * width + k] = normal(rng);
      };
      scramble(in.behaviors, in.behavior_mask);
      scramble(in.times, in.behavior_mask);
      scramble(in.hard_behaviors, in.hard_mask);
      scramble(in.hard_times, in.hard_mask);
      CHECK(predict(p, in) == before);
    }
  }

  TEST_CASE("reordering behaviors together with their times changes nothing") {
    const ModelConfig c = tiny_no_dropout();
    const ModelParams p(c, {}, 16);
    const auto ids = tiny_batch(c, 6, 17);
    const ModelInputs in = detached_inputs(p, ids);
    const std::vector<double> before = predict(p, in);

    const std::size_t B = ids.size(), T = c.features.max_behaviors;
    const std::size_t dm = c.features.model_dim(), dt = c.features.time_dim;
    std::mt19937_64 rng(18);
    ModelInputs shuffled = in;
    shuffled.behaviors = in.behaviors.clone();
    shuffled.times = in.times.clone();
    std::vector<std::uint8_t> bits(B * T);
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<std::size_t> order(T);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t j = 0; j < T; ++j) {
        const std::size_t src = b * T + order[j], dst = b * T + j;
        bits[dst] = in.behavior_mask.bits[src];
        std::copy_n(in.behaviors.values().begin() + src * dm, dm, shuffled.behaviors.values().begin() + dst * dm);
        std::copy_n(in.times.values().begin() + src * dt, dt, shuffled.times.values().begin() + dst * dt);
      }
    }
    shuffled.behavior_mask = Mask({B, T}, bits);
    const std::vector<double> after = predict(p, shuffled);
    for (std::size_t b = 0; b < B; ++b) CHECK(after[b] == doctest::Approx(before[b]).epsilon(1e-12));
  }

  TEST_CASE("embedded and pre-encoded inputs agree") {
    const ModelConfig c = tiny_no_dropout();
    const ModelParams p(c, {}, 19);
    const auto raw = random_samples(c.features, 6, 20);
    std::vector<SampleIds> ids;
    std::vector<EncodedSample> encoded;
    for (const RawSample& s : raw) {
      ids.push_back(encode_ids(s, c.features));
      encoded.push_back(encode_sample(s, p.tables, c.features));
    }
    const std::vector<double> a = predict(p, detached_inputs(p, ids));
    const std::vector<double> b = predict(p, stack_encoded(encoded));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }

  TEST_CASE("untrained loss is close to ln 2") {
    ModelConfig c;
    c.features.item_vocab = 50;
    c.features.category_vocab = 8;
    c.features.company_vocab = 8;
    c.features.user_vocab = 20;
    c.features.country_vocab = 5;
    const ModelParams p(c, {}, 21);
    auto raw = random_samples(c.features, 256, 22);
    std::vector<double> labels;
    std::vector<SampleIds> ids;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      ids.push_back(encode_ids(raw[i], c.features));
      labels.push_back(static_cast<double>(i % 2));
    }
    Graph g({.record = false});
    const double l = loss(g, forward(g, p, ids).prediction, labels).item();
    CHECK(std::abs(l - std::log(2.0)) < 0.05);
  }
}

TEST_SUITE("gradients") {
  TEST_CASE("full model and every ablation pass the gradient check") {
    for (const std::string& variant : ablation_variant_names()) {
      CAPTURE(variant);
      const GradCheckResult r =
          check_model_gradients(ModelConfig::tiny(), AblationConfig::from_name(variant), 5);
      CHECK(r.entries_checked == ModelParams(ModelConfig::tiny(), AblationConfig::from_name(variant), 1)
                                     .parameter_count());
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}
