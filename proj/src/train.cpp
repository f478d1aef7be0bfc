#include "dei2n/train.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dei2n/checkpoint.hpp"
#include "dei2n/dataset.hpp"
#include "dei2n/errors.hpp"
#include "dei2n/metrics.hpp"
#include "dei2n/synth.hpp"

namespace dei2n {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<SampleIds> encode_all(std::span<const RawSample> samples, const FeatureConfig& f) {
  std::vector<SampleIds> ids(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) ids[i] = encode_ids(samples[i], f);
  return ids;
}

std::string parameter_norms(const ModelParams& params) {
  std::ostringstream out;
  for (const auto& [name, t] : params.named()) {
    double sq = 0;
    for (double v : t.values()) sq += v * v;
    out << "\n  " << name << " = " << std::sqrt(sq);
  }
  return out.str();
}

double nan_or(double num, std::size_t den) {
  return den ? num / static_cast<double>(den) : kNaN;
}

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

// --- Adam -----------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].values();
    auto g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

// --- Config ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning rate must be finite and >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  ablation.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.learning_rate},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"dropout", c.dropout},
       {"seed", c.seed},
       {"ablation", c.ablation.name()},
       {"model", c.model},
       {"train_path", c.train_path.string()},
       {"test_path", c.test_path.string()},
       {"checkpoint", c.checkpoint_path.string()}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("lr", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.dropout = j.value("dropout", c.dropout);
  c.seed = j.value("seed", c.seed);
  if (j.contains("ablation")) c.ablation = AblationConfig::from_name(j.at("ablation").get<std::string>());
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  c.train_path = j.value("train_path", c.train_path.string());
  c.test_path = j.value("test_path", c.test_path.string());
  c.checkpoint_path = j.value("checkpoint", c.checkpoint_path.string());
}

// --- Reports --------------------------------------------------------------

void to_json(nlohmann::json& j, const PageStats& p) {
  j = {{"page", p.page},
       {"samples", p.samples},
       {"same_category", p.same_category},
       {"same_category_ctr", finite_or_null(p.same_ctr)},
       {"different_category_ctr", finite_or_null(p.different_ctr)},
       {"same_category_proportion", p.same_proportion},
       {"mean_p_trigger", finite_or_null(p.mean_p_trigger)}};
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"variant", r.variant},
       {"auc", r.auc},
       {"test_loss", r.test_loss},
       {"epoch_loss", r.epoch_loss},
       {"pages", r.pages}};
  if (r.rela_impr) {
    j["baseline"] = r.baseline;
    j["rela_impr"] = *r.rela_impr;
  }
}

std::string page_csv(std::span<const PageStats> pages) {
  std::string out =
      "page,samples,same_category_ctr,different_category_ctr,same_category_proportion,"
      "mean_p_trigger\n";
  for (const PageStats& p : pages)
    out += std::to_string(p.page) + "," + std::to_string(p.samples) + "," +
           csv_number(p.same_ctr) + "," + csv_number(p.different_ctr) + "," +
           csv_number(p.same_proportion) + "," + csv_number(p.mean_p_trigger) + "\n";
  return out;
}

// --- Training -------------------------------------------------------------

TrainResult train(const TrainConfig& config, std::span<const RawSample> train_set,
                  std::span<const RawSample> test_set) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");

  ModelConfig model_config = config.model;
  model_config.dropout = config.dropout;
  fit_vocabulary(model_config.features, train_set);
  fit_vocabulary(model_config.features, test_set);

  TrainResult result{ModelParams(model_config, config.ablation, mix(config.seed)), {}};
  ModelParams& params = result.params;
  MetricsReport& report = result.report;
  report.variant = config.ablation.name();

  const std::vector<SampleIds> ids = encode_all(train_set, model_config.features);
  std::vector<double> labels(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) labels[i] = train_set[i].label;

  Adam optimizer(params.tensors(), {.learning_rate = config.learning_rate});
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(mix(config.seed ^ 0x5eedULL));

  std::vector<SampleIds> batch;
  std::vector<double> batch_labels;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batches) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(ids[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      Graph g({.record = true, .training = true, .seed = mix(config.seed + 0x100000ULL * ++step)});
      const ForwardResult out = forward(g, params, batch);
      const Tensor l = loss(g, out.prediction, batch_labels);
      const double value = l.item();
      if (!std::isfinite(value))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches) + "; parameter norms:" +
                             parameter_norms(params));
      optimizer.zero_grad();
      g.backward(l);
      optimizer.step();
      loss_sum += value * static_cast<double>(end - begin);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    if (!config.checkpoint_path.empty())
      save_model(config.checkpoint_path, params, {{"epoch", epoch + 1}});
    if (config.verbose) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::fprintf(stderr, "[%s] epoch %zu loss %.6f (%.1fs)\n", report.variant.c_str(),
                   epoch + 1, report.epoch_loss.back(), secs);
    }
  }

  if (!test_set.empty()) {
    const MetricsReport eval = evaluate(params, test_set);
    report.auc = eval.auc;
    report.test_loss = eval.test_loss;
  }
  return result;
}

TrainResult train(const TrainConfig& config) {
  const std::vector<RawSample> train_set = load_dataset(config.train_path);
  std::vector<RawSample> test_set;
  if (!config.test_path.empty()) test_set = load_dataset(config.test_path);
  return train(config, train_set, test_set);
}

// --- Evaluation -----------------------------------------------------------

Predictions predict(const ModelParams& params, std::span<const RawSample> samples,
                    std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const FeatureConfig& f = params.config().features;
  Predictions out;
  out.ctr.assign(samples.size(), 0.0);
  out.p_trigger.assign(samples.size(), kNaN);
  const std::size_t shards = (samples.size() + batch_size - 1) / batch_size;
  const bool gated = params.ablation().use_ui2m && params.ablation().use_soft;

  // Each shard owns its graph and output slots; parameters are only read.
#pragma omp parallel for schedule(static)
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = s * batch_size, end = std::min(samples.size(), begin + batch_size);
    std::vector<SampleIds> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(encode_ids(samples[i], f));
    Graph g({.record = false});
    const ForwardResult r = forward(g, params, batch);
    for (std::size_t i = begin; i < end; ++i) {
      out.ctr[i] = r.prediction[i - begin];
      if (gated) out.p_trigger[i] = r.trace.p_trigger[i - begin];
    }
  }
  return out;
}

MetricsReport evaluate(const ModelParams& params, std::span<const RawSample> samples,
                       std::size_t batch_size) {
  const Predictions pred = predict(params, samples, batch_size);
  std::vector<int> labels(samples.size());
  double loss_sum = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels[i] = samples[i].label;
    const double f = std::clamp(pred.ctr[i], 1e-12, 1.0 - 1e-12);
    loss_sum -= labels[i] ? std::log(f) : std::log(1.0 - f);
  }
  MetricsReport report;
  report.variant = params.ablation().name();
  report.auc = auc(pred.ctr, labels);
  report.test_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
  return report;
}

std::vector<PageStats> page_report(const ModelParams& params, std::span<const RawSample> samples) {
  const Predictions pred = predict(params, samples);
  struct Acc {
    std::size_t n = 0, same = 0, same_clicks = 0, diff_clicks = 0, gated = 0;
    double p_sum = 0;
  };
  std::map<std::int64_t, Acc> by_page;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RawSample& s = samples[i];
    Acc& a = by_page[s.page];
    ++a.n;
    const bool same = s.target.category_id == s.trigger.category_id;
    if (same) {
      ++a.same;
      a.same_clicks += static_cast<std::size_t>(s.label);
    } else {
      a.diff_clicks += static_cast<std::size_t>(s.label);
    }
    if (!std::isnan(pred.p_trigger[i])) {
      a.p_sum += pred.p_trigger[i];
      ++a.gated;
    }
  }
  std::vector<PageStats> rows;
  for (const auto& [page, a] : by_page) {
    PageStats p;
    p.page = page;
    p.samples = a.n;
    p.same_category = a.same;
    p.same_ctr = nan_or(static_cast<double>(a.same_clicks), a.same);
    p.different_ctr = nan_or(static_cast<double>(a.diff_clicks), a.n - a.same);
    p.same_proportion = static_cast<double>(a.same) / static_cast<double>(a.n);
    p.mean_p_trigger = nan_or(a.p_sum, a.gated);
    rows.push_back(p);
  }
  return rows;
}

// --- Ablations ------------------------------------------------------------

AblationResult ablation_suite(const TrainConfig& base, std::span<const RawSample> train_set,
                              std::span<const RawSample> test_set) {
  const std::vector<std::string> names = ablation_variant_names();
  AblationResult result;
  for (const std::string& name : names) {
    TrainConfig config = base;
    config.ablation = AblationConfig::from_name(name);
    if (!base.checkpoint_path.empty()) {
      const auto& p = base.checkpoint_path;
      config.checkpoint_path =
          p.parent_path() / (p.stem().string() + "-" + name + p.extension().string());
    }
    result.runs.push_back(train(config, train_set, test_set));
  }
  const auto full = std::find(names.begin(), names.end(), "FULL") - names.begin();
  const double full_auc = result.runs[static_cast<std::size_t>(full)].report.auc;
  for (std::size_t i = 0; i < names.size(); ++i) {
    MetricsReport& r = result.runs[i].report;
    r.baseline = "FULL";
    r.rela_impr = rela_impr(r.auc, full_auc);
    result.rows.push_back({names[i], r.auc, *r.rela_impr});
  }
  return result;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::string out = "variant     auc      rela_impr\n";
  for (const AblationRow& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-10s  %.4f  %.2f%%\n", r.variant.c_str(), r.auc,
                  r.rela_impr);
    out += buf;
  }
  return out;
}

GradCheckResult check_model_gradients(const ModelConfig& config, const AblationConfig& ablation,
                                      std::uint64_t seed, std::size_t batch) {
  ModelConfig c = config;
  c.dropout = 0.0;
  ModelParams params(c, ablation, mix(seed));
  const std::vector<RawSample> samples = random_samples(c.features, batch, mix(seed + 1));
  const std::vector<SampleIds> ids = encode_all(samples, c.features);
  std::vector<double> labels;
  for (const RawSample& s : samples) labels.push_back(s.label);
  std::vector<Tensor> tensors = params.tensors();
  return grad_check(
      [&](Graph& g) { return loss(g, forward(g, params, ids).prediction, labels); }, tensors);
}

}  // namespace dei2n
