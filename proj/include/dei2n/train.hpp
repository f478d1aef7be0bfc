#pragma once

// Mini-batch training, evaluation, the ablation suite and per-page reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dei2n/features.hpp"
#include "dei2n/grad_check.hpp"
#include "dei2n/model.hpp"
#include "json.hpp"

namespace dei2n {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimiser with bias correction. Reads each parameter's
/// accumulated gradient on step().
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  std::size_t steps_ = 0;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  AblationConfig ablation;
  /// Architecture; vocabulary sizes are grown to fit the data.
  ModelConfig model;
  std::filesystem::path train_path, test_path;
  /// Written after every epoch when non-empty.
  std::filesystem::path checkpoint_path;
  /// Per-epoch progress on stderr.
  bool verbose = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct PageStats {
  std::int64_t page = 0;
  std::size_t samples = 0;
  std::size_t same_category = 0;
  double same_ctr = 0.0;        // NaN without same-category targets
  double different_ctr = 0.0;   // NaN without different-category targets
  double same_proportion = 0.0;
  double mean_p_trigger = 0.0;  // NaN when the model has no gate
};

struct MetricsReport {
  std::string variant;
  double auc = 0.0;
  double test_loss = 0.0;
  std::string baseline;
  std::optional<double> rela_impr;
  std::vector<double> epoch_loss;
  std::vector<PageStats> pages;
};

void to_json(nlohmann::json& j, const PageStats& p);
void to_json(nlohmann::json& j, const MetricsReport& r);
/// page,samples,same_category_ctr,different_category_ctr,same_category_proportion,mean_p_trigger
std::string page_csv(std::span<const PageStats> pages);

struct TrainResult {
  ModelParams params;
  MetricsReport report;
};

/// Trains on in-memory splits. Deterministic for a fixed config and seed.
/// Throws NumericalError on a non-finite loss.
TrainResult train(const TrainConfig& config, std::span<const RawSample> train_set,
                  std::span<const RawSample> test_set);
/// Loads config.train_path / config.test_path and trains.
TrainResult train(const TrainConfig& config);

struct Predictions {
  std::vector<double> ctr;
  std::vector<double> p_trigger;  // NaN when the model has no gate
};

/// Evaluation-mode forward passes, sharded across OpenMP threads with a
/// read-only parameter set. Output order matches input order.
Predictions predict(const ModelParams& params, std::span<const RawSample> samples,
                    std::size_t batch_size = 512);

/// AUC and mean loss of `params` on `samples`.
MetricsReport evaluate(const ModelParams& params, std::span<const RawSample> samples,
                       std::size_t batch_size = 512);

/// Empirical same/different-category CTR, same-category exposure share and
/// mean predicted p_tr for each page present in `samples`.
std::vector<PageStats> page_report(const ModelParams& params, std::span<const RawSample> samples);

struct AblationRow {
  std::string variant;
  double auc = 0.0;
  double rela_impr = 0.0;  // versus FULL
};

struct AblationResult {
  std::vector<AblationRow> rows;  // ablation_variant_names() order
  std::vector<TrainResult> runs;  // same order
};

/// Trains FULL and the five single-component ablations with identical
/// seeds and data order. When base.checkpoint_path is set, each variant
/// writes <stem>-<VARIANT><ext> beside it.
AblationResult ablation_suite(const TrainConfig& base, std::span<const RawSample> train_set,
                              std::span<const RawSample> test_set);

std::string ablation_table(std::span<const AblationRow> rows);

/// Finite-difference check of every parameter of a freshly initialised
/// model (dropout off) on `batch` random samples.
GradCheckResult check_model_gradients(const ModelConfig& config, const AblationConfig& ablation,
                                      std::uint64_t seed, std::size_t batch = 4);

}  // namespace dei2n
