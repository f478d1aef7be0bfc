#pragma once

// DEI2N: instant-interest gate, soft/hard interest extraction with temporal
// attention, fusion, trigger-target interaction and the prediction head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dei2n/features.hpp"
#include "dei2n/graph.hpp"
#include "json.hpp"

namespace dei2n {

/// Which components are switched on. At least one of hard/soft interest
/// must stay enabled.
struct AblationConfig {
  bool use_ui2m = true;
  bool use_temporal = true;
  bool use_interaction = true;
  bool use_hard = true;
  bool use_soft = true;

  void validate() const;
  /// FULL, NO-UI2M, NO-TIM, NO-IL, NO-UHIM, NO-USIM (or a custom tag).
  std::string name() const;
  static AblationConfig from_name(const std::string& name);

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

/// The five single-component ablations plus the full model, in report order.
std::vector<std::string> ablation_variant_names();

struct ModelConfig {
  FeatureConfig features;
  std::size_t heads = 2;
  std::vector<std::size_t> ui2m_hidden{72, 36};
  std::vector<std::size_t> attention_hidden{80, 40};
  std::vector<std::size_t> interaction_hidden{144, 72};
  std::vector<std::size_t> final_hidden{200, 80};
  double dropout = 0.1;
  double layer_norm_eps = 1e-8;

  std::size_t head_dim() const { return features.model_dim() / heads; }
  /// Throws std::invalid_argument if head count does not divide the model
  /// width, a hidden list is empty, or the feature config is invalid.
  void validate() const;

  /// d_model=8, d_time=4, T=4, T_h=2 with small hidden layers; used for
  /// gradient checks.
  static ModelConfig tiny();
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const AblationConfig& c);
void from_json(const nlohmann::json& j, AblationConfig& c);

struct Dense {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

/// Stack of dense layers; the first `activated` layers are followed by a
/// learned-slope rectifier, the rest are linear.
struct Mlp {
  std::vector<Dense> layers;
  std::vector<Tensor> slopes;

  Tensor forward(Graph& g, const Tensor& x) const;
  std::size_t input_dim() const { return layers.front().weight.dim(0); }
  std::size_t output_dim() const { return layers.back().weight.dim(1); }
};

struct MhsaParams {
  std::vector<Tensor> query, key, value;  // per head, [(d_model + d_time) x d_head]
  Tensor output;                          // [d_model x d_model]
  Tensor norm_gain, norm_bias;            // [d_model]
};

/// All trainable tensors of the network.
class ModelParams {
 public:
  ModelParams(const ModelConfig& config, const AblationConfig& ablation, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const AblationConfig& ablation() const { return ablation_; }

  /// Every parameter with a stable, unique name, in construction order.
  const std::vector<std::pair<std::string, Tensor>>& named() const { return named_; }
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;
  /// Width of the concatenated head input under the current ablation.
  std::size_t head_input_dim() const;

  EmbeddingTables tables;
  MhsaParams mhsa;
  Mlp ui2m;
  Mlp trigger_unit;
  Mlp target_unit;
  Mlp hard_unit;
  Mlp interaction;
  Mlp head;

 private:
  Tensor& add(std::string name, Tensor t);
  Mlp make_mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden,
               std::size_t out, std::mt19937_64& rng);

  ModelConfig config_;
  AblationConfig ablation_;
  std::vector<std::pair<std::string, Tensor>> named_;
};

/// Batched, embedded model inputs.
struct ModelInputs {
  Tensor user;            // [B x user_profile_dim]
  Tensor context;         // [B x context_dim]
  Tensor trigger;         // [B x d_model]
  Tensor target;          // [B x d_model]
  Tensor behaviors;       // [B x T x d_model]
  Tensor times;           // [B x T x d_time]
  Tensor hard_behaviors;  // [B x T_h x d_model]
  Tensor hard_times;      // [B x T_h x d_time]
  Mask behavior_mask;     // [B x T]
  Mask hard_mask;         // [B x T_h]

  std::size_t batch() const { return user.dim(0); }
};

/// Gathers embeddings for a batch on the graph; padding rows are zero.
ModelInputs embed(Graph& g, const ModelParams& params, std::span<const SampleIds> batch);
/// Packs per-sample encoded values into constant batch tensors.
ModelInputs stack_encoded(std::span<const EncodedSample> samples);

/// Attention weights and gate outputs of one forward pass.
struct ForwardTrace {
  Tensor p_trigger;                    // [B]
  Tensor p_target;                     // [B]
  std::vector<Tensor> mhsa_weights;    // per head, [B x T x T]
  Tensor trigger_weights;              // [B x T]
  Tensor target_weights;               // [B x T]
  Tensor hard_weights;                 // [B x T_h]
};

struct ForwardResult {
  Tensor prediction;  // [B], in (0, 1)
  ForwardTrace trace;
};

/// Softmax(MLP(e_u, e_c, e_tr, sum(hard behaviors))) -> (p_tr, p_ta), each [B].
/// An undefined `hard_sum` is left out of the input.
std::pair<Tensor, Tensor> ui2m_forward(Graph& g, const Mlp& mlp, const Tensor& user,
                                       const Tensor& context, const Tensor& trigger,
                                       const Tensor& hard_sum);

/// Multi-head self-attention over concat(behaviors, times) followed by a
/// residual connection to `behaviors`, dropout and layer normalisation.
/// Padding rows of the result are zero; a sample without valid behaviors
/// yields an all-zero block. Per-head attention weights go to `weights`
/// when non-null.
Tensor mhsa_forward(Graph& g, const MhsaParams& p, const Tensor& behaviors, const Tensor& times,
                    const Mask& mask, double dropout, double eps,
                    std::vector<Tensor>* weights = nullptr);

/// Attention pooling of seq[B x L x d] against query[B x d], scored by an
/// MLP over (seq_j, time_j, query, seq_j * query, seq_j - query) and
/// softmax-normalised over valid positions. Empty rows pool to zero.
Tensor attention_unit(Graph& g, const Mlp& scorer, const Tensor& query, const Tensor& seq,
                      const Tensor& times, const Mask& mask, Tensor* weights = nullptr);

/// p_tr * e_tr + p_ta * e_ta, rowwise.
Tensor fuse(Graph& g, const Tensor& p_trigger, const Tensor& p_target, const Tensor& trigger_interest,
            const Tensor& target_interest);

/// MLP(concat(e_ta, e_tr, e_tr * e_ta)).
Tensor interaction(Graph& g, const Mlp& mlp, const Tensor& trigger, const Tensor& target);

ForwardResult forward(Graph& g, const ModelParams& params, const ModelInputs& inputs);
ForwardResult forward(Graph& g, const ModelParams& params, std::span<const SampleIds> batch);

/// Mean binary cross-entropy.
Tensor loss(Graph& g, const Tensor& predictions, std::span<const double> labels);

}  // namespace dei2n
