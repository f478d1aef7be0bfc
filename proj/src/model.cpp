#include "dei2n/model.hpp"

#include <cmath>
#include <stdexcept>

namespace dei2n {
namespace {

Tensor glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(in * out);
  for (double& v : values) v = dist(rng);
  return Tensor({in, out}, std::move(values), true);
}

Tensor constant_rows(const Mask& mask) {
  std::vector<double> v(mask.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask[i] ? 1.0 : 0.0;
  return Tensor(mask.shape, std::move(v));
}

// Per-row flag (1 if any valid position) and a mask whose empty rows are
// filled so softmax stays defined; the flag zeroes those rows afterwards.
std::pair<Tensor, Mask> guard_empty_rows(const Mask& mask) {
  const std::size_t n = mask.shape.back(), rows = mask.size() / n;
  Mask safe = mask;
  std::vector<double> any(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j)
      if (mask[r * n + j]) any[r] = 1.0;
    if (any[r] == 0.0)
      for (std::size_t j = 0; j < n; ++j) safe.bits[r * n + j] = 1;
  }
  return {Tensor({rows}, std::move(any)), std::move(safe)};
}

Tensor item_embedding(Graph& g, const EmbeddingTables& t, std::span<const std::size_t> item,
                      std::span<const std::size_t> category, std::span<const std::size_t> company,
                      const Shape& lead) {
  return g.concat({g.gather(t.item, item, lead), g.gather(t.category, category, lead),
                   g.gather(t.company, company, lead)},
                  lead.size());
}

}  // namespace

// --- AblationConfig -------------------------------------------------------

void AblationConfig::validate() const {
  if (!use_hard && !use_soft)
    throw std::invalid_argument("ablation must keep hard or soft interest enabled");
}

std::string AblationConfig::name() const {
  for (const std::string& n : ablation_variant_names())
    if (from_name(n) == *this) return n;
  std::string tag = "CUSTOM";
  if (!use_ui2m) tag += "-NO-UI2M";
  if (!use_temporal) tag += "-NO-TIM";
  if (!use_interaction) tag += "-NO-IL";
  if (!use_hard) tag += "-NO-UHIM";
  if (!use_soft) tag += "-NO-USIM";
  return tag;
}

AblationConfig AblationConfig::from_name(const std::string& name) {
  AblationConfig a;
  if (name == "FULL") return a;
  if (name == "NO-UI2M") a.use_ui2m = false;
  else if (name == "NO-TIM") a.use_temporal = false;
  else if (name == "NO-IL") a.use_interaction = false;
  else if (name == "NO-UHIM") a.use_hard = false;
  else if (name == "NO-USIM") a.use_soft = false;
  else throw std::invalid_argument("unknown ablation variant '" + name + "'");
  return a;
}

std::vector<std::string> ablation_variant_names() {
  return {"NO-UI2M", "NO-TIM", "NO-IL", "NO-UHIM", "NO-USIM", "FULL"};
}

// --- ModelConfig ----------------------------------------------------------

void ModelConfig::validate() const {
  features.validate();
  if (heads == 0 || features.model_dim() % heads != 0)
    throw std::invalid_argument("head count " + std::to_string(heads) +
                                " must divide the model width " +
                                std::to_string(features.model_dim()));
  if (ui2m_hidden.empty() || attention_hidden.empty() || interaction_hidden.empty() ||
      final_hidden.empty())
    throw std::invalid_argument("every MLP needs at least one hidden layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  FeatureConfig& f = c.features;
  f.item_vocab = 7;
  f.category_vocab = 4;
  f.company_vocab = 4;
  f.user_vocab = 4;
  f.country_vocab = 3;
  f.page_vocab = 5;
  f.item_dim = 4;
  f.category_dim = 2;
  f.company_dim = 2;
  f.user_dim = 2;
  f.country_dim = 2;
  f.page_dim = 2;
  f.time_dim = 4;
  f.max_behaviors = 4;
  f.max_hard = 2;
  f.time_factor = 60;
  f.max_bucket = 9;
  c.heads = 2;
  c.ui2m_hidden = {6, 4};
  c.attention_hidden = {6, 4};
  c.interaction_hidden = {8, 8};
  c.final_hidden = {6, 4};
  c.dropout = 0.0;
  return c;
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = {{"item_vocab", c.item_vocab},       {"category_vocab", c.category_vocab},
       {"company_vocab", c.company_vocab}, {"user_vocab", c.user_vocab},
       {"country_vocab", c.country_vocab}, {"page_vocab", c.page_vocab},
       {"item_dim", c.item_dim},           {"category_dim", c.category_dim},
       {"company_dim", c.company_dim},     {"user_dim", c.user_dim},
       {"country_dim", c.country_dim},     {"page_dim", c.page_dim},
       {"time_dim", c.time_dim},           {"max_behaviors", c.max_behaviors},
       {"max_hard", c.max_hard},           {"time_factor", c.time_factor},
       {"max_bucket", c.max_bucket}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  FeatureConfig d;
  c.item_vocab = j.value("item_vocab", d.item_vocab);
  c.category_vocab = j.value("category_vocab", d.category_vocab);
  c.company_vocab = j.value("company_vocab", d.company_vocab);
  c.user_vocab = j.value("user_vocab", d.user_vocab);
  c.country_vocab = j.value("country_vocab", d.country_vocab);
  c.page_vocab = j.value("page_vocab", d.page_vocab);
  c.item_dim = j.value("item_dim", d.item_dim);
  c.category_dim = j.value("category_dim", d.category_dim);
  c.company_dim = j.value("company_dim", d.company_dim);
  c.user_dim = j.value("user_dim", d.user_dim);
  c.country_dim = j.value("country_dim", d.country_dim);
  c.page_dim = j.value("page_dim", d.page_dim);
  c.time_dim = j.value("time_dim", d.time_dim);
  c.max_behaviors = j.value("max_behaviors", d.max_behaviors);
  c.max_hard = j.value("max_hard", d.max_hard);
  c.time_factor = j.value("time_factor", d.time_factor);
  c.max_bucket = j.value("max_bucket", d.max_bucket);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"features", c.features},
       {"heads", c.heads},
       {"ui2m_hidden", c.ui2m_hidden},
       {"attention_hidden", c.attention_hidden},
       {"interaction_hidden", c.interaction_hidden},
       {"final_hidden", c.final_hidden},
       {"dropout", c.dropout},
       {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.features = j.value("features", d.features);
  c.heads = j.value("heads", d.heads);
  c.ui2m_hidden = j.value("ui2m_hidden", d.ui2m_hidden);
  c.attention_hidden = j.value("attention_hidden", d.attention_hidden);
  c.interaction_hidden = j.value("interaction_hidden", d.interaction_hidden);
  c.final_hidden = j.value("final_hidden", d.final_hidden);
  c.dropout = j.value("dropout", d.dropout);
  c.layer_norm_eps = j.value("layer_norm_eps", d.layer_norm_eps);
}

void to_json(nlohmann::json& j, const AblationConfig& c) {
  j = {{"use_ui2m", c.use_ui2m},
       {"use_temporal", c.use_temporal},
       {"use_interaction", c.use_interaction},
       {"use_hard", c.use_hard},
       {"use_soft", c.use_soft}};
}

void from_json(const nlohmann::json& j, AblationConfig& c) {
  c.use_ui2m = j.value("use_ui2m", true);
  c.use_temporal = j.value("use_temporal", true);
  c.use_interaction = j.value("use_interaction", true);
  c.use_hard = j.value("use_hard", true);
  c.use_soft = j.value("use_soft", true);
}

// --- Parameters -----------------------------------------------------------

Tensor Mlp::forward(Graph& g, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = g.linear(h, layers[i].weight, layers[i].bias);
    if (i < slopes.size()) h = g.prelu(h, slopes[i]);
  }
  return h;
}

Tensor& ModelParams::add(std::string name, Tensor t) {
  t.set_requires_grad(true);
  named_.emplace_back(std::move(name), t);
  return named_.back().second;
}

Mlp ModelParams::make_mlp(const std::string& name, std::size_t in,
                          const std::vector<std::size_t>& hidden, std::size_t out,
                          std::mt19937_64& rng) {
  Mlp mlp;
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string prefix = name + ".hidden" + std::to_string(i);
    mlp.layers.push_back({add(prefix + ".weight", glorot(width, hidden[i], rng)),
                          add(prefix + ".bias", Tensor({hidden[i]}))});
    mlp.slopes.push_back(add(prefix + ".slope", Tensor::filled({hidden[i]}, 0.25)));
    width = hidden[i];
  }
  if (out > 0)
    mlp.layers.push_back({add(name + ".out.weight", glorot(width, out, rng)),
                          add(name + ".out.bias", Tensor({out}))});
  return mlp;
}

ModelParams::ModelParams(const ModelConfig& config, const AblationConfig& ablation,
                         std::uint64_t seed)
    : config_(config), ablation_(ablation) {
  config_.validate();
  ablation_.validate();
  std::mt19937_64 rng(seed);
  const FeatureConfig& f = config_.features;
  const std::size_t dm = f.model_dim(), dt = f.time_dim, dh = config_.head_dim();

  tables = EmbeddingTables::create(f, rng);
  add("embedding.item", tables.item);
  add("embedding.category", tables.category);
  add("embedding.company", tables.company);
  add("embedding.user", tables.user);
  add("embedding.country", tables.country);
  add("embedding.page", tables.page);
  add("embedding.time", tables.time);

  for (std::size_t h = 0; h < config_.heads; ++h) {
    const std::string prefix = "mhsa.head" + std::to_string(h);
    mhsa.query.push_back(add(prefix + ".query", glorot(dm + dt, dh, rng)));
    mhsa.key.push_back(add(prefix + ".key", glorot(dm + dt, dh, rng)));
    mhsa.value.push_back(add(prefix + ".value", glorot(dm + dt, dh, rng)));
  }
  mhsa.output = add("mhsa.output", glorot(dm, dm, rng));
  mhsa.norm_gain = add("mhsa.norm.gain", Tensor::filled({dm}, 1.0));
  mhsa.norm_bias = add("mhsa.norm.bias", Tensor({dm}));

  const std::size_t gate_in = f.user_profile_dim() + f.context_dim() + dm + (ablation_.use_hard ? dm : 0);
  ui2m = make_mlp("ui2m", gate_in, config_.ui2m_hidden, 2, rng);
  const std::size_t unit_in = 4 * dm + dt;
  trigger_unit = make_mlp("attention.trigger", unit_in, config_.attention_hidden, 1, rng);
  target_unit = make_mlp("attention.target", unit_in, config_.attention_hidden, 1, rng);
  hard_unit = make_mlp("attention.hard", unit_in, config_.attention_hidden, 1, rng);
  interaction = make_mlp("interaction", 3 * dm, config_.interaction_hidden, 0, rng);
  head = make_mlp("head", head_input_dim(), config_.final_hidden, 1, rng);
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_) n += t.size();
  return n;
}

std::size_t ModelParams::head_input_dim() const {
  const FeatureConfig& f = config_.features;
  std::size_t width = f.user_profile_dim();
  if (ablation_.use_soft) width += f.model_dim();
  if (ablation_.use_hard) width += f.model_dim();
  if (ablation_.use_interaction) width += config_.interaction_hidden.back();
  return width;
}

// --- Inputs ---------------------------------------------------------------

ModelInputs embed(Graph& g, const ModelParams& params, std::span<const SampleIds> batch) {
  const FeatureConfig& f = params.config().features;
  const EmbeddingTables& t = params.tables;
  const std::size_t B = batch.size(), T = f.max_behaviors, Th = f.max_hard;
  if (B == 0) throw std::invalid_argument("embed: empty batch");

  std::vector<std::size_t> user(B), country(B), page(B);
  std::vector<std::size_t> tr_item(B), tr_cat(B), tr_comp(B), ta_item(B), ta_cat(B), ta_comp(B);
  std::vector<std::size_t> b_item(B * T), b_cat(B * T), b_comp(B * T), bucket(B * T);
  std::vector<std::size_t> h_item(B * Th, 0), h_cat(B * Th, 0), h_comp(B * Th, 0), h_bucket(B * Th, 0);
  std::vector<std::uint8_t> mask(B * T), hard_mask(B * Th, 0);

  for (std::size_t i = 0; i < B; ++i) {
    const SampleIds& s = batch[i];
    if (s.behaviors.size() != T || s.buckets.size() != T || s.mask.size() != T ||
        s.hard_indices.size() > Th)
      throw std::invalid_argument("embed: sample ids were encoded with different sequence caps");
    user[i] = s.user;
    country[i] = s.country;
    page[i] = s.page;
    tr_item[i] = s.trigger[0], tr_cat[i] = s.trigger[1], tr_comp[i] = s.trigger[2];
    ta_item[i] = s.target[0], ta_cat[i] = s.target[1], ta_comp[i] = s.target[2];
    for (std::size_t j = 0; j < T; ++j) {
      b_item[i * T + j] = s.behaviors[j][0];
      b_cat[i * T + j] = s.behaviors[j][1];
      b_comp[i * T + j] = s.behaviors[j][2];
      bucket[i * T + j] = s.buckets[j];
      mask[i * T + j] = s.mask[j];
    }
    for (std::size_t j = 0; j < s.hard_indices.size(); ++j) {
      const std::size_t pos = s.hard_indices[j];
      h_item[i * Th + j] = s.behaviors[pos][0];
      h_cat[i * Th + j] = s.behaviors[pos][1];
      h_comp[i * Th + j] = s.behaviors[pos][2];
      h_bucket[i * Th + j] = s.buckets[pos];
      hard_mask[i * Th + j] = 1;
    }
  }

  ModelInputs in;
  in.behavior_mask = Mask({B, T}, std::move(mask));
  in.hard_mask = Mask({B, Th}, std::move(hard_mask));
  const Tensor keep = constant_rows(in.behavior_mask);
  const Tensor hard_keep = constant_rows(in.hard_mask);

  in.user = g.concat({g.gather(t.user, user, {B}), g.gather(t.country, country, {B})}, 1);
  in.context = g.gather(t.page, page, {B});
  in.trigger = item_embedding(g, t, tr_item, tr_cat, tr_comp, {B});
  in.target = item_embedding(g, t, ta_item, ta_cat, ta_comp, {B});
  in.behaviors = g.mul_rows(item_embedding(g, t, b_item, b_cat, b_comp, {B, T}), keep);
  in.times = g.mul_rows(g.gather(t.time, bucket, {B, T}), keep);
  in.hard_behaviors = g.mul_rows(item_embedding(g, t, h_item, h_cat, h_comp, {B, Th}), hard_keep);
  in.hard_times = g.mul_rows(g.gather(t.time, h_bucket, {B, Th}), hard_keep);
  return in;
}

ModelInputs stack_encoded(std::span<const EncodedSample> samples) {
  if (samples.empty()) throw std::invalid_argument("stack_encoded: empty batch");
  const EncodedSample& first = samples.front();
  const std::size_t B = samples.size();
  const std::size_t T = first.behaviors.dim(0), dm = first.behaviors.dim(1);
  const std::size_t dt = first.times.dim(1), Th = first.hard_mask.size();

  auto stack = [&](auto member, Shape shape) {
    Tensor out(shape);
    const std::size_t chunk = out.size() / B;
    for (std::size_t i = 0; i < B; ++i) {
      auto src = (samples[i].*member).values();
      std::copy(src.begin(), src.end(), out.values().begin() + i * chunk);
    }
    return out;
  };

  ModelInputs in;
  in.user = stack(&EncodedSample::user, {B, first.user.size()});
  in.context = stack(&EncodedSample::context, {B, first.context.size()});
  in.trigger = stack(&EncodedSample::trigger, {B, dm});
  in.target = stack(&EncodedSample::target, {B, dm});
  in.behaviors = stack(&EncodedSample::behaviors, {B, T, dm});
  in.times = stack(&EncodedSample::times, {B, T, dt});
  in.hard_behaviors = Tensor({B, Th, dm});
  in.hard_times = Tensor({B, Th, dt});
  std::vector<std::uint8_t> mask, hard_mask;
  for (std::size_t i = 0; i < B; ++i) {
    const EncodedSample& s = samples[i];
    mask.insert(mask.end(), s.behavior_mask.begin(), s.behavior_mask.end());
    hard_mask.insert(hard_mask.end(), s.hard_mask.begin(), s.hard_mask.end());
    for (std::size_t j = 0; j < s.hard_indices.size(); ++j) {
      const std::size_t pos = s.hard_indices[j];
      auto b = s.behaviors.values().subspan(pos * dm, dm);
      auto t = s.times.values().subspan(pos * dt, dt);
      std::copy(b.begin(), b.end(), in.hard_behaviors.values().begin() + (i * Th + j) * dm);
      std::copy(t.begin(), t.end(), in.hard_times.values().begin() + (i * Th + j) * dt);
    }
  }
  in.behavior_mask = Mask({B, T}, std::move(mask));
  in.hard_mask = Mask({B, Th}, std::move(hard_mask));
  return in;
}

// --- Layers ---------------------------------------------------------------

std::pair<Tensor, Tensor> ui2m_forward(Graph& g, const Mlp& mlp, const Tensor& user,
                                       const Tensor& context, const Tensor& trigger,
                                       const Tensor& hard_sum) {
  const std::size_t B = user.dim(0);
  std::vector<Tensor> parts{user, context, trigger};
  if (hard_sum.defined()) parts.push_back(hard_sum);
  const Tensor probs = g.softmax(mlp.forward(g, g.concat(parts, 1)));
  return {g.reshape(g.slice(probs, 1, 0, 1), {B}), g.reshape(g.slice(probs, 1, 1, 1), {B})};
}

Tensor mhsa_forward(Graph& g, const MhsaParams& p, const Tensor& behaviors, const Tensor& times,
                    const Mask& mask, double dropout, double eps, std::vector<Tensor>* weights) {
  const std::size_t B = behaviors.dim(0), T = behaviors.dim(1);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.query.front().dim(1)));

  // Each query row attends over the valid keys of its own sample.
  auto [any, safe] = guard_empty_rows(mask);
  Mask key_mask(Shape{B, T, T}, std::vector<std::uint8_t>(B * T * T));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t q = 0; q < T; ++q)
      for (std::size_t k = 0; k < T; ++k) key_mask.bits[(b * T + q) * T + k] = safe.bits[b * T + k];

  const Tensor x = g.concat({behaviors, times}, 2);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < p.query.size(); ++h) {
    const Tensor q = g.matmul(x, p.query[h]);
    const Tensor k = g.matmul(x, p.key[h]);
    const Tensor v = g.matmul(x, p.value[h]);
    const Tensor att = g.masked_softmax(g.scale(g.bmm(q, k, true), inv_sqrt), key_mask);
    if (weights) weights->push_back(att);
    heads.push_back(g.bmm(att, v));
  }
  const Tensor projected = g.matmul(g.concat(heads, 2), p.output);
  const Tensor normed =
      g.layer_norm(g.add(behaviors, g.dropout(projected, dropout)), p.norm_gain, p.norm_bias, eps);
  return g.mul_rows(normed, constant_rows(mask));
}

Tensor attention_unit(Graph& g, const Mlp& scorer, const Tensor& query, const Tensor& seq,
                      const Tensor& times, const Mask& mask, Tensor* weights) {
  const std::size_t B = seq.dim(0), L = seq.dim(1), d = seq.dim(2);
  const std::size_t dt = times.dim(2);
  const Tensor q = g.expand(query, 1, L);

  // The first scorer layer sees (seq, time, q, seq*q, seq-q). Splitting its
  // weight by input block lets the query terms be applied once per sample:
  //   seq (Ws + Wd) + time Wt + (seq*q) Wp + q (Wq - Wd).
  const Dense& first = scorer.layers.front();
  const Tensor w_seq = g.slice(first.weight, 0, 0, d);
  const Tensor w_time = g.slice(first.weight, 0, d, dt);
  const Tensor w_query = g.slice(first.weight, 0, d + dt, d);
  const Tensor w_prod = g.slice(first.weight, 0, 2 * d + dt, d);
  const Tensor w_diff = g.slice(first.weight, 0, 3 * d + dt, d);
  const Tensor w_rows = g.concat({g.add(w_seq, w_diff), w_time, w_prod}, 0);
  const Tensor per_query = g.linear(query, g.sub(w_query, w_diff), first.bias);
  Tensor h = g.add(g.matmul(g.concat({seq, times, g.hadamard(seq, q)}, 2), w_rows),
                   g.expand(per_query, 1, L));
  if (!scorer.slopes.empty()) h = g.prelu(h, scorer.slopes[0]);
  for (std::size_t i = 1; i < scorer.layers.size(); ++i) {
    h = g.linear(h, scorer.layers[i].weight, scorer.layers[i].bias);
    if (i < scorer.slopes.size()) h = g.prelu(h, scorer.slopes[i]);
  }
  const Tensor scores = g.reshape(h, {B, L});
  auto [any, safe] = guard_empty_rows(mask);
  const Tensor w = g.masked_softmax(scores, safe);
  if (weights) *weights = w;
  const Tensor pooled = g.reshape(g.bmm(g.reshape(w, {B, 1, L}), seq), {B, d});
  return g.mul_rows(pooled, any);
}

Tensor fuse(Graph& g, const Tensor& p_trigger, const Tensor& p_target,
            const Tensor& trigger_interest, const Tensor& target_interest) {
  return g.add(g.mul_rows(trigger_interest, p_trigger), g.mul_rows(target_interest, p_target));
}

Tensor interaction(Graph& g, const Mlp& mlp, const Tensor& trigger, const Tensor& target) {
  return mlp.forward(g, g.concat({target, trigger, g.hadamard(trigger, target)}, 1));
}

ForwardResult forward(Graph& g, const ModelParams& params, const ModelInputs& in) {
  const ModelConfig& c = params.config();
  const AblationConfig& a = params.ablation();
  const std::size_t B = in.batch();

  Tensor times = in.times;
  Tensor hard_times = in.hard_times;
  if (!a.use_temporal) {
    times = Tensor(in.times.shape());
    hard_times = Tensor(in.hard_times.shape());
  }

  ForwardResult result;
  ForwardTrace& trace = result.trace;
  std::vector<Tensor> parts;

  if (a.use_soft) {
    const Tensor refined = mhsa_forward(g, params.mhsa, in.behaviors, times, in.behavior_mask,
                                        c.dropout, c.layer_norm_eps, &trace.mhsa_weights);
    const Tensor trigger_interest = attention_unit(g, params.trigger_unit, in.trigger, refined,
                                                   times, in.behavior_mask, &trace.trigger_weights);
    const Tensor target_interest = attention_unit(g, params.target_unit, in.target, refined, times,
                                                  in.behavior_mask, &trace.target_weights);
    if (a.use_ui2m) {
      const Tensor hard_sum =
          a.use_hard ? g.sum(g.mul_rows(in.hard_behaviors, constant_rows(in.hard_mask)), 1) : Tensor();
      std::tie(trace.p_trigger, trace.p_target) =
          ui2m_forward(g, params.ui2m, in.user, in.context, in.trigger, hard_sum);
    } else {
      trace.p_trigger = Tensor::filled({B}, 0.5);
      trace.p_target = Tensor::filled({B}, 0.5);
    }
    parts.push_back(fuse(g, trace.p_trigger, trace.p_target, trigger_interest, target_interest));
  }
  if (a.use_hard)
    parts.push_back(attention_unit(g, params.hard_unit, in.target, in.hard_behaviors, hard_times,
                                   in.hard_mask, &trace.hard_weights));
  if (a.use_interaction) parts.push_back(interaction(g, params.interaction, in.trigger, in.target));
  parts.push_back(in.user);

  const Tensor logits = params.head.forward(g, g.concat(parts, 1));
  result.prediction = g.reshape(g.sigmoid(logits), {B});
  return result;
}

ForwardResult forward(Graph& g, const ModelParams& params, std::span<const SampleIds> batch) {
  return forward(g, params, embed(g, params, batch));
}

Tensor loss(Graph& g, const Tensor& predictions, std::span<const double> labels) {
  return g.bce_loss(predictions, labels);
}

}  // namespace dei2n
