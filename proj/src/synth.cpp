#include "dei2n/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "dei2n/errors.hpp"

namespace dei2n {
namespace {

using nlohmann::json;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> dirichlet(std::size_t n, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(n);
  double total = 0;
  for (double& v : p) total += (v = gamma(rng));
  if (total <= 0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

std::size_t draw(const std::vector<double>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return dist(rng);
}

struct Catalog {
  std::size_t per_category;
  std::vector<std::int64_t> company;  // by item index

  ItemRef item(std::size_t category, std::size_t index) const {
    const std::size_t flat = category * per_category + index;
    return {static_cast<std::int64_t>(flat + 1), static_cast<std::int64_t>(category + 1),
            company[flat]};
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 1 || n_countries < 1 || n_categories < 1 || items_per_category < 1 ||
      n_sessions < 1 || pages_per_session < 1 || items_per_page < 1)
    throw std::invalid_argument("synthetic config counts must be >= 1");
  if (!(page_decay > 0.0 && page_decay <= 1.0))
    throw std::invalid_argument("page_decay must be in (0, 1]");
  if (!(trigger_affinity >= 0.0)) throw std::invalid_argument("trigger_affinity must be >= 0");
  if (history_min > history_max) throw std::invalid_argument("history_min exceeds history_max");
  if (!(preference_concentration > 0.0))
    throw std::invalid_argument("preference_concentration must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in [0, 1)");
  if (span_seconds < 1 || history_seconds < 1 || page_interval_seconds < 0)
    throw std::invalid_argument("time spans must be positive");
}

SynthConfig SynthConfig::fig2() { return SynthConfig{}; }

SynthConfig SynthConfig::tiny() {
  SynthConfig c;
  c.n_users = 50;
  c.n_countries = 3;
  c.n_categories = 5;
  c.items_per_category = 10;
  c.n_sessions = 12;
  c.history_min = 2;
  c.history_max = 12;
  return c;
}

void to_json(json& j, const SynthConfig& c) {
  j = {{"n_users", c.n_users},
       {"n_countries", c.n_countries},
       {"n_categories", c.n_categories},
       {"items_per_category", c.items_per_category},
       {"n_sessions", c.n_sessions},
       {"pages_per_session", c.pages_per_session},
       {"items_per_page", c.items_per_page},
       {"history_min", c.history_min},
       {"history_max", c.history_max},
       {"trigger_affinity", c.trigger_affinity},
       {"page_decay", c.page_decay},
       {"preference_weight", c.preference_weight},
       {"base_logit", c.base_logit},
       {"preference_concentration", c.preference_concentration},
       {"test_fraction", c.test_fraction},
       {"start_ts", c.start_ts},
       {"span_seconds", c.span_seconds},
       {"history_seconds", c.history_seconds},
       {"page_interval_seconds", c.page_interval_seconds},
       {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  const SynthConfig d = c;
  c.n_users = j.value("n_users", d.n_users);
  c.n_countries = j.value("n_countries", d.n_countries);
  c.n_categories = j.value("n_categories", d.n_categories);
  c.items_per_category = j.value("items_per_category", d.items_per_category);
  c.n_sessions = j.value("n_sessions", d.n_sessions);
  c.pages_per_session = j.value("pages_per_session", d.pages_per_session);
  c.items_per_page = j.value("items_per_page", d.items_per_page);
  c.history_min = j.value("history_min", d.history_min);
  c.history_max = j.value("history_max", d.history_max);
  c.trigger_affinity = j.value("trigger_affinity", d.trigger_affinity);
  c.page_decay = j.value("page_decay", d.page_decay);
  c.preference_weight = j.value("preference_weight", d.preference_weight);
  c.base_logit = j.value("base_logit", d.base_logit);
  c.preference_concentration = j.value("preference_concentration", d.preference_concentration);
  c.test_fraction = j.value("test_fraction", d.test_fraction);
  c.start_ts = j.value("start_ts", d.start_ts);
  c.span_seconds = j.value("span_seconds", d.span_seconds);
  c.history_seconds = j.value("history_seconds", d.history_seconds);
  c.page_interval_seconds = j.value("page_interval_seconds", d.page_interval_seconds);
  c.seed = j.value("seed", d.seed);
}

SyntheticDataset generate_synthetic(const SynthConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  const std::size_t C = c.n_categories;

  Catalog catalog{c.items_per_category, std::vector<std::int64_t>(C * c.items_per_category)};
  std::uniform_int_distribution<std::int64_t> company_dist(1, static_cast<std::int64_t>(2 * C));
  for (auto& company : catalog.company) company = company_dist(rng);

  std::vector<std::vector<double>> preference(c.n_users);
  std::vector<std::int64_t> country(c.n_users);
  std::uniform_int_distribution<std::int64_t> country_dist(1, static_cast<std::int64_t>(c.n_countries));
  for (std::size_t u = 0; u < c.n_users; ++u) {
    preference[u] = dirichlet(C, c.preference_concentration, rng);
    country[u] = country_dist(rng);
  }

  std::vector<std::int64_t> session_ts(c.n_sessions);
  std::uniform_int_distribution<std::int64_t> when(0, c.span_seconds - 1);
  for (auto& ts : session_ts) ts = c.start_ts + c.history_seconds + when(rng);
  std::sort(session_ts.begin(), session_ts.end());

  std::uniform_int_distribution<std::size_t> pick_user(0, c.n_users - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, c.items_per_category - 1);
  std::uniform_int_distribution<std::size_t> history_len(c.history_min, c.history_max);
  std::uniform_int_distribution<std::int64_t> lookback(1, c.history_seconds);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n_test = static_cast<std::size_t>(
      std::floor(c.test_fraction * static_cast<double>(c.n_sessions)));
  const std::size_t first_test = c.n_sessions - n_test;

  SyntheticDataset data;
  for (std::size_t s = 0; s < c.n_sessions; ++s) {
    const std::size_t u = pick_user(rng);
    const auto& pref = preference[u];

    std::vector<Behavior> history(history_len(rng));
    for (Behavior& b : history) {
      b.item = catalog.item(draw(pref, rng), pick_item(rng));
      b.ts = session_ts[s] - lookback(rng);
    }
    std::stable_sort(history.begin(), history.end(),
                     [](const Behavior& a, const Behavior& b) { return a.ts < b.ts; });

    const std::size_t trigger_cat = draw(pref, rng);
    const ItemRef trigger = catalog.item(trigger_cat, pick_item(rng));
    std::vector<double> other = pref;
    other[trigger_cat] = 0.0;
    const bool has_other = C > 1 && std::accumulate(other.begin(), other.end(), 0.0) > 0.0;

    auto& split = s < first_test ? data.train : data.test;
    for (std::size_t p = 1; p <= c.pages_per_session; ++p) {
      const double decay = std::pow(c.page_decay, static_cast<double>(p - 1));
      const double same_prob = std::min(1.0, 0.9 * decay + 0.05);
      for (std::size_t k = 0; k < c.items_per_page; ++k) {
        const bool same = !has_other || unit(rng) < same_prob;
        const std::size_t cat = same ? trigger_cat : draw(other, rng);
        const double logit = c.base_logit + c.trigger_affinity * decay * (same ? 1.0 : 0.0) +
                             c.preference_weight * pref[cat];
        RawSample sample;
        sample.user_id = static_cast<std::int64_t>(u + 1);
        sample.country_id = country[u];
        sample.behaviors = history;
        sample.trigger = trigger;
        sample.target = catalog.item(cat, pick_item(rng));
        sample.page = static_cast<std::int64_t>(p);
        sample.ts = session_ts[s] + static_cast<std::int64_t>(p - 1) * c.page_interval_seconds;
        sample.label = unit(rng) < sigmoid(logit) ? 1 : 0;
        split.push_back(std::move(sample));
      }
    }
  }

  data.manifest = count_manifest(data.train, data.test);
  data.manifest.generator = c;
  data.manifest.config_hash = config_hash(data.manifest.generator);
  return data;
}

void write_dataset_dir(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir);
  const DatasetPaths paths(dir);
  write_dataset(paths.train, data.train);
  write_dataset(paths.test, data.test);
  write_json_file(paths.manifest, data.manifest);
}

void to_json(json& j, const Event& e) {
  j = {{"user_id", e.user_id}, {"country_id", e.country_id}, {"item", e.item}, {"ts", e.ts},
       {"kind", e.kind},       {"page", e.page},             {"label", e.label}};
}

Event event_from_json(const json& j) {
  Event e;
  try {
    e.user_id = j.at("user_id").get<std::int64_t>();
    e.country_id = j.value("country_id", std::int64_t{0});
    const json& item = j.at("item");
    e.item = {item.at("item_id").get<std::int64_t>(), item.at("category_id").get<std::int64_t>(),
              item.at("company_id").get<std::int64_t>()};
    e.ts = j.at("ts").get<std::int64_t>();
    e.kind = j.value("kind", std::string("exposure"));
    e.page = j.value("page", std::int64_t{1});
    e.label = j.value("label", 0);
  } catch (const json::exception& ex) {
    throw DataError(std::string("malformed event: ") + ex.what());
  }
  if (e.kind != "click" && e.kind != "exposure")
    throw DataError("event kind must be 'click' or 'exposure', got '" + e.kind + "'");
  if (e.label != 0 && e.label != 1) throw DataError("event label must be 0 or 1");
  return e;
}

std::vector<Event> load_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event log " + path.string());
  std::vector<Event> events;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    try {
      events.push_back(event_from_json(json::parse(text)));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return events;
}

std::vector<RawSample> synthesize_triggers(std::span<const Event> events,
                                           std::int64_t window_seconds) {
  if (window_seconds < 0) throw std::invalid_argument("trigger window must be non-negative");
  std::map<std::int64_t, std::vector<Behavior>> clicks;
  std::map<std::int64_t, std::int64_t> last_ts;
  std::vector<RawSample> samples;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    auto [it, fresh] = last_ts.try_emplace(e.user_id, e.ts);
    if (!fresh && e.ts < it->second)
      throw DataError("event " + std::to_string(i) + " for user " + std::to_string(e.user_id) +
                      " is earlier than the previous event of that user");
    it->second = e.ts;

    auto& history = clicks[e.user_id];
    if (e.kind == "exposure" && !history.empty()) {
      const Behavior& latest = history.back();
      if (e.ts - latest.ts <= window_seconds) {
        RawSample s;
        s.user_id = e.user_id;
        s.country_id = e.country_id;
        s.behaviors = history;
        s.trigger = latest.item;
        s.target = e.item;
        s.page = e.page;
        s.ts = e.ts;
        s.label = e.label;
        samples.push_back(std::move(s));
      }
    }
    if (e.is_click()) history.push_back({e.item, e.ts});
  }
  return samples;
}

std::vector<RawSample> negative_sample(std::span<const RawSample> positives,
                                       std::span<const ItemRef> pool, std::size_t ratio,
                                       std::uint64_t seed) {
  if (pool.empty()) throw std::invalid_argument("negative sampling needs a non-empty item pool");
  if (ratio < 1) throw std::invalid_argument("negative sampling ratio must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<RawSample> out;
  out.reserve(positives.size() * (1 + ratio));
  for (const RawSample& pos : positives) {
    const bool has_alternative = std::any_of(pool.begin(), pool.end(), [&](const ItemRef& item) {
      return item.item_id != pos.target.item_id;
    });
    if (!has_alternative)
      throw std::invalid_argument("item pool holds no item other than target " +
                                  std::to_string(pos.target.item_id));
    out.push_back(pos);
    for (std::size_t r = 0; r < ratio; ++r) {
      ItemRef item;
      do {
        item = pool[pick(rng)];
      } while (item.item_id == pos.target.item_id);
      RawSample neg = pos;
      neg.target = item;
      neg.label = 0;
      out.push_back(std::move(neg));
    }
  }
  return out;
}

std::vector<RawSample> random_samples(const FeatureConfig& f, std::size_t count,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto id = [&](std::size_t vocab) {
    return static_cast<std::int64_t>(std::uniform_int_distribution<std::size_t>(0, vocab)(rng));
  };
  // Few categories so that hard subsequences are usually non-empty.
  const std::size_t categories = std::min<std::size_t>(f.category_vocab, 3);
  auto item = [&] { return ItemRef{id(f.item_vocab), id(categories), id(f.company_vocab)}; };
  std::uniform_int_distribution<std::int64_t> gap(0, 2 * f.time_factor);
  std::uniform_int_distribution<std::size_t> length(0, f.max_behaviors + 2);

  std::vector<RawSample> out(count);
  for (RawSample& s : out) {
    s.user_id = id(f.user_vocab);
    s.country_id = id(f.country_vocab);
    std::int64_t ts = 1'000'000;
    s.behaviors.resize(length(rng));
    for (Behavior& b : s.behaviors) {
      b.item = item();
      b.ts = (ts += gap(rng));
    }
    s.trigger = item();
    s.target = item();
    s.page = 1 + id(f.page_vocab);
    s.ts = ts + gap(rng) * static_cast<std::int64_t>(1 + f.max_bucket / 4);
    s.label = static_cast<int>(rng() & 1);
  }
  return out;
}

SyntheticDataset split_by_time(std::vector<RawSample> samples, double test_fraction) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const RawSample& a, const RawSample& b) { return a.ts < b.ts; });
  const auto n_test = static_cast<std::size_t>(
      std::floor(test_fraction * static_cast<double>(samples.size())));
  SyntheticDataset data;
  const auto cut = samples.begin() + static_cast<std::ptrdiff_t>(samples.size() - n_test);
  data.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(cut));
  data.test.assign(std::make_move_iterator(cut), std::make_move_iterator(samples.end()));
  data.manifest = count_manifest(data.train, data.test);
  return data;
}

}  // namespace dei2n
