#include "dei2n/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "dei2n/errors.hpp"

namespace dei2n {
namespace {

using nlohmann::json;

void expect_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw DataError(std::string(what) + " must be an object");
  for (const char* k : keys)
    if (!j.contains(k)) throw DataError(std::string(what) + " is missing field '" + k + "'");
  if (j.size() != keys.size()) {
    for (const auto& [k, v] : j.items())
      if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) ==
          keys.end())
        throw DataError(std::string(what) + " has unknown field '" + k + "'");
  }
}

std::int64_t integer(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw DataError(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

ItemRef item_from_json(const json& j, const char* what) {
  expect_keys(j, {"item_id", "category_id", "company_id"}, what);
  return {integer(j, "item_id"), integer(j, "category_id"), integer(j, "company_id")};
}

}  // namespace

void to_json(json& j, const ItemRef& item) {
  j = {{"item_id", item.item_id}, {"category_id", item.category_id}, {"company_id", item.company_id}};
}

void to_json(json& j, const RawSample& s) {
  json behaviors = json::array();
  for (const Behavior& b : s.behaviors) {
    json e = b.item;
    e["ts"] = b.ts;
    behaviors.push_back(std::move(e));
  }
  j = {{"user_id", s.user_id}, {"country_id", s.country_id}, {"behaviors", std::move(behaviors)},
       {"trigger", s.trigger}, {"target", s.target},         {"page", s.page},
       {"ts", s.ts},           {"label", s.label}};
}

RawSample sample_from_json(const json& j) {
  expect_keys(j, {"user_id", "country_id", "behaviors", "trigger", "target", "page", "ts", "label"},
              "sample");
  RawSample s;
  s.user_id = integer(j, "user_id");
  s.country_id = integer(j, "country_id");
  const json& behaviors = j.at("behaviors");
  if (!behaviors.is_array()) throw DataError("field 'behaviors' must be an array");
  s.behaviors.reserve(behaviors.size());
  for (const json& b : behaviors) {
    expect_keys(b, {"item_id", "category_id", "company_id", "ts"}, "behavior");
    s.behaviors.push_back(
        {{integer(b, "item_id"), integer(b, "category_id"), integer(b, "company_id")},
         integer(b, "ts")});
  }
  s.trigger = item_from_json(j.at("trigger"), "trigger");
  s.target = item_from_json(j.at("target"), "target");
  s.page = integer(j, "page");
  s.ts = integer(j, "ts");
  s.label = static_cast<int>(integer(j, "label"));
  return s;
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : path_(path), in_(path) {
  if (!in_) throw DataError("cannot open dataset " + path.string());
}

std::optional<RawSample> DatasetReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.empty()) continue;
    try {
      RawSample s = sample_from_json(json::parse(text));
      validate(s);
      return s;
    } catch (const std::exception& e) {
      throw DataError(path_.string() + ":" + std::to_string(line_) + ": " + e.what());
    }
  }
  return std::nullopt;
}

std::vector<RawSample> load_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  std::vector<RawSample> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const RawSample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset " + path.string());
  for (const RawSample& s : samples) out << json(s).dump() << '\n';
  if (!out) throw DataError("failed writing dataset " + path.string());
}

void to_json(json& j, const DatasetManifest& m) {
  j = {{"n_users", m.n_users},
       {"n_items", m.n_items},
       {"n_categories", m.n_categories},
       {"n_companies", m.n_companies},
       {"n_train", m.n_train},
       {"n_test", m.n_test},
       {"n_samples", m.n_samples()},
       {"positive_rate", m.positive_rate},
       {"split_ts", m.split_ts},
       {"config_hash", m.config_hash},
       {"generator", m.generator}};
}

void from_json(const json& j, DatasetManifest& m) {
  m.n_users = j.at("n_users").get<std::size_t>();
  m.n_items = j.at("n_items").get<std::size_t>();
  m.n_categories = j.at("n_categories").get<std::size_t>();
  m.n_companies = j.at("n_companies").get<std::size_t>();
  m.n_train = j.at("n_train").get<std::size_t>();
  m.n_test = j.at("n_test").get<std::size_t>();
  m.positive_rate = j.at("positive_rate").get<double>();
  m.split_ts = j.at("split_ts").get<std::int64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.generator = j.value("generator", json::object());
}

DatasetManifest count_manifest(std::span<const RawSample> train, std::span<const RawSample> test) {
  std::set<std::int64_t> users, items, categories, companies;
  auto note = [&](const ItemRef& item) {
    items.insert(item.item_id);
    categories.insert(item.category_id);
    companies.insert(item.company_id);
  };
  std::size_t positives = 0;
  for (auto split : {train, test})
    for (const RawSample& s : split) {
      users.insert(s.user_id);
      for (const Behavior& b : s.behaviors) note(b.item);
      note(s.trigger);
      note(s.target);
      positives += static_cast<std::size_t>(s.label);
    }
  DatasetManifest m;
  m.n_users = users.size();
  m.n_items = items.size();
  m.n_categories = categories.size();
  m.n_companies = companies.size();
  m.n_train = train.size();
  m.n_test = test.size();
  const std::size_t total = train.size() + test.size();
  m.positive_rate = total ? static_cast<double>(positives) / static_cast<double>(total) : 0.0;
  if (!test.empty()) {
    m.split_ts = test.front().ts;
    for (const RawSample& s : test) m.split_ts = std::min(m.split_ts, s.ts);
  }
  return m;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void fit_vocabulary(FeatureConfig& c, std::span<const RawSample> samples) {
  auto grow = [](std::size_t& vocab, std::int64_t id) {
    if (id > 0) vocab = std::max(vocab, static_cast<std::size_t>(id) + 1);
  };
  auto grow_item = [&](const ItemRef& item) {
    grow(c.item_vocab, item.item_id);
    grow(c.category_vocab, item.category_id);
    grow(c.company_vocab, item.company_id);
  };
  for (const RawSample& s : samples) {
    grow(c.user_vocab, s.user_id);
    grow(c.country_vocab, s.country_id);
    grow_item(s.trigger);
    grow_item(s.target);
    for (const Behavior& b : s.behaviors) grow_item(b.item);
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace dei2n
