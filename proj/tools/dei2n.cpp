// dei2n: generate data, train, evaluate, ablate, report and self-check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dei2n/checkpoint.hpp"
#include "dei2n/dataset.hpp"
#include "dei2n/errors.hpp"
#include "dei2n/metrics.hpp"
#include "dei2n/synth.hpp"
#include "dei2n/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dei2n;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options not given on the command line are taken from a JSON object whose
// keys are the long flag names without the leading dashes.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  if (path.empty()) return;
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot parse config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object: " + path);
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw UsageError("unknown key '" + key + "' in " + path + " for " + cmd.get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value.is_string() ? value.get<std::string>() : value.dump());
    opt->run_callback();
  }
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const std::string& out) {
  fs::create_directories(out);
  return out;
}

// --- gen --------------------------------------------------------------------

struct GenArgs {
  std::string config, out, preset = "fig2", event_log;
  std::optional<std::uint64_t> seed;
  double window_hours = 4.0;
  std::size_t neg_ratio = 1;
};

std::vector<ItemRef> item_pool(std::span<const Event> events) {
  std::vector<ItemRef> pool;
  std::map<std::int64_t, bool> seen;
  for (const Event& e : events)
    if (!seen[e.item.item_id]) {
      seen[e.item.item_id] = true;
      pool.push_back(e.item);
    }
  return pool;
}

int run_gen(const GenArgs& a) {
  const fs::path out = prepare_out(a.out);
  json resolved = {{"command", "gen"}};
  SyntheticDataset data;

  if (a.event_log.empty()) {
    SynthConfig cfg;
    if (a.preset == "fig2")
      cfg = SynthConfig::fig2();
    else if (a.preset == "tiny")
      cfg = SynthConfig::tiny();
    else
      throw UsageError("unknown preset '" + a.preset + "' (expected fig2 or tiny)");
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    data = generate_synthetic(cfg);
    resolved["preset"] = a.preset;
    resolved["generator"] = cfg;
  } else {
    require_file(a.event_log, "event log");
    if (a.window_hours <= 0) throw UsageError("--trigger-window-hours must be positive");
    const std::uint64_t seed = a.seed.value_or(7);
    const std::vector<Event> events = load_event_log(a.event_log);
    const auto window = static_cast<std::int64_t>(a.window_hours * 3600.0);
    std::vector<RawSample> samples = synthesize_triggers(events, window);
    if (a.neg_ratio > 0) {
      std::vector<RawSample> positives, rest;
      for (RawSample& s : samples) (s.label ? positives : rest).push_back(std::move(s));
      const std::vector<ItemRef> pool = item_pool(events);
      std::vector<RawSample> augmented = negative_sample(positives, pool, a.neg_ratio, seed);
      rest.insert(rest.end(), std::make_move_iterator(augmented.begin()),
                  std::make_move_iterator(augmented.end()));
      samples = std::move(rest);
    }
    if (samples.empty()) throw DataError("no exposure in " + a.event_log + " has a trigger");
    data = split_by_time(std::move(samples), SynthConfig{}.test_fraction);
    resolved["event_log"] = a.event_log;
    resolved["trigger-window-hours"] = a.window_hours;
    resolved["neg-ratio"] = a.neg_ratio;
    resolved["seed"] = seed;
    json gen = {{"event_log", fs::path(a.event_log).filename().string()},
                {"window_seconds", window},
                {"neg_ratio", a.neg_ratio},
                {"seed", seed}};
    data.manifest.generator = gen;
    data.manifest.config_hash = config_hash(gen);
  }

  write_dataset_dir(out, data);
  write_json_file(out / "config.json", resolved);
  const DatasetManifest& m = data.manifest;
  std::printf("wrote %zu train / %zu test samples to %s (positive rate %.4f)\n", m.n_train,
              m.n_test, out.string().c_str(), m.positive_rate);
  return kOk;
}

// --- train / ablate ---------------------------------------------------------

struct TrainArgs {
  std::string config, out, data, ablation = "FULL";
  std::uint64_t seed = 1;
  std::size_t epochs = 1, batch_size = 256;
  double lr = 0.001, dropout = 0.1;
  bool quiet = false;
};

TrainConfig make_train_config(const TrainArgs& a) {
  const DatasetPaths paths(a.data);
  require_file(paths.train, "training split");
  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch_size;
  cfg.epochs = a.epochs;
  cfg.dropout = a.dropout;
  cfg.seed = a.seed;
  cfg.ablation = AblationConfig::from_name(a.ablation);
  cfg.train_path = paths.train;
  if (fs::exists(paths.test)) cfg.test_path = paths.test;
  cfg.verbose = !a.quiet;
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg = make_train_config(a);
  const fs::path out = prepare_out(a.out);
  cfg.checkpoint_path = out / "model.ckpt";

  const std::vector<RawSample> train_set = load_dataset(cfg.train_path);
  std::vector<RawSample> test_set;
  if (!cfg.test_path.empty()) test_set = load_dataset(cfg.test_path);

  json resolved = cfg;
  resolved["command"] = "train";
  resolved["checkpoint"] = "model.ckpt";
  write_json_file(out / "config.json", resolved);

  TrainResult result = train(cfg, train_set, test_set);
  if (!test_set.empty()) result.report.pages = page_report(result.params, test_set);
  write_json_file(out / "metrics.json", result.report);
  write_text(out / "pages.csv", page_csv(result.report.pages));
  if (!test_set.empty())
    std::printf("%s test AUC %.4f, loss %.4f\n", result.report.variant.c_str(), result.report.auc,
                result.report.test_loss);
  return kOk;
}

int run_ablate(const TrainArgs& a) {
  TrainConfig cfg = make_train_config(a);
  if (cfg.test_path.empty()) throw UsageError("ablation needs a test split in " + a.data);
  const fs::path out = prepare_out(a.out);
  cfg.checkpoint_path = out / "model.ckpt";

  const std::vector<RawSample> train_set = load_dataset(cfg.train_path);
  const std::vector<RawSample> test_set = load_dataset(cfg.test_path);

  json resolved = cfg;
  resolved["command"] = "ablate";
  resolved["checkpoint"] = "model.ckpt";
  resolved.erase("ablation");
  write_json_file(out / "config.json", resolved);

  const AblationResult result = ablation_suite(cfg, train_set, test_set);
  json rows = json::array();
  for (const AblationRow& r : result.rows)
    rows.push_back({{"variant", r.variant}, {"auc", r.auc}, {"rela_impr", r.rela_impr}});
  json runs = json::array();
  for (const TrainResult& r : result.runs) runs.push_back(r.report);
  write_json_file(out / "ablation.json", {{"baseline", "FULL"}, {"rows", rows}, {"runs", runs}});
  const std::string table = ablation_table(result.rows);
  write_text(out / "ablation.txt", table);
  std::fputs(table.c_str(), stdout);
  return kOk;
}

// --- eval / report ----------------------------------------------------------

struct EvalArgs {
  std::string config, out, data, checkpoint, split = "test", baseline;
};

std::vector<RawSample> load_split(const EvalArgs& a) {
  const DatasetPaths paths(a.data);
  if (a.split != "test" && a.split != "train")
    throw UsageError("unknown split '" + a.split + "' (expected train or test)");
  const fs::path& path = a.split == "test" ? paths.test : paths.train;
  require_file(path, a.split + " split");
  return load_dataset(path);
}

int run_eval(const EvalArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  const ModelParams params = load_model(a.checkpoint);
  const std::vector<RawSample> samples = load_split(a);

  MetricsReport report = evaluate(params, samples);
  report.pages = page_report(params, samples);
  if (!a.baseline.empty()) {
    require_file(a.baseline, "baseline metrics");
    const json base = read_json_file(a.baseline);
    report.baseline = base.value("variant", a.baseline);
    report.rela_impr = rela_impr(report.auc, base.at("auc").get<double>());
  }
  const json j = report;
  if (!a.out.empty()) {
    const fs::path out = prepare_out(a.out);
    write_json_file(out / "config.json", {{"command", "eval"},
                                          {"checkpoint", a.checkpoint},
                                          {"data", a.data},
                                          {"split", a.split},
                                          {"baseline", a.baseline}});
    write_json_file(out / "metrics.json", j);
    write_text(out / "pages.csv", page_csv(report.pages));
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int run_report(const EvalArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  const ModelParams params = load_model(a.checkpoint);
  const std::vector<RawSample> samples = load_split(a);
  const std::vector<PageStats> pages = page_report(params, samples);
  const std::string csv = page_csv(pages);
  if (!a.out.empty()) {
    const fs::path out = prepare_out(a.out);
    write_json_file(out / "config.json", {{"command", "report"},
                                          {"checkpoint", a.checkpoint},
                                          {"data", a.data},
                                          {"split", a.split}});
    write_json_file(out / "report.json", {{"variant", params.ablation().name()}, {"pages", pages}});
    write_text(out / "pages.csv", csv);
  }
  std::fputs(csv.c_str(), stdout);
  return kOk;
}

// --- gradcheck --------------------------------------------------------------

struct GradArgs {
  std::string config, out, ablation = "FULL";
  std::uint64_t seed = 1;
  std::size_t batch = 4;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradArgs& a) {
  const ModelConfig model = ModelConfig::tiny();
  const GradCheckResult r =
      check_model_gradients(model, AblationConfig::from_name(a.ablation), a.seed, a.batch);
  const json j = {{"max_rel_error", r.max_rel_error},
                  {"entries_checked", r.entries_checked},
                  {"tolerance", a.tolerance},
                  {"passed", r.max_rel_error < a.tolerance}};
  if (!a.out.empty()) {
    const fs::path out = prepare_out(a.out);
    write_json_file(out / "config.json", {{"command", "gradcheck"},
                                          {"seed", a.seed},
                                          {"batch", a.batch},
                                          {"ablation", a.ablation},
                                          {"tolerance", a.tolerance},
                                          {"model", model}});
    write_json_file(out / "gradcheck.json", j);
  }
  std::printf("max relative error %.3e over %zu entries\n", r.max_rel_error, r.entries_checked);
  if (r.max_rel_error >= a.tolerance) {
    std::fprintf(stderr, "gradient check failed: worst entry %zu of parameter %zu (%g vs %g)\n",
                 r.worst_index, r.worst_param, r.worst_analytic, r.worst_numeric);
    return kNumerical;
  }
  return kOk;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool with_ablation) {
  cmd->add_option("--config", a.config, "JSON file with flag values");
  cmd->add_option("--data", a.data, "dataset directory")->required();
  cmd->add_option("--out", a.out, "output directory")->required();
  cmd->add_option("--seed", a.seed, "run seed");
  cmd->add_option("--epochs", a.epochs, "passes over the training split");
  cmd->add_option("--batch-size", a.batch_size, "mini-batch size");
  cmd->add_option("--lr", a.lr, "learning rate");
  cmd->add_option("--dropout", a.dropout, "dropout rate");
  if (with_ablation)
    cmd->add_option("--ablation", a.ablation, "FULL, NO-UI2M, NO-TIM, NO-IL, NO-UHIM or NO-USIM");
  cmd->add_flag("--quiet", a.quiet, "no per-epoch progress");
}

void add_eval_flags(CLI::App* cmd, EvalArgs& a) {
  cmd->add_option("--config", a.config, "JSON file with flag values");
  cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
  cmd->add_option("--data", a.data, "dataset directory")->required();
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--split", a.split, "train or test");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEI2N click-through rate model for trigger-induced recommendation"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "write a synthetic or log-derived dataset");
  gen_cmd->add_option("--config", gen.config, "JSON file with flag values");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--preset", gen.preset, "fig2 or tiny");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--event-log", gen.event_log, "JSONL click/exposure log to convert");
  gen_cmd->add_option("--trigger-window-hours", gen.window_hours, "trigger attribution window");
  gen_cmd->add_option("--neg-ratio", gen.neg_ratio, "sampled negatives per positive, 0 to skip");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  add_train_flags(train_cmd, train_args, true);

  TrainArgs ablate_args;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train the full model and its ablations");
  add_train_flags(ablate_cmd, ablate_args, false);

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "AUC and loss of a checkpoint");
  add_eval_flags(eval_cmd, eval_args);
  eval_cmd->add_option("--baseline", eval_args.baseline, "metrics.json to compare against");

  EvalArgs report_args;
  CLI::App* report_cmd = app.add_subcommand("report", "per-page statistics of a checkpoint");
  add_eval_flags(report_cmd, report_args);

  GradArgs grad;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of a tiny model");
  grad_cmd->add_option("--config", grad.config, "JSON file with flag values");
  grad_cmd->add_option("--out", grad.out, "output directory");
  grad_cmd->add_option("--seed", grad.seed, "initialisation and data seed");
  grad_cmd->add_option("--batch", grad.batch, "random samples in the loss");
  grad_cmd->add_option("--ablation", grad.ablation, "model variant");
  grad_cmd->add_option("--tolerance", grad.tolerance, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      apply_config_file(*gen_cmd, gen.config);
      return run_gen(gen);
    }
    if (train_cmd->parsed()) {
      apply_config_file(*train_cmd, train_args.config);
      return run_train(train_args);
    }
    if (ablate_cmd->parsed()) {
      apply_config_file(*ablate_cmd, ablate_args.config);
      return run_ablate(ablate_args);
    }
    if (eval_cmd->parsed()) {
      apply_config_file(*eval_cmd, eval_args.config);
      return run_eval(eval_args);
    }
    if (report_cmd->parsed()) {
      apply_config_file(*report_cmd, report_args.config);
      return run_report(report_args);
    }
    if (grad_cmd->parsed()) {
      apply_config_file(*grad_cmd, grad.config);
      return run_gradcheck(grad);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return kUsage;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kUsage;
}
