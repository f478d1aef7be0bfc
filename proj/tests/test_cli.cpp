#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "dei2n_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(DEI2N_CLI_PATH) + " " + args + " > " +
                          (kWork / "last.out").string() + " 2> " + (kWork / "last.err").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string path(const std::string& name) { return (kWork / name).string(); }

// Generates the tiny dataset once per process.
const std::string& tiny_data() {
  static const std::string dir = [] {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    REQUIRE(run("gen --preset tiny --out " + path("data")) == 0);
    return path("data");
  }();
  return dir;
}

}  // namespace

TEST_CASE("gen is reproducible") {
  const std::string a = tiny_data();
  REQUIRE(run("gen --preset tiny --out " + path("data2")) == 0);
  for (const char* name : {"train.jsonl", "test.jsonl", "manifest.json", "config.json"})
    CHECK(read_text(fs::path(a) / name) == read_text(kWork / "data2" / name));
}

TEST_CASE("train, eval and report") {
  const std::string data = tiny_data();
  REQUIRE(run("train --quiet --data " + data + " --out " + path("run") + " --epochs 2 --batch-size 32") == 0);
  for (const char* name : {"config.json", "model.ckpt", "metrics.json", "pages.csv"})
    CHECK(fs::exists(kWork / "run" / name));
  const auto metrics = nlohmann::json::parse(read_text(kWork / "run" / "metrics.json"));
  CHECK(metrics.at("auc").get<double>() >= 0.0);
  CHECK(metrics.at("epoch_loss").size() == 2);

  REQUIRE(run("eval --checkpoint " + path("run/model.ckpt") + " --data " + data + " --baseline " +
              path("run/metrics.json")) == 0);
  const auto eval = nlohmann::json::parse(read_text(kWork / "last.out"));
  CHECK(eval.at("auc").get<double>() == metrics.at("auc").get<double>());
  CHECK(eval.at("rela_impr").get<double>() == 0.0);

  REQUIRE(run("report --checkpoint " + path("run/model.ckpt") + " --data " + data + " --out " +
              path("report")) == 0);
  CHECK(read_text(kWork / "last.out").starts_with("page,samples,"));
  CHECK(fs::exists(kWork / "report" / "report.json"));
}

TEST_CASE("training twice gives identical files") {
  const std::string data = tiny_data();
  const std::string flags = " --quiet --batch-size 32 --data " + data;
  REQUIRE(run("train" + flags + " --out " + path("det_a")) == 0);
  REQUIRE(run("train" + flags + " --out " + path("det_b")) == 0);
  for (const char* name : {"model.ckpt", "metrics.json", "pages.csv"})
    CHECK(read_text(kWork / "det_a" / name) == read_text(kWork / "det_b" / name));
}

TEST_CASE("config files supply flag values") {
  const std::string data = tiny_data();
  std::ofstream(kWork / "train.json") << R"({"epochs": 3, "batch-size": 64, "quiet": true})";
  REQUIRE(run("train --config " + path("train.json") + " --data " + data + " --out " + path("cfg")) == 0);
  const auto metrics = nlohmann::json::parse(read_text(kWork / "cfg" / "metrics.json"));
  CHECK(metrics.at("epoch_loss").size() == 3);
  std::ofstream(kWork / "bad.json") << R"({"epoch": 3})";
  CHECK(run("train --config " + path("bad.json") + " --data " + data + " --out " + path("cfg2")) == 2);
}

TEST_CASE("ablate writes the six-row table") {
  const std::string data = tiny_data();
  REQUIRE(run("ablate --quiet --batch-size 64 --data " + data + " --out " + path("abl")) == 0);
  const std::string table = read_text(kWork / "abl" / "ablation.txt");
  for (const char* v : {"NO-UI2M", "NO-TIM", "NO-IL", "NO-UHIM", "NO-USIM", "FULL"})
    CHECK(table.find(v) != std::string::npos);
  CHECK(table.find("0.00%") != std::string::npos);
  CHECK(fs::exists(kWork / "abl" / "model-NO-TIM.ckpt"));
}

TEST_CASE("gradcheck passes") {
  CHECK(run("gradcheck --seed 3") == 0);
  CHECK(read_text(kWork / "last.out").find("max relative error") != std::string::npos);
}

TEST_CASE("exit codes") {
  const std::string data = tiny_data();
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --data " + data) == 2);
  CHECK(run("train --quiet --data " + data + " --out " + path("x") + " --lr -1") == 2);
  CHECK(run("train --quiet --data " + data + " --out " + path("x") + " --ablation NOPE") == 2);
  CHECK(run("train --quiet --data " + path("missing") + " --out " + path("x")) == 3);

  fs::create_directories(kWork / "corrupt");
  for (const char* name : {"train.jsonl", "test.jsonl", "manifest.json"})
    fs::copy_file(fs::path(data) / name, kWork / "corrupt" / name, fs::copy_options::overwrite_existing);
  std::ofstream(kWork / "corrupt" / "train.jsonl", std::ios::app) << "{not json\n";
  CHECK(run("train --quiet --data " + path("corrupt") + " --out " + path("x")) == 3);
  CHECK(read_text(kWork / "last.err").find("train.jsonl:") != std::string::npos);

  std::ofstream(kWork / "junk.ckpt") << "junk";
  CHECK(run("eval --checkpoint " + path("junk.ckpt") + " --data " + data) == 3);
  CHECK(run("gradcheck --tolerance 0") == 4);
}
