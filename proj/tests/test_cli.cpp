#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "infokoop/io.hpp"

namespace fs = std::filesystem;
using infokoop::read_text_file;
using infokoop::write_text_file;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(INFOKOOP_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("infokoop_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(run("--help") == 0);
  CHECK(run("simulate nosuch") == 2);
  CHECK(run("allocate --gains 1,-1") == 2);
  CHECK(run("allocate --gains 4,1 --budget 1 --bogus 3") == 2);
  CHECK(run("info --model " + (dir / "missing.json").string()) == 2);
  write_text_file((dir / "bad.json").string(), "{not json");
  CHECK(run("info --model " + (dir / "bad.json").string()) == 2);
  CHECK(run("allocate --gains 4,1 --out " + (dir / "a.json").string()) == 0);
}

TEST_CASE("simulate, train, eval and spectrum chain together") {
  const fs::path dir = scratch("chain");
  const std::string train_csv = (dir / "train.csv").string();
  const std::string test_csv = (dir / "test.csv").string();
  REQUIRE(run("simulate vanderpol --steps 1200 --dt 0.05 --seed 1 --out " + train_csv) == 0);
  REQUIRE(run("simulate vanderpol --steps 1200 --dt 0.05 --seed 2 --out " + test_csv) == 0);
  CHECK(fs::exists(train_csv + ".config.json"));
  REQUIRE(run("train --data " + train_csv + " --out " + (dir / "run").string() +
              " --epochs 2 --latent-dim 4 --hidden 8,8 --batch 32") == 0);
  CHECK(fs::exists(dir / "run" / "checkpoint.json"));
  CHECK(fs::exists(dir / "run" / "train_log.csv"));
  CHECK(fs::exists(dir / "run" / "config.json"));
  const std::string ck = (dir / "run" / "checkpoint.json").string();
  CHECK(run("eval --checkpoint " + ck + " --data " + test_csv + " --out " +
            (dir / "eval.json").string()) == 0);
  CHECK(fs::exists(dir / "eval.csv"));
  CHECK(run("spectrum --checkpoint " + ck + " --out " + (dir / "spec.csv").string()) == 0);
  CHECK(read_text_file((dir / "spec.csv").string()).rfind("re,im,modulus\n", 0) == 0);
}

TEST_CASE("config files layer under flags and are checked") {
  const fs::path dir = scratch("config");
  const std::string cfg = (dir / "c.json").string();
  write_text_file(cfg, R"({"gains": [4, 1], "budget": 2})");
  REQUIRE(run("allocate --config " + cfg + " --budget 1 --out " + (dir / "a.json").string()) == 0);
  const auto a = nlohmann::json::parse(read_text_file((dir / "a.json").string()));
  CHECK(a["budget"] == 1.0);
  CHECK(a["p"][0] == 0.875);
  write_text_file(cfg, R"({"gains": [4, 1], "budgett": 2})");
  CHECK(run("allocate --config " + cfg) == 2);
  write_text_file(cfg, R"({"gains": "4,1"})");
  CHECK(run("allocate --config " + cfg) == 2);
}

TEST_CASE("reruns are byte-identical") {
  const fs::path dir = scratch("determinism");
  for (const char* tag : {"a", "b"}) {
    const fs::path out = dir / tag;
    fs::create_directories(out);
    REQUIRE(run("simulate lorenz63 --steps 300 --seed 4 --noise 0.05 --out " + (out / "x.csv").string()) == 0);
    REQUIRE(run("train --data " + (out / "x.csv").string() + " --out " + (out / "run").string() +
                " --epochs 1 --latent-dim 4 --hidden 8 --batch 32 --mode vae") == 0);
  }
  CHECK(read_text_file((dir / "a" / "x.csv").string()) == read_text_file((dir / "b" / "x.csv").string()));
  CHECK(read_text_file((dir / "a" / "run" / "checkpoint.json").string()) ==
        read_text_file((dir / "b" / "run" / "checkpoint.json").string()));
}
