#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "advdrop/config.hpp"

using namespace advdrop;

TEST_CASE("canonical config round-trips through the parser") {
  RunConfig cfg;
  cfg.task = "copy";
  cfg.epochs = 7;
  cfg.delta = 0.125;
  cfg.seed = 99;
  cfg.fd_symmetric = false;
  const std::string text = canonical_config(cfg);
  const RunConfig back = parse_config_text(text, "roundtrip");
  CHECK(canonical_config(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("unknown keys are rejected with a line number") {
  try {
    parse_config_text("task = parity\nbogus_key = 3\n", "conf");
    CHECK(false);
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("conf:2") != std::string::npos);
    CHECK(msg.find("bogus_key") != std::string::npos);
  }
}

TEST_CASE("malformed lines and values are rejected") {
  CHECK_THROWS_AS(parse_config_text("task parity\n", "c"), std::runtime_error);
  CHECK_THROWS_AS(parse_config_text("epochs = many\n", "c"), std::runtime_error);
  CHECK_THROWS_AS(parse_config_text("delta = 0.03x\n", "c"), std::runtime_error);
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig cfg =
      parse_config_text("# a comment\n\n  task = copy  \n", "c");
  CHECK(cfg.task == "copy");
}

TEST_CASE("hash changes when any field changes") {
  RunConfig a;
  RunConfig b;
  b.seed = a.seed + 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("train_config validates enumerations") {
  RunConfig cfg;
  cfg.reg = "bogus";
  CHECK_THROWS_AS(cfg.train_config(), std::runtime_error);
  cfg.reg = "add";
  cfg.metric = "huber";
  CHECK_THROWS_AS(cfg.train_config(), std::runtime_error);
}

#ifdef ADVDROP_CLI_PATH

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ADVDROP_CLI_PATH) + " " + args + " > cli_out.txt 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

int count_csv_rows(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is);
  std::string line;
  int rows = -1;  // skip header
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  return rows;
}

}  // namespace

TEST_CASE("cli train smoke: three epochs of parity leave three metric rows") {
  const int rc = run_cli(
      "train --task parity --reg none --epochs 3 --hidden 6 "
      "--set train_count=40 --set test_count=20 --set seq_length=4 "
      "--seed 5 --out cli_smoke_run");
  CHECK(rc == 0);
  CHECK(count_csv_rows("cli_smoke_run/metrics.csv") == 3);
  std::ifstream manifest("cli_smoke_run/manifest.txt");
  CHECK(manifest.good());
}

TEST_CASE("cli rejects unknown config keys with exit code 2") {
  {
    std::ofstream os("cli_bad_config.txt");
    os << "task = parity\nnot_a_key = 1\n";
  }
  CHECK(run_cli("train --config cli_bad_config.txt") == 2);
  CHECK(run_cli("train --set nonsense=5") == 2);
}

TEST_CASE("cli reports numeric blow-up with exit code 3") {
  const int rc = run_cli(
      "train --task parity --reg none --epochs 2 --hidden 4 --lr 1e18 "
      "--set train_count=30 --set test_count=10 --set seq_length=3 "
      "--set clip_norm=1e18 --out cli_blowup_run");
  CHECK(rc == 3);
}

TEST_CASE("cli paper defaults: --reg add --delta 0.03 --k 2 parse into the config") {
  const int rc = run_cli(
      "train --task parity --reg add --delta 0.03 --k 2 --epochs 1 --hidden 8 "
      "--set train_count=20 --set test_count=10 --set seq_length=3 "
      "--out cli_add_run");
  CHECK(rc == 0);
  const RunConfig resolved = load_config_file("cli_add_run/config.resolved");
  CHECK(resolved.reg == "add");
  CHECK(resolved.delta == 0.03);
  CHECK(resolved.k == 2);
}

#endif  // ADVDROP_CLI_PATH
