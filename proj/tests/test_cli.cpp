#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "elastoreg/network.hpp"
#include "elastoreg/textio.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace elastoreg;

namespace {

const std::string kCli = ELASTOREG_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& p) const { return path / p; }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) { return textio::read_text_file(p); }

void write_scenario(const fs::path& p, int n = 48, std::uint64_t seed = 7) {
  nlohmann::json j{{"name", "cli-s2"},
                   {"deformation", "probe-indentation"},
                   {"magnitude_mm", 4.0},
                   {"n_surface", n},
                   {"n_internal", n},
                   {"seed", seed}};
  textio::write_text_file(p, j.dump(2));
}

void write_config(const fs::path& p, int steps, nlohmann::json extra = {}) {
  nlohmann::json arch{{"encoder_widths", {8, 16}},
                      {"tnet_mlp_widths", {8}},
                      {"tnet_fc_widths", {8}},
                      {"trunk_widths", {24, 16}},
                      {"trunk_out_width", 16}};
  nlohmann::json j{{"steps", steps}, {"seed", 5}, {"arch", arch}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  textio::write_text_file(p, j.dump(2));
}

}  // namespace

TEST_CASE("generate: file contract, rerun determinism, malformed input") {
  TempDir dir("elastoreg_cli_gen");
  write_scenario(dir / "s.json");

  REQUIRE(run("generate " + (dir / "s.json").string() + " --out " + (dir / "out1").string()) == 0);
  for (const char* f :
       {"source.csv", "target.csv", "truth.csv", "landmarks.csv", "scenario_resolved.json",
        "manifest.json"}) {
    CHECK(fs::exists(dir / ("out1/" + std::string(f))));
  }

  REQUIRE(run("generate " + (dir / "s.json").string() + " --out " + (dir / "out2").string()) == 0);
  for (const char* f : {"source.csv", "target.csv", "truth.csv", "landmarks.csv"}) {
    CHECK(slurp(dir / ("out1/" + std::string(f))) == slurp(dir / ("out2/" + std::string(f))));
  }

  // malformed scenario JSON: exit 2, no partial outputs
  textio::write_text_file(dir / "bad.json", "{ not json");
  CHECK(run("generate " + (dir / "bad.json").string() + " --out " + (dir / "outbad").string()) == 2);
  CHECK(!fs::exists(dir / "outbad/source.csv"));

  // rigid field with nonzero magnitude: scenario error
  textio::write_text_file(dir / "rigidbad.json",
                          R"({"deformation": "rigid", "magnitude_mm": 3.0})");
  CHECK(run("generate " + (dir / "rigidbad.json").string() + " --out " +
            (dir / "outbad2").string()) == 2);
}

TEST_CASE("register: identical clouds, metrics contract, determinism") {
  TempDir dir("elastoreg_cli_reg");
  write_scenario(dir / "s.json");
  REQUIRE(run("generate " + (dir / "s.json").string() + " --out " + (dir / "gen").string()) == 0);
  write_config(dir / "cfg.json", 10);

  const std::string src = (dir / "gen/source.csv").string();
  REQUIRE(run("register " + src + " " + src + " --config " + (dir / "cfg.json").string() +
              " --out " + (dir / "same").string()) == 0);
  const auto metrics = nlohmann::json::parse(slurp(dir / "same/metrics.json"));
  CHECK(metrics["cd"].get<double>() <= metrics["cd_pre"].get<double>());
  CHECK(fs::exists(dir / "same/warped.csv"));
  CHECK(fs::exists(dir / "same/displacement.csv"));
  CHECK(fs::exists(dir / "same/loss_history.jsonl"));

  // full pipeline on the real pair, with landmarks and truth
  const std::string tgt = (dir / "gen/target.csv").string();
  const std::string extra = " --landmarks " + (dir / "gen/landmarks.csv").string() + " --truth " +
                            (dir / "gen/truth.csv").string();
  REQUIRE(run("register " + src + " " + tgt + " --config " + (dir / "cfg.json").string() +
              extra + " --out " + (dir / "r1").string()) == 0);
  REQUIRE(run("register " + src + " " + tgt + " --config " + (dir / "cfg.json").string() +
              extra + " --out " + (dir / "r2").string()) == 0);
  for (const char* f : {"warped.csv", "displacement.csv", "loss_history.jsonl", "metrics.json"}) {
    CHECK(slurp(dir / ("r1/" + std::string(f))) == slurp(dir / ("r2/" + std::string(f))));
  }
  const auto m1 = nlohmann::json::parse(slurp(dir / "r1/metrics.json"));
  CHECK(m1["tre"].is_number());
  CHECK(m1["rmse"].is_number());
  CHECK(m1["dm_ratio"].is_number());
  CHECK(m1["loss"]["total"].is_number());

  // loss history has one line per step
  std::ifstream hist(dir / "r1/loss_history.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(hist, line)) ++lines;
  CHECK(lines == 10);

  // missing input file: exit 2
  CHECK(run("register missing.csv " + tgt + " --out " + (dir / "x").string()) == 2);
}

TEST_CASE("register: --no-pinn and --w overrides show up in the loss history") {
  TempDir dir("elastoreg_cli_nopinn");
  write_scenario(dir / "s.json", 32);
  REQUIRE(run("generate " + (dir / "s.json").string() + " --out " + (dir / "gen").string()) == 0);
  write_config(dir / "cfg.json", 5);
  const std::string src = (dir / "gen/source.csv").string();
  const std::string tgt = (dir / "gen/target.csv").string();

  REQUIRE(run("register " + src + " " + tgt + " --config " + (dir / "cfg.json").string() +
              " --no-pinn --w 500 --out " + (dir / "np").string()) == 0);
  std::ifstream hist(dir / "np/loss_history.jsonl");
  std::string first;
  std::getline(hist, first);
  const auto rec = nlohmann::json::parse(first);
  CHECK(rec["l_s"].get<double>() == 0.0);
  CHECK(rec["l_c"].get<double>() == 0.0);
  CHECK(rec["l_e"].get<double>() == 0.0);
  CHECK(rec["weight_w"].get<double>() == 500.0);
}

TEST_CASE("train + infer: population round-trip and version gate") {
  TempDir dir("elastoreg_cli_train");
  // two tiny subjects
  for (int k = 0; k < 2; ++k) {
    write_scenario(dir / "s.json", 24, 50 + static_cast<std::uint64_t>(k));
    REQUIRE(run("generate " + (dir / "s.json").string() + " --out " +
                (dir / ("pop/subj" + std::to_string(k))).string()) == 0);
  }
  write_config(dir / "cfg.json", 1, {{"epochs", 3}, {"batch_size", 2}});

  REQUIRE(run("train " + (dir / "pop").string() + " --config " + (dir / "cfg.json").string() +
              " --out " + (dir / "model").string()) == 0);
  CHECK(fs::exists(dir / "model/model.json"));
  CHECK(fs::exists(dir / "model/epoch_loss.jsonl"));

  // checkpoint loads and round-trips bitwise
  const net::RegModel m = net::load_checkpoint(dir / "model/model.json");
  net::save_checkpoint(m, dir / "model/resaved.json");
  CHECK(slurp(dir / "model/model.json") == slurp(dir / "model/resaved.json"));

  // inference on one subject
  const std::string src = (dir / "pop/subj0/source.csv").string();
  const std::string tgt = (dir / "pop/subj0/target.csv").string();
  REQUIRE(run("infer " + (dir / "model/model.json").string() + " " + src + " " + tgt +
              " --out " + (dir / "inf1").string()) == 0);
  REQUIRE(run("infer " + (dir / "model/model.json").string() + " " + src + " " + tgt +
              " --out " + (dir / "inf2").string()) == 0);
  for (const char* f : {"warped.csv", "displacement.csv", "metrics.json"}) {
    CHECK(slurp(dir / ("inf1/" + std::string(f))) == slurp(dir / ("inf2/" + std::string(f))));
  }
  CHECK(!fs::exists(dir / "inf1/loss_history.jsonl"));

  // fresh (zero-head) checkpoint: warped equals source byte for byte
  const net::RegModel fresh = net::init_model(9, testsupport::tiny_arch());
  net::save_checkpoint(fresh, dir / "fresh.json");
  REQUIRE(run("infer " + (dir / "fresh.json").string() + " " + src + " " + tgt + " --out " +
              (dir / "zero").string()) == 0);
  const auto warped = textio::read_pointset_csv(dir / "zero/warped.csv");
  const auto source = textio::read_pointset_csv(src);
  CHECK((warped.points - source.points).cwiseAbs().maxCoeff() == 0.0);

  // unsupported checkpoint version: exit 3
  std::string text = slurp(dir / "model/model.json");
  const auto at = text.find("\"format_version\": 1");
  REQUIRE(at != std::string::npos);
  text.replace(at, std::string("\"format_version\": 1").size(), "\"format_version\": 9");
  textio::write_text_file(dir / "badver.json", text);
  CHECK(run("infer " + (dir / "badver.json").string() + " " + src + " " + tgt + " --out " +
            (dir / "x").string()) == 3);

  // fewer than 2 subjects: exit 2
  fs::remove_all(dir / "pop/subj1");
  CHECK(run("train " + (dir / "pop").string() + " --config " + (dir / "cfg.json").string() +
            " --out " + (dir / "model2").string()) == 2);
}

TEST_CASE("eval: metrics from an existing warp") {
  TempDir dir("elastoreg_cli_eval");
  write_scenario(dir / "s.json", 32);
  REQUIRE(run("generate " + (dir / "s.json").string() + " --out " + (dir / "gen").string()) == 0);
  const std::string src = (dir / "gen/source.csv").string();
  const std::string tgt = (dir / "gen/target.csv").string();

  // evaluating the exact truth displacement: rmse 0, cd 0
  REQUIRE(run("eval " + src + " " + tgt + " --displacement " + (dir / "gen/truth.csv").string() +
              " --truth " + (dir / "gen/truth.csv").string() + " --landmarks " +
              (dir / "gen/landmarks.csv").string() + " --out " + (dir / "ev").string()) == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "ev/metrics.json"));
  CHECK(m["rmse"].get<double>() == 0.0);
  CHECK(m["cd"].get<double>() == 0.0);
  CHECK(m["cd_pre"].get<double>() > 0.0);

  // neither --warped nor --displacement: exit 2
  CHECK(run("eval " + src + " " + tgt + " --out " + (dir / "ev2").string()) == 2);
}

TEST_CASE("manifest: written for every command with a config hash and seed") {
  TempDir dir("elastoreg_cli_manifest");
  write_scenario(dir / "s.json", 24);
  REQUIRE(run("generate " + (dir / "s.json").string() + " --seed 99 --out " +
              (dir / "gen").string()) == 0);
  const auto man = nlohmann::json::parse(slurp(dir / "gen/manifest.json"));
  CHECK(man["command"] == "generate");
  CHECK(man["seed"].get<std::uint64_t>() == 99);
  CHECK(man["config_hash"].is_string());
  CHECK(man["artifact_paths"].size() == 5);
  CHECK(man["wall_time_s"].is_number());

  // config hash is stable under key reordering
  write_scenario(dir / "s1.json", 24);
  nlohmann::json reordered{{"seed", 7},
                           {"n_internal", 24},
                           {"magnitude_mm", 4.0},
                           {"n_surface", 24},
                           {"deformation", "probe-indentation"},
                           {"name", "cli-s2"}};
  textio::write_text_file(dir / "s2.json", reordered.dump(2));
  REQUIRE(run("generate " + (dir / "s1.json").string() + " --out " + (dir / "g1").string()) == 0);
  REQUIRE(run("generate " + (dir / "s2.json").string() + " --out " + (dir / "g2").string()) == 0);
  const auto m1 = nlohmann::json::parse(slurp(dir / "g1/manifest.json"));
  const auto m2 = nlohmann::json::parse(slurp(dir / "g2/manifest.json"));
  CHECK(m1["config_hash"] == m2["config_hash"]);
}
