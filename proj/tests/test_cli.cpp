// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdanet/cli/run_config.hpp"
#include "sdanet/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace sdanet;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("sdanet_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Runs the CLI; stdout and stderr go to `log`.
int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SDANET_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

const char* kSmallConfig =
    "# small run\n"
    "seed = 4\n"
    "[synth]\n"
    "duration_s = 80\n"
    "eeg_channels = 8\n"
    "mixing_channels = 4\n"
    "[model]\n"
    "eeg_channels = 8\n"
    "feature_channels = 4\n"
    "[train]\n"
    "epochs = 2\n"
    "average_last_k = 2\n";

}  // namespace

TEST_CASE("run config parsing", "[cli][config]") {
  cli::RunConfig rc;
  SECTION("sections, comments and dotted keys") {
    cli::apply_text(rc, "seed = 9  # master\n[train]\nlr0 = 1e-3\n\n[model]\nacm = false\ndilations = 1, 2,4,8\n");
    CHECK(rc.seed == 9);
    CHECK(rc.train.lr0 == 1e-3);
    CHECK_FALSE(rc.model.acm_enabled);
    CHECK(rc.model.dilations == std::vector<std::size_t>{1, 2, 4, 8});
    cli::apply_text(rc, "train.lr0 = 2e-3\n");
    CHECK(rc.train.lr0 == 2e-3);
  }
  SECTION("errors name the key and line") {
    try {
      cli::apply_text(rc, "seed = 1\ntrain.bogus = 3\n", "f.cfg");
      FAIL("no throw");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("f.cfg:2") != std::string::npos);
      CHECK(std::string(e.what()).find("train.bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(cli::apply_text(rc, "train.lr0 = fast\n"), ConfigError);
    CHECK_THROWS_AS(cli::apply_text(rc, "[train\n"), ConfigError);
    CHECK_THROWS_AS(cli::apply_text(rc, "seed 3\n"), ConfigError);
    CHECK_THROWS_AS(cli::apply_text(rc, "model.acm = maybe\n"), ConfigError);
    CHECK_THROWS_AS(cli::apply_text(rc, "train.sampling = sometimes\n"), ConfigError);
    CHECK_THROWS_AS(cli::apply_file(rc, "/nonexistent/run.cfg"), ConfigError);
  }
  SECTION("overrides") {
    cli::apply_overrides(rc, {"--train.lr0", "5e-4", "--model.sscm=false"});
    CHECK(rc.train.lr0 == 5e-4);
    CHECK_FALSE(rc.model.sscm_enabled);
    CHECK_THROWS_AS(cli::apply_overrides(rc, {"--train.lr0"}), ConfigError);
    CHECK_THROWS_AS(cli::apply_overrides(rc, {"train.lr0=1"}), ConfigError);
  }
  SECTION("the text form round-trips") {
    cli::apply_text(rc, "seed = 11\ntrain.lr0 = 0.1\nsynth.snr = 0.3\ndata.split = 0.6:0.2:0.2\n");
    const std::string text = cli::to_text(rc);
    cli::RunConfig back;
    cli::apply_text(back, text);
    CHECK(cli::to_text(back) == text);
    CHECK(back.train.lr0 == 0.1);
    CHECK(back.synth.snr == 0.3);
  }
  SECTION("seed propagation and validation") {
    rc.seed = 21;
    rc.propagate_seed();
    CHECK(rc.train.seed == 21);
    CHECK(rc.synth.seed == 21);
    CHECK_NOTHROW(rc.validate());
    rc.augment.max_time_mask_frac = 2.0;
    CHECK_THROWS_AS(rc.validate(), ConfigError);
  }
}

TEST_CASE("gen-synth", "[cli]") {
  TempDir t;
  const fs::path a = t.path / "a", b = t.path / "b";
  const std::string common = " --synth.n_subjects 2 --synth.duration_s 20 --seed 3";
  REQUIRE(run("gen-synth --out " + a.string() + common, t.path / "log") == 0);
  REQUIRE(run("gen-synth --out " + b.string() + common, t.path / "log2") == 0);
  CHECK(slurp(t.path / "log").find("recordings: 2") != std::string::npos);
  const std::string manifest = slurp(a / "manifest.txt");
  CHECK(manifest.find("S1_R1.sdrc") != std::string::npos);
  CHECK(manifest == slurp(b / "manifest.txt"));
  CHECK(slurp(a / "S2_R1.sdrc") == slurp(b / "S2_R1.sdrc"));
  const auto without_out = [](std::string s) {
    const auto at = s.find("out_dir = ");
    return s.erase(at, s.find('\n', at) - at);
  };
  CHECK(without_out(slurp(a / "config.resolved")) == without_out(slurp(b / "config.resolved")));

  SECTION("unwritable output directory") {
    spit(t.path / "plain", "x");
    const fs::path bad = t.path / "plain" / "sub";
    CHECK(run("gen-synth --out " + bad.string() + common, t.path / "log3") == 3);
    CHECK_FALSE(fs::exists(bad / "manifest.txt"));
  }
  SECTION("config errors exit 2") {
    CHECK(run("gen-synth --out " + a.string() + " --synth.bogus 1", t.path / "log4") == 2);
    CHECK(slurp(t.path / "log4").find("synth.bogus") != std::string::npos);
    CHECK(run("gen-synth --out " + a.string() + " --synth.snr -1", t.path / "log5") == 2);
    CHECK(run("gen-synth", t.path / "log6") == 2);
    CHECK(run("frobnicate", t.path / "log7") == 2);
  }
}

TEST_CASE("train, eval and inspect", "[cli]") {
  TempDir t;
  const fs::path cfg = t.path / "small.cfg", out = t.path / "run";
  spit(cfg, kSmallConfig);
  REQUIRE(run("train --config " + cfg.string() + " --out " + out.string() + " --train.lr0 1e-3", t.path / "log") == 0);
  CHECK(fs::exists(out / "epoch_0001.sdck"));
  CHECK(fs::exists(out / "epoch_0002.sdck"));
  CHECK_FALSE(fs::exists(out / "epoch_0003.sdck"));
  CHECK(fs::exists(out / "final_averaged.sdck"));
  const std::string metrics = slurp(out / "metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);
  const std::string resolved = slurp(out / "config.resolved");
  CHECK(resolved.find("train.lr0 = 0.001\n") != std::string::npos);
  CHECK(resolved.find("model.feature_channels = 4\n") != std::string::npos);
  CHECK(resolved.find("seed = 4\n") != std::string::npos);

  SECTION("flags beat the config file") {
    cli::RunConfig rc;
    cli::apply_text(rc, resolved);
    CHECK(rc.train.lr0 == 1e-3);
    CHECK(rc.train.epochs == 2);
  }
  SECTION("eval prints a report") {
    REQUIRE(run("eval --config " + cfg.string() + " --checkpoint " + (out / "final_averaged.sdck").string(),
                t.path / "eval") == 0);
    // Log lines share the stream; the report is the last line.
    std::string text = slurp(t.path / "eval");
    text.erase(text.find_last_not_of('\n') + 1);
    const auto j = nlohmann::json::parse(text.substr(text.rfind('\n') + 1));
    CHECK(j.at("split") == "test");
    CHECK(j.at("accuracy").get<double>() >= 0.0);
    CHECK(j.at("n_samples").get<std::size_t>() > 0);
  }
  SECTION("missing or corrupt checkpoints exit 5") {
    CHECK(run("eval --config " + cfg.string() + " --checkpoint " + (t.path / "nope.sdck").string(), t.path / "e1") == 5);
    std::string bytes = slurp(out / "final_averaged.sdck");
    // The container has no checksum, so corruption means a broken structure.
    bytes[1] ^= 0x5a;
    spit(t.path / "bad.sdck", bytes);
    CHECK(run("eval --config " + cfg.string() + " --checkpoint " + (t.path / "bad.sdck").string(), t.path / "e2") == 5);
    CHECK(run("inspect " + (t.path / "bad.sdck").string(), t.path / "e3") == 5);
    spit(t.path / "short.sdck", slurp(out / "final_averaged.sdck").substr(0, 200));
    CHECK(run("eval --config " + cfg.string() + " --checkpoint " + (t.path / "short.sdck").string(), t.path / "e6") == 5);
    CHECK(slurp(t.path / "e6").find("byte offset") != std::string::npos);
    CHECK(run("inspect " + (t.path / "short.sdck").string(), t.path / "e4") == 5);
  }
  SECTION("inspect lists tensors") {
    REQUIRE(run("inspect " + (out / "epoch_0002.sdck").string(), t.path / "insp") == 0);
    const std::string s = slurp(t.path / "insp");
    CHECK(s.find("epoch: 2") != std::string::npos);
    CHECK(s.find("classifier.weight") != std::string::npos);
    CHECK(s.find("adam_m/") != std::string::npos);
  }
  SECTION("bad split name") {
    CHECK(run("eval --config " + cfg.string() + " --split dev --checkpoint " + (out / "final_averaged.sdck").string(),
              t.path / "e5") == 2);
  }
}

TEST_CASE("inspect reports the classifier shape", "[cli]") {
  TempDir t;
  SdanetConfig c;
  c.feature_channels = 16;
  Checkpoint ck;
  ck.meta = {{"config", c}, {"epoch", 0}};
  ck.params = init_params(c, RngState(1));
  save_checkpoint(ck, t.path / "f16.sdck");
  REQUIRE(run("inspect " + (t.path / "f16.sdck").string(), t.path / "out") == 0);
  const std::string s = slurp(t.path / "out");
  const auto at = s.find("classifier.weight");
  REQUIRE(at != std::string::npos);
  CHECK(s.substr(at, 80).find("[64x1]") != std::string::npos);
  CHECK(s.find("adam_m/") == std::string::npos);
}

TEST_CASE("gradcheck exit codes", "[cli]") {
  TempDir t;
  CHECK(run("gradcheck --seeds 2", t.path / "ok") == 0);
  CHECK(slurp(t.path / "ok").find("worst op-level rel err") != std::string::npos);
  for (const char* f : {"conv_backward", "attention_backward", "batchnorm_backward"}) {
    INFO(f);
    CHECK(run(std::string("gradcheck --seeds 2 --fault-inject ") + f, t.path / "bad") == 6);
    CHECK(slurp(t.path / "bad").find("gradient check failed") != std::string::npos);
  }
  CHECK(run("gradcheck --fault-inject everything", t.path / "cfg") == 2);
}
