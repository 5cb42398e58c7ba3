// Copyright 2026 The crpslam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "crpslam/io.hpp"
#include "test_util.hpp"

namespace crpslam::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string output;
};

// Runs the CLI through the shell with `env` prepended; stderr is folded in.
Run run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" CRPSLAM_CLI_PATH "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Scratch {
 public:
  Scratch() {
    static int n = 0;
    path_ = fs::temp_directory_path() /
            ("crpslam_cli_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() { fs::remove_all(path_); }
  std::string operator/(const std::string& s) const { return (path_ / s).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

const std::string kSmokeConfig = std::string(CRPSLAM_SOURCE_DIR) + "/configs/smoke.cfg";

// Relative path -> bytes, skipping wall-clock timing files.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.size() >= 11 && name.compare(name.size() - 11, 11, "_timing.csv") == 0) continue;
    out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("gen-data --out /tmp/x").code, 2);
  EXPECT_EQ(run_cli("forecast --ckpt a --data b --out c --members 0").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, BadConfigExitsTwo) {
  Scratch s;
  io::write_file_atomic(s / "bad.cfg", "dynamics.unknown_knob=1\n");
  const auto r = run_cli("gen-data --config " + (s / "bad.cfg") + " --out " + (s / "d"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("unknown_knob"), std::string::npos);
  EXPECT_EQ(run_cli("gen-data --config " + (s / "missing.cfg") + " --out " + (s / "d")).code, 2);
}

TEST(Cli, MissingOrInconsistentDataExitsThree) {
  Scratch s;
  EXPECT_EQ(run_cli("train --data " + (s / "nothing") + " --config " + kSmokeConfig + " --out " +
                    (s / "run"))
                .code,
            3);
  EXPECT_EQ(run_cli("evaluate --forecast " + (s / "nothing") + " --data " + (s / "nothing") +
                    " --out " + (s / "ev"))
                .code,
            3);
}

TEST(Cli, NonFiniteStateExitsFour) {
  Scratch s;
  auto ds = toy::make_dataset(testing::small_dynamics(), 2, 1, 1, 5);
  auto v = std::vector<float>(ds.test[0].states[1].values().begin(),
                              ds.test[0].states[1].values().end());
  v[0] = std::numeric_limits<float>::quiet_NaN();
  ds.test[0].states[1] = FieldTensor(ds.test[0].states[1].shape(), v);
  io::save_dataset(s / "d", ds);
  io::write_file_atomic(s / "tiny.cfg",
                        "model.noise_dim=4\nmodel.embed_dim=8\nmodel.channels=4,8\n"
                        "model.bottleneck_hidden=8\ntrain.stages=1:1e-3:1\ntrain.batch_size=1\n"
                        "train.steps_per_epoch=1\ntrain.val_windows=1\n");
  ASSERT_EQ(run_cli("train --quiet --data " + (s / "d") + " --config " + (s / "tiny.cfg") +
                    " --out " + (s / "run"))
                .code,
            0);
  const auto r = run_cli("forecast --ckpt " + (s / "run/checkpoint") + " --data " + (s / "d") +
                         " --out " + (s / "fc") + " --members 2 --lead-steps 2");
  EXPECT_EQ(r.code, 4) << r.output;
  EXPECT_NE(r.output.find("numeric"), std::string::npos);
}

TEST(Cli, SmokePipelineIsByteIdenticalAcrossRuns) {
  Scratch s;
  const auto pipeline = [&](const std::string& root) {
    const std::string d = s / (root + "/data"), run = s / (root + "/run"),
                      fc = s / (root + "/fc"), ev = s / (root + "/ev");
    ASSERT_EQ(run_cli("gen-data --config " + kSmokeConfig + " --out " + d + " --seed 3").code, 0);
    ASSERT_EQ(run_cli("train --quiet --data " + d + " --config " + kSmokeConfig + " --out " + run)
                  .code,
              0);
    ASSERT_EQ(run_cli("forecast --ckpt " + run + "/checkpoint --data " + d + " --out " + fc +
                      " --members 3 --lead-steps 4 --seed 9")
                  .code,
              0);
    const auto e = run_cli("evaluate --forecast " + fc + " --data " + d + " --out " + ev);
    ASSERT_EQ(e.code, 0) << e.output;
  };
  pipeline("a");
  pipeline("b");
  const auto a = snapshot(s.path() / "a");
  const auto b = snapshot(s.path() / "b");
  EXPECT_GT(a.size(), 20u);
  EXPECT_TRUE(a.count("ev/crps.csv"));
  EXPECT_TRUE(a.count("ev/ssr.svg"));
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) {
    ASSERT_TRUE(b.count(name)) << name;
    EXPECT_TRUE(bytes == b.at(name)) << name << " differs";
  }
  EXPECT_TRUE(fs::exists(s.path() / "a/run/train_timing.csv"));

  // Resuming a finished run is a no-op that keeps the checkpoint.
  const auto before = io::read_file(s.path() / "a/run/checkpoint/manifest.txt");
  EXPECT_EQ(run_cli("train --quiet --resume --data " + (s / "a/data") + " --config " +
                    kSmokeConfig + " --out " + (s / "a/run"))
                .code,
            0);
  EXPECT_EQ(io::read_file(s.path() / "a/run/checkpoint/manifest.txt"), before);
  // A fresh run refuses to overwrite it.
  EXPECT_EQ(run_cli("train --quiet --data " + (s / "a/data") + " --config " + kSmokeConfig +
                    " --out " + (s / "a/run"))
                .code,
            2);
}

TEST(Cli, SeedEnvironmentVariableOverridesFlag) {
  Scratch s;
  io::write_file_atomic(s / "small.cfg",
                        "dynamics.parent_size=32\ndynamics.lam_size=16\ndynamics.steps=3\n"
                        "dynamics.burn_in=5\ndata.n_train=1\ndata.n_val=1\ndata.n_test=1\n");
  const std::string cfg = s / "small.cfg";
  ASSERT_EQ(run_cli("gen-data --config " + cfg + " --out " + (s / "env") + " --seed 1",
                    "CRPSLAM_SEED=5")
                .code,
            0);
  ASSERT_EQ(run_cli("gen-data --config " + cfg + " --out " + (s / "flag5") + " --seed 5").code, 0);
  ASSERT_EQ(run_cli("gen-data --config " + cfg + " --out " + (s / "flag1") + " --seed 1").code, 0);
  const auto id = [&](const std::string& d) {
    return io::Manifest::load(s.path() / d / "manifest.txt").require("id");
  };
  EXPECT_EQ(id("env"), id("flag5"));
  EXPECT_NE(id("env"), id("flag1"));
  EXPECT_EQ(run_cli("gen-data --config " + cfg + " --out " + (s / "bad"), "CRPSLAM_SEED=abc").code,
            2);
}

}  // namespace
}  // namespace crpslam::cli
