#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(SEIZURE_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kTinyConfig =
    "montage = none\n"
    "lowpass_hz = 16\n"
    "scale_count = 8\n"
    "epoch_seconds = 2\n"
    "preictal_minutes = 2\n"
    "folds = 3\n"
    "seed = 5\n"
    "sustain_epochs = 2\n"
    "refractory_seconds = 60\n"
    "conv_filters = 4, 4, 4, 4, 4, 4\n"
    "dense_units = 16, 8\n"
    "batch_size = 16\n"
    "max_passes = 2\n"
    "kl_baseline_seconds = 100\n"
    "kl_window_seconds = 20\n"
    "kl_sustain_seconds = 4\n"
    "kl_components = 1\n";

}  // namespace

TEST(Cli, BaselinePrintsRange) {
  testutil::TempDir dir("cli_base");
  const auto r = run("baseline --fpr 0.142", dir.path());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0.091 0.182\n");
  const auto z = run("baseline --fpr 0", dir.path());
  EXPECT_EQ(z.out, "0.030 0.030\n");
}

TEST(Cli, TrainWithoutInputsExitsOne) {
  testutil::TempDir dir("cli_empty");
  const auto r = run("train --out " + (dir / "o").string(), dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no input recordings"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigExitsOne) {
  testutil::TempDir dir("cli_bad");
  std::ofstream(dir / "bad.cfg") << "no_such_key = 3\n";
  const auto r = run("train --config " + (dir / "bad.cfg").string(), dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
  EXPECT_EQ(run("frobnicate", dir.path()).code, 1);
  EXPECT_EQ(run("train --mode spectral", dir.path()).code, 1);
  EXPECT_EQ(run("predict --out " + (dir / "p").string() + " " + (dir / "missing.edf").string(), dir.path()).code, 1);
}

TEST(Cli, WorkflowIsDeterministic) {
  testutil::TempDir dir("cli_flow");
  const auto data = dir / "data";
  const auto r0 = run("synth --count 3 --channels 2 --rate 32 --duration 400 --onset 300 --transition 180 --seed 3 --out " + data.string(),
                      dir.path());
  ASSERT_EQ(r0.code, 0) << r0.err;
  ASSERT_TRUE(fs::exists(data / "synth_0.edf"));
  ASSERT_TRUE(fs::exists(data / "synth_0.json"));

  std::ofstream(dir / "run.cfg") << kTinyConfig << "model = model/model.ckpt\n";
  const std::string cfg = " --config " + (dir / "run.cfg").string();
  const std::string inputs =
      " " + (data / "synth_0.edf").string() + " " + (data / "synth_1.edf").string() + " " + (data / "synth_2.edf").string();

  const auto train = run("train" + cfg + " --out " + (dir / "model").string() + inputs, dir.path());
  ASSERT_EQ(train.code, 0) << train.err;
  ASSERT_TRUE(fs::exists(dir / "model" / "model.ckpt"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "model" / "manifest.json"));
  EXPECT_EQ(manifest["seed"].get<int>(), 5);
  ASSERT_EQ(manifest["inputs"].size(), 3u);
  EXPECT_EQ(manifest["inputs"][0]["role"], "train");
  EXPECT_EQ(manifest["inputs"][0]["sha256"].get<std::string>().size(), 64u);
  EXPECT_NE(manifest["config"].get<std::string>().find("scale_count = 8"), std::string::npos);

  const auto p1 = run("predict" + cfg + " --out " + (dir / "p1").string() + inputs, dir.path());
  const auto p2 = run("predict" + cfg + " --out " + (dir / "p2").string() + inputs, dir.path());
  ASSERT_EQ(p1.code, 0) << p1.err;
  ASSERT_EQ(p2.code, 0) << p2.err;
  for (const char* name : {"trace_synth_0.csv", "trace_synth_1.csv", "trace_synth_2.csv"}) {
    const auto a = slurp(dir / "p1" / name);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "p2" / name)) << name;
  }

  const auto ev = run("evaluate" + cfg + " --out " + (dir / "ev").string() + inputs, dir.path());
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nlohmann::ordered_json::parse(slurp(dir / "ev" / "report.json"));
  EXPECT_TRUE(report.contains("sensitivity"));
  EXPECT_EQ(report["prediction_times_s"].size(), 3u);

  const auto kl = run("analyze-kl" + cfg + " --out " + (dir / "kl").string() + inputs, dir.path());
  ASSERT_EQ(kl.code, 0) << kl.err;
  EXPECT_TRUE(fs::exists(dir / "kl" / "kl_synth_1.csv"));

  const auto sp = run("analyze-spectral" + cfg + " --out " + (dir / "sp").string() + inputs, dir.path());
  ASSERT_EQ(sp.code, 0) << sp.err;
  const auto csv = slurp(dir / "sp" / "spectral.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);  // header + 3 recordings x 2 channels
}
