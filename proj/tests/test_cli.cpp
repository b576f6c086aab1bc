#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "json.hpp"
#include "wellcast/video.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WELLCAST_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wellcast_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train --help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("simulate --out x --bogus"), 2);
  EXPECT_EQ(run_cli("simulate --out x --wells notanumber"), 2);
}

TEST(Cli, StageFailureExitsOne) {
  const fs::path dir = scratch("fail");
  fs::create_directories(dir / "bad");
  std::ofstream(dir / "bad" / "manifest.json") << "not json";
  EXPECT_EQ(run_cli("preprocess --manifest " + (dir / "bad" / "manifest.json").string() + " --out " +
                    (dir / "out").string()),
            1);
  EXPECT_EQ(run_cli("simulate --wells 0 --out " + (dir / "sim").string()), 1);
}

TEST(Cli, SimulateThenEval) {
  const fs::path dir = scratch("sim");
  ASSERT_EQ(run_cli("simulate --wells 3 --seed 5 --out " + dir.string() + " --workers 2"), 0);
  const auto manifest = wellcast::load_manifest(dir / "manifest.json");
  ASSERT_EQ(manifest.records.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "resolved_config.json"));
  const auto config = nlohmann::json::parse(slurp(dir / "resolved_config.json"));
  EXPECT_EQ(config["simulate"]["wells"], 3);

  const fs::path well = manifest.resolve(manifest.records[0]);
  const fs::path report = dir / "eval" / "report.json";
  ASSERT_EQ(run_cli("eval --gt " + well.string() + " --pred " + well.string() + " --out " + report.string()), 0);
  const auto json = nlohmann::json::parse(slurp(report));
  const auto& frames = json.is_array() ? json[0]["frames"] : json["frames"];
  ASSERT_FALSE(frames.empty());
  for (const auto& f : frames) {
    EXPECT_EQ(f["mse"], 0.0);
    EXPECT_EQ(f["ssim"], 1.0);
  }
  EXPECT_TRUE(fs::exists(dir / "eval" / "report.csv"));

  const fs::path again = scratch("sim_again");
  ASSERT_EQ(run_cli("simulate --wells 3 --seed 5 --out " + again.string()), 0);
  EXPECT_EQ(slurp(again / "manifest.json"), slurp(dir / "manifest.json"));
}
