#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lesionkit/volume.hpp"

namespace fs = std::filesystem;
using namespace lesionkit;

namespace {

const fs::path kCli = LESIONKIT_CLI_PATH;
const fs::path kSource = LESIONKIT_SOURCE_DIR;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lesionkit_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run(const std::string& args, const fs::path& cwd = fs::temp_directory_path()) {
  const fs::path log = cwd / "cli_output.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" + kCli.string() + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log);
  fs::remove(log);
  return r;
}

std::string slurp(const fs::path& p) { return read_file(p); }

// Relative path -> contents for every regular file under `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST(Cli, UnknownOrMissingSubcommand) {
  EXPECT_EQ(run("").code, 64);
  EXPECT_EQ(run("frobnicate --out x").code, 64);
  EXPECT_EQ(run("--version").code, 0);
}

TEST(Cli, IwBceWithoutWeights) {
  const fs::path dir = fresh_dir("loss");
  Mask m(Dims{4, 4, 4}, Spacing{}, std::uint8_t{0});
  m[5] = 1;
  write_volume(m, dir / "gt.rvol");
  write_volume(VoxelGrid(m.dims(), m.spacing(), 0.5f), dir / "p.rvol");
  const CliResult r = run("loss --kind iwbce --prob p.rvol --mask gt.rvol --out out", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--weights"), std::string::npos) << r.output;

  const CliResult ok = run("loss --kind bce --prob p.rvol --mask gt.rvol --out out", dir);
  EXPECT_EQ(ok.code, 0) << ok.output;
  const auto j = read_json(dir / "out" / "loss.json");
  EXPECT_NEAR(j.at("value").get<double>(), std::log(2.0), 1e-12);

  EXPECT_EQ(run("loss --kind bce --prob missing.rvol --mask gt.rvol --out out", dir).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, PrcToyFixture) {
  const fs::path dir = fresh_dir("prc");
  // G1 at x 1..2, G2 at x 8..9; P1 (0.9) covers G1, P2 (0.6) sits apart.
  Mask gt(Dims{12, 6, 6}, Spacing{}, std::uint8_t{0});
  gt.at(1, 1, 1) = gt.at(2, 1, 1) = 1;
  gt.at(8, 1, 1) = gt.at(9, 1, 1) = 1;
  VoxelGrid p(gt.dims(), gt.spacing(), 0.1f);
  p.at(1, 1, 1) = 0.9f;
  p.at(2, 1, 1) = 0.7f;
  p.at(5, 4, 4) = 0.6f;
  write_volume(VoxelGrid(gt.dims(), gt.spacing(), 0.0f), dir / "img.rvol");
  write_volume(gt, dir / "gt.rvol");
  write_volume(p, dir / "prob.rvol");
  DatasetManifest m{Split::kHoldout, {{"toy", "img.rvol", "gt.rvol", fs::path("prob.rvol")}}};
  write_json(to_json(m), dir / "manifest.json");

  const CliResult r = run("prc --manifest manifest.json --out out", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream csv(slurp(dir / "out" / "prc.csv"));
  std::string header, row05, row06, row09;
  std::getline(csv, header);
  std::getline(csv, row05);
  std::getline(csv, row06);
  std::getline(csv, row09);
  EXPECT_EQ(header, "threshold,tp,fp,fn,precision,recall");
  EXPECT_EQ(row05, "0.5,1,1,1,0.5,0.5");
  EXPECT_EQ(row06.substr(row06.find(',')), ",1,0,1,1,0.5");
  EXPECT_EQ(row09.substr(row09.find(',')), ",0,0,2,1,0");
  EXPECT_TRUE(fs::exists(dir / "out" / "prc_summary.json"));
  fs::remove_all(dir);
}

TEST(Cli, ReproIsByteIdenticalAndStaysInOut) {
  const fs::path dir = fresh_dir("repro");
  const std::string cfg = (kSource / "configs" / "smoke.json").string();
  const CliResult a = run("repro --config '" + cfg + "' --seed 7 --out a", dir);
  ASSERT_EQ(a.code, 0) << a.output;
  const CliResult b = run("repro --config '" + cfg + "' --seed 7 --out b", dir);
  ASSERT_EQ(b.code, 0) << b.output;

  const auto ta = tree(dir / "a");
  const auto tb = tree(dir / "b");
  EXPECT_GT(ta.size(), 10u);
  EXPECT_EQ(ta, tb);
  EXPECT_TRUE(ta.count("loss_benchmark/loss_benchmark.json"));
  EXPECT_TRUE(ta.count("rater_study/agreement.csv"));

  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(dir)) top.insert(e.path().filename().string());
  EXPECT_EQ(top, (std::set<std::string>{"a", "b"}));
  fs::remove_all(dir);
}

TEST(Cli, PhantomPipeline) {
  const fs::path dir = fresh_dir("pipeline");
  const std::string cfg = (kSource / "configs" / "smoke.json").string();
  ASSERT_EQ(run("phantom gen --config '" + cfg + "' --cases 3 --predictions --out data", dir).code, 0);
  ASSERT_TRUE(fs::exists(dir / "data" / "manifest.json"));
  const CliResult t = run("train --config '" + cfg + "' --manifest data/manifest.json --out model", dir);
  ASSERT_EQ(t.code, 0) << t.output;
  EXPECT_TRUE(fs::exists(dir / "model" / "model.json"));
  EXPECT_TRUE(fs::exists(dir / "model" / "train_log.csv"));
  const CliResult pr = run("prc --manifest data/manifest.json --bootstrap-iters 10 --out prc", dir);
  ASSERT_EQ(pr.code, 0) << pr.output;
  const auto run_json = read_json(dir / "prc" / "run.json");
  EXPECT_EQ(run_json.at("command").get<std::string>(), "prc");
  ASSERT_EQ(run("phantom gen --config '" + cfg + "' --study --out study", dir).code, 0);
  const CliResult re = run("rater-eval --study study/study.json --out eval", dir);
  ASSERT_EQ(re.code, 0) << re.output;
  EXPECT_TRUE(fs::exists(dir / "eval" / "timing.csv"));
  fs::remove_all(dir);
}
