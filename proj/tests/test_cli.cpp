#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "domfw/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(DOMFW_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("domfw_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto path = dir / "config.txt";
  domfw::io::write_file(path.string(), text);
  return path;
}

const char* kSmall = "problem.n = 3\nproblem.T = 10\nproblem.d = 4\n";

}  // namespace

TEST(Cli, ValidateEchoesCanonicalConfig) {
  const auto dir = scratch("validate");
  const auto r = cli("validate " + write_config(dir, kSmall).string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("problem.n = 3"), std::string::npos);
  EXPECT_NE(r.out.find("schedule.rho = 4"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitOne) {
  const auto dir = scratch("bad");
  const auto r = cli("validate " + write_config(dir, "schedule.gamma = 1.5\nproblem.bogus = 1\n").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("line 1"), std::string::npos);
  EXPECT_NE(r.out.find("line 2"), std::string::npos);
  EXPECT_EQ(cli("run " + (dir / "missing.txt").string()).code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("").code, 1);
}

TEST(Cli, RunWritesArtifactsWithOverrides) {
  const auto dir = scratch("run");
  const auto out = dir / "artifacts";
  const auto r = cli("run " + write_config(dir, kSmall).string() + " --seed 5 --out-dir " + out.string() +
                     " --dump-network");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(out / "network.csv"));
  EXPECT_TRUE(fs::exists(out / "regret.csv"));
  const auto manifest = domfw::io::read_file((out / "manifest.txt").string());
  EXPECT_NE(manifest.find("problem.seed = 5"), std::string::npos);
  EXPECT_NE(manifest.find("output.dump_network = true"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  const auto dir = scratch("runtime");
  const auto out = dir / "artifacts";
  fs::create_directories(out / "regret.csv");
  const auto r = cli("run " + write_config(dir, kSmall).string() + " --out-dir " + out.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(fs::exists(out / "FAILED"));
}

TEST(Cli, SweepWritesTable) {
  const auto dir = scratch("sweep");
  const auto out = dir / "artifacts";
  const auto r = cli("sweep " + write_config(dir, kSmall).string() + " --axis gamma --values 0.3,0.5 --out-dir " +
                     out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto table = domfw::io::parse_csv(domfw::io::read_file((out / "sweep.csv").string()));
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0][0], "0.3");
  EXPECT_EQ(cli("sweep " + (dir / "config.txt").string() + " --axis colour --values 1").code, 1);
  EXPECT_EQ(cli("sweep " + (dir / "config.txt").string() + " --axis gamma --values 3").code, 1);
}

TEST(Cli, SlopeFitsCsv) {
  const auto dir = scratch("slope");
  domfw::io::write_file((dir / "pts.csv").string(), "T,count\n10,100\n100,10000\n1000,1000000\n");
  const auto r = cli("slope " + (dir / "pts.csv").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "2\n");
  domfw::io::write_file((dir / "bad.csv").string(), "T,count\n10,100\n100,-1\n1000,5\n");
  EXPECT_EQ(cli("slope " + (dir / "bad.csv").string()).code, 1);
}

TEST(Cli, RepeatedRunsByteIdentical) {
  const auto dir = scratch("determinism");
  const auto cfg = write_config(dir, kSmall).string();
  ASSERT_EQ(cli("run " + cfg + " --out-dir " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli("run " + cfg + " --out-dir " + (dir / "b").string()).code, 0);
  for (const char* f : {"regret.csv", "envelopes.csv", "trajectory.csv"})
    EXPECT_EQ(domfw::io::read_file((dir / "a" / f).string()), domfw::io::read_file((dir / "b" / f).string()));
}
