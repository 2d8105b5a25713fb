#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace {

struct CliRun {
  int code;
  std::string out;
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(CABRA_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string demo(const std::string& f) { return std::string(CABRA_DEMOS_DIR) + "/" + f; }

std::filesystem::path scratch() {
  auto d = std::filesystem::temp_directory_path() / "cabra_cli_test";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Cli, SolveToyReportsIteration) {
  CliRun r = cli("solve --problem " + demo("toy2d.json") + " --json");
  ASSERT_EQ(r.code, 0) << r.out;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_EQ(j["converged_iteration"], 17);
}

TEST(Cli, SolveWritesTrace) {
  const auto trace = scratch() / "toy_trace.csv";
  CliRun r = cli("solve --problem " + demo("toy2d_scaled.json") + " --trace " + trace.string());
  ASSERT_EQ(r.code, 0);
  std::ifstream f(trace);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header.rfind("iter,fp_residual", 0), 0u);
}

TEST(Cli, ValidateExitCodes) {
  EXPECT_EQ(cli("validate --params " + demo("uniform_n4.json")).code, 0);
  const auto bad = scratch() / "bad_params.json";
  std::ofstream(bad) << R"({"schema_version": 1, "blocks": [{"Z": [[1, 0], [0, 1]]}]})";
  EXPECT_EQ(cli("validate --params " + bad.string()).code, 2);
}

TEST(Cli, MalformedInputIsIoError) {
  const auto bad = scratch() / "malformed.json";
  std::ofstream(bad) << "{\"schema_version\": 1,";
  EXPECT_EQ(cli("solve --problem " + bad.string()).code, 4);
  EXPECT_EQ(cli("solve --problem /nonexistent/problem.json").code, 4);
}

TEST(Cli, IterationCapExitCode) {
  EXPECT_EQ(cli("simulate --problem " + demo("quadratic_small.json") + " --max-iter 3").code, 3);
  EXPECT_EQ(cli("solve --problem " + demo("quadratic_small.json") + " --max-iter 3").code, 3);
}

TEST(Cli, SimulateWritesMessageLog) {
  const auto log = scratch() / "messages.csv";
  CliRun r = cli("simulate --problem " + demo("quadratic_small.json") + " --json --message-log " +
              log.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_GT(nlohmann::json::parse(r.out)["total_messages"].get<int>(), 0);
  EXPECT_TRUE(std::filesystem::exists(log));
}

TEST(Cli, DesignBlockParallel) {
  const auto out = scratch() / "designed.json";
  const auto sdpa = scratch() / "designed.dat-s";
  CliRun r = cli("design --spec " + demo("block_parallel_spec.json") + " --json --out " +
              out.string() + " --sdpa " + sdpa.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(nlohmann::json::parse(r.out)["valid"].get<bool>());
  EXPECT_EQ(cli("validate --params " + out.string()).code, 0);
  EXPECT_TRUE(std::filesystem::exists(sdpa));
}

TEST(Cli, BadArgumentsAreInvalid) {
  EXPECT_EQ(cli("solve --no-such-flag").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("solve --problem " + demo("toy2d.json") + " --mode w").code, 2);
}
