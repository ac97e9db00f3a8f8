#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "cli/grid_csv.hpp"
#include "cli/output.hpp"

#include <mechreg/serialize.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mechreg;
using namespace mechreg::cli;
namespace fs = std::filesystem;

namespace {

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.ini");
}

std::string message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    return e.what();
  }
  ADD_FAILURE() << "no error";
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mechreg_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, SectionsCommentsAndLists) {
  Config c = parse("# top\n[a]\nx = 1.5  # trailing\nname = gauss\n\n[b.c]\nlist = 1, 2,3\nflag = yes\n");
  EXPECT_EQ(c.get_double("a.x", 0), 1.5);
  EXPECT_EQ(c.get_string("a.name", ""), "gauss");
  EXPECT_EQ(c.get_ints("b.c.list", {}), (std::vector<long long>{1, 2, 3}));
  EXPECT_TRUE(c.get_bool("b.c.flag", false));
  EXPECT_EQ(c.get_int("a.missing", 7), 7);
  c.reject_unused();
  EXPECT_NE(c.canonical().find("a.missing = 7\n"), std::string::npos);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(message([] { parse("[a]\nx = 1\nx = 2\n"); }).find("test.ini:3: duplicate key 'a.x'"), std::string::npos);
  EXPECT_NE(message([] { parse("[a]\njunk\n"); }).find("test.ini:2"), std::string::npos);
  EXPECT_NE(message([] { parse("[a\n"); }).find("test.ini:1"), std::string::npos);
  EXPECT_NE(message([] { parse("x =\n"); }).find("empty value"), std::string::npos);
  Config c = parse("\n[a]\nx = abc\n");
  EXPECT_NE(message([&] { c.get_double("a.x", 0); }).find("test.ini:3"), std::string::npos);
  Config u = parse("[a]\nx = 1\nytypo = 2\n");
  u.get_int("a.x", 0);
  EXPECT_NE(message([&] { u.reject_unused(); }).find("test.ini:3: unknown key 'a.ytypo'"), std::string::npos);
  Config l = parse("[a]\nv = 1,,2\n");
  EXPECT_NE(message([&] { l.get_doubles("a.v", {}); }).find("comma-separated"), std::string::npos);
}

TEST(Config, OverridesAndHash) {
  Config a = parse("[s]\nx = 1\n");
  a.set_override("s.x=2");
  EXPECT_EQ(a.get_int("s.x", 0), 2);
  EXPECT_THROW(a.set_override("no_equals"), Error);

  // The hash covers defaults and effective values but not excluded keys.
  auto hash_of = [](const std::string& text, const std::string& out) {
    Config c = parse(text);
    c.get_double("s.x", 1.0);
    c.get_string("run.output_dir", out);
    c.exclude_from_hash("run.output_dir");
    return c.hash("cmd");
  };
  EXPECT_EQ(hash_of("", "a"), hash_of("[s]\nx = 1\n", "b"));
  EXPECT_EQ(hash_of("[s]\nx = 1.0\n", "a"), hash_of("[s]\nx = 1e0\n", "a"));
  EXPECT_NE(hash_of("[s]\nx = 2\n", "a"), hash_of("", "a"));
}

TEST(GridCsv, ReadsAndRejects) {
  const fs::path dir = scratch("grid");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "ok.csv");
    f << "# comment\n2,2,1\n0,1,2,3,4\n1,0.5,-1,0,0\n";
  }
  GridImages g = read_grid_csv((dir / "ok.csv").string());
  EXPECT_EQ(g.height, 2);
  EXPECT_EQ(g.images.rows(), 2);
  EXPECT_EQ(g.images(0, 3), 4.0);
  EXPECT_EQ(g.labels, (std::vector<int>{0, 1}));
  {
    std::ofstream f(dir / "bad.csv");
    f << "2,2,1\n0,1,2,3\n";
  }
  EXPECT_NE(message([&] { read_grid_csv((dir / "bad.csv").string()); }).find("bad.csv:2"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}), exit_ok);
  EXPECT_EQ(run_cli({}), exit_config);
  EXPECT_EQ(run_cli({"nosuch"}), exit_config);
  EXPECT_EQ(run_cli({"remdemo", "--config", "/nonexistent/file.ini"}), exit_config);
  EXPECT_EQ(run_cli({"remdemo", "rem.typo=1"}), exit_config);
  EXPECT_EQ(run_cli({"swissroll", "shooting.h=-1"}), exit_config);
  const fs::path out = scratch("exit");
  // Infinite coordinates are a numerical failure, not a config error.
  EXPECT_EQ(run_cli({"swissroll", "data.scale=inf", "data.points_per_arm=3", "run.output_dir=" + out.string()}),
            exit_numerical);
  EXPECT_EQ(exit_code(ErrorCode::singular), exit_numerical);
  EXPECT_EQ(exit_code(ErrorCode::io), exit_config);
  fs::remove_all(out);
}

TEST(Cli, HeaderAndDeterminism) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const std::vector<std::string> common = {"data.train_per_class=3", "data.test_per_class=2", "grid.height=4",
                                           "grid.width=4"};
  auto run = [&](const fs::path& dir) {
    std::vector<std::string> o = common;
    o.push_back("run.output_dir=" + dir.string());
    return run_command("remdemo", "", o);
  };
  run(a);
  run(b);
  const std::string first = slurp(a / "equivariance_report.csv");
  EXPECT_EQ(first, slurp(b / "equivariance_report.csv"));
  std::istringstream lines(first);
  std::string l;
  std::getline(lines, l);
  EXPECT_EQ(l, std::string("# mechreg ") + version_string);
  std::getline(lines, l);
  EXPECT_EQ(l, "# command remdemo");
  std::getline(lines, l);
  EXPECT_EQ(l.rfind("# config_hash ", 0), 0u);
  std::getline(lines, l);
  EXPECT_EQ(l, "# seed 1");
  std::getline(lines, l);
  EXPECT_EQ(l, "# rng mt19937_64");
  EXPECT_EQ(first.find("false"), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Output, Hex) {
  EXPECT_EQ(hex(0), "0000000000000000");
  EXPECT_EQ(hex(0xcbf29ce484222325ULL), "cbf29ce484222325");
}
