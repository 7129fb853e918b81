#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "panostitch/cli.hpp"
#include "panostitch/io.hpp"

namespace fs = std::filesystem;
using panostitch::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("panostitch_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::vector<std::string> kSmall = {"--set", "rig.erp_size=64x32", "--set",
                                         "rig.fisheye_size=48", "--set", "loss.ssim.window=5"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Cli, Version) {
  const Result r = call({"version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "panostitch 0.1.0\n");
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(call({}).code, 1);
  EXPECT_EQ(call({"frobnicate"}).code, 1);
  EXPECT_EQ(call({"stitch", "--bogus"}).code, 1);
  EXPECT_EQ(call({"stitch", "--out", "x.png"}).code, 1);
  const Result help = call({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("PANOSTITCH_THREADS"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsFailure) {
  const auto d = temp_dir("badkey");
  const Result r = call({"render", "--out", (d / "s").string(), "--set", "rig.colour=1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rig.colour"), std::string::npos);
}

TEST(Cli, MissingSceneIsFailure) {
  const Result r = call({"eval", "--scene", "/nonexistent/scene", "--panorama", "/nonexistent.png"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, RenderStitchEvalEndToEnd) {
  const auto d = temp_dir("e2e");
  const std::string scene = (d / "scene").string();
  ASSERT_EQ(call(with_small({"render", "--out", scene, "--seed", "3", "--max-yaw", "1.5"})).code, 0);
  EXPECT_TRUE(fs::exists(d / "scene" / "scene.cfg"));
  EXPECT_TRUE(fs::exists(d / "scene" / "masks" / "m_hat.png"));

  const Result fit = call(with_small({"fit-color", "--scene", scene, "--out", (d / "fitted").string()}));
  ASSERT_EQ(fit.code, 0) << fit.err;
  EXPECT_FALSE(fit.out.empty());

  const std::string pano = (d / "pano.png").string();
  const Result st = call(with_small({"stitch", "--scene", scene, "--out", pano, "--iters", "4",
                                     "--dump-intermediates", (d / "dump").string(), "--set",
                                     "io.write_wssf=true"}));
  ASSERT_EQ(st.code, 0) << st.err;
  EXPECT_NE(st.out.find("best_loss"), std::string::npos);
  EXPECT_TRUE(fs::exists(pano));
  EXPECT_TRUE(fs::exists(d / "pano.report.csv"));
  EXPECT_TRUE(fs::exists(d / "dump" / "output.png"));
  const std::string csv = slurp(d / "pano.report.csv");
  EXPECT_TRUE(fs::exists(d / "pano.wssf"));
  EXPECT_EQ(csv.rfind("iteration,total,perceptual,ssim\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(panostitch::io::read_png(pano).width(), 64);

  const Result ev = call(with_small({"eval", "--scene", scene, "--panorama", pano, "--kv", (d / "m.txt").string()}));
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("P_d"), std::string::npos);
  EXPECT_NE(ev.out.find("PSNR"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "m.txt"));

  // Same inputs, same bytes.
  const std::string pano2 = (d / "pano2.png").string();
  ASSERT_EQ(call(with_small({"stitch", "--scene", scene, "--out", pano2, "--iters", "4"})).code, 0);
  EXPECT_EQ(slurp(pano), slurp(pano2));
  EXPECT_EQ(slurp(d / "pano.report.csv"), slurp(d / "pano2.report.csv"));
}

TEST(Cli, GradcheckChainOnly) {
  const Result r = call({"gradcheck", "--seed", "2", "--chain-only"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}
