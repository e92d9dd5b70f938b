#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "pumpshaper_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome run(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(PUMPSHAPER_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string scenario(const std::string& name) { return std::string(PUMPSHAPER_SCENARIOS) + "/" + name; }

fs::path write(const fs::path& p, const std::string& content) {
  std::ofstream(p) << content;
  return p;
}

TEST(CliSpectrum, GaussianReportsKaz) {
  const auto dir = scratch("spectrum");
  ASSERT_EQ(run("spectrum --scenario " + scenario("gaussian_spectrum.yaml") + " --out " + (dir / "o").string(), dir).code, 0);
  const json doc = json::parse(slurp(dir / "o" / "spectrum.json"));
  EXPECT_EQ(doc["schema_version"], 1);
  EXPECT_NEAR(doc["k_az"].get<double>(), 1.87, 0.05);
  EXPECT_EQ(slurp(dir / "o" / "spectrum.csv").rfind("# schema_version=1", 0), 0u);
}

TEST(CliSpectrum, OamOutsideRangeIsConfigErrorWithLine) {
  const auto dir = scratch("bad_l");
  const auto file = write(dir / "bad.yaml", "name: bad\npump:\n  coefficients:\n    0: [1.0, 0.0]\n    14: [0.5, 0.0]\n");
  const Outcome r = run("spectrum --scenario " + file.string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.yaml:5:"), std::string::npos) << r.err;
}

TEST(CliScenario, UnknownKeyNamesLineAndColumn) {
  const auto dir = scratch("unknown_key");
  const auto file = write(dir / "s.yaml", "name: s\ncrystal:\n  length: 1.0e-3\n  lenght: 2.0e-3\n");
  const Outcome r = run("spectrum --scenario " + file.string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("s.yaml:4:3"), std::string::npos) << r.err;
}

TEST(CliOptimize, SeededTraceIsReproducible) {
  const auto dir = scratch("optimize");
  const std::string base = "optimize --scenario " + scenario("qutrit.yaml") + " --seed 11 --shots 1000 --out ";
  ASSERT_EQ(run(base + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run(base + (dir / "b").string(), dir).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "trace.jsonl"), slurp(dir / "b" / "trace.jsonl"));
  ASSERT_EQ(run(base.substr(0, base.find("--seed")) + "--seed 12 --shots 1000 --out " + (dir / "c").string(), dir).code, 0);
  EXPECT_NE(slurp(dir / "a" / "trace.jsonl"), slurp(dir / "c" / "trace.jsonl"));
}

TEST(CliOptimize, QuquartUsesEvenComponents) {
  const auto dir = scratch("ququart");
  ASSERT_EQ(run("optimize --scenario " + scenario("ququart.yaml") + " --out " + (dir / "o").string(), dir).code, 0);
  const json doc = json::parse(slurp(dir / "o" / "optimize.json"));
  EXPECT_EQ(doc["components"], json({0, 2, 4, 6}));
  EXPECT_TRUE(fs::exists(dir / "o" / "spectrum_final.csv"));
}

TEST(CliOptimize, StochasticStageNeedsSeed) {
  const auto dir = scratch("no_seed");
  const auto file = write(dir / "s.yaml", "name: s\nsubspace: S3\npump:\n  shape: gaussian\noptimize:\n  shots: 1000\n");
  const Outcome r = run("optimize --scenario " + file.string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("seed"), std::string::npos) << r.err;
}

TEST(CliOutput, RefusesOverwriteWithoutForce) {
  const auto dir = scratch("overwrite");
  const std::string args = "bell --state max-ent --out " + (dir / "o").string();
  ASSERT_EQ(run(args, dir).code, 0);
  const Outcome again = run(args, dir);
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  EXPECT_EQ(run(args + " --force", dir).code, 0);
}

TEST(CliTomo, MaxEntRoundTripAndCountsIngest) {
  const auto dir = scratch("tomo");
  ASSERT_EQ(run("tomo --state max-ent --seed 5 --out " + (dir / "sim").string(), dir).code, 0);
  const json sim = json::parse(slurp(dir / "sim" / "tomography.json"));
  EXPECT_GE(sim["entries"][0]["fidelity"].get<double>(), 0.99);
  EXPECT_TRUE(sim["entries"][0].contains("phase_errors"));

  ASSERT_EQ(run("tomo --seed 5 --counts " + (dir / "sim" / "counts.jsonl").string() + " --out " + (dir / "in").string(), dir).code, 0);
  const json in = json::parse(slurp(dir / "in" / "tomography.json"));
  EXPECT_NEAR(in["entries"][0]["purity"].get<double>(), sim["entries"][0]["purity"].get<double>(), 1e-6);
  EXPECT_TRUE(fs::exists(dir / "in" / "rho_real.csv"));
}

TEST(CliTomo, MalformedCountsNameTheLine) {
  const auto dir = scratch("bad_counts");
  const auto file = write(dir / "c.csv", "id,counts\ns0i0,12\ns0i1,twelve\n");
  const Outcome r = run("tomo --seed 1 --counts " + file.string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("c.csv:3"), std::string::npos) << r.err;

  const auto short_file = write(dir / "short.csv", "s0i0,12\n");
  EXPECT_EQ(run("tomo --seed 1 --counts " + short_file.string() + " --out " + (dir / "o2").string(), dir).code, 2);
}

TEST(CliTomo, AllZeroCountsIsNumericalError) {
  const auto dir = scratch("zero_counts");
  std::string body;
  for (int k = 0; k < 225; ++k) body += "s" + std::to_string(k / 15) + "i" + std::to_string(k % 15) + ",0\n";
  const auto file = write(dir / "z.csv", body);
  EXPECT_EQ(run("tomo --seed 1 --counts " + file.string() + " --out " + (dir / "o").string(), dir).code, 3);
}

TEST(CliBell, ReportsI3GammaScanAndNoise) {
  const auto dir = scratch("bell");
  ASSERT_EQ(run("bell --scenario " + scenario("bell_max_ent.yaml") + " --out " + (dir / "a").string(), dir).code, 0);
  const json a = json::parse(slurp(dir / "a" / "bell.json"));
  EXPECT_NEAR(a["uncorrected"]["i3"].get<double>(), 2.8729, 1e-4);
  EXPECT_NEAR(a["gamma_scan"]["gamma"].get<double>(), 0.79, 0.01);

  ASSERT_EQ(run("bell --state max-ent --noise 0.91 --out " + (dir / "b").string(), dir).code, 0);
  EXPECT_NEAR(json::parse(slurp(dir / "b" / "bell.json"))["uncorrected"]["i3"].get<double>(), 2.61, 0.01);

  // A state file written by bell is accepted back as --state.
  ASSERT_EQ(run("bell --state " + (dir / "a" / "bell.json").string() + " --out " + (dir / "c").string(), dir).code, 0);
  EXPECT_NEAR(json::parse(slurp(dir / "c" / "bell.json"))["uncorrected"]["i3"].get<double>(), 2.8729, 1e-4);
}

TEST(CliMask, WritesMasksAndRejectsUndersizedGrid) {
  const auto dir = scratch("mask");
  const auto small = write(dir / "small.yaml", "name: small\nmask:\n  width: 64\n  height: 64\n");
  EXPECT_EQ(run("mask --scenario " + small.string() + " --verify --out " + (dir / "bad").string(), dir).code, 2);

  const auto ok = write(dir / "ok.yaml",
                        "name: ok\npump:\n  coefficients:\n    -2: [0.76, -0.11]\n    0: [-0.12, 0.15]\n    2: [0.30, -0.53]\n"
                        "mask:\n  width: 256\n  height: 256\n  pitch: 16.0e-6\n  mode_waist: 0.6e-3\n  detection_modes: [1]\n");
  ASSERT_EQ(run("mask --scenario " + ok.string() + " --verify --out " + (dir / "o").string(), dir).code, 0);
  EXPECT_EQ(slurp(dir / "o" / "pump_mask.pgm").rfind("P5\n# schema_version=1\n256 256\n255\n", 0), 0u);
  const json side = json::parse(slurp(dir / "o" / "detection_l1.json"));
  EXPECT_DOUBLE_EQ(side["waist_ratio"].get<double>(), 1.6);
  const json report = json::parse(slurp(dir / "o" / "mask_report.json"));
  EXPECT_GE(report["pump"]["overlap"].get<double>(), 0.95);
}

TEST(CliPipeline, DeterministicSummaryAndSkippedTomography) {
  const auto dir = scratch("pipeline");
  const auto file = write(dir / "p.yaml",
                          "name: p\nseed: 9\nsubspace: S3\npump:\n  coefficients:\n    -2: [0.1, 0.0]\n    0: [1.0, 0.0]\n    2: [0.1, 0.0]\n"
                          "optimize:\n  iterations: 10\n  shots: 1000\ntomography:\n  counts: 1.0e5\n  bootstrap: 0\n  starts: 2\n"
                          "bell:\n  state: spectrum\nmask:\n  width: 256\n  height: 256\n  pitch: 16.0e-6\n  mode_waist: 0.6e-3\n"
                          "  detection_modes: [1]\n");
  ASSERT_EQ(run("pipeline --scenario " + file.string() + " --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run("pipeline --scenario " + file.string() + " --out " + (dir / "b").string(), dir).code, 0);
  json a = json::parse(slurp(dir / "a" / "summary.json"));
  json b = json::parse(slurp(dir / "b" / "summary.json"));
  ASSERT_TRUE(a.contains("meta"));
  a.erase("meta");
  b.erase("meta");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["optimize"]["cost_curve"].size(), 10u);
  EXPECT_TRUE(a["tomography"]["entries"][0].contains("fidelity"));
  EXPECT_TRUE(a["bell"]["corrected"].contains("i3"));
  EXPECT_TRUE(a["mask"]["pump"].contains("overlap"));

  const auto no_tomo = write(dir / "q.yaml", slurp(file) + "");
  std::string text = slurp(no_tomo);
  text.replace(text.find("tomography:\n"), 12, "tomography:\n  enabled: false\n");
  write(no_tomo, text);
  ASSERT_EQ(run("pipeline --scenario " + no_tomo.string() + " --out " + (dir / "c").string(), dir).code, 0);
  const json c = json::parse(slurp(dir / "c" / "summary.json"));
  EXPECT_TRUE(c["phases"].is_null());
  EXPECT_TRUE(c["tomography"].contains("skipped"));
  EXPECT_TRUE(c["bell"]["uncorrected"].contains("i3"));
}

TEST(CliParse, UnknownFlagIsConfigError) {
  const auto dir = scratch("parse");
  EXPECT_EQ(run("spectrum --bogus", dir).code, 2);
  EXPECT_EQ(run("bell --state max-ent --noise 1.5 --out " + (dir / "o").string(), dir).code, 2);
}

}  // namespace
