#include "helpers.hpp"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

using testutil::TempDir;

namespace {

struct CliRun {
  int status;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
CliRun cli(const std::string& args, const std::filesystem::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" NEUROSTAGE_CLI "' " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) out.append(buf.data(), n);
  const int raw = pclose(p);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  TempDir d;
  EXPECT_EQ(cli("frobnicate", d.path()).status, 2);
  EXPECT_EQ(cli("complexity --bogus", d.path()).status, 2);
  EXPECT_EQ(cli("", d.path()).status, 2);
  const CliRun r = cli("complexity --config missing.json", d.path());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("missing.json"), std::string::npos) << r.output;
}

TEST(Cli, HelpAndComplexity) {
  TempDir d;
  const CliRun h = cli("--help", d.path());
  EXPECT_EQ(h.status, 0);
  EXPECT_NE(h.output.find("ablate"), std::string::npos);
  const CliRun c = cli("complexity", d.path());
  EXPECT_EQ(c.status, 0);
  EXPECT_NE(c.output.find("phase2.gat"), std::string::npos);
  EXPECT_EQ(cli("complexity --variant xP-xPhaseII", d.path()).status, 0);
  EXPECT_EQ(cli("complexity --variant nope", d.path()).status, 1);
}

TEST(Cli, SynthTrainEvalPipeline) {
  TempDir d;
  const auto& wd = d.path();
  CliRun r = cli("synth-data --out w --classes 12 --images 2 --reps 2 --test-reps 2 --heldout 4 --subjects 2", wd);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(wd / "w/eeg/Sub02/ids.json"));
  EXPECT_TRUE(std::filesystem::exists(wd / "w/synthetic.json"));

  r = cli("train --config w/config.json --out m --epochs 2 --batch 8 --subject Sub02", wd);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("epoch 1"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(wd / "m/model.ckpt"));
  const auto man = nlohmann::json::parse(neurostage::io::read_text(wd / "m/manifest.json"));
  EXPECT_EQ(man.at("subject"), "Sub02");

  r = cli("eval --config w/config.json --out e --checkpoint m/model.ckpt --subject Sub02 --ks 1,3", wd);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto rep = nlohmann::json::parse(neurostage::io::read_text(wd / "e/report.json"));
  // Stages I, II_fine, III plus the coarse text protocol.
  EXPECT_EQ(rep.size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(wd / "e/report.csv"));

  r = cli("temporal --config w/config.json --out t --checkpoint m/model.ckpt --subject Sub02", wd);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("562.5"), std::string::npos);

  r = cli("eval --config w/config.json --out e --checkpoint nope.ckpt", wd);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("nope.ckpt"), std::string::npos);
}

TEST(Cli, AblateAndReport) {
  TempDir d;
  const auto& wd = d.path();
  ASSERT_EQ(cli("synth-data --out w --classes 12 --images 2 --reps 2 --test-reps 2 --heldout 6 --subjects 1", wd).status, 0);
  CliRun r = cli("ablate --config w/config.json --out a --variants Ours-All,xP-xPhaseII --epochs 1 --protocols standard", wd);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("2 trained"), std::string::npos) << r.output;
  const std::string table = neurostage::io::read_text(wd / "a/aggregate.csv");
  r = cli("report --plan a", wd);
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(neurostage::io::read_text(wd / "a/aggregate.csv"), table);
  r = cli("ablate --config w/config.json --out a --variants Ours-All,xP-xPhaseII --epochs 1 --protocols standard", wd);
  EXPECT_NE(r.output.find("2 cached"), std::string::npos) << r.output;
}
