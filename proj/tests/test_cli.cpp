#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cvhct/run_manifest.hpp"
#include "cvhct/slice_io.hpp"
#include "cvhct/trainer.hpp"
#include "oracles.hpp"

using namespace cvhct;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string output;
};

Outcome run(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli_output.txt";
  const std::string cmd = std::string(CVHCT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Untrained narrow checkpoint; enough to exercise the inference commands.
fs::path tiny_checkpoint(const fs::path& dir) {
  auto c = desk_profile();
  c.generator.filters = 8;
  c.generator.cbam_mlp_reduction = 2;
  c.discriminator.base_filters = 8;
  c.discriminator.max_filters = 32;
  const auto path = dir / "tiny.cvhc";
  Trainer(c).checkpoint(0, {}).save(path);
  return path;
}

}  // namespace

TEST(Cli, SynthDataWritesDomainsAndIsDeterministic) {
  oracle::TempDir dir("cli_synth");
  const std::string common = " --profile desk --seed 7 --set synth.n_slices_per_domain=2 --set synth.n_eval_pairs=1";
  ASSERT_EQ(run("synth-data --out " + q(dir.path() / "d1") + common, dir.path()).code, 0);
  ASSERT_EQ(run("synth-data --out " + q(dir.path() / "d2") + common, dir.path()).code, 0);
  EXPECT_TRUE(fs::exists(dir.path() / "d1" / "A" / "manifest.jsonl"));
  EXPECT_TRUE(fs::exists(dir.path() / "d1" / "B" / "manifest.jsonl"));
  EXPECT_TRUE(fs::exists(dir.path() / "d1" / "transform_record.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "d1" / "run_manifest.json"));
  EXPECT_EQ(hash_directory(dir.path() / "d1"), hash_directory(dir.path() / "d2"));
  EXPECT_EQ(read_run_manifest(dir.path() / "d1").content_hash(), read_run_manifest(dir.path() / "d2").content_hash());
}

TEST(Cli, ValidationAndRefusalExitCodes) {
  oracle::TempDir dir("cli_codes");
  EXPECT_EQ(run("synth-data --out " + q(dir.path() / "z") + " --profile desk --set synth.n_slices_per_domain=0",
                dir.path())
                .code,
            2);
  fs::create_directories(dir.path() / "full");
  write_text(dir.path() / "full" / "keep.txt", "x");
  EXPECT_EQ(run("synth-data --out " + q(dir.path() / "full") + " --profile desk", dir.path()).code, 2);
  EXPECT_TRUE(fs::exists(dir.path() / "full" / "keep.txt"));
  EXPECT_EQ(run("synth-data --out " + q(dir.path() / "x") + " --profile nope", dir.path()).code, 2);
  EXPECT_EQ(run("synth-data --out " + q(dir.path() / "x") + " --set train.bogus=1", dir.path()).code, 2);
  EXPECT_EQ(run("no-such-command", dir.path()).code, 2);
}

TEST(Cli, TrainRejectsMissingDataset) {
  oracle::TempDir dir("cli_train");
  const auto r = run("train --profile desk --data " + q(dir.path() / "absent") + " --out " + q(dir.path() / "run"),
                     dir.path());
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.code, 4) << r.output;
}

TEST(Cli, HarmonizeWholeSliceWarnsOnTagMismatch) {
  oracle::TempDir dir("cli_harm");
  const auto ckpt = tiny_checkpoint(dir.path());
  save_slice({Image<std::int16_t>(512, 512, 40), Domain::B, "b"}, dir.path() / "in.cvhs");
  const auto r = run("harmonize --input " + q(dir.path() / "in.cvhs") + " --direction A2B --checkpoint " + q(ckpt) +
                         " --output " + q(dir.path() / "out.cvhs"),
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("warning"), std::string::npos) << r.output;
  const auto out = load_slice(dir.path() / "out.cvhs");
  EXPECT_EQ(out.height(), 512);
  EXPECT_EQ(out.width(), 512);
  EXPECT_EQ(out.domain, Domain::B);
}

TEST(Cli, HarmonizeCorruptInputIsIntegrityError) {
  oracle::TempDir dir("cli_corrupt");
  const auto ckpt = tiny_checkpoint(dir.path());
  auto bytes = encode_slice({Image<std::int16_t>(64, 64), Domain::A, "a"});
  bytes.resize(bytes.size() - 10);
  write_file_atomic(dir.path() / "bad.cvhs", bytes);
  const auto r = run("harmonize --input " + q(dir.path() / "bad.cvhs") + " --direction A2B --checkpoint " + q(ckpt) +
                         " --output " + q(dir.path() / "o.cvhs"),
                     dir.path());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_FALSE(fs::exists(dir.path() / "o.cvhs"));
  EXPECT_EQ(run("harmonize --input " + q(dir.path() / "bad.cvhs") + " --direction C2D --checkpoint " + q(ckpt) +
                    " --output " + q(dir.path() / "o.cvhs"),
                dir.path())
                .code,
            2);
}

TEST(Cli, EvaluateSelfPairsGivesPerfectScores) {
  oracle::TempDir dir("cli_eval");
  ASSERT_EQ(run("synth-data --out " + q(dir.path() / "d") +
                    " --profile desk --set synth.n_slices_per_domain=1 --set synth.n_eval_pairs=2",
                dir.path())
                .code,
            0);
  write_text(dir.path() / "d" / "eval" / "self.jsonl",
             "{\"source\":\"A/eval_a_0000.cvhs\",\"target\":\"A/eval_a_0000.cvhs\"}\n"
             "{\"source\":\"B/eval_b_0001.cvhs\",\"target\":\"B/eval_b_0001.cvhs\"}\n");
  const auto r = run("evaluate --profile desk --pairs " + q(dir.path() / "d" / "eval" / "self.jsonl") + " --out " +
                         q(dir.path() / "ev"),
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream in(dir.path() / "ev" / "report.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["psnr_db"], "inf");
  EXPECT_DOUBLE_EQ(j["ssim"].get<double>(), 1.0);
  EXPECT_NEAR(j["ncc"].get<double>(), 1.0, 1e-12);
  ASSERT_EQ(j["classes"].size(), 6u);
  int absent = 0;
  for (const auto& c : j["classes"]) {
    if (c["status"] == "absent") {
      ++absent;
      continue;
    }
    EXPECT_NEAR(c["ccc_mean"].get<double>(), 1.0, 1e-12) << c["class"];
  }
  EXPECT_EQ(absent, 4);
  EXPECT_TRUE(fs::exists(dir.path() / "ev" / "report.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "ev" / "residual_0.ppm"));
}

TEST(Cli, EvaluateRoiSeedIsReproducible) {
  oracle::TempDir dir("cli_roi");
  ASSERT_EQ(run("synth-data --out " + q(dir.path() / "d") +
                    " --profile desk --set synth.n_slices_per_domain=1 --set synth.n_eval_pairs=2",
                dir.path())
                .code,
            0);
  const std::string base = "evaluate --profile desk --roi-seed 11 --pairs " + q(dir.path() / "d" / "eval" / "pairs.jsonl");
  ASSERT_EQ(run(base + " --out " + q(dir.path() / "e1"), dir.path()).code, 0);
  ASSERT_EQ(run(base + " --out " + q(dir.path() / "e2"), dir.path()).code, 0);
  std::ifstream a(dir.path() / "e1" / "report.csv"), b(dir.path() / "e2" / "report.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Cli, ResidualMapCommand) {
  oracle::TempDir dir("cli_resid");
  save_slice({Image<std::int16_t>(32, 32, 0), Domain::B, "t"}, dir.path() / "t.cvhs");
  save_slice({Image<std::int16_t>(32, 32, 100), Domain::B, "s"}, dir.path() / "s.cvhs");
  const auto r = run("residual-map --target " + q(dir.path() / "t.cvhs") + " --synth " + q(dir.path() / "s.cvhs") +
                         " --out " + q(dir.path() / "r.ppm"),
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir.path() / "r.ppm"));
}
