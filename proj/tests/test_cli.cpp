#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "scct/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "scct");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = scct::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const char* kSmallModel = R"({"model": {"num_encoder_layers": 1, "encoder_dim": 16,
  "feedforward_dim": 32, "self_attention_heads": 2, "cross_attention_heads": 2,
  "embedding_dim": 8, "predictor_dim": 16, "context_blstm_layers": 1,
  "context_dim": 8, "joiner_dim": 16}})";

class Cli : public ::testing::Test {
 protected:
  fs::path root;

  void SetUp() override {
    root = fs::temp_directory_path() /
           ("scct_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  fs::path gen(const std::string& name, int seed = 3) {
    const fs::path d = root / name;
    const Result r = run_cli({"gen-data", "--out-dir", d.string(), "--seed", std::to_string(seed),
                              "--num-train", "12", "--num-test", "6", "--num-rare", "3"});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }

  fs::path small_config() {
    const fs::path c = root / "small.json";
    spit(c, kSmallModel);
    return c;
  }

  fs::path train(const fs::path& data, const std::string& name) {
    const fs::path run = root / name;
    const Result r = run_cli({"train", "--config", small_config().string(), "--manifest",
                              (data / "train.jsonl").string(), "--out-dir", run.string(),
                              "--max-steps", "4", "--batch-size", "3"});
    EXPECT_EQ(r.code, 0) << r.err;
    return run;
  }
};

}  // namespace

TEST_F(Cli, GenDataWritesRequestedCounts) {
  const fs::path d = gen("a");
  EXPECT_EQ(count_lines(d / "train.jsonl"), 12u);
  EXPECT_EQ(count_lines(d / "test.jsonl"), 6u);
  EXPECT_EQ(count_lines(d / "rare_hints.txt"), 3u);
  EXPECT_TRUE(fs::is_regular_file(d / "synth.json"));
}

TEST_F(Cli, GenDataSameSeedIsByteIdentical) {
  const fs::path a = gen("a", 7), b = gen("b", 7), c = gen("c", 8);
  for (const char* f : {"train.jsonl", "test.jsonl", "rare_hints.txt", "negative_pool.txt"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_NE(slurp(a / "train.jsonl"), slurp(c / "train.jsonl"));
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run_cli({"train", "--out-dir", (root / "r").string()}).code, 1);
  EXPECT_EQ(run_cli({"train", "--manifest", (root / "missing.jsonl").string(), "--out-dir",
                     (root / "r").string()})
                .code,
            1);
  EXPECT_EQ(run_cli({"decode", "--checkpoint", (root / "missing.scj").string()}).code, 1);
  EXPECT_EQ(run_cli({"eval", "--hyps", (root / "missing.txt").string()}).code, 1);
}

TEST_F(Cli, UnknownConfigKeysAreRejected) {
  const fs::path d = gen("d");
  spit(root / "top.json", R"({"modle": {}})");
  spit(root / "nested.json", R"({"optim": {"lr": 0.01, "learning_rate": 0.01}})");
  spit(root / "broken.json", "{");
  for (const char* c : {"top.json", "nested.json", "broken.json"}) {
    const Result r = run_cli({"train", "--config", (root / c).string(), "--manifest",
                              (d / "train.jsonl").string(), "--out-dir", (root / "r").string()});
    EXPECT_EQ(r.code, 1) << c;
    EXPECT_FALSE(r.err.empty());
  }
}

TEST_F(Cli, FlagsOverrideConfig) {
  spit(root / "gen.json", R"({"dataset": {"num_train": 5, "num_test": 4, "num_rare": 2}})");
  const fs::path d = root / "g";
  ASSERT_EQ(run_cli({"gen-data", "--config", (root / "gen.json").string(), "--out-dir",
                     d.string(), "--num-train", "9"})
                .code,
            0);
  EXPECT_EQ(count_lines(d / "train.jsonl"), 9u);
  EXPECT_EQ(count_lines(d / "test.jsonl"), 4u);
}

TEST_F(Cli, TrainResumeContinuesStepCounter) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  EXPECT_EQ(count_lines(run / "loss_curve.jsonl"), 4u);
  const fs::path more = root / "more";
  const Result r = run_cli({"train", "--config", small_config().string(), "--manifest",
                            (d / "train.jsonl").string(), "--out-dir", more.string(), "--resume",
                            (run / "checkpoint.scj").string(), "--max-steps", "2",
                            "--batch-size", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream is(more / "loss_curve.jsonl");
  std::vector<int> steps;
  for (std::string line; std::getline(is, line);)
    steps.push_back(nlohmann::json::parse(line).at("step").get<int>());
  EXPECT_EQ(steps, (std::vector<int>{5, 6}));
}

TEST_F(Cli, ResumeWithOtherShapeIsConfigError) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  const Result r = run_cli({"train", "--manifest", (d / "train.jsonl").string(), "--out-dir",
                            (root / "x").string(), "--resume", (run / "checkpoint.scj").string(),
                            "--max-steps", "1"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, NanAbortExitsTwo) {
  const fs::path d = gen("d");
  spit(root / "nan.json", R"({"optim": {"lr": 1e308, "clip_norm": 0}, "model": {"num_encoder_layers": 1,
    "encoder_dim": 16, "feedforward_dim": 32, "self_attention_heads": 2,
    "cross_attention_heads": 2, "embedding_dim": 8, "predictor_dim": 16,
    "context_blstm_layers": 1, "context_dim": 8, "joiner_dim": 16}})");
  const Result r = run_cli({"train", "--config", (root / "nan.json").string(), "--manifest",
                            (d / "train.jsonl").string(), "--out-dir", (root / "n").string(),
                            "--max-steps", "6", "--batch-size", "2"});
  EXPECT_EQ(r.code, 2) << r.out << r.err;
  EXPECT_TRUE(fs::is_regular_file(root / "n" / "nan_batch.jsonl"));
}

TEST_F(Cli, DecodeAllModesWritesFourFiles) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  const fs::path out = root / "dec";
  const Result r = run_cli({"decode", "--checkpoint", (run / "checkpoint.scj").string(),
                            "--manifest", (d / "test.jsonl").string(), "--hints",
                            (d / "rare_hints.txt").string(), "--out-dir", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* m : {"none", "context", "fusion", "both"}) {
    EXPECT_EQ(count_lines(out / ("transcripts_" + std::string(m) + ".txt")), 6u) << m;
  }
}

TEST_F(Cli, DecodeHintModesNeedHints) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  const std::vector<std::string> base = {"decode", "--checkpoint",
                                         (run / "checkpoint.scj").string(), "--manifest",
                                         (d / "test.jsonl").string(), "--out-dir",
                                         (root / "o").string(), "--mode"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run_cli(a).code;
  };
  EXPECT_EQ(with({"context"}), 1);
  EXPECT_EQ(with({"fusion", "--hints", (root / "missing.txt").string()}), 1);
  EXPECT_EQ(with({"none"}), 0);
  EXPECT_EQ(with({"none", "--boost", "-1"}), 1);
}

TEST_F(Cli, NoHintsModeIgnoresHintsFile) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  spit(root / "other.txt", "zzz\nqqq\n");
  auto dec = [&](const fs::path& hints, const std::string& out) {
    EXPECT_EQ(run_cli({"decode", "--checkpoint", (run / "checkpoint.scj").string(), "--manifest",
                       (d / "test.jsonl").string(), "--hints", hints.string(), "--mode", "none",
                       "--out-dir", (root / out).string()})
                  .code,
              0);
    return slurp(root / out / "transcripts_none.txt");
  };
  EXPECT_EQ(dec(d / "rare_hints.txt", "a"), dec(root / "other.txt", "b"));
}

TEST_F(Cli, ZeroBoostFusionEqualsNone) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  const fs::path out = root / "dec";
  ASSERT_EQ(run_cli({"decode", "--checkpoint", (run / "checkpoint.scj").string(), "--manifest",
                     (d / "test.jsonl").string(), "--hints", (d / "rare_hints.txt").string(),
                     "--boost", "0", "--out-dir", out.string()})
                .code,
            0);
  EXPECT_EQ(slurp(out / "transcripts_fusion.txt"), slurp(out / "transcripts_none.txt"));
  EXPECT_EQ(slurp(out / "transcripts_both.txt"), slurp(out / "transcripts_context.txt"));
}

TEST_F(Cli, EvalIdenticalFilesAndSelfBaseline) {
  spit(root / "refs.txt", "the cat sat\nzorb on mat\n\nred fish\n");
  spit(root / "hints.txt", "zorb\n");
  const fs::path rep = root / "rep.json";
  Result r = run_cli({"eval", "--hyps", (root / "refs.txt").string(), "--refs",
                      (root / "refs.txt").string(), "--hints", (root / "hints.txt").string(),
                      "--report", rep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(rep));
  const scct::EvalReport e = j.get<scct::EvalReport>();
  EXPECT_EQ(e.wer, 0.0);
  EXPECT_EQ(e.oov_accuracy.value(), 100.0);
  EXPECT_NE(r.out.find("WER"), std::string::npos);

  spit(root / "hyps.txt", "the cat\nzorp on mat\n\nred fish\n");
  r = run_cli({"eval", "--hyps", (root / "hyps.txt").string(), "--refs",
               (root / "refs.txt").string(), "--hints", (root / "hints.txt").string(), "--report",
               (root / "base.json").string()});
  ASSERT_EQ(r.code, 0);
  const fs::path self = root / "self.json";
  r = run_cli({"eval", "--hyps", (root / "hyps.txt").string(), "--refs",
               (root / "refs.txt").string(), "--hints", (root / "hints.txt").string(),
               "--baseline", (root / "base.json").string(), "--report", self.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const scct::EvalReport s = nlohmann::json::parse(slurp(self)).get<scct::EvalReport>();
  ASSERT_TRUE(s.werr.has_value());
  EXPECT_EQ(*s.werr, 0.0);
  for (double v : {s.wer, s.oov_accuracy.value()}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
}

TEST_F(Cli, EvalLengthMismatchIsError) {
  spit(root / "a.txt", "one\ntwo\n");
  spit(root / "b.txt", "one\n");
  EXPECT_EQ(run_cli({"eval", "--hyps", (root / "a.txt").string(), "--refs",
                     (root / "b.txt").string()})
                .code,
            1);
}

TEST_F(Cli, ProbeTableHasOneRowPerIteration) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  const fs::path rep = root / "probe.json";
  const Result r = run_cli({"probe-convergence", "--checkpoint", (run / "checkpoint.scj").string(),
                            "--manifest", (d / "test.jsonl").string(), "--hints",
                            (d / "rare_hints.txt").string(), "--iters", "7", "--cells", "10",
                            "--resamples", "5", "--report", rep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const scct::ProbeReport p = nlohmann::json::parse(slurp(rep)).get<scct::ProbeReport>();
  ASSERT_EQ(p.rows.size(), 7u);
  for (const auto& row : p.rows) {
    EXPECT_TRUE(std::isfinite(row.avg_max_diff.mean));
    EXPECT_TRUE(std::isfinite(row.avg_mean_diff.mean));
  }
  std::istringstream lines(r.out);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) rows += !line.empty() && std::isdigit(line[0]);
  EXPECT_EQ(rows, 7u);
}

TEST_F(Cli, ProbeRejectsFewIterationsAndMissingCheckpoint) {
  const fs::path d = gen("d");
  const fs::path run = train(d, "run");
  EXPECT_EQ(run_cli({"probe-convergence", "--checkpoint", (run / "checkpoint.scj").string(),
                     "--manifest", (d / "test.jsonl").string(), "--iters", "5"})
                .code,
            1);
  EXPECT_EQ(run_cli({"probe-convergence", "--checkpoint", (root / "none.scj").string(),
                     "--manifest", (d / "test.jsonl").string()})
                .code,
            1);
}

#ifdef SCCT_CLI_PATH
TEST_F(Cli, BinaryExitCodes) {
  EXPECT_EQ(WEXITSTATUS(std::system((std::string(SCCT_CLI_PATH) + " >/dev/null 2>&1").c_str())), 1);
  EXPECT_EQ(WEXITSTATUS(std::system((std::string(SCCT_CLI_PATH) + " --help >/dev/null").c_str())), 0);
}
#endif
