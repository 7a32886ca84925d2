#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "helpers.hpp"
#include "hfn/cli.hpp"

namespace fs = std::filesystem;
using testing_support::scratch_dir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "hfn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = hfn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> quick_train(const fs::path& dir) {
  return {"train", "--synthetic", "4", "--size", "16", "--steps", "3", "--seed", "7", "--batch_size", "2",
          "--ssim_window", "7", "--feedback_iterations", "2", "--out_dir", dir.string()};
}

}  // namespace

TEST(Cli, UnknownKeyIsConfigError) {
  EXPECT_EQ(run({"train", "--learning_rate", "0.1"}).code, hfn::cli::kConfigError);
  const auto dir = scratch_dir("cli_cfg");
  std::ofstream(dir / "run.cfg") << "lr = 0.001\nbogus = 1\n";
  const auto r = run({"train", "--config", (dir / "run.cfg").string()});
  EXPECT_EQ(r.code, hfn::cli::kConfigError);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST(Cli, BadValueIsConfigError) {
  EXPECT_EQ(run({"train", "--synthetic", "2", "--a1", "0.2"}).code, hfn::cli::kConfigError);
  EXPECT_EQ(run({"train", "--synthetic", "2", "--ag_mode", "sharp"}).code, hfn::cli::kConfigError);
  EXPECT_EQ(run({"train", "--synthetic", "two"}).code, hfn::cli::kConfigError);
  EXPECT_EQ(run({"train"}).code, hfn::cli::kConfigError);
}

TEST(Cli, EveryKeyIsDocumentedAndEchoed) {
  const auto dir = scratch_dir("cli_echo");
  std::ofstream(dir / "run.cfg") << "# comment\nlambda = 50  # inline\n\ngamma=0.5\n";
  const auto r = run({"train", "--config", (dir / "run.cfg").string(), "--synthetic", "4", "--size", "16", "--steps", "1",
                      "--ssim_window", "7", "--out_dir", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& k : hfn::cli::config_keys()) {
    EXPECT_FALSE(k.help.empty()) << k.name;
    EXPECT_NE(r.out.find("\n" + k.name + " = "), std::string::npos) << k.name;
  }
  EXPECT_NE(r.out.find("lambda = 50\n"), std::string::npos);
  EXPECT_NE(r.out.find("gamma = 0.5\n"), std::string::npos);
  EXPECT_LT(r.out.find("lambda = 50"), r.out.find("corpus:"));
}

TEST(Cli, TrainIsDeterministicAndWritesArtifacts) {
  const auto a = scratch_dir("cli_train_a"), b = scratch_dir("cli_train_b");
  ASSERT_EQ(run(quick_train(a)).code, 0);
  ASSERT_EQ(run(quick_train(b)).code, 0);
  EXPECT_EQ(slurp(a / "model.hfn"), slurp(b / "model.hfn"));
  EXPECT_EQ(slurp(a / "train.log"), slurp(b / "train.log"));
  EXPECT_FALSE(slurp(a / "train.log").empty());
}

TEST(Cli, ZeroLearningRateCheckpointEqualsInitialization) {
  const auto dir = scratch_dir("cli_lr0");
  auto args = quick_train(dir);
  args.insert(args.end(), {"--lr", "0"});
  ASSERT_EQ(run(args).code, 0);
  EXPECT_TRUE(hfn::load_checkpoint(dir / "model.hfn") == hfn::init_params<float>(7));
}

TEST(Cli, MissingDirectoryIsIngestionError) {
  const auto dir = scratch_dir("cli_ingest");
  fs::create_directories(dir / "ir");
  const auto r = run({"train", "--ir_dir", (dir / "ir").string(), "--vis_dir", (dir / "nowhere").string(), "--out_dir",
                      (dir / "o").string()});
  EXPECT_EQ(r.code, hfn::cli::kIngestionError);
  EXPECT_NE(r.err.find("nowhere"), std::string::npos);
}

TEST(Cli, DivergenceExitCode) {
  const auto dir = scratch_dir("cli_div");
  const auto r = run({"train", "--synthetic", "4", "--size", "16", "--steps", "40", "--batch_size", "2", "--ssim_window", "7",
                      "--lr", "1e30", "--optimizer", "sgd", "--out_dir", dir.string()});
  EXPECT_EQ(r.code, hfn::cli::kDivergence) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos);
}

TEST(Cli, FuseIsSymmetricAndReportsMetrics) {
  const auto dir = scratch_dir("cli_fuse");
  ASSERT_EQ(run(quick_train(dir)).code, 0);
  const auto ds = hfn::synth_corpus(1, 16, 3);
  hfn::write_pgm(dir / "ir.pgm", ds.pairs[0].infrared);
  hfn::write_pgm(dir / "vis.pgm", ds.pairs[0].visible);
  const std::string ck = (dir / "model.hfn").string();
  const auto r1 = run({"fuse", "--checkpoint", ck, "--ssim_window", "7", (dir / "ir.pgm").string(), (dir / "vis.pgm").string(),
                       (dir / "f1.pgm").string()});
  ASSERT_EQ(r1.code, 0) << r1.err;
  const auto r2 = run({"fuse", "--checkpoint", ck, "--ssim_window", "7", (dir / "vis.pgm").string(), (dir / "ir.pgm").string(),
                       (dir / "f2.pgm").string()});
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(slurp(dir / "f1.pgm"), slurp(dir / "f2.pgm"));
  const auto fused = hfn::read_pnm(dir / "f1.pgm");
  EXPECT_EQ(fused.height, 16u);
  EXPECT_EQ(fused.width, 16u);
  for (const char* m : {"EN=", "Qabf=", "SSIM=", "PSNR="}) EXPECT_NE(r1.out.find(m), std::string::npos);
}

TEST(Cli, FuseSelfPairMetricsUseDuplicateReference) {
  const auto dir = scratch_dir("cli_self");
  ASSERT_EQ(run(quick_train(dir)).code, 0);
  const auto ds = hfn::synth_corpus(1, 16, 4);
  hfn::write_pgm(dir / "a.pgm", ds.pairs[0].visible);
  const auto r = run({"fuse", "--checkpoint", (dir / "model.hfn").string(), "--ssim_window", "7", (dir / "a.pgm").string(),
                      (dir / "a.pgm").string(), (dir / "f.pgm").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  hfn::LossConfig cfg;
  cfg.ssim_window = 7;
  const auto a = hfn::read_pnm(dir / "a.pgm"), f = hfn::read_pnm(dir / "f.pgm");
  EXPECT_NE(r.out.find("SSIM=" + hfn::format_fixed(hfn::ssim_value(f, a, cfg), 6)), std::string::npos) << r.out;
}

TEST(Cli, FuseErrors) {
  const auto dir = scratch_dir("cli_fuse_err");
  ASSERT_EQ(run(quick_train(dir)).code, 0);
  hfn::write_pgm(dir / "a.pgm", hfn::ImageGray(16, 16, 0.5f));
  hfn::write_pgm(dir / "b.pgm", hfn::ImageGray(16, 12, 0.5f));
  const std::string ck = (dir / "model.hfn").string();
  EXPECT_EQ(run({"fuse", "--checkpoint", ck, (dir / "a.pgm").string(), (dir / "b.pgm").string(), (dir / "f.pgm").string()}).code,
            hfn::cli::kSizeMismatch);

  std::string bytes = slurp(dir / "model.hfn");
  const std::string from = "encoder.C1.weight f32 16,1,3,3";
  bytes.replace(bytes.find(from), from.size(), "encoder.C1.weight f32 8,1,3,3");
  std::ofstream(dir / "bad.hfn", std::ios::binary) << bytes;
  EXPECT_EQ(run({"fuse", "--checkpoint", (dir / "bad.hfn").string(), (dir / "a.pgm").string(), (dir / "a.pgm").string(),
                 (dir / "f.pgm").string()})
                .code,
            hfn::cli::kCheckpointError);
  EXPECT_FALSE(fs::exists(dir / "f.pgm"));
}

TEST(Cli, EvalSinglePairMeanEqualsRow) {
  const auto dir = scratch_dir("cli_eval");
  ASSERT_EQ(run(quick_train(dir)).code, 0);
  const auto r = run({"eval", "--checkpoint", (dir / "model.hfn").string(), "--synthetic", "1", "--size", "16", "--ssim_window",
                      "7", "--eval_split", "all", "--out_dir", (dir / "e").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string table = slurp(dir / "e" / "report.txt");
  const std::string rows = slurp(dir / "e" / "report.csv");
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 1);
  const auto pair_line = table.substr(table.find("pair000"), table.find('\n', table.find("pair000")) - table.find("pair000"));
  const auto mean_line = table.substr(table.find("mean"), table.find('\n', table.find("mean")) - table.find("mean"));
  EXPECT_EQ(pair_line.substr(8), mean_line.substr(8));

  const auto again = run({"eval", "--checkpoint", (dir / "model.hfn").string(), "--synthetic", "1", "--size", "16",
                          "--ssim_window", "7", "--eval_split", "all", "--out_dir", (dir / "e2").string()});
  EXPECT_EQ(slurp(dir / "e2" / "report.csv"), rows);
}

TEST(Cli, EvalEmptyTestSplitFails) {
  const auto dir = scratch_dir("cli_eval_empty");
  ASSERT_EQ(run(quick_train(dir)).code, 0);
  EXPECT_NE(run({"eval", "--checkpoint", (dir / "model.hfn").string(), "--synthetic", "1", "--size", "16", "--ssim_window",
                 "7", "--out_dir", (dir / "e").string()})
                .code,
            0);
}

TEST(Cli, GradcheckNegativeControlNamesOp) {
  const auto r = run({"gradcheck", "--seeds", "1", "--corrupt-adjoint", "sqrt"});
  EXPECT_EQ(r.code, hfn::cli::kFailure);
  EXPECT_NE(r.out.find("FAIL sqrt"), std::string::npos);
  const auto summary = r.out.substr(r.out.find("FAILED:"));
  EXPECT_NE((summary + " ").find(" sqrt "), std::string::npos) << summary;
  EXPECT_NE(r.out.find("ok   conv2d"), std::string::npos);
}

TEST(Cli, DemoSmokeIsDeterministic) {
  const auto a = scratch_dir("cli_demo_a"), b = scratch_dir("cli_demo_b");
  const std::vector<std::string> base{"demo", "--synthetic", "4", "--size", "16", "--steps", "4", "--ssim_window", "7"};
  auto args_a = base, args_b = base;
  args_a.insert(args_a.end(), {"--out_dir", a.string()});
  args_b.insert(args_b.end(), {"--out_dir", b.string()});
  const auto ra = run(args_a);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(run(args_b).code, 0);
  std::size_t fused = 0;
  for (const auto& e : fs::directory_iterator(a / "fused")) {
    ++fused;
    EXPECT_EQ(slurp(e.path()), slurp(b / "fused" / e.path().filename()));
  }
  EXPECT_GE(fused, 1u);
  EXPECT_EQ(slurp(a / "report.csv"), slurp(b / "report.csv"));
  EXPECT_EQ(slurp(a / "model.hfn"), slurp(b / "model.hfn"));
  EXPECT_EQ(slurp(a / "report.csv").find("nan"), std::string::npos);
}
