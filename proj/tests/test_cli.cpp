#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fsr/commands.hpp"
#include "fsr/fsr.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using fsr::Image;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(FSR_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fsr_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// An image whose values are exact bytes, so PNG storage is lossless.
Image byte_image(int h, int w, std::uint64_t seed) {
  fsr::testing::Uniform u(seed);
  std::vector<double> v(static_cast<std::size_t>(h) * w * 3);
  for (double& x : v) x = static_cast<double>(u.bits() % 256) / 255.0;
  return Image(h, w, 3, std::move(v));
}

fs::path save_checkpoint(const fs::path& dir, const fsr::ModelConfig& cfg, const std::string& name = "model.ckpt") {
  const fsr::Checkpoint<float> ck{fsr::kCheckpointVersion, cfg, fsr::init_parameters<float>(cfg, 0), {}};
  fsr::save_checkpoint(ck, dir / name);
  return dir / name;
}

fsr::ModelConfig model_config(int scale, int depth, int base) {
  fsr::ModelConfig m;
  m.scale = scale;
  m.depth = depth;
  m.base_channels = base;
  return m;
}

// Four 64x64 patches cut from one 128x128 synthetic source.
fs::path small_dataset(const std::string& name, int scale, double split_fraction, bool constant = false) {
  const fs::path root = fresh_dir(name);
  fs::create_directories(root / "src");
  fsr::save_image(constant ? Image(128, 128, 3, 0.4) : fsr::testing::synthetic_tissue(128, 128, 77),
                  root / "src" / "slide.png");
  fsr::cmd::PrepareOptions o;
  o.src_dir = root / "src";
  o.out_dir = root / "data";
  o.size = 64;
  o.stride = 64;
  o.scale = scale;
  o.split_fraction = split_fraction;
  std::ostringstream log;
  fsr::cmd::prepare(o, log);
  return root;
}

}  // namespace

TEST(Prepare, DefaultsOnA512Source) {
  const fs::path root = fresh_dir("prepare512");
  fs::create_directories(root / "src");
  fsr::save_image(fsr::testing::synthetic_tissue(512, 512, 3), root / "src" / "a.png");
  const auto r = run_cli("prepare --src-dir " + (root / "src").string() + " --out-dir " + (root / "out").string() +
                         " --scale 4 --split-fraction 0");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  int hr = 0, lr = 0;
  for (const auto& e : fs::directory_iterator(root / "out" / "hr")) {
    EXPECT_EQ(fsr::load_image(e.path()).height(), 256);
    ++hr;
  }
  for (const auto& e : fs::directory_iterator(root / "out" / "lr_x4")) {
    const Image img = fsr::load_image(e.path());
    EXPECT_EQ(img.height(), 64);
    EXPECT_EQ(img.width(), 64);
    ++lr;
  }
  EXPECT_EQ(hr, 9);
  EXPECT_EQ(lr, 9);
  const auto m = fsr::read_manifest(root / "out" / "manifest.jsonl");
  for (const auto& e : m.entries) EXPECT_EQ(e.split, fsr::Split::kTrain);

  const std::string first = slurp(root / "out" / "manifest.jsonl");
  const auto again = run_cli("prepare --src-dir " + (root / "src").string() + " --out-dir " +
                             (root / "out").string() + " --scale 4 --split-fraction 0");
  ASSERT_EQ(again.exit_code, 0);
  EXPECT_EQ(slurp(root / "out" / "manifest.jsonl"), first);
}

TEST(Prepare, SplitSkipsAndErrors) {
  const fs::path root = fresh_dir("prepare_split");
  fs::create_directories(root / "src");
  fs::create_directories(root / "empty");
  fsr::save_image(fsr::testing::synthetic_tissue(192, 256, 4), root / "src" / "big.png");
  fsr::save_image(Image(40, 40, 3, 0.5), root / "src" / "small.png");
  fsr::cmd::PrepareOptions o;
  o.src_dir = root / "src";
  o.out_dir = root / "out";
  o.size = 64;
  o.stride = 32;
  o.split_fraction = 0.25;
  o.seed = 3;
  std::ostringstream log;
  const auto s = fsr::cmd::prepare(o, log);
  // rows: (192 - 64)/32 + 1 = 5, cols: (256 - 64)/32 + 1 = 7
  EXPECT_EQ(s.patches, 35);
  EXPECT_EQ(s.test, 9);  // round(0.25 * 35)
  EXPECT_EQ(s.skipped, 1);
  EXPECT_NE(log.str().find("skipped 1"), std::string::npos);

  const auto ds = fsr::cmd::load_dataset(root / "out");
  ASSERT_EQ(ds.pairs.size(), 35u);
  for (const auto& p : ds.pairs) EXPECT_NO_THROW(fsr::check_pair(p, 4)) << p.id;
  EXPECT_EQ(fsr::select_split(ds.pairs, fsr::Split::kTest).size(), 9u);

  const auto empty = run_cli("prepare --src-dir " + (root / "empty").string() + " --out-dir " +
                             (root / "o2").string() + " --scale 4");
  EXPECT_NE(empty.exit_code, 0);
  EXPECT_NE(empty.output.find("empty"), std::string::npos) << empty.output;
}

TEST(Dataset, TamperedLrIsRejected) {
  const fs::path root = small_dataset("tamper", 4, 0.0);
  const fs::path lr_dir = root / "data" / "lr_x4";
  const fs::path victim = fs::directory_iterator(lr_dir)->path();
  fsr::save_image(Image(16, 16, 3, 0.0), victim);
  EXPECT_THROW(fsr::cmd::load_dataset(root / "data"), fsr::DatasetError);
}

TEST(TrainCommand, ZeroEpochsAndMissingDataDir) {
  const fs::path root = small_dataset("train0", 4, 0.0);
  std::ofstream(root / "run.cfg") << "scale = 4\ndepth = 2\nbase_channels = 4\nepochs = 0\n"
                                     "data_dir = data\nout_dir = out\n";
  const auto r = run_cli("train " + (root / "run.cfg").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "out" / "model.ckpt"));
  const auto log = fsr::read_training_log(root / "out" / "training_log.csv");
  ASSERT_EQ(log.rows.size(), 1u);
  EXPECT_EQ(log.rows[0].step, 0);

  std::ofstream(root / "bad.cfg") << "scale = 4\nout_dir = out\n";
  const auto bad = run_cli("train " + (root / "bad.cfg").string());
  EXPECT_NE(bad.exit_code, 0);
  EXPECT_NE(bad.output.find("data_dir"), std::string::npos) << bad.output;

  std::ofstream(root / "missing.cfg") << "scale = 4\ndata_dir = nowhere\nout_dir = out\n";
  const auto missing = run_cli("train " + (root / "missing.cfg").string());
  EXPECT_NE(missing.exit_code, 0);
  EXPECT_NE(missing.output.find("nowhere"), std::string::npos) << missing.output;
}

TEST(EvalCommand, ZeroInitMatchesBilinear) {
  const fs::path root = small_dataset("eval", 4, 0.5);
  const fs::path ck = save_checkpoint(root, model_config(4, 2, 4));
  const auto r = run_cli("eval --checkpoint " + ck.string() + " --data-dir " + (root / "data").string() +
                         " --out-dir " + (root / "ev").string() + " --baseline bilinear");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto ours = fsr::read_metrics_csv(root / "ev" / "eval_model_aggregate.csv");
  const auto bil = fsr::read_metrics_csv(root / "ev" / "eval_bilinear_aggregate.csv");
  ASSERT_EQ(ours.size(), 1u);
  EXPECT_NEAR(ours[0].ssim, bil[0].ssim, 1e-6);
  EXPECT_NEAR(ours[0].psnr_db, bil[0].psnr_db, 1e-4);
  EXPECT_EQ(fsr::read_metrics_csv(root / "ev" / "eval_model.csv").size(), 2u);  // round(0.5 * 4) test items

  // --baseline none writes only model files and its numbers still match bilinear upsampling.
  std::ostringstream log;
  fsr::cmd::EvalOptions o{ck, root / "data", root / "ev_none", fsr::Baseline::kNone};
  const auto res = fsr::cmd::eval(o, log);
  EXPECT_FALSE(fs::exists(root / "ev_none" / "eval_none.csv"));
  EXPECT_NEAR(res.aggregate.ssim, bil[0].ssim, 1e-6);
}

TEST(EvalCommand, ConstantDatasetAndScaleMismatch) {
  const fs::path root = small_dataset("eval_const", 4, 0.0, true);
  const fs::path ck = save_checkpoint(root, model_config(4, 2, 4));
  std::ostringstream log;
  const auto res = fsr::cmd::eval({ck, root / "data", root / "ev"}, log);
  EXPECT_NEAR(res.baseline_aggregate.ssim, 1.0, 1e-12);
  EXPECT_NE(log.str().find("warning"), std::string::npos);  // empty test split falls back to all pairs

  const fs::path ck8 = save_checkpoint(root, model_config(8, 2, 4), "x8.ckpt");
  const auto r = run_cli("eval --checkpoint " + ck8.string() + " --data-dir " + (root / "data").string() +
                         " --out-dir " + (root / "ev8").string());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("scale"), std::string::npos) << r.output;
}

TEST(InferCommand, OutputSizesAndDivisibility) {
  const fs::path root = fresh_dir("infer");
  const fs::path ck4 = save_checkpoint(root, fsr::ModelConfig{}, "x4.ckpt");
  fsr::ModelConfig m8;
  m8.scale = 8;
  const fs::path ck8 = save_checkpoint(root, m8, "x8.ckpt");
  fsr::save_image(fsr::testing::synthetic_tissue(64, 64, 1), root / "in64.png");
  fsr::save_image(fsr::testing::synthetic_tissue(32, 32, 2), root / "in32.png");
  fsr::save_image(fsr::testing::synthetic_tissue(33, 33, 3), root / "in33.png");

  auto r = run_cli("infer --checkpoint " + ck4.string() + " --input " + (root / "in64.png").string() + " --output " +
                   (root / "o4.png").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(fsr::load_image(root / "o4.png").height(), 256);
  EXPECT_EQ(fsr::load_image(root / "o4.png").width(), 256);

  r = run_cli("infer --checkpoint " + ck8.string() + " --input " + (root / "in32.png").string() + " --output " +
              (root / "o8.png").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(fsr::load_image(root / "o8.png").height(), 256);

  r = run_cli("infer --checkpoint " + ck4.string() + " --input " + (root / "in33.png").string() + " --output " +
              (root / "o33.png").string());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("multiple of 4"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(root / "o33.png"));
}

TEST(StitchCommand, GridCountAndRoundTrip) {
  const fs::path root = fresh_dir("stitch");
  const Image whole = byte_image(256, 256, 5);
  const auto tiles = fsr::split_grid(whole, 4, 4);
  fs::create_directories(root / "tiles");
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "tile_%02zu.png", k);
    fsr::save_image(tiles[k], root / "tiles" / name);
  }
  auto r = run_cli("stitch --input-dir " + (root / "tiles").string() + " --rows 4 --cols 4 --output " +
                   (root / "whole.png").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(fsr::load_image(root / "whole.png"), whole);

  fs::remove(root / "tiles" / "tile_15.png");
  r = run_cli("stitch --input-dir " + (root / "tiles").string() + " --rows 4 --cols 4 --output " +
              (root / "bad.png").string());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("15"), std::string::npos) << r.output;
}

TEST(ReportCommand, MontageLayoutAndCaptions) {
  const fs::path root = small_dataset("report", 4, 0.5);
  const fs::path ck = save_checkpoint(root, model_config(4, 2, 4));
  auto r = run_cli("report --checkpoint " + ck.string() + " --data-dir " + (root / "data").string() + " --out-dir " +
                   (root / "rep").string() + " --n 1");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  int montages = 0;
  for (const auto& e : fs::directory_iterator(root / "rep")) {
    if (e.path().extension() != ".png") continue;
    const Image m = fsr::load_image(e.path());
    EXPECT_EQ(m.width(), 3 * 64);
    EXPECT_EQ(m.height(), 64);
    ++montages;
  }
  EXPECT_EQ(montages, 1);
  const std::string captions = slurp(root / "rep" / "report_captions.txt");
  EXPECT_NE(captions.find("bicubic ("), std::string::npos) << captions;
  EXPECT_NE(captions.find("ours ("), std::string::npos) << captions;

  std::ostringstream log;
  fsr::cmd::ReportOptions o;
  o.checkpoint = ck;
  o.data_dir = root / "data";
  o.out_dir = root / "rep_all";
  o.n_examples = 10;
  const auto items = fsr::cmd::report(o, log);
  EXPECT_EQ(items.size(), 2u);
  EXPECT_NE(log.str().find("clipping"), std::string::npos);
}

TEST(BenchCommand, OutputFormat) {
  const fs::path root = fresh_dir("bench");
  const auto cfg = model_config(4, 2, 8);
  const fs::path ck = save_checkpoint(root, cfg);
  const auto r = run_cli("bench --checkpoint " + ck.string() + " --n 2 --lr-size 16");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::istringstream in(r.output);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "mean_ms,std_ms,param_count");
  const auto comma1 = row.find(',');
  const auto comma2 = row.rfind(',');
  EXPECT_GT(std::stod(row.substr(0, comma1)), 0.0);
  EXPECT_EQ(std::stoull(row.substr(comma2 + 1)), fsr::testing::closed_form_param_count(2, 8, true, false));

  const auto zero = run_cli("bench --checkpoint " + ck.string() + " --n 0");
  EXPECT_NE(zero.exit_code, 0);
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(run_cli("").exit_code, 0);
  EXPECT_NE(run_cli("frobnicate").exit_code, 0);
  EXPECT_NE(run_cli("infer --checkpoint /nonexistent.ckpt --input a.png --output b.png").exit_code, 0);
}
