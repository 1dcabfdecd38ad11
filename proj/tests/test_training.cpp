#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "fsr/fsr.hpp"
#include "fsr/runconfig.hpp"
#include "support/synthetic.hpp"

using fsr::Image;
namespace fs = std::filesystem;

namespace {

std::vector<fsr::DatasetPair> tissue_pairs(int n, int size, int scale, std::uint64_t seed,
                                           fsr::Split split = fsr::Split::kTrain) {
  std::vector<fsr::NamedImage> hr;
  for (int i = 0; i < n; ++i) {
    hr.push_back({"p" + std::to_string(i), fsr::testing::synthetic_tissue(size, size, seed + i), split});
  }
  return fsr::build_pairs(hr, scale);
}

fsr::ModelConfig tiny_model(int scale = 4) {
  fsr::ModelConfig m;
  m.scale = scale;
  m.depth = 2;
  m.base_channels = 4;
  return m;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
  fsr::AdamOptions opt;
  opt.learning_rate = 0.1;
  fsr::adam_update<double>(p, g, m, v, 1, opt);
  EXPECT_NEAR(p[0], -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_DOUBLE_EQ(m[0], 0.1);
  EXPECT_NEAR(v[0], 0.001, 1e-18);
}

TEST(Adam, ZeroLearningRateAndZeroGradient) {
  std::vector<double> p{0.5, -0.25}, g{0.3, -2.0}, m{0.0, 0.0}, v{0.0, 0.0};
  fsr::AdamOptions frozen;
  frozen.learning_rate = 0.0;
  fsr::adam_update<double>(p, g, m, v, 1, frozen);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], -0.25);
  EXPECT_NE(m[0], 0.0);
  EXPECT_NE(v[1], 0.0);

  std::vector<double> q{0.7}, zero{0.0}, mq{0.0}, vq{0.0};
  for (int t = 1; t <= 50; ++t) fsr::adam_update<double>(q, zero, mq, vq, t, fsr::AdamOptions{});
  EXPECT_EQ(q[0], 0.7);
}

TEST(Adam, ShapeMismatch) {
  std::vector<double> p{0.0, 0.0}, g{1.0}, m{0.0, 0.0}, v{0.0, 0.0};
  EXPECT_THROW(fsr::adam_update<double>(p, g, m, v, 1, fsr::AdamOptions{}), fsr::ShapeError);
}

TEST(Shuffle, BatchesAndPermutations) {
  const auto batches = fsr::shuffle_and_batch(5, 2, 3, 0);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 2u);
  EXPECT_EQ(batches[1].size(), 2u);
  EXPECT_EQ(batches[2].size(), 1u);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) seen.insert(seen.end(), b.begin(), b.end());
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(5);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(seen, all);

  EXPECT_EQ(fsr::epoch_permutation(100, 7, 2), fsr::epoch_permutation(100, 7, 2));
  EXPECT_NE(fsr::epoch_permutation(100, 7, 0), fsr::epoch_permutation(100, 7, 1));
  EXPECT_NE(fsr::epoch_permutation(100, 7, 0), fsr::epoch_permutation(100, 8, 0));
  EXPECT_THROW(fsr::shuffle_and_batch(0, 2, 0, 0), fsr::DatasetError);
}

TEST(Shuffle, PermutationIsUniformish) {
  // Each of the 6 orders of 3 items should appear near 1/6 of the time.
  std::map<std::vector<std::size_t>, int> counts;
  for (std::uint64_t e = 0; e < 6000; ++e) ++counts[fsr::epoch_permutation(3, 1, e)];
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [perm, c] : counts) EXPECT_NEAR(c, 1000, 150);
}

TEST(BuildPairs, DefaultPatchSizes) {
  const auto x4 = fsr::build_pairs(std::vector<Image>{fsr::testing::random_image(256, 256, 3, 1)}, 4);
  ASSERT_EQ(x4.size(), 1u);
  EXPECT_EQ(x4[0].lr.height(), 64);
  const auto x8 = fsr::build_pairs(std::vector<Image>{fsr::testing::random_image(256, 256, 3, 1)}, 8);
  EXPECT_EQ(x8[0].lr.height(), 32);
  const auto flat = fsr::build_pairs(std::vector<Image>{Image(32, 32, 3, 0.37)}, 4);
  for (double v : flat[0].lr.data()) EXPECT_DOUBLE_EQ(v, 0.37);
}

TEST(BuildPairs, ListsOffendingIds) {
  std::vector<fsr::NamedImage> hr = {{"good", Image(16, 16, 3, 0.0), fsr::Split::kTrain},
                                     {"bad_a", Image(18, 16, 3, 0.0), fsr::Split::kTrain},
                                     {"bad_b", Image(16, 10, 3, 0.0), fsr::Split::kTrain}};
  try {
    fsr::build_pairs(hr, 4);
    FAIL();
  } catch (const fsr::DatasetError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad_a"), std::string::npos);
    EXPECT_NE(msg.find("bad_b"), std::string::npos);
    EXPECT_EQ(msg.find("good"), std::string::npos);
  }
}

TEST(CheckPair, RejectsInconsistentLr) {
  auto pairs = tissue_pairs(1, 16, 4, 1);
  EXPECT_NO_THROW(fsr::check_pair(pairs[0], 4));
  std::vector<double> v(pairs[0].lr.data().begin(), pairs[0].lr.data().end());
  v[0] = v[0] > 0.5 ? v[0] - 1e-9 : v[0] + 1e-9;
  pairs[0].lr = Image(4, 4, 3, v);
  EXPECT_THROW(fsr::check_pair(pairs[0], 4), fsr::DatasetError);
}

TEST(TrainingLog, CsvRoundTrip) {
  fsr::TrainingLog log;
  log.rows.push_back({0, 0, 0.123456789012345678, 0.5, 21.0, 0.0});
  log.rows.push_back({50, 1, 1.0 / 3.0, 0.75, 25.5, 12.25});
  const fs::path p = fs::temp_directory_path() / "fsr_train_log.csv";
  fsr::write_training_log(log, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,epoch,train_wfe_loss,val_ssim,val_psnr,wallclock_seconds");
  const auto back = fsr::read_training_log(p);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].step, 50);
  EXPECT_EQ(back.rows[1].train_wfe_loss, 1.0 / 3.0);
  EXPECT_EQ(back.rows[0].train_wfe_loss, 0.123456789012345678);
}

TEST(MetricsCsv, RoundTrip) {
  std::vector<fsr::MetricsRecord> recs = {{"a_00000_00128", 0.001, 30.0, 0.91}, {"mean", 1.0 / 7.0, 8.45, 0.2}};
  const fs::path p = fs::temp_directory_path() / "fsr_metrics.csv";
  fsr::write_metrics_csv(recs, p);
  const auto back = fsr::read_metrics_csv(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].item_id, "mean");
  EXPECT_EQ(back[1].mse, 1.0 / 7.0);
}

TEST(Train, ZeroEpochsKeepsInitialization) {
  const auto pairs = tissue_pairs(3, 32, 4, 10);
  fsr::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 4;
  const auto result = fsr::train<float>(pairs, tiny_model(), cfg);
  EXPECT_TRUE(result.checkpoint.parameters == fsr::init_parameters<float>(tiny_model(), 4));
  ASSERT_EQ(result.log.rows.size(), 1u);
  EXPECT_EQ(result.log.rows[0].step, 0);
  double bilinear = 0.0;
  for (const auto& p : pairs) bilinear += fsr::ssim_windowed(fsr::bilinear_upsample(p.lr, 4), p.hr);
  EXPECT_NEAR(result.log.rows[0].val_ssim, bilinear / 3.0, 1e-6);
  EXPECT_EQ(result.checkpoint.meta.epochs_completed, 0u);
}

TEST(Train, LogScheduleAndDeterminism) {
  const auto pairs = tissue_pairs(5, 32, 4, 20);
  fsr::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.val_interval = 2;
  cfg.seed = 9;
  const auto a = fsr::train<float>(pairs, tiny_model(), cfg);
  // 5 pairs, batch 2: 3 steps per epoch. Rows at steps 0, 2, 3 (epoch end), 4, 6.
  std::vector<std::int64_t> steps;
  for (const auto& r : a.log.rows) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{0, 2, 3, 4, 6}));
  EXPECT_EQ(a.checkpoint.meta.epochs_completed, 2u);

  const auto b = fsr::train<float>(pairs, tiny_model(), cfg);
  ASSERT_EQ(a.log.rows.size(), b.log.rows.size());
  for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
    EXPECT_EQ(a.log.rows[i].train_wfe_loss, b.log.rows[i].train_wfe_loss);
    EXPECT_EQ(a.log.rows[i].val_ssim, b.log.rows[i].val_ssim);
    EXPECT_EQ(a.log.rows[i].val_psnr, b.log.rows[i].val_psnr);
  }
  EXPECT_EQ(fsr::encode_checkpoint(a.checkpoint), fsr::encode_checkpoint(b.checkpoint));
  EXPECT_FALSE(a.checkpoint.parameters == fsr::init_parameters<float>(tiny_model(), 9));
}

TEST(Train, MaxStepsCapsTraining) {
  const auto pairs = tissue_pairs(4, 32, 4, 30);
  fsr::TrainConfig cfg;
  cfg.epochs = 10;
  cfg.max_steps = 3;
  cfg.val_interval = 100;
  const auto r = fsr::train<float>(pairs, tiny_model(), cfg);
  EXPECT_EQ(r.log.rows.back().step, 3);
  EXPECT_EQ(r.checkpoint.meta.epochs_completed, 1u);
}

TEST(Train, ValidatesInputs) {
  fsr::TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(fsr::train<float>(tissue_pairs(2, 32, 4, 1, fsr::Split::kTest), tiny_model(), cfg),
               fsr::DatasetError);
  EXPECT_THROW(fsr::train<float>(tissue_pairs(2, 32, 4, 1), tiny_model(8), cfg), fsr::ConfigError);
  fsr::TrainConfig bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(fsr::train<float>(tissue_pairs(2, 32, 4, 1), tiny_model(), bad), fsr::ConfigError);
}

TEST(Train, NonFiniteLossNamesStep) {
  fsr::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 1e30;  // the first update overflows every parameter
  fsr::ModelConfig m = tiny_model();
  m.zero_init_final = false;
  try {
    fsr::train<float>(tissue_pairs(6, 32, 4, 2), m, cfg);
    FAIL() << "expected a training error";
  } catch (const fsr::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, ZeroInitMatchesBilinearAndConstantBicubic) {
  const auto pairs = tissue_pairs(3, 32, 4, 40);
  fsr::Checkpoint<float> ck{fsr::kCheckpointVersion, tiny_model(), fsr::init_parameters<float>(tiny_model(), 1), {}};
  const auto r = fsr::evaluate(ck, pairs, fsr::Baseline::kBilinear);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_NEAR(r.records[i].ssim, r.baseline_records[i].ssim, 1e-6);
    EXPECT_NEAR(r.records[i].psnr_db, r.baseline_records[i].psnr_db, 1e-4);
  }
  EXPECT_NEAR(r.aggregate.ssim, r.baseline_aggregate.ssim, 1e-6);

  const auto flat = fsr::build_pairs(std::vector<Image>{Image(32, 32, 3, 0.6), Image(32, 32, 3, 0.2)}, 4);
  const auto c = fsr::evaluate(ck, flat, fsr::Baseline::kBicubic);
  EXPECT_NEAR(c.baseline_aggregate.ssim, 1.0, 1e-12);

  fsr::Checkpoint<float> x8{fsr::kCheckpointVersion, tiny_model(8), fsr::init_parameters<float>(tiny_model(8), 1), {}};
  EXPECT_THROW(fsr::evaluate(x8, pairs), fsr::ConfigError);
}

TEST(Benchmark, CountsAndErrors) {
  fsr::Checkpoint<float> ck{fsr::kCheckpointVersion, tiny_model(), fsr::init_parameters<float>(tiny_model(), 1), {}};
  const auto r = fsr::benchmark_inference(ck, 1, 16, 16);
  EXPECT_EQ(r.patches, 1);
  EXPECT_GT(r.mean_ms, 0.0);
  EXPECT_EQ(r.param_count, fsr::parameter_count(tiny_model()));
  EXPECT_THROW(fsr::benchmark_inference(ck, 0, 16, 16), fsr::ParameterError);
}

TEST(RunConfig, GrammarAndErrors) {
  const auto rc = fsr::parse_run_config(
      "# comment\n"
      "scale = 8\n"
      "depth = 2   # trailing comment\n"
      "learning_rate = 1e-4\n"
      "attention = false\n"
      "normalization = instance\n"
      "data_dir = data\n"
      "out_dir = /abs/out\n",
      "/base");
  EXPECT_EQ(rc.model.scale, 8);
  EXPECT_EQ(rc.train.scale, 8);
  EXPECT_EQ(rc.model.depth, 2);
  EXPECT_FALSE(rc.model.attention_enabled);
  EXPECT_EQ(rc.model.normalization, fsr::Normalization::kInstance);
  EXPECT_DOUBLE_EQ(rc.train.learning_rate, 1e-4);
  EXPECT_EQ(rc.train.resolved_epochs(), 6);
  EXPECT_EQ(rc.data_dir, fs::path("/base/data"));
  EXPECT_EQ(rc.checkpoint, fs::path("/abs/out/model.ckpt"));

  EXPECT_THROW(fsr::parse_run_config("out_dir = o\n"), fsr::ConfigError);
  try {
    fsr::parse_run_config("out_dir = o\n");
  } catch (const fsr::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data_dir"), std::string::npos);
  }
  EXPECT_THROW(fsr::parse_run_config("data_dir=a\nout_dir=b\nlearning_rat = 1\n"), fsr::ConfigError);
  EXPECT_THROW(fsr::parse_run_config("data_dir=a\nout_dir=b\ndepth=2\ndepth=3\n"), fsr::ConfigError);
  EXPECT_THROW(fsr::parse_run_config("data_dir=a\nout_dir=b\nscale=1\n"), fsr::ConfigError);
  EXPECT_THROW(fsr::parse_run_config("data_dir=a\nout_dir=b\ndepth=two\n"), fsr::ConfigError);
}
