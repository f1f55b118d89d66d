#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "kpg/core/adam.hpp"
#include "kpg/core/checkpoint.hpp"
#include "kpg/core/ops.hpp"
#include "kpg/model/model.hpp"
#include "support/tempdir.hpp"

using namespace kpg;

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  // After bias correction m_hat = g and v_hat = g^2, so the step is lr*g/(|g|+eps).
  Tensor<double> x({3}, std::vector<double>{1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  const std::vector<double> start(x.data().begin(), x.data().end());
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  Adam<double> opt({x}, cfg);
  backward(sum(mul(x, Tensor<double>({3}, std::vector<double>{3.0, -0.25, 1e-3}))));
  opt.step();
  const double g[3] = {3.0, -0.25, 1e-3};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(x[i], start[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-12);
  }
  EXPECT_EQ(opt.state().step_count, 1u);
}

TEST(Adam, MinimizesQuadratic) {
  Tensor<double> x({2}, std::vector<double>{3.0, -4.0});
  x.set_requires_grad(true);
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  Adam<double> opt({x}, cfg);
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    backward(sum(mul(x, x)));
    opt.step();
  }
  EXPECT_LT(std::abs(x[0]), 1e-2);
  EXPECT_LT(std::abs(x[1]), 1e-2);
}

TEST(Adam, StepWithoutGradientThrows) {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Adam<double> opt({x});
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::vector<CheckpointRecord> recs{{"a", {2, 3}, {1, -2, 3.5f, 1e-30f, -0.0f, 7}}, {"empty", {0}, {}},
                                     {"scalar", {}, {42}}};
  const auto back = decode_checkpoint(encode_checkpoint(recs));
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].name, recs[i].name);
    EXPECT_EQ(back[i].shape, recs[i].shape);
    EXPECT_EQ(back[i].values, recs[i].values);
  }
}

TEST(Checkpoint, LayoutIsLittleEndian) {
  const auto bytes = encode_checkpoint({{"w", {1}, {1.0f}}});
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 1 + 4 + 4 + 4);
  EXPECT_EQ(bytes.substr(0, 7), "KPGCKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);  // version
  // 1.0f = 0x3F800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0x80u);
}

TEST(Checkpoint, CorruptionIsRejected) {
  const auto good = encode_checkpoint({{"w", {2}, {1.0f, 2.0f}}});
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IoError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 1)), IoError);
  EXPECT_THROW(decode_checkpoint(good + "z"), IoError);
  std::string bad_version = good;
  bad_version[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), IoError);
  EXPECT_THROW(encode_checkpoint({{"w", {3}, {1.0f}}}), ShapeError);
  EXPECT_THROW(read_checkpoint("/nonexistent/x.bin"), IoError);
}

TEST(Checkpoint, ModelSaveLoadRestoresEverything) {
  kpg::testing::TempDir dir;
  auto model = init_model<float>(5, 32);
  // Perturb running stats so they are not the defaults.
  for (auto& v : model.cnn.layers[2].bn.running_mean.mutable_data()) v = 0.25f;
  model.save(dir.file("m.bin"));
  const auto back = load_model<float>(dir.file("m.bin"));
  EXPECT_EQ(back.patch_side(), 32u);
  const auto a = model.named_tensors(), b = back.named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    ASSERT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    for (std::size_t j = 0; j < a[i].tensor.numel(); ++j) ASSERT_EQ(a[i].tensor[j], b[i].tensor[j]) << a[i].name;
  }
}

TEST(Checkpoint, ModelLoadChecksNamesAndShapes) {
  auto model = init_model<float>(1, 32);
  auto recs = model.to_records();
  recs.pop_back();
  EXPECT_THROW(model.load_records(recs), IoError);
  recs = model.to_records();
  recs[0].shape = {1};
  recs[0].values = {0};
  EXPECT_THROW(model.load_records(recs), ShapeError);
}

TEST(Checkpoint, FreshInitIsDeterministic) {
  const auto a = encode_checkpoint(init_model<float>(9, 32).to_records());
  const auto b = encode_checkpoint(init_model<float>(9, 32).to_records());
  const auto c = encode_checkpoint(init_model<float>(10, 32).to_records());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}
