#include <gtest/gtest.h>

#include <cmath>

#include "edgeshield/dataset.hpp"
#include "edgeshield/fgsm.hpp"
#include "edgeshield/train.hpp"
#include "test_util.hpp"

using namespace edgeshield;

TEST(FgsmPerturb, SignStepClipAndZero) {
  const Tensor x(Shape{5}, std::vector<float>{0.5f, 0.5f, 0.5f, 0.99f, 0.0f});
  const Tensor g(Shape{5}, std::vector<float>{2.0f, -0.1f, 0.0f, 1.0f, -1.0f});
  const Tensor y = fgsm_perturb(x, g, AttackConfig{0.05});
  EXPECT_FLOAT_EQ(y[0], 0.55f);
  EXPECT_FLOAT_EQ(y[1], 0.45f);
  EXPECT_FLOAT_EQ(y[2], 0.5f);  // sign(0) = 0
  EXPECT_FLOAT_EQ(y[3], 1.0f);
  EXPECT_FLOAT_EQ(y[4], 0.0f);
  const Tensor unclipped = fgsm_perturb(x, g, AttackConfig{0.05, false});
  EXPECT_FLOAT_EQ(unclipped[3], 1.04f);
}

TEST(FgsmPerturb, RejectsNegativeEpsilonAndShapeMismatch) {
  const Tensor x(Shape{2});
  EXPECT_THROW(fgsm_perturb(x, x, AttackConfig{-0.1}), std::invalid_argument);
  EXPECT_THROW(fgsm_perturb(x, Tensor(Shape{3}), AttackConfig{0.1}), ShapeError);
}

TEST(InputGradient, MatchesFiniteDifferencesInDouble) {
  auto model = build_model<double>("resnet_s", ImageShape{3, 16, 16}, 2, 3);
  Rng rng(4);
  auto x = edgeshield::testing::random_tensor<double>(Shape{2, 3, 16, 16}, rng, 0.0, 1.0);
  const std::vector<int> labels{0, 1};
  const auto g = input_gradient(model, x, labels);
  auto loss = [&](const BasicTensor<double>& in) {
    NoGradScope<double> off;
    return softmax_cross_entropy(model.logits(in), one_hot<double>(labels, 2)).item();
  };
  // Smaller steps lose the tiniest gradients to cancellation.
  const double h = 1e-4;
  double worst = 0;
  for (std::size_t k = 0; k < 40; ++k) {
    const std::size_t i = rng.below(x.size());
    auto up = x.clone(), down = x.clone();
    up[i] += h;
    down[i] -= h;
    worst = std::max(worst, edgeshield::testing::rel_error(g[i], (loss(up) - loss(down)) / (2 * h)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(InputGradient, LeavesModelUntouchedAndRestoresMode) {
  auto model = build_paper_cnn<float>(ImageShape{3, 16, 16}, 2, 1);
  model.set_mode(Mode::train);
  const auto before = model.state();
  std::vector<std::vector<float>> snapshot;
  for (const auto& e : before) snapshot.push_back(e.tensor.values());
  Rng rng(2);
  const auto x = edgeshield::testing::random_tensor<float>(Shape{2, 3, 16, 16}, rng, 0.0, 1.0);
  input_gradient(model, x, {0, 1});
  EXPECT_EQ(model.mode(), Mode::train);
  const auto after = model.state();
  for (std::size_t k = 0; k < after.size(); ++k) {
    EXPECT_EQ(after[k].tensor.values(), snapshot[k]) << after[k].name;
    EXPECT_FALSE(after[k].tensor.has_grad()) << after[k].name;
  }
  EXPECT_THROW(input_gradient(model, x, {0}), ShapeError);
}

TEST(AttackDataset, BoundedOrderedAndTagged) {
  const auto data = synth_shapes(SynthSpec{6, 16, 3, 0.03, 1});
  auto model = build_paper_cnn<float>(data.image_shape(), 2, 1);
  for (double eps : {0.015, 0.04, 0.05}) {
    const auto noisy = attack_dataset(model, data, AttackConfig{eps}, 5);
    EXPECT_EQ(noisy.labels(), data.labels());
    EXPECT_EQ(noisy.provenance(), Provenance::noisy);
    for (std::size_t i = 0; i < data.pixels().size(); ++i) {
      EXPECT_LE(std::fabs(noisy.pixels()[i] - data.pixels()[i]), eps + 1e-7);
    }
  }
  EXPECT_EQ(attack_dataset(model, data, AttackConfig{0.0}).pixels(), data.pixels());
  const auto edges = edge_transform(data, 100, 200);
  EXPECT_EQ(attack_dataset(model, edges, AttackConfig{0.05}).provenance(), Provenance::edges_noisy);
}

TEST(AttackDataset, RaisesLossOfTrainedModel) {
  const auto data = synth_shapes(SynthSpec{40, 16, 3, 0.03, 3});
  auto model = build_paper_cnn<float>(data.image_shape(), 2, 2);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 1;
  train(model, data, tc);
  auto mean_loss = [&](const ImageDataset& d) {
    NoGradScope<float> off;
    return softmax_cross_entropy(model.logits(d.batch(0, d.size())), one_hot<float>(d.labels(), 2)).item();
  };
  EXPECT_GT(mean_loss(attack_dataset(model, data, AttackConfig{0.02})), mean_loss(data));
}

TEST(FgsmPerturb, HandExamples) {
  const Tensor half(Shape{1, 1, 4, 4}, 0.5f);
  const Tensor up = fgsm_perturb(half, Tensor(Shape{1, 1, 4, 4}, 3.0f), AttackConfig{0.05});
  for (float v : up.data()) EXPECT_FLOAT_EQ(v, 0.55f);
  EXPECT_EQ(fgsm_perturb(half, Tensor(Shape{1, 1, 4, 4}), AttackConfig{0.05}).values(), half.values());
  EXPECT_EQ(fgsm_perturb(half, up, AttackConfig{0.0}).values(), half.values());
}

TEST(FgsmPerturb, StepIsExactlyEpsilonWhereUnclipped) {
  Rng rng(13);
  const auto x = edgeshield::testing::random_tensor<double>(Shape{4, 3, 8, 8}, rng, 0.0, 1.0);
  auto g = edgeshield::testing::random_tensor<double>(Shape{4, 3, 8, 8}, rng, -1.0, 1.0);
  for (std::size_t i = 0; i < g.size(); i += 7) g[i] = 0.0;
  const double eps = 0.04;
  const auto y = fgsm_perturb(x, g, AttackConfig{eps});
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LE(std::fabs(y[i] - x[i]), eps + 1e-12);
    EXPECT_GE(y[i], 0.0);
    EXPECT_LE(y[i], 1.0);
    const double target = x[i] + (g[i] > 0 ? eps : (g[i] < 0 ? -eps : 0.0));
    if (target >= 0.0 && target <= 1.0) {
      EXPECT_DOUBLE_EQ(y[i], target);
    }
  }
}

TEST(InputGradient, ShapeAndRepeatability) {
  auto model = build_paper_cnn<float>(ImageShape{3, 16, 16}, 2, 7);
  Rng rng(8);
  const auto x = edgeshield::testing::random_tensor<float>(Shape{3, 3, 16, 16}, rng, 0.0, 1.0);
  const Tensor a = input_gradient(model, x, {0, 1, 1});
  const Tensor b = input_gradient(model, x, {0, 1, 1});
  EXPECT_EQ(a.shape(), x.shape());
  EXPECT_EQ(a.values(), b.values());
}

namespace {

struct TrainedFixture {
  ImageDataset train_set;
  ImageDataset test_set;
  Model<float> model;
};

TrainedFixture trained_paper_cnn() {
  auto [tr, te] = split(synth_shapes(SynthSpec{100, 32, 3, 0.03, 5}), SplitSpec{0.8, 6});
  auto model = build_paper_cnn<float>(tr.image_shape(), 2, 7);
  TrainConfig tc;
  tc.epochs = 6;
  tc.seed = 8;
  train(model, tr, tc);
  return {std::move(tr), std::move(te), std::move(model)};
}

double accuracy(Model<float>& model, const ImageDataset& d) {
  const auto pred = predict(model, d.batch(0, d.size()));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) correct += pred.labels[i] == d.label(i);
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

}  // namespace

TEST(AttackDataset, SmallBudgetAttackLowersTrainedAccuracy) {
  auto f = trained_paper_cnn();
  const double clean = accuracy(f.model, f.test_set);
  const double noisy = accuracy(f.model, attack_dataset(f.model, f.test_set, AttackConfig{0.015}));
  EXPECT_LT(noisy, clean);
}

TEST(AttackDataset, TinyBudgetNeverLowersBatchLoss) {
  auto f = trained_paper_cnn();
  const ImageDataset& d = f.train_set;
  std::size_t batches = 0, raised = 0;
  for (std::size_t start = 0; start < d.size(); start += 8) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(d.size(), start + 8); ++i) idx.push_back(i);
    const Tensor x = d.batch(idx);
    const auto labels = d.batch_labels(idx);
    const Tensor adv = fgsm_perturb(x, input_gradient(f.model, x, labels), AttackConfig{1e-3});
    NoGradScope<float> off;
    const double before = softmax_cross_entropy(f.model.logits(x), one_hot<float>(labels, 2)).item();
    const double after = softmax_cross_entropy(f.model.logits(adv), one_hot<float>(labels, 2)).item();
    ++batches;
    raised += after >= before;
  }
  EXPECT_GE(static_cast<double>(raised) / static_cast<double>(batches), 0.95);
}
