// Copyright 2026 The ULDP-FL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "uldp/model.h"

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "uldp/dataset.h"

namespace uldp::fl {
namespace {

struct Batch {
  Eigen::MatrixXd x;
  std::vector<int32_t> y;
};

Batch RandomBatch(int rows, int dim, int classes, Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int32_t> c(0, classes - 1);
  Batch b{Eigen::MatrixXd(rows, dim), std::vector<int32_t>(rows)};
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) b.x(i, j) = n(rng);
    b.y[i] = c(rng);
  }
  return b;
}

// Largest relative error between the analytic gradient and central
// differences with step 1e-6, measured against max(1, |g|) per coordinate.
double WorstGradientError(const Model& m, const Vector& p, const Batch& b) {
  const Vector g = m.LossAndGradient(p, b.x, b.y)->grad;
  double worst = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vector hi = p, lo = p;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    const double fd = (m.LossAndGradient(hi, b.x, b.y)->loss -
                       m.LossAndGradient(lo, b.x, b.y)->loss) /
                      2e-6;
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i])));
  }
  return worst;
}

TEST(SoftmaxRegressionTest, ZeroModelLossIsLogClasses) {
  SoftmaxRegression m(3, 2);
  Batch b{Eigen::MatrixXd::Random(4, 3), {0, 1, 0, 1}};
  EXPECT_NEAR(m.LossAndGradient(Vector::Zero(m.num_params()), b.x, b.y)->loss,
              std::log(2.0), 1e-15);
}

TEST(SoftmaxRegressionTest, DuplicatedBatchIsInvariant) {
  Rng rng(3);
  SoftmaxRegression m(4, 3);
  Batch b = RandomBatch(5, 4, 3, rng);
  Batch twice{Eigen::MatrixXd(10, 4), b.y};
  twice.x << b.x, b.x;
  twice.y.insert(twice.y.end(), b.y.begin(), b.y.end());
  const Vector p = Vector::Random(m.num_params());
  const LossGrad one = *m.LossAndGradient(p, b.x, b.y);
  const LossGrad two = *m.LossAndGradient(p, twice.x, twice.y);
  EXPECT_NEAR(one.loss, two.loss, 1e-14);
  EXPECT_LT((one.grad - two.grad).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SoftmaxRegressionTest, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + trial % 6, classes = 2 + trial % 3;
    SoftmaxRegression m(dim, classes);
    const Batch b = RandomBatch(1 + trial % 9, dim, classes, rng);
    Vector p(m.num_params());
    std::normal_distribution<double> n(0, 1);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = n(rng);
    EXPECT_LT(WorstGradientError(m, p, b), 1e-5) << trial;
  }
}

TEST(PerceptronTest, GradientMatchesFiniteDifferences) {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = 1 + trial % 5, classes = 2 + trial % 2;
    Perceptron m(dim, 3 + trial % 4, classes);
    const Batch b = RandomBatch(2 + trial % 6, dim, classes, rng);
    const Vector p = m.InitialParams(rng);
    EXPECT_LT(WorstGradientError(m, p, b), 1e-5) << trial;
  }
}

TEST(ModelTest, RejectsBadBatches) {
  SoftmaxRegression m(3, 2);
  const Vector p = Vector::Zero(m.num_params());
  const Eigen::MatrixXd wrong_dim = Eigen::MatrixXd::Zero(2, 4);
  const std::vector<int32_t> y = {0, 1};
  EXPECT_EQ(m.LossAndGradient(p, wrong_dim, y).status().code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_FALSE(m.LossAndGradient(p, Eigen::MatrixXd(0, 3), {}).ok());
  EXPECT_FALSE(
      m.LossAndGradient(p, Eigen::MatrixXd::Zero(2, 3), std::vector<int32_t>{0, 2})
          .ok());
  EXPECT_FALSE(m.LossAndGradient(Vector::Zero(3), Eigen::MatrixXd::Zero(2, 3), y).ok());
}

TEST(ModelTest, EvaluateCountsAccuracy) {
  SoftmaxRegression m(1, 2);
  // logit_1 - logit_0 = 2x, so positive x predicts class 1.
  Vector p(4);
  p << -1, 1, 0, 0;
  data::LabeledData d{Eigen::MatrixXd(4, 1), {1, 0, 1, 1}};
  d.features << 1, -1, -2, 3;
  EXPECT_DOUBLE_EQ(m.Evaluate(p, d)->accuracy, 0.75);
}

TEST(ModelTest, Factory) {
  EXPECT_EQ((*MakeModel({"logreg", 0}, 4, 3))->num_params(), 15);
  EXPECT_EQ((*MakeModel({"mlp", 5}, 4, 3))->num_params(), 5 * 4 + 5 + 3 * 5 + 3);
  EXPECT_FALSE(MakeModel({"cnn", 0}, 4, 3).ok());
  EXPECT_FALSE(MakeModel({"logreg", 0}, 4, 1).ok());
}

TEST(DatasetTest, ShapesAndDeterminism) {
  const allocation::RecordAllocation alloc =
      *allocation::AllocateUniform(200, 10, 3, 1);
  data::SyntheticSpec spec;
  spec.dim = 5;
  spec.num_classes = 3;
  const data::SyntheticDataset a = *data::GenerateDataset(spec, alloc, 50, 9);
  const data::SyntheticDataset b = *data::GenerateDataset(spec, alloc, 50, 9);
  EXPECT_EQ(a.train.features.rows(), 200);
  EXPECT_EQ(a.train.features.cols(), 5);
  EXPECT_EQ(a.test.size(), 50);
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.test.labels, b.test.labels);
  // Balanced test split.
  std::vector<int> per_class(3, 0);
  for (int32_t y : a.test.labels) ++per_class[y];
  EXPECT_THAT(per_class, ::testing::ElementsAre(17, 17, 16));
  EXPECT_EQ(data::TestSplitSize(1000), 200);
  EXPECT_EQ(data::TestSplitSize(3), 1);
}

TEST(DatasetTest, TwoLabelsPerUser) {
  const allocation::RecordAllocation alloc =
      *allocation::AllocateUniform(2000, 20, 2, 2);
  data::SyntheticSpec spec;
  spec.num_classes = 10;
  spec.two_labels_per_user = true;
  const data::SyntheticDataset d = *data::GenerateDataset(spec, alloc, 10, 4);
  std::vector<std::set<int32_t>> seen(20);
  for (size_t i = 0; i < alloc.records.size(); ++i) {
    seen[alloc.records[i].user].insert(d.train.labels[i]);
  }
  for (const auto& s : seen) EXPECT_LE(s.size(), 2u);
}

TEST(DatasetTest, SeparatedClustersAreLearnable) {
  // A separation of 6 leaves class means far apart relative to unit noise;
  // the nearest-mean direction alone classifies nearly everything.
  const allocation::RecordAllocation alloc =
      *allocation::AllocateUniform(400, 4, 1, 3);
  data::SyntheticSpec spec;
  spec.separation = 6;
  const data::SyntheticDataset d = *data::GenerateDataset(spec, alloc, 400, 5);
  Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(spec.dim);
  Eigen::VectorXd mean1 = mean0;
  int n0 = 0, n1 = 0;
  for (int i = 0; i < 400; ++i) {
    if (d.train.labels[i] == 0) {
      mean0 += d.train.features.row(i).transpose();
      ++n0;
    } else {
      mean1 += d.train.features.row(i).transpose();
      ++n1;
    }
  }
  mean0 /= n0;
  mean1 /= n1;
  int correct = 0;
  for (int i = 0; i < 400; ++i) {
    const Eigen::VectorXd x = d.test.features.row(i).transpose();
    const int guess = (x - mean1).norm() < (x - mean0).norm() ? 1 : 0;
    correct += guess == d.test.labels[i];
  }
  EXPECT_GT(correct, 300);
}

}  // namespace
}  // namespace uldp::fl
