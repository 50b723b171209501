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

#ifndef ULDP_MODEL_H_
#define ULDP_MODEL_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "uldp/dataset.h"
#include "uldp/random.h"

namespace uldp::fl {

using Vector = Eigen::VectorXd;

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// A differentiable classifier over a flat parameter vector. Losses are mean
// cross-entropy over the batch.
class Model {
 public:
  virtual ~Model() = default;

  virtual int64_t num_params() const = 0;
  virtual int32_t input_dim() const = 0;
  virtual int32_t num_classes() const = 0;

  // Mean loss and its exact gradient. Fails on an empty batch or a feature
  // dimension mismatch.
  absl::StatusOr<LossGrad> LossAndGradient(const Vector& params,
                                           const Eigen::MatrixXd& features,
                                           std::span<const int32_t> labels) const;

  absl::StatusOr<Evaluation> Evaluate(const Vector& params,
                                      const data::LabeledData& data) const;

  virtual Vector InitialParams(Rng& rng) const = 0;

 protected:
  // Sum (not mean) of losses, gradient accumulated into *grad.
  virtual double SumLossAndGradient(const Vector& params,
                                    const Eigen::MatrixXd& features,
                                    std::span<const int32_t> labels,
                                    Vector* grad) const = 0;
  virtual Eigen::MatrixXd Logits(const Vector& params,
                                 const Eigen::MatrixXd& features) const = 0;
};

// Multinomial logistic regression: logits = W x + b, W stored row-major
// (class by feature) followed by b.
class SoftmaxRegression : public Model {
 public:
  SoftmaxRegression(int32_t input_dim, int32_t num_classes);

  int64_t num_params() const override;
  int32_t input_dim() const override { return input_dim_; }
  int32_t num_classes() const override { return num_classes_; }
  Vector InitialParams(Rng& rng) const override;

 protected:
  double SumLossAndGradient(const Vector& params,
                            const Eigen::MatrixXd& features,
                            std::span<const int32_t> labels,
                            Vector* grad) const override;
  Eigen::MatrixXd Logits(const Vector& params,
                         const Eigen::MatrixXd& features) const override;

 private:
  int32_t input_dim_;
  int32_t num_classes_;
};

// One tanh hidden layer. Layout: W1 (hidden x in), b1, W2 (classes x hidden),
// b2, each row-major.
class Perceptron : public Model {
 public:
  Perceptron(int32_t input_dim, int32_t hidden, int32_t num_classes);

  int64_t num_params() const override;
  int32_t input_dim() const override { return input_dim_; }
  int32_t num_classes() const override { return num_classes_; }
  Vector InitialParams(Rng& rng) const override;

 protected:
  double SumLossAndGradient(const Vector& params,
                            const Eigen::MatrixXd& features,
                            std::span<const int32_t> labels,
                            Vector* grad) const override;
  Eigen::MatrixXd Logits(const Vector& params,
                         const Eigen::MatrixXd& features) const override;

 private:
  int32_t input_dim_;
  int32_t hidden_;
  int32_t num_classes_;
};

struct ModelSpec {
  std::string kind = "logreg";  // "logreg" or "mlp"
  int32_t hidden = 16;
};

absl::StatusOr<std::unique_ptr<Model>> MakeModel(const ModelSpec& spec,
                                                 int32_t input_dim,
                                                 int32_t num_classes);

bool AllFinite(const Vector& v);

}  // namespace uldp::fl

#endif  // ULDP_MODEL_H_
