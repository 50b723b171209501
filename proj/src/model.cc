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

#include "absl/strings/str_format.h"

namespace uldp::fl {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Numerically stable log-softmax of each row, returning probabilities and
// the summed negative log-likelihood of `labels`.
double SoftmaxCrossEntropy(const Eigen::MatrixXd& logits,
                           std::span<const int32_t> labels,
                           Eigen::MatrixXd* probs) {
  double total = 0.0;
  probs->resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - top;
    const double log_norm = std::log(shifted.array().exp().sum());
    probs->row(i) = (shifted.array() - log_norm).exp();
    total -= shifted(labels[static_cast<size_t>(i)]) - log_norm;
  }
  return total;
}

}  // namespace

bool AllFinite(const Vector& v) { return v.allFinite(); }

absl::StatusOr<LossGrad> Model::LossAndGradient(
    const Vector& params, const Eigen::MatrixXd& features,
    std::span<const int32_t> labels) const {
  if (features.rows() == 0 || labels.empty()) {
    return absl::InvalidArgumentError("empty batch");
  }
  if (features.cols() != input_dim()) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "feature dimension %d does not match model input %d", features.cols(),
        input_dim()));
  }
  if (static_cast<size_t>(features.rows()) != labels.size()) {
    return absl::InvalidArgumentError("feature and label counts differ");
  }
  if (params.size() != num_params()) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "parameter vector has %d entries, model needs %d", params.size(),
        num_params()));
  }
  for (int32_t y : labels) {
    if (y < 0 || y >= num_classes()) {
      return absl::InvalidArgumentError(absl::StrFormat("label %d out of range", y));
    }
  }
  LossGrad out;
  out.grad = Vector::Zero(num_params());
  const double n = static_cast<double>(labels.size());
  out.loss = SumLossAndGradient(params, features, labels, &out.grad) / n;
  out.grad /= n;
  return out;
}

absl::StatusOr<Evaluation> Model::Evaluate(const Vector& params,
                                           const data::LabeledData& data) const {
  absl::StatusOr<LossGrad> lg =
      LossAndGradient(params, data.features, data.labels);
  if (!lg.ok()) return lg.status();
  const Eigen::MatrixXd logits = Logits(params, data.features);
  int64_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best;
    logits.row(i).maxCoeff(&best);
    if (best == data.labels[static_cast<size_t>(i)]) ++correct;
  }
  return Evaluation{lg->loss, static_cast<double>(correct) /
                                  static_cast<double>(data.size())};
}

SoftmaxRegression::SoftmaxRegression(int32_t input_dim, int32_t num_classes)
    : input_dim_(input_dim), num_classes_(num_classes) {}

int64_t SoftmaxRegression::num_params() const {
  return int64_t{num_classes_} * input_dim_ + num_classes_;
}

Vector SoftmaxRegression::InitialParams(Rng& /*rng*/) const {
  return Vector::Zero(num_params());
}

Eigen::MatrixXd SoftmaxRegression::Logits(const Vector& params,
                                          const Eigen::MatrixXd& features) const {
  Eigen::Map<const RowMatrix> weights(params.data(), num_classes_, input_dim_);
  Eigen::Map<const Vector> bias(params.data() + num_classes_ * input_dim_,
                                num_classes_);
  Eigen::MatrixXd logits = features * weights.transpose();
  logits.rowwise() += bias.transpose();
  return logits;
}

double SoftmaxRegression::SumLossAndGradient(const Vector& params,
                                             const Eigen::MatrixXd& features,
                                             std::span<const int32_t> labels,
                                             Vector* grad) const {
  Eigen::MatrixXd probs;
  const double loss =
      SoftmaxCrossEntropy(Logits(params, features), labels, &probs);
  // d loss / d logits = p - onehot(y)
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    probs(i, labels[static_cast<size_t>(i)]) -= 1.0;
  }
  Eigen::Map<RowMatrix> grad_w(grad->data(), num_classes_, input_dim_);
  Eigen::Map<Vector> grad_b(grad->data() + num_classes_ * input_dim_,
                            num_classes_);
  grad_w += probs.transpose() * features;
  grad_b += probs.colwise().sum().transpose();
  return loss;
}

Perceptron::Perceptron(int32_t input_dim, int32_t hidden, int32_t num_classes)
    : input_dim_(input_dim), hidden_(hidden), num_classes_(num_classes) {}

int64_t Perceptron::num_params() const {
  return int64_t{hidden_} * input_dim_ + hidden_ +
         int64_t{num_classes_} * hidden_ + num_classes_;
}

Vector Perceptron::InitialParams(Rng& rng) const {
  Vector params = Vector::Zero(num_params());
  std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(input_dim_));
  std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(hidden_));
  const int64_t n1 = int64_t{hidden_} * input_dim_;
  const int64_t off2 = n1 + hidden_;
  for (int64_t i = 0; i < n1; ++i) params[i] = w1(rng);
  for (int64_t i = 0; i < int64_t{num_classes_} * hidden_; ++i) {
    params[off2 + i] = w2(rng);
  }
  return params;
}

Eigen::MatrixXd Perceptron::Logits(const Vector& params,
                                   const Eigen::MatrixXd& features) const {
  const int64_t n1 = int64_t{hidden_} * input_dim_;
  const int64_t off2 = n1 + hidden_;
  Eigen::Map<const RowMatrix> w1(params.data(), hidden_, input_dim_);
  Eigen::Map<const Vector> b1(params.data() + n1, hidden_);
  Eigen::Map<const RowMatrix> w2(params.data() + off2, num_classes_, hidden_);
  Eigen::Map<const Vector> b2(params.data() + off2 + num_classes_ * hidden_,
                              num_classes_);
  Eigen::MatrixXd pre = features * w1.transpose();
  pre.rowwise() += b1.transpose();
  const Eigen::MatrixXd act = pre.array().tanh().matrix();
  Eigen::MatrixXd logits = act * w2.transpose();
  logits.rowwise() += b2.transpose();
  return logits;
}

double Perceptron::SumLossAndGradient(const Vector& params,
                                      const Eigen::MatrixXd& features,
                                      std::span<const int32_t> labels,
                                      Vector* grad) const {
  const int64_t n1 = int64_t{hidden_} * input_dim_;
  const int64_t off2 = n1 + hidden_;
  Eigen::Map<const RowMatrix> w1(params.data(), hidden_, input_dim_);
  Eigen::Map<const Vector> b1(params.data() + n1, hidden_);
  Eigen::Map<const RowMatrix> w2(params.data() + off2, num_classes_, hidden_);
  Eigen::Map<const Vector> b2(params.data() + off2 + num_classes_ * hidden_,
                              num_classes_);

  Eigen::MatrixXd pre = features * w1.transpose();
  pre.rowwise() += b1.transpose();
  const Eigen::MatrixXd act = pre.array().tanh().matrix();
  Eigen::MatrixXd logits = act * w2.transpose();
  logits.rowwise() += b2.transpose();

  Eigen::MatrixXd dlogits;
  const double loss = SoftmaxCrossEntropy(logits, labels, &dlogits);
  for (Eigen::Index i = 0; i < dlogits.rows(); ++i) {
    dlogits(i, labels[static_cast<size_t>(i)]) -= 1.0;
  }
  const Eigen::MatrixXd dact = dlogits * w2;
  const Eigen::MatrixXd dpre =
      (dact.array() * (1.0 - act.array().square())).matrix();

  Eigen::Map<RowMatrix> g_w1(grad->data(), hidden_, input_dim_);
  Eigen::Map<Vector> g_b1(grad->data() + n1, hidden_);
  Eigen::Map<RowMatrix> g_w2(grad->data() + off2, num_classes_, hidden_);
  Eigen::Map<Vector> g_b2(grad->data() + off2 + num_classes_ * hidden_,
                          num_classes_);
  g_w1 += dpre.transpose() * features;
  g_b1 += dpre.colwise().sum().transpose();
  g_w2 += dlogits.transpose() * act;
  g_b2 += dlogits.colwise().sum().transpose();
  return loss;
}

absl::StatusOr<std::unique_ptr<Model>> MakeModel(const ModelSpec& spec,
                                                 int32_t input_dim,
                                                 int32_t num_classes) {
  if (input_dim < 1 || num_classes < 2) {
    return absl::InvalidArgumentError("model needs input_dim >= 1, classes >= 2");
  }
  if (spec.kind == "logreg") {
    return std::make_unique<SoftmaxRegression>(input_dim, num_classes);
  }
  if (spec.kind == "mlp") {
    if (spec.hidden < 1) return absl::InvalidArgumentError("hidden width < 1");
    return std::make_unique<Perceptron>(input_dim, spec.hidden, num_classes);
  }
  return absl::InvalidArgumentError(
      absl::StrFormat("unknown model kind '%s'", spec.kind));
}

}  // namespace uldp::fl
