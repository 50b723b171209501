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

#include "uldp/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

#include "absl/strings/str_format.h"
#include "uldp/random.h"

namespace uldp::data {
namespace {

// Class-balanced labels in random order.
std::vector<int32_t> BalancedLabels(int64_t n, int32_t num_classes, Rng& rng) {
  std::vector<int32_t> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    labels[static_cast<size_t>(i)] = static_cast<int32_t>(i % num_classes);
  }
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

void FillFeatures(const Eigen::MatrixXd& means,
                  const std::vector<int32_t>& labels, Rng& rng,
                  Eigen::MatrixXd* out) {
  std::normal_distribution<double> noise(0.0, 1.0);
  out->resize(static_cast<Eigen::Index>(labels.size()), means.cols());
  for (Eigen::Index i = 0; i < out->rows(); ++i) {
    for (Eigen::Index j = 0; j < out->cols(); ++j) {
      (*out)(i, j) = means(labels[static_cast<size_t>(i)], j) + noise(rng);
    }
  }
}

}  // namespace

absl::Status ValidateSpec(const SyntheticSpec& spec) {
  if (spec.dim < 1) return absl::InvalidArgumentError("dimension must be >= 1");
  if (spec.num_classes < 2) {
    return absl::InvalidArgumentError("need at least two classes");
  }
  if (!(spec.separation >= 0) || !std::isfinite(spec.separation)) {
    return absl::InvalidArgumentError("separation must be finite and >= 0");
  }
  return absl::OkStatus();
}

int64_t TestSplitSize(int64_t total_records) {
  return std::max<int64_t>(1, total_records / 5);
}

absl::StatusOr<SyntheticDataset> GenerateDataset(
    const SyntheticSpec& spec, const allocation::RecordAllocation& train_alloc,
    int64_t num_test, uint64_t seed) {
  if (absl::Status s = ValidateSpec(spec); !s.ok()) return s;
  if (absl::Status s = allocation::ValidateAllocation(train_alloc); !s.ok()) {
    return s;
  }
  if (num_test < 1) return absl::InvalidArgumentError("empty test split");

  Rng rng = DeriveStream(seed, {kTagDataset});
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd means(spec.num_classes, spec.dim);
  const double scale = spec.separation / std::sqrt(static_cast<double>(spec.dim));
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = scale * unit(rng);
  }

  SyntheticDataset out;
  out.num_classes = spec.num_classes;
  const auto num_train = static_cast<int64_t>(train_alloc.records.size());
  if (spec.two_labels_per_user) {
    std::vector<std::array<int32_t, 2>> label_sets(train_alloc.num_users);
    std::uniform_int_distribution<int32_t> first(0, spec.num_classes - 1);
    std::uniform_int_distribution<int32_t> offset(1, spec.num_classes - 1);
    for (auto& set : label_sets) {
      set[0] = first(rng);
      set[1] = (set[0] + offset(rng)) % spec.num_classes;
    }
    std::bernoulli_distribution coin(0.5);
    out.train.labels.resize(static_cast<size_t>(num_train));
    for (int64_t i = 0; i < num_train; ++i) {
      const auto& set = label_sets[train_alloc.records[static_cast<size_t>(i)].user];
      out.train.labels[static_cast<size_t>(i)] = set[coin(rng) ? 1 : 0];
    }
  } else {
    out.train.labels = BalancedLabels(num_train, spec.num_classes, rng);
  }
  FillFeatures(means, out.train.labels, rng, &out.train.features);
  out.test.labels = BalancedLabels(num_test, spec.num_classes, rng);
  FillFeatures(means, out.test.labels, rng, &out.test.features);
  return out;
}

LabeledData SelectRows(const LabeledData& data,
                       const std::vector<int64_t>& rows) {
  LabeledData out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()),
                      data.features.cols());
  out.labels.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    out.labels.push_back(data.labels[static_cast<size_t>(rows[i])]);
  }
  return out;
}

void WriteDatasetCsv(const allocation::RecordAllocation& alloc,
                     const LabeledData& train, std::ostream& out) {
  out << "record_id,user_id,silo_id";
  for (Eigen::Index j = 0; j < train.features.cols(); ++j) out << ",x" << j;
  out << ",label\n";
  for (size_t i = 0; i < alloc.records.size(); ++i) {
    out << i << ',' << alloc.records[i].user << ',' << alloc.records[i].silo;
    for (Eigen::Index j = 0; j < train.features.cols(); ++j) {
      out << ',' << absl::StrFormat("%.17g", train.features(static_cast<Eigen::Index>(i), j));
    }
    out << ',' << train.labels[i] << '\n';
  }
}

}  // namespace uldp::data
