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

// Synthetic labeled-classification data: Gaussian class clusters in
// `dim` dimensions. Train records follow a RecordAllocation so that each
// record has an owner and a silo; the held-out test split is balanced over
// classes.

#ifndef ULDP_DATASET_H_
#define ULDP_DATASET_H_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "uldp/allocation.h"

namespace uldp::data {

struct LabeledData {
  Eigen::MatrixXd features;  // one row per record
  std::vector<int32_t> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

struct SyntheticSpec {
  int32_t dim = 8;
  int32_t num_classes = 2;
  // Scale of the class means relative to the unit within-class noise.
  double separation = 1.5;
  // Restrict every user to at most two labels (non-iid).
  bool two_labels_per_user = false;
};

absl::Status ValidateSpec(const SyntheticSpec& spec);

struct SyntheticDataset {
  LabeledData train;  // row i belongs to allocation record i
  LabeledData test;
  int32_t num_classes = 2;
};

// Size of the held-out split for `total_records` (20%, at least one record).
int64_t TestSplitSize(int64_t total_records);

absl::StatusOr<SyntheticDataset> GenerateDataset(
    const SyntheticSpec& spec, const allocation::RecordAllocation& train_alloc,
    int64_t num_test, uint64_t seed);

// Subset of `data` at the given row indices.
LabeledData SelectRows(const LabeledData& data,
                       const std::vector<int64_t>& rows);

// record_id,user_id,silo_id,x0,..,x{d-1},label
void WriteDatasetCsv(const allocation::RecordAllocation& alloc,
                     const LabeledData& train, std::ostream& out);

}  // namespace uldp::data

#endif  // ULDP_DATASET_H_
