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

// End-to-end experiments: allocation, data, training rounds, accounting and
// evaluation, with optional private weighting through the secure protocol.

#ifndef ULDP_HARNESS_H_
#define ULDP_HARNESS_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "uldp/accounting.h"
#include "uldp/allocation.h"
#include "uldp/dataset.h"
#include "uldp/fl.h"
#include "uldp/model.h"

namespace uldp::harness {

struct ExperimentConfig {
  std::string algorithm = "avg";
  fl::TrainConfig train;
  // Sub-sampled runs may use count-proportional weights instead of uniform.
  bool optimal_weights = false;
  allocation::DistributionSpec distribution;
  // Total synthetic records; a stratified fifth is held out for testing.
  int64_t num_records = 2000;
  int32_t num_users = 100;
  int32_t num_silos = 5;
  data::SyntheticSpec dataset;
  fl::ModelSpec model;
  double delta = 1e-5;
  int32_t repetitions = 5;
  // Private weighting through the secure protocol.
  bool secure = false;
  int32_t key_bits = 3072;
  double precision = 1e-10;
  int64_t n_max = 2000;
  std::vector<int64_t> count_set;
  // wall_ms is the only column that is not a function of the config; with
  // this off it is written as 0 so outputs are byte-reproducible.
  bool record_wall_time = true;
  uint64_t seed = 0;
  std::string output_dir;
};

// Every problem with the config, in field order; empty when valid.
std::vector<std::string> ValidateConfig(const ExperimentConfig& config);

// JSON object whose keys mirror the struct fields; missing keys keep their
// defaults and unknown keys are errors. Nested: "train", "distribution",
// "dataset", "model".
absl::StatusOr<ExperimentConfig> ParseConfig(const std::string& json_text);
std::string ConfigToJson(const ExperimentConfig& config);

struct MetricsRow {
  int32_t round = 0;
  double test_loss = 0.0;
  double test_metric = 0.0;  // accuracy
  double epsilon = 0.0;      // cumulative, +inf when non-private
  double delta = 0.0;
  double alpha_bar = 0.0;    // NaN for algorithms without per-user clipping
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  fl::Vector final_params;
  // Secure runs: worst per-coordinate gap between the decoded and the
  // plaintext aggregate, and the allowed fixed-point error.
  double max_secure_error = 0.0;
  double secure_tolerance = 0.0;
};

struct SummaryRow {
  int32_t round = 0;
  double loss_mean = 0.0, loss_std = 0.0;
  double metric_mean = 0.0, metric_std = 0.0;
  double epsilon = 0.0;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<SummaryRow> summary;
};

// Cumulative user-level epsilon after `rounds` rounds of `config`; +inf for
// the non-private baseline and for sigma = 0.
absl::StatusOr<double> EpsilonAfter(const ExperimentConfig& config,
                                    int64_t rounds);

// One repetition; repetition r draws every stream from a seed derived from
// (config.seed, r).
absl::StatusOr<RunResult> RunOnce(const ExperimentConfig& config,
                                  int32_t repetition);

// All repetitions with mean and standard deviation per round. Writes
// metrics_<r>.csv, summary.csv and config.json when output_dir is set.
// Secure-protocol precondition failures come back as FailedPrecondition.
absl::StatusOr<ExperimentResult> RunExperiment(const ExperimentConfig& config);

// Header round,test_loss,test_metric,epsilon,delta,alpha_bar,wall_ms.
void WriteMetricsCsv(std::span<const MetricsRow> rows, std::ostream& out);
// Header round,loss_mean,loss_std,metric_mean,metric_std,epsilon.
void WriteSummaryCsv(std::span<const SummaryRow> rows, std::ostream& out);

struct ConversionRow {
  int64_t k = 1;
  double epsilon_rdp = 0.0;          // group conversion in the RDP domain
  double epsilon_normal = 0.0;       // group conversion of (epsilon, delta)-DP
  double epsilon_rdp_relaxed = 0.0;  // RDP domain, relaxed order condition
};

// Group-privacy epsilon of `steps` sub-sampled Gaussian steps along both
// conversion paths.
absl::StatusOr<std::vector<ConversionRow>> SweepGroupConversion(
    double sigma, double q, int64_t steps, double delta,
    std::span<const int64_t> k_list);
// Header k,epsilon_rdp,epsilon_normal,epsilon_rdp_relaxed.
void WriteConversionCsv(std::span<const ConversionRow> rows, std::ostream& out);

struct WeightingRow {
  int32_t round = 0;
  double loss_uniform = 0.0, loss_optimal = 0.0;
  double metric_uniform = 0.0, metric_optimal = 0.0;
};

// Runs `config` as uniform-weight and count-weighted averaging on identical
// seeds and data; per-round means over repetitions.
absl::StatusOr<std::vector<WeightingRow>> CompareWeighting(
    const ExperimentConfig& config);
// Header round,loss_uniform,loss_optimal,metric_uniform,metric_optimal.
void WriteWeightingCsv(std::span<const WeightingRow> rows, std::ostream& out);

}  // namespace uldp::harness

#endif  // ULDP_HARNESS_H_
