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

// Cross-silo training rounds under user-level differential privacy.
//
// All model deltas follow one convention: local model minus global model.
// Every round is a pure function of (params, context); randomness comes from
// streams keyed by (seed, purpose, round, silo[, user]) so that silo order
// and scheduling never affect results.

#ifndef ULDP_FL_H_
#define ULDP_FL_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "uldp/allocation.h"
#include "uldp/dataset.h"
#include "uldp/model.h"
#include "uldp/random.h"

namespace uldp::fl {

enum class Algorithm {
  kDefault,         // non-private FedAVG with server and client rates
  kNaive,           // silo-level clipping, noise scaled up by |S|
  kGroup,           // per-silo DP-SGD on contribution-limited data
  kSgd,             // one clipped gradient per user
  kAvg,             // per-user weighted clipping, uniform weights
  kAvgWeighted,     // per-user weighted clipping, count-proportional weights
  kAvgSubsampled,   // kAvg with Poisson user sampling
};

absl::StatusOr<Algorithm> ParseAlgorithm(const std::string& name);
std::string AlgorithmName(Algorithm algorithm);

struct TrainConfig {
  double eta_l = 0.1;
  double eta_g = 1.0;
  double clip = 1.0;  // may be +inf to disable clipping
  double sigma = 1.0;
  int32_t rounds = 10;
  int32_t local_epochs = 1;
  double user_rate = 1.0;    // Poisson user sampling (kAvgSubsampled)
  double record_rate = 0.1;  // DP-SGD lot sampling (kGroup)
  int32_t batch_size = 32;
  int64_t group_k = 8;
};

absl::Status ValidateTrainConfig(const TrainConfig& config);

// Training records split by owner and location.
struct FederatedData {
  int32_t num_silos = 0;
  int32_t num_users = 0;
  // shards[s][u]: user u's records held by silo s, in record order.
  std::vector<std::vector<data::LabeledData>> shards;
  // All records of silo s, in record order.
  std::vector<data::LabeledData> silos;
  allocation::Histogram histogram;
};

// Rows of `train` correspond to `alloc.records`. With `keep`, records whose
// flag is false are left out of both shards and silos.
absl::StatusOr<FederatedData> Partition(const data::LabeledData& train,
                                        const allocation::RecordAllocation& alloc,
                                        const std::vector<bool>* keep = nullptr);

// Per-(silo, user) weights, silo-major.
struct WeightMatrix {
  int32_t num_silos = 0;
  int32_t num_users = 0;
  std::vector<double> w;
  // False for users with no records anywhere (all-zero column).
  std::vector<bool> active;

  double at(int32_t silo, int32_t user) const {
    return w[static_cast<size_t>(silo) * num_users + user];
  }
};

// w = 1/|S| everywhere.
WeightMatrix UniformWeights(const allocation::Histogram& hist);
// w[s][u] = n[s][u] / N_u.
WeightMatrix OptimalWeights(const allocation::Histogram& hist);
// Non-negative entries; active columns sum to 1 within `tolerance`.
absl::Status ValidateWeights(const WeightMatrix& weights,
                             double tolerance = 1e-12);

// weight * delta * min(1, clip / |delta|).
Vector WeightedClip(const Vector& delta, double weight, double clip);

struct LocalResult {
  Vector delta;
  bool empty = false;
};

// `epochs` passes of SGD from `params`: one full-batch step per pass when the
// data has fewer than `batch_size` rows, shuffled mini-batches otherwise.
absl::StatusOr<LocalResult> LocalDelta(const Model& model, const Vector& params,
                                       const data::LabeledData& data,
                                       double eta_l, int32_t epochs,
                                       int32_t batch_size, Rng& rng);

struct DpSgdResult {
  Vector params;
  int64_t steps = 0;
  int64_t sampled_records = 0;
  // Largest per-record gradient norm after clipping.
  double max_clipped_norm = 0.0;
};

// DP-SGD: per step a Poisson lot at `record_rate`, per-record clipping to
// `clip`, N(0, (sigma * clip)^2) noise on the sum, division by the expected
// lot size and an `eta_l` step; ceil(1 / record_rate) steps per epoch.
absl::StatusOr<DpSgdResult> DpSgdEpochs(const Model& model, const Vector& params,
                                        const data::LabeledData& data,
                                        double clip, double sigma, double eta_l,
                                        double record_rate, int32_t epochs,
                                        Rng& rng);

int64_t DpSgdStepsPerEpoch(double record_rate);

struct ClippingDiagnostics {
  // Effective factor w * C / max(C, |delta|) for every (silo, user), silo-major.
  std::vector<double> factors;
  double alpha_bar = 0.0;
  double abs_deviation = 0.0;  // sum |factor - alpha_bar|
  double sq_deviation = 0.0;   // sum (factor - alpha_bar)^2
};

// `delta_norms` is silo-major over all (silo, user) pairs.
ClippingDiagnostics ComputeClippingDiagnostics(std::span<const double> delta_norms,
                                               const WeightMatrix& weights,
                                               double clip);

struct RoundContext {
  const Model* model = nullptr;
  const FederatedData* data = nullptr;
  const WeightMatrix* weights = nullptr;  // per-user algorithms only
  TrainConfig config;
  uint64_t seed = 0;
  int64_t round = 0;
};

struct RoundResult {
  Vector params;
  // Sum over silos of the silo contributions before noise.
  Vector aggregate;
  // Sum over silos of the silo noise (zero for kDefault and kGroup, whose
  // noise is internal to DP-SGD).
  Vector noise;
  std::optional<ClippingDiagnostics> diagnostics;
  int32_t sampled_users = 0;
};

// What each silo holds before weighting: clip(delta, C) per user (unweighted;
// empty when the user has no records there or was not sampled), the silo's
// noise draw, and the pre-clip norms (silo-major).
struct SiloContributions {
  std::vector<std::vector<Vector>> clipped;
  std::vector<Vector> noise;
  std::vector<double> norms;
};

// Per-user local training, clipping and noise with std sigma*C/sqrt(|S|).
// `sampled` empty means every user participates. With `only_silo` >= 0 the
// other silos are skipped (their entries stay empty); draws are unchanged.
absl::StatusOr<SiloContributions> UserContributions(
    const Vector& params, const RoundContext& ctx,
    const std::vector<bool>& sampled = {}, int32_t only_silo = -1);

// Sum over (s, u) of w[s][u] * clipped[s][u].
Vector WeightedSum(const SiloContributions& contributions,
                   const WeightMatrix& weights, Eigen::Index dim);

// The users kept by Poisson sampling in this round.
std::vector<bool> SampleUsers(const RoundContext& ctx);

absl::StatusOr<RoundResult> RoundDefault(const Vector& params,
                                         const RoundContext& ctx);
absl::StatusOr<RoundResult> RoundUldpNaive(const Vector& params,
                                           const RoundContext& ctx);
// ctx.data must already be filtered by the contribution flags.
absl::StatusOr<RoundResult> RoundUldpGroup(const Vector& params,
                                           const RoundContext& ctx);
absl::StatusOr<RoundResult> RoundUldpSgd(const Vector& params,
                                         const RoundContext& ctx);
absl::StatusOr<RoundResult> RoundUldpAvg(const Vector& params,
                                         const RoundContext& ctx);
absl::StatusOr<RoundResult> RoundUldpAvgSubsampled(const Vector& params,
                                                   const RoundContext& ctx);

// Dispatches on `algorithm`; kAvgWeighted uses RoundUldpAvg with whatever
// weights the context carries.
absl::StatusOr<RoundResult> RunRound(Algorithm algorithm, const Vector& params,
                                     const RoundContext& ctx);

}  // namespace uldp::fl

#endif  // ULDP_FL_H_
