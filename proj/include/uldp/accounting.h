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

// Renyi-DP accounting for user-level DP federated training.
//
// Every mechanism is described by an RdpCurve: a privacy loss rho(alpha)
// tabulated over a grid of orders. Curves compose by pointwise addition,
// convert to (epsilon, delta)-DP by minimizing over the grid, and convert to
// group privacy either in the RDP domain (orders shrink by 2^c, losses grow
// by 3^c) or after conversion to (epsilon, delta)-DP.
//
// All logarithms are natural; epsilon is in nats. Everything here is a pure
// function of its arguments.

#ifndef ULDP_ACCOUNTING_H_
#define ULDP_ACCOUNTING_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace uldp::accounting {

struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> rhos;
};

// (epsilon, delta)-DP.
struct DpBudget {
  double epsilon = 0.0;
  double delta = 0.0;
};

// (k, epsilon, delta)-group DP. `overflow` is set when epsilon or delta left
// the double range and saturated to +infinity.
struct GroupDpBudget {
  int64_t k = 1;
  double epsilon = 0.0;
  double delta = 0.0;
  bool overflow = false;
};

struct NoiseConfig {
  double sigma = 1.0;
  // Poisson sampling rate of each step.
  double q = 1.0;
  int64_t steps = 1;
};

// Result of an RDP -> DP conversion: the minimal epsilon and the order that
// attains it.
struct EpsilonAtOrder {
  double epsilon = 0.0;
  double alpha = 0.0;
};

// How strictly the RDP group-privacy conversion treats its order condition.
// kStrict keeps only orders with alpha >= 2^(c+1), which is what the
// conversion requires. kRelaxed keeps every order whose converted
// value alpha / 2^c is still above 1; it is not a valid bound and exists only
// for comparison with curves computed that way.
enum class OrderCondition { kStrict, kRelaxed };

// {1.1, 1.2, ..., 10.9} union {2, 3, ..., 512}, sorted and de-duplicated.
std::vector<double> DefaultOrders();

absl::Status ValidateCurve(const RdpCurve& curve);

// alpha / (2 sigma^2).
absl::StatusOr<double> GaussianRdp(double alpha, double sigma);

// RDP of the Poisson-subsampled Gaussian mechanism. Integer orders use the
// exact binomial expansion
//   1/(alpha-1) log sum_j C(alpha,j) (1-q)^(alpha-j) q^j exp(j(j-1)/(2 sigma^2))
// evaluated in log space. Fractional orders interpolate (alpha-1) rho(alpha)
// linearly between neighbouring integers, which upper-bounds the true value
// since (alpha-1) rho(alpha) is convex.
absl::StatusOr<double> SubsampledGaussianRdp(double alpha, double sigma,
                                             double q);

// `steps`-fold composition of the (sub-sampled) Gaussian over `orders`.
absl::StatusOr<RdpCurve> GaussianCurve(double sigma, int64_t steps,
                                       std::span<const double> orders);
absl::StatusOr<RdpCurve> SubsampledGaussianCurve(
    const NoiseConfig& noise, std::span<const double> orders);

// Pointwise sum. All curves must share one order grid.
absl::StatusOr<RdpCurve> ComposeRdp(std::span<const RdpCurve> curves);

// Minimizes rho + log((alpha-1)/alpha) - (log(delta) + log(alpha))/(alpha-1)
// over the grid.
absl::StatusOr<EpsilonAtOrder> RdpToDp(const RdpCurve& curve, double delta);

// Same conversion with log(delta) supplied directly, so that deltas far below
// the smallest double can be used.
absl::StatusOr<EpsilonAtOrder> RdpToDpLogDelta(const RdpCurve& curve,
                                               double log_delta);

// Group privacy in the RDP domain for groups of size 2^exponent: maps
// (alpha, rho) to (alpha / 2^exponent, 3^exponent * rho). Orders violating
// the order condition are dropped; if nothing survives the result is
// kOutOfRange.
absl::StatusOr<RdpCurve> GroupRdpConvert(
    const RdpCurve& curve, int exponent,
    OrderCondition condition = OrderCondition::kStrict);

// (epsilon, delta)-DP -> (k, k epsilon, k e^((k-1) epsilon) delta)-GDP.
absl::StatusOr<GroupDpBudget> DpGroupConvert(const DpBudget& budget,
                                             int64_t k);

struct NormalGroupResult {
  double epsilon = 0.0;
  // Group delta actually reached; within 1e-8 relative of the target.
  double achieved_delta = 0.0;
  // log of the record-level delta fed into the RDP -> DP conversion.
  double log_intermediate_delta = 0.0;
  double alpha = 0.0;
  int iterations = 0;
};

// Group epsilon through (epsilon, delta)-DP: bisects the record-level delta
// until the group-converted delta matches `target_delta`.
absl::StatusOr<NormalGroupResult> NormalGroupEpsilonSearch(
    const RdpCurve& curve, double target_delta, int64_t k);

// ULDP-NAIVE / ULDP-AVG / ULDP-SGD budget after `rounds` Gaussian steps with
// user-level sensitivity C and noise multiplier sigma. The grid minimum is
// refined by continuous minimization of the analytic curve.
absl::StatusOr<EpsilonAtOrder> BudgetUldpNaiveAvg(double sigma,
                                                  int64_t rounds,
                                                  double delta);

// ULDP-AVG with per-round Poisson user sampling at `user_rate`.
absl::StatusOr<EpsilonAtOrder> BudgetUldpAvgSubsampled(double sigma,
                                                       double user_rate,
                                                       int64_t rounds,
                                                       double delta);

struct GroupBudget {
  double epsilon = 0.0;
  double alpha = 0.0;
  // Group size actually accounted for: the largest power of two <= k.
  int64_t effective_k = 1;
  // True when k was not a power of two, so epsilon is for a smaller group.
  bool lower_bound = false;
};

// ULDP-GROUP-k budget: `total_steps` sub-sampled Gaussian steps per silo
// (silos run in parallel, identical configs), group-converted in the RDP
// domain, then converted to (epsilon, delta).
absl::StatusOr<GroupBudget> BudgetUldpGroup(
    double sigma, double q, int64_t total_steps, int64_t k, double delta,
    OrderCondition condition = OrderCondition::kStrict);

// Largest c with 2^c <= k.
int FloorLog2(int64_t k);

}  // namespace uldp::accounting

#endif  // ULDP_ACCOUNTING_H_
