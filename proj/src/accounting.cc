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

#include "uldp/accounting.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "absl/strings/str_format.h"
#include "boost/math/tools/minima.hpp"

namespace uldp::accounting {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// |delta_final - target| <= kDeltaTolerance * target ends the bisection.
constexpr double kDeltaTolerance = 1e-9;
constexpr int kMaxBisection = 4000;

double LogAddExp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// log C(n, j) via lgamma.
double LogBinomial(int64_t n, int64_t j) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(j) + 1.0) -
         std::lgamma(static_cast<double>(n - j) + 1.0);
}

// (alpha - 1) * rho(alpha) for integer alpha >= 2, i.e. the log of the
// binomial moment sum.
double SubsampledLogMoment(int64_t alpha, double sigma, double q) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double acc = -kInf;
  for (int64_t j = 0; j <= alpha; ++j) {
    const double jd = static_cast<double>(j);
    double term = LogBinomial(alpha, j) + jd * (jd - 1.0) / (2.0 * sigma * sigma);
    if (j > 0) term += jd * log_q;
    if (alpha - j > 0) term += static_cast<double>(alpha - j) * log_1mq;
    acc = LogAddExp(acc, term);
  }
  return acc;
}

double ConvertedEpsilon(double alpha, double rho, double log_delta) {
  return rho + std::log((alpha - 1.0) / alpha) -
         (log_delta + std::log(alpha)) / (alpha - 1.0);
}

absl::Status CheckDelta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("delta must lie in (0, 1), got %g", delta));
  }
  return absl::OkStatus();
}

absl::Status CheckSigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("sigma must be positive, got %g", sigma));
  }
  return absl::OkStatus();
}

}  // namespace

std::vector<double> DefaultOrders() {
  std::vector<double> orders;
  orders.reserve(99 + 511);
  for (int x = 1; x <= 99; ++x) orders.push_back(1.0 + x / 10.0);
  for (int a = 2; a <= 512; ++a) orders.push_back(static_cast<double>(a));
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end(),
                           [](double a, double b) {
                             return std::abs(a - b) < 1e-12;
                           }),
               orders.end());
  return orders;
}

int FloorLog2(int64_t k) {
  int c = 0;
  while ((int64_t{1} << (c + 1)) <= k) ++c;
  return c;
}

absl::Status ValidateCurve(const RdpCurve& curve) {
  if (curve.orders.empty()) {
    return absl::InvalidArgumentError("RDP curve is empty");
  }
  if (curve.orders.size() != curve.rhos.size()) {
    return absl::InvalidArgumentError(
        absl::StrFormat("RDP curve has %d orders but %d losses",
                        curve.orders.size(), curve.rhos.size()));
  }
  for (size_t i = 0; i < curve.orders.size(); ++i) {
    if (!(curve.orders[i] > 1.0)) {
      return absl::InvalidArgumentError(
          absl::StrFormat("RDP order must exceed 1, got %g", curve.orders[i]));
    }
    if (!(curve.rhos[i] >= 0.0)) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "RDP loss must be non-negative, got %g at order %g", curve.rhos[i],
          curve.orders[i]));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<double> GaussianRdp(double alpha, double sigma) {
  if (!(alpha > 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("order must exceed 1, got %g", alpha));
  }
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  return alpha / (2.0 * sigma * sigma);
}

absl::StatusOr<double> SubsampledGaussianRdp(double alpha, double sigma,
                                             double q) {
  if (!(alpha > 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("order must exceed 1, got %g", alpha));
  }
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  if (!(q >= 0.0 && q <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("sampling rate must lie in [0, 1], got %g", q));
  }
  if (q == 0.0) return 0.0;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);

  const double floor_alpha = std::floor(alpha);
  if (alpha == floor_alpha) {
    const auto a = static_cast<int64_t>(alpha);
    return std::max(0.0, SubsampledLogMoment(a, sigma, q) / (alpha - 1.0));
  }
  const auto lo = static_cast<int64_t>(floor_alpha);
  const double moment_lo = lo == 1 ? 0.0 : SubsampledLogMoment(lo, sigma, q);
  const double moment_hi = SubsampledLogMoment(lo + 1, sigma, q);
  const double t = alpha - floor_alpha;
  const double moment = (1.0 - t) * moment_lo + t * moment_hi;
  return std::max(0.0, moment / (alpha - 1.0));
}

absl::StatusOr<RdpCurve> GaussianCurve(double sigma, int64_t steps,
                                       std::span<const double> orders) {
  if (steps < 0) {
    return absl::InvalidArgumentError("step count must be non-negative");
  }
  RdpCurve curve;
  curve.orders.assign(orders.begin(), orders.end());
  curve.rhos.reserve(orders.size());
  for (double alpha : orders) {
    absl::StatusOr<double> rho = GaussianRdp(alpha, sigma);
    if (!rho.ok()) return rho.status();
    curve.rhos.push_back(static_cast<double>(steps) * *rho);
  }
  if (absl::Status s = ValidateCurve(curve); !s.ok()) return s;
  return curve;
}

absl::StatusOr<RdpCurve> SubsampledGaussianCurve(
    const NoiseConfig& noise, std::span<const double> orders) {
  if (noise.steps < 0) {
    return absl::InvalidArgumentError("step count must be non-negative");
  }
  RdpCurve curve;
  curve.orders.assign(orders.begin(), orders.end());
  curve.rhos.reserve(orders.size());
  for (double alpha : orders) {
    absl::StatusOr<double> rho =
        SubsampledGaussianRdp(alpha, noise.sigma, noise.q);
    if (!rho.ok()) return rho.status();
    curve.rhos.push_back(static_cast<double>(noise.steps) * *rho);
  }
  if (absl::Status s = ValidateCurve(curve); !s.ok()) return s;
  return curve;
}

absl::StatusOr<RdpCurve> ComposeRdp(std::span<const RdpCurve> curves) {
  if (curves.empty()) {
    return absl::InvalidArgumentError("nothing to compose");
  }
  RdpCurve total = curves.front();
  if (absl::Status s = ValidateCurve(total); !s.ok()) return s;
  for (size_t c = 1; c < curves.size(); ++c) {
    const RdpCurve& next = curves[c];
    if (next.orders != total.orders) {
      return absl::InvalidArgumentError(
          absl::StrFormat("curve %d uses a different order grid", c));
    }
    if (absl::Status s = ValidateCurve(next); !s.ok()) return s;
    for (size_t i = 0; i < total.rhos.size(); ++i) total.rhos[i] += next.rhos[i];
  }
  return total;
}

absl::StatusOr<EpsilonAtOrder> RdpToDpLogDelta(const RdpCurve& curve,
                                               double log_delta) {
  if (absl::Status s = ValidateCurve(curve); !s.ok()) return s;
  if (!(log_delta < 0.0)) {
    return absl::InvalidArgumentError("delta must be below 1");
  }
  EpsilonAtOrder best{kInf, curve.orders.front()};
  for (size_t i = 0; i < curve.orders.size(); ++i) {
    const double eps = ConvertedEpsilon(curve.orders[i], curve.rhos[i], log_delta);
    if (eps < best.epsilon) best = {eps, curve.orders[i]};
  }
  return best;
}

absl::StatusOr<EpsilonAtOrder> RdpToDp(const RdpCurve& curve, double delta) {
  if (absl::Status s = CheckDelta(delta); !s.ok()) return s;
  return RdpToDpLogDelta(curve, std::log(delta));
}

absl::StatusOr<RdpCurve> GroupRdpConvert(const RdpCurve& curve, int exponent,
                                         OrderCondition condition) {
  if (absl::Status s = ValidateCurve(curve); !s.ok()) return s;
  if (exponent < 0 || exponent > 60) {
    return absl::InvalidArgumentError(
        absl::StrFormat("group exponent out of range: %d", exponent));
  }
  if (exponent == 0) return curve;
  const double shrink = std::ldexp(1.0, exponent);
  const double blowup = std::pow(3.0, exponent);
  RdpCurve out;
  for (size_t i = 0; i < curve.orders.size(); ++i) {
    const double alpha = curve.orders[i];
    const bool keep = condition == OrderCondition::kStrict
                          ? alpha >= 2.0 * shrink
                          : alpha / shrink > 1.0;
    if (!keep) continue;
    out.orders.push_back(alpha / shrink);
    out.rhos.push_back(blowup * curve.rhos[i]);
  }
  if (out.orders.empty()) {
    return absl::OutOfRangeError(absl::StrFormat(
        "no order satisfies alpha >= 2^%d for group size 2^%d", exponent + 1,
        exponent));
  }
  return out;
}

absl::StatusOr<GroupDpBudget> DpGroupConvert(const DpBudget& budget,
                                             int64_t k) {
  if (k < 1) {
    return absl::InvalidArgumentError(
        absl::StrFormat("group size must be >= 1, got %d", k));
  }
  if (absl::Status s = CheckDelta(budget.delta); !s.ok()) return s;
  if (!std::isfinite(budget.epsilon)) {
    return absl::InvalidArgumentError("epsilon must be finite");
  }
  GroupDpBudget out;
  out.k = k;
  const auto kd = static_cast<double>(k);
  out.epsilon = kd * budget.epsilon;
  const double log_delta = std::log(kd) +
                           (kd - 1.0) * budget.epsilon +
                           std::log(budget.delta);
  out.delta = std::exp(log_delta);
  if (k == 1) out.delta = budget.delta;
  out.overflow = !std::isfinite(out.epsilon) || !std::isfinite(out.delta);
  return out;
}

absl::StatusOr<NormalGroupResult> NormalGroupEpsilonSearch(
    const RdpCurve& curve, double target_delta, int64_t k) {
  if (absl::Status s = CheckDelta(target_delta); !s.ok()) return s;
  if (absl::Status s = ValidateCurve(curve); !s.ok()) return s;
  if (k < 1) {
    return absl::InvalidArgumentError(
        absl::StrFormat("group size must be >= 1, got %d", k));
  }
  const double log_target = std::log(target_delta);
  const auto kd = static_cast<double>(k);

  // log of the group delta reached when the record-level conversion uses
  // log_delta.
  auto group_log_delta = [&](double log_delta,
                             EpsilonAtOrder* at) -> absl::StatusOr<double> {
    absl::StatusOr<EpsilonAtOrder> e = RdpToDpLogDelta(curve, log_delta);
    if (!e.ok()) return e.status();
    *at = *e;
    return std::log(kd) + (kd - 1.0) * e->epsilon + log_delta;
  };

  NormalGroupResult result;
  EpsilonAtOrder at;
  if (k == 1) {
    absl::StatusOr<EpsilonAtOrder> e = RdpToDpLogDelta(curve, log_target);
    if (!e.ok()) return e.status();
    result.epsilon = e->epsilon;
    result.alpha = e->alpha;
    result.achieved_delta = target_delta;
    result.log_intermediate_delta = log_target;
    return result;
  }

  // hi is infeasible (group delta too large), lo is feasible.
  double hi = log_target;
  absl::StatusOr<double> f_hi = group_log_delta(hi, &at);
  if (!f_hi.ok()) return f_hi.status();
  if (*f_hi <= log_target) {
    result.epsilon = kd * at.epsilon;
    result.alpha = at.alpha;
    result.achieved_delta = std::exp(*f_hi);
    result.log_intermediate_delta = hi;
    return result;
  }
  double gap = 16.0;
  double lo = hi - gap;
  int iterations = 0;
  while (true) {
    absl::StatusOr<double> f_lo = group_log_delta(lo, &at);
    if (!f_lo.ok()) return f_lo.status();
    if (*f_lo <= log_target) break;
    hi = lo;
    gap *= 2.0;
    lo = log_target - gap;
    if (++iterations > 64 || gap > 1e9) {
      return absl::OutOfRangeError(absl::StrFormat(
          "no record-level delta reaches group delta %g for k=%d on this "
          "order grid",
          target_delta, k));
    }
  }

  EpsilonAtOrder at_lo;
  double f_lo_value = 0.0;
  for (; iterations < kMaxBisection; ++iterations) {
    absl::StatusOr<double> f_lo = group_log_delta(lo, &at_lo);
    if (!f_lo.ok()) return f_lo.status();
    f_lo_value = *f_lo;
    // The group delta is log-concave in log_delta, so lo stays on the
    // feasible side of the crossing.
    if (std::abs(std::expm1(f_lo_value - log_target)) <= kDeltaTolerance) {
      break;
    }
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    absl::StatusOr<double> f_mid = group_log_delta(mid, &at);
    if (!f_mid.ok()) return f_mid.status();
    if (*f_mid <= log_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (std::abs(std::expm1(f_lo_value - log_target)) > kDeltaTolerance) {
    return absl::DeadlineExceededError(absl::StrFormat(
        "delta search did not converge for k=%d (reached %g, target %g)", k,
        std::exp(f_lo_value), target_delta));
  }
  result.epsilon = kd * at_lo.epsilon;
  result.alpha = at_lo.alpha;
  result.achieved_delta = std::exp(f_lo_value);
  result.log_intermediate_delta = lo;
  result.iterations = iterations;
  return result;
}

absl::StatusOr<EpsilonAtOrder> BudgetUldpNaiveAvg(double sigma,
                                                  int64_t rounds,
                                                  double delta) {
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  if (absl::Status s = CheckDelta(delta); !s.ok()) return s;
  if (rounds < 1) {
    return absl::InvalidArgumentError(
        absl::StrFormat("round count must be >= 1, got %d", rounds));
  }
  const std::vector<double> orders = DefaultOrders();
  absl::StatusOr<RdpCurve> curve = GaussianCurve(sigma, rounds, orders);
  if (!curve.ok()) return curve.status();
  absl::StatusOr<EpsilonAtOrder> grid = RdpToDp(*curve, delta);
  if (!grid.ok()) return grid.status();

  const auto it = std::lower_bound(orders.begin(), orders.end(), grid->alpha);
  const size_t idx = static_cast<size_t>(it - orders.begin());
  const double left = idx == 0 ? 1.0 + 1e-9 : orders[idx - 1];
  const double right = idx + 1 < orders.size() ? orders[idx + 1] : orders[idx];
  const double scale = static_cast<double>(rounds) / (2.0 * sigma * sigma);
  const double log_delta = std::log(delta);
  auto eps = [&](double alpha) {
    return ConvertedEpsilon(alpha, scale * alpha, log_delta);
  };
  const std::pair<double, double> refined =
      boost::math::tools::brent_find_minima(eps, left, right, 52);
  if (refined.second < grid->epsilon) {
    return EpsilonAtOrder{refined.second, refined.first};
  }
  return grid;
}

absl::StatusOr<EpsilonAtOrder> BudgetUldpAvgSubsampled(double sigma,
                                                       double user_rate,
                                                       int64_t rounds,
                                                       double delta) {
  if (absl::Status s = CheckDelta(delta); !s.ok()) return s;
  if (!(user_rate > 0.0 && user_rate <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("user sampling rate must lie in (0, 1], got %g",
                        user_rate));
  }
  if (user_rate == 1.0) return BudgetUldpNaiveAvg(sigma, rounds, delta);
  const std::vector<double> orders = DefaultOrders();
  absl::StatusOr<RdpCurve> curve =
      SubsampledGaussianCurve({sigma, user_rate, rounds}, orders);
  if (!curve.ok()) return curve.status();
  return RdpToDp(*curve, delta);
}

absl::StatusOr<GroupBudget> BudgetUldpGroup(double sigma, double q,
                                            int64_t total_steps, int64_t k,
                                            double delta,
                                            OrderCondition condition) {
  if (absl::Status s = CheckDelta(delta); !s.ok()) return s;
  if (!(q > 0.0 && q <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("sampling rate must lie in (0, 1], got %g", q));
  }
  if (k < 1) {
    return absl::InvalidArgumentError(
        absl::StrFormat("group size must be >= 1, got %d", k));
  }
  const std::vector<double> orders = DefaultOrders();
  // Silos run identical DP-SGD configurations on disjoint data, so the
  // per-silo maximum is any one silo's curve.
  absl::StatusOr<RdpCurve> per_silo =
      SubsampledGaussianCurve({sigma, q, total_steps}, orders);
  if (!per_silo.ok()) return per_silo.status();
  const int exponent = FloorLog2(k);
  absl::StatusOr<RdpCurve> group =
      GroupRdpConvert(*per_silo, exponent, condition);
  if (!group.ok()) return group.status();
  absl::StatusOr<EpsilonAtOrder> eps = RdpToDp(*group, delta);
  if (!eps.ok()) return eps.status();
  GroupBudget out;
  out.epsilon = eps->epsilon;
  out.alpha = eps->alpha;
  out.effective_k = int64_t{1} << exponent;
  out.lower_bound = out.effective_k != k;
  return out;
}

}  // namespace uldp::accounting
