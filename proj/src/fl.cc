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

#include "uldp/fl.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/strings/str_format.h"

namespace uldp::fl {
namespace {

// Stream key for training on a whole silo rather than one user's shard.
constexpr uint64_t kWholeSilo = 0xFFFFFFFFull;

absl::Status CheckContext(const RoundContext& ctx, bool needs_weights) {
  if (ctx.model == nullptr || ctx.data == nullptr) {
    return absl::InvalidArgumentError("round context lacks model or data");
  }
  if (absl::Status s = ValidateTrainConfig(ctx.config); !s.ok()) return s;
  if (needs_weights) {
    if (ctx.weights == nullptr) {
      return absl::InvalidArgumentError("per-user algorithm needs weights");
    }
    if (ctx.weights->num_silos != ctx.data->num_silos ||
        ctx.weights->num_users != ctx.data->num_users) {
      return absl::InvalidArgumentError("weight matrix shape mismatch");
    }
  }
  return absl::OkStatus();
}

// N(0, std^2) per coordinate on silo s's own stream.
Vector SiloNoise(double std_dev, int32_t silo, Eigen::Index dim, uint64_t seed,
                 int64_t round) {
  Vector z = Vector::Zero(dim);
  if (std_dev == 0.0) return z;
  Rng rng = DeriveStream(seed, {kTagSiloNoise, static_cast<uint64_t>(round),
                                static_cast<uint64_t>(silo)});
  std::normal_distribution<double> normal(0.0, std_dev);
  for (Eigen::Index i = 0; i < dim; ++i) z[i] = normal(rng);
  return z;
}

Vector SiloNoiseSum(double std_dev, int32_t num_silos, Eigen::Index dim,
                    uint64_t seed, int64_t round) {
  Vector total = Vector::Zero(dim);
  for (int32_t s = 0; s < num_silos; ++s) {
    total += SiloNoise(std_dev, s, dim, seed, round);
  }
  return total;
}

// sigma * clip * factor, with sigma = 0 meaning no noise even for an
// unbounded clip.
double NoiseStd(double sigma, double clip, double factor) {
  return sigma == 0.0 ? 0.0 : sigma * clip * factor;
}

Rng TrainingStream(const RoundContext& ctx, int32_t silo, uint64_t user) {
  return DeriveStream(ctx.seed, {kTagLocalTraining,
                                 static_cast<uint64_t>(ctx.round),
                                 static_cast<uint64_t>(silo), user});
}

// Silo-level local deltas shared by kDefault and kNaive.
absl::StatusOr<std::vector<Vector>> SiloDeltas(const Vector& params,
                                               const RoundContext& ctx) {
  std::vector<Vector> deltas;
  for (int32_t s = 0; s < ctx.data->num_silos; ++s) {
    Rng rng = TrainingStream(ctx, s, kWholeSilo);
    absl::StatusOr<LocalResult> local =
        LocalDelta(*ctx.model, params, ctx.data->silos[s], ctx.config.eta_l,
                   ctx.config.local_epochs, ctx.config.batch_size, rng);
    if (!local.ok()) return local.status();
    deltas.push_back(std::move(local->delta));
  }
  return deltas;
}

// Per-user contributions: a local delta, or with `gradient_only` one
// stochastic gradient (the whole shard, or a random batch of batch_size).
absl::StatusOr<SiloContributions> Contributions(const Vector& params,
                                                const RoundContext& ctx,
                                                const std::vector<bool>& sampled,
                                                bool gradient_only,
                                                int32_t only_silo = -1) {
  const FederatedData& data = *ctx.data;
  const TrainConfig& cfg = ctx.config;
  SiloContributions out;
  out.clipped.assign(data.num_silos, std::vector<Vector>(data.num_users));
  out.norms.assign(static_cast<size_t>(data.num_silos) * data.num_users, 0.0);
  out.noise.assign(data.num_silos, Vector());
  for (int32_t s = 0; s < data.num_silos; ++s) {
    if (only_silo >= 0 && s != only_silo) continue;
    for (int32_t u = 0; u < data.num_users; ++u) {
      const data::LabeledData& shard = data.shards[s][u];
      if (shard.size() == 0) continue;
      if (!sampled.empty() && !sampled[u]) continue;
      Rng rng = TrainingStream(ctx, s, static_cast<uint64_t>(u));
      Vector contribution;
      if (gradient_only) {
        data::LabeledData batch;
        const data::LabeledData* rows_used = &shard;
        if (shard.size() > cfg.batch_size) {
          std::vector<int64_t> rows(static_cast<size_t>(shard.size()));
          std::iota(rows.begin(), rows.end(), int64_t{0});
          std::shuffle(rows.begin(), rows.end(), rng);
          rows.resize(static_cast<size_t>(cfg.batch_size));
          batch = data::SelectRows(shard, rows);
          rows_used = &batch;
        }
        absl::StatusOr<LossGrad> lg = ctx.model->LossAndGradient(
            params, rows_used->features, rows_used->labels);
        if (!lg.ok()) return lg.status();
        contribution = std::move(lg->grad);
      } else {
        absl::StatusOr<LocalResult> local =
            LocalDelta(*ctx.model, params, shard, cfg.eta_l, cfg.local_epochs,
                       cfg.batch_size, rng);
        if (!local.ok()) return local.status();
        contribution = std::move(local->delta);
      }
      out.norms[static_cast<size_t>(s) * data.num_users + u] = contribution.norm();
      out.clipped[s][u] = WeightedClip(contribution, 1.0, cfg.clip);
    }
    out.noise[s] = SiloNoise(
        NoiseStd(cfg.sigma, cfg.clip, 1.0 / std::sqrt(data.num_silos)), s,
        params.size(), ctx.seed, ctx.round);
  }
  return out;
}

// Weights, noise and diagnostics around the contributions; the caller sets
// params.
absl::StatusOr<RoundResult> PerUserRound(const Vector& params,
                                         const RoundContext& ctx,
                                         const std::vector<bool>& sampled,
                                         bool gradient_only) {
  absl::StatusOr<SiloContributions> c =
      Contributions(params, ctx, sampled, gradient_only);
  if (!c.ok()) return c.status();
  RoundResult out;
  out.aggregate = WeightedSum(*c, *ctx.weights, params.size());
  out.noise = Vector::Zero(params.size());
  for (const Vector& z : c->noise) out.noise += z;
  out.diagnostics =
      ComputeClippingDiagnostics(c->norms, *ctx.weights, ctx.config.clip);
  out.sampled_users = sampled.empty()
                          ? ctx.data->num_users
                          : static_cast<int32_t>(
                                std::count(sampled.begin(), sampled.end(), true));
  return out;
}

}  // namespace

absl::StatusOr<Algorithm> ParseAlgorithm(const std::string& name) {
  if (name == "default") return Algorithm::kDefault;
  if (name == "naive") return Algorithm::kNaive;
  if (name == "group") return Algorithm::kGroup;
  if (name == "sgd") return Algorithm::kSgd;
  if (name == "avg") return Algorithm::kAvg;
  if (name == "avg-w") return Algorithm::kAvgWeighted;
  if (name == "avg-sub") return Algorithm::kAvgSubsampled;
  return absl::InvalidArgumentError(
      absl::StrFormat("unknown algorithm '%s'", name));
}

std::string AlgorithmName(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kDefault:
      return "default";
    case Algorithm::kNaive:
      return "naive";
    case Algorithm::kGroup:
      return "group";
    case Algorithm::kSgd:
      return "sgd";
    case Algorithm::kAvg:
      return "avg";
    case Algorithm::kAvgWeighted:
      return "avg-w";
    case Algorithm::kAvgSubsampled:
      return "avg-sub";
  }
  return "default";
}

absl::Status ValidateTrainConfig(const TrainConfig& c) {
  if (!(c.eta_l >= 0) || !std::isfinite(c.eta_l)) {
    return absl::InvalidArgumentError("eta_l must be finite and >= 0");
  }
  if (!(c.eta_g > 0) || !std::isfinite(c.eta_g)) {
    return absl::InvalidArgumentError("eta_g must be finite and > 0");
  }
  if (!(c.clip > 0)) return absl::InvalidArgumentError("clip must be > 0");
  if (!(c.sigma >= 0) || !std::isfinite(c.sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and >= 0");
  }
  if (c.sigma > 0 && std::isinf(c.clip)) {
    return absl::InvalidArgumentError("noise needs a finite clipping bound");
  }
  if (c.rounds < 1) return absl::InvalidArgumentError("rounds must be >= 1");
  if (c.local_epochs < 1) return absl::InvalidArgumentError("epochs must be >= 1");
  if (!(c.user_rate > 0 && c.user_rate <= 1)) {
    return absl::InvalidArgumentError("user sampling rate must lie in (0, 1]");
  }
  if (!(c.record_rate > 0 && c.record_rate <= 1)) {
    return absl::InvalidArgumentError("record sampling rate must lie in (0, 1]");
  }
  if (c.batch_size < 1) return absl::InvalidArgumentError("batch size must be >= 1");
  if (c.group_k < 1) return absl::InvalidArgumentError("group size must be >= 1");
  return absl::OkStatus();
}

absl::StatusOr<FederatedData> Partition(const data::LabeledData& train,
                                        const allocation::RecordAllocation& alloc,
                                        const std::vector<bool>* keep) {
  if (absl::Status s = allocation::ValidateAllocation(alloc); !s.ok()) return s;
  if (static_cast<size_t>(train.size()) != alloc.records.size()) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "%d training rows for %d allocated records", train.size(),
        alloc.records.size()));
  }
  if (keep != nullptr && keep->size() != alloc.records.size()) {
    return absl::InvalidArgumentError("flag count differs from record count");
  }
  const int32_t S = alloc.num_silos, U = alloc.num_users;
  std::vector<std::vector<std::vector<int64_t>>> pair_rows(
      S, std::vector<std::vector<int64_t>>(U));
  std::vector<std::vector<int64_t>> silo_rows(S);
  allocation::Histogram hist(S, U);
  for (size_t i = 0; i < alloc.records.size(); ++i) {
    if (keep != nullptr && !(*keep)[i]) continue;
    const allocation::Assignment& a = alloc.records[i];
    pair_rows[a.silo][a.user].push_back(static_cast<int64_t>(i));
    silo_rows[a.silo].push_back(static_cast<int64_t>(i));
    ++hist.at(a.silo, a.user);
  }
  FederatedData out;
  out.num_silos = S;
  out.num_users = U;
  out.histogram = std::move(hist);
  out.shards.resize(S);
  for (int32_t s = 0; s < S; ++s) {
    out.shards[s].reserve(U);
    for (int32_t u = 0; u < U; ++u) {
      out.shards[s].push_back(data::SelectRows(train, pair_rows[s][u]));
    }
    out.silos.push_back(data::SelectRows(train, silo_rows[s]));
  }
  return out;
}

WeightMatrix UniformWeights(const allocation::Histogram& hist) {
  WeightMatrix m{hist.num_silos(), hist.num_users(),
                 std::vector<double>(hist.counts().size(), 1.0 / hist.num_silos()),
                 std::vector<bool>(hist.num_users(), true)};
  return m;
}

WeightMatrix OptimalWeights(const allocation::Histogram& hist) {
  WeightMatrix m{hist.num_silos(), hist.num_users(),
                 std::vector<double>(hist.counts().size(), 0.0),
                 std::vector<bool>(hist.num_users(), false)};
  for (int32_t u = 0; u < hist.num_users(); ++u) {
    const int64_t total = hist.UserTotal(u);
    if (total == 0) continue;
    m.active[u] = true;
    for (int32_t s = 0; s < hist.num_silos(); ++s) {
      m.w[static_cast<size_t>(s) * hist.num_users() + u] =
          static_cast<double>(hist.at(s, u)) / static_cast<double>(total);
    }
  }
  return m;
}

absl::Status ValidateWeights(const WeightMatrix& m, double tolerance) {
  if (m.w.size() != static_cast<size_t>(m.num_silos) * m.num_users ||
      m.active.size() != static_cast<size_t>(m.num_users)) {
    return absl::InvalidArgumentError("weight matrix has inconsistent shape");
  }
  for (int32_t u = 0; u < m.num_users; ++u) {
    double sum = 0;
    for (int32_t s = 0; s < m.num_silos; ++s) {
      const double w = m.at(s, u);
      if (!(w >= 0) || !std::isfinite(w)) {
        return absl::InvalidArgumentError(
            absl::StrFormat("weight (%d, %d) = %g is not a finite non-negative", s, u, w));
      }
      sum += w;
    }
    if (m.active[u] && std::abs(sum - 1.0) > tolerance) {
      return absl::InvalidArgumentError(
          absl::StrFormat("weights of user %d sum to %.17g", u, sum));
    }
  }
  return absl::OkStatus();
}

Vector WeightedClip(const Vector& delta, double weight, double clip) {
  const double norm = delta.norm();
  const double scale = norm > clip ? clip / norm : 1.0;
  return (weight * scale) * delta;
}

absl::StatusOr<LocalResult> LocalDelta(const Model& model, const Vector& params,
                                       const data::LabeledData& data,
                                       double eta_l, int32_t epochs,
                                       int32_t batch_size, Rng& rng) {
  if (epochs < 1) return absl::InvalidArgumentError("epochs must be >= 1");
  if (batch_size < 1) return absl::InvalidArgumentError("batch size must be >= 1");
  LocalResult out;
  if (data.size() == 0) {
    out.delta = Vector::Zero(params.size());
    out.empty = true;
    return out;
  }
  Vector local = params;
  if (data.size() < batch_size) {
    for (int32_t e = 0; e < epochs; ++e) {
      absl::StatusOr<LossGrad> lg =
          model.LossAndGradient(local, data.features, data.labels);
      if (!lg.ok()) return lg.status();
      local -= eta_l * lg->grad;
    }
  } else {
    std::vector<int64_t> order(static_cast<size_t>(data.size()));
    std::iota(order.begin(), order.end(), int64_t{0});
    for (int32_t e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t begin = 0; begin < order.size(); begin += batch_size) {
        const size_t end = std::min(order.size(), begin + batch_size);
        const data::LabeledData batch = data::SelectRows(
            data, std::vector<int64_t>(order.begin() + begin, order.begin() + end));
        absl::StatusOr<LossGrad> lg =
            model.LossAndGradient(local, batch.features, batch.labels);
        if (!lg.ok()) return lg.status();
        local -= eta_l * lg->grad;
      }
    }
  }
  out.delta = local - params;
  return out;
}

int64_t DpSgdStepsPerEpoch(double record_rate) {
  return static_cast<int64_t>(std::ceil(1.0 / record_rate - 1e-12));
}

absl::StatusOr<DpSgdResult> DpSgdEpochs(const Model& model, const Vector& params,
                                        const data::LabeledData& data,
                                        double clip, double sigma, double eta_l,
                                        double record_rate, int32_t epochs,
                                        Rng& rng) {
  if (!(record_rate > 0 && record_rate <= 1)) {
    return absl::InvalidArgumentError("record sampling rate must lie in (0, 1]");
  }
  if (!(clip > 0) || !(sigma >= 0) || epochs < 1) {
    return absl::InvalidArgumentError("DP-SGD needs clip > 0, sigma >= 0, epochs >= 1");
  }
  if (sigma > 0 && std::isinf(clip)) {
    return absl::InvalidArgumentError("noise needs a finite clipping bound");
  }
  DpSgdResult out;
  out.params = params;
  if (data.size() == 0) return out;
  const double expected_lot = record_rate * static_cast<double>(data.size());
  const int64_t steps = DpSgdStepsPerEpoch(record_rate) * epochs;
  std::bernoulli_distribution pick(record_rate);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::span<const int32_t> labels(data.labels);
  for (int64_t step = 0; step < steps; ++step) {
    Vector sum = Vector::Zero(params.size());
    for (int64_t i = 0; i < data.size(); ++i) {
      if (!pick(rng)) continue;
      absl::StatusOr<LossGrad> lg = model.LossAndGradient(
          out.params, data.features.row(i), labels.subspan(static_cast<size_t>(i), 1));
      if (!lg.ok()) return lg.status();
      const Vector clipped = WeightedClip(lg->grad, 1.0, clip);
      out.max_clipped_norm = std::max(out.max_clipped_norm, clipped.norm());
      sum += clipped;
      ++out.sampled_records;
    }
    if (sigma > 0) {
      for (Eigen::Index j = 0; j < sum.size(); ++j) sum[j] += sigma * clip * normal(rng);
    }
    out.params -= (eta_l / expected_lot) * sum;
    ++out.steps;
  }
  return out;
}

ClippingDiagnostics ComputeClippingDiagnostics(std::span<const double> delta_norms,
                                               const WeightMatrix& weights,
                                               double clip) {
  ClippingDiagnostics d;
  d.factors.resize(delta_norms.size());
  for (size_t i = 0; i < delta_norms.size(); ++i) {
    d.factors[i] = weights.w[i] * clip / std::max(clip, delta_norms[i]);
  }
  if (d.factors.empty()) return d;
  d.alpha_bar = std::accumulate(d.factors.begin(), d.factors.end(), 0.0) /
                static_cast<double>(d.factors.size());
  for (double f : d.factors) {
    d.abs_deviation += std::abs(f - d.alpha_bar);
    d.sq_deviation += (f - d.alpha_bar) * (f - d.alpha_bar);
  }
  return d;
}

absl::StatusOr<SiloContributions> UserContributions(
    const Vector& params, const RoundContext& ctx,
    const std::vector<bool>& sampled, int32_t only_silo) {
  if (absl::Status s = CheckContext(ctx, false); !s.ok()) return s;
  if (only_silo >= ctx.data->num_silos) {
    return absl::InvalidArgumentError("silo index out of range");
  }
  return Contributions(params, ctx, sampled, false, only_silo);
}

Vector WeightedSum(const SiloContributions& c, const WeightMatrix& weights,
                   Eigen::Index dim) {
  Vector total = Vector::Zero(dim);
  for (size_t s = 0; s < c.clipped.size(); ++s) {
    for (size_t u = 0; u < c.clipped[s].size(); ++u) {
      if (c.clipped[s][u].size() == 0) continue;
      total += weights.at(static_cast<int32_t>(s), static_cast<int32_t>(u)) *
               c.clipped[s][u];
    }
  }
  return total;
}

std::vector<bool> SampleUsers(const RoundContext& ctx) {
  Rng rng = DeriveStream(ctx.seed, {kTagUserSampling, static_cast<uint64_t>(ctx.round)});
  std::bernoulli_distribution pick(ctx.config.user_rate);
  std::vector<bool> sampled(ctx.data->num_users);
  for (int32_t u = 0; u < ctx.data->num_users; ++u) sampled[u] = pick(rng);
  return sampled;
}

absl::StatusOr<RoundResult> RoundDefault(const Vector& params,
                                         const RoundContext& ctx) {
  if (absl::Status s = CheckContext(ctx, false); !s.ok()) return s;
  absl::StatusOr<std::vector<Vector>> deltas = SiloDeltas(params, ctx);
  if (!deltas.ok()) return deltas.status();
  RoundResult out;
  out.aggregate = Vector::Zero(params.size());
  for (const Vector& d : *deltas) out.aggregate += d;
  out.noise = Vector::Zero(params.size());
  out.params = params + (ctx.config.eta_g / ctx.data->num_silos) * out.aggregate;
  out.sampled_users = ctx.data->num_users;
  return out;
}

absl::StatusOr<RoundResult> RoundUldpNaive(const Vector& params,
                                           const RoundContext& ctx) {
  if (absl::Status s = CheckContext(ctx, false); !s.ok()) return s;
  absl::StatusOr<std::vector<Vector>> deltas = SiloDeltas(params, ctx);
  if (!deltas.ok()) return deltas.status();
  const TrainConfig& cfg = ctx.config;
  const int32_t S = ctx.data->num_silos;
  RoundResult out;
  out.aggregate = Vector::Zero(params.size());
  for (const Vector& d : *deltas) out.aggregate += WeightedClip(d, 1.0, cfg.clip);
  out.noise = SiloNoiseSum(NoiseStd(cfg.sigma, cfg.clip, std::sqrt(S)), S,
                           params.size(), ctx.seed, ctx.round);
  out.params = params + (cfg.eta_g / S) * (out.aggregate + out.noise);
  out.sampled_users = ctx.data->num_users;
  return out;
}

absl::StatusOr<RoundResult> RoundUldpGroup(const Vector& params,
                                           const RoundContext& ctx) {
  if (absl::Status s = CheckContext(ctx, false); !s.ok()) return s;
  const TrainConfig& cfg = ctx.config;
  const int32_t S = ctx.data->num_silos;
  RoundResult out;
  out.aggregate = Vector::Zero(params.size());
  for (int32_t s = 0; s < S; ++s) {
    Rng rng = DeriveStream(ctx.seed, {kTagDpSgd, static_cast<uint64_t>(ctx.round),
                                      static_cast<uint64_t>(s)});
    absl::StatusOr<DpSgdResult> local =
        DpSgdEpochs(*ctx.model, params, ctx.data->silos[s], cfg.clip, cfg.sigma,
                    cfg.eta_l, cfg.record_rate, cfg.local_epochs, rng);
    if (!local.ok()) return local.status();
    out.aggregate += local->params - params;
  }
  out.noise = Vector::Zero(params.size());
  out.params = params + (cfg.eta_g / S) * out.aggregate;
  out.sampled_users = ctx.data->num_users;
  return out;
}

absl::StatusOr<RoundResult> RoundUldpSgd(const Vector& params,
                                         const RoundContext& ctx) {
  if (absl::Status s = CheckContext(ctx, true); !s.ok()) return s;
  absl::StatusOr<RoundResult> out = PerUserRound(params, ctx, {}, true);
  if (!out.ok()) return out;
  const double scale =
      ctx.config.eta_g / (static_cast<double>(ctx.data->num_users) * ctx.data->num_silos);
  out->params = params - scale * (out->aggregate + out->noise);
  return out;
}

absl::StatusOr<RoundResult> RoundUldpAvg(const Vector& params,
                                         const RoundContext& ctx) {
  if (absl::Status s = CheckContext(ctx, true); !s.ok()) return s;
  absl::StatusOr<RoundResult> out = PerUserRound(params, ctx, {}, false);
  if (!out.ok()) return out;
  const double scale =
      ctx.config.eta_g / (static_cast<double>(ctx.data->num_users) * ctx.data->num_silos);
  out->params = params + scale * (out->aggregate + out->noise);
  return out;
}

absl::StatusOr<RoundResult> RoundUldpAvgSubsampled(const Vector& params,
                                                   const RoundContext& ctx) {
  if (absl::Status s = CheckContext(ctx, true); !s.ok()) return s;
  const double q = ctx.config.user_rate;
  absl::StatusOr<RoundResult> out =
      PerUserRound(params, ctx, SampleUsers(ctx), false);
  if (!out.ok()) return out;
  const double scale = ctx.config.eta_g /
                       (q * static_cast<double>(ctx.data->num_users) * ctx.data->num_silos);
  out->params = params + scale * (out->aggregate + out->noise);
  return out;
}

absl::StatusOr<RoundResult> RunRound(Algorithm algorithm, const Vector& params,
                                     const RoundContext& ctx) {
  switch (algorithm) {
    case Algorithm::kDefault:
      return RoundDefault(params, ctx);
    case Algorithm::kNaive:
      return RoundUldpNaive(params, ctx);
    case Algorithm::kGroup:
      return RoundUldpGroup(params, ctx);
    case Algorithm::kSgd:
      return RoundUldpSgd(params, ctx);
    case Algorithm::kAvg:
    case Algorithm::kAvgWeighted:
      return RoundUldpAvg(params, ctx);
    case Algorithm::kAvgSubsampled:
      return RoundUldpAvgSubsampled(params, ctx);
  }
  return absl::InvalidArgumentError("unknown algorithm");
}

}  // namespace uldp::fl
