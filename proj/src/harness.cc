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

#include "uldp/harness.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "json.hpp"
#include "uldp/random.h"
#include "uldp/secure.h"

namespace uldp::harness {
namespace {

using json = nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename T>
absl::Status Read(const json& value, const std::string& key, T& out) {
  try {
    out = value.get<T>();
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrFormat("%s: %s", key, e.what()));
  }
  return absl::OkStatus();
}

// Numbers, or the strings "inf"/"infinity" for an unbounded value.
absl::Status ReadMaybeInfinite(const json& value, const std::string& key,
                               double& out) {
  if (value.is_string()) {
    const std::string s = value.get<std::string>();
    if (s == "inf" || s == "infinity") {
      out = kInf;
      return absl::OkStatus();
    }
    return absl::InvalidArgumentError(key + ": expected a number or \"inf\"");
  }
  return Read(value, key, out);
}

absl::Status Unknown(const std::string& scope, const std::string& key) {
  return absl::InvalidArgumentError(
      absl::StrFormat("unknown key '%s%s'", scope, key));
}

absl::Status ParseTrain(const json& obj, fl::TrainConfig& t) {
  if (!obj.is_object()) return absl::InvalidArgumentError("train: expected object");
  for (const auto& [key, v] : obj.items()) {
    absl::Status s;
    if (key == "eta_l") s = Read(v, key, t.eta_l);
    else if (key == "eta_g") s = Read(v, key, t.eta_g);
    else if (key == "clip") s = ReadMaybeInfinite(v, key, t.clip);
    else if (key == "sigma") s = Read(v, key, t.sigma);
    else if (key == "rounds") s = Read(v, key, t.rounds);
    else if (key == "local_epochs") s = Read(v, key, t.local_epochs);
    else if (key == "user_rate") s = Read(v, key, t.user_rate);
    else if (key == "record_rate") s = Read(v, key, t.record_rate);
    else if (key == "batch_size") s = Read(v, key, t.batch_size);
    else if (key == "group_k") s = Read(v, key, t.group_k);
    else return Unknown("train.", key);
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::Status ParseDistribution(const json& obj, allocation::DistributionSpec& d) {
  if (!obj.is_object()) {
    return absl::InvalidArgumentError("distribution: expected object");
  }
  for (const auto& [key, v] : obj.items()) {
    absl::Status s;
    if (key == "kind") {
      std::string name;
      s = Read(v, key, name);
      if (s.ok()) {
        absl::StatusOr<allocation::DistributionSpec::Kind> kind =
            allocation::ParseDistributionKind(name);
        if (!kind.ok()) return kind.status();
        d.kind = *kind;
      }
    } else if (key == "alpha_users") {
      s = Read(v, key, d.alpha_users);
    } else if (key == "alpha_silos") {
      s = Read(v, key, d.alpha_silos);
    } else if (key == "primary_fraction") {
      s = Read(v, key, d.primary_fraction);
    } else if (key == "min_records_per_pair") {
      s = Read(v, key, d.min_records_per_pair);
    } else {
      return Unknown("distribution.", key);
    }
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::Status ParseDataset(const json& obj, data::SyntheticSpec& d) {
  if (!obj.is_object()) return absl::InvalidArgumentError("dataset: expected object");
  for (const auto& [key, v] : obj.items()) {
    absl::Status s;
    if (key == "dim") s = Read(v, key, d.dim);
    else if (key == "num_classes") s = Read(v, key, d.num_classes);
    else if (key == "separation") s = Read(v, key, d.separation);
    else if (key == "two_labels_per_user") s = Read(v, key, d.two_labels_per_user);
    else return Unknown("dataset.", key);
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::Status ParseModel(const json& obj, fl::ModelSpec& m) {
  if (!obj.is_object()) return absl::InvalidArgumentError("model: expected object");
  for (const auto& [key, v] : obj.items()) {
    absl::Status s;
    if (key == "kind") s = Read(v, key, m.kind);
    else if (key == "hidden") s = Read(v, key, m.hidden);
    else return Unknown("model.", key);
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

json MaybeInfinite(double v) { return std::isinf(v) ? json("inf") : json(v); }

double Mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / v.size();
}

// Sample standard deviation; 0 for a single value.
double StdDev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

bool SecureCapable(fl::Algorithm a, bool optimal_weights) {
  return a == fl::Algorithm::kAvgWeighted ||
         (a == fl::Algorithm::kAvgSubsampled && optimal_weights);
}

using Clock = std::chrono::steady_clock;

}  // namespace

std::vector<std::string> ValidateConfig(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  absl::StatusOr<fl::Algorithm> algorithm = fl::ParseAlgorithm(c.algorithm);
  if (!algorithm.ok()) errors.emplace_back(algorithm.status().message());
  if (absl::Status s = fl::ValidateTrainConfig(c.train); !s.ok()) {
    errors.emplace_back(s.message());
  }
  if (c.distribution.alpha_users < 0 || c.distribution.alpha_silos < 0) {
    errors.emplace_back("zipf exponents must be non-negative");
  }
  if (!(c.distribution.primary_fraction > 0 && c.distribution.primary_fraction <= 1)) {
    errors.emplace_back("primary_fraction must lie in (0, 1]");
  }
  if (c.num_users < 1) errors.emplace_back("num_users must be at least 1");
  if (c.num_silos < 1) errors.emplace_back("num_silos must be at least 1");
  if (c.num_records < 2) {
    errors.emplace_back("num_records must be at least 2 (train and test)");
  }
  if (absl::Status s = data::ValidateSpec(c.dataset); !s.ok()) {
    errors.emplace_back(s.message());
  }
  if (c.model.kind != "logreg" && c.model.kind != "mlp") {
    errors.emplace_back(absl::StrFormat("unknown model kind '%s'", c.model.kind));
  }
  if (c.model.kind == "mlp" && c.model.hidden < 1) {
    errors.emplace_back("model.hidden must be at least 1");
  }
  if (!(c.delta > 0 && c.delta < 1)) errors.emplace_back("delta must lie in (0, 1)");
  if (c.repetitions < 1) errors.emplace_back("repetitions must be at least 1");
  if (c.secure) {
    if (algorithm.ok() && !SecureCapable(*algorithm, c.optimal_weights)) {
      errors.emplace_back(
          "secure mode computes count-weighted averages: use avg-w, or avg-sub "
          "with optimal_weights");
    }
    if (c.key_bits < secure::kMinKeyBits) {
      errors.emplace_back(
          absl::StrFormat("key_bits must be at least %d", secure::kMinKeyBits));
    }
    if (!(c.precision > 0) || !std::isfinite(c.precision)) {
      errors.emplace_back("precision must be positive");
    }
    if (c.n_max < 1) errors.emplace_back("n_max must be at least 1");
    for (int64_t v : c.count_set) {
      if (v < 1) {
        errors.emplace_back("count_set entries must be at least 1");
        break;
      }
    }
  }
  return errors;
}

absl::StatusOr<ExperimentConfig> ParseConfig(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrFormat("malformed JSON: %s", e.what()));
  }
  if (!root.is_object()) return absl::InvalidArgumentError("config must be an object");
  ExperimentConfig c;
  for (const auto& [key, v] : root.items()) {
    absl::Status s;
    if (key == "algorithm") s = Read(v, key, c.algorithm);
    else if (key == "train") s = ParseTrain(v, c.train);
    else if (key == "optimal_weights") s = Read(v, key, c.optimal_weights);
    else if (key == "distribution") s = ParseDistribution(v, c.distribution);
    else if (key == "num_records") s = Read(v, key, c.num_records);
    else if (key == "num_users") s = Read(v, key, c.num_users);
    else if (key == "num_silos") s = Read(v, key, c.num_silos);
    else if (key == "dataset") s = ParseDataset(v, c.dataset);
    else if (key == "model") s = ParseModel(v, c.model);
    else if (key == "delta") s = Read(v, key, c.delta);
    else if (key == "repetitions") s = Read(v, key, c.repetitions);
    else if (key == "secure") s = Read(v, key, c.secure);
    else if (key == "key_bits") s = Read(v, key, c.key_bits);
    else if (key == "precision") s = Read(v, key, c.precision);
    else if (key == "n_max") s = Read(v, key, c.n_max);
    else if (key == "count_set") s = Read(v, key, c.count_set);
    else if (key == "record_wall_time") s = Read(v, key, c.record_wall_time);
    else if (key == "seed") s = Read(v, key, c.seed);
    else if (key == "output_dir") s = Read(v, key, c.output_dir);
    else return Unknown("", key);
    if (!s.ok()) return s;
  }
  return c;
}

std::string ConfigToJson(const ExperimentConfig& c) {
  const fl::TrainConfig& t = c.train;
  json j = {
      {"algorithm", c.algorithm},
      {"train",
       {{"eta_l", t.eta_l},
        {"eta_g", t.eta_g},
        {"clip", MaybeInfinite(t.clip)},
        {"sigma", t.sigma},
        {"rounds", t.rounds},
        {"local_epochs", t.local_epochs},
        {"user_rate", t.user_rate},
        {"record_rate", t.record_rate},
        {"batch_size", t.batch_size},
        {"group_k", t.group_k}}},
      {"optimal_weights", c.optimal_weights},
      {"distribution",
       {{"kind", allocation::DistributionKindName(c.distribution.kind)},
        {"alpha_users", c.distribution.alpha_users},
        {"alpha_silos", c.distribution.alpha_silos},
        {"primary_fraction", c.distribution.primary_fraction},
        {"min_records_per_pair", c.distribution.min_records_per_pair}}},
      {"num_records", c.num_records},
      {"num_users", c.num_users},
      {"num_silos", c.num_silos},
      {"dataset",
       {{"dim", c.dataset.dim},
        {"num_classes", c.dataset.num_classes},
        {"separation", c.dataset.separation},
        {"two_labels_per_user", c.dataset.two_labels_per_user}}},
      {"model", {{"kind", c.model.kind}, {"hidden", c.model.hidden}}},
      {"delta", c.delta},
      {"repetitions", c.repetitions},
      {"secure", c.secure},
      {"key_bits", c.key_bits},
      {"precision", c.precision},
      {"n_max", c.n_max},
      {"count_set", c.count_set},
      {"record_wall_time", c.record_wall_time},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
  return j.dump(2);
}

absl::StatusOr<double> EpsilonAfter(const ExperimentConfig& c, int64_t rounds) {
  absl::StatusOr<fl::Algorithm> algorithm = fl::ParseAlgorithm(c.algorithm);
  if (!algorithm.ok()) return algorithm.status();
  if (rounds <= 0) return 0.0;
  const fl::TrainConfig& t = c.train;
  if (*algorithm == fl::Algorithm::kDefault || t.sigma == 0.0) return kInf;
  switch (*algorithm) {
    case fl::Algorithm::kAvgSubsampled: {
      absl::StatusOr<accounting::EpsilonAtOrder> e =
          accounting::BudgetUldpAvgSubsampled(t.sigma, t.user_rate, rounds, c.delta);
      if (!e.ok()) return e.status();
      return e->epsilon;
    }
    case fl::Algorithm::kGroup: {
      const int64_t steps =
          rounds * t.local_epochs * fl::DpSgdStepsPerEpoch(t.record_rate);
      absl::StatusOr<accounting::GroupBudget> e = accounting::BudgetUldpGroup(
          t.sigma, t.record_rate, steps, t.group_k, c.delta);
      if (!e.ok()) return e.status();
      return e->epsilon;
    }
    default: {
      absl::StatusOr<accounting::EpsilonAtOrder> e =
          accounting::BudgetUldpNaiveAvg(t.sigma, rounds, c.delta);
      if (!e.ok()) return e.status();
      return e->epsilon;
    }
  }
}

absl::StatusOr<RunResult> RunOnce(const ExperimentConfig& c, int32_t repetition) {
  if (std::vector<std::string> errors = ValidateConfig(c); !errors.empty()) {
    return absl::InvalidArgumentError(absl::StrJoin(errors, "; "));
  }
  const fl::Algorithm algorithm = *fl::ParseAlgorithm(c.algorithm);
  const uint64_t seed =
      DeriveStream(c.seed, {kTagRepetition, static_cast<uint64_t>(repetition)})();

  const int64_t num_test = data::TestSplitSize(c.num_records);
  allocation::DistributionSpec dist = c.distribution;
  dist.seed = seed;
  absl::StatusOr<allocation::RecordAllocation> alloc =
      allocation::Allocate(dist, c.num_records - num_test, c.num_users, c.num_silos);
  if (!alloc.ok()) return alloc.status();
  absl::StatusOr<data::SyntheticDataset> dataset =
      data::GenerateDataset(c.dataset, *alloc, num_test, seed);
  if (!dataset.ok()) return dataset.status();

  std::optional<allocation::ContributionFlags> flags;
  if (algorithm == fl::Algorithm::kGroup) {
    absl::StatusOr<allocation::ContributionFlags> f =
        allocation::MakeContributionFlags(*alloc, c.train.group_k, seed);
    if (!f.ok()) return f.status();
    flags = *std::move(f);
  }
  absl::StatusOr<fl::FederatedData> fed =
      fl::Partition(dataset->train, *alloc, flags ? &flags->keep : nullptr);
  if (!fed.ok()) return fed.status();
  const bool optimal = algorithm == fl::Algorithm::kAvgWeighted ||
                       (algorithm == fl::Algorithm::kAvgSubsampled && c.optimal_weights);
  const fl::WeightMatrix weights =
      optimal ? fl::OptimalWeights(fed->histogram) : fl::UniformWeights(fed->histogram);

  absl::StatusOr<std::unique_ptr<fl::Model>> model =
      fl::MakeModel(c.model, c.dataset.dim, dataset->num_classes);
  if (!model.ok()) return model.status();
  Rng init = DeriveStream(seed, {kTagModelInit});
  fl::Vector params = (*model)->InitialParams(init);

  std::unique_ptr<secure::WeightingSession> session;
  RunResult result;
  if (c.secure) {
    secure::ProtocolConfig pc;
    pc.key_bits = c.key_bits;
    pc.precision = c.precision;
    pc.n_max = c.n_max;
    pc.count_set = c.count_set;
    pc.seed = seed;
    absl::StatusOr<std::unique_ptr<secure::WeightingSession>> s =
        secure::WeightingSession::Setup(pc, fed->histogram);
    if (!s.ok()) return s.status();
    session = *std::move(s);
    result.secure_tolerance = session->Tolerance();
  }

  fl::RoundContext ctx{model->get(), &*fed, &weights, c.train, seed, 0};
  const double users_silos = static_cast<double>(c.num_users) * c.num_silos;
  for (int32_t round = 1; round <= c.train.rounds; ++round) {
    const Clock::time_point start = Clock::now();
    ctx.round = round;
    MetricsRow row;
    row.round = round;
    row.delta = c.delta;
    if (session != nullptr) {
      const bool subsampled = algorithm == fl::Algorithm::kAvgSubsampled;
      const std::vector<bool> sampled =
          subsampled ? fl::SampleUsers(ctx) : std::vector<bool>{};
      absl::StatusOr<fl::SiloContributions> contributions =
          fl::UserContributions(params, ctx, sampled);
      if (!contributions.ok()) return contributions.status();
      absl::StatusOr<fl::Vector> decoded = session->AggregateRound(
          round, contributions->clipped, contributions->noise, sampled);
      if (!decoded.ok()) return decoded.status();
      fl::Vector plain = fl::WeightedSum(*contributions, weights, params.size());
      for (const fl::Vector& z : contributions->noise) plain += z;
      result.max_secure_error = std::max(
          result.max_secure_error, (*decoded - plain).cwiseAbs().maxCoeff());
      const double rate = subsampled ? c.train.user_rate : 1.0;
      params += c.train.eta_g / (rate * users_silos) * *decoded;
      row.alpha_bar = fl::ComputeClippingDiagnostics(contributions->norms, weights,
                                                     c.train.clip)
                          .alpha_bar;
    } else {
      absl::StatusOr<fl::RoundResult> r = fl::RunRound(algorithm, params, ctx);
      if (!r.ok()) return r.status();
      params = std::move(r->params);
      row.alpha_bar = r->diagnostics ? r->diagnostics->alpha_bar : kNaN;
    }
    absl::StatusOr<fl::Evaluation> eval = (*model)->Evaluate(params, dataset->test);
    if (!eval.ok()) return eval.status();
    row.test_loss = eval->loss;
    row.test_metric = eval->accuracy;
    absl::StatusOr<double> eps = EpsilonAfter(c, round);
    if (!eps.ok()) return eps.status();
    row.epsilon = *eps;
    row.wall_ms = c.record_wall_time
                      ? std::chrono::duration<double, std::milli>(Clock::now() - start)
                            .count()
                      : 0.0;
    result.rows.push_back(row);
  }
  result.final_params = std::move(params);
  return result;
}

absl::StatusOr<ExperimentResult> RunExperiment(const ExperimentConfig& c) {
  if (std::vector<std::string> errors = ValidateConfig(c); !errors.empty()) {
    return absl::InvalidArgumentError(absl::StrJoin(errors, "; "));
  }
  ExperimentResult out;
  for (int32_t r = 0; r < c.repetitions; ++r) {
    absl::StatusOr<RunResult> run = RunOnce(c, r);
    if (!run.ok()) return run.status();
    out.runs.push_back(*std::move(run));
  }
  for (int32_t t = 0; t < c.train.rounds; ++t) {
    std::vector<double> loss, metric;
    for (const RunResult& run : out.runs) {
      loss.push_back(run.rows[t].test_loss);
      metric.push_back(run.rows[t].test_metric);
    }
    out.summary.push_back({t + 1, Mean(loss), StdDev(loss), Mean(metric),
                           StdDev(metric), out.runs[0].rows[t].epsilon});
  }
  if (!c.output_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(c.output_dir, ec);
    if (ec) {
      return absl::InternalError(
          absl::StrFormat("cannot create %s: %s", c.output_dir, ec.message()));
    }
    const std::filesystem::path dir(c.output_dir);
    for (size_t r = 0; r < out.runs.size(); ++r) {
      std::ofstream f(dir / absl::StrFormat("metrics_%d.csv", r));
      WriteMetricsCsv(out.runs[r].rows, f);
    }
    std::ofstream summary(dir / "summary.csv");
    WriteSummaryCsv(out.summary, summary);
    std::ofstream config(dir / "config.json");
    config << ConfigToJson(c) << "\n";
    if (!summary || !config) return absl::InternalError("failed to write outputs");
  }
  return out;
}

void WriteMetricsCsv(std::span<const MetricsRow> rows, std::ostream& out) {
  out << "round,test_loss,test_metric,epsilon,delta,alpha_bar,wall_ms\n";
  for (const MetricsRow& r : rows) {
    out << absl::StrFormat("%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n", r.round,
                           r.test_loss, r.test_metric, r.epsilon, r.delta,
                           r.alpha_bar, r.wall_ms);
  }
}

void WriteSummaryCsv(std::span<const SummaryRow> rows, std::ostream& out) {
  out << "round,loss_mean,loss_std,metric_mean,metric_std,epsilon\n";
  for (const SummaryRow& r : rows) {
    out << absl::StrFormat("%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.round,
                           r.loss_mean, r.loss_std, r.metric_mean, r.metric_std,
                           r.epsilon);
  }
}

absl::StatusOr<std::vector<ConversionRow>> SweepGroupConversion(
    double sigma, double q, int64_t steps, double delta,
    std::span<const int64_t> k_list) {
  const std::vector<double> orders = accounting::DefaultOrders();
  absl::StatusOr<accounting::RdpCurve> curve =
      accounting::SubsampledGaussianCurve({sigma, q, steps}, orders);
  if (!curve.ok()) return curve.status();
  std::vector<ConversionRow> rows;
  for (int64_t k : k_list) {
    ConversionRow row;
    row.k = k;
    absl::StatusOr<accounting::GroupBudget> strict =
        accounting::BudgetUldpGroup(sigma, q, steps, k, delta);
    absl::StatusOr<accounting::GroupBudget> relaxed = accounting::BudgetUldpGroup(
        sigma, q, steps, k, delta, accounting::OrderCondition::kRelaxed);
    // No admissible order under the strict condition means no finite bound.
    row.epsilon_rdp = strict.ok() ? strict->epsilon : kInf;
    row.epsilon_rdp_relaxed = relaxed.ok() ? relaxed->epsilon : kInf;
    if (!strict.ok() && strict.status().code() != absl::StatusCode::kOutOfRange) {
      return strict.status();
    }
    absl::StatusOr<accounting::NormalGroupResult> normal =
        accounting::NormalGroupEpsilonSearch(*curve, delta, k);
    if (!normal.ok()) return normal.status();
    row.epsilon_normal = normal->epsilon;
    rows.push_back(row);
  }
  return rows;
}

void WriteConversionCsv(std::span<const ConversionRow> rows, std::ostream& out) {
  out << "k,epsilon_rdp,epsilon_normal,epsilon_rdp_relaxed\n";
  for (const ConversionRow& r : rows) {
    out << absl::StrFormat("%d,%.10g,%.10g,%.10g\n", r.k, r.epsilon_rdp,
                           r.epsilon_normal, r.epsilon_rdp_relaxed);
  }
}

absl::StatusOr<std::vector<WeightingRow>> CompareWeighting(
    const ExperimentConfig& config) {
  ExperimentConfig uniform = config;
  uniform.algorithm = "avg";
  uniform.secure = false;
  uniform.output_dir.clear();
  ExperimentConfig optimal = uniform;
  optimal.algorithm = "avg-w";
  absl::StatusOr<ExperimentResult> a = RunExperiment(uniform);
  if (!a.ok()) return a.status();
  absl::StatusOr<ExperimentResult> b = RunExperiment(optimal);
  if (!b.ok()) return b.status();
  std::vector<WeightingRow> rows;
  for (size_t t = 0; t < a->summary.size(); ++t) {
    rows.push_back({a->summary[t].round, a->summary[t].loss_mean,
                    b->summary[t].loss_mean, a->summary[t].metric_mean,
                    b->summary[t].metric_mean});
  }
  return rows;
}

void WriteWeightingCsv(std::span<const WeightingRow> rows, std::ostream& out) {
  out << "round,loss_uniform,loss_optimal,metric_uniform,metric_optimal\n";
  for (const WeightingRow& r : rows) {
    out << absl::StrFormat("%d,%.10g,%.10g,%.10g,%.10g\n", r.round, r.loss_uniform,
                           r.loss_optimal, r.metric_uniform, r.metric_optimal);
  }
}

}  // namespace uldp::harness
