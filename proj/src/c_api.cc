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

#include "uldp/uldp.h"

#include <cmath>
#include <exception>
#include <functional>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_format.h"
#include "json.hpp"
#include "uldp/accounting.h"
#include "uldp/allocation.h"
#include "uldp/dataset.h"
#include "uldp/harness.h"
#include "uldp/secure.h"

struct uldp_output {
  std::vector<std::pair<std::string, std::string>> artifacts;
  std::string error;
};

namespace {

using json = nlohmann::json;
using Artifacts = std::vector<std::pair<std::string, std::string>>;

uldp_status ToStatus(const absl::Status& s) {
  switch (s.code()) {
    case absl::StatusCode::kOk:
      return ULDP_OK;
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kOutOfRange:
      return ULDP_ERROR_CONFIG;
    case absl::StatusCode::kFailedPrecondition:
      return ULDP_ERROR_PRECONDITION;
    default:
      return ULDP_ERROR_INTERNAL;
  }
}

// Runs `body`, converting failures (including exceptions) into an output
// that carries the message.
uldp_status Run(const char* request, uldp_output** out,
                const std::function<absl::Status(const std::string&, Artifacts&)>& body) {
  if (out == nullptr) return ULDP_ERROR_NULL_ARGUMENT;
  *out = new (std::nothrow) uldp_output;
  if (*out == nullptr) return ULDP_ERROR_INTERNAL;
  if (request == nullptr) {
    (*out)->error = "request is NULL";
    return ULDP_ERROR_NULL_ARGUMENT;
  }
  absl::Status status;
  try {
    status = body(request, (*out)->artifacts);
  } catch (const std::exception& e) {
    status = absl::InternalError(e.what());
  }
  if (!status.ok()) {
    (*out)->artifacts.clear();
    (*out)->error = std::string(status.message());
  }
  return ToStatus(status);
}

absl::StatusOr<json> ParseObject(const std::string& text,
                                 const std::set<std::string>& allowed) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrFormat("malformed JSON: %s", e.what()));
  }
  if (!root.is_object()) return absl::InvalidArgumentError("request must be an object");
  for (const auto& [key, unused] : root.items()) {
    if (!allowed.contains(key)) {
      return absl::InvalidArgumentError(absl::StrFormat("unknown key '%s'", key));
    }
  }
  return root;
}

template <typename T>
absl::Status Get(const json& obj, const std::string& key, T& out) {
  if (!obj.contains(key)) return absl::OkStatus();
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrFormat("%s: %s", key, e.what()));
  }
  return absl::OkStatus();
}

// JSON has no infinity; saturated values are written as the string "inf".
json Number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

absl::StatusOr<uldp::harness::ExperimentConfig> ValidConfig(const std::string& text) {
  absl::StatusOr<uldp::harness::ExperimentConfig> config =
      uldp::harness::ParseConfig(text);
  if (!config.ok()) return config.status();
  const std::vector<std::string> errors = uldp::harness::ValidateConfig(*config);
  if (!errors.empty()) {
    std::string joined;
    for (const std::string& e : errors) joined += (joined.empty() ? "" : "; ") + e;
    return absl::InvalidArgumentError(joined);
  }
  // Artifacts are returned to the caller, never written here.
  config->output_dir.clear();
  return config;
}

absl::Status Simulate(const std::string& text, Artifacts& out) {
  absl::StatusOr<uldp::harness::ExperimentConfig> config = ValidConfig(text);
  if (!config.ok()) return config.status();
  absl::StatusOr<uldp::harness::ExperimentResult> result =
      uldp::harness::RunExperiment(*config);
  if (!result.ok()) return result.status();
  for (size_t r = 0; r < result->runs.size(); ++r) {
    std::ostringstream csv;
    uldp::harness::WriteMetricsCsv(result->runs[r].rows, csv);
    out.emplace_back(absl::StrFormat("metrics_%d.csv", r), csv.str());
  }
  std::ostringstream summary;
  uldp::harness::WriteSummaryCsv(result->summary, summary);
  out.emplace_back("summary.csv", summary.str());
  out.emplace_back("config.json", uldp::harness::ConfigToJson(*config));
  return absl::OkStatus();
}

absl::Status CompareWeighting(const std::string& text, Artifacts& out) {
  absl::StatusOr<uldp::harness::ExperimentConfig> config = ValidConfig(text);
  if (!config.ok()) return config.status();
  absl::StatusOr<std::vector<uldp::harness::WeightingRow>> rows =
      uldp::harness::CompareWeighting(*config);
  if (!rows.ok()) return rows.status();
  std::ostringstream csv;
  uldp::harness::WriteWeightingCsv(*rows, csv);
  out.emplace_back("weighting.csv", csv.str());
  return absl::OkStatus();
}

absl::Status NormalizeConfig(const std::string& text, Artifacts& out) {
  absl::StatusOr<uldp::harness::ExperimentConfig> config =
      uldp::harness::ParseConfig(text);
  if (!config.ok()) return config.status();
  const std::vector<std::string> errors = uldp::harness::ValidateConfig(*config);
  if (!errors.empty()) {
    std::string joined;
    for (const std::string& e : errors) joined += (joined.empty() ? "" : "; ") + e;
    return absl::InvalidArgumentError(joined);
  }
  out.emplace_back("config.json", uldp::harness::ConfigToJson(*config));
  return absl::OkStatus();
}

absl::Status Account(const std::string& text, Artifacts& out) {
  absl::StatusOr<json> req = ParseObject(
      text, {"mechanism", "sigma", "q", "steps", "k", "delta", "orders", "k_list"});
  if (!req.ok()) return req.status();
  std::string mechanism = "naive-avg";
  double sigma = 1.0, q = 1.0, delta = 1e-5;
  int64_t steps = 1, k = 1;
  std::vector<double> orders;
  std::vector<int64_t> k_list;
  for (absl::Status s :
       {Get(*req, "mechanism", mechanism), Get(*req, "sigma", sigma), Get(*req, "q", q),
        Get(*req, "steps", steps), Get(*req, "k", k), Get(*req, "delta", delta),
        Get(*req, "orders", orders), Get(*req, "k_list", k_list)}) {
    if (!s.ok()) return s;
  }
  if (!(sigma > 0)) return absl::InvalidArgumentError("sigma must be positive");
  if (!(q > 0 && q <= 1)) return absl::InvalidArgumentError("q must lie in (0, 1]");
  if (steps < 1) return absl::InvalidArgumentError("steps must be at least 1");
  if (k < 1) return absl::InvalidArgumentError("k must be at least 1");
  if (!(delta > 0 && delta < 1)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  const bool custom_grid = !orders.empty();
  if (!custom_grid) orders = uldp::accounting::DefaultOrders();

  json line = {{"mechanism", mechanism}, {"sigma", sigma}, {"q", q},
               {"steps", steps},         {"delta", delta}};
  if (mechanism == "naive-avg") {
    // With q < 1 every step samples users, as in sub-sampled averaging.
    absl::StatusOr<uldp::accounting::EpsilonAtOrder> eps;
    if (custom_grid) {
      absl::StatusOr<uldp::accounting::RdpCurve> curve =
          uldp::accounting::SubsampledGaussianCurve({sigma, q, steps}, orders);
      if (!curve.ok()) return curve.status();
      eps = uldp::accounting::RdpToDp(*curve, delta);
    } else if (q < 1) {
      eps = uldp::accounting::BudgetUldpAvgSubsampled(sigma, q, steps, delta);
    } else {
      eps = uldp::accounting::BudgetUldpNaiveAvg(sigma, steps, delta);
    }
    if (!eps.ok()) return eps.status();
    line["epsilon"] = Number(eps->epsilon);
    line["alpha"] = eps->alpha;
  } else if (mechanism == "group") {
    line["k"] = k;
    if (custom_grid) {
      absl::StatusOr<uldp::accounting::RdpCurve> curve =
          uldp::accounting::SubsampledGaussianCurve({sigma, q, steps}, orders);
      if (!curve.ok()) return curve.status();
      const int c = uldp::accounting::FloorLog2(k);
      absl::StatusOr<uldp::accounting::RdpCurve> group =
          uldp::accounting::GroupRdpConvert(*curve, c);
      if (!group.ok()) return group.status();
      absl::StatusOr<uldp::accounting::EpsilonAtOrder> eps =
          uldp::accounting::RdpToDp(*group, delta);
      if (!eps.ok()) return eps.status();
      line["epsilon"] = Number(eps->epsilon);
      line["alpha"] = eps->alpha;
      line["effective_k"] = int64_t{1} << c;
      line["lower_bound"] = (int64_t{1} << c) != k;
    } else {
      absl::StatusOr<uldp::accounting::GroupBudget> eps =
          uldp::accounting::BudgetUldpGroup(sigma, q, steps, k, delta);
      if (!eps.ok()) return eps.status();
      line["epsilon"] = Number(eps->epsilon);
      line["alpha"] = eps->alpha;
      line["effective_k"] = eps->effective_k;
      line["lower_bound"] = eps->lower_bound;
    }
  } else if (mechanism == "raw-curve") {
    // Record-level epsilon of the composed curve on the chosen grid.
    absl::StatusOr<uldp::accounting::RdpCurve> curve =
        uldp::accounting::SubsampledGaussianCurve({sigma, q, steps}, orders);
    if (!curve.ok()) return curve.status();
    absl::StatusOr<uldp::accounting::EpsilonAtOrder> eps =
        uldp::accounting::RdpToDp(*curve, delta);
    if (!eps.ok()) return eps.status();
    line["epsilon"] = Number(eps->epsilon);
    line["alpha"] = eps->alpha;
    json points = json::array();
    for (size_t i = 0; i < curve->orders.size(); ++i) {
      points.push_back({curve->orders[i], Number(curve->rhos[i])});
    }
    line["curve"] = std::move(points);
  } else {
    return absl::InvalidArgumentError(absl::StrFormat(
        "unknown mechanism '%s' (naive-avg, group, raw-curve)", mechanism));
  }
  out.emplace_back("account.jsonl", line.dump() + "\n");

  if (!k_list.empty()) {
    for (int64_t v : k_list) {
      if (v < 1) return absl::InvalidArgumentError("k_list entries must be at least 1");
    }
    absl::StatusOr<std::vector<uldp::harness::ConversionRow>> rows =
        uldp::harness::SweepGroupConversion(sigma, q, steps, delta, k_list);
    if (!rows.ok()) return rows.status();
    std::ostringstream csv;
    uldp::harness::WriteConversionCsv(*rows, csv);
    out.emplace_back("group_sweep.csv", csv.str());
  }
  return absl::OkStatus();
}

absl::Status Allocate(const std::string& text, Artifacts& out) {
  absl::StatusOr<json> req =
      ParseObject(text, {"distribution", "num_records", "num_users", "num_silos",
                         "seed", "features", "dataset"});
  if (!req.ok()) return req.status();
  bool features = false;
  if (absl::Status s = Get(*req, "features", features); !s.ok()) return s;
  req->erase("features");
  // The remaining keys are a subset of the experiment config.
  absl::StatusOr<uldp::harness::ExperimentConfig> config =
      uldp::harness::ParseConfig(req->dump());
  if (!config.ok()) return config.status();
  if (absl::Status s = uldp::data::ValidateSpec(config->dataset); !s.ok()) return s;
  uldp::allocation::DistributionSpec dist = config->distribution;
  dist.seed = config->seed;
  absl::StatusOr<uldp::allocation::RecordAllocation> alloc = uldp::allocation::Allocate(
      dist, config->num_records, config->num_users, config->num_silos);
  if (!alloc.ok()) return alloc.status();

  std::ostringstream csv;
  if (!features) {
    uldp::allocation::WriteAllocationCsv(*alloc, csv);
  } else {
    // The generator insists on a test split; one held-out row is discarded.
    absl::StatusOr<uldp::data::SyntheticDataset> data =
        uldp::data::GenerateDataset(config->dataset, *alloc, 1, config->seed);
    if (!data.ok()) return data.status();
    csv << "record_id,user_id,silo_id";
    for (int32_t j = 0; j < config->dataset.dim; ++j) csv << ",x" << j;
    csv << ",label\n";
    for (size_t i = 0; i < alloc->records.size(); ++i) {
      csv << i << "," << alloc->records[i].user << "," << alloc->records[i].silo;
      for (int32_t j = 0; j < config->dataset.dim; ++j) {
        csv << absl::StrFormat(",%.17g", data->train.features(i, j));
      }
      csv << "," << data->train.labels[i] << "\n";
    }
  }
  out.emplace_back("allocation.csv", csv.str());
  out.emplace_back("histogram.json",
                   uldp::allocation::HistogramJson(uldp::allocation::HistogramOf(*alloc)) +
                       "\n");
  return absl::OkStatus();
}

absl::Status ProtocolBench(const std::string& text, Artifacts& out) {
  absl::StatusOr<json> req =
      ParseObject(text, {"silos", "users", "dim", "rounds", "key_bits", "precision",
                         "n_max", "records_per_pair", "seed"});
  if (!req.ok()) return req.status();
  uldp::secure::BenchScenario sc;
  for (absl::Status s :
       {Get(*req, "silos", sc.silos), Get(*req, "users", sc.users),
        Get(*req, "dim", sc.dim), Get(*req, "rounds", sc.rounds),
        Get(*req, "key_bits", sc.key_bits), Get(*req, "precision", sc.precision),
        Get(*req, "n_max", sc.n_max), Get(*req, "records_per_pair", sc.records_per_pair),
        Get(*req, "seed", sc.seed)}) {
    if (!s.ok()) return s;
  }
  if (sc.key_bits < uldp::secure::kMinKeyBits) {
    return absl::InvalidArgumentError(
        absl::StrFormat("key_bits must be at least %d", uldp::secure::kMinKeyBits));
  }
  absl::StatusOr<uldp::secure::BenchReport> report = uldp::secure::BenchPhases(sc);
  if (!report.ok()) return report.status();
  std::ostringstream timings, transcript;
  uldp::secure::WriteTimingsCsv(report->timings, timings);
  uldp::secure::WriteTranscriptJsonl(report->transcript, transcript);
  json correctness = {
      {"silos", sc.silos},
      {"users", sc.users},
      {"dim", sc.dim},
      {"num_params", report->num_params},
      {"rounds", sc.rounds},
      {"key_bits", sc.key_bits},
      {"precision", sc.precision},
      {"max_abs_error", report->max_abs_error},
      {"tolerance", report->tolerance},
      {"correct", report->correct},
  };
  json phases = json::object();
  for (const uldp::secure::PhaseTiming& t : report->timings) {
    if (!phases.contains(t.phase)) {
      phases[t.phase] = uldp::secure::TotalPhaseMs(report->timings, t.phase);
    }
  }
  correctness["phase_ms"] = std::move(phases);
  out.emplace_back("timings.csv", timings.str());
  out.emplace_back("correctness.json", correctness.dump(2) + "\n");
  out.emplace_back("transcript.jsonl", transcript.str());
  return absl::OkStatus();
}

absl::Status SweepGdp(const std::string& text, Artifacts& out) {
  absl::StatusOr<json> req = ParseObject(text, {"sigma", "q", "steps", "delta", "k_list"});
  if (!req.ok()) return req.status();
  double sigma = 5.0, q = 0.01, delta = 1e-5;
  int64_t steps = 100000;
  std::vector<int64_t> k_list = {1, 2, 4, 8, 16, 32, 64};
  for (absl::Status s : {Get(*req, "sigma", sigma), Get(*req, "q", q),
                         Get(*req, "steps", steps), Get(*req, "delta", delta),
                         Get(*req, "k_list", k_list)}) {
    if (!s.ok()) return s;
  }
  if (!(sigma > 0) || !(q > 0 && q <= 1) || steps < 1 || !(delta > 0 && delta < 1)) {
    return absl::InvalidArgumentError(
        "need sigma > 0, q in (0, 1], steps >= 1 and delta in (0, 1)");
  }
  for (int64_t v : k_list) {
    if (v < 1) return absl::InvalidArgumentError("k_list entries must be at least 1");
  }
  absl::StatusOr<std::vector<uldp::harness::ConversionRow>> rows =
      uldp::harness::SweepGroupConversion(sigma, q, steps, delta, k_list);
  if (!rows.ok()) return rows.status();
  std::ostringstream csv;
  uldp::harness::WriteConversionCsv(*rows, csv);
  out.emplace_back("group_sweep.csv", csv.str());
  return absl::OkStatus();
}

}  // namespace

extern "C" {

const char* uldp_version(void) { return "1.0.0"; }

const char* uldp_status_name(uldp_status status) {
  switch (status) {
    case ULDP_OK:
      return "ok";
    case ULDP_ERROR_INTERNAL:
      return "internal error";
    case ULDP_ERROR_CONFIG:
      return "config error";
    case ULDP_ERROR_PRECONDITION:
      return "precondition failure";
    case ULDP_ERROR_NULL_ARGUMENT:
      return "null argument";
  }
  return "unknown status";
}

uldp_status uldp_simulate(const char* config_json, uldp_output** out) {
  return Run(config_json, out, Simulate);
}

uldp_status uldp_compare_weighting(const char* config_json, uldp_output** out) {
  return Run(config_json, out, CompareWeighting);
}

uldp_status uldp_normalize_config(const char* config_json, uldp_output** out) {
  return Run(config_json, out, NormalizeConfig);
}

uldp_status uldp_account(const char* request_json, uldp_output** out) {
  return Run(request_json, out, Account);
}

uldp_status uldp_allocate(const char* request_json, uldp_output** out) {
  return Run(request_json, out, Allocate);
}

uldp_status uldp_protocol_bench(const char* request_json, uldp_output** out) {
  return Run(request_json, out, ProtocolBench);
}

uldp_status uldp_sweep_gdp(const char* request_json, uldp_output** out) {
  return Run(request_json, out, SweepGdp);
}

size_t uldp_output_count(const uldp_output* out) {
  return out == nullptr ? 0 : out->artifacts.size();
}

const char* uldp_output_name(const uldp_output* out, size_t index) {
  if (out == nullptr || index >= out->artifacts.size()) return nullptr;
  return out->artifacts[index].first.c_str();
}

const char* uldp_output_text(const uldp_output* out, size_t index, size_t* length) {
  if (out == nullptr || index >= out->artifacts.size()) return nullptr;
  const std::string& text = out->artifacts[index].second;
  if (length != nullptr) *length = text.size();
  return text.c_str();
}

const char* uldp_output_find(const uldp_output* out, const char* name) {
  if (out == nullptr || name == nullptr) return nullptr;
  for (const auto& [n, text] : out->artifacts) {
    if (n == name) return text.c_str();
  }
  return nullptr;
}

const char* uldp_output_error(const uldp_output* out) {
  return out == nullptr ? "" : out->error.c_str();
}

void uldp_output_free(uldp_output* out) { delete out; }

}  // extern "C"
