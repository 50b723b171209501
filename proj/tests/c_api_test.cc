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

// Exercises the shared library through its C header only.

#include "uldp/uldp.h"

#include <algorithm>
#include <memory>
#include <string>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "json.hpp"

namespace {

using ::testing::HasSubstr;
using ::testing::StartsWith;

struct Free {
  void operator()(uldp_output* out) const { uldp_output_free(out); }
};
using Output = std::unique_ptr<uldp_output, Free>;

uldp_status Call(uldp_status (*entry)(const char*, uldp_output**),
                 const std::string& request, Output& out) {
  uldp_output* raw = nullptr;
  const uldp_status status = entry(request.c_str(), &raw);
  out.reset(raw);
  return status;
}

std::string Find(const Output& out, const char* name) {
  const char* text = uldp_output_find(out.get(), name);
  return text == nullptr ? std::string() : std::string(text);
}

TEST(CApiTest, NullArguments) {
  EXPECT_EQ(uldp_sweep_gdp("{}", nullptr), ULDP_ERROR_NULL_ARGUMENT);
  uldp_output* raw = nullptr;
  EXPECT_EQ(uldp_account(nullptr, &raw), ULDP_ERROR_NULL_ARGUMENT);
  Output out(raw);
  EXPECT_THAT(uldp_output_error(out.get()), HasSubstr("NULL"));
  EXPECT_EQ(uldp_output_count(nullptr), 0u);
  EXPECT_EQ(uldp_output_name(out.get(), 0), nullptr);
  EXPECT_EQ(uldp_output_find(out.get(), "missing"), nullptr);
  uldp_output_free(nullptr);
  EXPECT_STREQ(uldp_status_name(ULDP_ERROR_PRECONDITION), "precondition failure");
  EXPECT_STRNE(uldp_version(), "");
}

TEST(CApiTest, ConfigErrorsAreReported) {
  Output out;
  EXPECT_EQ(Call(uldp_simulate, "{not json", out), ULDP_ERROR_CONFIG);
  EXPECT_THAT(uldp_output_error(out.get()), HasSubstr("malformed"));
  EXPECT_EQ(uldp_output_count(out.get()), 0u);
  EXPECT_EQ(Call(uldp_simulate, R"({"algorithm": "bogus", "num_users": 0})", out),
            ULDP_ERROR_CONFIG);
  EXPECT_THAT(uldp_output_error(out.get()), HasSubstr("bogus"));
  EXPECT_THAT(uldp_output_error(out.get()), HasSubstr("num_users"));
  EXPECT_EQ(Call(uldp_account, R"({"mechanism": "laplace"})", out), ULDP_ERROR_CONFIG);
  EXPECT_EQ(Call(uldp_account, R"({"sigmaa": 1})", out), ULDP_ERROR_CONFIG);
  EXPECT_EQ(Call(uldp_protocol_bench, R"({"key_bits": 64})", out), ULDP_ERROR_CONFIG);
  EXPECT_EQ(Call(uldp_allocate, R"({"algorithm": "avg"})", out), ULDP_ERROR_CONFIG);
}

TEST(CApiTest, NormalizeFillsDefaults) {
  Output out;
  ASSERT_EQ(Call(uldp_normalize_config, R"({"algorithm": "default", "train": {"clip": "inf", "sigma": 0}})", out), ULDP_OK);
  const nlohmann::json config = nlohmann::json::parse(Find(out, "config.json"));
  EXPECT_EQ(config["train"]["clip"], "inf");
  EXPECT_EQ(config["model"]["kind"], "logreg");
  EXPECT_EQ(config["repetitions"], 5);
}

TEST(CApiTest, SweepAndAccount) {
  Output out;
  ASSERT_EQ(Call(uldp_sweep_gdp, R"({"k_list": [1, 2]})", out), ULDP_OK);
  const std::string sweep = Find(out, "group_sweep.csv");
  EXPECT_THAT(sweep, StartsWith("k,epsilon_rdp,epsilon_normal,epsilon_rdp_relaxed\n"
                                "1,2.850559486,2.850559486,2.850559486\n2,"));
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 3);

  ASSERT_EQ(Call(uldp_account,
                 R"({"mechanism": "raw-curve", "sigma": 5, "q": 0.01,
                     "steps": 100000, "delta": 1e-5})",
                 out),
            ULDP_OK);
  const nlohmann::json line = nlohmann::json::parse(Find(out, "account.jsonl"));
  EXPECT_NEAR(line["epsilon"].get<double>(), 2.850559486, 1e-9);
  EXPECT_GT(line["curve"].size(), 100u);

  ASSERT_EQ(Call(uldp_account,
                 R"({"mechanism": "group", "sigma": 5, "q": 0.01, "steps": 100000,
                     "k": 12, "k_list": [1]})",
                 out),
            ULDP_OK);
  const nlohmann::json group = nlohmann::json::parse(Find(out, "account.jsonl"));
  EXPECT_EQ(group["effective_k"], 8);
  EXPECT_EQ(group["lower_bound"], true);
  EXPECT_THAT(Find(out, "group_sweep.csv"), StartsWith("k,"));
}

TEST(CApiTest, AllocateWritesCsvAndHistogram) {
  Output out;
  ASSERT_EQ(Call(uldp_allocate,
                 R"({"num_records": 30, "num_users": 4, "num_silos": 3, "seed": 1,
                     "distribution": {"kind": "zipf"}})",
                 out),
            ULDP_OK);
  const std::string csv = Find(out, "allocation.csv");
  EXPECT_THAT(csv, StartsWith("record_id,user_id,silo_id\n"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
  const nlohmann::json hist = nlohmann::json::parse(Find(out, "histogram.json"));
  EXPECT_EQ(hist["num_silos"], 3);
  int64_t total = 0;
  for (const auto& row : hist["counts"]) {
    for (const auto& v : row) total += v.get<int64_t>();
  }
  EXPECT_EQ(total, 30);

  ASSERT_EQ(Call(uldp_allocate,
                 R"({"num_records": 5, "num_users": 2, "num_silos": 2,
                     "features": true, "dataset": {"dim": 3}})",
                 out),
            ULDP_OK);
  EXPECT_THAT(Find(out, "allocation.csv"),
              StartsWith("record_id,user_id,silo_id,x0,x1,x2,label\n"));
}

TEST(CApiTest, ProtocolBench) {
  Output out;
  // The default count set (every total up to 2000) does not fit a 512-bit
  // field.
  EXPECT_EQ(Call(uldp_protocol_bench, R"({"key_bits": 512, "silos": 2, "users": 3})", out),
            ULDP_ERROR_PRECONDITION);
  EXPECT_THAT(uldp_output_error(out.get()), HasSubstr("field-capacity"));
  ASSERT_EQ(Call(uldp_protocol_bench,
                 R"({"key_bits": 512, "silos": 2, "users": 3, "dim": 2, "n_max": 16})",
                 out),
            ULDP_OK);
  const nlohmann::json report = nlohmann::json::parse(Find(out, "correctness.json"));
  EXPECT_EQ(report["correct"], true);
  EXPECT_EQ(report["num_params"], 6);
  EXPECT_LE(report["max_abs_error"].get<double>(), report["tolerance"].get<double>());
  EXPECT_THAT(Find(out, "timings.csv"), StartsWith("phase,party,round,ms\n"));
  const std::string transcript = Find(out, "transcript.jsonl");
  const nlohmann::json first =
      nlohmann::json::parse(transcript.substr(0, transcript.find('\n')));
  EXPECT_EQ(first["phase"], "keyex");
  for (const char* key : {"round", "from", "to", "payload_digest", "bytes"}) {
    EXPECT_TRUE(first.contains(key)) << key;
  }
}

TEST(CApiTest, SimulateAndCompare) {
  const std::string config = R"({"num_records": 250, "num_users": 10, "num_silos": 3,
      "repetitions": 2, "train": {"rounds": 2}, "record_wall_time": false,
      "output_dir": "/nonexistent/never/written"})";
  Output out;
  ASSERT_EQ(Call(uldp_simulate, config, out), ULDP_OK) << uldp_output_error(out.get());
  ASSERT_EQ(uldp_output_count(out.get()), 4u);
  EXPECT_STREQ(uldp_output_name(out.get(), 0), "metrics_0.csv");
  EXPECT_STREQ(uldp_output_name(out.get(), 1), "metrics_1.csv");
  EXPECT_THAT(Find(out, "metrics_0.csv"),
              StartsWith("round,test_loss,test_metric,epsilon,delta,alpha_bar,wall_ms\n1,"));
  EXPECT_THAT(Find(out, "summary.csv"), StartsWith("round,loss_mean,"));
  const std::string first = Find(out, "summary.csv");
  ASSERT_EQ(Call(uldp_simulate, config, out), ULDP_OK);
  EXPECT_EQ(Find(out, "summary.csv"), first);

  ASSERT_EQ(Call(uldp_compare_weighting, config, out), ULDP_OK);
  EXPECT_THAT(Find(out, "weighting.csv"), StartsWith("round,loss_uniform,"));

  EXPECT_EQ(Call(uldp_simulate,
                 R"({"algorithm": "avg-w", "secure": true, "key_bits": 256, "n_max": 2,
                     "num_records": 250, "num_users": 10, "num_silos": 3,
                     "train": {"rounds": 1}, "repetitions": 1})",
                 out),
            ULDP_ERROR_PRECONDITION);
  EXPECT_THAT(uldp_output_error(out.get()), HasSubstr("record-count"));
}

}  // namespace
