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

#include "uldp/allocation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "json.hpp"

namespace uldp::allocation {
namespace {

using ::testing::Each;
using ::testing::ElementsAre;

std::vector<int64_t> UserTotals(const Histogram& h) {
  std::vector<int64_t> out;
  for (int32_t u = 0; u < h.num_users(); ++u) out.push_back(h.UserTotal(u));
  return out;
}

TEST(UniformTest, DegenerateSinglePair) {
  RecordAllocation a = *AllocateUniform(4, 1, 1, 7);
  EXPECT_THAT(a.records, Each(Assignment{0, 0}));
}

TEST(UniformTest, UserCountsConcentrate) {
  // Binomial(1e5, 1/100): mean 1000, sd sqrt(990).
  RecordAllocation a = *AllocateUniform(100000, 100, 5, 11);
  const Histogram h = HistogramOf(a);
  const double sd = std::sqrt(100000 * 0.01 * 0.99);
  for (int64_t n : UserTotals(h)) EXPECT_LT(std::abs(n - 1000.0), 5 * sd);
  for (int32_t s = 0; s < 5; ++s) {
    EXPECT_LT(std::abs(h.SiloTotal(s) - 20000.0), 5 * std::sqrt(16000.0));
  }
}

TEST(UniformTest, Deterministic) {
  EXPECT_EQ(AllocateUniform(500, 10, 3, 5)->records,
            AllocateUniform(500, 10, 3, 5)->records);
  EXPECT_NE(AllocateUniform(500, 10, 3, 5)->records,
            AllocateUniform(500, 10, 3, 6)->records);
}

TEST(UniformTest, RejectsEmptyDomain) {
  EXPECT_FALSE(AllocateUniform(0, 1, 1, 0).ok());
  EXPECT_FALSE(AllocateUniform(1, 0, 1, 0).ok());
  EXPECT_FALSE(AllocateUniform(1, 1, 0, 0).ok());
}

TEST(ZipfCountsTest, ExactTotalsAndOrdering) {
  for (double alpha : {0.5, 1.0, 2.0}) {
    const std::vector<int64_t> c = ZipfCounts(1003, 7, alpha);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), int64_t{0}), 1003);
    EXPECT_TRUE(std::is_sorted(c.rbegin(), c.rend()));
  }
  EXPECT_THAT(ZipfCounts(6, 3, 1.0), ElementsAre(3, 2, 1));
}

TEST(ZipfTest, MaxShareGrowsWithExponent) {
  int64_t previous = 0;
  for (double alpha : {0.5, 1.0, 2.0}) {
    const Histogram h = HistogramOf(*AllocateZipf(10000, 50, 5, alpha, 2.0, 3));
    EXPECT_GT(h.MaxUserTotal(), previous) << alpha;
    previous = h.MaxUserTotal();
  }
}

TEST(ZipfTest, SingleUserOwnsEverything) {
  for (double alpha : {0.5, 3.0}) {
    const Histogram h = HistogramOf(*AllocateZipf(321, 1, 4, alpha, 2.0, 1));
    EXPECT_EQ(h.UserTotal(0), 321);
  }
}

TEST(ZipfTest, DefaultsAreSkewedAcrossUsersAndSilos) {
  const Histogram h = HistogramOf(*AllocateZipf(10000, 100, 5, 0.5, 2.0, 9));
  EXPECT_EQ(h.Total(), 10000);
  // Largest user holds ~1/sum(i^-0.5) of the data, well above the mean.
  EXPECT_GT(h.MaxUserTotal(), 3 * 100);
  // Each user's favourite silo holds ~68% of their records under alpha=2.
  for (int32_t u = 0; u < 100; ++u) {
    int64_t top = 0;
    for (int32_t s = 0; s < 5; ++s) top = std::max(top, h.at(s, u));
    EXPECT_GE(static_cast<double>(top), 0.6 * h.UserTotal(u) - 1) << u;
  }
}

TEST(ZipfTest, RejectsNonPositiveExponent) {
  EXPECT_FALSE(AllocateZipf(10, 2, 2, 0.0, 2.0, 0).ok());
  EXPECT_FALSE(AllocateZipf(10, 2, 2, 1.0, -1.0, 0).ok());
}

TEST(FixedSiloZipfTest, FullFractionSingleSilo) {
  const std::vector<int64_t> per_silo = {50};
  const Histogram h =
      HistogramOf(*AllocateFixedSiloZipf(per_silo, 5, 0.5, 1.0, 2, 0));
  EXPECT_EQ(h.SiloTotal(0), 50);
}

TEST(FixedSiloZipfTest, PrimaryShareIsCeiling) {
  // One user with 10 records over silos of 8 and 2: the primary share is
  // ceil(0.8 * 10) = 8 whichever silo is chosen.
  const std::vector<int64_t> per_silo = {8, 2};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Histogram h =
        HistogramOf(*AllocateFixedSiloZipf(per_silo, 1, 1.0, 0.8, seed, 0));
    EXPECT_EQ(h.at(0, 0), 8);
    EXPECT_EQ(h.at(1, 0), 2);
  }
  // Two silos of 9 and 3: ceil(0.8 * 12) = 10 does not fit the larger
  // silo, so the primary is filled to capacity and the rest spills over.
  const std::vector<int64_t> tight = {9, 3};
  const Histogram h =
      HistogramOf(*AllocateFixedSiloZipf(tight, 1, 1.0, 0.8, 0, 0));
  EXPECT_EQ(h.at(0, 0), 9);
  EXPECT_EQ(h.at(1, 0), 3);
}

TEST(FixedSiloZipfTest, PreservesSiloTotals) {
  const std::vector<int64_t> per_silo = {120, 30, 75, 400};
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const RecordAllocation a =
        *AllocateFixedSiloZipf(per_silo, 20, 0.5, 0.8, seed, 2);
    const Histogram h = HistogramOf(a);
    for (int32_t s = 0; s < 4; ++s) EXPECT_EQ(h.SiloTotal(s), per_silo[s]);
    EXPECT_EQ(a.records.size(), 625u);
  }
}

TEST(FixedSiloZipfTest, HonoursRecordFloor) {
  const std::vector<int64_t> per_silo = {200, 200, 200};
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Histogram h =
        HistogramOf(*AllocateFixedSiloZipf(per_silo, 30, 0.5, 0.8, seed, 2));
    for (int64_t n : h.counts()) EXPECT_TRUE(n == 0 || n >= 2) << n;
    EXPECT_EQ(h.Total(), 600);
  }
}

TEST(FixedSiloZipfTest, RejectsInfeasibleFloor) {
  const std::vector<int64_t> per_silo = {10, 10};
  EXPECT_EQ(AllocateFixedSiloZipf(per_silo, 6, 0.5, 0.8, 0, 2).status().code(),
            absl::StatusCode::kFailedPrecondition);
  EXPECT_FALSE(AllocateFixedSiloZipf(per_silo, 2, 0.5, 0.0, 0, 0).ok());
  EXPECT_FALSE(AllocateFixedSiloZipf(per_silo, 2, 0.5, 1.5, 0, 0).ok());
}

TEST(HistogramTest, HandCounts) {
  RecordAllocation a{{{0, 0}, {0, 0}, {0, 0}}, 2, 2};
  Histogram h = HistogramOf(a);
  EXPECT_THAT(h.counts(), ElementsAre(3, 0, 0, 0));

  RecordAllocation b{{{1, 0}, {0, 1}, {1, 1}, {1, 0}, {0, 0}}, 2, 2};
  h = HistogramOf(b);
  // silo-major: n[0][0], n[0][1], n[1][0], n[1][1]
  EXPECT_THAT(h.counts(), ElementsAre(1, 2, 1, 1));
  EXPECT_EQ(h.UserTotal(1), 3);
  EXPECT_EQ(h.SiloTotal(1), 2);
}

TEST(HistogramTest, EmptyAllocationIsZero) {
  RecordAllocation a{{}, 3, 2};
  EXPECT_THAT(HistogramOf(a).counts(), Each(0));
}

TEST(HistogramTest, ConservationForEveryGenerator) {
  for (auto kind : {DistributionSpec::Kind::kUniform,
                    DistributionSpec::Kind::kZipf,
                    DistributionSpec::Kind::kFixedSiloZipf}) {
    DistributionSpec spec;
    spec.kind = kind;
    spec.seed = 4;
    const RecordAllocation a = *Allocate(spec, 997, 13, 3);
    EXPECT_EQ(HistogramOf(a).Total(), 997) << DistributionKindName(kind);
    EXPECT_TRUE(ValidateAllocation(a).ok());
    // Same spec, same bits.
    EXPECT_EQ(Allocate(spec, 997, 13, 3)->records, a.records);
  }
}

TEST(HistogramTest, JsonSidecar) {
  RecordAllocation b{{{1, 0}, {0, 1}}, 2, 2};
  const auto doc = nlohmann::json::parse(HistogramJson(HistogramOf(b)));
  EXPECT_EQ(doc["total"], 2);
  EXPECT_EQ(doc["counts"][0][1], 1);
  EXPECT_EQ(doc["counts"][1][0], 1);
}

TEST(ValidateTest, RejectsOutOfRangeIds) {
  EXPECT_FALSE(ValidateAllocation({{{2, 0}}, 2, 1}).ok());
  EXPECT_FALSE(ValidateAllocation({{{0, -1}}, 2, 1}).ok());
  EXPECT_TRUE(ValidateAllocation({{{1, 0}}, 2, 1}).ok());
}

TEST(DistributionKindTest, RoundTrips) {
  for (const char* name : {"uniform", "zipf", "fixed-zipf"}) {
    EXPECT_EQ(DistributionKindName(*ParseDistributionKind(name)), name);
  }
  EXPECT_FALSE(ParseDistributionKind("pareto").ok());
}

TEST(FlagsTest, UnderCapKeepsAll) {
  RecordAllocation a{{{0, 0}, {0, 1}, {0, 2}}, 1, 3};
  EXPECT_THAT(MakeContributionFlags(a, 8)->keep, Each(true));
}

TEST(FlagsTest, CapBindsInStableOrder) {
  // Ten records of user 0; order is silo id, then record index.
  RecordAllocation a{{}, 2, 3};
  const int32_t silos[] = {2, 1, 0, 2, 1, 0, 2, 1, 0, 2};
  for (int32_t s : silos) a.records.push_back({0, s});
  a.records.push_back({1, 2});
  const ContributionFlags f = *MakeContributionFlags(a, 2);
  EXPECT_THAT(f.keep, ElementsAre(false, false, true, false, false, true,
                                  false, false, false, false, true));
}

TEST(FlagsTest, CapHoldsExhaustively) {
  const RecordAllocation a = *AllocateZipf(5000, 40, 5, 0.5, 2.0, 8);
  const Histogram h = HistogramOf(a);
  for (int64_t k : {1, 2, 8, 50}) {
    const ContributionFlags f = *MakeContributionFlags(a, k);
    std::vector<int64_t> kept(40, 0);
    for (size_t i = 0; i < a.records.size(); ++i) kept[a.records[i].user] += f.keep[i];
    for (int32_t u = 0; u < 40; ++u) {
      EXPECT_EQ(kept[u], std::min<int64_t>(k, h.UserTotal(u)));
    }
  }
  // k at the largest user count keeps everything.
  EXPECT_THAT(MakeContributionFlags(a, h.MaxUserTotal())->keep, Each(true));
  EXPECT_FALSE(MakeContributionFlags(a, 0).ok());
}

TEST(CsvTest, Header) {
  std::ostringstream out;
  WriteAllocationCsv({{{1, 0}}, 2, 1}, out);
  EXPECT_EQ(out.str(), "record_id,user_id,silo_id\n0,1,0\n");
}

}  // namespace
}  // namespace uldp::allocation
