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

// Assignment of records to (user, silo) pairs.
//
// A user's records may be scattered over several silos; the histogram
// n[s][u] of that scattering drives per-user weighting, and the contribution
// flags cap each user's records for the group-privacy baseline. All
// generators are deterministic in their seed.

#ifndef ULDP_ALLOCATION_H_
#define ULDP_ALLOCATION_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace uldp::allocation {

struct Assignment {
  int32_t user = 0;
  int32_t silo = 0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

// records[i] is the owner and location of record i.
struct RecordAllocation {
  std::vector<Assignment> records;
  int32_t num_users = 0;
  int32_t num_silos = 0;
};

absl::Status ValidateAllocation(const RecordAllocation& alloc);

// Record counts n[s][u], stored silo-major.
class Histogram {
 public:
  Histogram() = default;
  Histogram(int32_t num_silos, int32_t num_users);

  int64_t at(int32_t silo, int32_t user) const {
    return counts_[static_cast<size_t>(silo) * num_users_ + user];
  }
  int64_t& at(int32_t silo, int32_t user) {
    return counts_[static_cast<size_t>(silo) * num_users_ + user];
  }

  int32_t num_silos() const { return num_silos_; }
  int32_t num_users() const { return num_users_; }
  const std::vector<int64_t>& counts() const { return counts_; }

  // N_u = sum over silos of n[s][u].
  int64_t UserTotal(int32_t user) const;
  int64_t SiloTotal(int32_t silo) const;
  int64_t Total() const;
  int64_t MaxUserTotal() const;

 private:
  int32_t num_silos_ = 0;
  int32_t num_users_ = 0;
  std::vector<int64_t> counts_;
};

struct DistributionSpec {
  enum class Kind { kUniform, kZipf, kFixedSiloZipf };
  Kind kind = Kind::kUniform;
  // Zipf exponent of the per-user record counts.
  double alpha_users = 0.5;
  // Zipf exponent of each user's split over silos (kZipf).
  double alpha_silos = 2.0;
  // Share of a user's records in their primary silo (kFixedSiloZipf).
  double primary_fraction = 0.8;
  uint64_t seed = 0;
  int64_t min_records_per_pair = 0;
};

absl::StatusOr<DistributionSpec::Kind> ParseDistributionKind(
    const std::string& name);
std::string DistributionKindName(DistributionSpec::Kind kind);

// Every record picks its user and its silo independently and uniformly.
absl::StatusOr<RecordAllocation> AllocateUniform(int64_t num_records,
                                                 int32_t num_users,
                                                 int32_t num_silos,
                                                 uint64_t seed);

// User record counts follow Zipf(alpha_users) over a random user ranking;
// each user's records then spread over a per-user random silo ranking with
// Zipf(alpha_silos). Counts are rounded by largest remainder, so totals are
// exact.
absl::StatusOr<RecordAllocation> AllocateZipf(int64_t num_records,
                                              int32_t num_users,
                                              int32_t num_silos,
                                              double alpha_users,
                                              double alpha_silos,
                                              uint64_t seed);

// Silos keep the given record counts. User counts follow Zipf(alpha_users);
// each user puts ceil(primary_fraction * count) records in a random primary
// silo (capacity permitting) and the rest uniformly in the other silos.
// Pairs left with fewer than min_records_per_pair records are re-drawn onto
// other users of the same silo. Records are numbered silo by silo.
absl::StatusOr<RecordAllocation> AllocateFixedSiloZipf(
    std::span<const int64_t> per_silo_record_counts, int32_t num_users,
    double alpha_users, double primary_fraction, uint64_t seed,
    int64_t min_records_per_pair);

// Dispatches on spec.kind. kFixedSiloZipf splits num_records evenly over
// silos.
absl::StatusOr<RecordAllocation> Allocate(const DistributionSpec& spec,
                                          int64_t num_records,
                                          int32_t num_users,
                                          int32_t num_silos);

Histogram HistogramOf(const RecordAllocation& alloc);

// Largest-remainder split of `total` proportionally to rank^(-alpha) over
// `buckets` ranks (rank 1 first).
std::vector<int64_t> ZipfCounts(int64_t total, int32_t buckets, double alpha);

struct ContributionFlags {
  // keep[i] is b for record i.
  std::vector<bool> keep;
  int64_t k = 1;
};

// Keeps at most k records per user, choosing by (silo id, record index).
// The selection does not depend on the round, so the same flags serve every
// round. `seed` is accepted for interface stability; the order is
// deterministic.
absl::StatusOr<ContributionFlags> MakeContributionFlags(
    const RecordAllocation& alloc, int64_t k, uint64_t seed = 0);

// CSV with header record_id,user_id,silo_id.
void WriteAllocationCsv(const RecordAllocation& alloc, std::ostream& out);
// {"num_silos":..,"num_users":..,"counts":[[n_{0,0},..],..]} (silo-major).
std::string HistogramJson(const Histogram& hist);

}  // namespace uldp::allocation

#endif  // ULDP_ALLOCATION_H_
