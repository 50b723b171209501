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
#include <ostream>

#include "absl/strings/str_format.h"
#include "json.hpp"
#include "uldp/random.h"

namespace uldp::allocation {
namespace {

absl::Status CheckCounts(int64_t num_records, int32_t num_users,
                         int32_t num_silos) {
  if (num_records < 1 || num_users < 1 || num_silos < 1) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "records, users and silos must all be >= 1 (got %d, %d, %d)",
        num_records, num_users, num_silos));
  }
  return absl::OkStatus();
}

std::vector<int32_t> Permutation(int32_t n, Rng& rng) {
  std::vector<int32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

int32_t UniformIndex(int32_t n, Rng& rng) {
  return std::uniform_int_distribution<int32_t>(0, n - 1)(rng);
}

}  // namespace

absl::Status ValidateAllocation(const RecordAllocation& alloc) {
  if (alloc.num_users < 1 || alloc.num_silos < 1) {
    return absl::InvalidArgumentError("allocation needs >= 1 user and silo");
  }
  for (size_t i = 0; i < alloc.records.size(); ++i) {
    const Assignment& a = alloc.records[i];
    if (a.user < 0 || a.user >= alloc.num_users || a.silo < 0 ||
        a.silo >= alloc.num_silos) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "record %d assigned to (user %d, silo %d) outside %d x %d", i,
          a.user, a.silo, alloc.num_users, alloc.num_silos));
    }
  }
  return absl::OkStatus();
}

Histogram::Histogram(int32_t num_silos, int32_t num_users)
    : num_silos_(num_silos),
      num_users_(num_users),
      counts_(static_cast<size_t>(num_silos) * num_users, 0) {}

int64_t Histogram::UserTotal(int32_t user) const {
  int64_t total = 0;
  for (int32_t s = 0; s < num_silos_; ++s) total += at(s, user);
  return total;
}

int64_t Histogram::SiloTotal(int32_t silo) const {
  int64_t total = 0;
  for (int32_t u = 0; u < num_users_; ++u) total += at(silo, u);
  return total;
}

int64_t Histogram::Total() const {
  return std::accumulate(counts_.begin(), counts_.end(), int64_t{0});
}

int64_t Histogram::MaxUserTotal() const {
  int64_t best = 0;
  for (int32_t u = 0; u < num_users_; ++u) best = std::max(best, UserTotal(u));
  return best;
}

absl::StatusOr<DistributionSpec::Kind> ParseDistributionKind(
    const std::string& name) {
  if (name == "uniform") return DistributionSpec::Kind::kUniform;
  if (name == "zipf") return DistributionSpec::Kind::kZipf;
  if (name == "fixed-zipf") return DistributionSpec::Kind::kFixedSiloZipf;
  return absl::InvalidArgumentError(
      absl::StrFormat("unknown distribution '%s'", name));
}

std::string DistributionKindName(DistributionSpec::Kind kind) {
  switch (kind) {
    case DistributionSpec::Kind::kUniform:
      return "uniform";
    case DistributionSpec::Kind::kZipf:
      return "zipf";
    case DistributionSpec::Kind::kFixedSiloZipf:
      return "fixed-zipf";
  }
  return "uniform";
}

std::vector<int64_t> ZipfCounts(int64_t total, int32_t buckets, double alpha) {
  std::vector<double> weights(buckets);
  for (int32_t i = 0; i < buckets; ++i) {
    weights[i] = std::pow(static_cast<double>(i + 1), -alpha);
  }
  const double norm = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int64_t> counts(buckets);
  std::vector<std::pair<double, int32_t>> remainders(buckets);
  int64_t assigned = 0;
  for (int32_t i = 0; i < buckets; ++i) {
    const double exact = static_cast<double>(total) * weights[i] / norm;
    counts[i] = static_cast<int64_t>(std::floor(exact));
    assigned += counts[i];
    remainders[i] = {exact - std::floor(exact), i};
  }
  // Largest remainder first; ties go to the better rank.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int64_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[static_cast<size_t>(i % buckets)].second];
  }
  return counts;
}

absl::StatusOr<RecordAllocation> AllocateUniform(int64_t num_records,
                                                 int32_t num_users,
                                                 int32_t num_silos,
                                                 uint64_t seed) {
  if (absl::Status s = CheckCounts(num_records, num_users, num_silos);
      !s.ok()) {
    return s;
  }
  Rng rng = DeriveStream(seed, {kTagAllocation});
  std::uniform_int_distribution<int32_t> user_dist(0, num_users - 1);
  std::uniform_int_distribution<int32_t> silo_dist(0, num_silos - 1);
  RecordAllocation alloc{{}, num_users, num_silos};
  alloc.records.resize(static_cast<size_t>(num_records));
  for (Assignment& a : alloc.records) {
    a.user = user_dist(rng);
    a.silo = silo_dist(rng);
  }
  return alloc;
}

absl::StatusOr<RecordAllocation> AllocateZipf(int64_t num_records,
                                              int32_t num_users,
                                              int32_t num_silos,
                                              double alpha_users,
                                              double alpha_silos,
                                              uint64_t seed) {
  if (absl::Status s = CheckCounts(num_records, num_users, num_silos);
      !s.ok()) {
    return s;
  }
  if (!(alpha_users > 0) || !(alpha_silos > 0)) {
    return absl::InvalidArgumentError("zipf exponents must be positive");
  }
  Rng rng = DeriveStream(seed, {kTagAllocation});
  const std::vector<int32_t> user_rank = Permutation(num_users, rng);
  const std::vector<int64_t> per_rank =
      ZipfCounts(num_records, num_users, alpha_users);

  RecordAllocation alloc{{}, num_users, num_silos};
  alloc.records.reserve(static_cast<size_t>(num_records));
  for (int32_t r = 0; r < num_users; ++r) {
    const int32_t user = user_rank[r];
    const std::vector<int32_t> silo_rank = Permutation(num_silos, rng);
    const std::vector<int64_t> split =
        ZipfCounts(per_rank[r], num_silos, alpha_silos);
    for (int32_t j = 0; j < num_silos; ++j) {
      for (int64_t i = 0; i < split[j]; ++i) {
        alloc.records.push_back({user, silo_rank[j]});
      }
    }
  }
  std::shuffle(alloc.records.begin(), alloc.records.end(), rng);
  return alloc;
}

absl::StatusOr<RecordAllocation> AllocateFixedSiloZipf(
    std::span<const int64_t> per_silo_record_counts, int32_t num_users,
    double alpha_users, double primary_fraction, uint64_t seed,
    int64_t min_records_per_pair) {
  const auto num_silos = static_cast<int32_t>(per_silo_record_counts.size());
  const int64_t total = std::accumulate(per_silo_record_counts.begin(),
                                        per_silo_record_counts.end(),
                                        int64_t{0});
  if (absl::Status s = CheckCounts(total, num_users, num_silos); !s.ok()) {
    return s;
  }
  for (int64_t c : per_silo_record_counts) {
    if (c < 0) return absl::InvalidArgumentError("negative silo record count");
  }
  if (!(alpha_users > 0)) {
    return absl::InvalidArgumentError("zipf exponent must be positive");
  }
  if (!(primary_fraction > 0 && primary_fraction <= 1)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "primary fraction must lie in (0, 1], got %g", primary_fraction));
  }
  if (min_records_per_pair < 0) {
    return absl::InvalidArgumentError("record floor must be non-negative");
  }
  if (min_records_per_pair * num_users * num_silos > total) {
    return absl::FailedPreconditionError(absl::StrFormat(
        "record floor %d over %d users x %d silos exceeds %d records",
        min_records_per_pair, num_users, num_silos, total));
  }

  Rng rng = DeriveStream(seed, {kTagAllocation});
  const std::vector<int32_t> user_rank = Permutation(num_users, rng);
  const std::vector<int64_t> per_rank = ZipfCounts(total, num_users, alpha_users);

  Histogram hist(num_silos, num_users);
  std::vector<int64_t> room(per_silo_record_counts.begin(),
                            per_silo_record_counts.end());
  std::vector<int64_t> rest(num_users, 0);
  // Primary shares, largest users first.
  for (int32_t r = 0; r < num_users; ++r) {
    const int32_t user = user_rank[r];
    const int32_t primary = UniformIndex(num_silos, rng);
    const auto want = static_cast<int64_t>(
        std::ceil(primary_fraction * static_cast<double>(per_rank[r]) - 1e-9));
    const int64_t placed = std::min(want, room[primary]);
    hist.at(primary, user) += placed;
    room[primary] -= placed;
    rest[user] = per_rank[r] - placed;

    std::vector<int32_t> others;
    for (int32_t s = 0; s < num_silos; ++s) {
      if (s != primary) others.push_back(s);
    }
    for (int64_t i = 0; i < rest[user]; ++i) {
      std::vector<int32_t> open;
      for (int32_t s : others) {
        if (room[s] > 0) open.push_back(s);
      }
      if (open.empty()) {
        for (int32_t s = 0; s < num_silos; ++s) {
          if (room[s] > 0) open.push_back(s);
        }
      }
      const int32_t silo = open[UniformIndex(static_cast<int32_t>(open.size()), rng)];
      ++hist.at(silo, user);
      --room[silo];
    }
  }

  if (min_records_per_pair > 1) {
    for (int32_t s = 0; s < num_silos; ++s) {
      int64_t pool = 0;
      std::vector<int32_t> small, eligible;
      for (int32_t u = 0; u < num_users; ++u) {
        const int64_t n = hist.at(s, u);
        if (n > 0 && n < min_records_per_pair) {
          pool += n;
          hist.at(s, u) = 0;
          small.push_back(u);
        } else if (n >= min_records_per_pair) {
          eligible.push_back(u);
        }
      }
      if (pool == 0) continue;
      if (eligible.empty()) {
        if (pool < min_records_per_pair) {
          return absl::FailedPreconditionError(absl::StrFormat(
              "silo %d holds %d records, below the floor %d", s, pool,
              min_records_per_pair));
        }
        const int32_t owner =
            small[UniformIndex(static_cast<int32_t>(small.size()), rng)];
        hist.at(s, owner) = pool;
        continue;
      }
      for (int64_t i = 0; i < pool; ++i) {
        const int32_t owner =
            eligible[UniformIndex(static_cast<int32_t>(eligible.size()), rng)];
        ++hist.at(s, owner);
      }
    }
  }

  RecordAllocation alloc{{}, num_users, num_silos};
  alloc.records.reserve(static_cast<size_t>(total));
  for (int32_t s = 0; s < num_silos; ++s) {
    const size_t begin = alloc.records.size();
    for (int32_t u = 0; u < num_users; ++u) {
      for (int64_t i = 0; i < hist.at(s, u); ++i) alloc.records.push_back({u, s});
    }
    std::shuffle(alloc.records.begin() + static_cast<std::ptrdiff_t>(begin),
                 alloc.records.end(), rng);
  }
  return alloc;
}

absl::StatusOr<RecordAllocation> Allocate(const DistributionSpec& spec,
                                          int64_t num_records,
                                          int32_t num_users,
                                          int32_t num_silos) {
  switch (spec.kind) {
    case DistributionSpec::Kind::kUniform:
      return AllocateUniform(num_records, num_users, num_silos, spec.seed);
    case DistributionSpec::Kind::kZipf:
      return AllocateZipf(num_records, num_users, num_silos, spec.alpha_users,
                          spec.alpha_silos, spec.seed);
    case DistributionSpec::Kind::kFixedSiloZipf: {
      if (absl::Status s = CheckCounts(num_records, num_users, num_silos);
          !s.ok()) {
        return s;
      }
      std::vector<int64_t> per_silo(num_silos, num_records / num_silos);
      for (int64_t i = 0; i < num_records % num_silos; ++i) ++per_silo[i];
      return AllocateFixedSiloZipf(per_silo, num_users, spec.alpha_users,
                                   spec.primary_fraction, spec.seed,
                                   spec.min_records_per_pair);
    }
  }
  return absl::InvalidArgumentError("unknown distribution kind");
}

Histogram HistogramOf(const RecordAllocation& alloc) {
  Histogram hist(alloc.num_silos, alloc.num_users);
  for (const Assignment& a : alloc.records) ++hist.at(a.silo, a.user);
  return hist;
}

absl::StatusOr<ContributionFlags> MakeContributionFlags(
    const RecordAllocation& alloc, int64_t k, uint64_t /*seed*/) {
  if (k < 1) {
    return absl::InvalidArgumentError(
        absl::StrFormat("group size must be >= 1, got %d", k));
  }
  if (absl::Status s = ValidateAllocation(alloc); !s.ok()) return s;
  std::vector<size_t> order(alloc.records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return alloc.records[a].silo < alloc.records[b].silo;
  });
  ContributionFlags flags{std::vector<bool>(alloc.records.size(), false), k};
  std::vector<int64_t> kept(alloc.num_users, 0);
  for (size_t i : order) {
    const int32_t user = alloc.records[i].user;
    if (kept[user] < k) {
      flags.keep[i] = true;
      ++kept[user];
    }
  }
  return flags;
}

void WriteAllocationCsv(const RecordAllocation& alloc, std::ostream& out) {
  out << "record_id,user_id,silo_id\n";
  for (size_t i = 0; i < alloc.records.size(); ++i) {
    out << i << ',' << alloc.records[i].user << ',' << alloc.records[i].silo
        << '\n';
  }
}

std::string HistogramJson(const Histogram& hist) {
  nlohmann::json rows = nlohmann::json::array();
  for (int32_t s = 0; s < hist.num_silos(); ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (int32_t u = 0; u < hist.num_users(); ++u) row.push_back(hist.at(s, u));
    rows.push_back(std::move(row));
  }
  nlohmann::json doc = {{"num_silos", hist.num_silos()},
                        {"num_users", hist.num_users()},
                        {"total", hist.Total()},
                        {"counts", std::move(rows)}};
  return doc.dump();
}

}  // namespace uldp::allocation
