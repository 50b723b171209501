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

#include "uldp/secure.h"

#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "boost/math/distributions/chi_squared.hpp"
#include "gmock/gmock.h"
#include "gtest/gtest.h"

namespace uldp::secure {
namespace {

using ::testing::ElementsAre;

constexpr int32_t kTestKeyBits = 512;

PaillierKeypair TestKey(uint64_t seed) {
  Prg prg = Prg::FromSeed(seed, {42});
  return *PaillierKeygen(kTestKeyBits, prg);
}

TEST(PrgTest, DeterministicAndBounded) {
  Prg a = Prg::FromSeed(7, {1, 2});
  Prg b = Prg::FromSeed(7, {1, 2});
  Prg c = Prg::FromSeed(7, {1, 3});
  const BigInt bound("1000000000000000000000007");
  bool differs = false;
  for (int i = 0; i < 200; ++i) {
    const BigInt x = a.UniformBelow(bound);
    EXPECT_EQ(x, b.UniformBelow(bound));
    differs |= x != c.UniformBelow(bound);
    EXPECT_GE(x, 0);
    EXPECT_LT(x, bound);
  }
  EXPECT_TRUE(differs);
  Prg d = Prg::FromSeed(1, {});
  EXPECT_EQ(mpz_sizeinbase(d.TopBitsSet(100).get_mpz_t(), 2), 100u);
}

TEST(PaillierTest, KeyHasRequestedSize) {
  const PaillierKeypair kp = TestKey(1);
  EXPECT_EQ(mpz_sizeinbase(kp.pub.n.get_mpz_t(), 2), 512u);
  EXPECT_EQ(kp.pub.n_squared, kp.pub.n * kp.pub.n);
  Prg prg = Prg::FromSeed(2, {});
  EXPECT_EQ(PaillierKeygen(64, prg).status().code(),
            absl::StatusCode::kInvalidArgument);
  const PaillierKeypair odd = *PaillierKeygen(201, prg);
  EXPECT_EQ(mpz_sizeinbase(odd.pub.n.get_mpz_t(), 2), 201u);
}

TEST(PaillierTest, RoundTripAndHomomorphism) {
  const PaillierKeypair kp = TestKey(3);
  const BigInt& n = kp.pub.n;
  Prg prg = Prg::FromSeed(4, {});
  for (int i = 0; i < 20; ++i) {
    const BigInt a = prg.UniformBelow(n);
    const BigInt b = prg.UniformBelow(n);
    const BigInt k = prg.UniformBelow(n);
    const BigInt ea = PaillierEncrypt(kp.pub, a, prg);
    const BigInt eb = PaillierEncrypt(kp.pub, b, prg);
    EXPECT_EQ(PaillierDecrypt(kp, ea), a);
    EXPECT_EQ(PaillierDecrypt(kp, PaillierAdd(kp.pub, ea, eb)), BigInt((a + b) % n));
    EXPECT_EQ(PaillierDecrypt(kp, PaillierScalarMul(kp.pub, ea, k)),
              BigInt((a * k) % n));
  }
  // Encryption is randomized.
  EXPECT_NE(PaillierEncrypt(kp.pub, 5, prg), PaillierEncrypt(kp.pub, 5, prg));
  // Product of many ciphertexts decrypts to the sum mod n.
  BigInt product = 1, sum = 0;
  for (int i = 0; i < 30; ++i) {
    const BigInt m = prg.UniformBelow(n);
    sum = (sum + m) % n;
    product = PaillierAdd(kp.pub, product, PaillierEncrypt(kp.pub, m, prg));
  }
  EXPECT_EQ(PaillierDecrypt(kp, product), sum);
}

TEST(FixedPointTest, EncodeExamples) {
  const BigInt n = BigInt(1) << 200;
  EXPECT_EQ(*Encode(0.5, 1e-10, n), BigInt(5000000000L));
  EXPECT_EQ(*Encode(-0.25, 1e-10, n), n - BigInt(2500000000L));
  EXPECT_EQ(*Encode(0.0, 1e-10, n), 0);
  EXPECT_EQ(*Encode(0.0, 3.0, n), 0);
  EXPECT_EQ(Encode(1e60, 1e-10, n).status().code(), absl::StatusCode::kOutOfRange);
  EXPECT_FALSE(Encode(NAN, 1e-10, n).ok());
  EXPECT_FALSE(Encode(1.0, 0.0, n).ok());
}

TEST(FixedPointTest, DecodeExamples) {
  const BigInt n = BigInt(1) << 200;
  const BigInt lcm = LcmUpTo(10);
  EXPECT_DOUBLE_EQ(Decode(n - lcm, 1e-10, lcm, n), -1e-10);
  EXPECT_DOUBLE_EQ(Decode(0, 1e-10, lcm, n), 0.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> small(-1.0, 1.0), wide(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = small(rng);
    const BigInt e = (*Encode(x, 1e-10, n) * lcm) % n;
    EXPECT_NEAR(Decode(e, 1e-10, lcm, n), x, 1e-10);
    const double y = wide(rng);
    EXPECT_LE(std::abs(Decode(*Encode(y, 1e-10, n), 1e-10, 1, n) - y), 1e-10);
  }
}

TEST(ModularTest, LcmExamples) {
  EXPECT_EQ(LcmUpTo(10), 2520);
  EXPECT_EQ(LcmUpTo(1), 1);
  const std::vector<int64_t> set = {10, 100, 1000, 10000};
  EXPECT_EQ(LcmOf(set), 10000);
  // lcm(1..2000) has 867 digits.
  EXPECT_EQ(LcmUpTo(2000).get_str().size(), 867u);
}

TEST(ModularTest, InverseExamples) {
  EXPECT_EQ(*ModInverse(3, 7), 5);
  const BigInt n("1000000000000000000000000000057");
  EXPECT_EQ(*ModInverse(1, n), 1);
  const BigInt semiprime = 61 * 53;
  int checked = 0;
  for (int a = 1; a < 3233; ++a) {
    absl::StatusOr<BigInt> inv = ModInverse(a, semiprime);
    if (a % 61 == 0 || a % 53 == 0) {
      EXPECT_FALSE(inv.ok()) << a;
      continue;
    }
    EXPECT_EQ((a * *inv) % semiprime, 1) << a;
    ++checked;
  }
  EXPECT_EQ(checked, 60 * 52);
}

TEST(DiffieHellmanTest, GroupsAreSafePrimes) {
  for (const DhGroup& g : {Modp2048(), Modp3072()}) {
    EXPECT_NE(mpz_probab_prime_p(g.p.get_mpz_t(), 10), 0) << g.name;
    const BigInt q = (g.p - 1) / 2;
    EXPECT_NE(mpz_probab_prime_p(q.get_mpz_t(), 10), 0) << g.name;
  }
  EXPECT_EQ(mpz_sizeinbase(Modp2048().p.get_mpz_t(), 2), 2048u);
  EXPECT_EQ(mpz_sizeinbase(Modp3072().p.get_mpz_t(), 2), 3072u);
}

TEST(DiffieHellmanTest, PartiesAgree) {
  const DhGroup g = Modp2048();
  Prg pa = Prg::FromSeed(1, {}), pb = Prg::FromSeed(2, {});
  const DhKeypair a = DhGenerate(g, pa), b = DhGenerate(g, pb);
  const Key ab = *DhSharedKey(g, a.secret, b.pub, "x");
  EXPECT_EQ(ab, *DhSharedKey(g, b.secret, a.pub, "x"));
  EXPECT_NE(ab, *DhSharedKey(g, b.secret, a.pub, "y"));
  EXPECT_FALSE(DhSharedKey(g, a.secret, 1, "x").ok());
  EXPECT_FALSE(DhSharedKey(g, a.secret, g.p - 1, "x").ok());
}

// Symmetric pair keys for `silos` parties: keys[s][t] == keys[t][s].
std::vector<std::vector<Key>> PairKeys(int silos, uint64_t seed) {
  std::vector<std::vector<Key>> keys(silos, std::vector<Key>(silos));
  Prg prg = Prg::FromSeed(seed, {});
  for (int s = 0; s < silos; ++s) {
    for (int t = s + 1; t < silos; ++t) keys[s][t] = keys[t][s] = prg.NextKey();
  }
  return keys;
}

TEST(MaskTest, HandWalkWithUnitBlind) {
  // Two silos hold 2 and 3 records of the only user; r = 1.
  const BigInt n = TestKey(5).pub.n;
  const auto keys = PairKeys(2, 9);
  BigInt total = 0;
  const int64_t counts[] = {2, 3};
  for (int s = 0; s < 2; ++s) {
    const BigInt masked =
        (Blind(counts[s], 1, n) + PairwiseMasks(s, keys[s], 1, 0, 1, n)[0]) % n;
    EXPECT_NE(masked, counts[s]);
    total += masked;
  }
  total %= n;
  EXPECT_EQ(total, 5);
  const BigInt inv = *ModInverse(total, n);
  EXPECT_EQ((inv * 5) % n, 1);
}

TEST(MaskTest, MasksCancelExactly) {
  const BigInt n = TestKey(6).pub.n;
  for (int silos = 2; silos <= 5; ++silos) {
    const auto keys = PairKeys(silos, 100 + silos);
    std::vector<BigInt> sum(7, BigInt(0));
    for (int s = 0; s < silos; ++s) {
      const std::vector<BigInt> m = PairwiseMasks(s, keys[s], 2, 13, 7, n);
      for (int i = 0; i < 7; ++i) {
        EXPECT_GE(m[i], 0);
        EXPECT_LT(m[i], n);
        sum[i] += m[i];
      }
    }
    for (const BigInt& v : sum) EXPECT_EQ(v % n, 0) << silos;
  }
  // A single silo has nothing to mask with.
  const auto one = PairKeys(1, 1);
  EXPECT_THAT(PairwiseMasks(0, one[0], 2, 0, 2, n), ElementsAre(0, 0));
}

TEST(MaskTest, BlindedTotalsLookUniform) {
  // Over the prime field Z_101 every nonzero residue is a unit, so r * N with
  // r uniform on units is uniform on units for any N != 0 mod 101.
  const BigInt n = 101;
  const double critical =
      boost::math::quantile(boost::math::chi_squared(99.0), 0.999);
  for (int64_t total : {2, 7, 150}) {
    Prg prg = Prg::FromSeed(static_cast<uint64_t>(total), {77});
    std::vector<int> hits(101, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      ++hits[Blind(total, prg.UnitBelow(n), n).get_si()];
    }
    EXPECT_EQ(hits[0], 0);
    double chi2 = 0;
    const double expected = draws / 100.0;
    for (int v = 1; v < 101; ++v) {
      chi2 += (hits[v] - expected) * (hits[v] - expected) / expected;
    }
    EXPECT_LT(chi2, critical) << total;
  }
}

allocation::Histogram MakeHistogram(const std::vector<std::vector<int64_t>>& rows) {
  allocation::Histogram h(static_cast<int32_t>(rows.size()),
                          static_cast<int32_t>(rows[0].size()));
  for (size_t s = 0; s < rows.size(); ++s) {
    for (size_t u = 0; u < rows[s].size(); ++u) {
      h.at(static_cast<int32_t>(s), static_cast<int32_t>(u)) = rows[s][u];
    }
  }
  return h;
}

ProtocolConfig TestConfig(uint64_t seed) {
  ProtocolConfig c;
  c.key_bits = kTestKeyBits;
  c.n_max = 20;
  c.seed = seed;
  return c;
}

// sum_s (sum_u n[s][u] / N_u * clipped[s][u] + noise[s]), skipping users
// outside `keep` when it is non-empty.
fl::Vector PlainAggregate(const allocation::Histogram& h,
                          const std::vector<std::vector<fl::Vector>>& clipped,
                          const std::vector<fl::Vector>& noise,
                          const std::vector<bool>& keep = {}) {
  fl::Vector out = fl::Vector::Zero(noise[0].size());
  for (int32_t s = 0; s < h.num_silos(); ++s) {
    out += noise[s];
    for (int32_t u = 0; u < h.num_users(); ++u) {
      if (h.at(s, u) == 0 || (!keep.empty() && !keep[u])) continue;
      out += static_cast<double>(h.at(s, u)) / h.UserTotal(u) * clipped[s][u];
    }
  }
  return out;
}

TEST(SessionTest, SingleSiloSingleUser) {
  const allocation::Histogram h = MakeHistogram({{3}});
  auto session = *WeightingSession::Setup(TestConfig(1), h);
  fl::Vector delta(1);
  delta << 0.5;
  const fl::Vector out = *session->AggregateRound(1, {{delta}}, {fl::Vector::Zero(1)}, {});
  EXPECT_NEAR(out[0], 0.5, 1e-10);
}

TEST(SessionTest, MatchesPlaintextOnRandomInstances) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 0.4);
  for (int trial = 0; trial < 8; ++trial) {
    const int S = 1 + trial % 3, U = 1 + trial % 5, d = 1 + trial % 8;
    std::uniform_int_distribution<int64_t> count(0, 4);
    std::vector<std::vector<int64_t>> rows(S, std::vector<int64_t>(U));
    for (auto& row : rows) {
      for (auto& c : row) c = count(rng);
    }
    rows[0][0] = std::max<int64_t>(rows[0][0], 1);
    const allocation::Histogram h = MakeHistogram(rows);
    std::vector<std::vector<fl::Vector>> clipped(S, std::vector<fl::Vector>(U));
    std::vector<fl::Vector> noise(S, fl::Vector(d));
    for (int s = 0; s < S; ++s) {
      for (int j = 0; j < d; ++j) noise[s][j] = normal(rng);
      for (int u = 0; u < U; ++u) {
        if (rows[s][u] == 0) continue;
        clipped[s][u] = fl::Vector(d);
        for (int j = 0; j < d; ++j) clipped[s][u][j] = normal(rng);
      }
    }
    auto session = *WeightingSession::Setup(TestConfig(trial), h);
    for (int64_t round = 1; round <= 2; ++round) {
      const fl::Vector out = *session->AggregateRound(round, clipped, noise, {});
      const fl::Vector want = PlainAggregate(h, clipped, noise);
      EXPECT_LE((out - want).cwiseAbs().maxCoeff(), session->Tolerance()) << trial;
    }
  }
}

TEST(SessionTest, ZeroedInverseDropsUserExactly) {
  const allocation::Histogram h = MakeHistogram({{2, 1, 3}, {1, 4, 0}});
  std::vector<std::vector<fl::Vector>> clipped(2, std::vector<fl::Vector>(3));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (int s = 0; s < 2; ++s) {
    for (int u = 0; u < 3; ++u) {
      if (h.at(s, u) == 0) continue;
      clipped[s][u] = fl::Vector(4);
      for (int j = 0; j < 4; ++j) clipped[s][u][j] = normal(rng);
    }
  }
  const std::vector<fl::Vector> noise(2, fl::Vector::Zero(4));
  auto session = *WeightingSession::Setup(TestConfig(3), h);
  const std::vector<bool> keep = {true, false, true};
  const fl::Vector out = *session->AggregateRound(1, clipped, noise, keep);
  EXPECT_LE((out - PlainAggregate(h, clipped, noise, keep)).cwiseAbs().maxCoeff(),
            session->Tolerance());
  // Dropping every user leaves exactly the noise.
  const fl::Vector none =
      *session->AggregateRound(2, clipped, noise, {false, false, false});
  EXPECT_EQ(none, fl::Vector::Zero(4));
}

TEST(SessionTest, ServerSeesOnlyBlindedTotals) {
  const allocation::Histogram h = MakeHistogram({{2, 0}, {3, 0}, {1, 0}});
  auto session = *WeightingSession::Setup(TestConfig(8), h);
  const BigInt& n = session->public_key().n;
  const std::vector<BigInt>& r = session->blinds(0);
  EXPECT_EQ(session->blinds(1), r);
  EXPECT_EQ(session->blinds(2), r);
  EXPECT_EQ(session->blinded_totals()[0], Blind(6, r[0], n));
  EXPECT_EQ((session->blinded_totals()[0] * session->blinded_inverses()[0]) % n, 1);
  // A user with no records is inactive.
  EXPECT_EQ(session->blinded_totals()[1], 0);
  EXPECT_EQ(session->blinded_inverses()[1], 0);
  // Blinds cancel: r_u * (r_u N_u)^-1 * N_u == 1.
  EXPECT_EQ((r[0] * session->blinded_inverses()[0] * 6) % n, 1);
}

TEST(SessionTest, TranscriptFollowsPhaseOrder) {
  const allocation::Histogram h = MakeHistogram({{1, 2}, {2, 1}, {1, 1}});
  auto session = *WeightingSession::Setup(TestConfig(4), h);
  ASSERT_TRUE(session
                  ->AggregateRound(1, std::vector<std::vector<fl::Vector>>(
                                          3, std::vector<fl::Vector>(2)),
                                   std::vector<fl::Vector>(3, fl::Vector::Zero(2)), {})
                  .ok());
  std::vector<std::string> phases;
  for (const TranscriptEntry& e : session->bus().transcript()) {
    if (phases.empty() || phases.back() != e.phase) phases.push_back(e.phase);
    EXPECT_EQ(e.digest.size(), 32u);
    EXPECT_GT(e.bytes, 0u);
  }
  EXPECT_THAT(phases, ElementsAre("keyex", "seed", "blind", "weights", "aggregate"));
  std::ostringstream out;
  session->bus().WriteTranscript(out);
  EXPECT_THAT(out.str(), ::testing::HasSubstr("\"payload_digest\""));
  std::set<std::string> timed;
  for (const PhaseTiming& t : session->timings()) timed.insert(t.phase);
  EXPECT_THAT(timed, ElementsAre("aggregate", "blind", "keyex", "train"));
}

TEST(SessionTest, RejectsPreflightViolations) {
  ProtocolConfig c = TestConfig(1);
  c.n_max = 4;
  EXPECT_EQ(WeightingSession::Setup(c, MakeHistogram({{3}, {2}})).status().code(),
            absl::StatusCode::kFailedPrecondition);
  auto session = *WeightingSession::Setup(TestConfig(1), MakeHistogram({{3}, {2}}));
  fl::Vector huge(1);
  // Fits the encoder's range alone but not the 512-bit field after C_LCM.
  huge << 1e145;
  EXPECT_EQ(session
                ->AggregateRound(1, {{huge}, {huge}},
                                 {fl::Vector::Zero(1), fl::Vector::Zero(1)}, {})
                .status()
                .code(),
            absl::StatusCode::kFailedPrecondition);
}

TEST(PreflightTest, WorkedExamplePasses) {
  // Range 1e10 at precision 1e-10 with N_max = 2000 and a 3072-bit modulus;
  // 2^3071 is the smallest such modulus.
  std::vector<std::vector<int64_t>> rows(5, std::vector<int64_t>(100, 400));
  const FixedPointConfig cfg = *MakeFixedPointConfig(1e-10, 2000, {}, BigInt(1) << 3071);
  EXPECT_FALSE(CorrectnessPreflight(cfg, MakeHistogram(rows), {1e10, 1e10}).has_value());
}

TEST(PreflightTest, RecordCountViolation) {
  const FixedPointConfig cfg = *MakeFixedPointConfig(1e-10, 2000, {}, BigInt(1) << 3071);
  const auto v = CorrectnessPreflight(cfg, MakeHistogram({{2000, 1}, {1, 2000}}), {1, 1});
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->kind, PreflightViolation::Kind::kRecordCount);
  EXPECT_THAT(v->detail, ::testing::HasSubstr("user 0 holds 2001"));
  const FixedPointConfig sets =
      *MakeFixedPointConfig(1e-10, 10000, {10, 100, 1000, 10000}, BigInt(1) << 3071);
  EXPECT_EQ(sets.c_lcm, 10000);
  EXPECT_FALSE(CorrectnessPreflight(sets, MakeHistogram({{60}, {40}}), {1, 1}).has_value());
  EXPECT_TRUE(CorrectnessPreflight(sets, MakeHistogram({{7, 10}}), {1, 1}).has_value());
}

TEST(PreflightTest, FieldCapacityViolation) {
  const FixedPointConfig cfg = *MakeFixedPointConfig(1e-10, 10, {}, BigInt(1) << 64);
  const auto v = CorrectnessPreflight(cfg, MakeHistogram({{1, 2}, {3, 4}}), {1e6, 1e6});
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->kind, PreflightViolation::Kind::kFieldCapacity);
  EXPECT_EQ(PreflightStatus(cfg, MakeHistogram({{1}}), {1e6, 0}).code(),
            absl::StatusCode::kFailedPrecondition);
}

TEST(BenchTest, SchemaAndCorrectness) {
  BenchScenario sc;
  sc.silos = 2;
  sc.users = 3;
  sc.dim = 2;
  sc.rounds = 2;
  sc.key_bits = 256;
  sc.n_max = 20;
  const BenchReport r = *BenchPhases(sc);
  EXPECT_TRUE(r.correct) << r.max_abs_error;
  EXPECT_EQ(r.num_params, 6);
  std::set<std::string> phases;
  for (const PhaseTiming& t : r.timings) {
    phases.insert(t.phase);
    EXPECT_GE(t.ms, 0.0);
  }
  EXPECT_THAT(phases, ElementsAre("aggregate", "blind", "keyex", "train"));
  std::ostringstream csv;
  WriteTimingsCsv(r.timings, csv);
  EXPECT_EQ(csv.str().substr(0, 21), "phase,party,round,ms\n");
  EXPECT_GT(TotalPhaseMs(r.timings, "train"), 0.0);
}

}  // namespace
}  // namespace uldp::secure
