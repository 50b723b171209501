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

// Private weighting: the server learns only
//   sum_s (sum_u n[s][u] / N_u * clip(delta[s][u]) + z_s)
// without seeing any silo's counts or contributions.
//
// Setup: the server makes a Paillier key; silos agree on pairwise keys with
// Diffie-Hellman and on a common seed that expands to per-user blinds r_u.
// Silos submit r_u * n[s][u] under cancelling pairwise masks; the server sums
// to r_u * N_u and inverts. Each round the server sends Enc((r_u N_u)^-1) and
// every silo raises it to Encode(delta) * n[s][u] * r_u * C_LCM, which leaves
// Encode(delta) * n[s][u] * C_LCM / N_u under encryption; C_LCM keeps the
// division exact. Masked ciphertexts multiply to the encrypted aggregate.
//
// Semi-honest parties; all run in one process over an in-memory bus that
// carries the exact wire bytes.

#ifndef ULDP_SECURE_H_
#define ULDP_SECURE_H_

#include <gmpxx.h>

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "uldp/allocation.h"
#include "uldp/model.h"

namespace uldp::secure {

using BigInt = mpz_class;
using Key = std::array<uint8_t, 32>;

// ChaCha20 keystream used as a deterministic generator of field elements.
class Prg {
 public:
  // `stream` selects an independent keystream under the same key.
  Prg(const Key& key, uint32_t domain, uint64_t stream);
  // Key derived from a 64-bit seed and a tag path (simulation only).
  static Prg FromSeed(uint64_t seed, std::initializer_list<uint64_t> tags);
  // Key from the OS entropy source.
  static Prg FromEntropy();

  void Fill(uint8_t* out, size_t len);
  Key NextKey();
  // Uniform on [0, bound) by rejection sampling; bound > 0.
  BigInt UniformBelow(const BigInt& bound);
  // Uniform on the units of Z_n.
  BigInt UnitBelow(const BigInt& n);
  // `bits`-bit integer with the top two bits set.
  BigInt TopBitsSet(int32_t bits);

 private:
  void Refill();

  Key key_;
  std::array<uint8_t, 12> nonce_;
  uint32_t counter_ = 0;
  std::array<uint8_t, 64> block_;
  size_t pos_ = 64;
};

struct PaillierPublicKey {
  BigInt n;
  BigInt n_squared;  // generator is n + 1
  int32_t bits = 0;
};

struct PaillierKeypair {
  PaillierPublicKey pub;
  BigInt lambda;  // lcm(p - 1, q - 1)
  BigInt mu;      // lambda^-1 mod n
};

// Smallest key size accepted; anything below 2048 bits warns on stderr.
inline constexpr int32_t kMinKeyBits = 128;

// n has exactly `key_bits` bits. Prime search retries a bounded number of
// times before failing.
absl::StatusOr<PaillierKeypair> PaillierKeygen(int32_t key_bits, Prg& prg);
BigInt PaillierEncrypt(const PaillierPublicKey& pk, const BigInt& m, Prg& prg);
BigInt PaillierDecrypt(const PaillierKeypair& kp, const BigInt& c);
// Enc(a) * Enc(b) = Enc(a + b).
BigInt PaillierAdd(const PaillierPublicKey& pk, const BigInt& a, const BigInt& b);
// Enc(a)^k = Enc(k * a); k is reduced mod n first.
BigInt PaillierScalarMul(const PaillierPublicKey& pk, const BigInt& c,
                         const BigInt& k);

// floor(x / precision) mapped into Z_n, negatives wrapping. Fails unless x is
// finite and |x| / precision < n / 2.
absl::StatusOr<BigInt> Encode(double x, double precision, const BigInt& n);
// Signed lift (x > n / 2 means x - n), divided by c_lcm, times precision.
double Decode(const BigInt& x, double precision, const BigInt& c_lcm,
              const BigInt& n);

BigInt LcmUpTo(int64_t n_max);
BigInt LcmOf(std::span<const int64_t> counts);
// Fails with InvalidArgument when gcd(a, n) != 1.
absl::StatusOr<BigInt> ModInverse(const BigInt& a, const BigInt& n);

// Finite-field Diffie-Hellman over a safe-prime group.
struct DhGroup {
  std::string name;
  BigInt p;
  BigInt g;
};

DhGroup Modp2048();
DhGroup Modp3072();
// The larger group for keys above 2048 bits.
DhGroup DhGroupFor(int32_t key_bits);

struct DhKeypair {
  BigInt secret;
  BigInt pub;
};

DhKeypair DhGenerate(const DhGroup& group, Prg& prg);
// Hash of the shared element bound to `label`; rejects degenerate peers.
absl::StatusOr<Key> DhSharedKey(const DhGroup& group, const BigInt& secret,
                                const BigInt& peer_pub, std::string_view label);

// r * count mod n.
BigInt Blind(int64_t count, const BigInt& r, const BigInt& n);

// Masks for `silo`: sum over s' > silo of m(s, s') minus sum over s' < silo,
// where m(s, s') expands from pair_keys[s'] (the key silo shares with s')
// under (domain, stream). pair_keys[silo] is ignored. The masks of all silos
// sum to zero mod n.
std::vector<BigInt> PairwiseMasks(int32_t silo, std::span<const Key> pair_keys,
                                  uint32_t domain, uint64_t stream, size_t count,
                                  const BigInt& n);

struct FixedPointConfig {
  double precision = 1e-10;
  int64_t n_max = 2000;
  // When non-empty, C_LCM is the LCM of this set instead of 1..n_max; user
  // totals must still divide it.
  std::vector<int64_t> count_set;
  BigInt c_lcm;
  BigInt n;
};

absl::StatusOr<FixedPointConfig> MakeFixedPointConfig(
    double precision, int64_t n_max, std::vector<int64_t> count_set,
    const BigInt& n);

// Worst-case magnitudes entering the encoder.
struct MagnitudeBounds {
  double max_abs_update = 0.0;  // per coordinate of a clipped delta
  double max_abs_noise = 0.0;   // per coordinate of one silo's noise
};

struct PreflightViolation {
  enum class Kind { kRecordCount, kFieldCapacity };
  Kind kind;
  std::string detail;
};

// Checks, in order: every user total is admissible (at most n_max and
// dividing C_LCM), then sum_{s,u} E n[s][u] C_LCM / N_u + |S| Z C_LCM < n / 2
// for encoded bounds E and Z. Returns the first violation.
std::optional<PreflightViolation> CorrectnessPreflight(
    const FixedPointConfig& config, const allocation::Histogram& hist,
    const MagnitudeBounds& bounds);
// The same check as a FailedPrecondition status.
absl::Status PreflightStatus(const FixedPointConfig& config,
                             const allocation::Histogram& hist,
                             const MagnitudeBounds& bounds);

inline constexpr int32_t kServer = -1;

struct TranscriptEntry {
  std::string phase;
  int64_t round = 0;
  int32_t from = 0;
  int32_t to = 0;
  std::string digest;  // hex BLAKE2b-128 of the payload
  size_t bytes = 0;
};

// One JSON object per line: phase, round, from, to, payload_digest, bytes.
void WriteTranscriptJsonl(std::span<const TranscriptEntry> entries,
                          std::ostream& out);

// Per-recipient FIFO queues; every Send is logged.
class MessageBus {
 public:
  void Send(std::string phase, int64_t round, int32_t from, int32_t to,
            std::string payload);
  // Next message from `from` to `to`; fails when none is queued or the phase
  // does not match.
  absl::StatusOr<std::string> Receive(int32_t from, int32_t to,
                                      std::string_view phase);
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }
  void WriteTranscript(std::ostream& out) const {
    WriteTranscriptJsonl(transcript_, out);
  }

 private:
  struct Message {
    int32_t from;
    std::string phase;
    std::string payload;
  };
  std::map<int32_t, std::deque<Message>> queues_;
  std::vector<TranscriptEntry> transcript_;
};

struct ProtocolConfig {
  int32_t key_bits = 3072;
  double precision = 1e-10;
  int64_t n_max = 2000;
  std::vector<int64_t> count_set;
  uint64_t seed = 0;
};

struct PhaseTiming {
  std::string phase;  // keyex, blind, train or aggregate
  int32_t party = 0;
  int64_t round = 0;  // 0 for setup, rounds count from 1
  double ms = 0.0;
};

// One run of the protocol: setup at construction, then any number of rounds.
class WeightingSession {
 public:
  // Fails on preflight condition violations (FailedPrecondition) and on
  // users whose blinded total is not invertible (Internal).
  static absl::StatusOr<std::unique_ptr<WeightingSession>> Setup(
      const ProtocolConfig& config, const allocation::Histogram& hist);

  // clipped[s][u] may be empty (no contribution); noise[s] is silo s's draw.
  // `sampled` empty means all users; otherwise the server zeroes the inverse
  // of every unsampled user. Returns the decoded
  // sum_s (sum_u n[s][u] / N_u * clipped[s][u] + noise[s]).
  absl::StatusOr<fl::Vector> AggregateRound(
      int64_t round, const std::vector<std::vector<fl::Vector>>& clipped,
      const std::vector<fl::Vector>& noise, const std::vector<bool>& sampled);

  const PaillierPublicKey& public_key() const { return keys_.pub; }
  const FixedPointConfig& fixed_point() const { return fixed_; }
  const MessageBus& bus() const { return bus_; }
  const std::vector<PhaseTiming>& timings() const { return timings_; }
  // Adds to the silo's train timing for `round` (creating the row).
  void AddTrainTime(int32_t silo, int64_t round, double ms);

  // Server view: r_u * N_u and its inverse (zero for users without records).
  const std::vector<BigInt>& blinded_totals() const { return blinded_totals_; }
  const std::vector<BigInt>& blinded_inverses() const { return inverses_; }
  // Blinds as held by `silo`; identical across silos.
  const std::vector<BigInt>& blinds(int32_t silo) const {
    return silos_[silo].blinds;
  }

  // Worst-case decoding error of one round: precision * (|S||U| + |S|).
  double Tolerance() const;

 private:
  struct SiloState {
    DhKeypair dh;
    std::vector<Key> pair_keys;
    Key seed_key{};
    std::vector<BigInt> blinds;
    std::vector<int64_t> counts;  // n[s][u]
    Prg prg;
  };

  WeightingSession(const ProtocolConfig& config, const allocation::Histogram& hist);
  absl::Status RunSetup();

  ProtocolConfig config_;
  allocation::Histogram hist_;
  DhGroup group_;
  PaillierKeypair keys_;
  FixedPointConfig fixed_;
  Prg server_prg_;
  std::vector<SiloState> silos_;
  std::vector<BigInt> blinded_totals_;
  std::vector<BigInt> inverses_;
  MessageBus bus_;
  std::vector<PhaseTiming> timings_;
};

struct BenchScenario {
  int32_t silos = 3;
  int32_t users = 10;
  // Feature dimension; the two-class softmax model has 2 * (dim + 1)
  // parameters.
  int32_t dim = 8;
  int32_t rounds = 1;
  int32_t key_bits = 3072;
  double precision = 1e-10;
  int64_t n_max = 2000;
  int32_t records_per_pair = 4;
  uint64_t seed = 0;
};

struct BenchReport {
  std::vector<PhaseTiming> timings;
  int64_t num_params = 0;
  double max_abs_error = 0.0;  // decoded vs plaintext, worst round
  double tolerance = 0.0;
  bool correct = false;
  std::vector<TranscriptEntry> transcript;
};

// Setup plus `rounds` rounds of real local training and secure aggregation
// on a uniform allocation; the train phase covers training and encryption.
absl::StatusOr<BenchReport> BenchPhases(const BenchScenario& scenario);

// Header phase,party,round,ms; the server is party -1.
void WriteTimingsCsv(std::span<const PhaseTiming> timings, std::ostream& out);
// Total time of `phase` over parties and rounds.
double TotalPhaseMs(std::span<const PhaseTiming> timings, std::string_view phase);

}  // namespace uldp::secure

#endif  // ULDP_SECURE_H_
