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

#include <sodium.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "absl/strings/str_format.h"
#include "json.hpp"
#include "uldp/dataset.h"
#include "uldp/fl.h"
#include "uldp/random.h"
#include "uldp/secure.h"

namespace uldp::secure {
namespace {

// Keystream domains; each (domain, stream) pair is used once per key.
constexpr uint32_t kHistogramMaskDomain = 1;
constexpr uint32_t kRoundMaskDomain = 2;
constexpr uint32_t kBlindDomain = 3;

constexpr std::string_view kMaskLabel = "uldp pairwise mask key";
constexpr std::string_view kBoxLabel = "uldp seed box key";

using Clock = std::chrono::steady_clock;

double MsSince(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void PutU32(std::string& out, uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>(v >> (8 * i)));
}

uint32_t GetU32(const std::string& in, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<uint8_t>(in[pos + i]);
  return v;
}

// Length-prefixed big-endian magnitudes.
std::string PackInts(const std::vector<BigInt>& values) {
  std::string out;
  PutU32(out, static_cast<uint32_t>(values.size()));
  for (const BigInt& v : values) {
    std::string bytes((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8, '\0');
    size_t count = 0;
    if (v != 0) {
      mpz_export(bytes.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
    }
    bytes.resize(count);
    PutU32(out, static_cast<uint32_t>(count));
    out += bytes;
  }
  return out;
}

absl::StatusOr<std::vector<BigInt>> UnpackInts(const std::string& in) {
  if (in.size() < 4) return absl::DataLossError("truncated payload");
  const uint32_t count = GetU32(in, 0);
  std::vector<BigInt> out;
  out.reserve(count);
  size_t pos = 4;
  for (uint32_t i = 0; i < count; ++i) {
    if (pos + 4 > in.size()) return absl::DataLossError("truncated payload");
    const uint32_t len = GetU32(in, pos);
    pos += 4;
    if (pos + len > in.size()) return absl::DataLossError("truncated payload");
    BigInt v;
    mpz_import(v.get_mpz_t(), len, 1, 1, 1, 0, in.data() + pos);
    out.push_back(v);
    pos += len;
  }
  if (pos != in.size()) return absl::DataLossError("trailing payload bytes");
  return out;
}

std::string HexDigest(const std::string& payload) {
  uint8_t digest[16];
  crypto_generichash(digest, sizeof(digest),
                     reinterpret_cast<const uint8_t*>(payload.data()),
                     payload.size(), nullptr, 0);
  std::string hex;
  for (uint8_t b : digest) hex += absl::StrFormat("%02x", b);
  return hex;
}

// ceil(x / precision) + 1, the largest encoded magnitude of |value| <= x.
BigInt EncodedBound(double x, double precision) {
  BigInt v;
  mpz_set_d(v.get_mpz_t(), std::ceil(std::abs(x) / precision));
  return v + 1;
}

double Log10(const BigInt& x) {
  if (x <= 0) return -INFINITY;
  long exp = 0;
  const double mant = mpz_get_d_2exp(&exp, x.get_mpz_t());
  return std::log10(mant) + exp * std::log10(2.0);
}

}  // namespace

absl::StatusOr<FixedPointConfig> MakeFixedPointConfig(
    double precision, int64_t n_max, std::vector<int64_t> count_set,
    const BigInt& n) {
  if (!(precision > 0.0) || !std::isfinite(precision)) {
    return absl::InvalidArgumentError("precision must be positive and finite");
  }
  if (n_max < 1) return absl::InvalidArgumentError("n_max must be at least 1");
  for (int64_t c : count_set) {
    if (c < 1) return absl::InvalidArgumentError("count set entries must be >= 1");
  }
  if (n <= 1) return absl::InvalidArgumentError("field modulus must exceed 1");
  FixedPointConfig cfg;
  cfg.precision = precision;
  cfg.n_max = n_max;
  cfg.count_set = std::move(count_set);
  cfg.c_lcm = cfg.count_set.empty() ? LcmUpTo(n_max) : LcmOf(cfg.count_set);
  cfg.n = n;
  return cfg;
}

std::optional<PreflightViolation> CorrectnessPreflight(
    const FixedPointConfig& config, const allocation::Histogram& hist,
    const MagnitudeBounds& bounds) {
  using Kind = PreflightViolation::Kind;
  for (int32_t u = 0; u < hist.num_users(); ++u) {
    const int64_t total = hist.UserTotal(u);
    if (total == 0) continue;
    if (total > config.n_max) {
      return PreflightViolation{
          Kind::kRecordCount,
          absl::StrFormat("user %d holds %d records, above N_max = %d", u, total,
                          config.n_max)};
    }
    if (config.c_lcm % BigInt(static_cast<long>(total)) != 0) {
      return PreflightViolation{
          Kind::kRecordCount,
          absl::StrFormat("user %d total %d does not divide C_LCM", u, total)};
    }
  }
  const BigInt e = EncodedBound(bounds.max_abs_update, config.precision);
  const BigInt z = EncodedBound(bounds.max_abs_noise, config.precision);
  BigInt sum = 0;
  for (int32_t u = 0; u < hist.num_users(); ++u) {
    const int64_t total = hist.UserTotal(u);
    if (total == 0) continue;
    const BigInt share = config.c_lcm / BigInt(static_cast<long>(total));
    for (int32_t s = 0; s < hist.num_silos(); ++s) {
      sum += e * BigInt(static_cast<long>(hist.at(s, u))) * share;
    }
  }
  sum += BigInt(hist.num_silos()) * z * config.c_lcm;
  if (2 * sum >= config.n) {
    return PreflightViolation{
        Kind::kFieldCapacity,
        absl::StrFormat("encoded aggregate bound 10^%.1f reaches n / 2 = 10^%.1f",
                        Log10(sum), Log10(config.n) - std::log10(2.0))};
  }
  return std::nullopt;
}

absl::Status PreflightStatus(const FixedPointConfig& config,
                             const allocation::Histogram& hist,
                             const MagnitudeBounds& bounds) {
  std::optional<PreflightViolation> v = CorrectnessPreflight(config, hist, bounds);
  if (!v.has_value()) return absl::OkStatus();
  const char* what = v->kind == PreflightViolation::Kind::kRecordCount
                         ? "record-count bound"
                         : "field-capacity bound";
  return absl::FailedPreconditionError(absl::StrFormat("%s: %s", what, v->detail));
}

void MessageBus::Send(std::string phase, int64_t round, int32_t from, int32_t to,
                      std::string payload) {
  transcript_.push_back(
      {phase, round, from, to, HexDigest(payload), payload.size()});
  queues_[to].push_back({from, std::move(phase), std::move(payload)});
}

absl::StatusOr<std::string> MessageBus::Receive(int32_t from, int32_t to,
                                                std::string_view phase) {
  std::deque<Message>& queue = queues_[to];
  auto it = std::find_if(queue.begin(), queue.end(),
                         [&](const Message& m) { return m.from == from; });
  if (it == queue.end()) {
    return absl::NotFoundError(
        absl::StrFormat("no message from %d to %d", from, to));
  }
  if (it->phase != phase) {
    return absl::FailedPreconditionError(absl::StrFormat(
        "expected phase %s from %d, got %s", std::string(phase), from, it->phase));
  }
  std::string payload = std::move(it->payload);
  queue.erase(it);
  return payload;
}

void WriteTranscriptJsonl(std::span<const TranscriptEntry> entries,
                          std::ostream& out) {
  for (const TranscriptEntry& e : entries) {
    nlohmann::json j = {{"phase", e.phase},   {"round", e.round},
                        {"from", e.from},     {"to", e.to},
                        {"payload_digest", e.digest}, {"bytes", e.bytes}};
    out << j.dump() << "\n";
  }
}

WeightingSession::WeightingSession(const ProtocolConfig& config,
                                   const allocation::Histogram& hist)
    : config_(config),
      hist_(hist),
      group_(DhGroupFor(config.key_bits)),
      server_prg_(Prg::FromSeed(config.seed, {kTagProtocol, 0})) {}

absl::StatusOr<std::unique_ptr<WeightingSession>> WeightingSession::Setup(
    const ProtocolConfig& config, const allocation::Histogram& hist) {
  if (hist.num_silos() < 1 || hist.num_users() < 1) {
    return absl::InvalidArgumentError("protocol needs at least one silo and user");
  }
  std::unique_ptr<WeightingSession> session(new WeightingSession(config, hist));
  if (absl::Status s = session->RunSetup(); !s.ok()) return s;
  return session;
}

absl::Status WeightingSession::RunSetup() {
  const int32_t S = hist_.num_silos();
  const int32_t U = hist_.num_users();

  // Key exchange: Paillier key from the server, DH values relayed by it.
  Clock::time_point start = Clock::now();
  absl::StatusOr<PaillierKeypair> kp = PaillierKeygen(config_.key_bits, server_prg_);
  if (!kp.ok()) return kp.status();
  keys_ = *std::move(kp);
  absl::StatusOr<FixedPointConfig> fixed = MakeFixedPointConfig(
      config_.precision, config_.n_max, config_.count_set, keys_.pub.n);
  if (!fixed.ok()) return fixed.status();
  fixed_ = *std::move(fixed);
  if (absl::Status s = PreflightStatus(fixed_, hist_, {}); !s.ok()) return s;
  for (int32_t s = 0; s < S; ++s) {
    bus_.Send("keyex", 0, kServer, s, PackInts({keys_.pub.n}));
  }
  double server_ms = MsSince(start);

  std::vector<double> silo_ms(S, 0.0);
  for (int32_t s = 0; s < S; ++s) {
    start = Clock::now();
    Prg prg = Prg::FromSeed(config_.seed, {kTagProtocol, 1, static_cast<uint64_t>(s)});
    DhKeypair dh = DhGenerate(group_, prg);
    bus_.Send("keyex", 0, s, kServer, PackInts({dh.pub}));
    silos_.push_back({std::move(dh), {}, {}, {}, {}, std::move(prg)});
    silo_ms[s] += MsSince(start);
  }
  start = Clock::now();
  std::vector<BigInt> publics;
  for (int32_t s = 0; s < S; ++s) {
    absl::StatusOr<std::string> msg = bus_.Receive(s, kServer, "keyex");
    if (!msg.ok()) return msg.status();
    absl::StatusOr<std::vector<BigInt>> v = UnpackInts(*msg);
    if (!v.ok() || v->size() != 1) return absl::DataLossError("bad DH message");
    publics.push_back((*v)[0]);
  }
  const std::string directory = PackInts(publics);
  for (int32_t s = 0; s < S; ++s) bus_.Send("keyex", 0, kServer, s, directory);
  server_ms += MsSince(start);

  std::vector<std::vector<Key>> box_keys(S, std::vector<Key>(S));
  BigInt n;
  for (int32_t s = 0; s < S; ++s) {
    start = Clock::now();
    SiloState& silo = silos_[s];
    absl::StatusOr<std::string> pk_msg = bus_.Receive(kServer, s, "keyex");
    absl::StatusOr<std::string> dir_msg = bus_.Receive(kServer, s, "keyex");
    if (!pk_msg.ok()) return pk_msg.status();
    if (!dir_msg.ok()) return dir_msg.status();
    absl::StatusOr<std::vector<BigInt>> pk = UnpackInts(*pk_msg);
    absl::StatusOr<std::vector<BigInt>> dir = UnpackInts(*dir_msg);
    if (!pk.ok() || pk->size() != 1 || !dir.ok() ||
        dir->size() != static_cast<size_t>(S)) {
      return absl::DataLossError("bad key directory");
    }
    n = (*pk)[0];
    silo.pair_keys.assign(S, Key{});
    for (int32_t other = 0; other < S; ++other) {
      if (other == s) continue;
      absl::StatusOr<Key> mask_key =
          DhSharedKey(group_, silo.dh.secret, (*dir)[other], kMaskLabel);
      absl::StatusOr<Key> box_key =
          DhSharedKey(group_, silo.dh.secret, (*dir)[other], kBoxLabel);
      if (!mask_key.ok()) return mask_key.status();
      if (!box_key.ok()) return box_key.status();
      silo.pair_keys[other] = *mask_key;
      box_keys[s][other] = *box_key;
    }
    silo_ms[s] += MsSince(start);
  }

  // Common seed: silo 0 boxes it for every other silo, routed by the server.
  start = Clock::now();
  silos_[0].seed_key = silos_[0].prg.NextKey();
  for (int32_t other = 1; other < S; ++other) {
    std::string payload;
    PutU32(payload, static_cast<uint32_t>(other));
    uint8_t nonce[crypto_secretbox_NONCEBYTES];
    silos_[0].prg.Fill(nonce, sizeof(nonce));
    std::string box(crypto_secretbox_MACBYTES + silos_[0].seed_key.size(), '\0');
    crypto_secretbox_easy(reinterpret_cast<uint8_t*>(box.data()),
                          silos_[0].seed_key.data(), silos_[0].seed_key.size(),
                          nonce, box_keys[0][other].data());
    payload.append(reinterpret_cast<const char*>(nonce), sizeof(nonce));
    payload += box;
    bus_.Send("seed", 0, 0, kServer, std::move(payload));
  }
  silo_ms[0] += MsSince(start);
  start = Clock::now();
  for (int32_t other = 1; other < S; ++other) {
    absl::StatusOr<std::string> msg = bus_.Receive(0, kServer, "seed");
    if (!msg.ok()) return msg.status();
    if (msg->size() < 4) return absl::DataLossError("bad seed envelope");
    const int32_t to = static_cast<int32_t>(GetU32(*msg, 0));
    bus_.Send("seed", 0, kServer, to, msg->substr(4));
  }
  server_ms += MsSince(start);
  for (int32_t s = 1; s < S; ++s) {
    start = Clock::now();
    absl::StatusOr<std::string> msg = bus_.Receive(kServer, s, "seed");
    if (!msg.ok()) return msg.status();
    const size_t expected = crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES +
                            silos_[s].seed_key.size();
    if (msg->size() != expected) return absl::DataLossError("bad seed box");
    const auto* bytes = reinterpret_cast<const uint8_t*>(msg->data());
    if (crypto_secretbox_open_easy(silos_[s].seed_key.data(),
                                   bytes + crypto_secretbox_NONCEBYTES,
                                   msg->size() - crypto_secretbox_NONCEBYTES, bytes,
                                   box_keys[s][0].data()) != 0) {
      return absl::DataLossError("seed box failed authentication");
    }
    silo_ms[s] += MsSince(start);
  }
  timings_.push_back({"keyex", kServer, 0, server_ms});
  for (int32_t s = 0; s < S; ++s) timings_.push_back({"keyex", s, 0, silo_ms[s]});

  // Blinded histogram under pairwise masks.
  for (int32_t s = 0; s < S; ++s) {
    start = Clock::now();
    SiloState& silo = silos_[s];
    Prg blinds(silo.seed_key, kBlindDomain, 0);
    silo.blinds.clear();
    silo.counts.clear();
    for (int32_t u = 0; u < U; ++u) {
      silo.blinds.push_back(blinds.UnitBelow(n));
      silo.counts.push_back(hist_.at(s, u));
    }
    std::vector<BigInt> masks =
        PairwiseMasks(s, silo.pair_keys, kHistogramMaskDomain, 0, U, n);
    std::vector<BigInt> submitted(U);
    for (int32_t u = 0; u < U; ++u) {
      submitted[u] = (Blind(silo.counts[u], silo.blinds[u], n) + masks[u]) % n;
    }
    bus_.Send("blind", 0, s, kServer, PackInts(submitted));
    timings_.push_back({"blind", s, 0, MsSince(start)});
  }
  start = Clock::now();
  blinded_totals_.assign(U, BigInt(0));
  for (int32_t s = 0; s < S; ++s) {
    absl::StatusOr<std::string> msg = bus_.Receive(s, kServer, "blind");
    if (!msg.ok()) return msg.status();
    absl::StatusOr<std::vector<BigInt>> v = UnpackInts(*msg);
    if (!v.ok() || v->size() != static_cast<size_t>(U)) {
      return absl::DataLossError("bad blinded histogram");
    }
    for (int32_t u = 0; u < U; ++u) blinded_totals_[u] += (*v)[u];
  }
  inverses_.assign(U, BigInt(0));
  std::vector<int32_t> failed;
  for (int32_t u = 0; u < U; ++u) {
    BigInt& total = blinded_totals_[u];
    total %= keys_.pub.n;
    // A zero total is a user without records; it keeps a zero inverse.
    if (total == 0) continue;
    absl::StatusOr<BigInt> inv = ModInverse(total, keys_.pub.n);
    if (!inv.ok()) {
      failed.push_back(u);
      continue;
    }
    inverses_[u] = *inv;
  }
  timings_.push_back({"blind", kServer, 0, MsSince(start)});
  if (!failed.empty()) {
    std::string users;
    for (int32_t u : failed) users += absl::StrFormat(" %d", u);
    return absl::InternalError("blinded totals not invertible for users" + users);
  }
  return absl::OkStatus();
}

absl::StatusOr<fl::Vector> WeightingSession::AggregateRound(
    int64_t round, const std::vector<std::vector<fl::Vector>>& clipped,
    const std::vector<fl::Vector>& noise, const std::vector<bool>& sampled) {
  const int32_t S = hist_.num_silos();
  const int32_t U = hist_.num_users();
  if (clipped.size() != static_cast<size_t>(S) ||
      noise.size() != static_cast<size_t>(S)) {
    return absl::InvalidArgumentError("one entry per silo required");
  }
  if (!sampled.empty() && sampled.size() != static_cast<size_t>(U)) {
    return absl::InvalidArgumentError("sampling mask has the wrong length");
  }
  const Eigen::Index dim = noise[0].size();
  MagnitudeBounds bounds;
  for (int32_t s = 0; s < S; ++s) {
    if (clipped[s].size() != static_cast<size_t>(U) || noise[s].size() != dim) {
      return absl::InvalidArgumentError("contribution shape mismatch");
    }
    if (dim > 0) {
      bounds.max_abs_noise =
          std::max(bounds.max_abs_noise, noise[s].cwiseAbs().maxCoeff());
    }
    for (const fl::Vector& d : clipped[s]) {
      if (d.size() == 0) continue;
      if (d.size() != dim) {
        return absl::InvalidArgumentError("contribution shape mismatch");
      }
      if (dim > 0) {
        bounds.max_abs_update = std::max(bounds.max_abs_update, d.cwiseAbs().maxCoeff());
      }
    }
  }
  if (!std::isfinite(bounds.max_abs_noise) || !std::isfinite(bounds.max_abs_update)) {
    return absl::InvalidArgumentError("non-finite contribution");
  }
  if (absl::Status s = PreflightStatus(fixed_, hist_, bounds); !s.ok()) return s;
  const PaillierPublicKey& pk = keys_.pub;
  const BigInt& n = pk.n;

  // Server: encrypted inverses, zero for users left out this round.
  Clock::time_point start = Clock::now();
  std::vector<BigInt> enc_inverses(U);
  for (int32_t u = 0; u < U; ++u) {
    const bool in = sampled.empty() || sampled[u];
    enc_inverses[u] = PaillierEncrypt(pk, in ? inverses_[u] : BigInt(0), server_prg_);
  }
  const std::string table = PackInts(enc_inverses);
  for (int32_t s = 0; s < S; ++s) bus_.Send("weights", round, kServer, s, table);
  double server_ms = MsSince(start);

  // Silos: weighted, encoded, masked ciphertexts per coordinate.
  for (int32_t s = 0; s < S; ++s) {
    start = Clock::now();
    SiloState& silo = silos_[s];
    absl::StatusOr<std::string> msg = bus_.Receive(kServer, s, "weights");
    if (!msg.ok()) return msg.status();
    absl::StatusOr<std::vector<BigInt>> inv = UnpackInts(*msg);
    if (!inv.ok() || inv->size() != static_cast<size_t>(U)) {
      return absl::DataLossError("bad inverse table");
    }
    // n[s][u] * r_u * C_LCM, shared by all coordinates.
    std::vector<BigInt> factor(U);
    for (int32_t u = 0; u < U; ++u) {
      factor[u] = (BigInt(static_cast<long>(silo.counts[u])) * silo.blinds[u] %
                   n) * fixed_.c_lcm % n;
    }
    const std::vector<BigInt> masks =
        PairwiseMasks(s, silo.pair_keys, kRoundMaskDomain,
                      static_cast<uint64_t>(round), static_cast<size_t>(dim), n);
    std::vector<BigInt> out(static_cast<size_t>(dim));
    for (Eigen::Index j = 0; j < dim; ++j) {
      BigInt acc = 1;
      for (int32_t u = 0; u < U; ++u) {
        if (silo.counts[u] == 0 || clipped[s][u].size() == 0) continue;
        absl::StatusOr<BigInt> e = Encode(clipped[s][u][j], fixed_.precision, n);
        if (!e.ok()) return e.status();
        const BigInt k = *e * factor[u] % n;
        acc = PaillierAdd(pk, acc, PaillierScalarMul(pk, (*inv)[u], k));
      }
      absl::StatusOr<BigInt> z = Encode(noise[s][j], fixed_.precision, n);
      if (!z.ok()) return z.status();
      const BigInt plain = (*z * fixed_.c_lcm + masks[j]) % n;
      acc = PaillierAdd(pk, acc, PaillierEncrypt(pk, plain, silo.prg));
      out[j] = acc;
    }
    bus_.Send("aggregate", round, s, kServer, PackInts(out));
    timings_.push_back({"train", s, round, MsSince(start)});
  }

  // Server: product of ciphertexts, decryption and decoding.
  start = Clock::now();
  std::vector<BigInt> product(static_cast<size_t>(dim), BigInt(1));
  for (int32_t s = 0; s < S; ++s) {
    absl::StatusOr<std::string> msg = bus_.Receive(s, kServer, "aggregate");
    if (!msg.ok()) return msg.status();
    absl::StatusOr<std::vector<BigInt>> c = UnpackInts(*msg);
    if (!c.ok() || c->size() != static_cast<size_t>(dim)) {
      return absl::DataLossError("bad ciphertext vector");
    }
    for (Eigen::Index j = 0; j < dim; ++j) product[j] = PaillierAdd(pk, product[j], (*c)[j]);
  }
  fl::Vector result(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    result[j] = Decode(PaillierDecrypt(keys_, product[j]), fixed_.precision,
                       fixed_.c_lcm, n);
  }
  server_ms += MsSince(start);
  timings_.push_back({"aggregate", kServer, round, server_ms});
  return result;
}

void WeightingSession::AddTrainTime(int32_t silo, int64_t round, double ms) {
  for (PhaseTiming& t : timings_) {
    if (t.phase == "train" && t.party == silo && t.round == round) {
      t.ms += ms;
      return;
    }
  }
  timings_.push_back({"train", silo, round, ms});
}

double WeightingSession::Tolerance() const {
  return fixed_.precision * (static_cast<double>(hist_.num_silos()) * hist_.num_users() +
                             hist_.num_silos());
}

absl::StatusOr<BenchReport> BenchPhases(const BenchScenario& sc) {
  if (sc.silos < 1 || sc.users < 1 || sc.dim < 1 || sc.rounds < 1 ||
      sc.records_per_pair < 1) {
    return absl::InvalidArgumentError("bench scenario sizes must be positive");
  }
  allocation::RecordAllocation alloc;
  alloc.num_silos = sc.silos;
  alloc.num_users = sc.users;
  for (int32_t s = 0; s < sc.silos; ++s) {
    for (int32_t u = 0; u < sc.users; ++u) {
      for (int32_t i = 0; i < sc.records_per_pair; ++i) alloc.records.push_back({u, s});
    }
  }
  data::SyntheticSpec spec;
  spec.dim = sc.dim;
  absl::StatusOr<data::SyntheticDataset> dataset =
      data::GenerateDataset(spec, alloc, 10, sc.seed);
  if (!dataset.ok()) return dataset.status();
  absl::StatusOr<fl::FederatedData> fed = fl::Partition(dataset->train, alloc);
  if (!fed.ok()) return fed.status();
  const fl::SoftmaxRegression model(sc.dim, 2);
  const fl::WeightMatrix weights = fl::OptimalWeights(fed->histogram);

  ProtocolConfig pc;
  pc.key_bits = sc.key_bits;
  pc.precision = sc.precision;
  pc.n_max = sc.n_max;
  pc.seed = sc.seed;
  absl::StatusOr<std::unique_ptr<WeightingSession>> session =
      WeightingSession::Setup(pc, fed->histogram);
  if (!session.ok()) return session.status();

  BenchReport report;
  report.num_params = model.num_params();
  report.tolerance = (*session)->Tolerance();
  fl::RoundContext ctx{&model, &*fed, &weights, fl::TrainConfig{}, sc.seed, 0};
  fl::Vector params = fl::Vector::Zero(model.num_params());
  for (int32_t r = 1; r <= sc.rounds; ++r) {
    ctx.round = r;
    fl::SiloContributions all;
    all.clipped.resize(sc.silos);
    all.noise.resize(sc.silos);
    std::vector<double> train_ms(sc.silos);
    for (int32_t s = 0; s < sc.silos; ++s) {
      const Clock::time_point start = Clock::now();
      absl::StatusOr<fl::SiloContributions> part =
          fl::UserContributions(params, ctx, {}, s);
      if (!part.ok()) return part.status();
      all.clipped[s] = std::move(part->clipped[s]);
      all.noise[s] = std::move(part->noise[s]);
      train_ms[s] = MsSince(start);
    }
    absl::StatusOr<fl::Vector> secure =
        (*session)->AggregateRound(r, all.clipped, all.noise, {});
    if (!secure.ok()) return secure.status();
    for (int32_t s = 0; s < sc.silos; ++s) (*session)->AddTrainTime(s, r, train_ms[s]);
    fl::Vector plain = fl::WeightedSum(all, weights, model.num_params());
    for (const fl::Vector& z : all.noise) plain += z;
    report.max_abs_error =
        std::max(report.max_abs_error, (*secure - plain).cwiseAbs().maxCoeff());
    const double scale = ctx.config.eta_g / (static_cast<double>(sc.users) * sc.silos);
    params += scale * *secure;
  }
  report.correct = report.max_abs_error <= report.tolerance;
  report.timings = (*session)->timings();
  report.transcript = (*session)->bus().transcript();
  return report;
}

void WriteTimingsCsv(std::span<const PhaseTiming> timings, std::ostream& out) {
  out << "phase,party,round,ms\n";
  for (const PhaseTiming& t : timings) {
    out << absl::StrFormat("%s,%d,%d,%.6f\n", t.phase, t.party, t.round, t.ms);
  }
}

double TotalPhaseMs(std::span<const PhaseTiming> timings, std::string_view phase) {
  double total = 0.0;
  for (const PhaseTiming& t : timings) {
    if (t.phase == phase) total += t.ms;
  }
  return total;
}

}  // namespace uldp::secure
