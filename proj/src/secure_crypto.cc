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

// Cryptographic building blocks: keystream generator, Paillier, fixed-point
// encoding, modular helpers and Diffie-Hellman.

#include <sodium.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <vector>

#include "absl/strings/str_format.h"
#include "uldp/secure.h"

namespace uldp::secure {
namespace {

void EnsureSodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) std::abort();
  });
}

int64_t BitLength(const BigInt& x) {
  return x == 0 ? 0 : static_cast<int64_t>(mpz_sizeinbase(x.get_mpz_t(), 2));
}

// Big-endian magnitude, left-padded to `width` bytes when width > 0.
std::vector<uint8_t> ToBytes(const BigInt& x, size_t width = 0) {
  size_t count = 0;
  std::vector<uint8_t> raw((mpz_sizeinbase(x.get_mpz_t(), 2) + 7) / 8);
  if (x != 0) mpz_export(raw.data(), &count, 1, 1, 1, 0, x.get_mpz_t());
  raw.resize(count);
  if (width > raw.size()) raw.insert(raw.begin(), width - raw.size(), 0);
  return raw;
}

BigInt FromBytes(const uint8_t* data, size_t len) {
  BigInt x;
  mpz_import(x.get_mpz_t(), len, 1, 1, 1, 0, data);
  return x;
}

// Search attempts before key generation gives up.
constexpr int kKeygenAttempts = 64;

// RFC 3526 safe primes with generator 2.
constexpr const char* kModp2048Hex =
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

constexpr const char* kModp3072Hex =
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AAAC42DAD33170D04507A33"
    "A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7"
    "ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864"
    "D87602733EC86A64521F2B18177B200CBBE117577A615D6C770988C0BAD946E2"
    "08E24FA074E5AB3143DB5BFCE0FD108E4B82D120A93AD2CAFFFFFFFFFFFFFFFF";

}  // namespace

Prg::Prg(const Key& key, uint32_t domain, uint64_t stream) : key_(key) {
  EnsureSodium();
  for (int i = 0; i < 4; ++i) nonce_[i] = static_cast<uint8_t>(domain >> (8 * i));
  for (int i = 0; i < 8; ++i) {
    nonce_[4 + i] = static_cast<uint8_t>(stream >> (8 * i));
  }
}

Prg Prg::FromSeed(uint64_t seed, std::initializer_list<uint64_t> tags) {
  EnsureSodium();
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, 32);
  static constexpr char kLabel[] = "uldp seeded prg";
  crypto_generichash_update(&state, reinterpret_cast<const uint8_t*>(kLabel),
                            sizeof(kLabel));
  uint8_t word[8];
  auto absorb = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) word[i] = static_cast<uint8_t>(v >> (8 * i));
    crypto_generichash_update(&state, word, sizeof(word));
  };
  absorb(seed);
  for (uint64_t t : tags) absorb(t);
  Key key;
  crypto_generichash_final(&state, key.data(), key.size());
  return Prg(key, 0, 0);
}

Prg Prg::FromEntropy() {
  EnsureSodium();
  Key key;
  randombytes_buf(key.data(), key.size());
  return Prg(key, 0, 0);
}

void Prg::Refill() {
  static constexpr uint8_t kZero[64] = {};
  crypto_stream_chacha20_ietf_xor_ic(block_.data(), kZero, block_.size(),
                                     nonce_.data(), counter_++, key_.data());
  pos_ = 0;
}

void Prg::Fill(uint8_t* out, size_t len) {
  while (len > 0) {
    if (pos_ == block_.size()) Refill();
    const size_t take = std::min(len, block_.size() - pos_);
    std::memcpy(out, block_.data() + pos_, take);
    pos_ += take;
    out += take;
    len -= take;
  }
}

Key Prg::NextKey() {
  Key key;
  Fill(key.data(), key.size());
  return key;
}

BigInt Prg::UniformBelow(const BigInt& bound) {
  const int64_t bits = BitLength(bound);
  const size_t bytes = static_cast<size_t>((bits + 7) / 8);
  const int spare = static_cast<int>(bytes * 8 - bits);
  std::vector<uint8_t> buf(bytes);
  while (true) {
    Fill(buf.data(), bytes);
    buf[0] &= static_cast<uint8_t>(0xFF >> spare);
    BigInt x = FromBytes(buf.data(), bytes);
    if (x < bound) return x;
  }
}

BigInt Prg::UnitBelow(const BigInt& n) {
  while (true) {
    BigInt x = UniformBelow(n);
    BigInt g;
    mpz_gcd(g.get_mpz_t(), x.get_mpz_t(), n.get_mpz_t());
    if (x != 0 && g == 1) return x;
  }
}

BigInt Prg::TopBitsSet(int32_t bits) {
  BigInt bound = BigInt(1) << bits;
  BigInt x = UniformBelow(bound);
  mpz_setbit(x.get_mpz_t(), bits - 1);
  mpz_setbit(x.get_mpz_t(), bits - 2);
  return x;
}

absl::StatusOr<PaillierKeypair> PaillierKeygen(int32_t key_bits, Prg& prg) {
  if (key_bits < kMinKeyBits) {
    return absl::InvalidArgumentError(
        absl::StrFormat("key size %d below the minimum of %d bits", key_bits,
                        kMinKeyBits));
  }
  if (key_bits < 2048) {
    std::fprintf(stderr,
                 "WARNING: %d-bit Paillier key is for testing only and "
                 "offers no real security\n",
                 key_bits);
  }
  const int32_t p_bits = (key_bits + 1) / 2;
  const int32_t q_bits = key_bits / 2;
  for (int attempt = 0; attempt < kKeygenAttempts; ++attempt) {
    BigInt p, q;
    mpz_nextprime(p.get_mpz_t(), prg.TopBitsSet(p_bits).get_mpz_t());
    mpz_nextprime(q.get_mpz_t(), prg.TopBitsSet(q_bits).get_mpz_t());
    if (BitLength(p) != p_bits || BitLength(q) != q_bits || p == q) continue;
    const BigInt n = p * q;
    if (BitLength(n) != key_bits) continue;
    const BigInt phi = (p - 1) * (q - 1);
    BigInt g;
    mpz_gcd(g.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (g != 1) continue;
    PaillierKeypair kp;
    kp.pub.n = n;
    kp.pub.n_squared = n * n;
    kp.pub.bits = key_bits;
    mpz_lcm(kp.lambda.get_mpz_t(), BigInt(p - 1).get_mpz_t(),
            BigInt(q - 1).get_mpz_t());
    // With generator n + 1, L(g^lambda mod n^2) = lambda mod n.
    if (mpz_invert(kp.mu.get_mpz_t(), kp.lambda.get_mpz_t(), n.get_mpz_t()) == 0) {
      continue;
    }
    return kp;
  }
  return absl::InternalError(absl::StrFormat(
      "no valid %d-bit modulus after %d attempts", key_bits, kKeygenAttempts));
}

BigInt PaillierEncrypt(const PaillierPublicKey& pk, const BigInt& m, Prg& prg) {
  BigInt plain = m % pk.n;
  if (plain < 0) plain += pk.n;
  const BigInt r = prg.UnitBelow(pk.n);
  BigInt rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(),
           pk.n_squared.get_mpz_t());
  BigInt c = (1 + plain * pk.n) % pk.n_squared;
  return (c * rn) % pk.n_squared;
}

BigInt PaillierDecrypt(const PaillierKeypair& kp, const BigInt& c) {
  BigInt u;
  mpz_powm(u.get_mpz_t(), c.get_mpz_t(), kp.lambda.get_mpz_t(),
           kp.pub.n_squared.get_mpz_t());
  const BigInt l = (u - 1) / kp.pub.n;
  return (l * kp.mu) % kp.pub.n;
}

BigInt PaillierAdd(const PaillierPublicKey& pk, const BigInt& a, const BigInt& b) {
  return (a * b) % pk.n_squared;
}

BigInt PaillierScalarMul(const PaillierPublicKey& pk, const BigInt& c,
                         const BigInt& k) {
  BigInt e = k % pk.n;
  if (e < 0) e += pk.n;
  BigInt out;
  mpz_powm(out.get_mpz_t(), c.get_mpz_t(), e.get_mpz_t(), pk.n_squared.get_mpz_t());
  return out;
}

absl::StatusOr<BigInt> Encode(double x, double precision, const BigInt& n) {
  if (!(precision > 0.0) || !std::isfinite(precision)) {
    return absl::InvalidArgumentError("precision must be positive and finite");
  }
  if (!std::isfinite(x)) {
    return absl::InvalidArgumentError("cannot encode a non-finite value");
  }
  const double scaled = std::floor(x / precision);
  if (!std::isfinite(scaled)) {
    return absl::OutOfRangeError("value overflows the fixed-point scale");
  }
  BigInt v;
  mpz_set_d(v.get_mpz_t(), scaled);
  if (2 * abs(v) >= n) {
    return absl::OutOfRangeError(absl::StrFormat(
        "|%g| / %g does not fit below n / 2", x, precision));
  }
  if (v < 0) v += n;
  return v;
}

double Decode(const BigInt& x, double precision, const BigInt& c_lcm,
              const BigInt& n) {
  BigInt v = x % n;
  if (v < 0) v += n;
  if (2 * v > n) v -= n;
  mpq_class q(v, c_lcm);
  q.canonicalize();
  return q.get_d() * precision;
}

BigInt LcmUpTo(int64_t n_max) {
  BigInt out = 1;
  for (int64_t i = 2; i <= n_max; ++i) {
    mpz_lcm_ui(out.get_mpz_t(), out.get_mpz_t(), static_cast<unsigned long>(i));
  }
  return out;
}

BigInt LcmOf(std::span<const int64_t> counts) {
  BigInt out = 1;
  for (int64_t c : counts) {
    if (c > 0) {
      mpz_lcm_ui(out.get_mpz_t(), out.get_mpz_t(), static_cast<unsigned long>(c));
    }
  }
  return out;
}

absl::StatusOr<BigInt> ModInverse(const BigInt& a, const BigInt& n) {
  if (n <= 1) return absl::InvalidArgumentError("modulus must exceed 1");
  BigInt out;
  if (mpz_invert(out.get_mpz_t(), a.get_mpz_t(), n.get_mpz_t()) == 0) {
    return absl::InvalidArgumentError(
        absl::StrFormat("%s is not invertible mod n", a.get_str()));
  }
  return out;
}

DhGroup Modp2048() { return {"modp2048", BigInt(kModp2048Hex, 16), BigInt(2)}; }
DhGroup Modp3072() { return {"modp3072", BigInt(kModp3072Hex, 16), BigInt(2)}; }

DhGroup DhGroupFor(int32_t key_bits) {
  return key_bits > 2048 ? Modp3072() : Modp2048();
}

DhKeypair DhGenerate(const DhGroup& group, Prg& prg) {
  // 256-bit exponents give 128-bit security against generic attacks.
  DhKeypair kp;
  kp.secret = prg.UniformBelow(BigInt(1) << 256) + 2;
  mpz_powm(kp.pub.get_mpz_t(), group.g.get_mpz_t(), kp.secret.get_mpz_t(),
           group.p.get_mpz_t());
  return kp;
}

absl::StatusOr<Key> DhSharedKey(const DhGroup& group, const BigInt& secret,
                                const BigInt& peer_pub, std::string_view label) {
  if (peer_pub <= 1 || peer_pub >= group.p - 1) {
    return absl::InvalidArgumentError("degenerate Diffie-Hellman public value");
  }
  BigInt shared;
  mpz_powm(shared.get_mpz_t(), peer_pub.get_mpz_t(), secret.get_mpz_t(),
           group.p.get_mpz_t());
  const std::vector<uint8_t> bytes =
      ToBytes(shared, (mpz_sizeinbase(group.p.get_mpz_t(), 2) + 7) / 8);
  EnsureSodium();
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, 32);
  crypto_generichash_update(&state, reinterpret_cast<const uint8_t*>(label.data()),
                            label.size());
  crypto_generichash_update(&state, bytes.data(), bytes.size());
  Key key;
  crypto_generichash_final(&state, key.data(), key.size());
  return key;
}

BigInt Blind(int64_t count, const BigInt& r, const BigInt& n) {
  BigInt out = (r * BigInt(static_cast<long>(count))) % n;
  if (out < 0) out += n;
  return out;
}

std::vector<BigInt> PairwiseMasks(int32_t silo, std::span<const Key> pair_keys,
                                  uint32_t domain, uint64_t stream, size_t count,
                                  const BigInt& n) {
  std::vector<BigInt> masks(count, BigInt(0));
  for (int32_t other = 0; other < static_cast<int32_t>(pair_keys.size()); ++other) {
    if (other == silo) continue;
    Prg prg(pair_keys[other], domain, stream);
    for (size_t i = 0; i < count; ++i) {
      const BigInt m = prg.UniformBelow(n);
      masks[i] += other > silo ? m : BigInt(n - m);
    }
  }
  for (BigInt& m : masks) m %= n;
  return masks;
}

}  // namespace uldp::secure
