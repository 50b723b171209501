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

#ifndef ULDP_RANDOM_H_
#define ULDP_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace uldp {

using Rng = std::mt19937_64;

// Independent stream for one party/purpose. Streams depend only on the seed
// and the tag path, so serial and parallel schedules draw identical values.
Rng DeriveStream(uint64_t seed, std::initializer_list<uint64_t> tags);

// Tags naming the consumers of derived streams.
enum StreamTag : uint64_t {
  kTagAllocation = 1,
  kTagDataset = 2,
  kTagLocalTraining = 3,
  kTagSiloNoise = 4,
  kTagUserSampling = 5,
  kTagDpSgd = 6,
  kTagProtocol = 7,
  kTagModelInit = 8,
  kTagRepetition = 9,
};

}  // namespace uldp

#endif  // ULDP_RANDOM_H_
