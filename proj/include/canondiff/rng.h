//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_RNG_H_
#define CANONDIFF_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace canondiff {

using Rng = std::mt19937_64;

// Independent generator for substream `name`, draw number `counter`, derived
// from the root seed. The same triple always yields the same stream.
Rng make_stream(std::uint64_t root_seed, std::string_view name,
                std::uint64_t counter = 0);

}  // namespace canondiff

#endif  // CANONDIFF_RNG_H_
