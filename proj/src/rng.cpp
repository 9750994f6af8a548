//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/rng.h"

namespace canondiff {
namespace {

// FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c: s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng make_stream(std::uint64_t root_seed, std::string_view name,
                std::uint64_t counter) {
  const std::uint64_t tag = fnv1a(name);
  std::seed_seq seq {
    static_cast<std::uint32_t>(root_seed),
    static_cast<std::uint32_t>(root_seed >> 32),
    static_cast<std::uint32_t>(tag),
    static_cast<std::uint32_t>(tag >> 32),
    static_cast<std::uint32_t>(counter),
    static_cast<std::uint32_t>(counter >> 32),
  };
  return Rng(seq);
}

}  // namespace canondiff
