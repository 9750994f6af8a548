//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_CHECKPOINT_H_
#define CANONDIFF_CHECKPOINT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "canondiff/config.h"
#include "canondiff/diffusion.h"

namespace canondiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class BlockType : std::uint8_t { kF64 = 0, kI64 = 1 };

struct Block {
  std::string name;
  BlockType type = BlockType::kF64;
  std::vector<std::uint64_t> dims;
  // Exactly one of these is filled, matching `type`.
  std::vector<double> f64;
  std::vector<std::int64_t> i64;

  std::size_t count() const;
};

/**
 * @brief Named blocks plus the config they were produced under.
 *
 * Layout, all integers little-endian:
 *   "CDCKPT\0\0"  u32 version  u64 config_len  config bytes
 *   u32 block_count
 *   per block: u16 name_len, name, u8 type, u8 rank, u64 dims[rank],
 *              u64 offset into the payload
 *   payload: block values back to back, 8 bytes each
 */
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::vector<Block> blocks;

  const Block *find(std::string_view name) const;
  const Block &at(std::string_view name) const;
};

std::string serialize(const Checkpoint &c);
// Throws ParseError for truncated or malformed bytes (line = byte offset)
// and ContractViolation for an unknown version.
Checkpoint deserialize(std::string_view bytes);

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c);
Checkpoint load_checkpoint(const std::filesystem::path &path);

// Training progress stored alongside the weights.
struct TrainProgress {
  std::int64_t step = 0;
  std::size_t skipped = 0;
  std::vector<double> losses;
};

/**
 * @brief Snapshot of a model and, when given, its trainer.
 *
 * Blocks: denoiser/<param>, canonicalizer/<param> (network kinds), and with
 * a trainer ema/<param>, adam/m/<param>, adam/v/<param>, adam/step,
 * rng/step, train/skipped, train/losses.
 */
Checkpoint make_checkpoint(const RunConfig &config, const Model &model,
                           const Trainer *trainer = nullptr,
                           const TrainProgress *progress = nullptr);

// Rebuilds the model stored in `c` with its live (not EMA) parameters.
Model restore_model(const Checkpoint &c);

// Restores trainer state and returns the stored progress. The trainer must
// wrap a model restored from the same checkpoint.
TrainProgress restore_trainer(const Checkpoint &c, Trainer &trainer);

// Overwrites the trainable parameters with their EMA shadows when the
// checkpoint has them.
void apply_ema(const Checkpoint &c, Model &model);

}  // namespace canondiff

#endif  // CANONDIFF_CHECKPOINT_H_
