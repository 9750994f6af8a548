//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_CONFIG_H_
#define CANONDIFF_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canondiff/canonical.h"
#include "canondiff/data.h"
#include "canondiff/diffusion.h"
#include "canondiff/nets.h"

namespace canondiff {

enum class Variant { kGdm, kEdmLite, kCanonGdm, kCanonFrGdm };

std::string_view to_string(Variant v);
// Throws ContractViolation for an unknown name.
Variant variant_from_string(std::string_view name);

// learned for canon_gdm, frozen for canon_fr_gdm, identity otherwise.
CanonKind canon_kind_for(Variant v);

/**
 * @brief Everything needed to rebuild a run.
 *
 * Serialised as one JSON document:
 *   { "variant", "seed", "output_dir",
 *     "data": { "dir", "count", "templates" },
 *     "diffusion": { "T", "precision_s", "power", "batch_size", "steps",
 *                    "lr", "ema_decay", "com_project_noise",
 *                    "frame_penalty" },
 *     "denoiser": { "layers", "hidden", "time_embed_dim" },
 *     "canonicalizer": { "kind", "layers", "hidden", "channels" },
 *     "edm": { "layers" } }
 * canonicalizer.kind is optional; when present it must agree with the
 * variant.
 */
struct RunConfig {
  Variant variant = Variant::kCanonGdm;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  // Dataset directory with train/val/test XYZ files. Empty means generate
  // `data_count` synthetic records from the templates.
  std::string data_dir;
  std::size_t data_count = 5000;
  // Templates JSON file; empty means the built-in templates.
  std::string templates_path;
  DiffusionConfig diffusion;
  DenoiserConfig denoiser;
  CanonicalizerConfig canonicalizer;
  std::optional<CanonKind> canonicalizer_kind;
  int edm_layers = 4;
};

// Defaults for desk-scale runs: T = 256, EMA decay 0.999.
RunConfig default_run_config();

std::string to_json(const RunConfig &c);
// Missing keys keep their defaults; unknown keys and wrong types throw
// ContractViolation.
RunConfig run_config_from_json(std::string_view text);

// Applies "a.b=value" to the JSON form of `c`. The value is parsed as JSON
// when it parses, otherwise taken as a string.
RunConfig apply_override(const RunConfig &c, std::string_view assignment);

// Variant and canonicalizer kind agree; diffusion fields are in range.
void validate(const RunConfig &c);

struct Model {
  Canonicalizer canonicalizer = Canonicalizer::identity(3);
  std::unique_ptr<NoisePredictor> denoiser;
};

/**
 * @brief Fresh networks for `c`, initialised from make_stream(seed, "init").
 *
 * edm_lite gets an EquivariantDenoiser whose hidden width matches the
 * DenoiserNet parameter count; throws ContractViolation when no width comes
 * within 10%.
 */
Model make_model(const RunConfig &c);

// Denoiser settings derived from the run config.
DenoiserConfig denoiser_config(const RunConfig &c);
EquivariantDenoiserConfig edm_config(const RunConfig &c);

// Templates named by the config, or the built-in set.
std::vector<TemplateSpec> load_templates(const RunConfig &c);

}  // namespace canondiff

#endif  // CANONDIFF_CONFIG_H_
