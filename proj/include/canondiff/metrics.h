//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_METRICS_H_
#define CANONDIFF_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "canondiff/canonical.h"
#include "canondiff/data.h"
#include "canondiff/diffusion.h"
#include "canondiff/groups.h"

namespace canondiff {

struct StabilityResult {
  double atom_stable_frac = 0.0;
  bool mol_stable = false;
  // Atom pairs whose element pair has no table entry.
  std::size_t unknown_pairs = 0;
};

// Bonds are pairs whose distance lies in the table window; an atom is
// stable when its bond count is an allowed valence. Throws
// ContractViolation for missing labels.
StabilityResult stability(const PointCloud &x, const BondTable &table);

// 3 * jitter_sigma * sqrt(dim)
double default_validity_tau(double jitter_sigma, int dim);

// Smallest Kabsch RMSD to a template with the same atom multiset, minimised
// over label-preserving atom correspondences; +inf when none matches.
double template_distance(const PointCloud &x,
                         std::span<const TemplateSpec> templates);

// template_distance(x, templates) < tau. Throws ContractViolation for empty
// templates or tau <= 0.
bool validity(const PointCloud &x, std::span<const TemplateSpec> templates,
              double tau);

// Distinct fraction after PCA canonicalization and quantisation to `grid`.
// Atom order does not matter. Clouds with a degenerate spectrum hash by
// their label multiset only.
double uniqueness(std::span<const PointCloud> clouds, double grid);

// Mean unaligned RMSD between each centered cloud and its canonical pose.
// Throws ContractViolation for an empty set.
double pose_concentration(std::span<const PointCloud> clouds,
                          const Canonicalizer &can);

struct TimingResult {
  double sec_per_sample = 0.0;
  std::vector<double> repeats;
};

// Wall-clock seconds per full reverse chain, median of `repeats` timed runs
// of sample_chains over `specs` after one untimed warmup chain.
TimingResult time_sampling(const NoiseSchedule &schedule,
                           const NoisePredictor &net,
                           std::span<const SampleSpec> specs, int repeats = 3,
                           std::uint64_t seed = 0);

struct MetricsReport {
  std::string variant;
  double atom_stable_frac = 0.0;
  double mol_stable_frac = 0.0;
  double valid_frac = 0.0;
  double unique_frac = 0.0;
  std::optional<double> mean_nll_per_dim;
  std::optional<double> sec_per_sample;
  double pose_concentration = 0.0;
  double invariance_error_max = 0.0;
  bool canonicalizer_invariant = false;
  std::size_t n_samples = 0;
};

// Stability, validity and uniqueness of a set of clouds.
MetricsReport evaluate_clouds(std::span<const PointCloud> clouds,
                              const BondTable &table,
                              std::span<const TemplateSpec> templates,
                              double tau, double grid);

std::string to_json(const MetricsReport &r);
MetricsReport report_from_json(std::string_view text);

// Aligned columns: Model, NLL, Mol stable, At stable, Valid, Unique,
// s/sample, Pose, Inv err. Fractions in percent; missing values as "-".
std::string to_table(std::span<const MetricsReport> rows);

}  // namespace canondiff

#endif  // CANONDIFF_METRICS_H_
