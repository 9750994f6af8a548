//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_CLI_H_
#define CANONDIFF_CLI_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "canondiff/config.h"
#include "canondiff/data.h"
#include "canondiff/diffusion.h"

namespace canondiff {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

/**
 * @brief Entry point of the canondiff tool.
 *
 * Subcommands: gen-data, train, sample, eval, canon, nll. args[0] is the
 * program name. Errors are reported on `err` and mapped to exit codes:
 * usage and contract errors 2, numeric failures 3, IO and parse errors 4.
 */
int run_cli(const std::vector<std::string> &args, std::ostream &out,
            std::ostream &err);

// --seed when given, else CANON_DIFFUSE_SEED, else `fallback`. Throws
// ContractViolation for a malformed environment value.
std::uint64_t resolve_seed(const std::uint64_t *flag, std::uint64_t fallback);

// The training records of a run: the train split of data.dir, or the train
// split of data.count synthetic records generated with the run seed.
std::vector<PointCloud> training_set(const RunConfig &c);

// n specs, each copying the atom count and labels of a training record
// drawn uniformly from make_stream(seed, "sample-specs").
std::vector<SampleSpec> draw_specs(std::span<const PointCloud> train,
                                   std::size_t n, std::uint64_t seed);

// sample_chains split into `workers` threads; the result does not depend on
// the worker count.
std::vector<PointCloud> sample_parallel(const NoiseSchedule &schedule,
                                        const NoisePredictor &net,
                                        std::span<const SampleSpec> specs,
                                        std::uint64_t seed, int workers);

// "step,loss" header then one row per step.
std::string loss_csv(std::span<const double> losses);

}  // namespace canondiff

#endif  // CANONDIFF_CLI_H_
