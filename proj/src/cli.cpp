//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "canondiff/checkpoint.h"
#include "canondiff/errors.h"
#include "canondiff/metrics.h"
#include "canondiff/svg.h"

namespace canondiff {

namespace fs = std::filesystem;

std::uint64_t resolve_seed(const std::uint64_t *flag, std::uint64_t fallback) {
  if (flag)
    return *flag;
  const char *env = std::getenv("CANON_DIFFUSE_SEED");
  if (!env || !*env)
    return fallback;
  char *end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno || *end || env[0] == '-')
    throw ContractViolation(std::string("CANON_DIFFUSE_SEED='") + env
                            + "' is not an unsigned integer");
  return v;
}

std::vector<PointCloud> training_set(const RunConfig &c) {
  if (!c.data_dir.empty())
    return load_split(c.data_dir, "train");
  const Dataset d = gen_synthetic(load_templates(c), c.data_count, c.seed);
  std::vector<PointCloud> out;
  for (std::size_t i: split_indices(d.records.size(), c.seed).train)
    out.push_back(d.records[i]);
  return out;
}

std::vector<SampleSpec> draw_specs(std::span<const PointCloud> train,
                                   std::size_t n, std::uint64_t seed) {
  if (train.empty())
    throw ContractViolation("no training records to copy atom types from");
  Rng rng = make_stream(seed, "sample-specs");
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<SampleSpec> specs;
  for (std::size_t i = 0; i < n; ++i) {
    const PointCloud &x = train[pick(rng)];
    specs.push_back({ x.features, x.labels });
  }
  return specs;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads, contiguous ranges.
template<class Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  const std::size_t k = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (k == 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(k);
  for (std::size_t w = 0; w < k; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / k; i < (w + 1) * n / k; ++i)
          fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread &t: pool)
    t.join();
  for (const std::exception_ptr &e: errors)
    if (e)
      std::rethrow_exception(e);
}

// Chains per batched reverse run.
constexpr std::size_t kChainBlock = 128;

}  // namespace

std::vector<PointCloud> sample_parallel(const NoiseSchedule &schedule,
                                        const NoisePredictor &net,
                                        std::span<const SampleSpec> specs,
                                        std::uint64_t seed, int workers) {
  const std::size_t blocks = (specs.size() + kChainBlock - 1) / kChainBlock;
  std::vector<std::vector<PointCloud>> parts(blocks);
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t lo = b * kChainBlock;
    const std::size_t hi = std::min(specs.size(), lo + kChainBlock);
    parts[b] = sample_chains(schedule, net, specs.subspan(lo, hi - lo), seed,
                             {}, lo);
  });
  std::vector<PointCloud> out;
  for (auto &p: parts)
    for (PointCloud &x: p)
      out.push_back(std::move(x));
  return out;
}

std::string loss_csv(std::span<const double> losses) {
  std::string s = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, losses[i]);
    s += buf;
  }
  return s;
}

namespace {

struct Usage: Error {
  using Error::Error;
};

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Model from a checkpoint with EMA weights when present.
Model eval_model(const Checkpoint &ck) {
  Model m = restore_model(ck);
  apply_ema(ck, m);
  return m;
}

NoiseSchedule schedule_of(const RunConfig &c) {
  return polynomial_schedule(c.diffusion.T, c.diffusion.precision_s,
                             c.diffusion.power);
}

double rotation_angle(const RotationMatrix &r) {
  const double c = std::clamp((r.matrix().trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

struct InvarianceCheck {
  double max_error = 0.0;
  std::size_t checked = 0;
};

// Largest invariance error over the first `limit` generic clouds.
InvarianceCheck check_invariance(const Canonicalizer &can,
                                 std::span<const PointCloud> clouds,
                                 std::size_t limit, std::uint64_t seed) {
  Rng rng = make_stream(seed, "invariance");
  InvarianceCheck out;
  for (const PointCloud &x: clouds) {
    if (out.checked == limit)
      break;
    if (x.size() < 3 || !is_generic(x))
      continue;
    out.max_error = std::max(out.max_error, invariance_error(can, x, 3, rng));
    ++out.checked;
  }
  return out;
}

/* gen-data */

struct GenDataArgs {
  std::string out;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string templates;
};

int cmd_gen_data(const GenDataArgs &a, std::ostream &out) {
  if (a.count == 0)
    throw Usage("--count must be positive");
  const std::uint64_t seed = resolve_seed(a.seed_set ? &a.seed : nullptr, 0);
  const std::vector<TemplateSpec> templates =
      a.templates.empty() ? default_templates()
                          : templates_from_json(read_file(a.templates));
  const Dataset d = gen_synthetic(templates, a.count, seed);
  write_dataset(a.out, d, seed);
  const Splits s = split_indices(a.count, seed);
  out << "wrote " << a.out << ": train " << s.train.size() << ", val "
      << s.val.size() << ", test " << s.test.size() << "\n";
  return kExitOk;
}

/* train */

struct TrainArgs {
  std::string config;
  std::string variant;
  int steps = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  int ckpt_every = 0;
  std::string resume;
};

int cmd_train(const TrainArgs &a, std::ostream &out, std::ostream &err) {
  std::optional<Checkpoint> resume;
  RunConfig c = default_run_config();
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    c = run_config_from_json(resume->config_json);
  } else if (!a.config.empty()) {
    c = run_config_from_json(read_file(a.config));
  }
  for (const std::string &o: a.overrides)
    c = apply_override(c, o);
  if (!a.variant.empty()) {
    const Variant v = variant_from_string(a.variant);
    if (resume && v != c.variant)
      throw Usage("--variant differs from the resumed checkpoint's variant");
    c.variant = v;
  }
  if (a.steps >= 0)
    c.diffusion.steps = a.steps;
  if (!a.data.empty())
    c.data_dir = a.data;
  if (!a.out.empty())
    c.output_dir = a.out;
  if (!resume)
    c.seed = resolve_seed(a.seed_set ? &a.seed : nullptr, c.seed);
  else if (a.seed_set && a.seed != c.seed)
    throw Usage("--seed differs from the resumed checkpoint's seed");
  c.diffusion.seed = c.seed;
  if (a.ckpt_every < 0)
    throw Usage("--ckpt-every must be non-negative");
  validate(c);

  const std::vector<PointCloud> data = training_set(c);
  Model model = resume ? restore_model(*resume) : make_model(c);
  Trainer trainer(c.diffusion, model.canonicalizer, *model.denoiser, data);
  TrainProgress progress;
  if (resume)
    progress = restore_trainer(*resume, trainer);

  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_file(dir / "config.json", to_json(c));
  out << "training " << to_string(c.variant) << " on " << data.size()
      << " clouds, " << model.denoiser->params().count()
      << " denoiser parameters";
  if (model.canonicalizer.has_net())
    out << ", " << model.canonicalizer.net().params().count()
        << " canonicalizer parameters";
  out << "\n";

  while (trainer.steps_done() < c.diffusion.steps) {
    double loss;
    try {
      loss = trainer.step();
    } catch (const NumericFailure &e) {
      throw NumericFailure("training step " + std::to_string(trainer.steps_done())
                               + ": " + e.what(),
                           e.node(), e.op());
    }
    progress.losses.push_back(loss);
    const std::int64_t k = trainer.steps_done();
    if (a.ckpt_every > 0 && k % a.ckpt_every == 0)
      save_checkpoint(dir / ("ckpt_" + std::to_string(k) + ".bin"),
                      make_checkpoint(c, model, &trainer, &progress));
    if (k % 500 == 0)
      out << "step " << k << " loss " << fixed(loss) << "\n";
  }
  const Checkpoint final_ck = make_checkpoint(c, model, &trainer, &progress);
  const std::string bytes = serialize(final_ck);
  write_file(dir / "checkpoint.bin", bytes);
  if (serialize(load_checkpoint(dir / "checkpoint.bin")) != bytes)
    throw IoError("checkpoint did not read back identically");
  write_file(dir / "loss.csv", loss_csv(progress.losses));
  if (trainer.skipped())
    err << "skipped " << trainer.skipped() << " degenerate clouds\n";
  out << "wrote " << (dir / "checkpoint.bin").string() << " and "
      << (dir / "loss.csv").string() << "\n";
  return kExitOk;
}

/* sample */

struct SampleArgs {
  std::string ckpt;
  std::size_t n = 64;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int workers = 1;
};

int cmd_sample(const SampleArgs &a, std::ostream &out) {
  if (a.n == 0)
    throw Usage("--n must be positive");
  if (a.workers < 1)
    throw Usage("--workers must be positive");
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const RunConfig c = run_config_from_json(ck.config_json);
  const Model m = eval_model(ck);
  const std::uint64_t seed = resolve_seed(a.seed_set ? &a.seed : nullptr, 0);
  const std::vector<SampleSpec> specs = draw_specs(training_set(c), a.n, seed);
  std::vector<PointCloud> clouds =
      sample_parallel(schedule_of(c), *m.denoiser, specs, seed, a.workers);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (!clouds[i].coords.allFinite())
      throw NumericFailure("sample " + std::to_string(i) + " is not finite");
    clouds[i].comment = "sample=" + std::to_string(i) + " seed="
                        + std::to_string(seed) + " variant="
                        + std::string(to_string(c.variant));
  }
  write_file(a.out, write_xyz(clouds));
  out << "wrote " << clouds.size() << " samples to " << a.out << "\n";
  return kExitOk;
}

/* eval */

struct EvalArgs {
  std::string samples;
  std::string out;
  std::string ckpt;
  std::string loss;
  std::string nll;
  std::string templates;
  std::string variant;
  double tau = 0.0;
  double grid = 0.05;
  bool timing = false;
  int workers = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

std::vector<double> read_csv_column(const fs::path &path, std::size_t column) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<double> v;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || line.empty())
      continue;
    std::size_t start = 0;
    for (std::size_t k = 0; k < column; ++k) {
      start = line.find(',', start);
      if (start == std::string::npos)
        throw ParseError(path.string() + ": missing column", lineno);
      ++start;
    }
    char *end = nullptr;
    const double x = std::strtod(line.c_str() + start, &end);
    if (end == line.c_str() + start)
      throw ParseError(path.string() + ": not a number", lineno);
    v.push_back(x);
  }
  return v;
}

int cmd_eval(const EvalArgs &a, std::ostream &out) {
  if (a.workers < 1)
    throw Usage("--workers must be positive");
  if (a.timing && a.ckpt.empty())
    throw Usage("--timing needs --ckpt");
  const std::vector<PointCloud> clouds = parse_xyz(read_file(a.samples));
  if (clouds.empty())
    throw Usage("no clouds in " + a.samples);
  std::vector<TemplateSpec> templates =
      a.templates.empty() ? default_templates()
                          : templates_from_json(read_file(a.templates));
  double tau = a.tau;
  if (tau <= 0.0) {
    double jitter = 0.0;
    for (const TemplateSpec &t: templates)
      jitter = std::max(jitter, t.jitter_sigma);
    tau = default_validity_tau(jitter > 0.0 ? jitter : 0.05, 3);
  }

  std::optional<Checkpoint> ck;
  std::optional<Model> model;
  MetricsReport r = evaluate_clouds(clouds, default_bond_table(), templates,
                                    tau, a.grid);
  Canonicalizer can = Canonicalizer::pca(3);
  if (!a.ckpt.empty()) {
    ck = load_checkpoint(a.ckpt);
    model = eval_model(*ck);
    if (model->canonicalizer.has_net())
      can = model->canonicalizer;
    r.variant = std::string(to_string(run_config_from_json(ck->config_json).variant));
  }
  if (!a.variant.empty())
    r.variant = a.variant;

  const std::uint64_t seed = resolve_seed(a.seed_set ? &a.seed : nullptr, 0);
  std::vector<double> distance(clouds.size()), angle(clouds.size(), NAN);
  parallel_for(clouds.size(), a.workers, [&](std::size_t i) {
    distance[i] = template_distance(clouds[i], templates);
    try {
      angle[i] = rotation_angle(canonicalize(can, clouds[i]).rotation);
    } catch (const DegenerateFrame &) {
    } catch (const DegenerateSpectrum &) {
    }
  });
  std::vector<PointCloud> usable;
  for (std::size_t i = 0; i < clouds.size(); ++i)
    if (std::isfinite(angle[i]))
      usable.push_back(clouds[i]);
  if (!usable.empty())
    r.pose_concentration = pose_concentration(usable, can);
  const InvarianceCheck inv = check_invariance(can, usable, 100, seed);
  r.invariance_error_max = inv.max_error;
  r.canonicalizer_invariant = inv.checked > 0 && inv.max_error < 1e-6;
  if (!a.nll.empty()) {
    const std::vector<double> nll = read_csv_column(a.nll, 1);
    if (!nll.empty()) {
      double sum = 0.0;
      for (double v: nll)
        sum += v;
      r.mean_nll_per_dim = sum / static_cast<double>(nll.size());
    }
  }
  if (a.timing) {
    const RunConfig c = run_config_from_json(ck->config_json);
    std::vector<SampleSpec> specs;
    for (std::size_t i = 0; i < std::min<std::size_t>(clouds.size(), 64); ++i)
      specs.push_back({ clouds[i].features, clouds[i].labels });
    r.sec_per_sample =
        time_sampling(schedule_of(c), *model->denoiser, specs, 3, seed)
            .sec_per_sample;
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_file(dir / "report.json", to_json(r));
  write_file(dir / "table.txt", to_table(std::span(&r, 1)));
  write_file(dir / "validity.svg",
             svg_histogram(distance, 40,
                           { "Distance to nearest template", "RMSD", "count" },
                           tau));
  write_file(dir / "pose.svg",
             svg_histogram(angle, 36,
                           { "Rotation to canonical pose", "angle (degrees)",
                             "count" }));
  if (!a.loss.empty())
    write_file(dir / "loss.svg",
               svg_line_plot(read_csv_column(a.loss, 1),
                             { "Training loss", "step", "loss" }));
  out << to_table(std::span(&r, 1));
  return kExitOk;
}

/* canon */

struct CanonArgs {
  std::string input;
  std::string out;
  std::string kind = "pca";
  std::string ckpt;
  std::string report;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

// A cloud read back from 6-decimal XYZ carries rounding noise that tilts its
// frame by up to ~1e-5 when two PCA eigenvalues are close. Frames within this
// distance of the identity count as already canonical and the cloud passes
// through unchanged, so a second canon pass reproduces its input bytes.
constexpr double kCanonicalTol = 1e-4;

int cmd_canon(const CanonArgs &a, std::ostream &out) {
  const CanonKind kind = canon_kind_from_string(a.kind);
  const std::uint64_t seed = resolve_seed(a.seed_set ? &a.seed : nullptr, 0);
  Canonicalizer can = Canonicalizer::identity(3);
  if (kind == CanonKind::kPca) {
    can = Canonicalizer::pca(3);
  } else if (kind == CanonKind::kLearned || kind == CanonKind::kFrozen) {
    CanonicalizerNet net = [&] {
      if (a.ckpt.empty()) {
        Rng rng = make_stream(seed, "init", 1);
        return CanonicalizerNet(CanonicalizerConfig{}, rng);
      }
      Model m = eval_model(load_checkpoint(a.ckpt));
      if (!m.canonicalizer.has_net())
        throw Usage("checkpoint " + a.ckpt + " has no canonicalizer network");
      return m.canonicalizer.net();
    }();
    can = kind == CanonKind::kLearned ? Canonicalizer::learned(std::move(net))
                                      : Canonicalizer::frozen(std::move(net));
  }

  std::vector<PointCloud> clouds = parse_xyz(read_file(a.input));
  std::vector<PointCloud> result;
  for (const PointCloud &x: clouds) {
    CanonicalizedSample s = canonicalize(can, x);
    const double off =
        (s.rotation.matrix() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff();
    if (off < kCanonicalTol && s.translation.cwiseAbs().maxCoeff() < kCanonicalTol)
      s.x_canon.coords = x.coords;
    s.x_canon.comment = x.comment;
    result.push_back(std::move(s.x_canon));
  }
  write_file(a.out, write_xyz(result));

  const InvarianceCheck inv = check_invariance(can, clouds, 100, seed);
  const bool invariant = inv.checked > 0 && inv.max_error < 1e-6;
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["n_clouds"] = clouds.size();
  j["n_checked"] = inv.checked;
  j["max_invariance_error"] = inv.max_error;
  j["invariant"] = invariant;
  j["status"] = invariant ? "invariant" : "not invariant";
  if (!a.report.empty())
    write_file(a.report, j.dump(2) + "\n");
  out << "canonicalized " << clouds.size() << " clouds with " << a.kind
      << ": max invariance error " << inv.max_error << " ("
      << (invariant ? "invariant" : "not invariant") << ")\n";
  return kExitOk;
}

/* nll */

struct NllArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::size_t count = 0;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_nll(const NllArgs &a, std::ostream &out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const RunConfig c = run_config_from_json(ck.config_json);
  const Model m = eval_model(ck);
  const std::uint64_t seed = resolve_seed(a.seed_set ? &a.seed : nullptr, 0);
  std::vector<PointCloud> clouds;
  if (!a.data.empty()) {
    clouds = load_split(a.data, a.split);
  } else {
    if (!c.data_dir.empty()) {
      clouds = load_split(c.data_dir, a.split);
    } else {
      const Dataset d = gen_synthetic(load_templates(c), c.data_count, c.seed);
      const Splits s = split_indices(d.records.size(), c.seed);
      const std::vector<std::size_t> &idx =
          a.split == "train" ? s.train : a.split == "val" ? s.val : s.test;
      for (std::size_t i: idx)
        clouds.push_back(d.records[i]);
    }
  }
  if (a.count && clouds.size() > a.count)
    clouds.resize(a.count);
  const NoiseSchedule schedule = schedule_of(c);
  std::string csv = "sample_id,nll\n";
  double sum = 0.0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    Rng rng = make_stream(seed, "nll", i);
    const double v = estimate_nll(schedule, *m.denoiser, m.canonicalizer,
                                  clouds[i], rng, c.diffusion.com_project_noise);
    sum += v;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, v);
    csv += buf;
  }
  write_file(a.out, csv);
  out << "mean nll " << fixed(sum / std::max<std::size_t>(clouds.size(), 1))
      << " nats/dim over " << clouds.size() << " clouds\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out,
            std::ostream &err) {
  CLI::App app{ "Diffusion over canonicalized point clouds" };
  app.require_subcommand(1);
  app.set_version_flag("--version", "canondiff 0.1");

  GenDataArgs gd;
  CLI::App *gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--count", gd.count, "Number of clouds");
  CLI::Option *gen_seed = gen->add_option("--seed", gd.seed, "Root seed");
  gen->add_option("--templates", gd.templates, "Templates JSON");

  TrainArgs tr;
  CLI::App *train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", tr.config, "RunConfig JSON");
  train->add_option("--variant", tr.variant,
                    "gdm, edm_lite, canon_gdm or canon_fr_gdm");
  train->add_option("--steps", tr.steps, "Total optimizer steps");
  CLI::Option *train_seed = train->add_option("--seed", tr.seed, "Root seed");
  train->add_option("--set", tr.overrides, "Config override a.b=value");
  train->add_option("--data", tr.data, "Dataset directory");
  train->add_option("--out", tr.out, "Output directory");
  train->add_option("--ckpt-every", tr.ckpt_every,
                    "Write ckpt_<step>.bin every k steps");
  train->add_option("--resume", tr.resume, "Checkpoint to continue from");

  SampleArgs sa;
  CLI::App *samp = app.add_subcommand("sample", "Sample clouds from a checkpoint");
  samp->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
  samp->add_option("--n", sa.n, "Number of samples");
  CLI::Option *samp_seed = samp->add_option("--seed", sa.seed, "Root seed");
  samp->add_option("--out", sa.out, "Output XYZ file")->required();
  samp->add_option("--workers", sa.workers, "Threads");

  EvalArgs ev;
  CLI::App *eval = app.add_subcommand("eval", "Evaluate sampled clouds");
  eval->add_option("--samples", ev.samples, "XYZ file")->required();
  eval->add_option("--out", ev.out, "Report directory")->required();
  eval->add_option("--ckpt", ev.ckpt, "Checkpoint (canonicalizer, timing)");
  eval->add_option("--loss", ev.loss, "Loss CSV to plot");
  eval->add_option("--nll", ev.nll, "NLL CSV to average");
  eval->add_option("--templates", ev.templates, "Templates JSON");
  eval->add_option("--variant", ev.variant, "Row label");
  eval->add_option("--tau", ev.tau, "Validity threshold");
  eval->add_option("--grid", ev.grid, "Uniqueness grid");
  eval->add_flag("--timing", ev.timing, "Measure seconds per sample");
  eval->add_option("--workers", ev.workers, "Threads");
  CLI::Option *eval_seed = eval->add_option("--seed", ev.seed, "Root seed");

  CanonArgs ca;
  CLI::App *canon = app.add_subcommand("canon", "Canonicalize clouds");
  canon->add_option("--input", ca.input, "XYZ file")->required();
  canon->add_option("--out", ca.out, "Output XYZ file")->required();
  canon->add_option("--kind", ca.kind, "learned, frozen, pca or identity");
  canon->add_option("--ckpt", ca.ckpt, "Checkpoint with a canonicalizer");
  canon->add_option("--report", ca.report, "Invariance report JSON");
  CLI::Option *canon_seed = canon->add_option("--seed", ca.seed, "Root seed");

  NllArgs nl;
  CLI::App *nll = app.add_subcommand("nll", "Per-cloud likelihood bound");
  nll->add_option("--ckpt", nl.ckpt, "Checkpoint")->required();
  nll->add_option("--data", nl.data, "Dataset directory");
  nll->add_option("--split", nl.split, "train, val or test");
  nll->add_option("--count", nl.count, "Limit on clouds");
  nll->add_option("--out", nl.out, "Output CSV")->required();
  CLI::Option *nll_seed = nll->add_option("--seed", nl.seed, "Root seed");

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  gd.seed_set = gen_seed->count() > 0;
  tr.seed_set = train_seed->count() > 0;
  sa.seed_set = samp_seed->count() > 0;
  ev.seed_set = eval_seed->count() > 0;
  ca.seed_set = canon_seed->count() > 0;
  nl.seed_set = nll_seed->count() > 0;

  try {
    if (gen->parsed())
      return cmd_gen_data(gd, out);
    if (train->parsed())
      return cmd_train(tr, out, err);
    if (samp->parsed())
      return cmd_sample(sa, out);
    if (eval->parsed())
      return cmd_eval(ev, out);
    if (canon->parsed())
      return cmd_canon(ca, out);
    if (nll->parsed())
      return cmd_nll(nl, out);
  } catch (const Usage &e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractViolation &e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericFailure &e) {
    err << "numeric failure: " << e.what();
    if (!e.op().empty())
      err << " (node " << e.node() << ", op " << e.op() << ")";
    err << "\n";
    return kExitNumeric;
  } catch (const DegenerateFrame &e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DegenerateSpectrum &e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ParseError &e) {
    err << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError &e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error &e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace canondiff
