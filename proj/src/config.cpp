//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/config.h"

#include <cmath>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "canondiff/errors.h"
#include "canondiff/rng.h"

namespace canondiff {

using Json = nlohmann::ordered_json;

std::string_view to_string(Variant v) {
  switch (v) {
  case Variant::kGdm:
    return "gdm";
  case Variant::kEdmLite:
    return "edm_lite";
  case Variant::kCanonGdm:
    return "canon_gdm";
  case Variant::kCanonFrGdm:
    return "canon_fr_gdm";
  }
  return "?";
}

Variant variant_from_string(std::string_view name) {
  for (Variant v: { Variant::kGdm, Variant::kEdmLite, Variant::kCanonGdm,
                    Variant::kCanonFrGdm })
    if (to_string(v) == name)
      return v;
  throw ContractViolation("unknown variant '" + std::string(name)
                          + "' (expected gdm, edm_lite, canon_gdm or "
                            "canon_fr_gdm)");
}

CanonKind canon_kind_for(Variant v) {
  switch (v) {
  case Variant::kCanonGdm:
    return CanonKind::kLearned;
  case Variant::kCanonFrGdm:
    return CanonKind::kFrozen;
  default:
    return CanonKind::kIdentity;
  }
}

RunConfig default_run_config() {
  RunConfig c;
  c.diffusion.T = 256;
  c.diffusion.ema_decay = 0.999;
  c.denoiser.num_steps = c.diffusion.T;
  return c;
}

std::string to_json(const RunConfig &c) {
  Json j;
  j["variant"] = to_string(c.variant);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["data"] = { { "dir", c.data_dir },
                { "count", c.data_count },
                { "templates", c.templates_path } };
  const DiffusionConfig &d = c.diffusion;
  j["diffusion"] = { { "T", d.T },
                     { "precision_s", d.precision_s },
                     { "power", d.power },
                     { "batch_size", d.batch_size },
                     { "steps", d.steps },
                     { "lr", d.adam.lr },
                     { "ema_decay", d.ema_decay },
                     { "com_project_noise", d.com_project_noise },
                     { "frame_penalty", d.frame_penalty } };
  j["denoiser"] = { { "layers", c.denoiser.layers },
                    { "hidden", c.denoiser.hidden },
                    { "time_embed_dim", c.denoiser.time_embed_dim } };
  Json can = { { "layers", c.canonicalizer.layers },
               { "hidden", c.canonicalizer.hidden },
               { "channels", c.canonicalizer.channels } };
  if (c.canonicalizer_kind)
    can["kind"] = to_string(*c.canonicalizer_kind);
  j["canonicalizer"] = can;
  j["edm"] = { { "layers", c.edm_layers } };
  return j.dump(2) + "\n";
}

namespace {

// Reads known keys of one object and rejects the rest.
class Reader {
public:
  Reader(const Json &j, std::string path): j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ContractViolation("config: '" + path_ + "' must be an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions())
      return;
    for (const auto &[key, _]: j_.items())
      if (!seen_.count(key))
        throw ContractViolation("config: unknown key '" + prefix() + key + "'");
  }

  template<class T>
  void get(const char *key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key))
      return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception &) {
      throw ContractViolation("config: '" + prefix() + key
                              + "' has the wrong type");
    }
  }

  const Json *child(const char *key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

private:
  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

  const Json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig run_config_from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw ContractViolation(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = default_run_config();
  {
    Reader r(j, "");
    std::string variant(to_string(c.variant));
    r.get("variant", variant);
    c.variant = variant_from_string(variant);
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    if (const Json *d = r.child("data")) {
      Reader rd(*d, "data");
      rd.get("dir", c.data_dir);
      rd.get("count", c.data_count);
      rd.get("templates", c.templates_path);
    }
    if (const Json *d = r.child("diffusion")) {
      Reader rd(*d, "diffusion");
      DiffusionConfig &f = c.diffusion;
      rd.get("T", f.T);
      rd.get("precision_s", f.precision_s);
      rd.get("power", f.power);
      rd.get("batch_size", f.batch_size);
      rd.get("steps", f.steps);
      rd.get("lr", f.adam.lr);
      rd.get("ema_decay", f.ema_decay);
      rd.get("com_project_noise", f.com_project_noise);
      rd.get("frame_penalty", f.frame_penalty);
    }
    if (const Json *d = r.child("denoiser")) {
      Reader rd(*d, "denoiser");
      rd.get("layers", c.denoiser.layers);
      rd.get("hidden", c.denoiser.hidden);
      rd.get("time_embed_dim", c.denoiser.time_embed_dim);
    }
    if (const Json *d = r.child("canonicalizer")) {
      Reader rd(*d, "canonicalizer");
      std::string kind;
      rd.get("kind", kind);
      if (!kind.empty())
        c.canonicalizer_kind = canon_kind_from_string(kind);
      rd.get("layers", c.canonicalizer.layers);
      rd.get("hidden", c.canonicalizer.hidden);
      rd.get("channels", c.canonicalizer.channels);
    }
    if (const Json *d = r.child("edm")) {
      Reader rd(*d, "edm");
      rd.get("layers", c.edm_layers);
    }
  }
  c.denoiser.num_steps = c.diffusion.T;
  c.diffusion.seed = c.seed;
  return c;
}

RunConfig apply_override(const RunConfig &c, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ContractViolation("override '" + std::string(assignment)
                            + "' is not of the form key=value");
  const std::string path(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  Json j = Json::parse(to_json(c));
  Json *node = &j;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty())
      throw ContractViolation("override path '" + path + "' has an empty key");
    if (dot == std::string::npos) {
      Json v = Json::parse(value, nullptr, false);
      (*node)[key] = v.is_discarded() ? Json(value) : v;
      break;
    }
    if (!node->contains(key) || !(*node)[key].is_object())
      throw ContractViolation("override path '" + path + "' is unknown");
    node = &(*node)[key];
    start = dot + 1;
  }
  return run_config_from_json(j.dump());
}

void validate(const RunConfig &c) {
  validate(c.diffusion);
  const CanonKind want = canon_kind_for(c.variant);
  if (c.canonicalizer_kind && *c.canonicalizer_kind != want)
    throw ContractViolation(
        "variant " + std::string(to_string(c.variant))
        + " requires canonicalizer kind " + std::string(to_string(want))
        + ", config says " + std::string(to_string(*c.canonicalizer_kind)));
  if (c.denoiser.layers < 1 || c.denoiser.hidden < 1 || c.edm_layers < 1
      || c.canonicalizer.layers < 1 || c.canonicalizer.hidden < 1)
    throw ContractViolation("network sizes must be positive");
  if (c.denoiser.time_embed_dim < 2 || c.denoiser.time_embed_dim % 2)
    throw ContractViolation("time_embed_dim must be even and positive");
  if (c.canonicalizer.channels != 2)
    throw ContractViolation("the 3D canonicalizer needs exactly 2 channels");
  if (c.data_dir.empty() && c.data_count == 0)
    throw ContractViolation("data.count must be positive");
}

DenoiserConfig denoiser_config(const RunConfig &c) {
  DenoiserConfig d = c.denoiser;
  d.num_steps = c.diffusion.T;
  return d;
}

EquivariantDenoiserConfig edm_config(const RunConfig &c) {
  EquivariantDenoiserConfig e;
  e.layers = c.edm_layers;
  e.time_embed_dim = c.denoiser.time_embed_dim;
  e.num_steps = c.diffusion.T;
  Rng scratch = make_stream(0, "count");
  const std::size_t target = DenoiserNet(denoiser_config(c), scratch).params().count();
  e.hidden = matched_hidden_width(e, target);
  const double n = static_cast<double>(equivariant_param_count(e));
  if (std::abs(n - static_cast<double>(target)) > 0.1 * static_cast<double>(target))
    throw ContractViolation("no edm_lite width comes within 10% of the "
                            "denoiser's parameter count");
  return e;
}

Model make_model(const RunConfig &c) {
  validate(c);
  Model m;
  Rng rng = make_stream(c.seed, "init", 0);
  if (c.variant == Variant::kEdmLite)
    m.denoiser = std::make_unique<EquivariantDenoiser>(edm_config(c), rng);
  else
    m.denoiser = std::make_unique<DenoiserNet>(denoiser_config(c), rng);
  Rng can_rng = make_stream(c.seed, "init", 1);
  switch (canon_kind_for(c.variant)) {
  case CanonKind::kLearned:
    m.canonicalizer =
        Canonicalizer::learned(CanonicalizerNet(c.canonicalizer, can_rng));
    break;
  case CanonKind::kFrozen:
    m.canonicalizer =
        Canonicalizer::frozen(CanonicalizerNet(c.canonicalizer, can_rng));
    break;
  default:
    m.canonicalizer = Canonicalizer::identity(3);
  }
  return m;
}

std::vector<TemplateSpec> load_templates(const RunConfig &c) {
  if (c.templates_path.empty())
    return default_templates();
  return templates_from_json(read_file(c.templates_path));
}

}  // namespace canondiff
