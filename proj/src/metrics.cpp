//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/metrics.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "canondiff/errors.h"

namespace canondiff {

namespace {

// Label-preserving correspondences tried before falling back to the given
// atom order.
constexpr std::size_t kMaxMatchings = 5040;

PointCloud bare(const Coords &c) {
  PointCloud p;
  p.coords = c;
  p.features = Coords(c.rows(), 0);
  return p;
}

std::vector<std::string> sorted_labels(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

double match_template(const PointCloud &x, const TemplateSpec &t) {
  const PointCloud tc = bare(t.base);
  std::map<std::string, std::vector<std::size_t>> tgroups, xgroups;
  for (std::size_t i = 0; i < t.labels.size(); ++i)
    tgroups[t.labels[i]].push_back(i);
  for (std::size_t i = 0; i < x.labels.size(); ++i)
    xgroups[x.labels[i]].push_back(i);

  std::size_t total = 1;
  for (auto &[label, idx]: xgroups) {
    for (std::size_t k = 2; k <= idx.size(); ++k)
      total = std::min(total * k, kMaxMatchings + 1);
  }

  Coords reordered(x.coords.rows(), x.coords.cols());
  auto score = [&] {
    for (auto &[label, tidx]: tgroups) {
      const auto &xidx = xgroups[label];
      for (std::size_t k = 0; k < tidx.size(); ++k)
        reordered.row(static_cast<Eigen::Index>(tidx[k])) =
            x.coords.row(static_cast<Eigen::Index>(xidx[k]));
    }
    return kabsch_rmsd(bare(reordered), tc).rmsd;
  };

  if (total > kMaxMatchings)
    return score();

  // Odometer over per-label permutations.
  std::vector<std::vector<std::size_t> *> groups;
  for (auto &[label, idx]: xgroups)
    groups.push_back(&idx);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    best = std::min(best, score());
    std::size_t g = 0;
    for (; g < groups.size(); ++g)
      if (std::next_permutation(groups[g]->begin(), groups[g]->end()))
        break;
    if (g == groups.size())
      break;
  }
  return best;
}

}  // namespace

StabilityResult stability(const PointCloud &x, const BondTable &table) {
  if (x.labels.size() != x.size())
    throw ContractViolation("stability needs one label per atom");
  const std::size_t n = x.size();
  std::vector<int> bonds(n, 0);
  StabilityResult out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto win = table.bond(x.labels[i], x.labels[j]);
      if (!win) {
        ++out.unknown_pairs;
        continue;
      }
      const double d = (x.coords.row(static_cast<Eigen::Index>(i))
                        - x.coords.row(static_cast<Eigen::Index>(j)))
                           .norm();
      if (d >= win->first && d <= win->second) {
        ++bonds[i];
        ++bonds[j];
      }
    }
  std::size_t stable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::set<int> *v = table.valence(x.labels[i]);
    if (v != nullptr && v->count(bonds[i]) > 0)
      ++stable;
  }
  out.atom_stable_frac = n == 0 ? 1.0 : static_cast<double>(stable) / n;
  out.mol_stable = stable == n;
  return out;
}

double default_validity_tau(double jitter_sigma, int dim) {
  return 3.0 * jitter_sigma * std::sqrt(static_cast<double>(dim));
}

double template_distance(const PointCloud &x,
                         std::span<const TemplateSpec> templates) {
  if (x.labels.size() != x.size())
    throw ContractViolation("validity needs one label per atom");
  const std::vector<std::string> xl = sorted_labels(x.labels);
  double best = std::numeric_limits<double>::infinity();
  for (const TemplateSpec &t: templates) {
    if (t.base.cols() != x.coords.cols() || sorted_labels(t.labels) != xl)
      continue;
    best = std::min(best, match_template(x, t));
  }
  return best;
}

bool validity(const PointCloud &x, std::span<const TemplateSpec> templates,
              double tau) {
  if (templates.empty())
    throw ContractViolation("validity needs at least one template");
  if (!(tau > 0.0))
    throw ContractViolation("validity tolerance must be positive");
  return template_distance(x, templates) < tau;
}

double uniqueness(std::span<const PointCloud> clouds, double grid) {
  if (!(grid > 0.0))
    throw ContractViolation("uniqueness grid must be positive");
  if (clouds.empty())
    return 0.0;
  using Atom = std::pair<std::string, std::vector<long long>>;
  std::set<std::vector<Atom>> seen;
  for (const PointCloud &x: clouds) {
    std::vector<Atom> key;
    const PointCloud centered = remove_com(x).first;
    Coords c;
    bool degenerate = false;
    try {
      c = apply(pca_frame(centered).inverse(), centered).coords;
    } catch (const DegenerateSpectrum &) {
      degenerate = true;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      Atom a;
      a.first = i < x.labels.size() ? x.labels[i] : std::string();
      if (!degenerate)
        for (Eigen::Index k = 0; k < c.cols(); ++k)
          a.second.push_back(std::llround(c(static_cast<Eigen::Index>(i), k)
                                          / grid));
      key.push_back(std::move(a));
    }
    std::sort(key.begin(), key.end());
    seen.insert(std::move(key));
  }
  return static_cast<double>(seen.size()) / clouds.size();
}

double pose_concentration(std::span<const PointCloud> clouds,
                          const Canonicalizer &can) {
  if (clouds.empty())
    throw ContractViolation("pose_concentration needs at least one cloud");
  double total = 0.0;
  for (const PointCloud &x: clouds) {
    const PointCloud centered = remove_com(x).first;
    const PointCloud canon = canonicalize(can, x).x_canon;
    total += rmsd_unaligned(centered.coords, canon.coords);
  }
  return total / clouds.size();
}

TimingResult time_sampling(const NoiseSchedule &schedule,
                           const NoisePredictor &net,
                           std::span<const SampleSpec> specs, int repeats,
                           std::uint64_t seed) {
  if (specs.empty())
    throw ContractViolation("time_sampling needs at least one sample");
  if (repeats < 1)
    throw ContractViolation("time_sampling needs at least one repeat");
  using clock = std::chrono::steady_clock;
  sample_chains(schedule, net, specs.first(1), seed);
  TimingResult out;
  for (int r = 0; r < repeats; ++r) {
    const auto start = clock::now();
    sample_chains(schedule, net, specs, seed);
    const std::chrono::duration<double> dt = clock::now() - start;
    out.repeats.push_back(dt.count() / specs.size());
  }
  std::vector<double> sorted = out.repeats;
  std::sort(sorted.begin(), sorted.end());
  out.sec_per_sample = sorted[sorted.size() / 2];
  return out;
}

MetricsReport evaluate_clouds(std::span<const PointCloud> clouds,
                              const BondTable &table,
                              std::span<const TemplateSpec> templates,
                              double tau, double grid) {
  MetricsReport r;
  r.n_samples = clouds.size();
  if (clouds.empty())
    return r;
  double atom = 0.0;
  std::size_t mol = 0, valid = 0;
  for (const PointCloud &x: clouds) {
    const StabilityResult s = stability(x, table);
    atom += s.atom_stable_frac;
    mol += s.mol_stable ? 1 : 0;
    valid += validity(x, templates, tau) ? 1 : 0;
  }
  const double n = static_cast<double>(clouds.size());
  r.atom_stable_frac = atom / n;
  r.mol_stable_frac = mol / n;
  r.valid_frac = valid / n;
  r.unique_frac = uniqueness(clouds, grid);
  return r;
}

std::string to_json(const MetricsReport &r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["n_samples"] = r.n_samples;
  j["mean_nll_per_dim"] = r.mean_nll_per_dim
                              ? nlohmann::ordered_json(*r.mean_nll_per_dim)
                              : nlohmann::ordered_json(nullptr);
  j["mol_stable_frac"] = r.mol_stable_frac;
  j["atom_stable_frac"] = r.atom_stable_frac;
  j["valid_frac"] = r.valid_frac;
  j["unique_frac"] = r.unique_frac;
  j["sec_per_sample"] = r.sec_per_sample
                            ? nlohmann::ordered_json(*r.sec_per_sample)
                            : nlohmann::ordered_json(nullptr);
  j["pose_concentration"] = r.pose_concentration;
  j["invariance_error_max"] = r.invariance_error_max;
  j["canonicalizer_invariant"] = r.canonicalizer_invariant;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(std::string_view text) {
  MetricsReport r;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    auto opt = [&](const char *key) -> std::optional<double> {
      if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
      return j.at(key).get<double>();
    };
    r.variant = j.value("variant", std::string());
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.mean_nll_per_dim = opt("mean_nll_per_dim");
    r.mol_stable_frac = j.at("mol_stable_frac").get<double>();
    r.atom_stable_frac = j.at("atom_stable_frac").get<double>();
    r.valid_frac = j.at("valid_frac").get<double>();
    r.unique_frac = j.at("unique_frac").get<double>();
    r.sec_per_sample = opt("sec_per_sample");
    r.pose_concentration = j.at("pose_concentration").get<double>();
    r.invariance_error_max = j.at("invariance_error_max").get<double>();
    r.canonicalizer_invariant = j.at("canonicalizer_invariant").get<bool>();
  } catch (const nlohmann::json::exception &e) {
    throw ContractViolation(std::string("invalid metrics report: ")
                            + e.what());
  }
  return r;
}

std::string to_table(std::span<const MetricsReport> rows) {
  const std::vector<std::string> header = { "Model",  "NLL",      "Mol stable",
                                            "At stable", "Valid", "Unique",
                                            "s/sample", "Pose", "Inv err" };
  auto fmt = [](const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> cells{ header };
  for (const MetricsReport &r: rows) {
    cells.push_back({
        r.variant,
        r.mean_nll_per_dim ? fmt("%.4f", *r.mean_nll_per_dim) : "-",
        fmt("%.1f", 100.0 * r.mol_stable_frac),
        fmt("%.1f", 100.0 * r.atom_stable_frac),
        fmt("%.1f", 100.0 * r.valid_frac),
        fmt("%.1f", 100.0 * r.unique_frac),
        r.sec_per_sample ? fmt("%.4f", *r.sec_per_sample) : "-",
        fmt("%.4f", r.pose_concentration),
        fmt("%.2e", r.invariance_error_max),
    });
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto &row: cells)
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto &row: cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out += row[c];
        out.append(width[c] - row[c].size(), ' ');
      } else {
        out += "  ";
        out.append(width[c] - row[c].size(), ' ');
        out += row[c];
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace canondiff
