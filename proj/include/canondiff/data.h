//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_DATA_H_
#define CANONDIFF_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "canondiff/groups.h"

namespace canondiff {

// Element columns of the one-hot atom features; anything else goes to a
// trailing "other" column.
inline constexpr std::string_view kFeatureElements[] = { "H", "C", "N", "O",
                                                         "F" };
inline constexpr int kFeatureDim = 6;

// Generic label for symbols that are not chemical elements.
inline constexpr std::string_view kUnknownElement = "X";

// One-hot features, labels.size() x kFeatureDim.
Coords one_hot_features(std::span<const std::string> labels);

// "cl" -> "Cl"; nullopt when the symbol is not a known element.
std::optional<std::string> normalize_element(std::string_view symbol);

struct TemplateSpec {
  int id = 0;
  std::vector<std::string> labels;
  Coords base;
  double jitter_sigma = 0.05;
};

// Centered base, one label per atom, pairwise distances >= 0.5.
void validate(const TemplateSpec &t);

// Bent triatomic, planar square, square pyramid and octahedron, all with
// unit bond length and labels that leave no rotational symmetry.
std::vector<TemplateSpec> default_templates();

// Template coordinates with labels and features, ready for metrics.
PointCloud template_cloud(const TemplateSpec &t);

enum class DataSource { kSynthetic, kXyzDir };

struct Dataset {
  std::vector<PointCloud> records;
  DataSource source = DataSource::kSynthetic;
  std::uint64_t seed = 0;
};

/**
 * @brief Rotated, jittered copies of randomly chosen templates.
 *
 * Record i draws from make_stream(seed, "data", i): a uniform template
 * index, N(0, jitter^2) per coordinate, then a Haar-random rotation. The
 * result is re-centered. Comments read "template=<id> seed=<seed>".
 */
Dataset gen_synthetic(std::span<const TemplateSpec> templates,
                      std::size_t count, std::uint64_t seed);

/**
 * @brief Parses concatenated XYZ frames.
 *
 * Element symbols are case-normalised; unknown symbols become "X" and add
 * a line to `warnings`. Columns after the third coordinate are ignored.
 * Throws ParseError with the 1-based line number.
 */
std::vector<PointCloud> parse_xyz(std::string_view text,
                                  std::vector<std::string> *warnings = nullptr);

// Count line, comment, then "<El> x y z" with 6 decimals. Clouds in 2-D
// are written with z = 0. Throws ContractViolation for missing labels.
std::string write_xyz(std::span<const PointCloud> clouds);

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded shuffle; train gets floor(0.8 n), val floor(0.1 n), test the rest.
Splits split_indices(std::size_t n, std::uint64_t seed);

// Writes <root>/{train,val,test}/clouds.xyz.
void write_dataset(const std::filesystem::path &root, const Dataset &data,
                   std::uint64_t split_seed);

// Reads every *.xyz of <root>/<split> in name order. Throws IoError.
std::vector<PointCloud> load_split(const std::filesystem::path &root,
                                   std::string_view split,
                                   std::vector<std::string> *warnings = nullptr);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view text);

/**
 * @brief Bond distance windows and allowed bond counts per element.
 *
 * Keys are stored with the two symbols in alphabetical order, so lookups
 * are symmetric.
 */
class BondTable {
public:
  void set_bond(const std::string &a, const std::string &b, double min_dist,
                double max_dist);
  void set_valence(const std::string &el, std::set<int> counts);

  std::optional<std::pair<double, double>> bond(const std::string &a,
                                                const std::string &b) const;
  const std::set<int> *valence(const std::string &el) const;

  const std::map<std::pair<std::string, std::string>,
                 std::pair<double, double>> &
  bonds() const noexcept {
    return bonds_;
  }
  const std::map<std::string, std::set<int>> &valences() const noexcept {
    return valence_;
  }

  // {"bonds": {"C-N": [min, max], ...}, "valence": {"C": [2, 3, 4], ...}}
  std::string to_json() const;
  static BondTable from_json(std::string_view text);

private:
  std::map<std::pair<std::string, std::string>, std::pair<double, double>>
      bonds_;
  std::map<std::string, std::set<int>> valence_;
};

// Table consistent with default_templates(): every pair bonds in
// [0.8, 1.2].
BondTable default_bond_table();

std::string templates_to_json(std::span<const TemplateSpec> templates);
std::vector<TemplateSpec> templates_from_json(std::string_view text);

}  // namespace canondiff

#endif  // CANONDIFF_DATA_H_
