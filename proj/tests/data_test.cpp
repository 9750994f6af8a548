//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "canondiff/data.h"
#include "canondiff/errors.h"

namespace canondiff {
namespace {

// Two-sample Kolmogorov-Smirnov statistic.
double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x)
      ++i;
    while (j < b.size() && b[j] <= x)
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size()
                             - static_cast<double>(j) / b.size()));
  }
  return d;
}

TEST(Templates, DefaultsAreValid) {
  const std::vector<TemplateSpec> t = default_templates();
  ASSERT_EQ(t.size(), 4u);
  const std::size_t sizes[] = { 3, 4, 5, 6 };
  for (std::size_t k = 0; k < t.size(); ++k) {
    EXPECT_NO_THROW(validate(t[k]));
    EXPECT_EQ(t[k].base.rows(), static_cast<Eigen::Index>(sizes[k]));
    EXPECT_EQ(t[k].jitter_sigma, 0.05);
  }
  TemplateSpec bad = t[0];
  bad.base.row(0) = bad.base.row(1);
  EXPECT_THROW(validate(bad), ContractViolation);
}

TEST(GenSynthetic, ZeroJitterIsRigidMotion) {
  std::vector<TemplateSpec> t = default_templates();
  for (TemplateSpec &s: t)
    s.jitter_sigma = 0.0;
  const Dataset d = gen_synthetic(t, 50, 3);
  for (const PointCloud &x: d.records) {
    double best = 1e9;
    for (const TemplateSpec &s: t)
      if (s.labels == x.labels)
        best = std::min(best, kabsch_rmsd(x, template_cloud(s)).rmsd);
    EXPECT_LT(best, 1e-9);
    EXPECT_LT(x.coords.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(x.features, one_hot_features(x.labels));
  }
  EXPECT_THROW(gen_synthetic({}, 1, 0), ContractViolation);
  EXPECT_THROW(gen_synthetic(t, 0, 0), ContractViolation);
}

// Invariant statistics survive re-rotation, and the orientation itself is
// Haar: the direction cosine of any atom is uniform on [-1, 1].
TEST(GenSynthetic, RotationInvariantDistribution) {
  const std::vector<TemplateSpec> t = default_templates();
  const Dataset d = gen_synthetic(t, 10000, 5);
  Rng rng = make_stream(5, "rerotate");
  std::vector<double> dist, dist_rot, cosines;
  for (const PointCloud &x: d.records) {
    const PointCloud y = apply(random_rotation(rng, 3), x);
    dist.push_back((x.coords.row(0) - x.coords.row(1)).norm());
    dist_rot.push_back((y.coords.row(0) - y.coords.row(1)).norm());
    cosines.push_back(x.coords(0, 2) / x.coords.row(0).norm());
  }
  EXPECT_LT(ks_two_sample(dist, dist_rot), 0.02);
  std::sort(cosines.begin(), cosines.end());
  double ks = 0.0;
  const double n = static_cast<double>(cosines.size());
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    const double f = 0.5 * (cosines[i] + 1.0);
    ks = std::max({ ks, std::abs(f - i / n), std::abs((i + 1) / n - f) });
  }
  EXPECT_LT(ks, 0.02);
}

TEST(GenSynthetic, Deterministic) {
  const std::vector<TemplateSpec> t = default_templates();
  const Dataset a = gen_synthetic(t, 30, 9), b = gen_synthetic(t, 30, 9);
  EXPECT_EQ(write_xyz(a.records), write_xyz(b.records));
  EXPECT_NE(write_xyz(a.records), write_xyz(gen_synthetic(t, 30, 10).records));
  EXPECT_EQ(a.records[0].comment.rfind("template=", 0), 0u);
  EXPECT_NE(a.records[0].comment.find("seed=9"), std::string::npos);
}

TEST(Xyz, ParseExamples) {
  std::vector<std::string> warn;
  const auto one = parse_xyz("1\nc\nh 0.0 0.0 0.0\n", &warn);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].labels[0], "H");
  EXPECT_EQ(one[0].coords.norm(), 0.0);
  EXPECT_TRUE(warn.empty());

  const auto two = parse_xyz("1\na\nC 1 2 3\n2\nb\nN 0 0 0 extra\nO 1 1 1\n");
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1].size(), 2u);
  EXPECT_EQ(two[1].comment, "b");

  parse_xyz("1\nq\nQq 0 0 0\n", &warn);
  ASSERT_EQ(warn.size(), 1u);
  EXPECT_TRUE(parse_xyz("").empty());
}

int parse_error_line(std::string_view text) {
  try {
    parse_xyz(text);
  } catch (const ParseError &e) {
    return static_cast<int>(e.line());
  }
  return -1;
}

TEST(Xyz, ParseErrors) {
  EXPECT_EQ(parse_error_line("3\nc\nH 0 0 0\n"), 3);
  EXPECT_EQ(parse_error_line("1\nc\nH 0 zero 0\n"), 3);
  EXPECT_EQ(parse_error_line("x\nc\n"), 1);
  EXPECT_EQ(parse_error_line("1\nc\nH 0 0 0\n\n1\n"), 4);
  EXPECT_EQ(parse_error_line("1\nc\nH 0 0\n"), 3);
}

TEST(Xyz, WriteFormatAndRoundTrip) {
  PointCloud x;
  x.coords = Coords(1, 3);
  x.coords << 1.5, -0.0, -2.0;
  x.labels = { "H" };
  x.features = one_hot_features(x.labels);
  x.comment = "c";
  EXPECT_EQ(write_xyz(std::span(&x, 1)), "1\nc\nH 1.500000 0.000000 -2.000000\n");
  EXPECT_EQ(write_xyz({}), "");

  const Dataset d = gen_synthetic(default_templates(), 40, 2);
  const std::string text = write_xyz(d.records);
  const std::vector<PointCloud> back = parse_xyz(text);
  ASSERT_EQ(back.size(), d.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_LE((back[i].coords - d.records[i].coords).cwiseAbs().maxCoeff(),
              5e-7);
    EXPECT_EQ(back[i].labels, d.records[i].labels);
  }
  EXPECT_EQ(write_xyz(back), text);

  PointCloud unlabeled = x;
  unlabeled.labels.clear();
  EXPECT_THROW(write_xyz(std::span(&unlabeled, 1)), ContractViolation);
}

TEST(Splits, DisjointCoveringDeterministic) {
  const Splits s = split_indices(103, 4);
  EXPECT_EQ(s.train.size(), 82u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 11u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 103u);
  EXPECT_EQ(*all.rbegin(), 102u);
  const Splits again = split_indices(103, 4);
  EXPECT_EQ(s.train, again.train);
  EXPECT_NE(s.train, split_indices(103, 5).train);
}

TEST(Splits, DatasetDirectoryRoundTrip) {
  const auto root = std::filesystem::temp_directory_path() / "canondiff_data_test";
  std::filesystem::remove_all(root);
  const Dataset d = gen_synthetic(default_templates(), 20, 1);
  write_dataset(root, d, 7);
  const Splits s = split_indices(20, 7);
  const std::vector<PointCloud> train = load_split(root, "train");
  ASSERT_EQ(train.size(), s.train.size());
  EXPECT_EQ(train[0].labels, d.records[s.train[0]].labels);
  EXPECT_EQ(load_split(root, "test").size(), s.test.size());
  EXPECT_THROW(load_split(root / "missing", "train"), IoError);
  std::filesystem::remove_all(root);
}

TEST(Elements, NormalizeAndFeatures) {
  EXPECT_EQ(normalize_element("cl"), "Cl");
  EXPECT_EQ(normalize_element("C"), "C");
  EXPECT_FALSE(normalize_element("Qq").has_value());
  const std::vector<std::string> l = { "H", "F", "X" };
  const Coords f = one_hot_features(l);
  EXPECT_EQ(f(0, 0), 1.0);
  EXPECT_EQ(f(1, 4), 1.0);
  EXPECT_EQ(f(2, 5), 1.0);
  EXPECT_EQ(f.sum(), 3.0);
}

TEST(BondTableJson, RoundTripAndSymmetry) {
  const BondTable t = default_bond_table();
  EXPECT_EQ(t.bond("N", "C"), t.bond("C", "N"));
  ASSERT_TRUE(t.bond("C", "O").has_value());
  EXPECT_EQ(t.bond("C", "O")->first, 0.8);
  const std::string json = t.to_json();
  EXPECT_NE(json.find("\"C-N\""), std::string::npos);
  const BondTable back = BondTable::from_json(json);
  EXPECT_EQ(back.bonds(), t.bonds());
  EXPECT_EQ(back.valences(), t.valences());
  BondTable bad;
  EXPECT_THROW(bad.set_bond("C", "C", 1.2, 1.0), ContractViolation);
  EXPECT_THROW(BondTable::from_json("{\"bonds\": 3}"), ContractViolation);
  EXPECT_THROW(BondTable::from_json("{"), ContractViolation);
}

TEST(TemplatesJson, RoundTrip) {
  const std::vector<TemplateSpec> t = default_templates();
  const std::vector<TemplateSpec> back =
      templates_from_json(templates_to_json(t));
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].labels, t[i].labels);
    EXPECT_EQ(back[i].base, t[i].base);
  }
}

}  // namespace
}  // namespace canondiff
