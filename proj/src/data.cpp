//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/data.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "canondiff/errors.h"
#include "canondiff/rng.h"

namespace canondiff {

namespace {

constexpr std::array<std::string_view, 54> kElements = {
  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na",
  "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti",
  "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
  "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
  "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t')
      ++j;
    if (j > i)
      out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' '
                        || s.back() == '\t'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos)
      end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const char *first = tok.data();
  if (!tok.empty() && tok.front() == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError("invalid coordinate '" + std::string(tok) + "'", line);
  return v;
}

void format_coord(std::string &out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  if (std::string_view(buf) == "-0.000000")
    out += "0.000000";
  else
    out += buf;
}

}  // namespace

std::optional<std::string> normalize_element(std::string_view symbol) {
  if (symbol.empty() || symbol.size() > 2)
    return std::nullopt;
  std::string s(symbol);
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  for (std::size_t i = 1; i < s.size(); ++i)
    s[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
  if (std::find(kElements.begin(), kElements.end(), s) == kElements.end())
    return std::nullopt;
  return s;
}

Coords one_hot_features(std::span<const std::string> labels) {
  Coords f = Coords::Zero(static_cast<Eigen::Index>(labels.size()),
                          kFeatureDim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int col = kFeatureDim - 1;
    for (int k = 0; k + 1 < kFeatureDim; ++k)
      if (labels[i] == kFeatureElements[k])
        col = k;
    f(static_cast<Eigen::Index>(i), col) = 1.0;
  }
  return f;
}

void validate(const TemplateSpec &t) {
  const auto n = static_cast<std::size_t>(t.base.rows());
  if (n == 0)
    throw ContractViolation("template has no atoms");
  if (t.labels.size() != n)
    throw ContractViolation("template needs one label per atom");
  if (t.base.cols() != 2 && t.base.cols() != 3)
    throw ContractViolation("template dimension must be 2 or 3");
  if (!(t.jitter_sigma >= 0.0))
    throw ContractViolation("template jitter must be non-negative");
  if (t.base.colwise().mean().cwiseAbs().maxCoeff() > 1e-9)
    throw ContractViolation("template base coordinates are not centered");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((t.base.row(i) - t.base.row(j)).norm() < 0.5)
        throw ContractViolation("template atoms closer than 0.5");
}

std::vector<TemplateSpec> default_templates() {
  auto make = [](int id, std::vector<std::string> labels,
                 std::vector<std::array<double, 3>> pts) {
    TemplateSpec t;
    t.id = id;
    t.labels = std::move(labels);
    t.base = Coords(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (int k = 0; k < 3; ++k)
        t.base(static_cast<Eigen::Index>(i), k) = pts[i][k];
    t.base.rowwise() -= t.base.colwise().mean();
    t.jitter_sigma = 0.05;
    return t;
  };
  const double bend = 110.0 * std::numbers::pi / 180.0;
  const double h = std::sqrt(0.5);
  return {
    make(0, { "C", "N", "O" },
         { { 0, 0, 0 }, { 1, 0, 0 }, { std::cos(bend), std::sin(bend), 0 } }),
    make(1, { "C", "N", "O", "F" },
         { { 0, 0, 0 }, { 1, 0, 0 }, { 1, 1, 0 }, { 0, 1, 0 } }),
    make(2, { "C", "N", "O", "F", "C" },
         { { 0, 0, 0 },
           { 1, 0, 0 },
           { 1, 1, 0 },
           { 0, 1, 0 },
           { 0.5, 0.5, h } }),
    make(3, { "C", "C", "H", "H", "N", "O" },
         { { h, 0, 0 },
           { 0, h, 0 },
           { -h, 0, 0 },
           { 0, -h, 0 },
           { 0, 0, h },
           { 0, 0, -h } }),
  };
}

PointCloud template_cloud(const TemplateSpec &t) {
  PointCloud x;
  x.coords = t.base;
  x.labels = t.labels;
  x.features = one_hot_features(t.labels);
  x.comment = "template=" + std::to_string(t.id);
  return x;
}

Dataset gen_synthetic(std::span<const TemplateSpec> templates,
                      std::size_t count, std::uint64_t seed) {
  if (templates.empty())
    throw ContractViolation("template list is empty");
  if (count < 1)
    throw ContractViolation("dataset count must be >= 1");
  for (const TemplateSpec &t: templates)
    validate(t);

  Dataset out;
  out.seed = seed;
  out.source = DataSource::kSynthetic;
  out.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = make_stream(seed, "data", i);
    std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
    const TemplateSpec &t = templates[pick(rng)];
    std::normal_distribution<double> jitter(0.0, 1.0);
    PointCloud x = template_cloud(t);
    for (Eigen::Index r = 0; r < x.coords.rows(); ++r)
      for (Eigen::Index c = 0; c < x.coords.cols(); ++c)
        x.coords(r, c) += t.jitter_sigma * jitter(rng);
    x = apply(random_rotation(rng, t.base.cols() == 2 ? 2 : 3), x);
    x = remove_com(x).first;
    x.comment = "template=" + std::to_string(t.id)
                + " seed=" + std::to_string(seed);
    out.records.push_back(std::move(x));
  }
  return out;
}

std::vector<PointCloud> parse_xyz(std::string_view text,
                                  std::vector<std::string> *warnings) {
  const std::vector<std::string_view> lines = split_lines(text);
  std::vector<PointCloud> out;
  std::size_t i = 0;
  while (i < lines.size()) {
    const std::string_view count_line = strip(lines[i]);
    if (count_line.empty()) {
      // Only trailing blank lines are allowed.
      bool rest_blank = true;
      for (std::size_t j = i; j < lines.size(); ++j)
        rest_blank = rest_blank && strip(lines[j]).empty();
      if (rest_blank)
        break;
      throw ParseError("expected atom count", i + 1);
    }
    const std::vector<std::string_view> ct = split_ws(count_line);
    long long n = -1;
    if (ct.size() == 1) {
      auto [ptr, ec] =
          std::from_chars(ct[0].data(), ct[0].data() + ct[0].size(), n);
      if (ec != std::errc() || ptr != ct[0].data() + ct[0].size())
        n = -1;
    }
    if (n < 0)
      throw ParseError("expected atom count, got '" + std::string(count_line)
                           + "'",
                       i + 1);
    const std::size_t count_line_no = i + 1;
    ++i;
    if (i >= lines.size())
      throw ParseError("missing comment line", count_line_no);

    PointCloud x;
    x.comment = std::string(strip(lines[i]));
    ++i;
    x.coords = Coords(n, 3);
    x.labels.reserve(static_cast<std::size_t>(n));
    for (long long a = 0; a < n; ++a, ++i) {
      if (i >= lines.size())
        throw ParseError("frame declares " + std::to_string(n)
                             + " atoms but provides " + std::to_string(a),
                         std::max<std::size_t>(lines.size(), 1));
      const std::size_t line_no = i + 1;
      const std::vector<std::string_view> tok = split_ws(strip(lines[i]));
      if (tok.size() < 4)
        throw ParseError("expected '<element> x y z'", line_no);
      std::optional<std::string> el = normalize_element(tok[0]);
      if (!el) {
        if (warnings != nullptr)
          warnings->push_back("line " + std::to_string(line_no)
                              + ": unknown element '" + std::string(tok[0])
                              + "' recorded as X");
        el = std::string(kUnknownElement);
      }
      x.labels.push_back(*el);
      for (int k = 0; k < 3; ++k)
        x.coords(a, k) = parse_double(tok[1 + k], line_no);
    }
    x.features = one_hot_features(x.labels);
    out.push_back(std::move(x));
  }
  return out;
}

std::string write_xyz(std::span<const PointCloud> clouds) {
  std::string out;
  for (const PointCloud &x: clouds) {
    if (x.labels.size() != x.size())
      throw ContractViolation("write_xyz needs one label per atom");
    if (x.dim() != 2 && x.dim() != 3)
      throw ContractViolation("write_xyz supports 2-D and 3-D clouds");
    out += std::to_string(x.size());
    out += '\n';
    for (char c: x.comment)
      out += (c == '\n' || c == '\r') ? ' ' : c;
    out += '\n';
    for (std::size_t i = 0; i < x.size(); ++i) {
      out += x.labels[i];
      for (int k = 0; k < 3; ++k) {
        out += ' ';
        format_coord(out, k < x.dim() ? x.coords(static_cast<Eigen::Index>(i),
                                                 k)
                                      : 0.0);
      }
      out += '\n';
    }
  }
  return out;
}

Splits split_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{ 0 });
  Rng rng = make_stream(seed, "split");
  // Fisher-Yates with our own draws; std::shuffle is implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> u(0, i - 1);
    std::swap(idx[i - 1], idx[u(rng)]);
  }
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  Splits s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad())
    throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path &path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw IoError("write failed for '" + path.string() + "'");
}

void write_dataset(const std::filesystem::path &root, const Dataset &data,
                   std::uint64_t split_seed) {
  const Splits s = split_indices(data.records.size(), split_seed);
  auto emit = [&](const char *name, const std::vector<std::size_t> &idx) {
    std::vector<PointCloud> part;
    part.reserve(idx.size());
    for (std::size_t i: idx)
      part.push_back(data.records[i]);
    write_file(root / name / "clouds.xyz", write_xyz(part));
  };
  emit("train", s.train);
  emit("val", s.val);
  emit("test", s.test);
}

std::vector<PointCloud> load_split(const std::filesystem::path &root,
                                   std::string_view split,
                                   std::vector<std::string> *warnings) {
  const std::filesystem::path dir = root / std::string(split);
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw IoError("dataset split directory '" + dir.string()
                  + "' does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto &entry: std::filesystem::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".xyz")
      files.push_back(entry.path());
  if (ec)
    throw IoError("cannot list '" + dir.string() + "'");
  std::sort(files.begin(), files.end());
  std::vector<PointCloud> out;
  for (const auto &f: files) {
    std::vector<PointCloud> part = parse_xyz(read_file(f), warnings);
    for (auto &x: part)
      out.push_back(std::move(x));
  }
  return out;
}

/* BondTable */

void BondTable::set_bond(const std::string &a, const std::string &b,
                         double min_dist, double max_dist) {
  if (!(min_dist < max_dist) || min_dist < 0.0)
    throw ContractViolation("bond window needs 0 <= min < max");
  bonds_[std::minmax(a, b)] = { min_dist, max_dist };
}

void BondTable::set_valence(const std::string &el, std::set<int> counts) {
  valence_[el] = std::move(counts);
}

std::optional<std::pair<double, double>>
BondTable::bond(const std::string &a, const std::string &b) const {
  auto it = bonds_.find(std::minmax(a, b));
  if (it == bonds_.end())
    return std::nullopt;
  return it->second;
}

const std::set<int> *BondTable::valence(const std::string &el) const {
  auto it = valence_.find(el);
  return it == valence_.end() ? nullptr : &it->second;
}

std::string BondTable::to_json() const {
  nlohmann::ordered_json j;
  j["bonds"] = nlohmann::ordered_json::object();
  for (const auto &[key, win]: bonds_)
    j["bonds"][key.first + "-" + key.second] = { win.first, win.second };
  j["valence"] = nlohmann::ordered_json::object();
  for (const auto &[el, counts]: valence_)
    j["valence"][el] = std::vector<int>(counts.begin(), counts.end());
  return j.dump(2) + "\n";
}

BondTable BondTable::from_json(std::string_view text) {
  BondTable t;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.at("bonds").is_object() || !j.at("valence").is_object())
      throw ContractViolation("bond table needs 'bonds' and 'valence' objects");
    for (const auto &[key, win]: j.at("bonds").items()) {
      const auto dash = key.find('-');
      if (dash == std::string::npos || dash == 0 || dash + 1 == key.size())
        throw ContractViolation("bond key '" + key + "' is not 'A-B'");
      if (!win.is_array() || win.size() != 2)
        throw ContractViolation("bond '" + key + "' needs [min, max]");
      t.set_bond(key.substr(0, dash), key.substr(dash + 1),
                 win[0].get<double>(), win[1].get<double>());
    }
    for (const auto &[el, counts]: j.at("valence").items())
      t.set_valence(el, counts.get<std::set<int>>());
  } catch (const nlohmann::json::exception &e) {
    throw ContractViolation(std::string("invalid bond table: ") + e.what());
  }
  return t;
}

BondTable default_bond_table() {
  BondTable t;
  const std::vector<std::string> els = { "C", "F", "H", "N", "O" };
  for (std::size_t i = 0; i < els.size(); ++i)
    for (std::size_t j = i; j < els.size(); ++j)
      t.set_bond(els[i], els[j], 0.8, 1.2);
  t.set_valence("C", { 2, 3, 4 });
  t.set_valence("F", { 2, 3 });
  t.set_valence("H", { 4 });
  t.set_valence("N", { 1, 2, 3, 4 });
  t.set_valence("O", { 1, 2, 3, 4 });
  return t;
}

std::string templates_to_json(std::span<const TemplateSpec> templates) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const TemplateSpec &t: templates) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["labels"] = t.labels;
    nlohmann::ordered_json coords = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < t.base.rows(); ++i) {
      std::vector<double> row(t.base.row(i).begin(), t.base.row(i).end());
      coords.push_back(row);
    }
    j["coords"] = coords;
    j["jitter_sigma"] = t.jitter_sigma;
    arr.push_back(j);
  }
  nlohmann::ordered_json root;
  root["templates"] = arr;
  return root.dump(2) + "\n";
}

std::vector<TemplateSpec> templates_from_json(std::string_view text) {
  std::vector<TemplateSpec> out;
  try {
    const nlohmann::json root = nlohmann::json::parse(text);
    for (const auto &j: root.at("templates")) {
      TemplateSpec t;
      t.id = j.at("id").get<int>();
      t.labels = j.at("labels").get<std::vector<std::string>>();
      const auto rows = j.at("coords").get<std::vector<std::vector<double>>>();
      const std::size_t dim = rows.empty() ? 3 : rows[0].size();
      t.base = Coords(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim)
          throw ContractViolation("template rows differ in length");
        for (std::size_t k = 0; k < dim; ++k)
          t.base(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
              rows[i][k];
      }
      t.jitter_sigma = j.value("jitter_sigma", 0.05);
      validate(t);
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception &e) {
    throw ContractViolation(std::string("invalid template file: ") + e.what());
  }
  return out;
}

}  // namespace canondiff
