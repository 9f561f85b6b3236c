#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "difflab/gmm.hpp"
#include "difflab/rng.hpp"

namespace difflab {

struct Dataset {
  std::vector<Vec> points;
  std::vector<int> labels;  // empty when unlabeled
  std::string spec;         // generator description for manifests

  bool labeled() const { return !labels.empty(); }
  std::size_t size() const { return points.size(); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }

  int num_classes() const {
    int hi = -1;
    for (int y : labels) hi = std::max(hi, y);
    return hi + 1;
  }

  void validate() const {
    require(!points.empty(), "Dataset: empty");
    for (const Vec& p : points)
      require(static_cast<int>(p.size()) == dim(), "Dataset: ragged points");
    if (labeled())
      require(labels.size() == points.size(), "Dataset: one label per point required");
  }
};

inline Dataset generate_gmm_dataset(const Gmm& g, int n, std::uint64_t seed) {
  require(n >= 1, "generate_gmm_dataset: n must be >= 1");
  g.validate();
  Rng rng(seed);
  Dataset d;
  d.spec = "gmm";
  d.points.reserve(n);
  for (int i = 0; i < n; ++i) d.points.push_back(gmm_sample(g, rng).first);
  return d;
}

inline Dataset generate_labeled_gmm_dataset(const LabeledGmm& lg, int n, std::uint64_t seed) {
  require(n >= 1, "generate_labeled_gmm_dataset: n must be >= 1");
  lg.validate();
  Rng rng(seed);
  Dataset d;
  d.spec = "labeled-gmm";
  d.points.reserve(n);
  d.labels.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto [x, comp] = gmm_sample(lg.gmm, rng);
    d.points.push_back(std::move(x));
    d.labels.push_back(lg.labels[comp]);
  }
  return d;
}

inline Dataset generate_ring_dataset(double radius, double noise, int n, std::uint64_t seed) {
  require(n >= 1 && radius > 0.0 && noise >= 0.0, "generate_ring_dataset: bad parameters");
  Rng rng(seed);
  Dataset d;
  d.spec = "ring";
  d.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double r = radius + noise * rng.normal();
    d.points.push_back({r * std::cos(theta), r * std::sin(theta)});
  }
  return d;
}

inline Dataset generate_two_moons_dataset(double noise, int n, std::uint64_t seed) {
  require(n >= 1 && noise >= 0.0, "generate_two_moons_dataset: bad parameters");
  Rng rng(seed);
  Dataset d;
  d.spec = "two-moons";
  d.points.reserve(n);
  d.labels.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int moon = static_cast<int>(rng.uniform_index(2));
    const double theta = rng.uniform(0.0, M_PI);
    Vec p;
    if (moon == 0)
      p = {std::cos(theta), std::sin(theta)};
    else
      p = {1.0 - std::cos(theta), 0.5 - std::sin(theta)};
    p[0] += noise * rng.normal();
    p[1] += noise * rng.normal();
    d.points.push_back(std::move(p));
    d.labels.push_back(moon);
  }
  return d;
}

// Locale-independent shortest-round-trip decimal.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string dataset_csv(const Dataset& d) {
  d.validate();
  std::string out;
  for (int k = 0; k < d.dim(); ++k) {
    if (k) out += ',';
    out += "x" + std::to_string(k + 1);
  }
  if (d.labeled()) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (int k = 0; k < d.dim(); ++k) {
      if (k) out += ',';
      out += format_double(d.points[i][k]);
    }
    if (d.labeled()) out += ',' + std::to_string(d.labels[i]);
    out += '\n';
  }
  return out;
}

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << dataset_csv(d);
  if (!f) throw IoError("write failed: " + path);
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  Dataset d;
  d.spec = "file:" + path;
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty dataset file: " + path);
  const bool has_label = line.size() >= 5 && line.substr(line.size() - 5) == "label";
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Vec p;
    std::size_t pos = 0;
    std::vector<std::string> cells;
    while (pos <= line.size()) {
      const std::size_t next = line.find(',', pos);
      cells.push_back(line.substr(pos, next == std::string::npos ? next : next - pos));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    const std::size_t ncoord = has_label ? cells.size() - 1 : cells.size();
    for (std::size_t k = 0; k < ncoord; ++k) {
      double v = 0.0;
      auto r = std::from_chars(cells[k].data(), cells[k].data() + cells[k].size(), v);
      if (r.ec != std::errc()) throw IoError("bad number in dataset: " + cells[k]);
      p.push_back(v);
    }
    if (has_label) d.labels.push_back(std::stoi(cells.back()));
    d.points.push_back(std::move(p));
  }
  d.validate();
  return d;
}

}  // namespace difflab
