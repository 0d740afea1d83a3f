#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ttseal/bytes.hpp"
#include "ttseal/error.hpp"
#include "ttseal/rng.hpp"

namespace ttseal {

enum class Split { all, train, val, seed, eval };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::all: return "all";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::seed: return "seed";
    case Split::eval: return "eval";
  }
  return "all";
}

/// Labelled real vectors in [0,1]^dim.
struct Dataset {
  std::size_t dim = 0;
  std::size_t class_count = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<std::size_t> labels;
  Split split = Split::all;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }

  void push(std::vector<double> x, std::size_t label) {
    inputs.push_back(std::move(x));
    labels.push_back(label);
  }

  Dataset subset(std::span<const std::size_t> indices, Split tag) const {
    Dataset out{dim, class_count, {}, {}, tag};
    for (auto i : indices) out.push(inputs.at(i), labels.at(i));
    return out;
  }

  Dataset slice(std::size_t begin, std::size_t end, Split tag) const {
    Dataset out{dim, class_count, {}, {}, tag};
    for (std::size_t i = begin; i < std::min(end, size()); ++i) out.push(inputs[i], labels[i]);
    return out;
  }

  void validate() const {
    require(inputs.size() == labels.size(), ErrorKind::shape, "dataset inputs/labels differ in count");
    for (std::size_t i = 0; i < size(); ++i) {
      require(inputs[i].size() == dim, ErrorKind::shape,
              "dataset row " + std::to_string(i) + " has wrong dimension");
      require(labels[i] < class_count, ErrorKind::shape,
              "dataset row " + std::to_string(i) + " label out of range");
    }
  }

  /// Hash over dimensions, labels and the exact input bits.
  std::uint64_t fingerprint() const {
    ByteWriter w;
    w.u64(dim);
    w.u64(class_count);
    for (std::size_t i = 0; i < size(); ++i) {
      w.u64(labels[i]);
      for (double v : inputs[i]) w.f64(v);
    }
    return fnv1a64(w.bytes());
  }
};

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t clusters_per_class = 3;
  std::size_t samples = 2000;
  std::size_t dim = 2;
  double spread = 0.06;
  std::uint64_t seed = 1;
};

/// Gaussian clusters inside the unit hypercube, several per class; labels
/// cycle through the classes so every class is equally represented.
inline Dataset make_synthetic(const SyntheticSpec& spec) {
  require(spec.classes >= 1 && spec.clusters_per_class >= 1 && spec.dim >= 1, ErrorKind::config,
          "synthetic spec needs classes, clusters and dim >= 1");
  Rng rng(derive_seed(spec.seed, {stream::data}));
  std::vector<std::vector<double>> centers(spec.classes * spec.clusters_per_class);
  for (auto& c : centers) {
    c.resize(spec.dim);
    for (auto& v : c) v = rng.uniform(0.15, 0.85);
  }
  Dataset out{spec.dim, spec.classes, {}, {}, Split::all};
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t label = i % spec.classes;
    const auto& center = centers[label * spec.clusters_per_class + rng.below(spec.clusters_per_class)];
    std::vector<double> x(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k)
      x[k] = std::clamp(center[k] + spec.spread * rng.normal(), 0.0, 1.0);
    out.push(std::move(x), label);
  }
  return out;
}

struct SplitFractions {
  double train = 0.6;
  double val = 0.1;
  double seed = 0.1;
  double eval = 0.2;
};

struct DatasetSplits {
  Dataset train, val, seed, eval;
};

/// Consecutive split in the given proportions (the generator already
/// interleaves classes).
inline DatasetSplits split_dataset(const Dataset& data, const SplitFractions& f) {
  const double total = f.train + f.val + f.seed + f.eval;
  require(total > 0.0 && f.train >= 0 && f.val >= 0 && f.seed >= 0 && f.eval >= 0,
          ErrorKind::config, "split fractions must be nonnegative and not all zero");
  const auto n = static_cast<double>(data.size());
  const auto a = static_cast<std::size_t>(n * f.train / total);
  const auto b = a + static_cast<std::size_t>(n * f.val / total);
  const auto c = b + static_cast<std::size_t>(n * f.seed / total);
  return {data.slice(0, a, Split::train), data.slice(a, b, Split::val),
          data.slice(b, c, Split::seed), data.slice(c, data.size(), Split::eval)};
}

inline std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  out.precision(17);
  out << "label";
  for (std::size_t k = 0; k < data.dim; ++k) out << ",f" << k;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.inputs[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

struct CsvLoadStats {
  std::size_t clamped = 0;
};

/// Parses `label,f0,f1,...`. Features outside [0,1] are clamped and counted;
/// a warning goes to stderr when anything was clamped. class_count of 0 means
/// "one more than the largest label seen".
inline Dataset dataset_from_csv(std::string_view text, std::size_t class_count = 0,
                                Split tag = Split::all, CsvLoadStats* stats = nullptr) {
  std::istringstream in{std::string(text)};
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::format, "empty dataset CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line.rfind("label", 0) == 0, ErrorKind::format, "dataset CSV header must start with 'label'");
  const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  require(dim >= 1, ErrorKind::format, "dataset CSV has no feature columns");

  Dataset out{dim, class_count, {}, {}, tag};
  std::size_t clamped = 0, max_label = 0, row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(fields, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      require(end != cell.c_str() && *end == '\0', ErrorKind::format,
              "dataset CSV row " + std::to_string(row) + ": bad number '" + cell + "'");
      values.push_back(v);
    }
    require(values.size() == dim + 1, ErrorKind::format,
            "dataset CSV row " + std::to_string(row) + ": wrong column count");
    require(values[0] >= 0 && values[0] == static_cast<double>(static_cast<std::size_t>(values[0])),
            ErrorKind::format, "dataset CSV row " + std::to_string(row) + ": bad label");
    const auto label = static_cast<std::size_t>(values[0]);
    max_label = std::max(max_label, label);
    std::vector<double> x(values.begin() + 1, values.end());
    for (auto& v : x) {
      const double c = std::clamp(v, 0.0, 1.0);
      if (c != v) ++clamped;
      v = c;
    }
    out.push(std::move(x), label);
  }
  if (out.class_count == 0) out.class_count = out.empty() ? 0 : max_label + 1;
  if (clamped > 0)
    std::cerr << "warning: clamped " << clamped << " feature value(s) into [0,1]\n";
  if (stats) stats->clamped = clamped;
  out.validate();
  return out;
}

inline Dataset load_dataset_csv(const std::string& path, std::size_t class_count = 0,
                                Split tag = Split::all) {
  const auto bytes = read_file(path);
  return dataset_from_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                          class_count, tag);
}

}  // namespace ttseal
