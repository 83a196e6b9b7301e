#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noisykit/hash.hpp"
#include "noisykit/rng.hpp"
#include "noisykit/transition.hpp"

namespace noisykit {

/// Feature matrix (row-major n x d) plus integer labels in [0, num_classes).
/// Classes below max(label) may be empty; num_classes is inferred from the
/// largest label when loading.
struct LabeledDataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dim = 0;
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  void validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset is empty");
    if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (features.size() != labels.size() * dim)
      throw std::invalid_argument("feature matrix shape does not match label count");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < 0 || labels[i] >= num_classes)
        throw std::invalid_argument("label out of range at row " + std::to_string(i));
    for (double v : features)
      if (!std::isfinite(v)) throw std::invalid_argument("dataset has a non-finite feature value");
  }

  /// Stable fingerprint over shape, labels and feature bit patterns.
  std::uint64_t content_hash() const {
    Fnv1a64 h;
    h.update_value<std::uint64_t>(labels.size());
    h.update_value<std::uint64_t>(dim);
    h.update_value<std::int32_t>(num_classes);
    h.update_span<int>(labels);
    h.update_span<double>(features);
    return h.digest();
  }
};

struct SyntheticSpec {
  int num_classes = 3;
  std::size_t dim = 2;
  std::size_t samples_per_class = 100;
  double class_separation = 10.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

struct SplitPair {
  LabeledDataset train;
  LabeledDataset validation;
  double split_fraction = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("failed to format a feature value");
  return std::string(buf, ptr);
}

inline void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

/// Reads the CSV interchange format: header `label,f0,...`, then one record
/// per line with an integer label followed by the feature values. LF and
/// CRLF are both accepted.
inline LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());

  LabeledDataset ds;
  ds.name = path.filename().string();

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": file is empty");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("label", 0) != 0)
    throw std::invalid_argument(path.string() + ":1: header must begin with \"label\"");

  std::vector<std::string_view> fields;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    detail::split_fields(line, fields);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 2) throw std::invalid_argument(where + ": row needs a label and features");
    if (ds.dim == 0) {
      ds.dim = fields.size() - 1;
    } else if (fields.size() - 1 != ds.dim) {
      throw std::invalid_argument(where + ": expected " + std::to_string(ds.dim + 1) +
                                  " columns, got " + std::to_string(fields.size()));
    }

    int label = 0;
    {
      const auto f = fields[0];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
      if (ec != std::errc() || p != f.data() + f.size())
        throw std::invalid_argument(where + ": malformed label \"" + std::string(f) + "\"");
    }
    if (label < 0) throw std::invalid_argument(where + ": negative label");
    max_label = std::max(max_label, label);
    ds.labels.push_back(label);

    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto f = fields[i];
      double v = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size())
        throw std::invalid_argument(where + ": malformed feature \"" + std::string(f) + "\"");
      if (!std::isfinite(v)) throw std::invalid_argument(where + ": non-finite feature value");
      ds.features.push_back(v);
    }
  }
  if (in.bad()) throw std::runtime_error(path.string() + ": read error");
  if (ds.labels.empty()) throw std::invalid_argument(path.string() + ": no data rows after header");

  ds.num_classes = max_label + 1;
  // a file mentioning only class 0 still loads; C is floored at 2
  if (ds.num_classes < 2) ds.num_classes = 2;
  ds.validate();
  return ds;
}

/// Writes the CSV interchange format with LF line endings. Feature values use
/// the shortest decimal representation that parses back to the same double.
inline void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  out << "label";
  for (std::size_t j = 0; j < ds.dim; ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.row(i)) out << ',' << detail::format_double(v);
    out << "\n";
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Gaussian blob generator. Class i is an isotropic Gaussian with standard
/// deviation noise_sigma around a mean on coordinate axis (i mod d); when
/// there are more classes than dimensions the wrapped classes are pushed out
/// by an extra factor per wrap so all means stay pairwise distinct. At large
/// separation each cluster sits in a region where its own class posterior is
/// essentially 1, which is exactly the anchor-point regime.
inline LabeledDataset synthesize(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("synthesize needs num_classes >= 2");
  if (spec.dim < 1) throw std::invalid_argument("synthesize needs dim >= 1");
  if (spec.samples_per_class < 1)
    throw std::invalid_argument("synthesize needs samples_per_class >= 1");
  if (!(spec.class_separation > 0.0)) throw std::invalid_argument("class_separation must be > 0");
  if (!(spec.noise_sigma > 0.0)) throw std::invalid_argument("noise_sigma must be > 0");

  const auto c = static_cast<std::size_t>(spec.num_classes);
  Rng rng(spec.seed);
  LabeledDataset ds;
  ds.dim = spec.dim;
  ds.num_classes = spec.num_classes;
  ds.name = "synthetic";
  ds.features.reserve(c * spec.samples_per_class * spec.dim);
  ds.labels.reserve(c * spec.samples_per_class);

  for (std::size_t cls = 0; cls < c; ++cls) {
    const std::size_t axis = cls % spec.dim;
    const double scale = static_cast<double>(1 + cls / spec.dim) * spec.class_separation;
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        double v = spec.noise_sigma * rng.next_gaussian();
        if (j == axis) v += scale;
        ds.features.push_back(v);
      }
      ds.labels.push_back(static_cast<int>(cls));
    }
  }
  return ds;
}

/// Divides every feature by 255, mapping pixel values into [0, 1].
inline LabeledDataset normalize_255(const LabeledDataset& ds) {
  LabeledDataset out = ds;
  for (double& v : out.features) {
    if (v < 0.0 || v > 255.0)
      throw std::invalid_argument("normalize_255 requires features in [0, 255]");
    v /= 255.0;
  }
  return out;
}

/// Replaces each label independently by a draw from the categorical
/// distribution given by its row of T. Features are copied untouched.
inline LabeledDataset inject_noise(const LabeledDataset& ds, const TransitionMatrix& t,
                                   std::uint64_t seed) {
  ds.validate();
  if (t.size() != static_cast<std::size_t>(ds.num_classes))
    throw std::invalid_argument("transition matrix size does not match dataset classes");
  Rng rng(seed);
  LabeledDataset out = ds;
  for (auto& label : out.labels)
    label = static_cast<int>(rng.next_categorical(t.row(static_cast<std::size_t>(label))));
  return out;
}

/// Seeded uniformly-random split: the first floor(fraction * n) rows of the
/// shuffled order go to train, the rest to validation.
inline SplitPair split(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
  ds.validate();
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw std::invalid_argument("degenerate split: one side would be empty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  auto take = [&](std::size_t begin, std::size_t end) {
    LabeledDataset part;
    part.dim = ds.dim;
    part.num_classes = ds.num_classes;
    part.name = ds.name;
    part.features.reserve((end - begin) * ds.dim);
    part.labels.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
      const auto r = ds.row(order[k]);
      part.features.insert(part.features.end(), r.begin(), r.end());
      part.labels.push_back(ds.labels[order[k]]);
    }
    return part;
  };

  return SplitPair{take(0, n_train), take(n_train, n), fraction, seed};
}

}  // namespace noisykit
