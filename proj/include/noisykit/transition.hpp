#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisykit/matrix.hpp"

namespace noisykit {

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kSingularDetThreshold = 1e-12;

enum class KnownMatrix { fashion05, fashion06 };

/// Row-stochastic class-conditional noise matrix: entry (i, j) is the
/// probability that a label of true class i is observed as class j.
/// Construction validates entry range, row sums and non-singularity.
class TransitionMatrix {
 public:
  static TransitionMatrix make(Mat entries) {
    if (entries.rows != entries.cols)
      throw std::invalid_argument("transition matrix must be square");
    if (entries.rows < 2) throw std::invalid_argument("transition matrix needs size >= 2");
    for (std::size_t i = 0; i < entries.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < entries.cols; ++j) {
        const double v = entries(i, j);
        if (!std::isfinite(v)) throw std::invalid_argument("transition entry is not finite");
        if (v < 0.0)
          throw std::invalid_argument("transition entry is negative at row " + std::to_string(i));
        if (v > 1.0)
          throw std::invalid_argument("transition entry exceeds 1 at row " + std::to_string(i));
        sum += v;
      }
      if (std::fabs(sum - 1.0) > kRowSumTolerance)
        throw std::invalid_argument("transition row " + std::to_string(i) +
                                    " does not sum to 1 (sum=" + std::to_string(sum) + ")");
    }
    if (std::fabs(determinant(entries)) < kSingularDetThreshold)
      throw std::invalid_argument("transition matrix is singular (|det| < 1e-12)");
    return TransitionMatrix(std::move(entries));
  }

  static TransitionMatrix identity(std::size_t c) { return TransitionMatrix(Mat::identity(c)); }

  static TransitionMatrix known(KnownMatrix which) {
    switch (which) {
      case KnownMatrix::fashion05:
        return make(Mat::from_rows({{0.5, 0.2, 0.3}, {0.3, 0.5, 0.2}, {0.2, 0.3, 0.5}}));
      case KnownMatrix::fashion06:
        return make(Mat::from_rows({{0.4, 0.3, 0.3}, {0.3, 0.4, 0.3}, {0.3, 0.3, 0.4}}));
    }
    throw std::invalid_argument("unknown named transition matrix");
  }

  std::size_t size() const { return m_.rows; }
  double at(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Mat& entries() const { return m_; }
  std::span<const double> row(std::size_t i) const { return m_.row(i); }

  /// Maps a clean class posterior p to the noisy posterior q with
  /// q[i] = sum_j T[j][i] * p[j] (transpose application). Mass is preserved
  /// because every row of T sums to 1.
  std::vector<double> apply_to_posterior(std::span<const double> p) const {
    if (p.size() != size())
      throw std::invalid_argument("posterior length does not match transition size");
    double mass = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw std::invalid_argument("posterior has a negative or NaN entry");
      mass += v;
    }
    if (std::fabs(mass - 1.0) > kRowSumTolerance)
      throw std::invalid_argument("posterior does not sum to 1");
    std::vector<double> q(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j) q[i] += m_(j, i) * p[j];
    return q;
  }

 private:
  explicit TransitionMatrix(Mat m) : m_(std::move(m)) {}
  Mat m_;
};

/// Additive slack learned by T-Revision. Entries are unconstrained in sign.
struct RevisionDelta {
  Mat entries;

  static RevisionDelta zeros(std::size_t c) { return RevisionDelta{Mat(c, c, 0.0)}; }
  std::size_t size() const { return entries.rows; }
};

/// Elementwise T + dT. Deliberately returns a raw, unvalidated matrix: the
/// revised matrix is not renormalized and its rows need not sum to 1.
inline Mat revise(const TransitionMatrix& t, const RevisionDelta& dt) {
  if (dt.entries.rows != t.size() || dt.entries.cols != t.size())
    throw std::invalid_argument("revision delta size does not match transition matrix");
  Mat out = t.entries() + dt.entries;
  if (!out.all_finite()) throw std::invalid_argument("revised matrix has non-finite entries");
  return out;
}

/// Relative L1 distance sum_ij |est - true| / sum_ij |true| between an
/// estimate and the reference transition matrix.
inline double sum_average_error(const TransitionMatrix& t_true, const Mat& t_est) {
  if (!t_est.same_shape(t_true.entries()))
    throw std::invalid_argument("matrix shape mismatch in sum_average_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t_est.rows; ++i)
    for (std::size_t j = 0; j < t_est.cols; ++j) {
      num += std::fabs(t_est(i, j) - t_true.at(i, j));
      den += std::fabs(t_true.at(i, j));
    }
  return num / den;
}

// --- JSON wire format: {"size": C, "rows": [[...], ...]} ---

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i)
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return nlohmann::json{{"size", m.rows}, {"rows", rows}};
}

inline Mat mat_from_json(const nlohmann::json& j) {
  if (!j.contains("size") || !j.contains("rows"))
    throw std::invalid_argument("matrix JSON must contain \"size\" and \"rows\"");
  const auto size = j.at("size").get<std::size_t>();
  auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
  if (rows.size() != size)
    throw std::invalid_argument("matrix JSON row count does not match \"size\"");
  Mat m = Mat::from_rows(rows);
  if (m.cols != size) throw std::invalid_argument("matrix JSON column count does not match \"size\"");
  return m;
}

inline nlohmann::json to_json(const TransitionMatrix& t) { return mat_to_json(t.entries()); }

inline TransitionMatrix transition_from_json(const nlohmann::json& j) {
  return TransitionMatrix::make(mat_from_json(j));
}

}  // namespace noisykit
