#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "noisykit/matrix.hpp"
#include "noisykit/nn.hpp"
#include "noisykit/transition.hpp"

namespace noisykit {

/// Probabilities are floored here before logs and divisions.
inline constexpr double kProbFloor = 1e-12;

/// Result of a batch loss evaluation. `value` is the mean over the batch and
/// `dlogits` is the gradient of that mean w.r.t. every logit (batch x C,
/// row-major). `ddelta` is filled only by revision_loss; `weights` carries
/// the per-sample beta factors of the reweighted losses.
struct LossOutput {
  double value = 0.0;
  std::vector<double> dlogits;
  std::optional<Mat> ddelta;
  std::optional<std::vector<double>> weights;
};

namespace detail {

inline void check_labels(std::span<const int> labels, std::size_t num_classes) {
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw std::invalid_argument("label " + std::to_string(y) + " out of range");
}

inline void check_batch(std::span<const double> logits, std::size_t batch,
                        std::size_t num_classes, std::span<const int> labels) {
  if (batch == 0) throw std::invalid_argument("empty batch");
  if (logits.size() != batch * num_classes)
    throw std::invalid_argument("logits shape mismatch");
  if (labels.size() != batch) throw std::invalid_argument("labels length mismatch");
  check_labels(labels, num_classes);
}

inline void finalize_mean(LossOutput& out, double value_sum, std::size_t batch) {
  const auto b = static_cast<double>(batch);
  out.value = value_sum / b;
  for (double& v : out.dlogits) v /= b;
}

}  // namespace detail

/// Plain softmax cross-entropy, mean over the batch.
inline LossOutput cross_entropy(std::span<const double> logits, std::size_t batch,
                                std::size_t num_classes, std::span<const int> labels) {
  detail::check_batch(logits, batch, num_classes, labels);
  LossOutput out;
  out.dlogits.assign(batch * num_classes, 0.0);
  double value_sum = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const auto y = static_cast<std::size_t>(labels[n]);
    const auto p = softmax(logits.subspan(n * num_classes, num_classes));
    value_sum += -std::log(std::max(p[y], kProbFloor));
    double* row = out.dlogits.data() + n * num_classes;
    for (std::size_t k = 0; k < num_classes; ++k) row[k] = p[k];
    row[y] -= 1.0;
  }
  detail::finalize_mean(out, value_sum, batch);
  return out;
}

/// Forward correction: the loss compares the model's noisy-posterior estimate
/// q = T^t softmax(z) against the noisy label, so the softmax itself is
/// pushed toward the clean posterior. Per sample: -log q[y] with
/// d/dz_k = p_k - T[k][y] * p_k / q[y].
inline LossOutput forward_corrected_loss(std::span<const double> logits, std::size_t batch,
                                         std::size_t num_classes, std::span<const int> labels,
                                         const TransitionMatrix& t) {
  detail::check_batch(logits, batch, num_classes, labels);
  if (t.size() != num_classes)
    throw std::invalid_argument("transition matrix size does not match class count");
  LossOutput out;
  out.dlogits.assign(batch * num_classes, 0.0);
  double value_sum = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const auto y = static_cast<std::size_t>(labels[n]);
    const auto p = softmax(logits.subspan(n * num_classes, num_classes));
    double q = 0.0;
    for (std::size_t j = 0; j < num_classes; ++j) q += t.at(j, y) * p[j];
    const double qf = std::max(q, kProbFloor);
    value_sum += -std::log(qf);
    double* row = out.dlogits.data() + n * num_classes;
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double ratio = p[k] / qf;
      row[k] = p[k] - t.at(k, y) * ratio;
    }
  }
  detail::finalize_mean(out, value_sum, batch);
  return out;
}

namespace detail {

// Shared body of the importance-reweighted and revision losses. The per-sample
// weight is beta = g[y] / ((T + dT)^t g)[y]; beta is a constant w.r.t. the
// network (no gradient flows from beta into the logits), while revision_loss
// additionally reports d(value)/d(dT), which does flow through the
// denominator. Pass dt = nullptr for the fixed-T variant.
inline LossOutput weighted_loss_impl(std::span<const double> logits, std::size_t batch,
                                     std::size_t num_classes, std::span<const int> labels,
                                     const TransitionMatrix& t, const Mat* dt) {
  check_batch(logits, batch, num_classes, labels);
  if (t.size() != num_classes)
    throw std::invalid_argument("transition matrix size does not match class count");
  if (dt) {
    if (dt->rows != num_classes || dt->cols != num_classes)
      throw std::invalid_argument("revision delta size does not match class count");
    if (!dt->all_finite()) throw std::invalid_argument("revision delta has non-finite entries");
  }

  LossOutput out;
  out.dlogits.assign(batch * num_classes, 0.0);
  out.weights.emplace();
  out.weights->reserve(batch);
  if (dt) out.ddelta.emplace(num_classes, num_classes, 0.0);

  double value_sum = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const auto y = static_cast<std::size_t>(labels[n]);
    const auto g = softmax(logits.subspan(n * num_classes, num_classes));
    double denom = 0.0;
    if (dt) {
      for (std::size_t j = 0; j < num_classes; ++j) denom += (t.at(j, y) + (*dt)(j, y)) * g[j];
    } else {
      for (std::size_t j = 0; j < num_classes; ++j) denom += t.at(j, y) * g[j];
    }
    if (denom < kProbFloor)
      throw std::runtime_error("degenerate reweighting denominator for label " +
                               std::to_string(y));
    const double beta = g[y] / denom;
    out.weights->push_back(beta);
    const double sample_loss = -std::log(std::max(g[y], kProbFloor));
    value_sum += beta * sample_loss;
    double* row = out.dlogits.data() + n * num_classes;
    for (std::size_t k = 0; k < num_classes; ++k) row[k] = g[k];
    row[y] -= 1.0;
    for (std::size_t k = 0; k < num_classes; ++k) row[k] *= beta;
    if (dt) {
      // d(beta * loss)/d(dT[r][y]) = -loss * beta / denom * g[r]
      const double coef = sample_loss * beta / denom;
      for (std::size_t r = 0; r < num_classes; ++r) (*out.ddelta)(r, y) -= coef * g[r];
    }
  }
  detail::finalize_mean(out, value_sum, batch);
  if (out.ddelta)
    for (double& v : out.ddelta->data) v /= static_cast<double>(batch);
  return out;
}

}  // namespace detail

/// Importance re-weighting: cross-entropy weighted per sample by
/// beta = g[y] / (T^t g)[y], the estimated clean/noisy density ratio. The
/// weight acts as a constant in the gradient.
inline LossOutput reweighted_loss(std::span<const double> logits, std::size_t batch,
                                  std::size_t num_classes, std::span<const int> labels,
                                  const TransitionMatrix& t) {
  return detail::weighted_loss_impl(logits, batch, num_classes, labels, t, nullptr);
}

/// Reweighted loss with the revised matrix T + dT in the denominator and the
/// gradient w.r.t. dT reported in `ddelta`, so the slack can be trained
/// jointly with the network.
inline LossOutput revision_loss(std::span<const double> logits, std::size_t batch,
                                std::size_t num_classes, std::span<const int> labels,
                                const TransitionMatrix& t, const RevisionDelta& dt) {
  return detail::weighted_loss_impl(logits, batch, num_classes, labels, t, &dt.entries);
}

}  // namespace noisykit
