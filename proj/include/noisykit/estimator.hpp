#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "noisykit/config.hpp"
#include "noisykit/dataset.hpp"
#include "noisykit/matrix.hpp"
#include "noisykit/nn.hpp"
#include "noisykit/train_loop.hpp"
#include "noisykit/transition.hpp"

namespace noisykit {

struct AnchorCandidate {
  std::size_t row = 0;
  std::vector<double> posterior;
};

/// For each class, the rows whose estimated noisy posterior for that class is
/// highest, sorted by descending posterior (ties toward the lower row index).
struct AnchorSet {
  std::vector<std::vector<AnchorCandidate>> per_class;
  int top_k = 1;
};

/// Trains the probe classifier on the noisy labels with plain cross-entropy
/// for cfg.epochs. The probe's softmax approximates the noisy class
/// posterior; there is no validation split or model selection here.
inline MlpParams fit_noisy_posterior(const LabeledDataset& ds_noisy, const TrainConfig& cfg) {
  ds_noisy.validate();
  cfg.validate();
  std::vector<std::size_t> dims{ds_noisy.dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(static_cast<std::size_t>(ds_noisy.num_classes));

  MlpParams params = MlpParams::init(dims, derive_seed(cfg.seed, detail::kStreamInit));
  OptimizerState opt = OptimizerState::make(params, cfg.lr, cfg.momentum);
  Rng shuffle_rng(derive_seed(cfg.seed, detail::kStreamShuffle));
  const auto c = static_cast<std::size_t>(ds_noisy.num_classes);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::run_epoch(
        params, opt, ds_noisy, static_cast<std::size_t>(cfg.batch_size), shuffle_rng,
        [c](std::span<const double> logits, std::size_t b, std::span<const int> labels) {
          return cross_entropy(logits, b, c, labels);
        },
        [](const LossOutput&) {});
  }
  return params;
}

/// Scans the entire dataset and keeps, per class i, the top_k rows maximizing
/// the probe's softmax coordinate i, together with their posterior vectors.
inline AnchorSet pick_anchors(const MlpParams& probe, const LabeledDataset& ds_noisy, int top_k) {
  ds_noisy.validate();
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (ds_noisy.size() < static_cast<std::size_t>(top_k))
    throw std::invalid_argument("dataset has fewer rows than top_k");

  const std::size_t n = ds_noisy.size();
  const auto c = static_cast<std::size_t>(ds_noisy.num_classes);
  auto cache = forward_batch(probe, ds_noisy.features, n);
  std::vector<double> posteriors(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = softmax(cache.logits().subspan(i * c, c));
    std::copy(p.begin(), p.end(), posteriors.begin() + static_cast<std::ptrdiff_t>(i * c));
  }

  AnchorSet anchors;
  anchors.top_k = top_k;
  anchors.per_class.resize(c);
  std::vector<std::size_t> idx(n);
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::iota(idx.begin(), idx.end(), 0);
    const auto better = [&](std::size_t a, std::size_t b) {
      const double pa = posteriors[a * c + cls];
      const double pb = posteriors[b * c + cls];
      if (pa != pb) return pa > pb;
      return a < b;  // deterministic tie-break toward the lower row index
    };
    std::partial_sort(idx.begin(), idx.begin() + top_k, idx.end(), better);
    for (int k = 0; k < top_k; ++k) {
      const std::size_t row = idx[static_cast<std::size_t>(k)];
      anchors.per_class[cls].push_back(
          AnchorCandidate{row, std::vector<double>(posteriors.begin() + static_cast<std::ptrdiff_t>(row * c),
                                                   posteriors.begin() + static_cast<std::ptrdiff_t>((row + 1) * c))});
    }
  }
  return anchors;
}

struct EstimateReport {
  Mat t_hat;
  double abs_determinant = 0.0;
  bool near_singular = false;
};

/// Averages each class's anchor posteriors into row i of the estimate, so
/// t_hat[i][j] approximates P(noisy = j | true = i). Rows sum to 1 by
/// construction; near-singularity is reported rather than thrown.
inline EstimateReport estimate_T(const AnchorSet& anchors) {
  if (anchors.per_class.empty()) throw std::invalid_argument("empty anchor set");
  const std::size_t c = anchors.per_class.size();
  EstimateReport report;
  report.t_hat = Mat(c, c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    const auto& cands = anchors.per_class[i];
    if (cands.empty()) throw std::invalid_argument("anchor set has an empty class");
    for (const auto& cand : cands) {
      if (cand.posterior.size() != c)
        throw std::invalid_argument("anchor posterior has wrong length");
      for (std::size_t j = 0; j < c; ++j) report.t_hat(i, j) += cand.posterior[j];
    }
    for (std::size_t j = 0; j < c; ++j) report.t_hat(i, j) /= static_cast<double>(cands.size());
  }
  report.abs_determinant = std::fabs(determinant(report.t_hat));
  report.near_singular = report.abs_determinant < kSingularDetThreshold;
  return report;
}

}  // namespace noisykit
