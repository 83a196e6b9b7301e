#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "noisykit/dataset.hpp"
#include "noisykit/losses.hpp"
#include "noisykit/nn.hpp"
#include "noisykit/rng.hpp"

namespace noisykit::detail {

// Seed sub-stream tags. Every consumer derives from the run seed with these
// so that methods sharing a seed also share initialization and shuffles.
inline constexpr std::uint64_t kStreamInit = 0;
inline constexpr std::uint64_t kStreamShuffle = 1;
inline constexpr std::uint64_t kStreamRevision = 2;
inline constexpr std::uint64_t kStreamProbe = 3;

/// One shuffled pass of mini-batch SGD. `loss_fn(logits, b, labels)` returns
/// the batch LossOutput; `post_step(loss)` runs after each parameter update
/// (the revision trainer updates dT there). Returns the sample-weighted mean
/// training loss of the epoch.
template <typename LossFn, typename PostStep>
double run_epoch(MlpParams& params, OptimizerState& opt, const LabeledDataset& train,
                 std::size_t batch_size, Rng& shuffle_rng, LossFn&& loss_fn,
                 PostStep&& post_step) {
  const std::size_t n = train.size();
  const std::size_t d = train.dim;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(order);

  std::vector<double> xbuf;
  std::vector<int> ybuf;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    xbuf.resize(b * d);
    ybuf.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = train.row(order[start + i]);
      std::copy(row.begin(), row.end(), xbuf.begin() + static_cast<std::ptrdiff_t>(i * d));
      ybuf[i] = train.labels[order[start + i]];
    }
    auto cache = forward_batch(params, xbuf, b);
    LossOutput loss = loss_fn(cache.logits(), b, std::span<const int>(ybuf));
    GradientSet grads = backward(params, cache, loss.dlogits);
    grads.loss_value = loss.value;
    sgd_step(params, opt, grads);
    post_step(loss);
    loss_sum += loss.value * static_cast<double>(b);
  }
  return loss_sum / static_cast<double>(n);
}

/// Mean loss of `loss_fn` over the whole dataset, evaluated as one batch.
template <typename LossFn>
double evaluate_loss(const MlpParams& params, const LabeledDataset& ds, LossFn&& loss_fn) {
  auto cache = forward_batch(params, ds.features, ds.size());
  LossOutput loss = loss_fn(cache.logits(), ds.size(), std::span<const int>(ds.labels));
  return loss.value;
}

}  // namespace noisykit::detail
