#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <thread>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisykit/rng.hpp"

namespace noisykit {

struct LayerParams {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

/// Fully connected ReLU network parameters. Hidden layers use ReLU, the last
/// layer emits raw logits.
struct MlpParams {
  std::vector<LayerParams> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{input_dim()};
    for (const auto& l : layers) d.push_back(l.out);
    return d;
  }

  bool same_shape(const MlpParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].in != o.layers[i].in || layers[i].out != o.layers[i].out) return false;
    return true;
  }

  /// Weights drawn uniformly from (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases
  /// zero. Deterministic in the seed.
  static MlpParams init(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
    for (std::size_t d : dims)
      if (d < 1) throw std::invalid_argument("mlp layer sizes must be >= 1");
    Rng rng(seed);
    MlpParams p;
    p.layers.resize(dims.size() - 1);
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      auto& layer = p.layers[k];
      layer.in = dims[k];
      layer.out = dims[k + 1];
      layer.w.resize(layer.in * layer.out);
      layer.b.assign(layer.out, 0.0);
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
      for (double& w : layer.w) w = rng.next_double(-bound, bound);
    }
    return p;
  }
};

/// Per-layer velocity buffers for SGD with classic (heavy-ball) momentum.
struct OptimizerState {
  double learning_rate = 0.0;
  double momentum = 0.0;
  std::vector<LayerParams> velocity;

  static OptimizerState make(const MlpParams& params, double lr, double momentum) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw std::invalid_argument("momentum must be in [0, 1)");
    OptimizerState s;
    s.learning_rate = lr;
    s.momentum = momentum;
    s.velocity.reserve(params.layers.size());
    for (const auto& l : params.layers) {
      LayerParams v;
      v.in = l.in;
      v.out = l.out;
      v.w.assign(l.w.size(), 0.0);
      v.b.assign(l.b.size(), 0.0);
      s.velocity.push_back(std::move(v));
    }
    return s;
  }
};

struct GradientSet {
  std::vector<LayerParams> grads;  // shapes mirror MlpParams
  double loss_value = 0.0;
};

/// Activations captured during a batch forward pass; acts[0] is the input
/// batch, acts[k] the post-ReLU output of layer k-1, acts.back() the logits.
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::vector<double>> acts;

  std::span<const double> logits() const& { return acts.back(); }
  std::span<const double> logits() && = delete;  // would dangle past the temporary
};

namespace detail {

inline void check_finite(std::span<const double> values, std::size_t layer_index) {
  for (double v : values)
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite activation in layer " + std::to_string(layer_index));
}

}  // namespace detail

/// Batch forward pass over X (batch x input_dim, row-major). Returns the
/// cache needed by backward(); parameters are never mutated.
inline ForwardCache forward_batch(const MlpParams& params, std::span<const double> x,
                                  std::size_t batch) {
  const std::size_t d = params.input_dim();
  if (x.size() != batch * d) throw std::invalid_argument("input batch shape mismatch");
  detail::check_finite(x, 0);

  ForwardCache cache;
  cache.batch = batch;
  cache.acts.resize(params.layers.size() + 1);
  cache.acts[0].assign(x.begin(), x.end());

  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    const bool last = (k + 1 == params.layers.size());
    const auto& in = cache.acts[k];
    auto& out = cache.acts[k + 1];
    out.assign(batch * layer.out, 0.0);
    for (std::size_t n = 0; n < batch; ++n) {
      const double* xin = in.data() + n * layer.in;
      double* xout = out.data() + n * layer.out;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* wrow = layer.w.data() + o * layer.in;
        double acc = layer.b[o];
        for (std::size_t i = 0; i < layer.in; ++i) acc += wrow[i] * xin[i];
        xout[o] = last ? acc : std::max(0.0, acc);
      }
    }
    detail::check_finite(out, k + 1);
  }
  return cache;
}

/// Single-sample convenience wrapper; returns the logits.
inline std::vector<double> forward(const MlpParams& params, std::span<const double> x) {
  auto cache = forward_batch(params, x, 1);
  return cache.acts.back();
}

/// Numerically safe softmax (max-subtracted). Output sums to 1 within 1e-12.
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  double top = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax input is not finite");
    top = std::max(top, v);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Backpropagates d(loss)/d(logits) through the cached forward pass and
/// returns gradients for every weight and bias.
inline GradientSet backward(const MlpParams& params, const ForwardCache& cache,
                            std::span<const double> dlogits) {
  const std::size_t batch = cache.batch;
  if (cache.acts.size() != params.layers.size() + 1)
    throw std::invalid_argument("forward cache does not match network depth");
  if (dlogits.size() != batch * params.output_dim())
    throw std::invalid_argument("dlogits shape mismatch");

  GradientSet gs;
  gs.grads.resize(params.layers.size());

  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& layer = params.layers[k];
    const auto& in = cache.acts[k];
    auto& g = gs.grads[k];
    g.in = layer.in;
    g.out = layer.out;
    g.w.assign(layer.w.size(), 0.0);
    g.b.assign(layer.b.size(), 0.0);

    for (std::size_t n = 0; n < batch; ++n) {
      const double* xin = in.data() + n * layer.in;
      const double* d = delta.data() + n * layer.out;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        g.b[o] += dv;
        double* gw = g.w.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] += dv * xin[i];
      }
    }

    if (k == 0) break;
    // delta for the previous layer, gated by its ReLU mask
    std::vector<double> prev(batch * layer.in, 0.0);
    for (std::size_t n = 0; n < batch; ++n) {
      const double* d = delta.data() + n * layer.out;
      const double* act = in.data() + n * layer.in;
      double* pd = prev.data() + n * layer.in;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* wrow = layer.w.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) pd[i] += dv * wrow[i];
      }
      for (std::size_t i = 0; i < layer.in; ++i)
        if (act[i] <= 0.0) pd[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return gs;
}

/// Heavy-ball SGD update: v <- momentum * v + g; theta <- theta - lr * v.
inline void sgd_step(MlpParams& params, OptimizerState& state, const GradientSet& grads) {
  if (params.layers.size() != grads.grads.size() ||
      params.layers.size() != state.velocity.size())
    throw std::invalid_argument("sgd_step shape mismatch");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& layer = params.layers[k];
    auto& vel = state.velocity[k];
    const auto& g = grads.grads[k];
    if (g.w.size() != layer.w.size() || g.b.size() != layer.b.size())
      throw std::invalid_argument("gradient shape mismatch in layer " + std::to_string(k));
    for (std::size_t i = 0; i < layer.w.size(); ++i) {
      vel.w[i] = state.momentum * vel.w[i] + g.w[i];
      layer.w[i] -= state.learning_rate * vel.w[i];
      if (!std::isfinite(layer.w[i]))
        throw std::runtime_error("non-finite weight update in layer " + std::to_string(k));
    }
    for (std::size_t i = 0; i < layer.b.size(); ++i) {
      vel.b[i] = state.momentum * vel.b[i] + g.b[i];
      layer.b[i] -= state.learning_rate * vel.b[i];
      if (!std::isfinite(layer.b[i]))
        throw std::runtime_error("non-finite bias update in layer " + std::to_string(k));
    }
  }
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;  // entries above tolerance
  double tolerance = 0.0;
};

namespace detail {

// Flat view of every parameter slot so the finite-difference sweep can be
// split across threads; entry order is layer-major, weights before biases.
inline std::size_t param_count(const MlpParams& p) {
  std::size_t n = 0;
  for (const auto& l : p.layers) n += l.w.size() + l.b.size();
  return n;
}

inline double& param_slot(MlpParams& p, std::size_t flat) {
  for (auto& l : p.layers) {
    if (flat < l.w.size()) return l.w[flat];
    flat -= l.w.size();
    if (flat < l.b.size()) return l.b[flat];
    flat -= l.b.size();
  }
  throw std::out_of_range("parameter index out of range");
}

inline double grad_slot(const GradientSet& g, std::size_t flat) {
  for (const auto& l : g.grads) {
    if (flat < l.w.size()) return l.w[flat];
    flat -= l.w.size();
    if (flat < l.b.size()) return l.b[flat];
    flat -= l.b.size();
  }
  throw std::out_of_range("gradient index out of range");
}

}  // namespace detail

/// Central-difference check of an analytic gradient against loss_fn. For each
/// parameter: numeric = (f(+h) - f(-h)) / 2h, relative error
/// |a - n| / max(|a|, |n|, 1e-8). The sweep may run on several threads
/// (loss_fn must be a pure function of the parameters); results do not depend
/// on the thread count.
inline GradCheckReport grad_check(const MlpParams& params,
                                  const std::function<double(const MlpParams&)>& loss_fn,
                                  const GradientSet& analytic, double tolerance, double h = 1e-5,
                                  std::size_t threads = 1) {
  GradCheckReport report;
  report.tolerance = tolerance;
  const std::size_t total = detail::param_count(params);
  report.checked = total;

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, total));
  std::vector<double> max_rel(n_threads, 0.0);
  std::vector<std::size_t> failures(n_threads, 0);

  auto sweep = [&](std::size_t tid, std::size_t begin, std::size_t end) {
    MlpParams probe = params;
    for (std::size_t flat = begin; flat < end; ++flat) {
      double& slot = detail::param_slot(probe, flat);
      const double saved = slot;
      slot = saved + h;
      const double fp = loss_fn(probe);
      slot = saved - h;
      const double fm = loss_fn(probe);
      slot = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic_value = detail::grad_slot(analytic, flat);
      const double denom = std::max({std::fabs(analytic_value), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic_value - numeric) / denom;
      max_rel[tid] = std::max(max_rel[tid], rel);
      if (rel >= tolerance) ++failures[tid];
    }
  };

  if (n_threads == 1) {
    sweep(0, 0, total);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = total * t / n_threads;
      const std::size_t end = total * (t + 1) / n_threads;
      pool.emplace_back(sweep, t, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < n_threads; ++t) {
    report.max_rel_error = std::max(report.max_rel_error, max_rel[t]);
    report.failures += failures[t];
  }
  return report;
}

// --- checkpoint wire format: layer dims plus row-major parameter arrays ---

inline nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers)
    layers.push_back(nlohmann::json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
  return nlohmann::json{{"dims", p.dims()}, {"layers", layers}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  for (const auto& jl : j.at("layers")) {
    LayerParams l;
    l.in = jl.at("in").get<std::size_t>();
    l.out = jl.at("out").get<std::size_t>();
    l.w = jl.at("w").get<std::vector<double>>();
    l.b = jl.at("b").get<std::vector<double>>();
    if (l.w.size() != l.in * l.out || l.b.size() != l.out)
      throw std::invalid_argument("checkpoint layer arrays have wrong length");
    p.layers.push_back(std::move(l));
  }
  if (p.layers.empty()) throw std::invalid_argument("checkpoint has no layers");
  return p;
}

}  // namespace noisykit
