#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "noisykit/config.hpp"
#include "noisykit/dataset.hpp"
#include "noisykit/estimator.hpp"
#include "noisykit/losses.hpp"
#include "noisykit/nn.hpp"
#include "noisykit/train_loop.hpp"
#include "noisykit/transition.hpp"

namespace noisykit {

struct TrainOutcome {
  MlpParams params;
  double best_validation_loss = 0.0;
  std::vector<double> validation_history;  // entry 0 is the untrained model
  std::vector<double> train_history;       // mean training loss per epoch
};

struct RevisionOutcome {
  MlpParams params;
  RevisionDelta delta;
  double best_validation_loss = 0.0;
  std::vector<double> validation_history;  // stage 2 only; entry 0 is its start
};

struct TrialResult {
  bool ok = false;
  std::string error;
  double test_accuracy = 0.0;
  double best_validation_loss = 0.0;
  std::optional<Mat> estimated_t;
  std::optional<Mat> learned_dt;
  std::uint64_t seed_used = 0;
};

struct DatasetFingerprint {
  std::size_t n = 0;
  std::size_t dim = 0;
  int num_classes = 0;
  std::uint64_t content_hash = 0;

  static DatasetFingerprint of(const LabeledDataset& ds) {
    return DatasetFingerprint{ds.size(), ds.dim, ds.num_classes, ds.content_hash()};
  }
};

struct ExperimentReport {
  TrainConfig config;
  DatasetFingerprint pool;
  DatasetFingerprint test;
  std::vector<TrialResult> trials;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over successful trials
  int failed_trials = 0;
};

namespace detail {

inline void check_compatible(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.dim != b.dim || a.num_classes != b.num_classes)
    throw std::invalid_argument("datasets disagree on dimension or class count");
}

template <typename LossFn>
TrainOutcome train_loop_with_selection(const LabeledDataset& train, const LabeledDataset& val,
                                       const TrainConfig& cfg, LossFn&& loss_fn,
                                       const MlpParams* warm_start) {
  train.validate();
  val.validate();
  check_compatible(train, val);
  std::vector<std::size_t> dims{train.dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(static_cast<std::size_t>(train.num_classes));

  MlpParams params =
      warm_start ? *warm_start : MlpParams::init(dims, derive_seed(cfg.seed, kStreamInit));
  if (warm_start && params.dims() != dims)
    throw std::invalid_argument("warm-start parameters do not match configured dims");
  OptimizerState opt = OptimizerState::make(params, cfg.lr, cfg.momentum);
  Rng shuffle_rng(derive_seed(cfg.seed, kStreamShuffle));

  TrainOutcome out;
  out.params = params;
  out.best_validation_loss = evaluate_loss(params, val, loss_fn);
  out.validation_history.push_back(out.best_validation_loss);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double train_loss =
        run_epoch(params, opt, train, static_cast<std::size_t>(cfg.batch_size), shuffle_rng,
                  loss_fn, [](const LossOutput&) {});
    out.train_history.push_back(train_loss);
    const double val_loss = evaluate_loss(params, val, loss_fn);
    out.validation_history.push_back(val_loss);
    if (val_loss < out.best_validation_loss) {
      out.best_validation_loss = val_loss;
      out.params = params;
    }
  }
  return out;
}

}  // namespace detail

/// Trains one model with the configured method's loss, evaluating that same
/// loss on the validation set after initialization and after every epoch, and
/// returns the snapshot with the lowest validation loss. `method == revision`
/// is driven by train_revision instead.
inline TrainOutcome train_once(const LabeledDataset& train, const LabeledDataset& val,
                               const TrainConfig& cfg, const TransitionMatrix* t,
                               const MlpParams* warm_start = nullptr) {
  cfg.validate();
  const auto c = static_cast<std::size_t>(train.num_classes);
  switch (cfg.method) {
    case Method::baseline:
      return detail::train_loop_with_selection(
          train, val, cfg,
          [c](std::span<const double> logits, std::size_t b, std::span<const int> labels) {
            return cross_entropy(logits, b, c, labels);
          },
          warm_start);
    case Method::forward: {
      if (!t) throw std::invalid_argument("forward method needs a transition matrix");
      const TransitionMatrix& tm = *t;
      return detail::train_loop_with_selection(
          train, val, cfg,
          [c, &tm](std::span<const double> logits, std::size_t b, std::span<const int> labels) {
            return forward_corrected_loss(logits, b, c, labels, tm);
          },
          warm_start);
    }
    case Method::reweight: {
      if (!t) throw std::invalid_argument("reweight method needs a transition matrix");
      const TransitionMatrix& tm = *t;
      return detail::train_loop_with_selection(
          train, val, cfg,
          [c, &tm](std::span<const double> logits, std::size_t b, std::span<const int> labels) {
            return reweighted_loss(logits, b, c, labels, tm);
          },
          warm_start);
    }
    case Method::revision:
      throw std::invalid_argument("use train_revision for the revision method");
  }
  throw std::invalid_argument("unknown method");
}

/// Two-stage T-Revision. Stage 1 trains with the reweighted loss under the
/// fixed initial matrix (warm-started from the estimation probe when the
/// matrix was estimated). Stage 2 adds the slack dT, initialized to zero, and
/// continues with the revision loss for cfg.revision_epochs, updating the
/// network by SGD with momentum and dT by plain SGD at the same learning
/// rate. Selection picks the (network, dT) snapshot with the lowest
/// validation revision loss; the stage-2 start is itself a candidate, so the
/// result never validates worse than the fixed-T stage-1 model.
inline RevisionOutcome train_revision(const LabeledDataset& train, const LabeledDataset& val,
                                      const TrainConfig& cfg, const TransitionMatrix& t_init,
                                      const MlpParams* warm_start = nullptr) {
  cfg.validate();
  TrainConfig stage1 = cfg;
  stage1.method = Method::reweight;
  TrainOutcome s1 = train_once(train, val, stage1, &t_init, warm_start);

  const auto c = static_cast<std::size_t>(train.num_classes);
  MlpParams params = s1.params;
  OptimizerState opt = OptimizerState::make(params, cfg.lr, cfg.momentum);
  Rng shuffle_rng(derive_seed(cfg.seed, detail::kStreamRevision));
  RevisionDelta dt = RevisionDelta::zeros(c);

  auto loss_fn = [c, &t_init, &dt](std::span<const double> logits, std::size_t b,
                                   std::span<const int> labels) {
    return revision_loss(logits, b, c, labels, t_init, dt);
  };

  RevisionOutcome out;
  out.params = params;
  out.delta = dt;
  out.best_validation_loss = detail::evaluate_loss(params, val, loss_fn);
  out.validation_history.push_back(out.best_validation_loss);

  for (int epoch = 0; epoch < cfg.revision_epochs; ++epoch) {
    detail::run_epoch(params, opt, train, static_cast<std::size_t>(cfg.batch_size), shuffle_rng,
                      loss_fn, [&](const LossOutput& loss) {
                        for (std::size_t i = 0; i < dt.entries.data.size(); ++i)
                          dt.entries.data[i] -= cfg.lr * loss.ddelta->data[i];
                      });
    const double val_loss = detail::evaluate_loss(params, val, loss_fn);
    out.validation_history.push_back(val_loss);
    if (val_loss < out.best_validation_loss) {
      out.best_validation_loss = val_loss;
      out.params = params;
      out.delta = dt;
    }
  }
  return out;
}

/// Fraction of rows whose argmax logit matches the label; logit ties break
/// toward the lower class index.
inline double evaluate_top1(const MlpParams& model, const LabeledDataset& test) {
  test.validate();
  if (model.input_dim() != test.dim || model.output_dim() != static_cast<std::size_t>(test.num_classes))
    throw std::invalid_argument("model shape does not match test dataset");
  const std::size_t n = test.size();
  const auto c = static_cast<std::size_t>(test.num_classes);
  auto cache = forward_batch(model, test.features, n);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto logits = cache.logits().subspan(i * c, c);
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (logits[k] > logits[best]) best = k;
    if (static_cast<int>(best) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace detail {

inline TrialResult run_single_trial(const LabeledDataset& noisy_pool, const LabeledDataset& test,
                                    const TrainConfig& cfg, const TransitionMatrix* fixed_t,
                                    std::uint64_t trial_seed) {
  TrialResult result;
  result.seed_used = trial_seed;
  try {
    TrainConfig trial_cfg = cfg;
    trial_cfg.seed = trial_seed;
    SplitPair sp = split(noisy_pool, cfg.split_fraction, trial_seed);

    std::optional<TransitionMatrix> estimated;
    std::optional<MlpParams> probe;
    const TransitionMatrix* t = fixed_t;
    if (cfg.method != Method::baseline && cfg.t_source.kind == TSource::Kind::estimate) {
      TrainConfig probe_cfg = trial_cfg;
      probe_cfg.seed = derive_seed(trial_seed, kStreamProbe);
      probe = fit_noisy_posterior(noisy_pool, probe_cfg);
      AnchorSet anchors = pick_anchors(*probe, noisy_pool, cfg.t_source.top_k);
      EstimateReport est = estimate_T(anchors);
      result.estimated_t = est.t_hat;
      estimated = TransitionMatrix::make(est.t_hat);  // throws when near-singular
      t = &*estimated;
    }

    if (cfg.method == Method::revision) {
      if (!t) throw std::invalid_argument("revision method needs a transition matrix");
      const MlpParams* warm = probe ? &*probe : nullptr;
      RevisionOutcome rev = train_revision(sp.train, sp.validation, trial_cfg, *t, warm);
      result.best_validation_loss = rev.best_validation_loss;
      result.learned_dt = rev.delta.entries;
      result.test_accuracy = evaluate_top1(rev.params, test);
    } else {
      TrainOutcome outcome = train_once(sp.train, sp.validation, trial_cfg, t);
      result.best_validation_loss = outcome.best_validation_loss;
      result.test_accuracy = evaluate_top1(outcome.params, test);
    }
    result.ok = true;
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = e.what();
  }
  return result;
}

}  // namespace detail

/// Runs cfg.trials independent trials. Trial k derives seed cfg.seed + k,
/// re-splits the noisy pool, resolves the transition matrix per t_source
/// (re-estimating per trial when requested), trains, and evaluates top-1
/// accuracy on the clean test set. Failed trials are recorded and excluded
/// from the aggregates. Trials run concurrently up to max_parallel (<= 1
/// means sequential); results are identical either way.
inline ExperimentReport run_trials(const LabeledDataset& noisy_pool, const LabeledDataset& test,
                                   const TrainConfig& cfg, std::size_t max_parallel = 1) {
  cfg.validate();
  noisy_pool.validate();
  test.validate();
  detail::check_compatible(noisy_pool, test);

  std::optional<TransitionMatrix> fixed;
  if (cfg.method != Method::baseline) {
    switch (cfg.t_source.kind) {
      case TSource::Kind::known:
        if (!cfg.t_source.name) throw std::invalid_argument("t_source: missing known-matrix name");
        fixed = TransitionMatrix::known(*cfg.t_source.name);
        break;
      case TSource::Kind::provided:
        if (!cfg.t_source.matrix) throw std::invalid_argument("t_source: missing provided matrix");
        fixed = TransitionMatrix::make(*cfg.t_source.matrix);
        break;
      case TSource::Kind::estimate:
        break;  // resolved per trial
    }
    if (fixed && fixed->size() != static_cast<std::size_t>(noisy_pool.num_classes))
      throw std::invalid_argument("transition matrix size does not match dataset classes");
  }

  ExperimentReport report;
  report.config = cfg;
  report.pool = DatasetFingerprint::of(noisy_pool);
  report.test = DatasetFingerprint::of(test);
  report.trials.resize(static_cast<std::size_t>(cfg.trials));

  const TransitionMatrix* fixed_ptr = fixed ? &*fixed : nullptr;
  const auto n_trials = static_cast<std::size_t>(cfg.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n_trials) break;
      report.trials[k] = detail::run_single_trial(noisy_pool, test, cfg, fixed_ptr,
                                                  cfg.seed + static_cast<std::uint64_t>(k));
    }
  };
  if (max_parallel <= 1 || n_trials == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    const std::size_t n_threads = std::min(max_parallel, n_trials);
    threads.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  double sum = 0.0;
  std::size_t ok = 0;
  for (const auto& tr : report.trials) {
    if (tr.ok) {
      sum += tr.test_accuracy;
      ++ok;
    } else {
      ++report.failed_trials;
    }
  }
  if (ok > 0) {
    report.mean_accuracy = sum / static_cast<double>(ok);
    double ss = 0.0;
    for (const auto& tr : report.trials)
      if (tr.ok) {
        const double d = tr.test_accuracy - report.mean_accuracy;
        ss += d * d;
      }
    report.std_accuracy = std::sqrt(ss / static_cast<double>(ok));
  } else {
    report.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
    report.std_accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

struct ComparisonReport {
  std::vector<ExperimentReport> methods;  // baseline, forward, reweight, revision
};

/// Runs all four methods with shared seeds (hence identical per-trial splits)
/// against the same fixed transition matrix.
inline ComparisonReport compare_methods(const LabeledDataset& noisy_pool,
                                        const LabeledDataset& test, const TransitionMatrix& t,
                                        const TrainConfig& base_cfg, std::size_t max_parallel = 1) {
  ComparisonReport report;
  for (Method m : {Method::baseline, Method::forward, Method::reweight, Method::revision}) {
    TrainConfig cfg = base_cfg;
    cfg.method = m;
    cfg.t_source = TSource::provided(t.entries());
    report.methods.push_back(run_trials(noisy_pool, test, cfg, max_parallel));
  }
  return report;
}

// --- report wire formats ---

inline nlohmann::json to_json(const DatasetFingerprint& fp) {
  return nlohmann::json{
      {"n", fp.n}, {"dim", fp.dim}, {"classes", fp.num_classes}, {"fnv1a64", hex64(fp.content_hash)}};
}

inline nlohmann::json to_json(const TrialResult& tr, std::size_t index) {
  nlohmann::json j{{"trial", index},
                   {"seed", tr.seed_used},
                   {"ok", tr.ok},
                   {"test_accuracy", tr.ok ? nlohmann::json(tr.test_accuracy) : nlohmann::json()},
                   {"best_validation_loss",
                    tr.ok ? nlohmann::json(tr.best_validation_loss) : nlohmann::json()},
                   {"error", tr.ok ? nlohmann::json() : nlohmann::json(tr.error)}};
  j["estimated_t"] = tr.estimated_t ? mat_to_json(*tr.estimated_t) : nlohmann::json();
  j["learned_dt"] = tr.learned_dt ? mat_to_json(*tr.learned_dt) : nlohmann::json();
  return j;
}

inline nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json trials = nlohmann::json::array();
  for (std::size_t i = 0; i < report.trials.size(); ++i)
    trials.push_back(to_json(report.trials[i], i));
  const bool has_mean = std::isfinite(report.mean_accuracy);
  return nlohmann::json{{"aggregate",
                         {{"mean_accuracy", has_mean ? nlohmann::json(report.mean_accuracy)
                                                     : nlohmann::json()},
                          {"std_accuracy", has_mean ? nlohmann::json(report.std_accuracy)
                                                    : nlohmann::json()},
                          {"trials", report.trials.size()},
                          {"failed_trials", report.failed_trials}}},
                        {"config", to_json(report.config)},
                        {"datasets", {{"pool", to_json(report.pool)}, {"test", to_json(report.test)}}},
                        {"trials", trials}};
}

inline std::string trials_csv(const ExperimentReport& report) {
  std::string csv = "trial,method,accuracy\n";
  for (std::size_t i = 0; i < report.trials.size(); ++i) {
    csv += std::to_string(i);
    csv += ',';
    csv += to_string(report.config.method);
    csv += ',';
    csv += report.trials[i].ok ? detail::format_double(report.trials[i].test_accuracy)
                               : std::string("nan");
    csv += '\n';
  }
  return csv;
}

inline nlohmann::json to_json(const ComparisonReport& report) {
  nlohmann::json methods;
  for (const auto& r : report.methods) methods[to_string(r.config.method)] = to_json(r);
  return nlohmann::json{{"methods", methods}};
}

inline std::string comparison_csv(const ComparisonReport& report) {
  std::string csv = "trial,method,accuracy\n";
  for (const auto& r : report.methods)
    for (std::size_t i = 0; i < r.trials.size(); ++i) {
      csv += std::to_string(i);
      csv += ',';
      csv += to_string(r.config.method);
      csv += ',';
      csv += r.trials[i].ok ? detail::format_double(r.trials[i].test_accuracy) : std::string("nan");
      csv += '\n';
    }
  return csv;
}

}  // namespace noisykit
