#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisykit/matrix.hpp"
#include "noisykit/transition.hpp"

namespace noisykit {

enum class Method { baseline, forward, reweight, revision };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::forward: return "forward";
    case Method::reweight: return "reweight";
    case Method::revision: return "revision";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "baseline") return Method::baseline;
  if (s == "forward") return Method::forward;
  if (s == "reweight") return Method::reweight;
  if (s == "revision") return Method::revision;
  throw std::invalid_argument("unknown method \"" + s + "\"");
}

/// Where the transition matrix used for training comes from: one of the named
/// matrices, a caller-provided matrix, or the anchor-point estimator run on
/// the trial's noisy data.
struct TSource {
  enum class Kind { known, provided, estimate };
  Kind kind = Kind::provided;
  std::optional<KnownMatrix> name;  // kind == known
  std::optional<Mat> matrix;        // kind == provided
  int top_k = 1;                    // kind == estimate

  static TSource known(KnownMatrix which) { return TSource{Kind::known, which, std::nullopt, 1}; }
  static TSource provided(Mat m) { return TSource{Kind::provided, std::nullopt, std::move(m), 1}; }
  static TSource estimate(int top_k) { return TSource{Kind::estimate, std::nullopt, std::nullopt, top_k}; }
};

struct TrainConfig {
  Method method = Method::baseline;
  int epochs = 10;
  double lr = 0.001;
  double momentum = 0.9;
  int batch_size = 64;
  std::vector<std::size_t> hidden_dims{128, 64};
  std::uint64_t seed = 0;
  TSource t_source;
  int trials = 10;
  double split_fraction = 0.8;
  int revision_epochs = 10;  // stage 2 of T-Revision only

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (revision_epochs < 0) throw std::invalid_argument("revision_epochs must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw std::invalid_argument("split_fraction must be in (0, 1)");
    if (t_source.kind == TSource::Kind::estimate && t_source.top_k < 1)
      throw std::invalid_argument("top_k must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json ts;
  switch (cfg.t_source.kind) {
    case TSource::Kind::known:
      ts = {{"kind", "known"},
            {"name", cfg.t_source.name == KnownMatrix::fashion05 ? "fashion05" : "fashion06"}};
      break;
    case TSource::Kind::provided:
      ts = {{"kind", "provided"}};
      if (cfg.t_source.matrix) ts["matrix"] = mat_to_json(*cfg.t_source.matrix);
      break;
    case TSource::Kind::estimate:
      ts = {{"kind", "estimate"}, {"top_k", cfg.t_source.top_k}};
      break;
  }
  return nlohmann::json{{"method", to_string(cfg.method)},
                        {"epochs", cfg.epochs},
                        {"lr", cfg.lr},
                        {"momentum", cfg.momentum},
                        {"batch_size", cfg.batch_size},
                        {"hidden_dims", cfg.hidden_dims},
                        {"seed", cfg.seed},
                        {"trials", cfg.trials},
                        {"split_fraction", cfg.split_fraction},
                        {"revision_epochs", cfg.revision_epochs},
                        {"t_source", ts}};
}

}  // namespace noisykit
