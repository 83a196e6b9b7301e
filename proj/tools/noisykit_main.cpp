// noisykit command-line front end: synth, inject, estimate-t, train, compare.
//
// Exit codes: 0 success, 1 runtime or trial failure, 2 usage/validation error.
// All data outputs are deterministic functions of the flags; wall-clock
// metadata lives only in the *.manifest.json files written alongside.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "noisykit/noisykit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigDefaults {
  json values = json::object();

  bool has(const char* key) const { return values.contains(key); }

  static ConfigDefaults from_argv(int argc, char** argv) {
    ConfigDefaults cfg;
    for (int i = 1; i < argc; ++i) {
      std::string arg = argv[i];
      std::string path;
      if (arg == "--config" && i + 1 < argc) {
        path = argv[i + 1];
      } else if (arg.rfind("--config=", 0) == 0) {
        path = arg.substr(9);
      } else {
        continue;
      }
      std::ifstream in(path);
      if (!in) throw CLI::ValidationError("--config", "cannot open config file: " + path);
      try {
        in >> cfg.values;
      } catch (const json::exception& e) {
        throw CLI::ValidationError("--config", "invalid JSON in " + path + ": " + e.what());
      }
      if (!cfg.values.is_object())
        throw CLI::ValidationError("--config", "config file must hold a JSON object");
    }
    return cfg;
  }

  template <typename T>
  void apply(const char* key, T& var) const {
    if (values.contains(key)) var = values.at(key).get<T>();
  }
};

std::size_t thread_cap_from_env() {
  const char* env = std::getenv("NOISYKIT_THREADS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v <= 1 ? 1 : static_cast<std::size_t>(v);
}

// Shared transition-matrix flags. `estimate` is only legal for train/compare.
struct TFlags {
  std::string known;
  std::string file;
  std::string inline_rows;
  std::string source;  // "estimate" to run the anchor-point estimator
  int top_k = 1;

  void add_to(CLI::App* cmd, const ConfigDefaults& cfg, bool allow_estimate) {
    cfg.apply("t_known", known);
    cfg.apply("t_file", file);
    cfg.apply("t_inline", inline_rows);
    auto* k = cmd->add_option("--t-known", known, "named matrix: fashion05, fashion06 or identity");
    auto* f = cmd->add_option("--t-file", file, "JSON file with {\"size\",\"rows\"}");
    auto* i = cmd->add_option("--t-inline", inline_rows, "inline JSON array of rows");
    k->excludes(f)->excludes(i);
    f->excludes(i);
    if (allow_estimate) {
      cfg.apply("t_source", source);
      cfg.apply("top_k", top_k);
      auto* s = cmd->add_option("--t-source", source, "\"estimate\" to estimate T from the noisy data")
                    ->check(CLI::IsMember({"estimate"}));
      cmd->add_option("--top-k", top_k, "anchor candidates per class for estimation");
      s->excludes(k)->excludes(f)->excludes(i);
    }
  }

  bool any() const { return !known.empty() || !file.empty() || !inline_rows.empty() || !source.empty(); }

  // Resolves to a concrete matrix; `classes` is needed only for "identity".
  noisykit::TransitionMatrix resolve_matrix(int classes) const {
    using noisykit::KnownMatrix;
    using noisykit::TransitionMatrix;
    if (!known.empty()) {
      if (known == "fashion05") return TransitionMatrix::known(KnownMatrix::fashion05);
      if (known == "fashion06") return TransitionMatrix::known(KnownMatrix::fashion06);
      if (known == "identity") return TransitionMatrix::identity(static_cast<std::size_t>(classes));
      throw std::invalid_argument("unknown matrix name \"" + known + "\"");
    }
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw std::runtime_error("cannot open transition file: " + file);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw std::invalid_argument("invalid JSON in " + file + ": " + e.what());
      }
      return noisykit::transition_from_json(j);
    }
    if (!inline_rows.empty()) {
      json rows;
      try {
        rows = json::parse(inline_rows);
      } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("invalid --t-inline JSON: ") + e.what());
      }
      return TransitionMatrix::make(
          noisykit::Mat::from_rows(rows.get<std::vector<std::vector<double>>>()));
    }
    throw std::invalid_argument("no transition matrix given (use --t-known/--t-file/--t-inline)");
  }

  noisykit::TSource resolve_source(int classes) const {
    if (source == "estimate") return noisykit::TSource::estimate(top_k);
    return noisykit::TSource::provided(resolve_matrix(classes).entries());
  }

  json echo() const {
    json j = json::object();
    if (!known.empty()) j["t_known"] = known;
    if (!file.empty()) j["t_file"] = file;
    if (!inline_rows.empty()) j["t_inline"] = inline_rows;
    if (!source.empty()) {
      j["t_source"] = source;
      j["top_k"] = top_k;
    }
    return j;
  }
};

// Training hyperparameter flags shared by estimate-t, train and compare.
struct TrainFlags {
  int epochs = 10;
  int revision_epochs = 10;
  double lr = 0.001;
  double momentum = 0.9;
  int batch = 64;
  std::vector<std::size_t> hidden{128, 64};
  std::uint64_t seed = 0;
  int trials = 10;
  double split = 0.8;

  void add_to(CLI::App* cmd, const ConfigDefaults& cfg, bool with_trials) {
    cfg.apply("epochs", epochs);
    cfg.apply("lr", lr);
    cfg.apply("momentum", momentum);
    cfg.apply("batch", batch);
    cfg.apply("hidden", hidden);
    cfg.apply("seed", seed);
    cmd->add_option("--epochs", epochs, "training epochs per trial");
    cmd->add_option("--lr", lr, "SGD learning rate");
    cmd->add_option("--momentum", momentum, "SGD momentum");
    cmd->add_option("--batch", batch, "mini-batch size");
    cmd->add_option("--hidden", hidden, "hidden layer sizes")->delimiter(',');
    cmd->add_option("--seed", seed, "base RNG seed");
    if (with_trials) {
      cfg.apply("revision_epochs", revision_epochs);
      cfg.apply("trials", trials);
      cfg.apply("split", split);
      cmd->add_option("--revision-epochs", revision_epochs, "stage-2 epochs for T-Revision");
      cmd->add_option("--trials", trials, "number of seeded trials");
      cmd->add_option("--split", split, "train fraction of the pool split");
    }
  }

  noisykit::TrainConfig to_config() const {
    noisykit::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.revision_epochs = revision_epochs;
    cfg.lr = lr;
    cfg.momentum = momentum;
    cfg.batch_size = batch;
    cfg.hidden_dims = hidden;
    cfg.seed = seed;
    cfg.trials = trials;
    cfg.split_fraction = split;
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

int run_cli(int argc, char** argv) {
  const ConfigDefaults cfg = ConfigDefaults::from_argv(argc, argv);
  const std::size_t threads = thread_cap_from_env();

  CLI::App app{"noisykit: class-conditional label-noise learning toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with flag defaults (flags override)");

  int exit_code = 0;

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a Gaussian-blob dataset CSV");
  struct {
    int classes = 3;
    std::size_t dim = 2;
    std::size_t per_class = 100;
    double sep = 10.0;
    double sigma = 1.0;
    std::uint64_t seed = 0;
    std::string out;
  } sy;
  cfg.apply("classes", sy.classes);
  cfg.apply("dim", sy.dim);
  cfg.apply("per_class", sy.per_class);
  cfg.apply("sep", sy.sep);
  cfg.apply("sigma", sy.sigma);
  synth->add_option("--classes", sy.classes, "number of classes");
  synth->add_option("--dim", sy.dim, "feature dimension");
  synth->add_option("--per-class", sy.per_class, "samples per class");
  synth->add_option("--sep", sy.sep, "distance scale between class means");
  synth->add_option("--sigma", sy.sigma, "isotropic standard deviation");
  cfg.apply("seed", sy.seed);
  cfg.apply("out", sy.out);
  synth->add_option("--seed", sy.seed, "RNG seed");
  synth->add_option("-o,--out", sy.out, "output CSV path");
  synth->callback([&] {
    if (!synth->count("--seed") && !cfg.has("seed")) throw CLI::RequiredError("--seed");
    if (sy.out.empty()) throw CLI::RequiredError("--out");
    noisykit::SyntheticSpec spec{sy.classes, sy.dim, sy.per_class, sy.sep, sy.sigma, sy.seed};
    auto ds = noisykit::synthesize(spec);
    noisykit::save_csv(ds, sy.out);
    noisykit::RunManifest manifest;
    manifest.command = "synth";
    manifest.resolved_config = {{"classes", sy.classes}, {"dim", sy.dim},
                                {"per_class", sy.per_class}, {"sep", sy.sep},
                                {"sigma", sy.sigma}, {"seed", sy.seed}};
    manifest.outputs = {sy.out};
    manifest.write(sy.out);
    std::cout << "wrote " << ds.size() << " rows to " << sy.out << "\n";
  });

  // --- inject ---
  auto* inject = app.add_subcommand("inject", "apply class-conditional label noise to a CSV");
  struct {
    std::string in, out;
    std::uint64_t seed = 0;
    TFlags t;
  } inj;
  cfg.apply("in", inj.in);
  cfg.apply("seed", inj.seed);
  cfg.apply("out", inj.out);
  inject->add_option("-i,--in", inj.in, "input dataset CSV");
  inject->add_option("--seed", inj.seed, "RNG seed");
  inject->add_option("-o,--out", inj.out, "output CSV path");
  inj.t.add_to(inject, cfg, /*allow_estimate=*/false);
  inject->callback([&] {
    if (inj.in.empty()) throw CLI::RequiredError("--in");
    if (!inject->count("--seed") && !cfg.has("seed")) throw CLI::RequiredError("--seed");
    if (inj.out.empty()) throw CLI::RequiredError("--out");
    auto ds = noisykit::load_csv(inj.in);
    auto t = inj.t.resolve_matrix(ds.num_classes);
    auto noisy = noisykit::inject_noise(ds, t, inj.seed);
    noisykit::save_csv(noisy, inj.out);
    noisykit::RunManifest manifest;
    manifest.command = "inject";
    manifest.resolved_config = {{"seed", inj.seed}, {"t", inj.t.echo()}};
    manifest.add_input(inj.in);
    manifest.outputs = {inj.out};
    manifest.write(inj.out);
    std::cout << "wrote " << noisy.size() << " rows to " << inj.out << "\n";
  });

  // --- estimate-t ---
  auto* est = app.add_subcommand("estimate-t", "estimate the transition matrix from noisy data");
  struct {
    std::string in, out;
    int top_k = 1;
    TrainFlags train;
  } es;
  cfg.apply("top_k", es.top_k);
  cfg.apply("in", es.in);
  cfg.apply("out", es.out);
  est->add_option("-i,--in", es.in, "noisy dataset CSV");
  est->add_option("-o,--out", es.out, "output JSON path");
  est->add_option("--top-k", es.top_k, "anchor candidates per class");
  es.train.add_to(est, cfg, /*with_trials=*/false);
  est->callback([&] {
    if (es.in.empty()) throw CLI::RequiredError("--in");
    if (es.out.empty()) throw CLI::RequiredError("--out");
    auto ds = noisykit::load_csv(es.in);
    auto probe_cfg = es.train.to_config();
    auto probe = noisykit::fit_noisy_posterior(ds, probe_cfg);
    auto anchors = noisykit::pick_anchors(probe, ds, es.top_k);
    auto report = noisykit::estimate_T(anchors);
    json out = noisykit::mat_to_json(report.t_hat);
    out["top_k"] = es.top_k;
    out["probe_seed"] = es.train.seed;
    out["abs_determinant"] = report.abs_determinant;
    out["near_singular"] = report.near_singular;
    write_text(es.out, out.dump(2) + "\n");
    noisykit::RunManifest manifest;
    manifest.command = "estimate-t";
    manifest.resolved_config = {{"top_k", es.top_k}, {"probe_seed", es.train.seed},
                                {"epochs", es.train.epochs}, {"lr", es.train.lr},
                                {"momentum", es.train.momentum}, {"batch", es.train.batch},
                                {"hidden", es.train.hidden}};
    manifest.add_input(es.in);
    manifest.outputs = {es.out};
    manifest.write(es.out);
    std::cout << "wrote estimated transition matrix to " << es.out << "\n";
  });

  // --- train ---
  auto* train = app.add_subcommand("train", "run seeded training trials and write a report");
  struct {
    std::string in, test, out;
    std::string method = "baseline";
    TFlags t;
    TrainFlags train;
  } tr;
  cfg.apply("method", tr.method);
  cfg.apply("in", tr.in);
  cfg.apply("test", tr.test);
  cfg.apply("out", tr.out);
  train->add_option("-i,--in", tr.in, "noisy pool CSV (train+validation)");
  train->add_option("--test", tr.test, "clean test CSV");
  train->add_option("--method", tr.method, "baseline, forward, reweight or revision")
      ->check(CLI::IsMember({"baseline", "forward", "reweight", "revision"}));
  train->add_option("-o,--out", tr.out, "output report JSON path");
  tr.t.add_to(train, cfg, /*allow_estimate=*/true);
  tr.train.add_to(train, cfg, /*with_trials=*/true);
  train->callback([&] {
    if (tr.in.empty()) throw CLI::RequiredError("--in");
    if (tr.test.empty()) throw CLI::RequiredError("--test");
    if (tr.out.empty()) throw CLI::RequiredError("--out");
    auto pool = noisykit::load_csv(tr.in);
    auto test = noisykit::load_csv(tr.test);
    auto config = tr.train.to_config();
    config.method = noisykit::method_from_string(tr.method);
    if (config.method == noisykit::Method::baseline) {
      if (tr.t.any())
        std::cerr << "warning: --method baseline ignores the transition matrix flags\n";
    } else {
      config.t_source = tr.t.resolve_source(pool.num_classes);
    }
    auto report = noisykit::run_trials(pool, test, config, threads);

    const fs::path out_json = tr.out;
    fs::path out_csv = out_json;
    out_csv.replace_extension(".csv");
    write_text(out_json, noisykit::to_json(report).dump(2) + "\n");
    write_text(out_csv, noisykit::trials_csv(report));
    noisykit::RunManifest manifest;
    manifest.command = "train";
    manifest.resolved_config = noisykit::to_json(config);
    manifest.add_input(tr.in);
    manifest.add_input(tr.test);
    manifest.outputs = {out_json.string(), out_csv.string()};
    manifest.write(out_json);
    std::cout << "method " << tr.method << ": mean accuracy " << report.mean_accuracy << " (std "
              << report.std_accuracy << ", " << report.failed_trials << " failed trials)\n";
    if (report.failed_trials > 0) exit_code = 1;
  });

  // --- compare ---
  auto* compare = app.add_subcommand("compare", "compare all four methods, or score a T estimate");
  struct {
    std::string in, test, out;
    std::string score_t;
    TFlags t;
    TrainFlags train;
  } cp;
  cfg.apply("in", cp.in);
  cfg.apply("test", cp.test);
  cfg.apply("out", cp.out);
  compare->add_option("-i,--in", cp.in, "noisy pool CSV");
  compare->add_option("--test", cp.test, "clean test CSV");
  compare->add_option("-o,--out", cp.out, "output base path (writes .json/.csv/.svg)");
  compare->add_option("--score-t", cp.score_t,
                      "JSON matrix to score against the true T; prints the sum-average error");
  cp.t.add_to(compare, cfg, /*allow_estimate=*/false);
  cp.train.add_to(compare, cfg, /*with_trials=*/true);
  compare->callback([&] {
    if (!cp.score_t.empty()) {
      std::ifstream in(cp.score_t);
      if (!in) throw std::runtime_error("cannot open estimate file: " + cp.score_t);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw std::invalid_argument("invalid JSON in " + cp.score_t + ": " + e.what());
      }
      auto est = noisykit::mat_from_json(j);
      auto t_true = cp.t.resolve_matrix(static_cast<int>(est.rows));
      std::cout << noisykit::sum_average_error(t_true, est) << "\n";
      return;
    }
    if (cp.in.empty() || cp.test.empty() || cp.out.empty())
      throw CLI::ValidationError("compare", "-i, --test and -o are required unless --score-t is used");

    auto pool = noisykit::load_csv(cp.in);
    auto test = noisykit::load_csv(cp.test);
    auto t = cp.t.resolve_matrix(pool.num_classes);
    auto config = cp.train.to_config();
    auto report = noisykit::compare_methods(pool, test, t, config, threads);

    fs::path base = cp.out;
    if (base.extension() == ".json") base.replace_extension();
    const fs::path out_json = base.string() + ".json";
    const fs::path out_csv = base.string() + ".csv";
    const fs::path out_svg = base.string() + ".svg";

    std::vector<std::string> labels;
    std::vector<double> means, stds;
    bool any_failed = false;
    for (const auto& r : report.methods) {
      labels.push_back(noisykit::to_string(r.config.method));
      means.push_back(r.mean_accuracy);
      stds.push_back(r.std_accuracy);
      any_failed = any_failed || r.failed_trials > 0;
      std::cout << noisykit::to_string(r.config.method) << ": mean " << r.mean_accuracy << " std "
                << r.std_accuracy << "\n";
    }
    write_text(out_json, noisykit::to_json(report).dump(2) + "\n");
    write_text(out_csv, noisykit::comparison_csv(report));
    write_text(out_svg, noisykit::svg_bar_chart(labels, means, stds, "top-1 accuracy by method"));
    noisykit::RunManifest manifest;
    manifest.command = "compare";
    manifest.resolved_config = noisykit::to_json(config);
    manifest.resolved_config["t"] = cp.t.echo();
    manifest.add_input(cp.in);
    manifest.add_input(cp.test);
    manifest.outputs = {out_json.string(), out_csv.string(), out_svg.string()};
    manifest.write(out_json);
    if (any_failed) exit_code = 1;
  });

  for (auto* cmd : app.get_subcommands({}))
    cmd->add_option("--config", config_path, "JSON file with flag defaults (flags override)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
