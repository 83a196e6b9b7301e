#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisykit/dataset.hpp"
#include "noisykit/hash.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testutil::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string cli_path() {
  const char* bin = std::getenv("NOISYKIT_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

RunResult run_raw(const TempDir& tmp, const std::string& full_cmd) {
  const auto out_file = tmp.file("_stdout.txt");
  const auto err_file = tmp.file("_stderr.txt");
  const std::string cmd = full_cmd + " > " + out_file.string() + " 2> " + err_file.string();
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = testutil::read_file(out_file);
  r.err = testutil::read_file(err_file);
  return r;
}

RunResult run(const TempDir& tmp, const std::string& args) {
  return run_raw(tmp, cli_path() + " " + args);
}

std::string q(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("synth contract") {
  TempDir tmp;
  const auto out = tmp.file("data.csv");
  const auto r = run(tmp, "synth --classes 3 --dim 4 --per-class 50 --sep 8 --sigma 1 --seed 7 -o " +
                              q(out));
  REQUIRE(r.exit_code == 0);
  const auto ds = noisykit::load_csv(out);
  CHECK(ds.size() == 150);
  CHECK(ds.dim == 4);
  CHECK(fs::exists(tmp.file("data.csv.manifest.json")));

  SECTION("identical flags give identical file hashes") {
    const auto out2 = tmp.file("data2.csv");
    const auto r2 = run(tmp, "synth --classes 3 --dim 4 --per-class 50 --sep 8 --sigma 1 --seed 7 -o " +
                                 q(out2));
    REQUIRE(r2.exit_code == 0);
    CHECK(noisykit::hash_file(q(out)) == noisykit::hash_file(q(out2)));
  }

  SECTION("a different seed changes the file") {
    const auto out3 = tmp.file("data3.csv");
    run(tmp, "synth --classes 3 --dim 4 --per-class 50 --sep 8 --sigma 1 --seed 8 -o " + q(out3));
    CHECK(noisykit::hash_file(q(out)) != noisykit::hash_file(q(out3)));
  }
}

TEST_CASE("missing required flags exit 2 without partial outputs") {
  TempDir tmp;
  const auto out = tmp.file("data.csv");
  const auto r = run(tmp, "synth --classes 3 --dim 4 --per-class 50 --sep 8 --sigma 1 -o " + q(out));
  CHECK(r.exit_code == 2);
  CHECK_FALSE(fs::exists(out));
  CHECK_FALSE(fs::exists(tmp.file("data.csv.manifest.json")));

  const auto r2 = run(tmp, "train -i nope.csv");
  CHECK(r2.exit_code == 2);
}

TEST_CASE("config file values are defaults that flags override") {
  TempDir tmp;
  testutil::write_file(tmp.file("cfg.json"), R"({"seed": 7, "per_class": 25, "dim": 4})");

  // seed comes from the config, so no --seed flag is needed
  const auto a = tmp.file("a.csv");
  const auto ra = run(tmp, "synth --config " + q(tmp.file("cfg.json")) +
                               " --classes 3 --sep 8 --sigma 1 -o " + q(a));
  REQUIRE(ra.exit_code == 0);
  const auto dsa = noisykit::load_csv(a);
  CHECK(dsa.size() == 75);  // per_class 25 from config

  // the flag wins over the config value
  const auto b = tmp.file("b.csv");
  const auto rb = run(tmp, "synth --config " + q(tmp.file("cfg.json")) +
                               " --classes 3 --sep 8 --sigma 1 --per-class 10 -o " + q(b));
  REQUIRE(rb.exit_code == 0);
  CHECK(noisykit::load_csv(b).size() == 30);

  // flag-equivalent run matches the config-driven run byte for byte
  const auto c = tmp.file("c.csv");
  run(tmp, "synth --classes 3 --dim 4 --per-class 25 --sep 8 --sigma 1 --seed 7 -o " + q(c));
  CHECK(noisykit::hash_file(q(a)) == noisykit::hash_file(q(c)));
}

TEST_CASE("inject") {
  TempDir tmp;
  const auto data = tmp.file("data.csv");
  run(tmp, "synth --classes 3 --dim 4 --per-class 2000 --sep 8 --sigma 1 --seed 3 -o " + q(data));

  SECTION("identity noise keeps the labels byte-identical") {
    const auto noisy = tmp.file("noisy.csv");
    const auto r = run(tmp, "inject -i " + q(data) + " --t-known identity --seed 5 -o " + q(noisy));
    REQUIRE(r.exit_code == 0);
    CHECK(noisykit::hash_file(q(data)) == noisykit::hash_file(q(noisy)));
  }

  SECTION("fashion05 keeps about half of each class") {
    const auto noisy = tmp.file("noisy.csv");
    const auto r = run(tmp, "inject -i " + q(data) + " --t-known fashion05 --seed 5 -o " + q(noisy));
    REQUIRE(r.exit_code == 0);
    const auto before = noisykit::load_csv(data);
    const auto after = noisykit::load_csv(noisy);
    std::vector<double> kept(3, 0.0), total(3, 0.0);
    for (std::size_t i = 0; i < before.size(); ++i) {
      total[before.labels[i]] += 1.0;
      kept[before.labels[i]] += before.labels[i] == after.labels[i] ? 1.0 : 0.0;
    }
    for (int c = 0; c < 3; ++c) CHECK(std::fabs(kept[c] / total[c] - 0.5) < 0.03);
  }

  SECTION("an invalid transition file is a validation error naming the invariant") {
    testutil::write_file(tmp.file("bad_t.json"),
                         R"({"size": 3, "rows": [[0.9,0.2,0.3],[0.3,0.5,0.2],[0.2,0.3,0.5]]})");
    const auto r = run(tmp, "inject -i " + q(data) + " --t-file " + q(tmp.file("bad_t.json")) +
                                " --seed 5 -o " + q(tmp.file("noisy.csv")));
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("sum") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.file("noisy.csv")));
  }

  SECTION("inline matrices work") {
    const auto noisy = tmp.file("noisy_inline.csv");
    const auto r = run(tmp, "inject -i " + q(data) +
                                " --t-inline \"[[0.8,0.1,0.1],[0.1,0.8,0.1],[0.1,0.1,0.8]]\""
                                " --seed 5 -o " +
                                q(noisy));
    CHECK(r.exit_code == 0);
  }
}

TEST_CASE("estimate-t emits the matrix format with metadata") {
  TempDir tmp;
  const auto data = tmp.file("data.csv");
  const auto noisy = tmp.file("noisy.csv");
  run(tmp, "synth --classes 3 --dim 4 --per-class 400 --sep 8 --sigma 1 --seed 11 -o " + q(data));
  run(tmp, "inject -i " + q(data) + " --t-known fashion05 --seed 12 -o " + q(noisy));

  const auto out = tmp.file("t_hat.json");
  const auto r = run(tmp, "estimate-t -i " + q(noisy) + " --top-k 5 --seed 13 --epochs 5 -o " + q(out));
  REQUIRE(r.exit_code == 0);
  const auto j = json::parse(testutil::read_file(out));
  CHECK(j.at("size") == 3);
  CHECK(j.at("top_k") == 5);
  CHECK(j.at("probe_seed") == 13);
  const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
  for (const auto& row : rows) {
    double sum = 0.0;
    for (double v : row) sum += v;
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("rerun is byte-identical") {
    const auto out2 = tmp.file("t_hat2.json");
    run(tmp, "estimate-t -i " + q(noisy) + " --top-k 5 --seed 13 --epochs 5 -o " + q(out2));
    CHECK(noisykit::hash_file(q(out)) == noisykit::hash_file(q(out2)));
  }
}

TEST_CASE("train") {
  TempDir tmp;
  const auto data = tmp.file("data.csv");
  const auto noisy = tmp.file("noisy.csv");
  const auto test = tmp.file("test.csv");
  run(tmp, "synth --classes 3 --dim 4 --per-class 150 --sep 6 --sigma 1 --seed 21 -o " + q(data));
  run(tmp, "inject -i " + q(data) + " --t-known fashion06 --seed 22 -o " + q(noisy));
  run(tmp, "synth --classes 3 --dim 4 --per-class 60 --sep 6 --sigma 1 --seed 23 -o " + q(test));

  SECTION("reweight with a known matrix writes a full report") {
    const auto rep = tmp.file("report.json");
    const auto r = run(tmp, "train -i " + q(noisy) + " --test " + q(test) +
                                " --method reweight --t-known fashion06 --trials 3 --epochs 2 "
                                "--seed 24 -o " +
                                q(rep));
    REQUIRE(r.exit_code == 0);
    const auto j = json::parse(testutil::read_file(rep));
    CHECK(j.at("trials").size() == 3);
    CHECK(j.at("aggregate").at("failed_trials") == 0);
    CHECK(j.at("config").at("method") == "reweight");
    CHECK(fs::exists(tmp.file("report.csv")));
    CHECK(fs::exists(tmp.file("report.json.manifest.json")));

    // csv has one line per trial plus the header
    const auto csv = testutil::read_file(tmp.file("report.csv"));
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 4);
  }

  SECTION("revision with estimated T records matrices per trial") {
    const auto rep = tmp.file("report_rev.json");
    const auto r = run(tmp, "train -i " + q(noisy) + " --test " + q(test) +
                                " --method revision --t-source estimate --top-k 1 --trials 2 "
                                "--epochs 2 --revision-epochs 2 --seed 25 -o " +
                                q(rep));
    REQUIRE(r.exit_code == 0);
    const auto j = json::parse(testutil::read_file(rep));
    for (const auto& trial : j.at("trials")) {
      CHECK_FALSE(trial.at("estimated_t").is_null());
      CHECK_FALSE(trial.at("learned_dt").is_null());
    }
  }

  SECTION("baseline warns when a transition matrix is supplied") {
    const auto rep = tmp.file("report_base.json");
    const auto r = run(tmp, "train -i " + q(noisy) + " --test " + q(test) +
                                " --method baseline --t-known fashion05 --trials 1 --epochs 1 "
                                "--seed 26 -o " +
                                q(rep));
    REQUIRE(r.exit_code == 0);
    CHECK(r.err.find("ignores") != std::string::npos);
  }

  SECTION("reports are byte-identical across reruns") {
    const auto rep1 = tmp.file("r1.json");
    const auto rep2 = tmp.file("r2.json");
    const std::string args = " -i " + q(noisy) + " --test " + q(test) +
                             " --method forward --t-known fashion06 --trials 2 --epochs 2 --seed 27 -o ";
    run(tmp, "train" + args + q(rep1));
    run(tmp, "train" + args + q(rep2));
    CHECK(noisykit::hash_file(q(rep1)) == noisykit::hash_file(q(rep2)));
    CHECK(noisykit::hash_file(q(tmp.file("r1.csv"))) == noisykit::hash_file(q(tmp.file("r2.csv"))));
  }

  SECTION("NOISYKIT_THREADS changes nothing but wall time") {
    const auto rep1 = tmp.file("t1.json");
    const auto rep2 = tmp.file("t2.json");
    const std::string args = " -i " + q(noisy) + " --test " + q(test) +
                             " --method reweight --t-known fashion06 --trials 4 --epochs 2 --seed 28 -o ";
    const auto r1 = run(tmp, "train" + args + q(rep1));
    const auto r2 = run_raw(tmp, "env NOISYKIT_THREADS=2 " + cli_path() + " train" + args + q(rep2));
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    CHECK(noisykit::hash_file(q(rep1)) == noisykit::hash_file(q(rep2)));
  }

  SECTION("a blown-up run exits 1 and marks the trials failed") {
    const auto rep = tmp.file("blow.json");
    const auto r = run(tmp, "train -i " + q(noisy) + " --test " + q(test) +
                                " --method baseline --trials 2 --epochs 2 --seed 29 --lr 1e280 -o " +
                                q(rep));
    CHECK(r.exit_code == 1);
    const auto j = json::parse(testutil::read_file(rep));
    CHECK(j.at("aggregate").at("failed_trials") == 2);
  }

  SECTION("the manifest records inputs, outputs and the RNG algorithm") {
    const auto rep = tmp.file("m.json");
    run(tmp, "train -i " + q(noisy) + " --test " + q(test) +
                 " --method baseline --trials 1 --epochs 1 --seed 30 -o " + q(rep));
    const auto manifest = json::parse(testutil::read_file(tmp.file("m.json.manifest.json")));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("rng_algorithm").get<std::string>().find("xoshiro256++") !=
          std::string::npos);
    CHECK(manifest.at("inputs").size() == 2);
    for (const auto& input : manifest.at("inputs"))
      CHECK(input.at("fnv1a64").get<std::string>().size() == 16);
    CHECK(manifest.at("outputs").size() == 2);
    CHECK(manifest.contains("unix_time_ms"));
  }
}

TEST_CASE("compare") {
  TempDir tmp;

  SECTION("--score-t prints the published sum-average for the published pair") {
    testutil::write_file(tmp.file("t_est.json"),
                         R"({"size": 3, "rows": [[0.545,0.224,0.229],[0.231,0.488,0.280],[0.285,0.213,0.501]]})");
    const auto r = run(tmp, "compare --score-t " + q(tmp.file("t_est.json")) + " --t-known fashion05");
    REQUIRE(r.exit_code == 0);
    const double value = std::stod(r.out);
    CHECK(value == Catch::Approx(0.158).margin(0.001));
  }

  SECTION("four-method comparison writes json, csv and svg") {
    const auto data = tmp.file("data.csv");
    const auto noisy = tmp.file("noisy.csv");
    const auto test = tmp.file("test.csv");
    run(tmp, "synth --classes 3 --dim 4 --per-class 100 --sep 6 --sigma 1 --seed 31 -o " + q(data));
    run(tmp, "inject -i " + q(data) + " --t-known fashion06 --seed 32 -o " + q(noisy));
    run(tmp, "synth --classes 3 --dim 4 --per-class 50 --sep 6 --sigma 1 --seed 33 -o " + q(test));

    const auto r = run(tmp, "compare -i " + q(noisy) + " --test " + q(test) +
                                " --t-known fashion06 --trials 2 --epochs 2 --revision-epochs 1 "
                                "--seed 34 -o " +
                                q(tmp.file("cmp")));
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(tmp.file("cmp.json")));
    CHECK(fs::exists(tmp.file("cmp.csv")));
    CHECK(fs::exists(tmp.file("cmp.svg")));
    const auto j = json::parse(testutil::read_file(tmp.file("cmp.json")));
    CHECK(j.at("methods").size() == 4);
    const auto csv = testutil::read_file(tmp.file("cmp.csv"));
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 1 + 4 * 2);
    const auto svg = testutil::read_file(tmp.file("cmp.svg"));
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("baseline") != std::string::npos);
    CHECK(svg.find("revision") != std::string::npos);
  }
}
