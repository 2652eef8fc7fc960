#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli/commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
  json doc() const { return json::parse(out); }
  json error() const { return json::parse(err); }
};

Run cdml_run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = cdml::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("cdml_cli_test_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// A 16-cluster synthetic panel written to disk.
std::string simulated(const TempDir& dir, const std::string& name = "panel.csv",
                      std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {"simulate", "--C", "16", "--n-min", "10", "--n-max", "14",
                                   "--seed", "5", "--emit-data", dir / name, "--out", dir / (name + ".json")};
  args.insert(args.end(), extra.begin(), extra.end());
  REQUIRE(cdml_run(args).code == 0);
  return dir / name;
}

const std::vector<std::string> kFast = {"--learner", "linear", "--folds", "4", "--grid", "101", "--reps", "300",
                                        "--mode", "synthetic"};

std::vector<std::string> with_fast(std::vector<std::string> args) {
  args.insert(args.end(), kFast.begin(), kFast.end());
  return args;
}

}  // namespace

TEST_CASE("simulate writes the truth and is reproducible") {
  TempDir dir;
  const Run r = cdml_run({"simulate", "--m", "0.05", "--C", "40", "--seed", "9", "--emit-data", dir / "a.csv"});
  REQUIRE(r.code == 0);
  const json truth = r.doc();
  CHECK(truth["true_f"] == json::array({0.05, -0.1}));
  CHECK(truth["true_mistakes"].get<double>() == doctest::Approx(0.05));
  REQUIRE(cdml_run({"simulate", "--m", "0.05", "--C", "40", "--seed", "9", "--emit-data", dir / "b.csv"}).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(!slurp(dir / "a.csv").empty());
}

TEST_CASE("simulate rejects an out-of-range treated probability") {
  const Run r = cdml_run({"simulate", "--treated-prob", "1.0"});
  CHECK(r.code == 2);
  CHECK(r.error()["error"] == "InvalidArgument");
  CHECK(r.error()["exit_code"] == 2);
}

TEST_CASE("fit report for the cubic spec") {
  TempDir dir;
  const std::string data = simulated(dir);
  const Run r = cdml_run(with_fast({"fit", "--data", data, "--spec", "cubic", "--csv-curve", dir / "curve.csv"}));
  REQUIRE(r.code == 0);
  const json doc = r.doc();
  REQUIRE(doc["coefficients"].size() == 4);
  for (const auto& row : doc["coefficients"]) {
    for (const char* key : {"term", "estimate", "se", "t", "p_value", "ci_low", "ci_high"}) CHECK(row.contains(key));
    CHECK(row["t"].get<double>() == doctest::Approx(row["estimate"].get<double>() / row["se"].get<double>()));
  }
  for (const char* test : {"zero", "homogeneous", "linearity"}) CHECK(doc["tests"][test]["applicable"] == true);
  CHECK(doc["tests"]["linearity"]["dof"] == 2);
  CHECK(doc["mistakes"]["point"].get<double>() >= 0.0);
  CHECK(doc["curve"]["grid"].size() == 101);
  CHECK(doc["provenance"]["dataset_digest_fnv1a64"].get<std::string>().size() == 16);
  CHECK_FALSE(doc["provenance"].contains("timestamp"));

  const std::string curve = slurp(dir / "curve.csv");
  CHECK(curve.starts_with("x,f_hat,se,pw_lo,pw_hi,uni_lo,uni_hi\n"));
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 102);
}

TEST_CASE("fit report for the constant spec") {
  TempDir dir;
  const std::string data = simulated(dir);
  const Run r = cdml_run(with_fast({"fit", "--data", data, "--spec", "constant"}));
  REQUIRE(r.code == 0);
  const json doc = r.doc();
  CHECK(doc["coefficients"].size() == 1);
  CHECK(doc["tests"]["zero"]["applicable"] == true);
  CHECK(doc["tests"]["homogeneous"]["applicable"] == false);
  CHECK(doc["tests"]["linearity"]["applicable"] == false);
}

TEST_CASE("all-treated data exits with an input error") {
  TempDir dir;
  {
    std::ofstream f(dir / "treated.csv");
    f << "contest_id,precinct_id,y,x,t\nA,a,0.5,0.4,1\nA,b,0.4,0.6,1\nB,c,0.5,0.3,1\nB,d,0.6,0.2,1\n";
  }
  const Run r = cdml_run(with_fast({"fit", "--data", dir / "treated.csv", "--folds", "2"}));
  CHECK(r.code == 2);
  CHECK(r.error()["error"] == "DegenerateTreatment");
}

TEST_CASE("numerical failures exit with code 3") {
  TempDir dir;
  {
    std::ofstream f(dir / "flat.csv");
    f << "contest_id,precinct_id,y,x,t\n";
    for (int c = 0; c < 6; ++c) {
      for (int p = 0; p < 3; ++p) f << "c" << c << ",p" << p << ',' << 0.1 * (c + p) << ",0.5," << c % 2 << '\n';
    }
  }
  auto args = with_fast({"fit", "--data", dir / "flat.csv", "--spec", "linear"});
  args.insert(args.end(), {"--learner", "mean", "--folds", "3"});
  const Run r = cdml_run(args);
  CHECK(r.code == 3);
  CHECK(r.error()["error"] == "RankDeficient");
}

TEST_CASE("missing files and bad flags are input errors") {
  CHECK(cdml_run({"fit", "--data", "/nonexistent/panel.csv"}).code == 2);
  CHECK(cdml_run({"fit"}).code == 2);
  CHECK(cdml_run({"frobnicate"}).code == 2);
  CHECK(cdml_run({"fit", "--data", "x.csv", "--folds", "many"}).code == 2);
  CHECK(cdml_run({"--help"}).code == 0);
}

TEST_CASE("sup tests are deterministic for a fixed seed") {
  TempDir dir;
  const std::string data = simulated(dir);
  auto args = with_fast({"test", "--method", "sup", "--data", data, "--seed", "4"});
  args.push_back("--reps");
  args.push_back("2000");
  const Run a = cdml_run(args);
  const Run b = cdml_run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.doc()["tests"]["zero_sup"]["replications"] == 2000);
  CHECK(a.doc()["warnings"].empty());
}

TEST_CASE("a single bootstrap replication gives coarse p-values and a warning") {
  TempDir dir;
  const std::string data = simulated(dir);
  auto args = with_fast({"test", "--method", "sup", "--data", data});
  args.push_back("--reps");
  args.push_back("1");
  const Run r = cdml_run(args);
  REQUIRE(r.code == 0);
  const json doc = r.doc();
  for (const char* t : {"zero_sup", "homogeneous_sup"}) {
    const double p = doc["tests"][t]["p_value"];
    CHECK((p == 0.0 || p == 1.0));
  }
  CHECK_FALSE(doc["warnings"].empty());
}

TEST_CASE("wald test battery") {
  TempDir dir;
  const std::string data = simulated(dir);
  const Run r = cdml_run(with_fast({"test", "--method", "wald", "--data", data}));
  REQUIRE(r.code == 0);
  CHECK(r.doc()["tests"]["zero"]["method"] == "wald");
  CHECK(cdml_run(with_fast({"test", "--method", "bayes", "--data", data})).code == 2);
}

TEST_CASE("thread count does not change fit output") {
  TempDir dir;
  const std::string data = simulated(dir);
  auto args = with_fast({"fit", "--data", data, "--learner", "boosted", "--tree-rounds", "30"});
  auto one = args;
  one.insert(one.end(), {"--threads", "1"});
  auto four = args;
  four.insert(four.end(), {"--threads", "4"});
  CHECK(cdml_run(one).out == cdml_run(four).out);
}

TEST_CASE("two-party files are analysed per party") {
  TempDir dir;
  const std::string data = simulated(dir, "two.csv", {"--two-party"});
  const Run d = cdml_run(with_fast({"fit", "--data", data, "--party", "d", "--spec", "linear"}));
  const Run r = cdml_run(with_fast({"fit", "--data", data, "--party", "r", "--spec", "linear"}));
  REQUIRE(d.code == 0);
  REQUIRE(r.code == 0);
  const auto fd = d.doc()["curve"]["f_hat"];
  const auto fr = r.doc()["curve"]["f_hat"];
  REQUIRE(fd.size() == fr.size());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    CHECK(std::abs(fr[i].get<double>() + fd[fd.size() - 1 - i].get<double>()) < 1e-9);
  }
}

TEST_CASE("config files supply defaults that flags override") {
  TempDir dir;
  const std::string data = simulated(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# analysis settings\nspec = linear\nlearner = linear\nfolds = 4\ngrid = 51\nreps = 100\n"
        << "mode = synthetic\ndf_correction = true\n";
  }
  const Run r = cdml_run({"fit", "--data", data, "--config", dir / "run.cfg", "--spec", "constant"});
  REQUIRE(r.code == 0);
  const json prov = r.doc()["provenance"];
  CHECK(prov["spec"] == "constant");
  CHECK(prov["folds"] == 4);
  CHECK(prov["grid_points"] == 51);
  CHECK(prov["df_correction"] == true);

  const auto merged = cdml::cli::expand_config({"fit", "--config", dir / "run.cfg", "--reps", "7"});
  CHECK(std::find(merged.begin(), merged.end(), "100") == merged.end());
  CHECK(merged.front() == "fit");
}

TEST_CASE("monte carlo command") {
  TempDir dir;
  const std::vector<std::string> base = {"mc", "--C", "12", "--n-min", "6", "--n-max", "8", "--learner", "linear",
                                         "--folds", "4", "--grid", "51", "--reps", "200", "--seed", "3"};
  auto zero = base;
  zero.insert(zero.end(), {"--mc-reps", "0"});
  CHECK(cdml_run(zero).code == 2);

  auto three = base;
  three.insert(three.end(), {"--mc-reps", "3"});
  auto one_thread = three;
  one_thread.insert(one_thread.end(), {"--threads", "1"});
  auto two_threads = three;
  two_threads.insert(two_threads.end(), {"--threads", "2"});
  const Run a = cdml_run(one_thread);
  REQUIRE(a.code == 0);
  CHECK(a.out == cdml_run(two_threads).out);
  const json doc = a.doc();
  CHECK(doc["reps"] == 3);
  CHECK(doc["repetitions"].size() == 3);
  CHECK(doc["coefficients"].size() == 4);
}

TEST_CASE("a single repetition matches fit on the same data") {
  TempDir dir;
  auto mc = std::vector<std::string>{"mc", "--C", "12", "--n-min", "6", "--n-max", "8", "--learner", "linear",
                                     "--folds", "4", "--grid", "51", "--reps", "200", "--seed", "3",
                                     "--mc-reps", "1", "--emit-data", dir / "rep0.csv"};
  const Run m = cdml_run(mc);
  REQUIRE(m.code == 0);
  const json rep = m.doc()["repetitions"][0];
  const Run f = cdml_run({"fit", "--data", dir / "rep0.csv", "--mode", "synthetic", "--learner", "linear", "--folds",
                          "4", "--grid", "51", "--reps", "200", "--seed",
                          std::to_string(rep["fold_seed"].get<std::uint64_t>())});
  REQUIRE(f.code == 0);
  const json fit = f.doc();
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(fit["coefficients"][i]["estimate"].get<double>() == rep["theta"][i].get<double>());
  }
  CHECK(fit["mistakes"]["point"].get<double>() == rep["mistakes"].get<double>());
  CHECK(fit["tests"]["zero"]["p_value"].get<double>() == rep["wald_zero_p"].get<double>());
}
