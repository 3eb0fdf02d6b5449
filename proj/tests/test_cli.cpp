#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "trustcal/records.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "trustcal_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + TRUSTCAL_CLI + "\" " + args + " > \"" +
                          (workdir() / "stdout.txt").string() + "\" 2> \"" + (workdir() / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

}  // namespace

TEST_CASE("simulate writes the requested rows") {
  REQUIRE(run("simulate --condition overconfidence --agents 200 --trials 50 --seed 7 --out " + path("t.csv")) == 0);
  const auto recs = trustcal::read_trials(path("t.csv"));
  CHECK(recs.size() == 10000);
  for (const auto& r : recs) REQUIRE(r.condition == trustcal::Condition::overconfidence);

  REQUIRE(run("simulate --condition overconfidence --agents 200 --trials 50 --seed 7 --out " + path("t2.csv")) == 0);
  CHECK(slurp(path("t.csv")) == slurp(path("t2.csv")));
  REQUIRE(run("simulate --condition overconfidence --agents 200 --trials 50 --seed 8 --out " + path("t3.csv")) == 0);
  CHECK(slurp(path("t.csv")) != slurp(path("t3.csv")));
}

TEST_CASE("simulate usage errors") {
  CHECK(run("simulate --condition standard --agents 0 --out " + path("z.csv")) != 0);
  CHECK(run("simulate --condition nonsense --agents 3") != 0);
  CHECK(run("simulate --agents 3") != 0);
  CHECK(run("frobnicate") != 0);
}

TEST_CASE("simulate with fixed params and latent columns") {
  {
    std::ofstream p(path("params.json"));
    p << R"({"b0":0.6,"w0":0.69,"alpha_b_correct":0.18,"alpha_b_wrong":0.18,"alpha_w_correct":0.14,"alpha_w_wrong":0.5})";
  }
  REQUIRE(run("simulate --condition reverse --agents 2 --trials 5 --latent --params " + path("params.json") +
              " --out " + path("lat.csv")) == 0);
  const std::string text = slurp(path("lat.csv"));
  CHECK(text.substr(0, text.find('\n')) == std::string(trustcal::kTrialCsvHeader) + ",confidence_raw,v,b,w");
  CHECK(trustcal::read_trials(path("lat.csv")).size() == 10);
  {
    std::ofstream p(path("bad.json"));
    p << R"({"b0":0.6})";
  }
  CHECK(run("simulate --condition reverse --agents 2 --params " + path("bad.json")) != 0);
}

TEST_CASE("fit map on a small set") {
  REQUIRE(run("simulate --condition standard --agents 3 --trials 50 --seed 2 --out " + path("small.csv")) == 0);
  REQUIRE(run("fit " + path("small.csv") + " --method map --restarts 4 --out-dir " + path("mapfit")) == 0);
  const auto j = nlohmann::json::parse(slurp(workdir() / "mapfit" / "map_fit.json"));
  REQUIRE(j["participants"].size() == 3);
  for (const auto& p : j["participants"]) {
    for (const char* k : {"b0", "w0", "alpha_b_correct", "alpha_b_wrong", "alpha_w_correct", "alpha_w_wrong"})
      CHECK(std::isfinite(p[k].get<double>()));
    CHECK(p.contains("log_posterior"));
    CHECK(p.contains("converged"));
  }
}

TEST_CASE("fit mcmc writes draws and summary") {
  REQUIRE(run("fit " + path("small.csv") + " --chains 2 --samples 200 --warmup 100 --thin 1 --out-dir " +
              path("mcmc")) == 0);
  const auto j = nlohmann::json::parse(slurp(workdir() / "mcmc" / "summary.json"));
  CHECK(j["method"] == "mcmc");
  CHECK(j["diagnostics"].contains("max_rhat"));
  CHECK(j["diagnostics"]["rhat_limit"] == 1.01);
  CHECK(j["parameters"].contains("b0[agent0001]"));
  CHECK(fs::exists(workdir() / "mcmc" / "draws.csv"));

  REQUIRE(run("report " + path("small.csv") + " --posterior " + (workdir() / "mcmc" / "draws.csv").string() +
              " --max-draws 50 --out-dir " + path("rep")) == 0);
  CHECK(fs::exists(workdir() / "rep" / "fig6_trajectories.csv"));
  const auto rep = nlohmann::json::parse(slurp(workdir() / "rep" / "report.json"));
  CHECK(rep["conditions"]["standard"].contains("trajectories"));
}

TEST_CASE("fit input errors") {
  CHECK(run("fit " + path("missing.csv") + " --method map") != 0);
  CHECK_FALSE(slurp(workdir() / "stderr.txt").empty());
  {
    std::ofstream bad(path("bad.csv"));
    bad << trustcal::kTrialCsvHeader << "\np,standard,1,0.55,1,1,1,,\n";
  }
  CHECK(run("fit " + path("bad.csv") + " --method map") != 0);
  CHECK(run("fit " + path("small.csv") + " --method magic") != 0);
}

TEST_CASE("report is deterministic and omits trajectories without draws") {
  REQUIRE(run("report " + path("t.csv") + " --out-dir " + path("r1")) == 0);
  REQUIRE(run("report " + path("t.csv") + " --out-dir " + path("r2")) == 0);
  CHECK(slurp(workdir() / "r1" / "report.json") == slurp(workdir() / "r2" / "report.json"));
  CHECK(slurp(workdir() / "r1" / "fig3_accuracy.csv") == slurp(workdir() / "r2" / "fig3_accuracy.csv"));
  CHECK_FALSE(fs::exists(workdir() / "r1" / "fig6_trajectories.csv"));
  const auto rep = nlohmann::json::parse(slurp(workdir() / "r1" / "report.json"));
  CHECK_FALSE(rep["conditions"]["overconfidence"].contains("trajectories"));
}

TEST_CASE("pool, bounds and recover") {
  REQUIRE(run("pool --condition underconfidence --size 100 --seed 3 --out " + path("pool.csv")) == 0);
  const std::string pool = slurp(path("pool.csv"));
  CHECK(std::count(pool.begin(), pool.end(), '\n') == 101);

  REQUIRE(run("bounds --samples 20000 --seed 1") == 0);
  const auto b = nlohmann::json::parse(slurp(workdir() / "stdout.txt"));
  CHECK(b["standard"]["ideal_observer_accuracy"].get<double>() > 0.95);
  CHECK(std::abs(b["overconfidence"]["optimal_criterion"].get<double>() - 0.731) < 0.002);

  REQUIRE(run("recover --agents 20 --trials 20,40 --restarts 2 --seed 1 --out " + path("rec.json")) == 0);
  const auto r = nlohmann::json::parse(slurp(path("rec.json")));
  REQUIRE(r["runs"].size() == 2);
  CHECK(r.contains("increasing_in_trials"));
}
