// trustcal command-line front end.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trustcal/server.hpp"
#include "trustcal/trustcal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trustcal;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

AgentParams params_from_json(const json& j) {
  static const std::set<std::string> keys = {"b0", "w0", "alpha_b_correct", "alpha_b_wrong", "alpha_w_correct",
                                             "alpha_w_wrong"};
  if (!j.is_object()) throw UsageError("--params: expected a JSON object");
  for (const auto& [k, _] : j.items())
    if (!keys.contains(k)) throw UsageError("--params: unknown key '" + k + "'");
  for (const auto& k : keys)
    if (!j.contains(k)) throw UsageError("--params: missing key '" + k + "'");
  AgentParams p{j.at("b0").get<double>(),
                j.at("w0").get<double>(),
                j.at("alpha_b_correct").get<double>(),
                j.at("alpha_b_wrong").get<double>(),
                j.at("alpha_w_correct").get<double>(),
                j.at("alpha_w_wrong").get<double>()};
  p.validate();
  return p;
}

AgentParams preset(const std::string& name) {
  if (name == "overconfidence") return RatePresets::overconfidence();
  if (name == "underconfidence") return RatePresets::underconfidence();
  if (name == "reverse-learner") return RatePresets::reverse_learner();
  if (name == "reverse-non-learner") return RatePresets::reverse_non_learner();
  if (name == "standard") return RatePresets::standard();
  throw UsageError("unknown preset '" + name + "'");
}

json params_json(const AgentParams& p) {
  return {{"b0", p.b0},
          {"w0", p.w0},
          {"alpha_b_correct", p.alpha_b_correct},
          {"alpha_b_wrong", p.alpha_b_wrong},
          {"alpha_w_correct", p.alpha_w_correct},
          {"alpha_w_wrong", p.alpha_w_wrong}};
}

// Reads a trial log and checks every participant's session for internal
// consistency.
std::vector<TrialRecord> load_validated(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("input file not found: " + path);
  auto records = read_trials(path);
  if (records.empty()) throw std::runtime_error(path + ": no trials");
  std::string problems;
  for (const auto& recs : split_by_participant(records)) {
    SessionConfig cfg;
    cfg.n_trials = recs.size();
    const auto rep = validate_session(recs, cfg);
    for (const auto& v : rep.violations)
      problems += "  " + recs.front().participant_id + " [" + v.kind + "] " + v.message + "\n";
  }
  if (!problems.empty()) throw std::runtime_error(path + " failed validation:\n" + problems);
  return records;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string condition;
  std::size_t agents = 0;
  std::size_t trials = 50;
  std::uint64_t seed = 0;
  std::string out = "-";
  std::string params_file;
  std::string preset_name;
  std::string policy = "match";
  double threshold = 0.5;
  bool latent = false;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.agents == 0) throw UsageError("--agents must be >= 1");
  if (a.trials == 0) throw UsageError("--trials must be >= 1");
  if (!a.params_file.empty() && !a.preset_name.empty()) throw UsageError("--params and --preset are exclusive");
  const Condition cond = parse_condition(a.condition);
  const ResponsePolicy policy =
      a.policy == "threshold" ? ResponsePolicy::thresholded(a.threshold) : ResponsePolicy::probability_match();

  std::optional<AgentParams> fixed;
  if (!a.params_file.empty()) fixed = params_from_json(read_json_file(a.params_file));
  if (!a.preset_name.empty()) fixed = preset(a.preset_name);
  const AgentPopulation pop;
  const auto cohort = simulate_cohort(
      a.agents, a.trials, cond, a.seed,
      [&](std::size_t, Rng& rng) { return fixed ? *fixed : pop.draw(rng); }, policy);

  std::vector<SimulatedTrial> all;
  all.reserve(a.agents * a.trials);
  for (const auto& ag : cohort) all.insert(all.end(), ag.trials.begin(), ag.trials.end());
  std::ostringstream os;
  if (a.latent) {
    write_simulated_trials(os, all);
  } else {
    write_trials(os, records_of(all));
  }
  write_text(a.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string input;
  std::string method = "mcmc";
  std::string out_dir = "fit";
  std::size_t chains = 4;
  std::size_t samples = 2000;
  std::size_t warmup = 1000;
  std::size_t thin = 8;
  std::size_t restarts = 20;
  std::uint64_t seed = 0;
};

int cmd_fit(const FitArgs& a) {
  const auto records = load_validated(a.input);
  const auto participants = group_participants(records);
  fs::create_directories(a.out_dir);

  if (a.method == "map") {
    json out = {{"method", "map"}, {"seed", a.seed}, {"participants", json::array()}};
    const HyperParams hyper = HyperParams::prior_means();
    for (const auto& p : participants) {
      MapOptions opt;
      opt.restarts = a.restarts;
      opt.seed = a.seed ^ stream_id(p.id);
      const FitResult fit = fit_map(p.trials, hyper, p.condition, opt);
      json row = params_json(fit.params);
      row["participant_id"] = p.id;
      row["condition"] = std::string(to_string(p.condition));
      row["log_posterior"] = fit.log_posterior_at_mode;
      row["converged"] = fit.converged;
      row["n_evaluations"] = fit.n_evaluations;
      out["participants"].push_back(row);
    }
    const auto path = (fs::path(a.out_dir) / "map_fit.json").string();
    write_text(path, out.dump(2) + "\n");
    std::cout << path << "\n";
    return 0;
  }

  SamplerConfig cfg;
  cfg.n_chains = a.chains;
  cfg.n_iterations = a.samples;
  cfg.n_warmup = a.warmup;
  cfg.thin = a.thin;
  cfg.seed = a.seed;
  const PosteriorDraws draws = sample_posterior(participants, cfg);
  const PosteriorSummary summary = summarize(draws);

  const auto draws_path = (fs::path(a.out_dir) / "draws.csv").string();
  {
    std::ofstream os(draws_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + draws_path);
    write_draws_csv(os, draws);
  }
  constexpr double kRhatLimit = 1.01, kEssLimit = 400.0;
  json flagged = json::array();
  for (const auto& p : summary.parameters)
    if (!(p.rhat < kRhatLimit && p.ess > kEssLimit)) flagged.push_back(p.name);
  json doc = {{"method", "mcmc"},
              {"sampler",
               {{"chains", cfg.n_chains},
                {"iterations", cfg.n_iterations},
                {"warmup", cfg.n_warmup},
                {"thin", cfg.thin},
                {"seed", cfg.seed}}},
              {"diagnostics",
               {{"max_rhat", summary.max_rhat},
                {"min_ess", summary.min_ess},
                {"rhat_limit", kRhatLimit},
                {"ess_limit", kEssLimit},
                {"converged", summary.converged(kRhatLimit, kEssLimit)},
                {"flagged", flagged}}},
              {"parameters", to_json(summary)}};
  const auto summary_path = (fs::path(a.out_dir) / "summary.json").string();
  write_text(summary_path, doc.dump(2) + "\n");
  if (!summary.converged(kRhatLimit, kEssLimit))
    std::cerr << "warning: " << flagged.size() << " parameters fail the convergence checks (see " << summary_path
              << ")\n";
  std::cout << draws_path << "\n" << summary_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RecoverArgs {
  std::size_t agents = 200;
  std::vector<std::size_t> trials{50, 200, 800};
  std::size_t restarts = 20;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int cmd_recover(const RecoverArgs& a) {
  if (a.agents < 2) throw UsageError("--agents must be >= 2");
  json doc = {{"seed", a.seed},
              {"n_agents", a.agents},
              {"scale", "b0 and w0 as is, learning rates on the logit scale"},
              {"runs", json::array()}};
  std::vector<RecoveryRun> runs;
  for (std::size_t t : a.trials) {
    if (t == 0) throw UsageError("--trials entries must be >= 1");
    MapOptions opt;
    opt.restarts = a.restarts;
    runs.push_back(run_recovery(a.agents, t, a.seed, opt));
    const auto& r = runs.back();
    json run = {{"n_trials", t}, {"n_converged", r.n_converged}, {"correlations", json::object()},
                {"points", json::object()}};
    for (std::size_t k = 0; k < 6; ++k) {
      run["correlations"][kParameterNames[k]] = r.correlation[k];
      run["points"][kParameterNames[k]] = {{"true", r.truth[k]}, {"fitted", r.fitted[k]}};
    }
    doc["runs"].push_back(run);
  }
  json monotone = json::object();
  for (std::size_t k = 0; k < 6; ++k) {
    bool up = true;
    for (std::size_t i = 1; i < runs.size(); ++i) up = up && runs[i].correlation[k] > runs[i - 1].correlation[k];
    monotone[kParameterNames[k]] = up;
  }
  doc["increasing_in_trials"] = monotone;
  write_text(a.out, doc.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string input;
  std::string posterior;
  std::string out_dir = "report";
  std::size_t max_draws = 400;
  std::uint64_t seed = 0;
};

int cmd_report(const ReportArgs& a) {
  const auto records = load_validated(a.input);
  std::optional<PosteriorDraws> draws;
  if (!a.posterior.empty()) {
    std::ifstream is(a.posterior);
    if (!is) throw std::runtime_error("cannot open " + a.posterior);
    draws = read_draws_csv(is);
  }
  ReportOptions opt;
  opt.max_posterior_draws = a.max_draws;
  const Report rep = build_report(records, draws ? &*draws : nullptr, opt);
  write_report_files(rep, a.out_dir);
  std::cout << (fs::path(a.out_dir) / "report.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string config;
  std::string static_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_serve(const ServeArgs& a) {
  SessionConfig cfg;
  if (!a.config.empty()) cfg = session_config_from_json(read_json_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  SessionStore store(cfg);
  httplib::Server server;
  install_routes(server, store);
  if (!a.static_dir.empty() && !server.set_mount_point("/", a.static_dir))
    throw std::runtime_error("cannot serve static files from " + a.static_dir);
  std::cerr << "listening on http://" << a.host << ":" << a.port << "\n";
  if (!server.listen(a.host, a.port)) throw std::runtime_error("cannot listen on port " + std::to_string(a.port));
  return 0;
}

// ---------------------------------------------------------------------------

struct PoolArgs {
  std::string condition;
  std::size_t size = kDefaultPoolSize;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int cmd_pool(const PoolArgs& a) {
  const StimulusPool pool = build_pool(condition_spec(a.condition), a.size, a.seed);
  std::ostringstream os;
  write_pool_csv(os, pool);
  write_text(a.out, os.str());
  return 0;
}

struct BoundsArgs {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
};

int cmd_bounds(const BoundsArgs& a) {
  json doc = json::object();
  for (Condition c : kAllConditions) {
    const ConditionSpec spec = condition_spec(c);
    Rng rng(a.seed, stream_id("observer", index_of(c)));
    const double crit = optimal_criterion(spec);
    doc[std::string(to_string(c))] = {{"ideal_observer_accuracy", ideal_observer_accuracy(spec, a.samples, rng)},
                                      {"optimal_criterion", crit},
                                      {"criterion_accuracy", criterion_accuracy(spec, crit)}};
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trustcal: simulate, fit and serve confidence-calibration experiments"};
  app.require_subcommand(1);
  const std::vector<std::string> conditions = {"standard", "overconfidence", "underconfidence", "reverse"};

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Write trial logs of synthetic participants");
  s->add_option("--condition", sim.condition, "Calibration condition")->required()->check(CLI::IsMember(conditions));
  s->add_option("--agents", sim.agents, "Number of synthetic participants")->required();
  s->add_option("--trials", sim.trials, "Trials per participant")->capture_default_str();
  s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s->add_option("--out", sim.out, "Output CSV ('-' for stdout)")->capture_default_str();
  s->add_option("--params", sim.params_file, "JSON file with fixed agent parameters")->check(CLI::ExistingFile);
  s->add_option("--preset", sim.preset_name, "Named rate preset")
      ->check(CLI::IsMember({"overconfidence", "underconfidence", "reverse-learner", "reverse-non-learner", "standard"}));
  s->add_option("--policy", sim.policy, "Response policy")->check(CLI::IsMember({"match", "threshold"}))->capture_default_str();
  s->add_option("--threshold", sim.threshold, "Threshold for --policy threshold")->capture_default_str();
  s->add_flag("--latent", sim.latent, "Append confidence_raw, v, b, w columns");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit the learning model to a trial log");
  f->add_option("input", fit.input, "Trial CSV")->required();
  f->add_option("--method", fit.method, "map or mcmc")->check(CLI::IsMember({"map", "mcmc"}))->capture_default_str();
  f->add_option("--out-dir", fit.out_dir, "Output directory")->capture_default_str();
  f->add_option("--chains", fit.chains, "MCMC chains")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--samples", fit.samples, "Iterations per chain, warmup included")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--warmup", fit.warmup, "Warmup iterations per chain")->capture_default_str();
  f->add_option("--thin", fit.thin, "Sweeps per stored draw")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--restarts", fit.restarts, "MAP restarts")->check(CLI::PositiveNumber)->capture_default_str();
  f->add_option("--seed", fit.seed, "Random seed")->capture_default_str();

  RecoverArgs rec;
  auto* r = app.add_subcommand("recover", "Simulate from the prior, refit by MAP and correlate");
  r->add_option("--agents", rec.agents, "Agents per run")->capture_default_str();
  r->add_option("--trials", rec.trials, "Trials per agent, one run each")->delimiter(',')->capture_default_str();
  r->add_option("--restarts", rec.restarts, "MAP restarts")->check(CLI::PositiveNumber)->capture_default_str();
  r->add_option("--seed", rec.seed, "Random seed")->capture_default_str();
  r->add_option("--out", rec.out, "Output JSON ('-' for stdout)")->capture_default_str();

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Behavioural metrics and figure tables");
  p->add_option("input", rep.input, "Trial CSV")->required();
  p->add_option("--posterior", rep.posterior, "Draws CSV from fit --method mcmc")->check(CLI::ExistingFile);
  p->add_option("--out-dir", rep.out_dir, "Output directory")->capture_default_str();
  p->add_option("--max-draws", rep.max_draws, "Posterior draws used for bands")->capture_default_str();
  p->add_option("--seed", rep.seed, "Accepted for uniformity; the report is deterministic");

  ServeArgs srv;
  auto* v = app.add_subcommand("serve", "Run the HTTP session API");
  v->add_option("--host", srv.host, "Bind address")->capture_default_str();
  v->add_option("--port", srv.port, "Port")->check(CLI::Range(1, 65535))->capture_default_str();
  v->add_option("--config", srv.config, "SessionConfig JSON")->check(CLI::ExistingFile);
  v->add_option("--static", srv.static_dir, "Directory served at /")->check(CLI::ExistingDirectory);
  v->add_option("--seed", srv.seed, "Overrides the config seed");

  PoolArgs pool;
  auto* o = app.add_subcommand("pool", "Export a stimulus pool");
  o->add_option("--condition", pool.condition, "Calibration condition")->required()->check(CLI::IsMember(conditions));
  o->add_option("--size", pool.size, "Pool size")->check(CLI::PositiveNumber)->capture_default_str();
  o->add_option("--seed", pool.seed, "Random seed")->capture_default_str();
  o->add_option("--out", pool.out, "Output CSV ('-' for stdout)")->capture_default_str();

  BoundsArgs bounds;
  auto* b = app.add_subcommand("bounds", "Ideal-observer accuracy and optimal criteria");
  b->add_option("--samples", bounds.samples, "Monte Carlo trials")->capture_default_str();
  b->add_option("--seed", bounds.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*f) return cmd_fit(fit);
    if (*r) return cmd_recover(rec);
    if (*p) return cmd_report(rep);
    if (*v) return cmd_serve(srv);
    if (*o) return cmd_pool(pool);
    if (*b) return cmd_bounds(bounds);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
