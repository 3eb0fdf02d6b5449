// Acceptance suite: one PASS/FAIL line per primary criterion.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "trustcal/trustcal.hpp"

extern char** environ;

using namespace trustcal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = o.pass;
  if (limit_seconds > 0 && secs >= limit_seconds) {
    pass = false;
    o.detail += "; runtime over limit";
  }
  if (!pass) ++failures;
  std::printf("%s  %-28s %s  [%.1fs%s]\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
              limit_seconds > 0 ? (" < " + std::to_string(static_cast<int>(limit_seconds)) + "s").c_str() : "");
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool near(double x, double target, double tol) { return std::abs(x - target) <= tol; }

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sd_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

std::vector<std::vector<TrialRecord>> cohort_records(const std::vector<SimulatedAgent>& cohort) {
  std::vector<std::vector<TrialRecord>> out;
  for (const auto& a : cohort) out.push_back(records_of(a.trials));
  return out;
}

std::vector<TrialRecord> flatten(const std::vector<std::vector<TrialRecord>>& groups) {
  std::vector<TrialRecord> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

// Mean b and w on trial 50 (the state the agent brings to its last trial).
std::pair<double, double> mean_state_at_50(const std::vector<SimulatedAgent>& cohort) {
  double b = 0.0, w = 0.0;
  for (const auto& a : cohort) {
    b += a.trials[49].b;
    w += a.trials[49].w;
  }
  return {b / static_cast<double>(cohort.size()), w / static_cast<double>(cohort.size())};
}

double learner_fraction(const std::vector<SimulatedAgent>& cohort) {
  std::size_t n = 0;
  for (const auto& a : cohort) n += classify_learner(records_of(a.trials)) == LearnerLabel::learner ? 1U : 0U;
  return static_cast<double>(n) / static_cast<double>(cohort.size());
}

double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TRUSTCAL_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int free_port() {
  const int fd = socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  socklen_t len = sizeof addr;
  bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  close(fd);
  return ntohs(addr.sin_port);
}

// ---------------------------------------------------------------------------

Outcome ideal_observer() {
  Rng rng(20240101, stream_id("observer"));
  const double acc = ideal_observer_accuracy(condition_spec(Condition::standard), 100000, rng);
  return {near(acc, 0.97, 0.015), "accuracy " + fmt("%.4f", acc) + " (0.97 +/- 0.015)"};
}

Outcome optimal_criteria() {
  const double s = optimal_criterion(condition_spec(Condition::standard));
  const double r = optimal_criterion(condition_spec(Condition::reverse));
  const double o = optimal_criterion(condition_spec(Condition::overconfidence));
  const double u = optimal_criterion(condition_spec(Condition::underconfidence));
  const bool ok = near(s, 0.5, 0.002) && near(r, 0.5, 0.002) && near(o, 0.731, 0.002) && near(u, 0.269, 0.002);
  return {ok, "standard " + fmt("%.3f", s) + ", reverse " + fmt("%.3f", r) + ", over " + fmt("%.3f", o) + ", under " +
                  fmt("%.3f", u)};
}

Outcome generative_fidelity() {
  bool ok = true;
  double worst = 0.0;
  double acc_worst = 0.0;
  for (Condition c : kAllConditions) {
    const ConditionSpec spec = condition_spec(c);
    Rng rng(7, stream_id("fidelity", index_of(c)));
    std::vector<double> zc, zw;
    for (int i = 0; i < 100000; ++i) {
      const auto t = sample_trial(spec, rng);
      (t.ai_correct ? zc : zw).push_back(logit(t.confidence_raw));
    }
    const double dev = std::max({std::abs(mean_of(zc) - spec.mu_correct), std::abs(mean_of(zw) - spec.mu_wrong),
                                 std::abs(sd_of(zc) - spec.sigma), std::abs(sd_of(zw) - spec.sigma)});
    const double acc = static_cast<double>(zc.size()) / 100000.0;
    worst = std::max(worst, dev);
    acc_worst = std::max(acc_worst, std::abs(acc - 0.5));
    ok = ok && dev <= 0.02 && std::abs(acc - 0.5) <= 0.01;
  }
  return {ok, "max moment deviation " + fmt("%.4f", worst) + " (<= 0.02), max |accuracy - 0.5| " + fmt("%.4f", acc_worst) +
                  " (<= 0.01)"};
}

Outcome llo_rw_identities() {
  const double v = perceive({0.60, 0.69, 0}, 0.5);
  const AgentParams p1{0.60, 0.69, 0.18, 0.18, 0.18, 0.18};
  const AgentState s1 = update(AgentState::initial(p1), 0.5, true, p1);
  const double b1 = 0.60 + 0.18 * (1.0 - 1.0 / (1.0 + std::exp(-0.60)));
  const AgentParams p2{0.0, 1.0, 0.2, 0.2, 0.2, 0.2};
  const AgentState s2 = update(AgentState::initial(p2), 0.7, false, p2);
  const double w2 = 1.0 - 0.2 * 0.7 * std::log(0.7 / 0.3);
  const bool ok = near(v, 0.6457, 1e-4) && near(s1.b, b1, 1e-9) && near(s1.b, 0.6638, 5e-5) && s1.w == 0.69 &&
                  near(s2.b, -0.14, 1e-9) && near(s2.w, w2, 1e-9) && near(s2.w, 0.8814, 5e-5);
  return {ok, "v " + fmt("%.6f", v) + ", b' " + fmt("%.6f", s1.b) + ", (b', w') " + fmt("%.6f", s2.b) + " " +
                  fmt("%.6f", s2.w)};
}

Outcome preset_simulations() {
  const auto over = simulate_cohort(200, 50, Condition::overconfidence, 101, RatePresets::overconfidence());
  const auto over_blocks = block_accuracy(flatten(cohort_records(over)));
  const double gain = over_blocks[4].accuracy - over_blocks[0].accuracy;
  const auto [ob, ow] = mean_state_at_50(over);

  const auto under = simulate_cohort(200, 50, Condition::underconfidence, 102, RatePresets::underconfidence());
  const double ub = mean_state_at_50(under).first;

  const auto learner = simulate_cohort(200, 50, Condition::reverse, 103, RatePresets::reverse_learner());
  const double lf = learner_fraction(learner);
  const double lw = mean_state_at_50(learner).second;
  const auto non = simulate_cohort(200, 50, Condition::reverse, 104, RatePresets::reverse_non_learner());
  const double nf = learner_fraction(non);

  const bool a = gain >= 0.10 && ob < 0.0 && ow > 1.0;
  const bool b = ub > 1.0;
  const bool c = lf > 0.5 && lw < 0.0 && nf < 0.5;
  return {a && b && c, "(a) gain " + fmt("%.3f", gain) + " b50 " + fmt("%.2f", ob) + " w50 " + fmt("%.2f", ow) +
                           "; (b) b50 " + fmt("%.2f", ub) + "; (c) learners " + fmt("%.2f", lf) + " w50 " +
                           fmt("%.2f", lw) + ", non-learners " + fmt("%.2f", nf)};
}

Outcome ece_learning() {
  struct Arm {
    Condition cond;
    AgentParams params;
    const char* label;
  };
  const Arm arms[] = {{Condition::overconfidence, RatePresets::overconfidence(), "over"},
                      {Condition::underconfidence, RatePresets::underconfidence(), "under"},
                      {Condition::reverse, RatePresets::reverse_learner(), "reverse"}};
  bool ok = true;
  std::string detail;
  for (const auto& arm : arms) {
    int wins = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
      const auto recs = flatten(cohort_records(simulate_cohort(200, 50, arm.cond, 5000 + rep, arm.params)));
      wins += ece(recs, {41, 50}).ece < ece(recs, {1, 10}).ece ? 1 : 0;
    }
    ok = ok && wins >= 90;
    detail += std::string(detail.empty() ? "" : ", ") + arm.label + " " + std::to_string(wins) + "/100";
  }
  return {ok, detail + " (>= 90 each)"};
}

Outcome parameter_recovery() {
  const RecoveryRun r50 = run_recovery(200, 50, 11);
  const RecoveryRun r200 = run_recovery(200, 200, 11);
  const bool ok = r50.correlation[0] >= 0.6 && r50.correlation[1] >= 0.6 && r200.correlation[0] > r50.correlation[0] &&
                  r200.correlation[1] > r50.correlation[1];
  return {ok, "50 trials: b0 " + fmt("%.3f", r50.correlation[0]) + " w0 " + fmt("%.3f", r50.correlation[1]) +
                  "; 200 trials: b0 " + fmt("%.3f", r200.correlation[0]) + " w0 " + fmt("%.3f", r200.correlation[1])};
}

Outcome sampler_validity() {
  // Conjugate sub-case: rates and w0 fixed at 0, N(0, 1) prior on b0.
  std::vector<Observation> obs;
  Rng data_rng(17, 17);
  for (int t = 0; t < 60; ++t)
    obs.push_back({0.1 * static_cast<double>(data_rng.index(11)), data_rng.bernoulli(0.5), data_rng.bernoulli(0.7)});
  auto density = [&](double b0) { return log_likelihood(AgentParams{b0, 0, 0, 0, 0, 0}, obs) + normal_log_pdf(b0, 0, 1); };
  FunctionTarget target([&](std::span<const double> x) { return density(x[0]); }, {0.0}, {"b0"});
  SamplerConfig ccfg;
  ccfg.seed = 3;
  const PosteriorDraws cd = run_sampler(target, ccfg);
  const double lo = -6.0, hi = 6.0;
  const int n = 24000;
  std::vector<double> cdf(n + 1, 0.0), dens(n + 1);
  double peak = -1e300;
  for (int i = 0; i <= n; ++i) peak = std::max(peak, density(lo + (hi - lo) * i / n));
  for (int i = 0; i <= n; ++i) dens[i] = std::exp(density(lo + (hi - lo) * i / n) - peak);
  for (int i = 1; i <= n; ++i) cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]);
  for (double& v : cdf) v /= cdf[n];
  const double ks = ks_one_sample(cd.pooled(0), [&](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double pos = (x - lo) / (hi - lo) * n;
    const auto i = static_cast<int>(pos);
    return cdf[i] + (pos - i) * (cdf[std::min(i + 1, n)] - cdf[i]);
  });

  // Three-participant hierarchical fit with default settings.
  std::vector<TrialRecord> recs;
  for (const auto& a : simulate_cohort(3, 50, Condition::standard, 1, RatePresets::standard())) {
    const auto r = records_of(a.trials);
    recs.insert(recs.end(), r.begin(), r.end());
  }
  SamplerConfig cfg;
  cfg.seed = 1;
  const PosteriorDraws d1 = sample_posterior(recs, cfg);
  const PosteriorSummary s = summarize(d1);
  const PosteriorDraws d2 = sample_posterior(recs, cfg);
  const bool exact = d1.values == d2.values;

  const bool ok = ks < 0.05 && cd.n_chains * cd.n_iterations == 4000 && s.max_rhat < 1.01 && s.min_ess > 400 && exact;
  return {ok, "KS " + fmt("%.4f", ks) + " (< 0.05); max R-hat " + fmt("%.4f", s.max_rhat) + " (< 1.01); min ESS " +
                  fmt("%.0f", s.min_ess) + " (> 400); bit-exact " + (exact ? "yes" : "no")};
}

Outcome metrics_identities() {
  Rng rng(9, 9);
  bool identity = true;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<TrialRecord> recs;
    const std::size_t n = 5 + rng.index(200);
    const double pg = rng.uniform(), py = rng.uniform();
    for (std::size_t t = 1; t <= n; ++t) {
      TrialRecord r;
      r.participant_id = "p";
      r.trial_index = t;
      r.ai_confidence = static_cast<double>(rng.index(11)) / 10.0;
      r.ai_correct = rng.bernoulli(pg);
      r.human_judged_correct = rng.bernoulli(py);
      r.human_correct = r.ai_correct == r.human_judged_correct;
      recs.push_back(r);
    }
    const TrialRange all{1, n};
    const HrFar hf = hr_far(recs, all);
    // Exact in counts: correct = hits + correct rejections.
    const std::size_t correct_rejections = hf.n_noise - hf.false_alarms;
    std::size_t k = 0;
    for (const auto& r : recs) k += r.human_correct ? 1U : 0U;
    identity = identity && k == hf.hits + correct_rejections;
    double decomposed = 0.0;
    if (hf.hit_rate) decomposed += *hf.hit_rate * hf.n_signal / static_cast<double>(n);
    if (hf.false_alarm_rate) decomposed += (1.0 - *hf.false_alarm_rate) * hf.n_noise / static_cast<double>(n);
    identity = identity && std::abs(accuracy(recs, all) - decomposed) < 1e-12;
  }
  const double dp = dprime(90, 100, 18, 100, DPrimeCorrection::none);

  std::vector<TrialRecord> hand;
  auto add = [&](double c, bool g, bool y) {
    TrialRecord r;
    r.participant_id = "h";
    r.trial_index = hand.size() + 1;
    r.ai_confidence = c;
    r.ai_correct = g;
    r.human_judged_correct = y;
    r.human_correct = g == y;
    hand.push_back(r);
  };
  for (int i = 0; i < 10; ++i) add(0.8, i < 8, i < 6);
  for (int i = 0; i < 10; ++i) add(0.2, i < 2, i < 3);
  const double e = ece(hand).ece;
  const bool ok = identity && near(dp, 2.197, 0.001) && near(e, 0.15, 1e-12);
  return {ok, std::string("decomposition ") + (identity ? "exact" : "broken") + " on 1000 datasets; d' " + fmt("%.4f", dp) +
                  "; ECE " + fmt("%.6f", e)};
}

Outcome end_to_end() {
  const fs::path dir = fs::temp_directory_path() / "trustcal_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const int port = free_port();
  const std::string port_s = std::to_string(port);
  std::vector<std::string> argv_s = {TRUSTCAL_CLI, "serve", "--port", port_s, "--seed", "5"};
  std::vector<char*> argv;
  for (auto& s : argv_s) argv.push_back(s.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  if (posix_spawn(&pid, TRUSTCAL_CLI, nullptr, nullptr, argv.data(), environ) != 0)
    return {false, "could not start the service"};
  struct Stop {
    pid_t pid;
    ~Stop() {
      kill(pid, SIGTERM);
      int st = 0;
      waitpid(pid, &st, 0);
    }
  } stop{pid};

  httplib::Client cli("127.0.0.1", port);
  httplib::Result created;
  for (int attempt = 0; attempt < 100 && !created; ++attempt) {
    created = cli.Post("/api/sessions", "{}", "application/json");
    if (!created) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  if (!created || created->status != 201) return {false, "session creation failed"};
  const std::string id = nlohmann::json::parse(created->body).at("session_id");
  const std::string base = "/api/sessions/" + id;

  Rng rng(1, 1);
  int score = 0;
  bool finished = false;
  for (int t = 1; t <= 50; ++t) {
    auto tr = cli.Get(base + "/trial");
    if (!tr || tr->status != 200)
      return {false, "trial " + std::to_string(t) + " failed: " +
                         (tr ? std::to_string(tr->status) + " " + tr->body : httplib::to_string(tr.error()))};
    const auto tj = nlohmann::json::parse(tr->body);
    const double c = tj.at("ai_confidence");
    const bool judge = c >= 0.5 ? rng.bernoulli(0.8) : rng.bernoulli(0.2);
    nlohmann::json body = {{"judged_correct", judge}, {"response_ms", 500 + static_cast<int>(rng.index(2000))}};
    auto jr = cli.Post(base + "/judgment", body.dump(), "application/json");
    if (!jr || jr->status != 200)
      return {false, "judgment " + std::to_string(t) + " failed: " +
                         (jr ? std::to_string(jr->status) + " " + jr->body : httplib::to_string(jr.error()))};
    const auto jj = nlohmann::json::parse(jr->body);
    score += jj.at("score_delta").get<int>();
    finished = jj.at("finished");
  }
  auto ex = cli.Get(base + "/export");
  if (!ex || ex->status != 200) return {false, "export failed"};
  std::istringstream is(ex->body);
  const auto recs = read_trials(is);
  SessionConfig cfg;
  cfg.condition = recs.front().condition;
  const bool valid = finished && validate_session(recs, cfg).pass();

  const fs::path csv = dir / "session.csv";
  write_trials(csv.string(), recs);
  const int rc = run_cli("fit \"" + csv.string() + "\" --method map --out-dir \"" + (dir / "fit").string() + "\"");
  bool finite = rc == 0;
  if (finite) {
    std::ifstream in(dir / "fit" / "map_fit.json");
    const auto j = nlohmann::json::parse(in);
    for (const auto& p : j.at("participants"))
      for (const char* k : {"b0", "w0", "alpha_b_correct", "alpha_b_wrong", "alpha_w_correct", "alpha_w_wrong"})
        finite = finite && std::isfinite(p.at(k).get<double>());
    finite = finite && j.at("participants").size() == 1;
  }
  fs::remove_all(dir);
  return {valid && finite, "50 trials, score " + std::to_string(score) + ", export " + (valid ? "valid" : "INVALID") +
                               ", map fit " + (finite ? "finite" : "FAILED")};
}

}  // namespace

int main() {
  criterion("ideal-observer bound", 5, ideal_observer);
  criterion("optimal criteria", 0, optimal_criteria);
  criterion("generative fidelity", 0, generative_fidelity);
  criterion("LLO/RW identities", 0, llo_rw_identities);
  criterion("preset simulations", 30, preset_simulations);
  criterion("ECE learning", 0, ece_learning);
  criterion("parameter recovery", 300, parameter_recovery);
  criterion("sampler validity", 600, sampler_validity);
  criterion("metrics identities", 0, metrics_identities);
  criterion("end-to-end protocol", 0, end_to_end);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
