#include <catch_amalgamated.hpp>

#include <array>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "trustcal/server.hpp"
#include "trustcal/session.hpp"

using namespace trustcal;
using Catch::Approx;

namespace {

SessionConfig small_pool(std::uint64_t seed = 1) {
  SessionConfig c;
  c.pool_size = 2000;
  c.seed = seed;
  return c;
}

class TestServer {
 public:
  explicit TestServer(SessionConfig cfg) : store(cfg) {
    install_routes(server, store);
    port = server.bind_to_any_port("127.0.0.1");
    worker = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~TestServer() {
    server.stop();
    worker.join();
  }
  SessionStore store;
  httplib::Server server;
  int port = 0;
  std::thread worker;
};

}  // namespace

TEST_CASE("session state machine") {
  SessionStore store(small_pool());
  const auto created = store.create(Condition::standard);
  CHECK(created.n_trials == 50);
  store.with_session(created.id, [](Session& s) {
    CHECK(s.state() == SessionState::between_trials);
    CHECK_THROWS_AS(s.judge(true), SessionError);
    const TrialView a = s.trial();
    CHECK(s.state() == SessionState::awaiting_judgment);
    const TrialView b = s.trial();
    CHECK(a.trial_index == 1);
    CHECK(b.trial_index == a.trial_index);
    CHECK(b.ai_confidence == a.ai_confidence);
    CHECK(b.ai_prediction_color == a.ai_prediction_color);
    CHECK(a.colors[0] != a.colors[1]);
    CHECK((a.ai_prediction_color == a.colors[0] || a.ai_prediction_color == a.colors[1]));
    CHECK(on_tenth_grid(a.ai_confidence));
    s.judge(false, 800);
    try {
      s.judge(true);
      FAIL("second judgment accepted");
    } catch (const SessionError& e) {
      CHECK(e.kind() == SessionError::Kind::conflict);
    }
    std::size_t last = 1;
    while (s.state() != SessionState::finished) {
      const TrialView v = s.trial();
      REQUIRE(v.trial_index == last + 1);
      last = v.trial_index;
      s.judge(true);
      REQUIRE(s.current_trial() <= 50);
    }
    CHECK(last == 50);
    CHECK_THROWS_AS(s.trial(), SessionError);
    CHECK_THROWS_AS(s.judge(true), SessionError);
    CHECK(s.state() == SessionState::finished);
    CHECK(validate_session(s.records(), s.config()).pass());
    CHECK(s.records().front().response_ms == 800);
    CHECK(s.records().front().condition == Condition::standard);
  });
  try {
    store.with_session("nope", [](Session&) { return 0; });
    FAIL("unknown session accepted");
  } catch (const SessionError& e) {
    CHECK(e.kind() == SessionError::Kind::not_found);
  }
}

TEST_CASE("bonus never exceeds the cap") {
  SessionConfig cfg = small_pool(3);
  cfg.n_trials = 80;
  SessionStore store(cfg);
  Rng rng(5, 5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto id = store.create().id;
    store.with_session(id, [&](Session& s) {
      const double p = rng.uniform();
      while (s.state() != SessionState::finished) {
        s.trial();
        const JudgmentOutcome o = s.judge(rng.bernoulli(p));
        REQUIRE(o.bonus_accrued <= cfg.bonus_cap + 1e-12);
        REQUIRE(o.bonus_accrued == Approx(std::min(s.score() * 0.01, 0.50)).margin(1e-12));
      }
      return 0;
    });
  }
  CHECK(store.size() == 50);
}

TEST_CASE("always-correct client scores near chance") {
  SessionStore store(small_pool(7));
  double total = 0.0;
  const int n_sessions = 40;
  for (int i = 0; i < n_sessions; ++i) {
    const auto id = store.create(kAllConditions[i % 4]).id;
    store.with_session(id, [&](Session& s) {
      JudgmentOutcome o;
      while (s.state() != SessionState::finished) {
        s.trial();
        o = s.judge(true);
      }
      CHECK(o.bonus_accrued == Approx(std::min(s.score() * 0.01, 0.50)).margin(1e-12));
      total += static_cast<double>(s.score());
      return 0;
    });
  }
  CHECK(total / n_sessions == Approx(25.0).margin(2.0));
}

TEST_CASE("perfect client reaches the cap") {
  // Stores built from the same config replay the same stimuli, so a first pass
  // reveals the answers for a second.
  SessionStore first(small_pool(8));
  const auto id = first.create(Condition::reverse).id;
  const auto truth = first.with_session(id, [](Session& s) {
    while (s.state() != SessionState::finished) {
      s.trial();
      s.judge(true);
    }
    return s.records();
  });
  SessionStore replay(small_pool(8));
  const auto id2 = replay.create(Condition::reverse).id;
  CHECK(id2 == id);
  replay.with_session(id2, [&](Session& s) {
    std::size_t t = 0;
    JudgmentOutcome o;
    while (s.state() != SessionState::finished) {
      s.trial();
      o = s.judge(truth[t++].ai_correct);
    }
    CHECK(s.score() == 50);
    CHECK(o.bonus_accrued == Approx(0.50).margin(1e-12));
    return 0;
  });
}

TEST_CASE("random assignment covers every condition") {
  SessionStore store(small_pool(9));
  std::array<int, 4> seen{};
  for (int i = 0; i < 400; ++i) {
    const auto id = store.create().id;
    ++seen[index_of(store.with_session(id, [](Session& s) { return s.assigned_condition(); }))];
  }
  for (int n : seen) CHECK(n == Approx(100).margin(35));
}

TEST_CASE("idle sessions are evicted") {
  SessionStore store(small_pool(), std::chrono::minutes(5));
  const auto t0 = SessionStore::Clock::now();
  const auto a = store.create(std::nullopt, t0).id;
  store.create(std::nullopt, t0 + std::chrono::minutes(4));
  CHECK(store.evict_idle(t0 + std::chrono::minutes(6)) == 1);
  CHECK(store.size() == 1);
  CHECK_THROWS_AS(store.with_session(a, [](Session&) { return 0; }), SessionError);
}

TEST_CASE("http protocol") {
  TestServer srv(small_pool(11));
  httplib::Client cli("127.0.0.1", srv.port);

  auto created = cli.Post("/api/sessions", R"({"condition":"overconfidence"})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto cj = nlohmann::json::parse(created->body);
  CHECK(cj["n_trials"] == 50);
  CHECK(cj["condition_hidden"] == true);
  CHECK_FALSE(cj.contains("condition"));
  const std::string id = cj["session_id"];
  const std::string base = "/api/sessions/" + id;

  CHECK(cli.Get("/api/sessions/missing/trial")->status == 404);
  CHECK(cli.Post(base + "/judgment", R"({"judged_correct":true})", "application/json")->status == 409);
  CHECK(cli.Post("/api/sessions", R"({"condition":"sideways"})", "application/json")->status == 400);

  double bonus = 0.0;
  for (int t = 1; t <= 50; ++t) {
    auto tr = cli.Get(base + "/trial");
    REQUIRE(tr);
    REQUIRE(tr->status == 200);
    const auto tj = nlohmann::json::parse(tr->body);
    REQUIRE(tj["trial_index"] == t);
    CHECK(nlohmann::json::parse(cli.Get(base + "/trial")->body) == tj);
    CHECK_FALSE(tj.contains("condition"));
    if (t == 3) {
      CHECK(cli.Post(base + "/judgment", "not json", "application/json")->status == 400);
      CHECK(cli.Post(base + "/judgment", R"({"judged_correct":"yes"})", "application/json")->status == 400);
    }
    auto jr = cli.Post(base + "/judgment", R"({"judged_correct":true,"response_ms":1200})", "application/json");
    REQUIRE(jr);
    REQUIRE(jr->status == 200);
    const auto jj = nlohmann::json::parse(jr->body);
    CHECK(jj["finished"] == (t == 50));
    CHECK(jj["was_human_correct"] == jj["ai_was_correct"]);
    bonus = jj["bonus_accrued"];
    if (t == 1) CHECK(cli.Post(base + "/judgment", R"({"judged_correct":true})", "application/json")->status == 409);
  }
  CHECK(bonus <= 0.50);
  CHECK(cli.Get(base + "/trial")->status == 409);
  CHECK(cli.Post(base + "/judgment", R"({"judged_correct":false})", "application/json")->status == 409);

  auto ex = cli.Get(base + "/export");
  REQUIRE(ex);
  CHECK(ex->status == 200);
  std::istringstream is(ex->body);
  const auto recs = read_trials(is);
  REQUIRE(recs.size() == 50);
  SessionConfig cfg;
  cfg.condition = Condition::overconfidence;
  CHECK(validate_session(recs, cfg).pass());
  CHECK(recs[0].response_ms == 1200);
  CHECK(recs[0].timestamp.has_value());
}
