#pragma once

// HTTP/JSON front end for SessionStore.
//
//   POST /api/sessions                    {condition?}       -> {session_id, n_trials, condition_hidden}
//   GET  /api/sessions/{id}/trial                            -> {trial_index, ai_prediction_color, colors, ai_confidence}
//   POST /api/sessions/{id}/judgment      {judged_correct, response_ms?}
//                                         -> {was_human_correct, ai_was_correct, score_delta, bonus_accrued, finished}
//   GET  /api/sessions/{id}/export                           -> trial CSV
//
// Unknown sessions answer 404, protocol violations 409, malformed bodies 400.

#include <optional>
#include <sstream>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "trustcal/records.hpp"
#include "trustcal/session.hpp"

namespace trustcal {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

inline int status_of(const SessionError& e) {
  switch (e.kind()) {
    case SessionError::Kind::not_found: return 404;
    case SessionError::Kind::conflict: return 409;
    case SessionError::Kind::bad_request: return 400;
  }
  return 500;
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const SessionError& e) {
    send_error(res, status_of(e), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed body: ") + e.what());
  } catch (const std::invalid_argument& e) {
    send_error(res, 400, e.what());
  }
}

}  // namespace detail

inline void install_routes(httplib::Server& server, SessionStore& store) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Post("/api/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      std::optional<Condition> wanted;
      if (!req.body.empty()) {
        const auto body = nlohmann::json::parse(req.body);
        if (!body.is_object()) throw std::invalid_argument("body must be a JSON object");
        if (body.contains("condition") && !body.at("condition").is_null()) {
          const auto label = body.at("condition").get<std::string>();
          if (label != "random") wanted = parse_condition(label);
        }
      }
      const auto created = store.create(wanted);
      detail::send_json(res, 201, {{"session_id", created.id}, {"n_trials", created.n_trials}, {"condition_hidden", true}});
    });
  });

  server.Get(R"(/api/sessions/([^/]+)/trial)", [&store](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const TrialView v = store.with_session(req.matches[1], [](Session& s) { return s.trial(); });
      detail::send_json(res, 200,
                        {{"trial_index", v.trial_index},
                         {"ai_prediction_color", v.ai_prediction_color},
                         {"colors", {v.colors[0], v.colors[1]}},
                         {"ai_confidence", v.ai_confidence}});
    });
  });

  server.Post(R"(/api/sessions/([^/]+)/judgment)", [&store](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string id = req.matches[1];
      const auto body = nlohmann::json::parse(req.body);
      if (!body.is_object() || !body.contains("judged_correct") || !body.at("judged_correct").is_boolean())
        throw SessionError(SessionError::Kind::bad_request, "body must contain boolean 'judged_correct'");
      std::optional<std::int64_t> ms;
      if (body.contains("response_ms") && !body.at("response_ms").is_null()) {
        if (!body.at("response_ms").is_number_integer())
          throw SessionError(SessionError::Kind::bad_request, "'response_ms' must be an integer");
        ms = body.at("response_ms").get<std::int64_t>();
      }
      const bool judged = body.at("judged_correct").get<bool>();
      const JudgmentOutcome o =
          store.with_session(id, [&](Session& s) { return s.judge(judged, ms, iso8601_utc_now()); });
      detail::send_json(res, 200,
                        {{"was_human_correct", o.was_human_correct},
                         {"ai_was_correct", o.ai_was_correct},
                         {"score_delta", o.score_delta},
                         {"bonus_accrued", o.bonus_accrued},
                         {"finished", o.finished}});
    });
  });

  server.Get(R"(/api/sessions/([^/]+)/export)", [&store](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string id = req.matches[1];
      const auto records = store.with_session(id, [](Session& s) { return s.records(); });
      std::ostringstream os;
      write_trials(os, records);
      res.status = 200;
      res.set_header("Content-Disposition", "attachment; filename=\"" + id + ".csv\"");
      res.set_content(os.str(), "text/csv");
    });
  });
}

}  // namespace trustcal
