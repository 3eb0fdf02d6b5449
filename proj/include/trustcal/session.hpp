#pragma once

// Live experiment sessions. A session serves one stimulus at a time, accepts
// exactly one judgment per stimulus, and keeps score and bonus. The assigned
// condition stays hidden until export.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trustcal/confidence.hpp"
#include "trustcal/records.hpp"
#include "trustcal/rng.hpp"

namespace trustcal {

class SessionError : public std::runtime_error {
 public:
  enum class Kind { not_found, conflict, bad_request };
  SessionError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

enum class SessionState { between_trials, awaiting_judgment, finished };

struct TrialView {
  std::size_t trial_index = 1;
  std::string ai_prediction_color;
  std::array<std::string, 2> colors;
  double ai_confidence = 0.5;
};

struct JudgmentOutcome {
  bool was_human_correct = false;
  bool ai_was_correct = false;
  int score_delta = 0;
  double bonus_accrued = 0.0;
  bool finished = false;
};

inline constexpr std::array<const char*, 6> kDotColors = {"red", "blue", "green", "orange", "purple", "yellow"};

inline std::string iso8601_utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Session {
 public:
  Session(std::string id, SessionConfig config, Condition condition, std::shared_ptr<const StimulusPool> pool,
          Rng rng)
      : id_(std::move(id)), config_(config), condition_(condition), pool_(std::move(pool)), rng_(std::move(rng)) {
    config_.validate();
    if (!pool_ || pool_->items.empty()) throw std::invalid_argument("Session: empty stimulus pool");
  }

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  Condition assigned_condition() const { return condition_; }
  SessionState state() const { return state_; }
  std::size_t current_trial() const { return current_trial_; }
  std::size_t score() const { return score_; }
  double bonus_accrued() const {
    return std::min(static_cast<double>(score_) * config_.bonus_per_correct, config_.bonus_cap);
  }

  // Serves the pending stimulus, drawing a new one only after a judgment.
  TrialView trial() {
    if (state_ == SessionState::finished) throw SessionError(SessionError::Kind::conflict, "session finished");
    if (state_ == SessionState::between_trials) {
      stimulus_ = pool_->draw(rng_);
      const std::size_t a = rng_.index(kDotColors.size());
      std::size_t b = rng_.index(kDotColors.size() - 1);
      if (b >= a) ++b;
      view_.colors = {kDotColors[a], kDotColors[b]};
      view_.ai_prediction_color = view_.colors[rng_.index(2)];
      view_.trial_index = current_trial_ + 1;
      view_.ai_confidence = stimulus_.confidence_displayed;
      state_ = SessionState::awaiting_judgment;
    }
    return view_;
  }

  JudgmentOutcome judge(bool judged_correct, std::optional<std::int64_t> response_ms = std::nullopt,
                        std::optional<std::string> timestamp = std::nullopt) {
    if (state_ == SessionState::finished) throw SessionError(SessionError::Kind::conflict, "session finished");
    if (state_ != SessionState::awaiting_judgment)
      throw SessionError(SessionError::Kind::conflict, "no stimulus awaiting judgment");
    if (response_ms && *response_ms < 0) throw SessionError(SessionError::Kind::bad_request, "negative response_ms");

    TrialRecord r;
    r.participant_id = id_;
    r.condition = condition_;
    r.trial_index = current_trial_ + 1;
    r.ai_confidence = stimulus_.confidence_displayed;
    r.ai_correct = stimulus_.ai_correct;
    r.human_judged_correct = judged_correct;
    r.human_correct = judged_correct == stimulus_.ai_correct;
    r.response_ms = response_ms;
    r.timestamp = std::move(timestamp);
    records_.push_back(std::move(r));

    ++current_trial_;
    JudgmentOutcome out;
    out.was_human_correct = records_.back().human_correct;
    out.ai_was_correct = stimulus_.ai_correct;
    out.score_delta = out.was_human_correct ? 1 : 0;
    score_ += static_cast<std::size_t>(out.score_delta);
    out.bonus_accrued = bonus_accrued();
    state_ = current_trial_ >= config_.n_trials ? SessionState::finished : SessionState::between_trials;
    out.finished = state_ == SessionState::finished;
    return out;
  }

  const std::vector<TrialRecord>& records() const { return records_; }

 private:
  std::string id_;
  SessionConfig config_;
  Condition condition_;
  std::shared_ptr<const StimulusPool> pool_;
  Rng rng_;
  SessionState state_ = SessionState::between_trials;
  std::size_t current_trial_ = 0;
  std::size_t score_ = 0;
  TrialStimulus stimulus_{};
  TrialView view_{};
  std::vector<TrialRecord> records_;
};

// Thread-safe registry of sessions. Each session has its own mutex; the map is
// guarded separately, so operations on different sessions do not contend.
class SessionStore {
 public:
  using Clock = std::chrono::steady_clock;

  explicit SessionStore(SessionConfig defaults = {}, Clock::duration max_idle = std::chrono::hours(24))
      : defaults_(defaults), max_idle_(max_idle) {
    defaults_.validate();
    for (Condition c : kAllConditions)
      pools_[index_of(c)] = std::make_shared<const StimulusPool>(build_pool(condition_spec(c), defaults_.pool_size, defaults_.seed));
  }

  struct Created {
    std::string id;
    std::size_t n_trials;
  };

  Created create(std::optional<Condition> requested = std::nullopt, Clock::time_point now = Clock::now()) {
    std::lock_guard lock(map_mutex_);
    evict_locked(now);
    const std::uint64_t serial = next_serial_++;
    Rng rng(defaults_.seed, stream_id("session", serial));
    const std::optional<Condition> wanted = requested ? requested : defaults_.condition;
    const Condition cond = wanted ? *wanted : kAllConditions[rng.index(kAllConditions.size())];
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04llx%012llx", static_cast<unsigned long long>(serial & 0xffff),
                  static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
    const std::string id = buf;
    SessionConfig cfg = defaults_;
    cfg.condition = cond;
    auto entry = std::make_shared<Entry>(Session(id, cfg, cond, pools_[index_of(cond)], std::move(rng)), now);
    sessions_.emplace(id, entry);
    return {id, defaults_.n_trials};
  }

  // Runs `fn(Session&)` under the session's lock.
  template <class Fn>
  auto with_session(const std::string& id, Fn&& fn, Clock::time_point now = Clock::now()) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard lock(map_mutex_);
      const auto it = sessions_.find(id);
      if (it == sessions_.end()) throw SessionError(SessionError::Kind::not_found, "unknown session '" + id + "'");
      entry = it->second;
    }
    std::lock_guard lock(entry->mutex);
    entry->last_access = now;
    return fn(entry->session);
  }

  std::size_t evict_idle(Clock::time_point now = Clock::now()) {
    std::lock_guard lock(map_mutex_);
    return evict_locked(now);
  }

  std::size_t size() const {
    std::lock_guard lock(map_mutex_);
    return sessions_.size();
  }

  const SessionConfig& defaults() const { return defaults_; }

 private:
  struct Entry {
    Entry(Session s, Clock::time_point t) : session(std::move(s)), last_access(t) {}
    std::mutex mutex;
    Session session;
    Clock::time_point last_access;
  };

  std::size_t evict_locked(Clock::time_point now) {
    std::size_t n = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      bool idle = false;
      {
        std::lock_guard lock(it->second->mutex);
        idle = now - it->second->last_access > max_idle_;
      }
      if (idle) {
        it = sessions_.erase(it);
        ++n;
      } else {
        ++it;
      }
    }
    return n;
  }

  SessionConfig defaults_;
  Clock::duration max_idle_;
  std::array<std::shared_ptr<const StimulusPool>, 4> pools_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_serial_ = 0;
};

}  // namespace trustcal
