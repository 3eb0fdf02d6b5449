#pragma once

// On-disk data model shared by simulation, inference, the session service and
// the browser client. Trial logs are CSV; configs and reports are JSON.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustcal/confidence.hpp"

namespace trustcal {

struct TrialRecord {
  std::string participant_id;
  Condition condition = Condition::standard;
  std::size_t trial_index = 1;
  double ai_confidence = 0.5;         // displayed value, multiple of 0.1
  bool ai_correct = false;            // g_t
  bool human_judged_correct = false;  // y_t
  bool human_correct = false;         // y_t == g_t
  std::optional<std::int64_t> response_ms;
  std::optional<std::string> timestamp;

  bool operator==(const TrialRecord&) const = default;
};

inline constexpr std::string_view kTrialCsvHeader =
    "participant_id,condition,trial_index,ai_confidence,ai_correct,human_judged_correct,"
    "human_correct,response_ms,timestamp";

class DataError : public std::runtime_error {
 public:
  DataError(std::size_t row, const std::string& what)
      : std::runtime_error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}
  // 1-based data row (header excluded); 0 when not tied to a row.
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Returns a description of the first invariant the record breaks, if any.
inline std::optional<std::string> check_record(const TrialRecord& r) {
  if (r.participant_id.empty()) return "participant_id is empty";
  if (r.participant_id.find_first_of(",\"\n\r[]") != std::string::npos)
    return "participant_id contains a reserved character";
  if (r.trial_index < 1) return "trial_index must be >= 1";
  if (!on_tenth_grid(r.ai_confidence)) return "ai_confidence is not a multiple of 0.1 in [0, 1]";
  if (r.human_correct != (r.human_judged_correct == r.ai_correct))
    return "human_correct contradicts human_judged_correct == ai_correct";
  if (r.response_ms && *r.response_ms < 0) return "response_ms is negative";
  if (r.timestamp && r.timestamp->find_first_of(",\"\n\r") != std::string::npos)
    return "timestamp contains a reserved character";
  return std::nullopt;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline bool parse_bool01(std::string_view s, bool& out) {
  if (s == "1") return out = true, true;
  if (s == "0") return out = false, true;
  return false;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline void append_record(std::string& line, const TrialRecord& r) {
  line += r.participant_id;
  line += ',';
  line += to_string(r.condition);
  line += ',';
  line += std::to_string(r.trial_index);
  line += ',';
  append_fixed(line, r.ai_confidence, 1);
  line += r.ai_correct ? ",1" : ",0";
  line += r.human_judged_correct ? ",1" : ",0";
  line += r.human_correct ? ",1," : ",0,";
  if (r.response_ms) line += std::to_string(*r.response_ms);
  line += ',';
  if (r.timestamp) line += *r.timestamp;
}

}  // namespace detail

// Readers accept and ignore trailing columns beyond the fixed header, which is
// how simulation exports carry model state.
inline void write_trials(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kTrialCsvHeader << '\n';
  std::string line;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto err = check_record(records[i])) throw DataError(i + 1, *err);
    line.clear();
    detail::append_record(line, records[i]);
    line += '\n';
    os << line;
  }
}

inline void write_trials(const std::string& path, const std::vector<TrialRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(0, "cannot open '" + path + "' for writing");
  write_trials(os, records);
  if (!os) throw DataError(0, "write failed for '" + path + "'");
}

inline TrialRecord parse_trial_row(std::string_view line, std::size_t row) {
  const auto f = detail::split_csv_line(line);
  if (f.size() < 9) throw DataError(row, "expected at least 9 fields, got " + std::to_string(f.size()));
  TrialRecord r;
  r.participant_id = std::string(f[0]);
  try {
    r.condition = parse_condition(f[1]);
  } catch (const std::invalid_argument& e) {
    throw DataError(row, e.what());
  }
  if (!detail::parse_number(f[2], r.trial_index)) throw DataError(row, "bad trial_index");
  double conf = 0.0;
  if (!detail::parse_number(f[3], conf)) throw DataError(row, "bad ai_confidence");
  if (!on_tenth_grid(conf)) throw DataError(row, "ai_confidence " + std::string(f[3]) + " is not a multiple of 0.1");
  r.ai_confidence = round_to_tenth(conf);
  if (!detail::parse_bool01(f[4], r.ai_correct)) throw DataError(row, "ai_correct must be 0 or 1");
  if (!detail::parse_bool01(f[5], r.human_judged_correct))
    throw DataError(row, "human_judged_correct must be 0 or 1");
  if (!detail::parse_bool01(f[6], r.human_correct)) throw DataError(row, "human_correct must be 0 or 1");
  if (!f[7].empty()) {
    std::int64_t ms = 0;
    if (!detail::parse_number(f[7], ms)) throw DataError(row, "bad response_ms");
    r.response_ms = ms;
  }
  if (!f[8].empty()) r.timestamp = std::string(f[8]);
  if (auto err = check_record(r)) throw DataError(row, *err);
  return r;
}

inline std::vector<TrialRecord> read_trials(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(0, "empty trial file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind(kTrialCsvHeader, 0) != 0) throw DataError(0, "unexpected header: " + line);
  std::vector<TrialRecord> out;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_trial_row(line, row));
  }
  return out;
}

inline std::vector<TrialRecord> read_trials(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(0, "cannot open '" + path + "'");
  return read_trials(is);
}

// ---------------------------------------------------------------------------
// Session configuration

struct SessionConfig {
  std::optional<Condition> condition;  // nullopt means "random"
  std::size_t n_trials = 50;
  std::uint64_t seed = 0;
  double bonus_per_correct = 0.01;
  double bonus_cap = 0.50;
  std::size_t pool_size = kDefaultPoolSize;

  void validate() const {
    if (n_trials < 1) throw std::invalid_argument("SessionConfig: n_trials must be >= 1");
    if (!(bonus_cap >= 0.0)) throw std::invalid_argument("SessionConfig: bonus_cap must be >= 0");
    if (!(bonus_per_correct >= 0.0)) throw std::invalid_argument("SessionConfig: bonus_per_correct must be >= 0");
    if (pool_size < 1) throw std::invalid_argument("SessionConfig: pool_size must be >= 1");
  }
};

inline nlohmann::json to_json(const SessionConfig& c) {
  return {{"condition", c.condition ? std::string(to_string(*c.condition)) : std::string("random")},
          {"n_trials", c.n_trials},
          {"seed", c.seed},
          {"bonus_per_correct", c.bonus_per_correct},
          {"bonus_cap", c.bonus_cap},
          {"pool_size", c.pool_size}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline SessionConfig session_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"condition",         "n_trials",  "seed",
                                              "bonus_per_correct", "bonus_cap", "pool_size"};
  if (!j.is_object()) throw std::invalid_argument("SessionConfig: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("SessionConfig: unknown key '" + key + "'");
  }
  SessionConfig c;
  try {
    if (j.contains("condition")) {
      const auto label = j.at("condition").get<std::string>();
      if (label != "random") c.condition = parse_condition(label);
    }
    if (j.contains("n_trials")) c.n_trials = j.at("n_trials").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("bonus_per_correct")) c.bonus_per_correct = j.at("bonus_per_correct").get<double>();
    if (j.contains("bonus_cap")) c.bonus_cap = j.at("bonus_cap").get<double>();
    if (j.contains("pool_size")) c.pool_size = j.at("pool_size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("SessionConfig: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Session validation

struct Violation {
  std::string kind;  // count, contiguity, condition, grid, identity, participant
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool pass() const { return violations.empty(); }
  bool has(std::string_view kind) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; });
  }
};

inline ValidationReport validate_session(const std::vector<TrialRecord>& records, const SessionConfig& config) {
  ValidationReport rep;
  auto add = [&](std::string kind, std::string msg) { rep.violations.push_back({std::move(kind), std::move(msg)}); };

  if (records.size() != config.n_trials)
    add("count", "expected " + std::to_string(config.n_trials) + " trials, found " + std::to_string(records.size()));
  if (records.empty()) return rep;

  const std::string& pid = records.front().participant_id;
  const Condition cond = records.front().condition;
  if (config.condition && *config.condition != cond)
    add("condition", "session condition " + std::string(to_string(cond)) + " differs from configured " +
                         std::string(to_string(*config.condition)));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "trial " + std::to_string(i + 1);
    if (r.participant_id != pid) add("participant", where + ": participant id changes within session");
    if (r.condition != cond) add("condition", where + ": mixed conditions within session");
    if (r.trial_index != i + 1)
      add("contiguity", where + ": trial_index " + std::to_string(r.trial_index) + " out of sequence");
    if (!on_tenth_grid(r.ai_confidence)) add("grid", where + ": ai_confidence off the 0.1 grid");
    if (r.human_correct != (r.human_judged_correct == r.ai_correct))
      add("identity", where + ": human_correct inconsistent with judgment and AI correctness");
  }
  return rep;
}

}  // namespace trustcal
