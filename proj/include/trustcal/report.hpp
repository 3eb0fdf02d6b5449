#pragma once

// Per-condition behavioural report, optionally augmented with model-fit and
// trajectory results from posterior draws.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustcal/metrics.hpp"
#include "trustcal/model.hpp"
#include "trustcal/posterior.hpp"

namespace trustcal {

struct ReportOptions {
  std::size_t block_size = 10;
  std::size_t early_window = 10;  // first and last trials compared for calibration
  std::size_t max_posterior_draws = 400;
};

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json calibration_json(const CalibrationReport& rep) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : rep.bins) {
    bins.push_back({{"bin_center", b.bin_center},
                    {"n", b.n},
                    {"ai_accuracy", b.n ? nlohmann::json(b.ai_accuracy) : nlohmann::json(nullptr)},
                    {"perceived_accuracy", b.n ? nlohmann::json(b.perceived_accuracy) : nlohmann::json(nullptr)}});
  }
  return {{"ece", rep.ece}, {"n_trials", rep.n_trials}, {"bins", bins}};
}

}  // namespace detail

struct Report {
  nlohmann::json document;
  std::string fig3_csv;
  std::string fig4_csv;
  std::optional<std::string> fig6_csv;
};

inline Report build_report(std::span<const TrialRecord> records, const PosteriorDraws* draws = nullptr,
                           const ReportOptions& opt = {}) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  const auto participants = group_participants(records);

  Report rep;
  rep.fig3_csv = "condition,block,first_trial,last_trial,accuracy,n_trials\n";
  rep.fig4_csv = "condition,block,first_trial,last_trial,hit_rate,false_alarm_rate,d_prime\n";
  auto& doc = rep.document;
  doc["n_records"] = records.size();
  doc["n_participants"] = participants.size();
  doc["conditions"] = nlohmann::json::object();

  std::vector<std::vector<double>> predicted;
  std::map<Condition, std::vector<TrajectoryBand>> bands;
  if (draws) {
    predicted = posterior_predicted_v(*draws, participants, opt.max_posterior_draws);
    bands = posterior_trajectories(*draws, participants, opt.max_posterior_draws);
  }

  auto fmt = [](double v) {
    std::string s;
    detail::append_fixed(s, v, 6);
    return s;
  };

  for (Condition cond : kAllConditions) {
    std::vector<TrialRecord> recs;
    std::vector<std::vector<TrialRecord>> groups;
    std::vector<double> v_cond;
    std::vector<TrialRecord> recs_in_order;
    for (std::size_t i = 0; i < participants.size(); ++i) {
      if (participants[i].condition != cond) continue;
      groups.push_back(participants[i].records);
      recs.insert(recs.end(), participants[i].records.begin(), participants[i].records.end());
      if (draws) {
        v_cond.insert(v_cond.end(), predicted[i].begin(), predicted[i].end());
        recs_in_order.insert(recs_in_order.end(), participants[i].records.begin(), participants[i].records.end());
      }
    }
    if (recs.empty()) continue;
    const std::string label(to_string(cond));
    nlohmann::json c;
    c["n_participants"] = groups.size();
    c["n_trials"] = recs.size();

    nlohmann::json blocks = nlohmann::json::array();
    const auto summaries = block_accuracy(recs, opt.block_size);
    for (std::size_t k = 0; k < summaries.size(); ++k) {
      const auto& b = summaries[k];
      blocks.push_back({{"first_trial", b.block_range.first},
                        {"last_trial", b.block_range.last},
                        {"accuracy", b.accuracy},
                        {"hit_rate", detail::optional_json(b.hit_rate)},
                        {"false_alarm_rate", detail::optional_json(b.false_alarm_rate)},
                        {"d_prime", b.d_prime},
                        {"n_trials", b.n_trials}});
      const std::string prefix = label + "," + std::to_string(k + 1) + "," + std::to_string(b.block_range.first) + "," +
                                 std::to_string(b.block_range.last) + ",";
      rep.fig3_csv += prefix + fmt(b.accuracy) + "," + std::to_string(b.n_trials) + "\n";
      rep.fig4_csv += prefix + (b.hit_rate ? fmt(*b.hit_rate) : "") + "," +
                      (b.false_alarm_rate ? fmt(*b.false_alarm_rate) : "") + "," + fmt(b.d_prime) + "\n";
    }
    c["blocks"] = blocks;

    std::size_t max_trial = 0;
    for (const auto& r : recs) max_trial = std::max(max_trial, r.trial_index);
    const std::size_t win = std::min(opt.early_window, max_trial);
    const TrialRange early{1, win}, late{max_trial - win + 1, max_trial};
    c["calibration"] = {{"early", detail::calibration_json(ece(recs, early))},
                        {"late", detail::calibration_json(ece(recs, late))},
                        {"all", detail::calibration_json(ece(recs))}};
    c["calibration"]["early"]["trials"] = {early.first, early.last};
    c["calibration"]["late"]["trials"] = {late.first, late.last};

    std::vector<std::vector<TrialRecord>> slope_groups;
    for (const auto& g : groups)
      if (g.size() >= 20) slope_groups.push_back(g);
    if (!slope_groups.empty()) {
      const CohortSlope cs = cohort_learning_slope(slope_groups);
      c["learning_slope"] = {{"beta", cs.slope},
                             {"standard_error", cs.standard_error},
                             {"n_participants", cs.n_participants},
                             {"n_separated", cs.n_separated}};
    }

    std::size_t n_classified = 0, n_learners = 0;
    for (const auto& g : groups) {
      std::size_t late_n = 0;
      for (const auto& r : g) late_n += kLateTrials.contains(r.trial_index) ? 1U : 0U;
      if (late_n < 20) continue;
      ++n_classified;
      n_learners += classify_learner(g) == LearnerLabel::learner ? 1U : 0U;
    }
    if (n_classified > 0) {
      c["learners"] = {{"n_classified", n_classified},
                       {"n_learners", n_learners},
                       {"proportion", static_cast<double>(n_learners) / static_cast<double>(n_classified)}};
    }

    if (draws) {
      const ModelFitStats fit = model_fit_stats(v_cond, recs_in_order);
      c["model_fit"] = {{"agreement", fit.agreement},
                        {"mean_loglik_per_trial", fit.mean_loglik_per_trial},
                        {"mcfadden_r2", fit.mcfadden_r2}};
      nlohmann::json traj = nlohmann::json::array();
      for (const auto& b : bands.at(cond)) {
        traj.push_back({{"trial", b.trial},
                        {"b_mean", b.b_mean}, {"b_lo", b.b_lo}, {"b_hi", b.b_hi},
                        {"w_mean", b.w_mean}, {"w_lo", b.w_lo}, {"w_hi", b.w_hi}});
      }
      c["trajectories"] = traj;
    }
    doc["conditions"][label] = c;
  }

  if (draws) {
    std::string csv = "condition,trial,b_mean,b_lo,b_hi,w_mean,w_lo,w_hi\n";
    for (const auto& [cond, rows] : bands) {
      for (const auto& b : rows) {
        csv += std::string(to_string(cond)) + "," + std::to_string(b.trial);
        for (double v : {b.b_mean, b.b_lo, b.b_hi, b.w_mean, b.w_lo, b.w_hi}) csv += "," + fmt(v);
        csv += "\n";
      }
    }
    rep.fig6_csv = std::move(csv);
  }
  return rep;
}

inline void write_report_files(const Report& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os << text;
  };
  write("report.json", rep.document.dump(2) + "\n");
  write("fig3_accuracy.csv", rep.fig3_csv);
  write("fig4_hrfar.csv", rep.fig4_csv);
  if (rep.fig6_csv) write("fig6_trajectories.csv", *rep.fig6_csv);
}

}  // namespace trustcal
