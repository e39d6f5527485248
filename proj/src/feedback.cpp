#include "crowdshape/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

namespace crowdshape {

namespace {

double logit(double c) { return std::log(c) - std::log1p(-c); }

ActionDistribution softmax(const ActionMap<double>& logits) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) top = std::max(top, logits.value(i));
  if (!std::isfinite(top)) throw NumericError("feedback logits are not finite");
  std::array<double, kMaxActions> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(logits.value(i) - top);
    total += w[i];
  }
  ActionDistribution out;
  for (std::size_t i = 0; i < logits.size(); ++i) out.insert(logits.key(i), w[i] / total);
  return out;
}

void check_consistency(double c, double eps) {
  require(c >= eps && c <= 1.0 - eps,
          "consistency " + format_double(c) + " outside [" + format_double(eps) + ", " + format_double(1.0 - eps) + "]");
}

}  // namespace

std::string_view to_string(FeedbackLabel l) { return l == FeedbackLabel::Right ? "right" : "wrong"; }

FeedbackLabel feedback_label_from_string(std::string_view name) {
  if (name == "right") return FeedbackLabel::Right;
  if (name == "wrong") return FeedbackLabel::Wrong;
  throw ContractViolation("feedback label must be 'right' or 'wrong', got '" + std::string(name) + "'");
}

double clamp_consistency(double c, double eps) { return std::clamp(c, eps, 1.0 - eps); }

void FeedbackTally::record(const FeedbackSignal& signal) { record(signal.state, signal.action, signal.label); }

void FeedbackTally::record(StateId s, Action a, FeedbackLabel label) {
  auto& cell = rows_[s][index_of(a)];
  if (label == FeedbackLabel::Right) {
    ++cell.plus;
    ++total_right_;
  } else {
    ++cell.minus;
    ++total_wrong_;
  }
}

FeedbackCounts FeedbackTally::counts(StateId s, Action a) const {
  const auto it = rows_.find(s);
  return it == rows_.end() ? FeedbackCounts{} : it->second[index_of(a)];
}

TallySlice FeedbackTally::slice(StateId s, const ActionSet& actions) const {
  TallySlice out;
  const auto it = rows_.find(s);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Action a = actions.key(i);
    out.insert(a, it == rows_.end() ? FeedbackCounts{} : it->second[index_of(a)]);
  }
  return out;
}

DeltaRow FeedbackTally::delta_row(StateId s, const ActionSet& actions) const {
  DeltaRow out;
  const auto it = rows_.find(s);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Action a = actions.key(i);
    out.insert(a, it == rows_.end() ? 0 : it->second[index_of(a)].delta());
  }
  return out;
}

ActionDistribution trainer_policy(const DeltaRow& delta_row, double c, double eps) {
  const TrainerEvidence one{delta_row, c};
  return multi_trainer_policy(std::span<const TrainerEvidence>(&one, 1), eps);
}

ActionDistribution multi_trainer_policy(std::span<const TrainerEvidence> trainers, double eps) {
  require(!trainers.empty(), "multi_trainer_policy needs at least one trainer");
  const DeltaRow& support = trainers.front().delta_row;
  require(!support.empty(), "feedback policy over an empty action set");

  ActionMap<double> logits;
  for (std::size_t i = 0; i < support.size(); ++i) logits.insert(support.key(i), 0.0);
  for (const auto& t : trainers) {
    require(t.delta_row.same_support(support), "trainer rows disagree on the action support");
    check_consistency(t.c, eps);
    const double w = logit(t.c);
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits.value(i) += static_cast<double>(t.delta_row.at(logits.key(i))) * w;
    }
  }
  return softmax(logits);
}

ActionDistribution multi_trainer_policy(std::span<const FeedbackTally> tallies,
                                        std::span<const TrainerProfile> profiles, StateId s,
                                        const ActionSet& actions, double eps) {
  require(tallies.size() == profiles.size(), "tallies and profiles are not aligned");
  std::vector<TrainerEvidence> evidence;
  evidence.reserve(tallies.size());
  for (std::size_t n = 0; n < tallies.size(); ++n) {
    evidence.push_back({tallies[n].delta_row(s, actions), profiles[n].c_hat});
  }
  return multi_trainer_policy(evidence, eps);
}

ActionDistribution combine_policies(const ActionDistribution& pi_f, const ActionDistribution& pi_r) {
  require(pi_f.same_support(pi_r), "combine_policies: supports differ");
  std::array<double, kMaxActions> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < pi_r.size(); ++i) {
    w[i] = pi_f.at(pi_r.key(i)) * pi_r.value(i);
    total += w[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) return pi_r;
  ActionDistribution out;
  for (std::size_t i = 0; i < pi_r.size(); ++i) out.insert(pi_r.key(i), w[i] / total);
  return out;
}

void write_feedback_log_header(std::ostream& out) {
  out << "trial,episode,timestep,trainer_id,state_id,action_id,label\n";
}

void write_feedback_log_record(std::ostream& out, const FeedbackLogRecord& r) {
  out << r.trial << ',' << r.episode << ',' << r.signal.timestep << ',' << r.signal.trainer_id << ','
      << r.signal.state << ',' << index_of(r.signal.action) << ',' << to_string(r.signal.label) << '\n';
}

FeedbackLogRecord parse_feedback_log_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != '\n') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  if (fields.size() != 7) throw IoError("feedback log record needs 7 fields: " + std::string(line));
  try {
    FeedbackLogRecord r;
    r.trial = std::stoull(fields[0]);
    r.episode = std::stoull(fields[1]);
    r.signal.timestep = std::stoull(fields[2]);
    r.signal.trainer_id = fields[3];
    r.signal.state = std::stoull(fields[4]);
    r.signal.action = action_from_index(std::stoul(fields[5]));
    r.signal.label = feedback_label_from_string(fields[6]);
    return r;
  } catch (const std::logic_error& e) {
    throw IoError("malformed feedback log record: " + std::string(e.what()));
  }
}

}  // namespace crowdshape
