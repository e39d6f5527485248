#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include "crowdshape/common.hpp"
#include "crowdshape/gridworld.hpp"

namespace crowdshape {

enum class FeedbackLabel : std::uint8_t { Right, Wrong };

std::string_view to_string(FeedbackLabel l);
FeedbackLabel feedback_label_from_string(std::string_view name);

struct FeedbackSignal {
  std::string trainer_id;
  StateId state = 0;
  Action action = Action::North;
  FeedbackLabel label = FeedbackLabel::Right;
  std::uint64_t timestep = 0;
};

struct FeedbackCounts {
  std::int64_t plus = 0;
  std::int64_t minus = 0;
  [[nodiscard]] std::int64_t total() const { return plus + minus; }
  [[nodiscard]] std::int64_t delta() const { return plus - minus; }
};

/// Per-action counts at one state.
using TallySlice = ActionMap<FeedbackCounts>;

/// One trainer's accumulated right/wrong counts (h+ and h-) per state-action pair.
class FeedbackTally {
 public:
  void record(const FeedbackSignal& signal);
  void record(StateId s, Action a, FeedbackLabel label);

  [[nodiscard]] FeedbackCounts counts(StateId s, Action a) const;
  [[nodiscard]] std::int64_t delta(StateId s, Action a) const { return counts(s, a).delta(); }

  /// Counts for each action in `actions`, in that order.
  [[nodiscard]] TallySlice slice(StateId s, const ActionSet& actions) const;
  [[nodiscard]] DeltaRow delta_row(StateId s, const ActionSet& actions) const;

  [[nodiscard]] bool has_state(StateId s) const { return rows_.contains(s); }
  [[nodiscard]] std::int64_t total_right() const { return total_right_; }
  [[nodiscard]] std::int64_t total_wrong() const { return total_wrong_; }

 private:
  std::unordered_map<StateId, std::array<FeedbackCounts, kMaxActions>> rows_;
  std::int64_t total_right_ = 0;
  std::int64_t total_wrong_ = 0;
};

/// Lower/upper clamp margin for consistency values.
inline constexpr double kDefaultConsistencyEpsilon = 1e-3;

double clamp_consistency(double c, double eps = kDefaultConsistencyEpsilon);

struct TrainerProfile {
  std::string trainer_id;
  double c_hat = 0.5;
  double lambda = 0.0;
  std::optional<double> true_c;
};

/// Single-trainer feedback policy pi_F(s,.) with pi_F(a) proportional to
/// C^D(a) (1-C)^(sum_{j!=a} D(j)). Evaluated as softmax of D(a)*logit(C): the
/// (1-C)^(sum_j D(j)) factor is shared by every action.
ActionDistribution trainer_policy(const DeltaRow& delta_row, double c, double eps = kDefaultConsistencyEpsilon);

/// One trainer's view of a state for multi-trainer fusion.
struct TrainerEvidence {
  DeltaRow delta_row;
  double c = 0.5;
};

/// Product of the per-trainer feedback policies, normalized. All rows must
/// share the same support. Throws ContractViolation on an empty or mismatched
/// list.
ActionDistribution multi_trainer_policy(std::span<const TrainerEvidence> trainers,
                                        double eps = kDefaultConsistencyEpsilon);

/// Convenience overload: evidence gathered from aligned tallies and profiles.
ActionDistribution multi_trainer_policy(std::span<const FeedbackTally> tallies,
                                        std::span<const TrainerProfile> profiles, StateId s,
                                        const ActionSet& actions, double eps = kDefaultConsistencyEpsilon);

/// pi proportional to pi_F * pi_R. Falls back to pi_R when the product vanishes
/// over the whole support.
ActionDistribution combine_policies(const ActionDistribution& pi_f, const ActionDistribution& pi_r);

/// Feedback log line: trial,episode,timestep,trainer_id,state_id,action_id,label
struct FeedbackLogRecord {
  std::uint64_t trial = 0;
  std::uint64_t episode = 0;
  FeedbackSignal signal;
};

void write_feedback_log_header(std::ostream& out);
void write_feedback_log_record(std::ostream& out, const FeedbackLogRecord& r);
FeedbackLogRecord parse_feedback_log_record(std::string_view line);

}  // namespace crowdshape
