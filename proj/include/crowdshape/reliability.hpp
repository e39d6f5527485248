#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "crowdshape/common.hpp"
#include "crowdshape/feedback.hpp"

namespace crowdshape {

struct EmConfig {
  int i_max = 100;
  double tol = 1e-6;
  double c_init = 0.5;
  double eps = kDefaultConsistencyEpsilon;

  void validate() const;
};

/// Posterior over the latent "a is the optimal action" indicator.
struct EmPosterior {
  double p0 = 0.5;
  double p1 = 0.5;
};

struct EmResult {
  double c = 0.5;
  int iterations = 0;
  bool converged = false;
  /// The first M-step left C within tol of c_init: the symmetric fixed point.
  bool stalled_at_init = false;
};

/// E-step for the queried action `a`. Each action a' contributes the numerator
/// P1Q(a') * c^D(a') * (1-c)^(sum_{j!=a'} D(j)); P1 is a's share and P0 the rest.
/// Throws NumericError if every numerator underflows.
EmPosterior em_e_step(double c_i, const ActionDistribution& p1q_row, const DeltaRow& delta_row, Action a);

/// M-step: (P1 h+ + P0 h-) / (h+ + h-), clamped to [eps, 1-eps].
double em_m_step(const EmPosterior& posterior, std::int64_t h_plus, std::int64_t h_minus,
                 double eps = kDefaultConsistencyEpsilon);

/// Alternates E and M steps from config.c_init until |dC| <= tol or i_max
/// iterations; running out of iterations is reported, not thrown.
EmResult em_estimate(const ActionDistribution& p1q_row, const TallySlice& slice, Action a,
                     const EmConfig& config = {});

double precision_q(const QRow& q_row);
double precision_fb(const TallySlice& slice);
double precision_combined(double lambda_q, double lambda_fb);

struct PrecisionEstimate {
  double lambda_q = 0.0;
  double lambda_fb = 0.0;
  double lambda_sa = 0.0;
};

PrecisionEstimate estimate_precision(const QRow& q_row, const TallySlice& slice);

/// Precision-weighted running average of per-pair consistency estimates.
struct ReliabilityTracker {
  double c = 0.5;
  double lambda = 0.0;
  double zeta = 0.98;
  double eps = kDefaultConsistencyEpsilon;
};

struct AdaptiveStep {
  double alpha = 0.0;
  ReliabilityTracker tracker;
};

/// alpha = l_sa / (l_sa + l); C' = C + alpha (c_sa - C); l' = zeta l + l_sa.
/// alpha is 0 when both precisions are 0.
AdaptiveStep adaptive_update(const ReliabilityTracker& tracker, double c_sa, double lambda_sa);

/// Per-event diagnostics, one CSV row each.
struct FeedbackEventDiagnostics {
  std::string trainer_id;
  std::uint64_t episode = 0;
  StateId state = 0;
  Action action = Action::North;
  double c_sa = 0.5;
  PrecisionEstimate precision;
  double alpha = 0.0;
  double c_hat = 0.5;
  double lambda = 0.0;
  int em_iterations = 0;
  bool em_converged = false;
  bool em_stalled = false;
};

/// Runs EM for (s,a) and folds the result into the trainer's tracker.
/// `q_row`, `p1q_row` and `slice` must describe state s over the same
/// actions; the slice already includes the feedback just recorded.
FeedbackEventDiagnostics observe_feedback_event(TrainerProfile& profile, ReliabilityTracker& tracker, StateId s,
                                                Action a, const QRow& q_row, const ActionDistribution& p1q_row,
                                                const TallySlice& slice, const EmConfig& em_config = {});

void write_diagnostics_header(std::ostream& out);
void write_diagnostics_row(std::ostream& out, const FeedbackEventDiagnostics& d);

}  // namespace crowdshape
