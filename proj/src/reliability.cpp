#include "crowdshape/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace crowdshape {

void EmConfig::validate() const {
  if (i_max < 1) throw ConfigError("EM i_max must be at least 1");
  if (!(tol > 0.0)) throw ConfigError("EM tolerance must be positive");
  if (!(c_init > 0.0 && c_init < 1.0)) throw ConfigError("EM c_init must lie in (0,1)");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("consistency clamp must lie in (0,0.5)");
}

EmPosterior em_e_step(double c_i, const ActionDistribution& p1q_row, const DeltaRow& delta_row, Action a) {
  require(p1q_row.same_support(delta_row), "E-step rows disagree on the action support");
  require(p1q_row.contains(a), "queried action not in the row");
  require(c_i > 0.0 && c_i < 1.0, "E-step consistency must lie in (0,1)");

  // log numerator up to the shared (1-c)^(sum_j D(j)) factor
  const double w = std::log(c_i) - std::log1p(-c_i);
  const double ninf = -std::numeric_limits<double>::infinity();
  std::array<double, kMaxActions> log_num{};
  double top = ninf;
  for (std::size_t i = 0; i < p1q_row.size(); ++i) {
    const double prior = p1q_row.value(i);
    const double d = static_cast<double>(delta_row.at(p1q_row.key(i)));
    log_num[i] = prior > 0.0 ? std::log(prior) + d * w : ninf;
    top = std::max(top, log_num[i]);
  }
  if (!std::isfinite(top)) throw NumericError("E-step partition function vanished");

  double num_a = 0.0;
  double num_rest = 0.0;
  for (std::size_t i = 0; i < p1q_row.size(); ++i) {
    const double v = std::exp(log_num[i] - top);
    if (p1q_row.key(i) == a) num_a += v;
    else num_rest += v;
  }
  const double z = num_a + num_rest;
  return EmPosterior{num_rest / z, num_a / z};
}

double em_m_step(const EmPosterior& posterior, std::int64_t h_plus, std::int64_t h_minus, double eps) {
  require(h_plus >= 0 && h_minus >= 0, "feedback counts must be non-negative");
  require(h_plus + h_minus >= 1, "M-step needs at least one feedback at (s,a)");
  const double n = static_cast<double>(h_plus + h_minus);
  const double c = (posterior.p1 * static_cast<double>(h_plus) + posterior.p0 * static_cast<double>(h_minus)) / n;
  return clamp_consistency(c, eps);
}

EmResult em_estimate(const ActionDistribution& p1q_row, const TallySlice& slice, Action a, const EmConfig& config) {
  config.validate();
  require(p1q_row.same_support(slice), "EM rows disagree on the action support");
  const FeedbackCounts here = slice.at(a);
  require(here.total() >= 1, "em_estimate called without feedback at (s,a)");

  DeltaRow deltas;
  for (std::size_t i = 0; i < slice.size(); ++i) deltas.insert(slice.key(i), slice.value(i).delta());

  EmResult result;
  double c = config.c_init;
  for (int i = 1; i <= config.i_max; ++i) {
    const EmPosterior post = em_e_step(c, p1q_row, deltas, a);
    const double next = em_m_step(post, here.plus, here.minus, config.eps);
    result.iterations = i;
    const bool done = std::abs(next - c) <= config.tol;
    if (i == 1 && done) result.stalled_at_init = true;
    c = next;
    if (done) {
      result.converged = true;
      break;
    }
  }
  result.c = c;
  return result;
}

double precision_q(const QRow& q_row) {
  double sum = 0.0;
  for (std::size_t i = 0; i < q_row.size(); ++i) sum += std::abs(q_row.value(i));
  return sum;
}

double precision_fb(const TallySlice& slice) {
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < slice.size(); ++i) sum += slice.value(i).total();
  return static_cast<double>(sum);
}

double precision_combined(double lambda_q, double lambda_fb) {
  require(lambda_q >= 0.0 && lambda_fb >= 0.0, "precisions must be non-negative");
  return lambda_q * lambda_fb;
}

PrecisionEstimate estimate_precision(const QRow& q_row, const TallySlice& slice) {
  PrecisionEstimate p;
  p.lambda_q = precision_q(q_row);
  p.lambda_fb = precision_fb(slice);
  p.lambda_sa = precision_combined(p.lambda_q, p.lambda_fb);
  return p;
}

AdaptiveStep adaptive_update(const ReliabilityTracker& tracker, double c_sa, double lambda_sa) {
  require(lambda_sa >= 0.0 && std::isfinite(lambda_sa), "lambda_sa must be finite and non-negative");
  require(tracker.lambda >= 0.0 && std::isfinite(tracker.lambda), "tracker precision must be finite and non-negative");
  AdaptiveStep out{0.0, tracker};
  const double denom = lambda_sa + tracker.lambda;
  out.alpha = denom > 0.0 ? lambda_sa / denom : 0.0;
  out.tracker.c = clamp_consistency(tracker.c + out.alpha * (c_sa - tracker.c), tracker.eps);
  out.tracker.lambda = tracker.zeta * tracker.lambda + lambda_sa;
  return out;
}

FeedbackEventDiagnostics observe_feedback_event(TrainerProfile& profile, ReliabilityTracker& tracker, StateId s,
                                                Action a, const QRow& q_row, const ActionDistribution& p1q_row,
                                                const TallySlice& slice, const EmConfig& em_config) {
  FeedbackEventDiagnostics d;
  d.trainer_id = profile.trainer_id;
  d.state = s;
  d.action = a;

  const EmResult em = em_estimate(p1q_row, slice, a, em_config);
  d.c_sa = em.c;
  d.em_iterations = em.iterations;
  d.em_converged = em.converged;
  d.em_stalled = em.stalled_at_init;

  d.precision = estimate_precision(q_row, slice);
  const AdaptiveStep step = adaptive_update(tracker, em.c, d.precision.lambda_sa);
  tracker = step.tracker;
  d.alpha = step.alpha;

  profile.c_hat = tracker.c;
  profile.lambda = tracker.lambda;
  d.c_hat = tracker.c;
  d.lambda = tracker.lambda;
  return d;
}

void write_diagnostics_header(std::ostream& out) {
  out << "trainer_id,episode,state_id,action_id,c_sa,lambda_q,lambda_fb,lambda_sa,alpha,c_hat,lambda\n";
}

void write_diagnostics_row(std::ostream& out, const FeedbackEventDiagnostics& d) {
  out << d.trainer_id << ',' << d.episode << ',' << d.state << ',' << index_of(d.action) << ','
      << format_double(d.c_sa) << ',' << format_double(d.precision.lambda_q) << ','
      << format_double(d.precision.lambda_fb) << ',' << format_double(d.precision.lambda_sa) << ','
      << format_double(d.alpha) << ',' << format_double(d.c_hat) << ',' << format_double(d.lambda) << '\n';
}

}  // namespace crowdshape
