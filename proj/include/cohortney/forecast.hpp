#pragma once

#include "cohortney/cohorts.hpp"

namespace cohortney {

// Right-continuous empirical survival curve of "time until the next event":
// survival[0] = 1 before the first breakpoint, survival[j] is the share of
// the cohort still silent strictly after breakpoints[j-1]. The law it carries
// is an atom of mass survival[j] - survival[j+1] at each breakpoint plus a
// residual mass survival.back() at infinity.
struct EmpiricalStepFunction {
  double origin = 0;
  std::vector<double> breakpoints;  // strictly increasing
  std::vector<double> survival;     // size breakpoints.size() + 1, from 1.0

  bool operator==(const EmpiricalStepFunction&) const = default;
};

enum class PenaltyKind { linear, tanh, rational };

struct PenaltyConfig {
  PenaltyKind kind = PenaltyKind::linear;
  double beta = 1.0;  // shape of the saturating penalties
  double c = 1.0;     // weight of expected penalized delay against a miss
};

struct ForecastResult {
  std::optional<double> tau_star;  // empty means "never check"
  double risk = 0;
  std::optional<std::size_t> index;  // breakpoint the optimum sits on
};

struct QuantileConfig {
  double alpha = 0.1;  // tolerated miss share
};

inline void validate_penalty(const PenaltyConfig& cfg) {
  if (!(cfg.c > 0)) throw validation_error("penalty weight c must be positive");
  if (cfg.kind != PenaltyKind::linear && !(cfg.beta > 0))
    throw validation_error("penalty shape beta must be positive");
}

// Survival curve of a cohort's first post-node event times; Q is the member
// count, survivors never fire again and keep mass at infinity.
inline EmpiricalStepFunction survival_steps(const Cohort& cohort) {
  std::size_t q = cohort.members.size();
  if (q == 0) throw validation_error("cohort has no members");
  if (cohort.first_event_times.size() + cohort.survivor_count != q)
    throw validation_error("cohort bookkeeping mismatch");
  const auto& fe = cohort.first_event_times;
  EmpiricalStepFunction f;
  f.origin = cohort.key.node;
  f.survival.push_back(1.0);
  for (std::size_t i = 0; i < fe.size();) {
    std::size_t j = i;
    while (j < fe.size() && fe[j] == fe[i]) ++j;
    f.breakpoints.push_back(static_cast<double>(fe[i]));
    f.survival.push_back(
        static_cast<double>(fe.size() - j + cohort.survivor_count) /
        static_cast<double>(q));
    i = j;
  }
  return f;
}

// Penalized-delay weight g(x) in [0, 1] for the saturating kinds; the linear
// kind returns the raw delay.
inline double penalty_g(PenaltyKind kind, double beta, double x) {
  if (x < 0) throw validation_error("penalty argument must be non-negative");
  switch (kind) {
    case PenaltyKind::linear:
      return x;
    case PenaltyKind::tanh:
      if (!(beta > 0)) throw validation_error("beta must be positive");
      return std::tanh(beta * x);
    case PenaltyKind::rational: {
      if (!(beta > 0)) throw validation_error("beta must be positive");
      if (x == 0) return 0;
      // x^beta/(1+x^beta), arranged to avoid overflow for large x.
      if (x > 1) return 1.0 / (1.0 + std::pow(x, -beta));
      double p = std::pow(x, beta);
      return p / (1.0 + p);
    }
  }
  throw internal_error("unreachable penalty kind");
}

// Miss probability plus c times the expected penalized delay when checking at
// time tau: S(tau) = alpha_i + c * sum_{t_j <= tau} g(tau - t_j) * mass_j.
inline double risk(const EmpiricalStepFunction& f, const PenaltyConfig& cfg,
                   double tau) {
  validate_penalty(cfg);
  if (tau < f.origin) throw validation_error("tau precedes the step origin");
  auto upto = static_cast<std::size_t>(
      std::upper_bound(f.breakpoints.begin(), f.breakpoints.end(), tau) -
      f.breakpoints.begin());
  double expected = 0;
  for (std::size_t j = 0; j < upto; ++j) {
    double mass = f.survival[j] - f.survival[j + 1];
    double delay = tau - f.breakpoints[j];
    expected += mass * (cfg.kind == PenaltyKind::linear
                            ? delay
                            : penalty_g(cfg.kind, cfg.beta, delay));
  }
  return f.survival[upto] + cfg.c * expected;
}

// Minimizes the linear-penalty risk. The optimum always sits on a breakpoint,
// so a single pass with running sums suffices; ties keep the earliest
// candidate. Breakpoints at or before min_exclusive are not candidates.
inline ForecastResult solve_linear(
    const EmpiricalStepFunction& f, double c,
    double min_exclusive = -std::numeric_limits<double>::infinity()) {
  if (!(c > 0)) throw validation_error("penalty weight c must be positive");
  ForecastResult best{std::nullopt, f.survival.back(), std::nullopt};
  bool found = false;
  double prefix = 0;  // sum of t_j * mass_j over breakpoints up to here
  for (std::size_t j = 0; j < f.breakpoints.size(); ++j) {
    double t = f.breakpoints[j];
    prefix += t * (f.survival[j] - f.survival[j + 1]);
    if (t <= min_exclusive) continue;
    double s = f.survival[j + 1] + c * (t * (1.0 - f.survival[j + 1]) - prefix);
    if (!found || s < best.risk) {
      best = ForecastResult{t, s, j};
      found = true;
    }
  }
  return best;
}

// Minimizes the saturating-penalty risk over the breakpoints, then applies
// the never threshold: when even the best achievable risk is at least c,
// skipping the check entirely (risk exactly c at infinity times the residual
// mass... i.e. never checking) cannot be beaten, so tau_star stays empty.
inline ForecastResult solve_nonlinear(
    const EmpiricalStepFunction& f, const PenaltyConfig& cfg,
    double min_exclusive = -std::numeric_limits<double>::infinity()) {
  validate_penalty(cfg);
  if (cfg.kind == PenaltyKind::linear)
    throw validation_error("use solve_linear for the linear penalty");
  ForecastResult best{std::nullopt, f.survival.back(), std::nullopt};
  bool found = false;
  for (std::size_t j = 0; j < f.breakpoints.size(); ++j) {
    double t = f.breakpoints[j];
    if (t <= min_exclusive) continue;
    double expected = 0;
    for (std::size_t l = 0; l <= j; ++l)
      expected += (f.survival[l] - f.survival[l + 1]) *
                  penalty_g(cfg.kind, cfg.beta, t - f.breakpoints[l]);
    double s = f.survival[j + 1] + cfg.c * expected;
    if (!found || s < best.risk) {
      best = ForecastResult{t, s, j};
      found = true;
    }
  }
  if (found && !(best.risk < cfg.c)) {
    best.tau_star.reset();
    best.index.reset();
  }
  return best;
}

// Quantile rule: wait for the D-th smallest first event with D = max(1,
// floor(alpha * Q)); if fewer than D candidates remain past min_exclusive the
// answer is "never". Q always counts the full cohort.
inline std::optional<Seconds> solve_quantile(
    const Cohort& cohort, QuantileConfig q,
    double min_exclusive = -std::numeric_limits<double>::infinity()) {
  if (!(q.alpha > 0 && q.alpha < 1))
    throw validation_error("alpha must lie in (0, 1)");
  std::size_t total = cohort.members.size();
  if (total == 0) throw validation_error("cohort has no members");
  const auto& fe = cohort.first_event_times;
  auto begin = std::upper_bound(fe.begin(), fe.end(), min_exclusive,
                                [](double lhs, Seconds rhs) {
                                  return lhs < static_cast<double>(rhs);
                                });
  auto remaining = static_cast<std::size_t>(fe.end() - begin);
  auto d = static_cast<std::size_t>(
      std::max(1.0, std::floor(q.alpha * static_cast<double>(total))));
  if (d > remaining) return std::nullopt;
  return *(begin + static_cast<std::ptrdiff_t>(d) - 1);
}

// Resolves sequence ids to their event data; non-owning, the source vector
// must outlive the store.
class SequenceStore {
 public:
  explicit SequenceStore(const std::vector<EventSequence>& sequences) {
    by_id_.reserve(sequences.size());
    for (const auto& seq : sequences)
      if (!by_id_.emplace(seq.id, &seq).second)
        throw validation_error("duplicate sequence id: " + seq.id);
  }

  const EventSequence* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : it->second;
  }

 private:
  std::unordered_map<std::string, const EventSequence*> by_id_;
};

// Distribution of members' event counts over the window (lo, hi]; every
// cohort member must resolve in the store.
inline std::map<std::size_t, double> event_count_pmf(const CohortIndex& index,
                                                     const Cohort& cohort,
                                                     const SequenceStore& store,
                                                     Seconds lo, Seconds hi) {
  if (lo > hi) throw validation_error("window bounds out of order");
  if (cohort.members.empty()) throw validation_error("cohort has no members");
  std::map<std::size_t, double> pmf;
  double share = 1.0 / static_cast<double>(cohort.members.size());
  for (std::uint32_t ref : cohort.members) {
    const EventSequence* seq = store.find(index.member_id(ref));
    if (seq == nullptr)
      throw internal_error("cohort member missing from sequence store: " +
                           index.member_id(ref));
    auto count = static_cast<std::size_t>(
        std::upper_bound(seq->offsets.begin(), seq->offsets.end(), hi) -
        std::upper_bound(seq->offsets.begin(), seq->offsets.end(), lo));
    pmf[count] += share;
  }
  return pmf;
}

struct Prediction {
  std::optional<double> tau_star;  // next check time; empty means never
  std::optional<double> risk;      // only set by the penalty rules
  double node = 0;                 // grid node the forecast anchored on
  int level = 0;                   // refinement level of the matched cohort
  bool below_grid = false;         // present moment preceded the first node
};

// Quantile-rule forecast for an observed context: nearest cohort at the
// snapped node, then the D-th remaining first event strictly past `now`.
inline Prediction predict(const CohortIndex& index,
                          const ObservationContext& ctx, QuantileConfig q) {
  NearestCohort near = nearest_cohort(index, ctx);
  Prediction p;
  p.node = near.cohort->key.node;
  p.level = near.cohort->key.level;
  p.below_grid = near.below_grid;
  if (auto tau = solve_quantile(*near.cohort, q, static_cast<double>(ctx.now)))
    p.tau_star = static_cast<double>(*tau);
  return p;
}

// Penalty-rule forecast: minimizes the cohort's empirical risk over the
// breakpoints still ahead of `now`.
inline Prediction predict(const CohortIndex& index,
                          const ObservationContext& ctx,
                          const PenaltyConfig& cfg) {
  validate_penalty(cfg);
  NearestCohort near = nearest_cohort(index, ctx);
  EmpiricalStepFunction steps = survival_steps(*near.cohort);
  ForecastResult r =
      cfg.kind == PenaltyKind::linear
          ? solve_linear(steps, cfg.c, static_cast<double>(ctx.now))
          : solve_nonlinear(steps, cfg, static_cast<double>(ctx.now));
  Prediction p;
  p.tau_star = r.tau_star;
  p.risk = r.risk;
  p.node = near.cohort->key.node;
  p.level = near.cohort->key.level;
  p.below_grid = near.below_grid;
  return p;
}

}  // namespace cohortney
