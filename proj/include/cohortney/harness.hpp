#pragma once

#include <random>
#include <variant>

#include "cohortney/forecast.hpp"

namespace cohortney {

// --- Synthetic event-stream generators ---------------------------------------

struct PoissonModel {
  double rate = 0;  // events per second

  bool operator==(const PoissonModel&) const = default;
};

// Homogeneous rate per segment; knots are the segment boundaries, so
// rates.size() == knots.size() + 1.
struct PiecewiseModel {
  std::vector<double> rates;
  std::vector<Seconds> knots;

  bool operator==(const PiecewiseModel&) const = default;
};

enum class EventCountKind { poisson, geometric, fixed };

struct EventCountLaw {
  EventCountKind kind = EventCountKind::fixed;
  double value = 0;  // mean / success probability / exact count

  bool operator==(const EventCountLaw&) const = default;
};

// Every event offset is an independent draw from a two-lognormal mixture:
// with probability k from LN(mu1, sigma1), otherwise LN(mu2, sigma2).
struct DlnModel {
  double k = 1.0;
  double mu1 = 0;
  double sigma1 = 1.0;
  double mu2 = 0;
  double sigma2 = 1.0;
  EventCountLaw count_law;

  bool operator==(const DlnModel&) const = default;
};

using ComponentModel = std::variant<PoissonModel, PiecewiseModel, DlnModel>;

// Weighted choice among components, with a dedicated share of sequences that
// stay completely silent.
struct MixtureModel {
  std::vector<ComponentModel> components;
  std::vector<double> weights;
  double empty_fraction = 0;

  bool operator==(const MixtureModel&) const = default;
};

using GeneratorModel =
    std::variant<PoissonModel, PiecewiseModel, DlnModel, MixtureModel>;

struct GeneratorSpec {
  GeneratorModel model = PoissonModel{1.0 / 3600.0};
  Seconds horizon = 86400;
  std::uint64_t seed = 0;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1p-53;
}

// Exponential gap; -log1p(-u) stays finite because u < 1.
inline double exp_gap(std::mt19937_64& rng, double rate) {
  return -std::log1p(-uniform01(rng)) / rate;
}

inline double standard_normal(std::mt19937_64& rng) {
  double u1 = 1.0 - uniform01(rng);  // in (0, 1], keeps the log finite
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.141592653589793238462643 * u2);
}

inline void validate_count_law(const EventCountLaw& law) {
  switch (law.kind) {
    case EventCountKind::poisson:
      if (!(law.value >= 0)) throw validation_error("count mean must be >= 0");
      return;
    case EventCountKind::geometric:
      if (!(law.value > 0 && law.value <= 1))
        throw validation_error("geometric parameter must lie in (0, 1]");
      return;
    case EventCountKind::fixed:
      if (!(law.value >= 0)) throw validation_error("fixed count must be >= 0");
      return;
  }
  throw internal_error("unreachable count law kind");
}

inline std::size_t sample_count(const EventCountLaw& law,
                                std::mt19937_64& rng) {
  switch (law.kind) {
    case EventCountKind::poisson: {
      // Inversion by sequential search; means here are small.
      double u = uniform01(rng);
      double p = std::exp(-law.value);
      double cum = p;
      std::size_t n = 0;
      while (u > cum && n < 100000) {
        ++n;
        p *= law.value / static_cast<double>(n);
        cum += p;
      }
      return n;
    }
    case EventCountKind::geometric: {
      if (law.value == 1.0) return 0;
      double u = uniform01(rng);
      return static_cast<std::size_t>(
          std::floor(std::log1p(-u) / std::log1p(-law.value)));
    }
    case EventCountKind::fixed:
      return static_cast<std::size_t>(std::llround(law.value));
  }
  throw internal_error("unreachable count law kind");
}

inline void append_poisson(std::vector<Seconds>& out, double rate, double lo,
                           double hi, std::mt19937_64& rng) {
  if (hi <= lo) return;
  double t = lo;
  while (true) {
    t += exp_gap(rng, rate);
    if (t > hi) break;
    out.push_back(std::max<Seconds>(1, std::llround(t)));
  }
}

inline void validate_model(const GeneratorModel& model, Seconds horizon);

inline void validate_component(const ComponentModel& model, Seconds horizon) {
  std::visit([&](const auto& m) { validate_model(GeneratorModel{m}, horizon); },
             model);
}

inline void validate_model(const GeneratorModel& model, Seconds horizon) {
  if (horizon <= 0) throw validation_error("horizon must be positive");
  if (const auto* p = std::get_if<PoissonModel>(&model)) {
    if (!(p->rate > 0)) throw validation_error("rate must be positive");
  } else if (const auto* pw = std::get_if<PiecewiseModel>(&model)) {
    if (pw->rates.size() != pw->knots.size() + 1)
      throw validation_error("need one rate per segment (knots + 1)");
    for (double r : pw->rates)
      if (!(r > 0)) throw validation_error("rate must be positive");
    for (std::size_t i = 0; i < pw->knots.size(); ++i) {
      if (pw->knots[i] <= 0 || pw->knots[i] >= horizon)
        throw validation_error("knots must lie strictly inside the horizon");
      if (i > 0 && pw->knots[i] <= pw->knots[i - 1])
        throw validation_error("knots must be strictly increasing");
    }
  } else if (const auto* d = std::get_if<DlnModel>(&model)) {
    if (!(d->k >= 0 && d->k <= 1))
      throw validation_error("mixing share k must lie in [0, 1]");
    if (!(d->sigma1 > 0) || !(d->sigma2 > 0))
      throw validation_error("lognormal sigmas must be positive");
    validate_count_law(d->count_law);
  } else if (const auto* mix = std::get_if<MixtureModel>(&model)) {
    if (mix->components.empty())
      throw validation_error("mixture needs at least one component");
    if (mix->weights.size() != mix->components.size())
      throw validation_error("need one weight per component");
    double total = 0;
    for (double w : mix->weights) {
      if (!(w >= 0)) throw validation_error("weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw validation_error("weights must sum to 1");
    if (!(mix->empty_fraction >= 0 && mix->empty_fraction <= 1))
      throw validation_error("empty_fraction must lie in [0, 1]");
    for (const auto& c : mix->components) validate_component(c, horizon);
  }
}

inline std::vector<Seconds> sample_offsets(const GeneratorModel& model,
                                           Seconds horizon,
                                           std::mt19937_64& rng) {
  std::vector<Seconds> out;
  double h = static_cast<double>(horizon);
  if (const auto* p = std::get_if<PoissonModel>(&model)) {
    append_poisson(out, p->rate, 0.0, h, rng);
  } else if (const auto* pw = std::get_if<PiecewiseModel>(&model)) {
    double lo = 0.0;
    for (std::size_t seg = 0; seg < pw->rates.size(); ++seg) {
      double hi = seg < pw->knots.size()
                      ? static_cast<double>(pw->knots[seg])
                      : h;
      append_poisson(out, pw->rates[seg], lo, hi, rng);
      lo = hi;
    }
  } else if (const auto* d = std::get_if<DlnModel>(&model)) {
    std::size_t n = sample_count(d->count_law, rng);
    for (std::size_t i = 0; i < n; ++i) {
      bool first = uniform01(rng) < d->k;
      double mu = first ? d->mu1 : d->mu2;
      double sigma = first ? d->sigma1 : d->sigma2;
      double x = std::exp(mu + sigma * standard_normal(rng));
      Seconds offset = std::max<Seconds>(1, std::llround(x));
      if (offset <= horizon) out.push_back(offset);
    }
    std::sort(out.begin(), out.end());
  } else if (const auto* mix = std::get_if<MixtureModel>(&model)) {
    if (uniform01(rng) < mix->empty_fraction) return out;
    double u = uniform01(rng);
    double cum = 0;
    std::size_t pick = mix->components.size() - 1;
    for (std::size_t i = 0; i < mix->components.size(); ++i) {
      cum += mix->weights[i];
      if (u < cum) {
        pick = i;
        break;
      }
    }
    std::visit(
        [&](const auto& m) {
          out = sample_offsets(GeneratorModel{m}, horizon, rng);
        },
        mix->components[pick]);
  }
  return out;
}

}  // namespace detail

// Seed-deterministic synthetic sequences: each sequence draws from its own
// stream derived from (seed, position), so the output is independent of
// thread count and identical across runs.
inline std::vector<EventSequence> generate(const GeneratorSpec& spec,
                                           std::size_t count) {
  detail::validate_model(spec.model, spec.horizon);
  std::vector<EventSequence> out(count);
  detail::parallel_for(count, [&](std::size_t i) {
    std::mt19937_64 rng(detail::derive_seed(spec.seed, i));
    out[i].id = "s" + std::to_string(i);
    out[i].start_epoch = 0;
    out[i].offsets = detail::sample_offsets(spec.model, spec.horizon, rng);
  });
  return out;
}

// --- Polling policies --------------------------------------------------------

enum class StopReason { never_tau, cohort_sparse, schedule_exhausted, horizon };

// One polling run over a sequence: when each peek happened, which events each
// peek captured (those in (previous peek, this peek]), and why polling ended.
struct PeekTrace {
  std::vector<Seconds> peeks;
  std::vector<std::vector<Seconds>> captured;
  StopReason stopped_reason = StopReason::never_tau;
};

namespace detail {

inline std::vector<Seconds> window_events(const EventSequence& seq, Seconds lo,
                                          Seconds hi) {
  auto begin = std::upper_bound(seq.offsets.begin(), seq.offsets.end(), lo);
  auto end = std::upper_bound(seq.offsets.begin(), seq.offsets.end(), hi);
  return {begin, end};
}

}  // namespace detail

inline std::vector<Seconds> default_schedule_hours() {
  return {1, 3, 12, 24, 168, 744};
}

struct DeterministicOptions {
  bool reset_on_hit = true;          // a capturing peek restarts the schedule
  std::optional<Seconds> horizon;    // no peek beyond this offset
};

// Fixed-schedule baseline: peek at base + schedule offsets; a capturing peek
// moves the base there and restarts the schedule, and running through the
// whole schedule without a capture ends the trace.
inline PeekTrace run_deterministic(const EventSequence& seq,
                                   const std::vector<Seconds>& schedule_hours,
                                   const DeterministicOptions& opts = {}) {
  if (schedule_hours.empty()) throw validation_error("empty schedule");
  for (std::size_t i = 0; i < schedule_hours.size(); ++i)
    if (schedule_hours[i] <= (i == 0 ? 0 : schedule_hours[i - 1]))
      throw validation_error("schedule must be strictly increasing");
  validate_offsets(seq.offsets);

  PeekTrace trace;
  Seconds base = 0;
  Seconds prev = 0;
  std::size_t idx = 0;
  while (true) {
    Seconds peek = base + schedule_hours[idx] * 3600;
    if (opts.horizon && peek > *opts.horizon) {
      trace.stopped_reason = StopReason::horizon;
      break;
    }
    std::vector<Seconds> got = detail::window_events(seq, prev, peek);
    bool hit = !got.empty();
    trace.peeks.push_back(peek);
    trace.captured.push_back(std::move(got));
    prev = peek;
    if (hit && opts.reset_on_hit) {
      base = peek;
      idx = 0;
      continue;
    }
    if (++idx == schedule_hours.size()) {
      trace.stopped_reason = StopReason::schedule_exhausted;
      break;
    }
  }
  return trace;
}

namespace detail {

inline EventSequence prefix_of(const EventSequence& seq, Seconds t) {
  EventSequence p;
  p.id = seq.id;
  p.start_epoch = seq.start_epoch;
  auto end = std::upper_bound(seq.offsets.begin(), seq.offsets.end(), t);
  p.offsets.assign(seq.offsets.begin(), end);
  return p;
}

// What one policy step decided: either the next peek time, or the reason to
// stop right now.
struct PolicyStep {
  std::optional<Seconds> tau;
  StopReason stop = StopReason::never_tau;
};

template <typename SolveNext>
PeekTrace cohort_policy_loop(const EventSequence& seq, Seconds horizon,
                             SolveNext&& next_peek) {
  validate_offsets(seq.offsets);
  if (horizon <= 0) throw validation_error("horizon must be positive");
  PeekTrace trace;
  Seconds t = 0;
  while (true) {
    PolicyStep step;
    try {
      step = next_peek(detail::prefix_of(seq, t), t);
    } catch (const no_cohort_error&) {
      trace.stopped_reason = StopReason::cohort_sparse;
      break;
    }
    if (!step.tau) {
      trace.stopped_reason = step.stop;
      break;
    }
    Seconds tau = *step.tau;
    if (tau > horizon) {
      trace.stopped_reason = StopReason::horizon;
      break;
    }
    trace.peeks.push_back(tau);
    trace.captured.push_back(detail::window_events(seq, t, tau));
    t = tau;
  }
  return trace;
}

}  // namespace detail

// Cohort polling with the quantile rule: at each moment, match the observed
// prefix to its nearest cohort, take the D-th remaining first event as the
// next peek, and keep going until the rule says never, the matched cohort's
// firing share W/Q falls under alpha, or the horizon cuts the loop short.
inline PeekTrace run_cohort_policy(const CohortIndex& index,
                                   const EventSequence& seq, QuantileConfig rule,
                                   Seconds horizon) {
  if (index.cohorts.empty()) throw validation_error("empty cohort index");
  return detail::cohort_policy_loop(
      seq, horizon,
      [&](const EventSequence& prefix, Seconds t) -> detail::PolicyStep {
        NearestCohort near =
            nearest_cohort(index, ObservationContext{prefix, t});
        const Cohort& c = *near.cohort;
        auto tau = solve_quantile(c, rule, static_cast<double>(t));
        std::size_t fired = c.first_event_times.size();
        bool sparse = fired > 0 &&
                      static_cast<double>(fired) /
                              static_cast<double>(c.members.size()) <
                          rule.alpha;
        if (sparse) return {std::nullopt, StopReason::cohort_sparse};
        if (!tau) return {std::nullopt, StopReason::never_tau};
        return {*tau, StopReason::never_tau};
      });
}

// Cohort polling with a penalty rule: the next peek minimizes the matched
// cohort's empirical risk over breakpoints still ahead.
inline PeekTrace run_cohort_policy(const CohortIndex& index,
                                   const EventSequence& seq,
                                   const PenaltyConfig& rule, Seconds horizon) {
  if (index.cohorts.empty()) throw validation_error("empty cohort index");
  validate_penalty(rule);
  return detail::cohort_policy_loop(
      seq, horizon,
      [&](const EventSequence& prefix, Seconds t) -> detail::PolicyStep {
        NearestCohort near =
            nearest_cohort(index, ObservationContext{prefix, t});
        EmpiricalStepFunction steps = survival_steps(*near.cohort);
        ForecastResult r =
            rule.kind == PenaltyKind::linear
                ? solve_linear(steps, rule.c, static_cast<double>(t))
                : solve_nonlinear(steps, rule, static_cast<double>(t));
        if (!r.tau_star) return {std::nullopt, StopReason::never_tau};
        return {static_cast<Seconds>(std::llround(*r.tau_star)),
                StopReason::never_tau};
      });
}

// --- Metrics -----------------------------------------------------------------

// Per-sequence evaluation of one trace. Only the peek count is always
// defined; everything else needs at least one peek, and the per-comment delay
// additionally needs at least one capturing peek.
struct MetricRecord {
  double abs_intensity = 0;               // N, the number of peeks
  std::optional<double> delay_post;       // total delay summed over captures
  std::optional<double> delay_comment;    // sum of per-peek mean delays
  std::optional<double> rel_intensity;    // mean inverse inter-peek gap
  std::optional<double> probability;      // share of peeks that captured
};

inline MetricRecord compute_metrics(const PeekTrace& trace) {
  MetricRecord m;
  std::size_t n = trace.peeks.size();
  m.abs_intensity = static_cast<double>(n);
  if (n == 0) return m;
  if (trace.captured.size() != n)
    throw validation_error("trace captures out of step with peeks");

  double total_delay = 0;
  double comment_delay = 0;
  bool any_capture = false;
  double inverse_gaps = 0;
  std::size_t capturing = 0;
  Seconds prev = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& got = trace.captured[i];
    double peek = static_cast<double>(trace.peeks[i]);
    double sum = 0;
    for (Seconds theta : got) sum += peek - static_cast<double>(theta);
    total_delay += sum;
    if (!got.empty()) {
      any_capture = true;
      ++capturing;
      comment_delay += sum / static_cast<double>(got.size());
    }
    inverse_gaps += 1.0 / static_cast<double>(trace.peeks[i] - prev);
    prev = trace.peeks[i];
  }
  m.delay_post = total_delay;
  if (any_capture) m.delay_comment = comment_delay;
  m.rel_intensity = inverse_gaps / static_cast<double>(n);
  m.probability = static_cast<double>(capturing) / static_cast<double>(n);
  return m;
}

struct SummaryStats {
  double mean = 0;
  double median = 0;
  double q95 = 0;
};

// Mean, median (midpoint of the two central order statistics when even), and
// the nearest-rank 95th percentile (the ceil(0.95 n)-th order statistic).
inline SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) throw validation_error("nothing to summarize");
  std::sort(values.begin(), values.end());
  SummaryStats s;
  double total = 0;
  for (double v : values) total += v;
  std::size_t n = values.size();
  s.mean = total / static_cast<double>(n);
  s.median = n % 2 == 1 ? values[n / 2]
                        : (values[n / 2 - 1] + values[n / 2]) / 2.0;
  auto rank = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(n)));
  s.q95 = values[rank - 1];
  return s;
}

struct SweepOptions {
  Seconds horizon = 1296000;  // policy peeks never pass this offset
};

// One aggregation row: a metric's summary across the test traces for one
// alpha. Sequences whose trace leaves the metric undefined are excluded, and
// a metric nobody defines keeps empty statistics (but the row is emitted).
struct MetricsRow {
  std::optional<double> alpha;
  std::string metric;
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> q95;
  std::size_t n_sequences = 0;
};

namespace detail {

constexpr const char* kMetricNames[] = {"delay_post", "delay_comment",
                                        "rel_intensity", "probability",
                                        "abs_intensity"};

inline std::optional<double> metric_value(const MetricRecord& m,
                                          std::size_t which) {
  switch (which) {
    case 0: return m.delay_post;
    case 1: return m.delay_comment;
    case 2: return m.rel_intensity;
    case 3: return m.probability;
    default: return m.abs_intensity;
  }
}

}  // namespace detail

inline std::vector<MetricsRow> summarize_records(
    const std::vector<MetricRecord>& records, std::optional<double> alpha) {
  std::vector<MetricsRow> rows;
  for (std::size_t which = 0; which < 5; ++which) {
    MetricsRow row;
    row.alpha = alpha;
    row.metric = detail::kMetricNames[which];
    std::vector<double> values;
    for (const auto& rec : records)
      if (auto v = detail::metric_value(rec, which)) values.push_back(*v);
    row.n_sequences = values.size();
    if (!values.empty()) {
      SummaryStats s = summarize(std::move(values));
      row.mean = s.mean;
      row.median = s.median;
      row.q95 = s.q95;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Runs the quantile policy over the test set once per alpha and summarizes
// each metric across sequences.
inline std::vector<MetricsRow> aggregate_sweep(
    const std::vector<EventSequence>& test, const CohortIndex& index,
    const std::vector<double>& alphas, const SweepOptions& opts = {}) {
  if (test.empty()) throw validation_error("empty test set");
  if (alphas.empty()) throw validation_error("no alphas to sweep");
  for (double a : alphas)
    if (!(a > 0 && a < 1))
      throw validation_error("alpha must lie in (0, 1)");
  std::vector<MetricsRow> rows;
  for (double a : alphas) {
    std::vector<MetricRecord> records(test.size());
    detail::parallel_for(test.size(), [&](std::size_t i) {
      records[i] = compute_metrics(
          run_cohort_policy(index, test[i], QuantileConfig{a}, opts.horizon));
    });
    auto batch = summarize_records(records, a);
    rows.insert(rows.end(), std::make_move_iterator(batch.begin()),
                std::make_move_iterator(batch.end()));
  }
  return rows;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "alpha,metric,mean,median,q95,n_sequences\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? real_text(*v) : std::string();
  };
  for (const auto& row : rows)
    out << cell(row.alpha) << ',' << row.metric << ',' << cell(row.mean) << ','
        << cell(row.median) << ',' << cell(row.q95) << ',' << row.n_sequences
        << '\n';
  if (!out) throw io_error("write failure on " + path);
}

}  // namespace cohortney
