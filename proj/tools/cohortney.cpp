// Command-line front end: clustering, forecasting, synthetic data, policy
// evaluation, and spectrum export. Exit codes: 0 success, 1 validation,
// 2 I/O, 3 internal. All diagnostics go to stderr as
// "cohortney: <category>: <message>".

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cohortney/harness.hpp"
#include "cohortney/spectrum.hpp"

namespace {

using namespace cohortney;

// --- shared option bundles ---------------------------------------------------

struct GridFlags {
  Seconds t_base = 86400;
  double gamma = 1.04;
  Seconds t_horizon = 1296000;
  Seconds t_min = -1;  // -1: follow delta
  Seconds delta = 600;
  std::size_t min_cluster = 100;

  GridConfig config() const {
    GridConfig cfg;
    cfg.t_base = t_base;
    cfg.gamma = gamma;
    cfg.t_horizon = t_horizon;
    cfg.t_min = t_min < 0 ? delta : t_min;
    cfg.delta = delta;
    cfg.min_cluster = min_cluster;
    return cfg;
  }
};

void add_grid_flags(CLI::App& cmd, GridFlags& g) {
  cmd.add_option("--t-base", g.t_base, "Grid node at exponent zero (seconds)")
      ->capture_default_str();
  cmd.add_option("--gamma", g.gamma, "Ratio between consecutive grid nodes")
      ->capture_default_str();
  cmd.add_option("--t-h,--t-horizon", g.t_horizon,
                 "Largest admissible grid node (seconds)")
      ->capture_default_str();
  cmd.add_option("--t-min", g.t_min,
                 "Smallest admissible grid node (seconds; default: --delta)");
  cmd.add_option("--delta", g.delta, "Minimum partition cell width (seconds)")
      ->capture_default_str();
  cmd.add_option("--min-cluster", g.min_cluster,
                 "Smallest cohort kept by clustering")
      ->capture_default_str();
}

// --- small parsers -----------------------------------------------------------

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t begin = 0;
  while (true) {
    std::size_t end = text.find(sep, begin);
    parts.push_back(text.substr(begin, end - begin));
    if (end == std::string::npos) return parts;
    begin = end + 1;
  }
}

double parse_real(const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw validation_error("not a number: '" + text + "'");
  }
}

// "lo:hi:step" sweeps from lo in step increments while below hi + step/2;
// a comma list (or single value) is taken verbatim.
std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> alphas;
  if (text.find(':') != std::string::npos) {
    auto parts = split(text, ':');
    if (parts.size() != 3)
      throw validation_error("sweep must look like lo:hi:step");
    double lo = parse_real(parts[0]);
    double hi = parse_real(parts[1]);
    double step = parse_real(parts[2]);
    if (!(step > 0)) throw validation_error("sweep step must be positive");
    if (!(lo < hi)) throw validation_error("sweep needs lo < hi");
    for (int i = 0;; ++i) {
      double a = lo + step * i;
      if (a >= hi + step / 2) break;
      alphas.push_back(a);
    }
  } else {
    for (const auto& part : split(text, ',')) alphas.push_back(parse_real(part));
  }
  for (double a : alphas)
    if (!(a > 0 && a < 1))
      throw validation_error("alpha must lie in (0, 1), got " + real_text(a));
  return alphas;
}

std::vector<Seconds> parse_schedule(const std::string& text) {
  std::vector<Seconds> hours;
  for (const auto& part : split(text, ',')) {
    double v = parse_real(part);
    hours.push_back(static_cast<Seconds>(std::llround(v)));
  }
  return hours;
}

// --- generator spec JSON -----------------------------------------------------

EventCountLaw count_law_from_json(const nlohmann::json& j) {
  EventCountLaw law;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "poisson")
    law.kind = EventCountKind::poisson;
  else if (kind == "geometric")
    law.kind = EventCountKind::geometric;
  else if (kind == "fixed")
    law.kind = EventCountKind::fixed;
  else
    throw validation_error("unknown count law kind: " + kind);
  law.value = j.at("value").get<double>();
  return law;
}

ComponentModel component_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "poisson") {
    return PoissonModel{j.at("rate").get<double>()};
  }
  if (kind == "piecewise") {
    PiecewiseModel m;
    m.rates = j.at("rates").get<std::vector<double>>();
    m.knots = j.at("knots").get<std::vector<Seconds>>();
    return m;
  }
  if (kind == "dln") {
    DlnModel m;
    m.k = j.at("k").get<double>();
    m.mu1 = j.at("mu1").get<double>();
    m.sigma1 = j.at("sigma1").get<double>();
    m.mu2 = j.at("mu2").get<double>();
    m.sigma2 = j.at("sigma2").get<double>();
    m.count_law = count_law_from_json(j.at("count"));
    return m;
  }
  throw validation_error("unknown model kind: " + kind);
}

GeneratorModel model_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "mixture") {
    MixtureModel m;
    for (const auto& c : j.at("components"))
      m.components.push_back(component_from_json(c));
    m.weights = j.at("weights").get<std::vector<double>>();
    m.empty_fraction = j.value("empty_fraction", 0.0);
    return m;
  }
  return std::visit([](auto m) { return GeneratorModel{std::move(m)}; },
                    component_from_json(j));
}

GeneratorModel load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open for reading: " + path);
  nlohmann::json j;
  try {
    in >> j;
    // Either a bare model object or {"model": {...}}.
    return model_from_json(j.contains("model") ? j.at("model") : j);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("bad model spec " + path + ": " + e.what());
  }
}

// --- subcommand settings -----------------------------------------------------

struct ClusterArgs {
  std::string input;
  std::string out;
  GridFlags grid;
};

struct PredictArgs {
  std::string index;
  std::string sequence;
  Seconds now = 0;
  std::string rule = "quantile";
  double alpha = 0.1;
  double c = 1.0;
  double beta = 1.0;
};

struct SimulateArgs {
  std::string out;
  std::size_t count = 0;
  Seconds horizon = 1296000;
  std::uint64_t seed = 0;
  double rate = 0;
  std::string spec_path;
  std::string id_prefix = "s";
};

struct EvaluateArgs {
  std::string index;
  std::string test;
  std::string alphas = "0.05:0.5:0.05";
  std::string policy = "cohort";
  std::string schedule = "1,3,12,24,168,744";
  Seconds horizon = 1296000;
  std::string out;
};

struct SpectrumArgs {
  std::string input;
  std::string out;
  double sigma = 0;  // 0: median pairwise distance
  std::size_t start = 0;
  std::size_t groups = 1;
  std::string rule = "rule1";
};

// --- subcommand bodies -------------------------------------------------------

int run_cluster(const ClusterArgs& args) {
  std::vector<EventSequence> training = read_jsonl(args.input);
  CohortIndex index = build_cohorts(training, args.grid.config());
  save_index(args.out, index);
  std::cout << "nodes: " << index.grid.nodes.size() << "\n"
            << "cohorts: " << index.cohorts.size() << "\n"
            << "sequences: " << index.ids.size() << "\n";
  return 0;
}

int run_predict(const PredictArgs& args) {
  CohortIndex index = load_index(args.index);
  std::vector<EventSequence> sequences = read_jsonl(args.sequence);
  if (sequences.empty()) throw validation_error("no sequences to forecast");
  for (const auto& seq : sequences) {
    ObservationContext ctx{seq, args.now};
    Prediction p;
    if (args.rule == "quantile") {
      p = predict(index, ctx, QuantileConfig{args.alpha});
    } else {
      PenaltyConfig cfg;
      cfg.beta = args.beta;
      cfg.c = args.c;
      if (args.rule == "linear")
        cfg.kind = PenaltyKind::linear;
      else if (args.rule == "tanh")
        cfg.kind = PenaltyKind::tanh;
      else if (args.rule == "rational")
        cfg.kind = PenaltyKind::rational;
      else
        throw validation_error("unknown rule: " + args.rule);
      p = predict(index, ctx, cfg);
    }
    std::cout << "id=" << seq.id << " tau_star="
              << (p.tau_star ? real_text(*p.tau_star) : std::string("never"))
              << " risk=" << (p.risk ? real_text(*p.risk) : std::string("-"))
              << " node=" << real_text(p.node) << " level=" << p.level
              << " below_grid=" << (p.below_grid ? 1 : 0) << "\n";
  }
  return 0;
}

int run_simulate(const SimulateArgs& args) {
  if (args.count == 0) throw validation_error("--count must be positive");
  if (args.spec_path.empty() == (args.rate == 0))
    throw validation_error("give exactly one of --rate or --spec");
  GeneratorSpec spec;
  spec.model = args.spec_path.empty() ? GeneratorModel{PoissonModel{args.rate}}
                                      : load_model_spec(args.spec_path);
  spec.horizon = args.horizon;
  spec.seed = args.seed;
  std::vector<EventSequence> sequences = generate(spec, args.count);
  if (args.id_prefix != "s")
    for (std::size_t i = 0; i < sequences.size(); ++i)
      sequences[i].id = args.id_prefix + std::to_string(i);
  write_jsonl(args.out, sequences);
  std::cout << "sequences: " << sequences.size() << "\n";
  return 0;
}

int run_evaluate(const EvaluateArgs& args) {
  CohortIndex index = load_index(args.index);
  std::vector<EventSequence> test = read_jsonl(args.test);
  if (test.empty()) throw validation_error("empty test set");
  std::vector<MetricsRow> rows;
  if (args.policy == "cohort") {
    SweepOptions opts;
    opts.horizon = args.horizon;
    rows = aggregate_sweep(test, index, parse_alphas(args.alphas), opts);
  } else if (args.policy == "deterministic") {
    std::vector<Seconds> schedule = parse_schedule(args.schedule);
    DeterministicOptions opts;
    opts.horizon = args.horizon;
    std::vector<MetricRecord> records(test.size());
    detail::parallel_for(test.size(), [&](std::size_t i) {
      records[i] = compute_metrics(run_deterministic(test[i], schedule, opts));
    });
    rows = summarize_records(records, std::nullopt);
  } else {
    throw validation_error("unknown policy: " + args.policy);
  }
  write_metrics_csv(args.out, rows);
  std::cout << "rows: " << rows.size() << "\n";
  return 0;
}

int run_spectrum(const SpectrumArgs& args) {
  std::vector<EventSequence> sequences = read_jsonl(args.input);
  if (sequences.size() < 2)
    throw validation_error("need at least two sequences");
  double sigma =
      args.sigma > 0 ? args.sigma : median_pairwise_distance(sequences);
  if (!(sigma > 0))
    throw validation_error(
        "median pairwise distance is zero; pass --sigma explicitly");
  ConnectionMatrix matrix = similarity_matrix(sequences, sigma);
  SpectrumOrdering ord = build_spectrum(matrix, args.start);
  SplitRule rule;
  if (args.rule == "rule1")
    rule = SplitRule::rule1;
  else if (args.rule == "rule2")
    rule = SplitRule::rule2;
  else
    throw validation_error("unknown split rule: " + args.rule);
  auto groups = split_spectrum(ord, args.groups, rule);

  std::vector<std::size_t> group_of(sequences.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t e : groups[g]) group_of[e] = g;

  std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + args.out);
  out << "position,element,k_value,group\n";
  for (std::size_t pos = 0; pos < ord.order.size(); ++pos) {
    std::size_t e = ord.order[pos];
    out << pos << ',' << sequences[e].id << ','
        << (pos == 0 ? std::string() : real_text(ord.spectrum[pos - 1])) << ','
        << group_of[e] << '\n';
  }
  if (!out) throw io_error("write failure on " + args.out);
  std::cout << "elements: " << ord.order.size() << "\n"
            << "sigma: " << real_text(sigma) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-sequence cohort clustering and next-event forecasting"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read options from a key=value file (flags take precedence)");

  ClusterArgs cluster_args;
  CLI::App* cluster = app.add_subcommand(
      "cluster", "Build a cohort index from training sequences");
  cluster->add_option("--input", cluster_args.input, "Training JSONL")
      ->required();
  cluster->add_option("--out", cluster_args.out, "Index file to write")
      ->required();
  add_grid_flags(*cluster, cluster_args.grid);

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand(
      "predict", "Forecast next-event observation times for sequences");
  predict->add_option("--index", predict_args.index, "Cohort index file")
      ->required();
  predict->add_option("--sequence", predict_args.sequence, "Observed JSONL")
      ->required();
  predict->add_option("--now", predict_args.now,
                      "Present moment (seconds since sequence start)")
      ->required();
  predict
      ->add_option("--rule", predict_args.rule,
                   "quantile | linear | tanh | rational")
      ->capture_default_str();
  predict->add_option("--alpha", predict_args.alpha, "Quantile miss share")
      ->capture_default_str();
  predict->add_option("--c", predict_args.c, "Penalty weight")
      ->capture_default_str();
  predict->add_option("--beta", predict_args.beta, "Penalty shape")
      ->capture_default_str();

  SimulateArgs simulate_args;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate synthetic event sequences");
  simulate->add_option("--out", simulate_args.out, "JSONL file to write")
      ->required();
  simulate->add_option("--count", simulate_args.count, "Number of sequences")
      ->required();
  simulate->add_option("--horizon", simulate_args.horizon,
                       "Generation horizon (seconds)")
      ->capture_default_str();
  simulate->add_option("--seed", simulate_args.seed, "Random seed")
      ->capture_default_str();
  simulate->add_option("--rate", simulate_args.rate,
                       "Shorthand: homogeneous rate (events/second)");
  simulate->add_option("--spec", simulate_args.spec_path,
                       "JSON model spec (see README)");
  simulate->add_option("--id-prefix", simulate_args.id_prefix,
                       "Sequence id prefix")
      ->capture_default_str();

  EvaluateArgs evaluate_args;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Run a polling policy over test sequences and summarize");
  evaluate->add_option("--index", evaluate_args.index, "Cohort index file")
      ->required();
  evaluate->add_option("--test", evaluate_args.test, "Test JSONL")->required();
  evaluate
      ->add_option("--alphas", evaluate_args.alphas,
                   "lo:hi:step sweep or comma list")
      ->capture_default_str();
  evaluate
      ->add_option("--policy", evaluate_args.policy,
                   "cohort | deterministic")
      ->capture_default_str();
  evaluate
      ->add_option("--schedule", evaluate_args.schedule,
                   "Deterministic schedule (hours, comma list)")
      ->capture_default_str();
  evaluate
      ->add_option("--horizon", evaluate_args.horizon,
                   "Policy horizon (seconds)")
      ->capture_default_str();
  evaluate->add_option("--out", evaluate_args.out, "Metrics CSV to write")
      ->required();

  SpectrumArgs spectrum_args;
  CLI::App* spectrum = app.add_subcommand(
      "spectrum", "Order sequences by similarity and split into groups");
  spectrum->add_option("--input", spectrum_args.input, "Sequences JSONL")
      ->required();
  spectrum->add_option("--out", spectrum_args.out, "Spectrum CSV to write")
      ->required();
  spectrum->add_option("--sigma", spectrum_args.sigma,
                       "Kernel scale (default: median pairwise distance)");
  spectrum->add_option("--start", spectrum_args.start, "Start element index")
      ->capture_default_str();
  spectrum->add_option("--groups", spectrum_args.groups, "Number of groups")
      ->capture_default_str();
  spectrum->add_option("--rule", spectrum_args.rule, "rule1 | rule2")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "cohortney: validation: " << e.what() << "\n";
    return 1;
  }

  try {
    if (cluster->parsed()) return run_cluster(cluster_args);
    if (predict->parsed()) return run_predict(predict_args);
    if (simulate->parsed()) return run_simulate(simulate_args);
    if (evaluate->parsed()) return run_evaluate(evaluate_args);
    if (spectrum->parsed()) return run_spectrum(spectrum_args);
    std::cerr << "cohortney: validation: no command given\n";
    return 1;
  } catch (const io_error& e) {
    std::cerr << "cohortney: io: " << e.what() << "\n";
    return 2;
  } catch (const internal_error& e) {
    std::cerr << "cohortney: internal: " << e.what() << "\n";
    return 3;
  } catch (const validation_error& e) {
    std::cerr << "cohortney: validation: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cohortney: internal: " << e.what() << "\n";
    return 3;
  }
}
