#include "mia/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mia/error.hpp"
#include "rng.hpp"

namespace mia {

namespace {

constexpr std::string_view kPhaseCheck = "check";
constexpr std::string_view kPhaseInit = "init";
constexpr std::string_view kPhaseBisect = "bisect";
constexpr std::string_view kPhaseGrad = "grad";
constexpr std::string_view kPhaseStep = "step";
constexpr double kMinStep = 1e-12;
constexpr double kMinProbeRadius = 1e-6;

// Counts the queries issued by one driver on top of the oracle's ledger.
class Prober {
 public:
  explicit Prober(const HardLabelOracle& oracle) : oracle_(oracle) {}
  Label operator()(const Sample& x, std::string_view phase) {
    ++count_;
    return oracle_.query(x, phase);
  }
  std::uint64_t count() const { return count_; }

 private:
  const HardLabelOracle& oracle_;
  std::uint64_t count_ = 0;
};

std::vector<float> clamp01(std::vector<double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
  }
  // float rounding of values just inside [0,1] stays inside.
  for (float& f : out) f = std::clamp(f, 0.0f, 1.0f);
  return out;
}

Sample blend(const Sample& a, const Sample& b, double alpha) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (1.0 - alpha) * a.data()[i] + alpha * b.data()[i];
  }
  return Sample(clamp01(std::move(v)), a.shape());
}

Sample displaced(const Sample& base, const std::vector<double>& dir, double scale) {
  std::vector<double> v(base.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = base.data()[i] + scale * dir[i];
  return Sample(clamp01(std::move(v)), base.shape());
}

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  detail::Normal normal;
  std::vector<double> u(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : u) {
      v = normal(rng);
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  return u;
}

struct Bisected {
  Sample point;
  Label label;
  std::size_t queries;
};

// Assumes x is not adversarial and x_adv (with label adv_label) is.
Bisected bisect(const Sample& x, const Sample& x_adv, Label adv_label,
                const AdvPredicate& pred, Prober& probe, double theta) {
  const double length = l2_distance(x.view(), x_adv.view());
  if (length <= theta) return {x_adv, adv_label, 0};
  double low = 0.0, high = 1.0;
  Label high_label = adv_label;
  std::size_t queries = 0;
  while (high - low > theta) {
    const double mid = 0.5 * (low + high);
    const Label label = probe(blend(x, x_adv, mid), kPhaseBisect);
    ++queries;
    if (pred.accepts(label)) {
      high = mid;
      high_label = label;
    } else {
      low = mid;
    }
  }
  if (high == 1.0) return {x_adv, adv_label, queries};
  return {blend(x, x_adv, high), high_label, queries};
}

GradientEstimate gradient(const Sample& x_b, const AdvPredicate& pred,
                          Prober& probe, double delta, std::size_t probes,
                          std::mt19937_64& rng) {
  const std::size_t dim = x_b.size();
  std::vector<std::vector<double>> dirs(probes);
  std::vector<double> phi(probes);
  for (std::size_t b = 0; b < probes; ++b) {
    dirs[b] = random_unit(dim, rng);
    phi[b] = pred.accepts(probe(displaced(x_b, dirs[b], delta), kPhaseGrad)) ? 1.0 : -1.0;
  }
  const double mean = std::accumulate(phi.begin(), phi.end(), 0.0) /
                      static_cast<double>(probes);
  std::vector<double> sum(dim, 0.0);
  for (std::size_t b = 0; b < probes; ++b) {
    const double w = phi[b] - mean;
    for (std::size_t i = 0; i < dim; ++i) sum[i] += w * dirs[b][i];
  }
  double norm = 0.0;
  for (double v : sum) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) return {random_unit(dim, rng), true};
  for (double& v : sum) v /= norm;
  return {std::move(sum), false};
}

struct Stepped {
  Sample point;
  Label label;
  std::size_t queries;
};

Stepped step(const Sample& x, const Sample& x_b, Label label_b,
             const std::vector<double>& grad, const AdvPredicate& pred,
             Prober& probe, std::size_t t) {
  double xi = l2_distance(x_b.view(), x.view()) /
              std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1)));
  std::size_t queries = 0;
  while (xi >= kMinStep) {
    Sample candidate = displaced(x_b, grad, xi);
    const Label label = probe(candidate, kPhaseStep);
    ++queries;
    if (pred.accepts(label)) return {std::move(candidate), label, queries};
    xi *= 0.5;
  }
  return {x_b, label_b, queries};
}

IterateResult iterate(const Sample& x, const Sample& x_t, Label label_t,
                      const AdvPredicate& pred, Prober& probe,
                      const HsjaParams& params, std::size_t t,
                      std::mt19937_64& rng) {
  const double d_t = l2_distance(x_t.view(), x.view());
  const std::size_t probes = probe_count(params, t);
  const double delta = probe_radius(params, x.size(), d_t);
  auto grad = gradient(x_t, pred, probe, delta, probes, rng);
  auto stepped = step(x, x_t, label_t, grad.direction, pred, probe, t);
  auto bisected = bisect(x, stepped.point, stepped.label, pred, probe, params.theta);
  IterateResult out{x_t, d_t, label_t, probes, stepped.queries, bisected.queries,
                    grad.degenerate};
  const double d_new = l2_distance(bisected.point.view(), x.view());
  if (d_new < d_t) {
    out.point = std::move(bisected.point);
    out.distance = d_new;
    out.label = bisected.label;
  }
  return out;
}

// Per-candidate state shared by the targeted and candidate-filtering
// drivers, so that both follow identical trajectories for a given class.
struct Candidate {
  std::optional<Label> target;
  AdvPredicate pred;
  Sample point;
  Label label = 0;
  double distance = 0.0;
  std::mt19937_64 rng;
  BoundaryTrace trace;
};

std::mt19937_64 candidate_stream(const HsjaParams& params, std::optional<Label> target) {
  return detail::make_stream(params.seed, target ? 1 + static_cast<std::uint64_t>(*target) : 0);
}

void record(Candidate& c, std::size_t t, std::uint64_t cumulative) {
  c.trace.distances.push_back(c.distance);
  c.trace.queries.push_back(cumulative);
  c.trace.rows.push_back({t, c.target, c.distance, cumulative});
}

void advance(Candidate& c, const Sample& x, Prober& probe, const HsjaParams& params,
             std::size_t t) {
  auto next = iterate(x, c.point, c.label, c.pred, probe, params, t, c.rng);
  if (next.degenerate) ++c.trace.degenerate_gradients;
  c.point = std::move(next.point);
  c.label = next.label;
  c.distance = next.distance;
}

bool over_budget(const HsjaParams& params, const Prober& probe) {
  return params.max_queries != 0 && probe.count() >= params.max_queries;
}

void require_label(Prober& probe, const Sample& x, Label y) {
  const Label got = probe(x, kPhaseCheck);
  if (got != y) {
    throw Error(ErrorCode::kPrecondition,
                "sample is classified as " + std::to_string(got) + ", expected " +
                    std::to_string(y));
  }
}

Candidate start_candidate(const Sample& x, Label y, const InitialPoint& init,
                          Prober& probe, const HsjaParams& params) {
  Candidate c{init.label, AdvPredicate::targeted(y, init.label), init.sample,
              init.label, 0.0, candidate_stream(params, init.label), {}};
  auto start = bisect(x, init.sample, init.label, c.pred, probe, params.theta);
  c.point = std::move(start.point);
  c.label = start.label;
  c.distance = l2_distance(c.point.view(), x.view());
  return c;
}

BoundaryResult finish(Candidate&& c, std::uint64_t queries) {
  BoundaryResult r;
  r.x_p = std::move(c.point);
  r.distance = c.distance;
  r.target_class = c.target;
  r.adversarial_label = c.label;
  r.trace = std::move(c.trace);
  r.queries = queries;
  return r;
}

std::vector<InitialPoint> select_initial_points(Label y, const Dataset& aux,
                                                Prober& probe, std::size_t n_classes,
                                                std::uint64_t seed) {
  std::vector<std::size_t> order(aux.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = detail::make_stream(seed, 0xa0c);
  detail::shuffle(order.begin(), order.end(), rng);
  std::vector<std::optional<std::size_t>> chosen(n_classes);
  std::size_t missing = n_classes - (y < n_classes ? 1 : 0);
  for (std::size_t idx : order) {
    if (missing == 0) break;
    const auto& item = aux[idx];
    if (item.label == y || item.label >= n_classes || chosen[item.label]) continue;
    if (probe(item.sample, kPhaseInit) == item.label) {
      chosen[item.label] = idx;
      --missing;
    }
  }
  std::vector<InitialPoint> inits;
  std::string absent;
  for (Label c = 0; c < n_classes; ++c) {
    if (c == y) continue;
    if (chosen[c]) {
      inits.push_back({c, aux[*chosen[c]].sample});
    } else {
      absent += (absent.empty() ? "" : ",") + std::to_string(c);
    }
  }
  if (!absent.empty()) {
    throw Error(ErrorCode::kInsufficientAux,
                "auxiliary data has no correctly classified sample for class(es) " + absent);
  }
  return inits;
}

}  // namespace

AdvPredicate AdvPredicate::untargeted(Label source) {
  return {Kind::kUntargeted, source, 0};
}

AdvPredicate AdvPredicate::targeted(Label source, Label target) {
  if (source == target) {
    throw Error(ErrorCode::kInvalidArgument, "target class equals source label");
  }
  return {Kind::kTargeted, source, target};
}

void HsjaParams::validate() const {
  if (iterations < 1) throw Error(ErrorCode::kInvalidArgument, "T must be >= 1");
  if (!(theta > 0.0 && theta < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "theta must be in (0,1)");
  }
  if (probes_base < 4) throw Error(ErrorCode::kInvalidArgument, "B0 must be >= 4");
  if (probes_max < probes_base) {
    throw Error(ErrorCode::kInvalidArgument, "Bmax must be >= B0");
  }
  if (init_attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "init_attempts must be >= 1");
  }
}

void MultiTargetConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::kInvalidArgument, "T must be >= 1");
  if (filter_period < 1 || filter_period > iterations) {
    throw Error(ErrorCode::kInvalidArgument, "T_f must be in [1, T]");
  }
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "r must be in (0,1)");
  }
}

std::size_t probe_count(const HsjaParams& params, std::size_t t) {
  const double n = std::ceil(static_cast<double>(params.probes_base) *
                             std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1))));
  return std::min(params.probes_max, static_cast<std::size_t>(n));
}

double probe_radius(const HsjaParams& params, std::size_t dim, double distance) {
  return std::max(kMinProbeRadius,
                  std::sqrt(static_cast<double>(dim)) * params.theta * distance);
}

Sample bisect_to_boundary(const Sample& x, const Sample& x_adv,
                          const AdvPredicate& pred, const HardLabelOracle& oracle,
                          double theta) {
  if (!(theta > 0.0 && theta < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "theta must be in (0,1)");
  }
  if (x.size() != x_adv.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bracket endpoints differ in size");
  }
  Prober probe(oracle);
  if (pred.accepts(probe(x, kPhaseCheck))) {
    throw Error(ErrorCode::kInvalidBracket, "source end of the bracket is adversarial");
  }
  const Label adv = probe(x_adv, kPhaseCheck);
  if (!pred.accepts(adv)) {
    throw Error(ErrorCode::kInvalidBracket, "adversarial end of the bracket is not adversarial");
  }
  return bisect(x, x_adv, adv, pred, probe, theta).point;
}

GradientEstimate estimate_gradient(const Sample& x_b, const AdvPredicate& pred,
                                   const HardLabelOracle& oracle, double delta,
                                   std::size_t probes, std::uint64_t seed) {
  auto rng = detail::make_stream(seed, 0x96ad);
  return estimate_gradient(x_b, pred, oracle, delta, probes, rng);
}

GradientEstimate estimate_gradient(const Sample& x_b, const AdvPredicate& pred,
                                   const HardLabelOracle& oracle, double delta,
                                   std::size_t probes, std::mt19937_64& rng) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be > 0");
  if (probes < 4) throw Error(ErrorCode::kInvalidArgument, "need at least 4 probes");
  Prober probe(oracle);
  return gradient(x_b, pred, probe, delta, probes, rng);
}

Sample geometric_step(const Sample& x, const Sample& x_b,
                      const std::vector<double>& grad, const AdvPredicate& pred,
                      const HardLabelOracle& oracle, std::size_t t) {
  if (grad.size() != x_b.size()) {
    throw Error(ErrorCode::kInvalidArgument, "gradient size mismatch");
  }
  Prober probe(oracle);
  return step(x, x_b, 0, grad, pred, probe, t).point;
}

IterateResult hsja_iterate(const Sample& x, const Sample& x_t, Label label_t,
                           const AdvPredicate& pred, const HardLabelOracle& oracle,
                           const HsjaParams& params, std::size_t t,
                           std::mt19937_64& rng) {
  if (!pred.accepts(label_t)) {
    throw Error(ErrorCode::kInvalidBracket, "iterate is not adversarial");
  }
  Prober probe(oracle);
  return iterate(x, x_t, label_t, pred, probe, params, t, rng);
}

BoundaryResult untargeted_hsja(const Sample& x, Label y, const HardLabelOracle& oracle,
                               const HsjaParams& params) {
  params.validate();
  Prober probe(oracle);
  require_label(probe, x, y);
  Candidate c{std::nullopt, AdvPredicate::untargeted(y), x, y, 0.0,
              candidate_stream(params, std::nullopt), {}};
  bool found = false;
  for (std::size_t attempt = 0; attempt < params.init_attempts && !found; ++attempt) {
    std::vector<float> v(x.size());
    for (float& f : v) f = static_cast<float>(detail::uniform01(c.rng));
    Sample draw(std::move(v), x.shape());
    const Label label = probe(draw, kPhaseInit);
    if (c.pred.accepts(label)) {
      c.point = std::move(draw);
      c.label = label;
      found = true;
    }
  }
  if (!found) {
    throw Error(ErrorCode::kInitFailure,
                "no misclassified random point in " +
                    std::to_string(params.init_attempts) + " draws");
  }
  auto start = bisect(x, c.point, c.label, c.pred, probe, params.theta);
  c.point = std::move(start.point);
  c.label = start.label;
  c.distance = l2_distance(c.point.view(), x.view());
  record(c, 0, probe.count());
  for (std::size_t t = 1; t <= params.iterations; ++t) {
    if (over_budget(params, probe)) {
      c.trace.budget_exceeded = true;
      break;
    }
    advance(c, x, probe, params, t);
    record(c, t, probe.count());
  }
  return finish(std::move(c), probe.count());
}

BoundaryResult targeted_hsja(const Sample& x, Label y, Label target,
                             const Sample& x_init, const HardLabelOracle& oracle,
                             const HsjaParams& params) {
  params.validate();
  if (target == y) {
    throw Error(ErrorCode::kInvalidInit, "target class equals source label");
  }
  Prober probe(oracle);
  require_label(probe, x, y);
  const Label init_label = probe(x_init, kPhaseCheck);
  if (init_label != target) {
    throw Error(ErrorCode::kInvalidInit,
                "initial point for class " + std::to_string(target) +
                    " is classified as " + std::to_string(init_label));
  }
  Candidate c = start_candidate(x, y, {target, x_init}, probe, params);
  record(c, 0, probe.count());
  for (std::size_t t = 1; t <= params.iterations; ++t) {
    if (over_budget(params, probe)) {
      c.trace.budget_exceeded = true;
      break;
    }
    advance(c, x, probe, params, t);
    record(c, t, probe.count());
  }
  return finish(std::move(c), probe.count());
}

BoundaryResult all_targeted_hsja(const Sample& x, Label y,
                                 const std::vector<InitialPoint>& inits,
                                 const HardLabelOracle& oracle,
                                 const HsjaParams& params) {
  if (inits.empty()) {
    throw Error(ErrorCode::kInvalidInit, "no initial points supplied");
  }
  std::vector<BoundaryResult> runs;
  runs.reserve(inits.size());
  for (const auto& init : inits) {
    runs.push_back(targeted_hsja(x, y, init.label, init.sample, oracle, params));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].distance < runs[best].distance) best = i;
  }
  BoundaryTrace trace;
  std::uint64_t offset = 0;
  std::size_t steps = 0;
  for (const auto& run : runs) steps = std::max(steps, run.trace.distances.size());
  trace.distances.assign(steps, INFINITY);
  trace.queries.assign(steps, 0);
  for (const auto& run : runs) {
    const auto& rt = run.trace;
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t k = std::min(t, rt.distances.size() - 1);
      trace.distances[t] = std::min(trace.distances[t], rt.distances[k]);
      trace.queries[t] += rt.queries[k];
    }
    for (auto row : rt.rows) {
      row.cumulative_queries += offset;
      trace.rows.push_back(row);
    }
    trace.degenerate_gradients += rt.degenerate_gradients;
    trace.budget_exceeded = trace.budget_exceeded || rt.budget_exceeded;
    offset += run.queries;
  }
  BoundaryResult out = std::move(runs[best]);
  out.trace = std::move(trace);
  out.queries = offset;
  return out;
}

std::vector<InitialPoint> select_initial_points(Label y, const Dataset& aux,
                                                const HardLabelOracle& oracle,
                                                std::uint64_t seed,
                                                std::uint64_t* queries) {
  Prober probe(oracle);
  auto inits = select_initial_points(y, aux, probe, oracle.n_classes(), seed);
  if (queries) *queries = probe.count();
  return inits;
}

std::size_t filter_keep_count(std::size_t current, double keep_fraction) {
  const auto k = static_cast<std::size_t>(
      std::floor(keep_fraction * static_cast<double>(current)));
  return std::max<std::size_t>(1, k);
}

BoundaryResult multi_targeted_hsja(const Sample& x, Label y, const Dataset& aux,
                                   const HardLabelOracle& oracle,
                                   const MultiTargetConfig& config,
                                   const HsjaParams& params) {
  config.validate();
  params.validate();
  Prober probe(oracle);
  const auto inits = select_initial_points(y, aux, probe, oracle.n_classes(), config.seed);
  auto result = multi_targeted_hsja(x, y, inits, oracle, config, params);
  result.queries += probe.count();
  for (auto& q : result.trace.queries) q += probe.count();
  for (auto& row : result.trace.rows) row.cumulative_queries += probe.count();
  return result;
}

BoundaryResult multi_targeted_hsja(const Sample& x, Label y,
                                   const std::vector<InitialPoint>& inits,
                                   const HardLabelOracle& oracle,
                                   const MultiTargetConfig& config,
                                   const HsjaParams& params) {
  config.validate();
  params.validate();
  if (inits.empty()) {
    throw Error(ErrorCode::kInsufficientAux, "no initial points supplied");
  }
  Prober probe(oracle);
  require_label(probe, x, y);
  std::vector<Candidate> alive;
  alive.reserve(inits.size());
  for (const auto& init : inits) {
    if (init.label == y) {
      throw Error(ErrorCode::kInvalidInit, "initial point has the source label");
    }
    const Label got = probe(init.sample, kPhaseCheck);
    if (got != init.label) {
      throw Error(ErrorCode::kInvalidInit,
                  "initial point for class " + std::to_string(init.label) +
                      " is classified as " + std::to_string(got));
    }
    alive.push_back(start_candidate(x, y, init, probe, params));
  }
  BoundaryTrace trace;
  auto snapshot = [&](std::size_t t) {
    double best = INFINITY;
    for (const auto& c : alive) {
      best = std::min(best, c.distance);
      trace.rows.push_back({t, c.target, c.distance, probe.count()});
    }
    if (!trace.distances.empty()) best = std::min(best, trace.distances.back());
    trace.distances.push_back(best);
    trace.queries.push_back(probe.count());
    trace.survivors.push_back(alive.size());
  };
  snapshot(0);
  for (std::size_t t = 1; t <= config.iterations; ++t) {
    if (over_budget(params, probe)) {
      trace.budget_exceeded = true;
      break;
    }
    for (auto& c : alive) advance(c, x, probe, params, t);
    if (t % config.filter_period == 0 && alive.size() > 1) {
      std::stable_sort(alive.begin(), alive.end(),
                       [](const Candidate& a, const Candidate& b) {
                         return a.distance < b.distance;
                       });
      const std::size_t keep = filter_keep_count(alive.size(), config.keep_fraction);
      for (std::size_t i = keep; i < alive.size(); ++i) {
        trace.degenerate_gradients += alive[i].trace.degenerate_gradients;
      }
      alive.resize(keep);
    }
    snapshot(t);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < alive.size(); ++i) {
    if (alive[i].distance < alive[best].distance) best = i;
  }
  for (const auto& c : alive) trace.degenerate_gradients += c.trace.degenerate_gradients;
  Candidate winner = std::move(alive[best]);
  winner.trace = std::move(trace);
  return finish(std::move(winner), probe.count());
}

}  // namespace mia
