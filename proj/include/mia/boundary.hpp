#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mia/oracle.hpp"
#include "mia/sample.hpp"

namespace mia {

// What counts as adversarial for a source sample with label `source`.
struct AdvPredicate {
  enum class Kind { kUntargeted, kTargeted };

  Kind kind = Kind::kUntargeted;
  Label source = 0;
  Label target = 0;  // meaningful for kTargeted only

  static AdvPredicate untargeted(Label source);
  // Throws kInvalidArgument when target == source.
  static AdvPredicate targeted(Label source, Label target);

  bool accepts(Label predicted) const {
    return kind == Kind::kUntargeted ? predicted != source
                                     : predicted == target;
  }
};

// HopSkipJump knobs. The probe count at iteration t is
// min(probes_max, ceil(probes_base * sqrt(t))).
struct HsjaParams {
  std::size_t iterations = 50;
  double theta = 0.001;
  std::size_t probes_base = 20;
  std::size_t probes_max = 200;
  std::size_t init_attempts = 1000;
  std::uint64_t seed = 0;
  // 0 disables the budget. Checked between iterations.
  std::uint64_t max_queries = 0;

  void validate() const;
};

// Candidate-filtering schedule: every filter_period iterations the
// candidates are ranked by distance and the best fraction is kept.
struct MultiTargetConfig {
  std::size_t iterations = 50;
  std::size_t filter_period = 10;
  double keep_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  std::size_t iteration = 0;
  std::optional<Label> candidate_class;
  double distance = 0.0;
  std::uint64_t cumulative_queries = 0;
};

// Index 0 of the per-iteration vectors is the state right after the
// initial bisection; index t is the state after iteration t.
struct BoundaryTrace {
  std::vector<double> distances;         // best-so-far, non-increasing
  std::vector<std::uint64_t> queries;    // cumulative
  std::vector<std::size_t> survivors;    // multi-targeted only
  std::vector<TraceRow> rows;            // per candidate, for export
  std::size_t degenerate_gradients = 0;
  bool budget_exceeded = false;
};

struct BoundaryResult {
  Sample x_p;
  double distance = 0.0;
  std::optional<Label> target_class;
  Label adversarial_label = 0;  // oracle label observed at x_p
  BoundaryTrace trace;
  std::uint64_t queries = 0;
};

struct InitialPoint {
  Label label = 0;
  Sample sample;
};

// Binary search on the segment [x, x_adv]. The returned point satisfies
// `pred` and lies within theta * |x_adv - x| of the last non-adversarial
// point. Both endpoints are verified first; throws kInvalidBracket if x is
// adversarial or x_adv is not.
Sample bisect_to_boundary(const Sample& x, const Sample& x_adv,
                          const AdvPredicate& pred,
                          const HardLabelOracle& oracle, double theta);

struct GradientEstimate {
  std::vector<double> direction;  // unit norm
  bool degenerate = false;        // all probes agreed; direction is random
};

GradientEstimate estimate_gradient(const Sample& x_b, const AdvPredicate& pred,
                                   const HardLabelOracle& oracle, double delta,
                                   std::size_t probes, std::uint64_t seed);
GradientEstimate estimate_gradient(const Sample& x_b, const AdvPredicate& pred,
                                   const HardLabelOracle& oracle, double delta,
                                   std::size_t probes, std::mt19937_64& rng);

// Step from x_b along grad by |x_b - x| / sqrt(t), halving until the
// candidate is adversarial. Returns x_b when the step shrinks below 1e-12.
Sample geometric_step(const Sample& x, const Sample& x_b,
                      const std::vector<double>& grad,
                      const AdvPredicate& pred, const HardLabelOracle& oracle,
                      std::size_t t);

struct IterateResult {
  Sample point;
  double distance = 0.0;
  Label label = 0;
  std::size_t grad_queries = 0;
  std::size_t step_queries = 0;
  std::size_t bisect_queries = 0;
  bool degenerate = false;

  std::size_t queries() const {
    return grad_queries + step_queries + bisect_queries;
  }
};

std::size_t probe_count(const HsjaParams& params, std::size_t t);
double probe_radius(const HsjaParams& params, std::size_t dim,
                    double distance);

// One HopSkipJump step from the adversarial iterate x_t (whose oracle label
// is label_t). Keeps the better of x_t and the new boundary point.
IterateResult hsja_iterate(const Sample& x, const Sample& x_t, Label label_t,
                           const AdvPredicate& pred,
                           const HardLabelOracle& oracle,
                           const HsjaParams& params, std::size_t t,
                           std::mt19937_64& rng);

// Random uniform initialization over the domain, then `iterations` steps.
// Throws kPrecondition if oracle(x) != y and kInitFailure if no
// misclassified draw is found within init_attempts.
BoundaryResult untargeted_hsja(const Sample& x, Label y,
                               const HardLabelOracle& oracle,
                               const HsjaParams& params);

// Throws kInvalidInit if oracle(x_init) != target or target == y.
BoundaryResult targeted_hsja(const Sample& x, Label y, Label target,
                             const Sample& x_init,
                             const HardLabelOracle& oracle,
                             const HsjaParams& params);

// Targeted runs for every supplied initial point; returns the shortest.
BoundaryResult all_targeted_hsja(const Sample& x, Label y,
                                 const std::vector<InitialPoint>& inits,
                                 const HardLabelOracle& oracle,
                                 const HsjaParams& params);

// One correctly classified auxiliary sample per class != y, chosen as the
// first hit in a seeded permutation of aux. Throws kInsufficientAux.
// `queries`, when given, receives the number of oracle calls spent.
std::vector<InitialPoint> select_initial_points(Label y, const Dataset& aux,
                                                const HardLabelOracle& oracle,
                                                std::uint64_t seed,
                                                std::uint64_t* queries = nullptr);

// Survivor count after one filter: max(1, floor(keep_fraction * current)).
std::size_t filter_keep_count(std::size_t current, double keep_fraction);

BoundaryResult multi_targeted_hsja(const Sample& x, Label y,
                                   const Dataset& aux,
                                   const HardLabelOracle& oracle,
                                   const MultiTargetConfig& config,
                                   const HsjaParams& params);

// Variant taking precomputed initial points (shared with all-targeted runs).
BoundaryResult multi_targeted_hsja(const Sample& x, Label y,
                                   const std::vector<InitialPoint>& inits,
                                   const HardLabelOracle& oracle,
                                   const MultiTargetConfig& config,
                                   const HsjaParams& params);

}  // namespace mia
