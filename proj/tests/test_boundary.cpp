#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mia/boundary.hpp"
#include "mia/error.hpp"

using namespace mia;

namespace {

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double dist(const Sample& a, const Sample& b) { return l2_distance(a.view(), b.view()); }

// Analytic 1-D threshold: label 1 iff x > 0.5.
HalfPlaneOracle threshold_oracle() { return HalfPlaneOracle({1.0}, -0.5); }

// Vertical boundary x0 = 0.5 in the unit square.
HalfPlaneOracle vertical_oracle() { return HalfPlaneOracle({1.0, 0.0}, -0.5); }

// Three Voronoi cells along x0: class 1 for x0 < 0.4, class 0 for
// 0.4 < x0 < 0.7, class 2 beyond. From x = (0.45, 0.5) the class-1 boundary
// is 0.05 away and the class-2 boundary 0.25 away.
NearestCenterOracle three_cells() {
  return NearestCenterOracle({{0.5, 0.5}, {0.3, 0.5}, {0.9, 0.5}});
}

Dataset points_dataset(const std::vector<std::vector<float>>& pts,
                       const std::vector<Label>& labels, std::size_t n_classes) {
  std::vector<LabeledSample> s;
  for (std::size_t i = 0; i < pts.size(); ++i) s.push_back({Sample::flat(pts[i]), labels[i]});
  return Dataset(std::move(s), n_classes, DatasetRole::kAux);
}

HsjaParams params_with(std::size_t iterations, std::uint64_t seed) {
  HsjaParams p;
  p.iterations = iterations;
  p.seed = seed;
  return p;
}

}  // namespace

TEST(AdvPredicate, UntargetedAndTargeted) {
  const auto u = AdvPredicate::untargeted(2);
  EXPECT_TRUE(u.accepts(0));
  EXPECT_FALSE(u.accepts(2));
  const auto t = AdvPredicate::targeted(2, 1);
  EXPECT_TRUE(t.accepts(1));
  EXPECT_FALSE(t.accepts(0));
  EXPECT_THROW(AdvPredicate::targeted(1, 1), Error);
}

TEST(Params, Validation) {
  HsjaParams p;
  EXPECT_NO_THROW(p.validate());
  p.theta = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = HsjaParams{};
  p.probes_max = 10;
  EXPECT_THROW(p.validate(), Error);
  MultiTargetConfig m;
  m.keep_fraction = 1.5;
  EXPECT_THROW(m.validate(), Error);
}

TEST(ProbeSchedule, CountGrowsWithSqrtAndCaps) {
  HsjaParams p;
  EXPECT_EQ(probe_count(p, 1), 20u);
  EXPECT_EQ(probe_count(p, 4), 40u);
  EXPECT_EQ(probe_count(p, 2), 29u);  // ceil(20 * 1.41421)
  EXPECT_EQ(probe_count(p, 1000), 200u);
  EXPECT_DOUBLE_EQ(probe_radius(p, 4, 0.5), 2.0 * 0.001 * 0.5);
  EXPECT_DOUBLE_EQ(probe_radius(p, 4, 0.0), 1e-6);
}

TEST(Bisection, LocatesOneDimensionalThreshold) {
  const auto oracle = threshold_oracle();
  const double theta = std::ldexp(1.0, -10);
  const auto pred = AdvPredicate::untargeted(0);
  const auto b = bisect_to_boundary(Sample::flat({0.f}), Sample::flat({1.f}), pred, oracle, theta);
  EXPECT_GT(b.data()[0], 0.5f);
  EXPECT_LE(b.data()[0] - 0.5, theta);
  EXPECT_EQ(oracle.query(b, "verify"), 1u);
}

TEST(Bisection, TightBracketReturnsAdversarialEndpoint) {
  const auto oracle = threshold_oracle();
  const auto x = Sample::flat({0.4995f});
  const auto x_adv = Sample::flat({0.5004f});
  const auto b = bisect_to_boundary(x, x_adv, AdvPredicate::untargeted(0), oracle, 0.001);
  EXPECT_EQ(b, x_adv);
  EXPECT_EQ(oracle.ledger().phase("bisect"), 0u);
}

TEST(Bisection, RejectsInvalidBracket) {
  const auto oracle = threshold_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  try {
    bisect_to_boundary(Sample::flat({0.1f}), Sample::flat({0.3f}), pred, oracle, 0.001);
    FAIL() << "expected invalid bracket";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidBracket);
  }
  EXPECT_THROW(
      bisect_to_boundary(Sample::flat({0.9f}), Sample::flat({0.8f}), pred, oracle, 0.001),
      Error);
}

TEST(Gradient, AlignsWithLinearNormal) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x_b = Sample::flat({0.5f, 0.5f});
  const auto g = estimate_gradient(x_b, pred, oracle, 0.01, 1000, 3);
  EXPECT_FALSE(g.degenerate);
  EXPECT_NEAR(norm(g.direction), 1.0, 1e-12);
  EXPECT_GT(g.direction[0], 0.9);
  EXPECT_EQ(oracle.ledger().total(), 1000u);
}

TEST(Gradient, SmallProbeBudgetIsUsuallyAligned) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x_b = Sample::flat({0.5f, 0.5f});
  int aligned = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = estimate_gradient(x_b, pred, oracle, 0.01, 100, seed);
    aligned += g.direction[0] > 0.9;
  }
  EXPECT_GE(aligned, 18);
}

TEST(Gradient, AllProbesAdversarialIsDegenerate) {
  const auto oracle = vertical_oracle();
  const auto g = estimate_gradient(Sample::flat({0.9f, 0.5f}), AdvPredicate::untargeted(0),
                                   oracle, 0.01, 50, 4);
  EXPECT_TRUE(g.degenerate);
  EXPECT_NEAR(norm(g.direction), 1.0, 1e-12);
}

TEST(Gradient, DeterministicForFixedSeed) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x_b = Sample::flat({0.5f, 0.5f});
  const auto a = estimate_gradient(x_b, pred, oracle, 0.01, 4, 42);
  const auto b = estimate_gradient(x_b, pred, oracle, 0.01, 4, 42);
  EXPECT_EQ(a.direction, b.direction);
  EXPECT_EQ(a.degenerate, b.degenerate);
}

TEST(GeometricStep, TrueNormalThenBisectionShortensDistance) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x = Sample::flat({0.2f, 0.3f});
  const auto x_b = Sample::flat({0.5005f, 0.8f});
  const auto cand = geometric_step(x, x_b, {1.0, 0.0}, pred, oracle, 1);
  EXPECT_TRUE(pred.accepts(oracle.query(cand, "verify")));
  const auto next = bisect_to_boundary(x, cand, pred, oracle, 0.001);
  EXPECT_LT(dist(x, next), dist(x, x_b));
}

TEST(GeometricStep, WrongDirectionFallsBackToStart) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x = Sample::flat({0.2f, 0.5f});
  const auto x_b = Sample::flat({std::nextafter(0.5f, 1.f), 0.5f});
  const auto cand = geometric_step(x, x_b, {-1.0, 0.0}, pred, oracle, 1);
  EXPECT_TRUE(pred.accepts(oracle.query(cand, "verify")));
  EXPECT_LT(dist(cand, x_b), 1e-6);
  EXPECT_GE(dist(x, cand), dist(x, x_b) - 1e-6);
}

TEST(GeometricStep, LargeIterationGivesTinyStep) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x = Sample::flat({0.2f, 0.5f});
  const auto x_b = Sample::flat({0.6f, 0.5f});
  const auto cand = geometric_step(x, x_b, {0.0, 1.0}, pred, oracle, 1'000'000'000'000ULL);
  EXPECT_LT(dist(cand, x_b), 1e-5);
}

TEST(Iterate, NeverWorsensAndCountsEveryQuery) {
  const auto oracle = vertical_oracle();
  const auto pred = AdvPredicate::untargeted(0);
  const auto x = Sample::flat({0.2f, 0.3f});
  auto x_t = bisect_to_boundary(x, Sample::flat({0.9f, 0.9f}), pred, oracle, 0.001);
  const HsjaParams params = params_with(10, 1);
  auto rng = std::mt19937_64(5);
  double d = dist(x, x_t);
  for (std::size_t t = 1; t <= 10; ++t) {
    const auto before = oracle.ledger().total();
    const auto r = hsja_iterate(x, x_t, 1, pred, oracle, params, t, rng);
    EXPECT_EQ(oracle.ledger().total() - before, r.queries());
    EXPECT_EQ(r.grad_queries, probe_count(params, t));
    EXPECT_LE(r.distance, d + 1e-12);
    EXPECT_TRUE(pred.accepts(r.label));
    x_t = r.point;
    d = r.distance;
  }
}

TEST(Targeted, HalfPlaneFromFarInitConverges) {
  HalfPlaneOracle oracle({1.0, 1.0}, -1.0);
  const auto x = Sample::flat({0.2f, 0.3f});
  const double analytic = oracle.distance_to_boundary(x);
  const auto r = targeted_hsja(x, 0, 1, Sample::flat({1.f, 1.f}), oracle, params_with(10, 2));
  EXPECT_NEAR(r.distance, analytic, 0.05 * analytic);
  EXPECT_EQ(r.queries, oracle.ledger().total());
  EXPECT_NEAR(dist(x, r.x_p), r.distance, 1e-6);
}

TEST(Untargeted, ConvergesToAnalyticDistance) {
  const auto oracle = vertical_oracle();
  const auto x = Sample::flat({0.2f, 0.5f});
  const double analytic = oracle.distance_to_boundary(x);
  const auto r = untargeted_hsja(x, 0, oracle, params_with(30, 9));
  EXPECT_NEAR(r.distance, analytic, 0.05 * analytic);
  EXPECT_EQ(r.adversarial_label, 1u);
  EXPECT_FALSE(r.target_class.has_value());
  ASSERT_EQ(r.trace.distances.size(), 31u);
  EXPECT_TRUE(std::is_sorted(r.trace.distances.rbegin(), r.trace.distances.rend()));
  EXPECT_TRUE(std::is_sorted(r.trace.queries.begin(), r.trace.queries.end()));
  EXPECT_EQ(r.trace.queries.back(), r.queries);
}

TEST(Untargeted, MisclassifiedInputIsRejected) {
  const auto oracle = vertical_oracle();
  try {
    untargeted_hsja(Sample::flat({0.8f, 0.5f}), 0, oracle, params_with(5, 1));
    FAIL() << "expected precondition error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
  }
}

TEST(Untargeted, InitFailureWhenNoOtherClassIsFound) {
  // Class 1 occupies only x0 > 0.99999, far too small for 3 random draws.
  HalfPlaneOracle oracle({1.0, 0.0}, -0.99999);
  auto p = params_with(5, 1);
  p.init_attempts = 3;
  try {
    untargeted_hsja(Sample::flat({0.2f, 0.5f}), 0, oracle, p);
    FAIL() << "expected init failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInitFailure);
  }
}

TEST(Untargeted, SeedsGiveDifferentLocalMinimaOnMultiClassModel) {
  const auto oracle = three_cells();
  const auto x = Sample::flat({0.45f, 0.5f});
  double lo = INFINITY, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double d = untargeted_hsja(x, 0, oracle, params_with(20, seed)).distance;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  EXPECT_GT(hi, 1.1 * lo);
}

TEST(Untargeted, BudgetStopsTheRun) {
  const auto oracle = vertical_oracle();
  auto p = params_with(50, 3);
  p.max_queries = 200;
  const auto r = untargeted_hsja(Sample::flat({0.2f, 0.5f}), 0, oracle, p);
  EXPECT_TRUE(r.trace.budget_exceeded);
  EXPECT_LT(r.trace.distances.size(), 51u);
  EXPECT_EQ(r.queries, oracle.ledger().total());
}

TEST(Untargeted, SameSeedSameTrace) {
  const auto x = Sample::flat({0.2f, 0.5f});
  const auto a = untargeted_hsja(x, 0, vertical_oracle(), params_with(10, 4));
  const auto b = untargeted_hsja(x, 0, vertical_oracle(), params_with(10, 4));
  EXPECT_EQ(a.trace.distances, b.trace.distances);
  EXPECT_EQ(a.x_p, b.x_p);
}

TEST(Targeted, NearestClassReachesGlobalMinimum) {
  const auto oracle = three_cells();
  const auto x = Sample::flat({0.45f, 0.5f});
  const auto p = params_with(30, 1);
  const auto to1 = targeted_hsja(x, 0, 1, Sample::flat({0.05f, 0.5f}), oracle, p);
  const auto to2 = targeted_hsja(x, 0, 2, Sample::flat({0.95f, 0.5f}), oracle, p);
  const double d1 = oracle.bisector_distance(x, 0, 1);
  const double d2 = oracle.bisector_distance(x, 0, 2);
  EXPECT_NEAR(to1.distance, d1, 0.05 * d1);
  EXPECT_NEAR(to2.distance, d2, 0.05 * d2);
  EXPECT_LT(to1.distance, to2.distance);
  EXPECT_EQ(to1.target_class, std::optional<Label>(1));
}

TEST(Targeted, InvalidInitialPoints) {
  const auto oracle = three_cells();
  const auto x = Sample::flat({0.45f, 0.5f});
  const auto p = params_with(5, 1);
  for (const auto& bad : {x, Sample::flat({0.95f, 0.5f})}) {
    try {
      targeted_hsja(x, 0, 1, bad, oracle, p);
      FAIL() << "expected invalid init";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidInit);
    }
  }
  EXPECT_THROW(targeted_hsja(x, 0, 0, x, oracle, p), Error);
}

TEST(Targeted, SameSeedSameTrace) {
  const auto x = Sample::flat({0.45f, 0.5f});
  const auto p = params_with(10, 6);
  const auto a = targeted_hsja(x, 0, 2, Sample::flat({0.95f, 0.5f}), three_cells(), p);
  const auto b = targeted_hsja(x, 0, 2, Sample::flat({0.95f, 0.5f}), three_cells(), p);
  EXPECT_EQ(a.trace.distances, b.trace.distances);
  EXPECT_EQ(a.trace.queries, b.trace.queries);
}

TEST(AllTargeted, MinimumOverPerClassRuns) {
  const auto x = Sample::flat({0.45f, 0.5f});
  const auto p = params_with(15, 8);
  const std::vector<InitialPoint> inits{{1, Sample::flat({0.05f, 0.5f})},
                                        {2, Sample::flat({0.95f, 0.5f})}};
  const auto all = all_targeted_hsja(x, 0, inits, three_cells(), p);
  double best = INFINITY;
  std::uint64_t total = 0;
  for (const auto& init : inits) {
    const auto r = targeted_hsja(x, 0, init.label, init.sample, three_cells(), p);
    best = std::min(best, r.distance);
    total += r.queries;
  }
  EXPECT_EQ(all.distance, best);
  EXPECT_EQ(all.target_class, std::optional<Label>(1));
  EXPECT_NEAR(double(all.queries), double(total), 0.1 * double(total));
}

TEST(AllTargeted, TwoClassesEqualsSingleTargetedRun) {
  const auto oracle = vertical_oracle();
  const auto x = Sample::flat({0.2f, 0.5f});
  const auto p = params_with(10, 3);
  const auto init = Sample::flat({0.9f, 0.1f});
  const auto all = all_targeted_hsja(x, 0, {{1, init}}, vertical_oracle(), p);
  const auto single = targeted_hsja(x, 0, 1, init, oracle, p);
  EXPECT_EQ(all.distance, single.distance);
  EXPECT_EQ(all.x_p, single.x_p);
  EXPECT_EQ(all.trace.distances, single.trace.distances);
}

TEST(InitialPoints, OneCorrectSamplePerOtherClass) {
  const auto oracle = three_cells();
  // The second class-2 point sits in class 0's cell and must be skipped.
  const auto aux = points_dataset(
      {{0.5f, 0.5f}, {0.6f, 0.5f}, {0.1f, 0.5f}, {0.5f, 0.45f}, {0.95f, 0.5f}},
      {0, 0, 1, 2, 2}, 3);
  std::uint64_t queries = 0;
  const auto inits = select_initial_points(0, aux, oracle, 3, &queries);
  ASSERT_EQ(inits.size(), 2u);
  EXPECT_EQ(inits[0].label, 1u);
  EXPECT_EQ(inits[1].label, 2u);
  EXPECT_EQ(inits[1].sample, Sample::flat({0.95f, 0.5f}));
  EXPECT_EQ(queries, oracle.ledger().total());
  EXPECT_GT(queries, 0u);
}

TEST(InitialPoints, MissingClassIsInsufficientAux) {
  const auto oracle = three_cells();
  const auto aux = points_dataset({{0.5f, 0.5f}, {0.1f, 0.5f}}, {0, 1}, 3);
  try {
    select_initial_points(0, aux, oracle, 1);
    FAIL() << "expected insufficient aux";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientAux);
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

TEST(MultiTargeted, FilterKeepCount) {
  EXPECT_EQ(filter_keep_count(9, 0.5), 4u);
  EXPECT_EQ(filter_keep_count(4, 0.5), 2u);
  EXPECT_EQ(filter_keep_count(2, 0.5), 1u);
  EXPECT_EQ(filter_keep_count(1, 0.5), 1u);
  EXPECT_EQ(filter_keep_count(3, 0.2), 1u);
}

TEST(MultiTargeted, TenClassSurvivorTrace) {
  std::vector<std::vector<double>> centers;
  for (int k = 0; k < 10; ++k) {
    const double a = 2.0 * M_PI * k / 10.0;
    centers.push_back({0.5 + 0.4 * std::cos(a), 0.5 + 0.4 * std::sin(a)});
  }
  NearestCenterOracle oracle(centers);
  std::vector<InitialPoint> inits;
  for (Label k = 1; k < 10; ++k) {
    inits.push_back({k, Sample::flat({float(centers[k][0]), float(centers[k][1])})});
  }
  const auto x = Sample::flat({float(centers[0][0]), float(centers[0][1])});
  MultiTargetConfig mc;
  mc.iterations = 40;
  auto p = params_with(40, 2);
  const auto r = multi_targeted_hsja(x, 0, inits, oracle, mc, p);
  const auto& s = r.trace.survivors;
  ASSERT_EQ(s.size(), 41u);
  EXPECT_EQ(s[0], 9u);
  EXPECT_EQ(s[9], 9u);
  EXPECT_EQ(s[10], 4u);
  EXPECT_EQ(s[20], 2u);
  EXPECT_EQ(s[30], 1u);
  EXPECT_EQ(s[40], 1u);
  std::vector<std::size_t> changes{s[0]};
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] != s[i - 1]) changes.push_back(s[i]);
  }
  EXPECT_EQ(changes, (std::vector<std::size_t>{9, 4, 2, 1}));
}

TEST(MultiTargeted, TwoClassesEqualsTargetedRun) {
  const auto oracle = vertical_oracle();
  const auto x = Sample::flat({0.2f, 0.5f});
  const auto p = params_with(20, 3);
  MultiTargetConfig mc;
  mc.iterations = 20;
  const auto init = Sample::flat({0.9f, 0.1f});
  const auto multi = multi_targeted_hsja(x, 0, {{1, init}}, vertical_oracle(), mc, p);
  const auto single = targeted_hsja(x, 0, 1, init, oracle, p);
  EXPECT_EQ(multi.distance, single.distance);
  EXPECT_EQ(multi.x_p, single.x_p);
  EXPECT_EQ(multi.queries, single.queries);
}

TEST(MultiTargeted, CheaperThanAllTargeted) {
  const auto x = Sample::flat({0.45f, 0.5f});
  const auto p = params_with(30, 4);
  MultiTargetConfig mc;
  mc.iterations = 30;
  const std::vector<InitialPoint> inits{{1, Sample::flat({0.05f, 0.5f})},
                                        {2, Sample::flat({0.95f, 0.5f})}};
  const auto multi = multi_targeted_hsja(x, 0, inits, three_cells(), mc, p);
  const auto all = all_targeted_hsja(x, 0, inits, three_cells(), p);
  EXPECT_LT(multi.queries, all.queries);
  EXPECT_EQ(multi.target_class, std::optional<Label>(1));
  EXPECT_NEAR(multi.distance, all.distance, 0.05 * all.distance);
}

TEST(MultiTargeted, AuxOverloadCountsSelectionQueries) {
  const auto aux = points_dataset({{0.1f, 0.5f}, {0.95f, 0.5f}}, {1, 2}, 3);
  const auto x = Sample::flat({0.45f, 0.5f});
  MultiTargetConfig mc;
  mc.iterations = 10;
  mc.seed = 5;
  const auto oracle = three_cells();
  const auto r = multi_targeted_hsja(x, 0, aux, oracle, mc, params_with(10, 1));
  EXPECT_EQ(r.queries, oracle.ledger().total());
  EXPECT_EQ(r.trace.queries.back(), r.queries);
}
