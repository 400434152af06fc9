#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bml/spaces.hpp"

using namespace bml;

namespace {

// Closed form of the sqrt-square distance, independent of the library.
double sqrt_square_ref(double x, double y) { return std::pow(std::sqrt(x) + std::sqrt(y), 2); }

bool has_violation(const AxiomReport& r, const std::string& id, std::vector<Point> witness) {
    return std::any_of(r.violations.begin(), r.violations.end(),
                       [&](const AxiomViolation& v) { return v.axiom_id == id && v.witness == witness; });
}

}  // namespace

TEST(Space, RejectsKBelowOne) {
    EXPECT_THROW(spaces::sqrt_square(0.5), Error);
}

TEST(Space, RejectsDuplicateFinitePoints) {
    EXPECT_THROW(spaces::abs_metric_finite({0.0, 1.0, 1.0}), Error);
}

TEST(Space, RejectsEmptyInterval) {
    EXPECT_THROW(spaces::abs_metric(1.0, 1.0), Error);
}

TEST(Space, AmbientEquality) {
    const auto iv = spaces::sqrt_square();
    EXPECT_TRUE(iv.same_point(0.0, 5e-13));
    EXPECT_FALSE(iv.same_point(0.0, 1e-11));
    const auto fin = spaces::two_point_sigma();
    EXPECT_FALSE(fin.same_point(0.0, 1.0));
    EXPECT_TRUE(fin.same_point(1.0, 1.0));
}

TEST(CheckAxioms, SqrtSquarePassesWithKTwo) {
    const auto report = check_axioms(spaces::sqrt_square(2.0), Sampled{100000, 1});
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.checked_triples, 100000u);
}

TEST(CheckAxioms, SqrtSquareWithKOneHasD3Witness) {
    const auto report = check_axioms(spaces::sqrt_square(1.0), Sampled{1000, 1});
    ASSERT_FALSE(report.passed);
    const auto it = std::find_if(report.violations.begin(), report.violations.end(), [](const AxiomViolation& v) {
        return v.axiom_id == "D3" && v.witness == std::vector<Point>{1.0, 1.0, 0.0};
    });
    ASSERT_NE(it, report.violations.end());
    EXPECT_DOUBLE_EQ(it->lhs, 4.0);
    EXPECT_DOUBLE_EQ(it->rhs, 2.0);
}

TEST(CheckAxioms, ViolationsReEvaluate) {
    const auto space = spaces::sqrt_square(1.0);
    const auto report = check_axioms(space, Sampled{5000, 7});
    ASSERT_FALSE(report.violations.empty());
    for (const auto& v : report.violations) {
        ASSERT_EQ(v.axiom_id, "D3");
        const auto& w = v.witness;
        EXPECT_DOUBLE_EQ(v.lhs, space(w[0], w[1]));
        EXPECT_DOUBLE_EQ(v.rhs, space.k_const() * (space(w[0], w[2]) + space(w[2], w[1])));
        EXPECT_GT(v.lhs, v.rhs);
    }
}

TEST(CheckAxioms, TwoPointSigmaExhaustive) {
    const auto report = check_axioms(spaces::two_point_sigma(), Exhaustive{});
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.checked_triples, 8u);
}

TEST(CheckAxioms, ExhaustiveOnIntervalThrows) {
    try {
        check_axioms(spaces::sqrt_square(), Exhaustive{});
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ExhaustiveOnInfiniteCarrier);
    }
}

TEST(CheckAxioms, DeterministicForSeed) {
    const auto space = spaces::sqrt_square(1.0);
    const auto a = check_axioms(space, Sampled{3000, 42});
    const auto b = check_axioms(space, Sampled{3000, 42});
    ASSERT_EQ(a.violations.size(), b.violations.size());
    for (std::size_t i = 0; i < a.violations.size(); ++i) {
        EXPECT_EQ(a.violations[i].witness, b.violations[i].witness);
        EXPECT_EQ(a.violations[i].lhs, b.violations[i].lhs);
    }
}

TEST(CheckAxioms, DetectsAsymmetryAndD1) {
    const auto asym = spaces::table({}, {{0, 1}, {2, 0}}, 1.0, SpaceKind::BMetricLike);
    EXPECT_TRUE(has_violation(check_axioms(asym, Exhaustive{}), "D2", {0.0, 1.0}));

    const auto zero = spaces::table({}, {{1, 0}, {0, 1}}, 1.0, SpaceKind::BMetricLike);
    EXPECT_TRUE(has_violation(check_axioms(zero, Exhaustive{}), "D1", {0.0, 1.0}));
}

TEST(CheckAxioms, BMetricRequiresZeroSelfDistance) {
    const auto bm = spaces::sqrt_square(2.0, SpaceKind::BMetric);
    const auto report = check_axioms(bm, Sampled{200, 3});
    EXPECT_TRUE(has_violation(report, "D1", {1.0, 1.0}));
    EXPECT_TRUE(check_axioms(spaces::abs_metric(), Sampled{5000, 3}).passed);
    EXPECT_TRUE(check_axioms(spaces::squared_abs(2.0), Sampled{20000, 3}).passed);
    EXPECT_FALSE(check_axioms(spaces::squared_abs(1.0), Sampled{20000, 3}).passed);
}

TEST(CheckAxioms, PartialMetricAxioms) {
    EXPECT_TRUE(check_axioms(spaces::max_partial(), Sampled{20000, 5}).passed);
    // P2 fails for sqrt-square: P(x, x) = 4x > P(x, 0) = x.
    const auto sq = spaces::sqrt_square(2.0, SpaceKind::PartialMetric);
    EXPECT_TRUE(has_violation(check_axioms(sq, Sampled{200, 5}), "P2", {1.0, 0.0}));
    // P1: distinct points with identical self- and cross-distances.
    const auto flat = spaces::table({}, {{1, 1}, {1, 1}}, 1.0, SpaceKind::PartialMetric);
    EXPECT_TRUE(has_violation(check_axioms(flat, Exhaustive{}), "P1", {0.0, 1.0}));
}

TEST(CheckAxioms, MetricLikeFamilies) {
    EXPECT_TRUE(check_axioms(spaces::sum_metric_like(), Sampled{20000, 9}).passed);
}

// Every partial metric on a small grid also satisfies the metric-like axioms
// with K = 1.
TEST(CheckAxioms, PartialMetricImpliesMetricLike) {
    std::size_t partials = 0;
    const std::vector<double> grid{0, 1, 2, 3};
    for (double a : grid) for (double b : grid) for (double c : grid)
    for (double d : grid) for (double e : grid) for (double f : grid) {
        const std::vector<std::vector<double>> m{{a, b, c}, {b, d, e}, {c, e, f}};
        const auto pm = spaces::table({}, m, 1.0, SpaceKind::PartialMetric);
        if (!check_axioms(pm, Exhaustive{}).passed) continue;
        ++partials;
        EXPECT_TRUE(check_axioms(pm.with_kind(SpaceKind::MetricLike), Exhaustive{}).passed);
    }
    EXPECT_GT(partials, 0u);
}

TEST(DSharp, Examples) {
    const auto sq = spaces::sqrt_square();
    EXPECT_DOUBLE_EQ(d_sharp(sq, 1.0, 4.0), std::abs(2 * sqrt_square_ref(1, 4) - sqrt_square_ref(1, 1) -
                                                     sqrt_square_ref(4, 4)));
    EXPECT_DOUBLE_EQ(d_sharp(sq, 1.0, 4.0), 2.0);
    EXPECT_EQ(d_sharp(sq, 0.0, 0.0), 0.0);
}

TEST(DSharp, SymmetricAndZeroOnDiagonal) {
    const auto sq = spaces::sqrt_square();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = u(rng), y = u(rng);
        EXPECT_EQ(d_sharp(sq, x, y), d_sharp(sq, y, x));
        EXPECT_EQ(d_sharp(sq, x, x), 0.0);
    }
}

TEST(DSharp, TwiceDistanceOnBMetrics) {
    const auto m = spaces::table({}, {{0, 1, 3}, {1, 0, 2}, {3, 2, 0}}, 1.5, SpaceKind::BMetric);
    ASSERT_TRUE(check_axioms(m, Exhaustive{}).passed);
    for (Point x : m.finite_carrier().points) {
        for (Point y : m.finite_carrier().points) EXPECT_EQ(d_sharp(m, x, y), 2 * m(x, y));
    }
}

TEST(MinValidK, SqrtSquareRestriction) {
    // Brute-force maximum of D(x,y) / (D(x,z) + D(z,y)) over all 27 triples.
    const std::vector<double> pts{0, 1, 4};
    double oracle = 1.0;
    for (double x : pts) for (double y : pts) for (double z : pts) {
        const double den = sqrt_square_ref(x, z) + sqrt_square_ref(z, y);
        if (den > 0) oracle = std::max(oracle, sqrt_square_ref(x, y) / den);
    }
    ASSERT_EQ(oracle, 2.0);

    const auto restricted = Space("sqrt_square{0,1,4}", FiniteCarrier{pts, {}}, sqrt_square_ref, 2.0,
                                  SpaceKind::BMetricLike);
    EXPECT_EQ(min_valid_k(restricted), 2.0);
}

TEST(MinValidK, MetricAndTwoPoint) {
    EXPECT_EQ(min_valid_k(spaces::abs_metric_finite({0, 1, 2.5, 7})), 1.0);
    EXPECT_EQ(min_valid_k(spaces::two_point_sigma()), 1.0);
}

TEST(MinValidK, NoFiniteK) {
    const auto bad = spaces::table({}, {{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}, 1.0, SpaceKind::BMetricLike);
    try {
        min_valid_k(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoFiniteK);
    }
}

// k* passes D3 exhaustively; shrinking it by a relative 1e-9 exposes a violation.
TEST(MinValidK, IsTight) {
    std::size_t tested = 0;
    const std::vector<double> grid{1, 2, 3};
    for (double a : grid) for (double b : grid) for (double c : grid)
    for (double d : grid) for (double e : grid) for (double f : grid) {
        const std::vector<std::vector<double>> m{{a, b, c}, {b, d, e}, {c, e, f}};
        const auto base = spaces::table({}, m, 1.0, SpaceKind::BMetricLike);
        const double k = min_valid_k(base);
        EXPECT_TRUE(check_axioms(base.with_k(k), Exhaustive{}).passed);
        if (k > 1.0) {
            ++tested;
            const auto tighter = check_axioms(base.with_k(k * (1 - 1e-9)), Exhaustive{});
            EXPECT_TRUE(std::any_of(tighter.violations.begin(), tighter.violations.end(),
                                    [](const AxiomViolation& v) { return v.axiom_id == "D3"; }));
        }
    }
    EXPECT_GT(tested, 0u);
}

TEST(ConvergesTo, GeometricToZero) {
    std::vector<Point> seq;
    for (int n = 0; n < 40; ++n) seq.push_back(std::pow(9.0, -n));
    const auto r = converges_to(spaces::sqrt_square(), seq, 0.0, 1e-9);
    EXPECT_EQ(r.verdict, Convergence::Converged);
    EXPECT_EQ(r.tail_window, 10u);
}

TEST(ConvergesTo, ConstantSequence) {
    const std::vector<Point> seq(16, 3.0);
    const auto r = converges_to(spaces::sqrt_square(), seq, 3.0, 1e-12);
    EXPECT_EQ(r.verdict, Convergence::Converged);
    EXPECT_EQ(r.gap, 0.0);
}

// The limit is D(1, 1) = 4, not zero.
TEST(ConvergesTo, PositiveSelfDistanceLimit) {
    std::vector<Point> seq;
    for (int n = 1; n <= 1000000; ++n) seq.push_back(1.0 + 1.0 / n);
    const auto space = spaces::sqrt_square();
    EXPECT_EQ(converges_to(space, seq, 1.0, 1e-5).verdict, Convergence::Converged);
    // D(1, x_n) itself tends to 4, far from zero.
    EXPECT_NEAR(space(1.0, seq.back()), 4.0, 1e-5);
}

TEST(ConvergesTo, NotConvergedAndShortPrefix) {
    std::vector<Point> far(20);
    for (std::size_t i = 0; i < far.size(); ++i) far[i] = 5.0 + static_cast<double>(i);
    EXPECT_EQ(converges_to(spaces::abs_metric(), far, 0.0, 1e-6).verdict, Convergence::NotConverged);
    const std::vector<Point> shortseq{0.0, 0.0, 0.0};
    EXPECT_EQ(converges_to(spaces::abs_metric(), shortseq, 0.0, 1e-6).verdict, Convergence::Inconclusive);
    EXPECT_THROW(converges_to(spaces::abs_metric(), std::vector<Point>{}, 0.0, 1e-6), Error);
}
