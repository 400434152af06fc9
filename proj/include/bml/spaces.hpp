#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bml/core.hpp"

namespace bml {

// ---------------------------------------------------------------------------
// Carriers
// ---------------------------------------------------------------------------

/// Ordered list of distinct points. Labels are optional display names.
struct FiniteCarrier {
    std::vector<Point> points;
    std::vector<std::string> labels;

    std::size_t size() const noexcept { return points.size(); }

    std::optional<std::size_t> index_of(Point p) const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i] == p) return i;
        }
        return std::nullopt;
    }
};

/// Real interval [lower, upper]; upper may be +infinity.
struct IntervalCarrier {
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();

    bool unbounded() const noexcept { return std::isinf(upper); }
    bool contains(Point p) const noexcept { return p >= lower && p <= upper; }
};

using Carrier = std::variant<FiniteCarrier, IntervalCarrier>;

inline bool is_finite(const Carrier& c) { return std::holds_alternative<FiniteCarrier>(c); }

enum class SpaceKind { PartialMetric, MetricLike, BMetric, BMetricLike };

inline std::string_view to_string(SpaceKind kind) {
    switch (kind) {
        case SpaceKind::PartialMetric: return "partial_metric";
        case SpaceKind::MetricLike: return "metric_like";
        case SpaceKind::BMetric: return "b_metric";
        case SpaceKind::BMetricLike: return "b_metric_like";
    }
    return "unknown";
}

inline std::optional<SpaceKind> parse_space_kind(std::string_view name) {
    for (auto kind : {SpaceKind::PartialMetric, SpaceKind::MetricLike, SpaceKind::BMetric,
                      SpaceKind::BMetricLike}) {
        if (to_string(kind) == name) return kind;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Space
// ---------------------------------------------------------------------------

/// A carrier with a distance function, relaxation constant K and a declared
/// kind. The kind is a claim; `check_axioms` is what establishes it.
class Space {
public:
    using DistanceFn = std::function<double(Point, Point)>;

    Space(std::string name, Carrier carrier, DistanceFn dist, double k_const, SpaceKind kind,
          bool complete = true)
        : name_(std::move(name)),
          carrier_(std::move(carrier)),
          dist_(std::move(dist)),
          k_const_(k_const),
          kind_(kind),
          complete_(complete) {
        if (!dist_) throw Error(ErrorCode::InvalidArgument, "space '" + name_ + "' has no distance");
        if (!(k_const_ >= 1.0) || !std::isfinite(k_const_)) {
            throw Error(ErrorCode::InvalidArgument, "K must be a finite real >= 1");
        }
        if (const auto* fin = std::get_if<FiniteCarrier>(&carrier_)) {
            if (fin->points.empty()) throw Error(ErrorCode::InvalidArgument, "empty finite carrier");
            if (!fin->labels.empty() && fin->labels.size() != fin->points.size()) {
                throw Error(ErrorCode::InvalidArgument, "label count does not match point count");
            }
            for (std::size_t i = 0; i < fin->points.size(); ++i) {
                for (std::size_t j = i + 1; j < fin->points.size(); ++j) {
                    if (fin->points[i] == fin->points[j]) {
                        throw Error(ErrorCode::InvalidArgument, "finite carrier points must be distinct");
                    }
                }
            }
        } else {
            const auto& iv = std::get<IntervalCarrier>(carrier_);
            if (!std::isfinite(iv.lower) || !(iv.lower < iv.upper) ||
                (std::isinf(iv.upper) && iv.upper < 0)) {
                throw Error(ErrorCode::InvalidArgument, "interval carrier needs lower < upper");
            }
        }
    }

    double operator()(Point x, Point y) const { return dist_(x, y); }
    double dist(Point x, Point y) const { return dist_(x, y); }

    const std::string& name() const noexcept { return name_; }
    const Carrier& carrier() const noexcept { return carrier_; }
    double k_const() const noexcept { return k_const_; }
    SpaceKind kind() const noexcept { return kind_; }
    bool complete() const noexcept { return complete_; }
    bool finite() const noexcept { return is_finite(carrier_); }

    const FiniteCarrier& finite_carrier() const {
        const auto* fin = std::get_if<FiniteCarrier>(&carrier_);
        if (!fin) throw Error(ErrorCode::InvalidArgument, "space '" + name_ + "' is not finite");
        return *fin;
    }

    bool contains(Point p) const {
        if (const auto* fin = std::get_if<FiniteCarrier>(&carrier_)) return fin->index_of(p).has_value();
        return std::get<IntervalCarrier>(carrier_).contains(p);
    }

    /// Ambient equality: identifier equality on finite carriers, |a-b| within
    /// tol_point (scaled by magnitude above 1) on intervals.
    bool same_point(Point a, Point b, double tol_point = kTolPoint) const {
        if (finite()) return a == b;
        return detail::approx_equal(a, b, tol_point);
    }

    /// Distinguished points: every point of a finite carrier; endpoints, 0
    /// and 1 (when inside) of an interval.
    std::vector<Point> anchors() const {
        if (const auto* fin = std::get_if<FiniteCarrier>(&carrier_)) return fin->points;
        const auto& iv = std::get<IntervalCarrier>(carrier_);
        std::vector<Point> out{iv.lower};
        for (double p : {0.0, 1.0}) {
            if (p > iv.lower && p < iv.upper) out.push_back(p);
        }
        if (!iv.unbounded()) out.push_back(iv.upper);
        return out;
    }

    Space with_k(double k_const) const {
        return Space(name_, carrier_, dist_, k_const, kind_, complete_);
    }
    Space with_kind(SpaceKind kind) const {
        return Space(name_, carrier_, dist_, k_const_, kind, complete_);
    }

private:
    std::string name_;
    Carrier carrier_;
    DistanceFn dist_;
    double k_const_;
    SpaceKind kind_;
    bool complete_;
};

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

namespace spaces {

/// D(x, y) = (sqrt(x) + sqrt(y))^2 on [0, inf); b-metric-like with K = 2.
inline Space sqrt_square(double k_const = 2.0, SpaceKind kind = SpaceKind::BMetricLike) {
    return Space("sqrt_square", IntervalCarrier{0.0, std::numeric_limits<double>::infinity()},
                 [](Point x, Point y) {
                     const double s = std::sqrt(x) + std::sqrt(y);
                     return s * s;
                 },
                 k_const, kind);
}

/// X = {0, 1}; sigma(0, 0) = 2 and sigma = 1 elsewhere.
inline Space two_point_sigma(double k_const = 1.0, SpaceKind kind = SpaceKind::MetricLike) {
    return Space("two_point_sigma", FiniteCarrier{{0.0, 1.0}, {"0", "1"}},
                 [](Point x, Point y) { return (x == 0.0 && y == 0.0) ? 2.0 : 1.0; }, k_const, kind);
}

inline Space abs_metric(double lower = 0.0,
                        double upper = std::numeric_limits<double>::infinity(),
                        double k_const = 1.0, SpaceKind kind = SpaceKind::BMetric) {
    return Space("abs_metric", IntervalCarrier{lower, upper},
                 [](Point x, Point y) { return std::abs(x - y); }, k_const, kind);
}

/// |x - y| restricted to a list of points.
inline Space abs_metric_finite(std::vector<Point> points, double k_const = 1.0,
                               SpaceKind kind = SpaceKind::BMetric) {
    return Space("abs_metric", FiniteCarrier{std::move(points), {}},
                 [](Point x, Point y) { return std::abs(x - y); }, k_const, kind);
}

/// P(x, y) = max(x, y) on [0, inf); the standard partial metric.
inline Space max_partial(double k_const = 1.0, SpaceKind kind = SpaceKind::PartialMetric) {
    return Space("max_partial", IntervalCarrier{0.0, std::numeric_limits<double>::infinity()},
                 [](Point x, Point y) { return std::max(x, y); }, k_const, kind);
}

/// sigma(x, y) = x + y on [0, inf); metric-like.
inline Space sum_metric_like(double k_const = 1.0, SpaceKind kind = SpaceKind::MetricLike) {
    return Space("sum_metric_like", IntervalCarrier{0.0, std::numeric_limits<double>::infinity()},
                 [](Point x, Point y) { return x + y; }, k_const, kind);
}

/// d(x, y) = (x - y)^2 on [0, inf); b-metric with K = 2.
inline Space squared_abs(double k_const = 2.0, SpaceKind kind = SpaceKind::BMetric) {
    return Space("squared_abs", IntervalCarrier{0.0, std::numeric_limits<double>::infinity()},
                 [](Point x, Point y) { return (x - y) * (x - y); }, k_const, kind);
}

/// Finite space from an n x n matrix. Point i has coordinate i.
inline Space table(std::vector<std::string> labels, std::vector<std::vector<double>> matrix,
                   double k_const, SpaceKind kind) {
    const std::size_t n = matrix.size();
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "table space needs at least one point");
    for (const auto& row : matrix) {
        if (row.size() != n) throw Error(ErrorCode::InvalidArgument, "table matrix must be square");
    }
    if (labels.empty()) {
        for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    }
    std::vector<Point> points(n);
    for (std::size_t i = 0; i < n; ++i) points[i] = static_cast<Point>(i);
    auto dist = [m = std::move(matrix)](Point x, Point y) {
        const auto i = static_cast<std::size_t>(x);
        const auto j = static_cast<std::size_t>(y);
        if (x < 0 || y < 0 || i >= m.size() || j >= m.size() || static_cast<Point>(i) != x ||
            static_cast<Point>(j) != y) {
            throw Error(ErrorCode::InvalidArgument, "point outside table carrier");
        }
        return m[i][j];
    };
    return Space("table", FiniteCarrier{std::move(points), std::move(labels)}, std::move(dist), k_const,
                 kind);
}

}  // namespace spaces

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct Exhaustive {};
struct Sampled {
    std::size_t count = 0;
    std::uint64_t seed = 0;
};
using SampleStrategy = std::variant<Exhaustive, Sampled>;

/// Deterministic point source over a carrier: alternates a van der Corput
/// grid with seeded uniform draws. Unbounded intervals are mapped through
/// u -> lower + u / (1 - u).
class PointSampler {
public:
    PointSampler(const Space& space, std::uint64_t seed) : space_(&space), rng_(seed) {}

    Point draw() {
        if (const auto* fin = std::get_if<FiniteCarrier>(&space_->carrier())) {
            return fin->points[detail::uniform_index(rng_, fin->size())];
        }
        const auto& iv = std::get<IntervalCarrier>(space_->carrier());
        const double u = (counter_++ % 2 == 0) ? detail::van_der_corput(counter_ / 2 + 1, 2)
                                                : detail::unit_uniform(rng_);
        if (iv.unbounded()) return iv.lower + u / (1.0 - u);
        return iv.lower + u * (iv.upper - iv.lower);
    }

    /// Mostly fresh draws, with an anchor mixed in one time in eight.
    Point draw_mixed(std::span<const Point> anchors) {
        if (!anchors.empty() && rng_() % 8 == 0) return anchors[detail::uniform_index(rng_, anchors.size())];
        return draw();
    }

private:
    const Space* space_;
    std::mt19937_64 rng_;
    std::uint64_t counter_ = 0;
};

/// Tuples for a check: all anchor tuples first (capped at `count`), then
/// mixed random tuples. Exhaustive enumerates a finite carrier fully.
template <std::size_t N>
std::vector<std::array<Point, N>> enumerate_tuples(const Space& space, const SampleStrategy& strategy) {
    std::vector<std::array<Point, N>> out;
    auto odometer = [&](std::span<const Point> pts, std::size_t cap) {
        const std::size_t m = pts.size();
        std::array<std::size_t, N> idx{};
        while (out.size() < cap) {
            std::array<Point, N> t{};
            for (std::size_t k = 0; k < N; ++k) t[k] = pts[idx[k]];
            out.push_back(t);
            std::size_t k = N;
            while (k > 0) {
                --k;
                if (++idx[k] < m) break;
                idx[k] = 0;
                if (k == 0) return;
            }
        }
    };

    if (std::holds_alternative<Exhaustive>(strategy)) {
        if (!space.finite()) {
            throw Error(ErrorCode::ExhaustiveOnInfiniteCarrier,
                        "exhaustive check requested on interval carrier of '" + space.name() + "'");
        }
        odometer(space.finite_carrier().points, std::numeric_limits<std::size_t>::max());
        return out;
    }

    const auto& s = std::get<Sampled>(strategy);
    out.reserve(s.count);
    std::vector<Point> anchors = space.finite() ? std::vector<Point>{} : space.anchors();
    if (!anchors.empty()) odometer(anchors, s.count);
    PointSampler sampler(space, s.seed);
    while (out.size() < s.count) {
        std::array<Point, N> t{};
        for (auto& p : t) p = sampler.draw_mixed(anchors);
        out.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Axioms
// ---------------------------------------------------------------------------

struct AxiomViolation {
    std::string axiom_id;
    std::vector<Point> witness;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct AxiomReport {
    bool passed = true;
    std::size_t checked_triples = 0;
    std::vector<AxiomViolation> violations;
};

namespace detail {

class AxiomChecker {
public:
    AxiomChecker(const Space& space, double tol) : s_(space), tol_(tol) {}

    void check_pair(Point x, Point y) {
        const double dxy = s_(x, y);
        const double dyx = s_(y, x);
        if (dxy < 0) add("nonneg", {x, y}, dxy, 0.0);
        if (!approx_equal(dxy, dyx, tol_)) add(symmetry_id(), {x, y}, dxy, dyx);

        const bool same = s_.same_point(x, y);
        switch (s_.kind()) {
            case SpaceKind::BMetricLike:
                if (dxy == 0.0 && !same) add("D1", {x, y}, dxy, 0.0);
                break;
            case SpaceKind::MetricLike:
                if (dxy == 0.0 && !same) add("sigma1", {x, y}, dxy, 0.0);
                break;
            case SpaceKind::BMetric:
                if (dxy == 0.0 && !same) add("D1", {x, y}, dxy, 0.0);
                if (same && std::abs(dxy) > tol_) add("D1", {x, y}, dxy, 0.0);
                break;
            case SpaceKind::PartialMetric: {
                const double pxx = s_(x, x);
                const double pyy = s_(y, y);
                if (!same && approx_equal(pxx, dxy, tol_) && approx_equal(pyy, dxy, tol_)) {
                    add("P1", {x, y}, dxy, pxx);
                }
                if (!leq_slack(pxx, dxy, std::max(std::abs(pxx), std::abs(dxy)), tol_)) {
                    add("P2", {x, y}, pxx, dxy);
                }
                break;
            }
        }
    }

    /// Triangle-type axioms with z as the intermediate point.
    void check_triple(Point x, Point y, Point z) {
        const double dxy = s_(x, y);
        const double dxz = s_(x, z);
        const double dzy = s_(z, y);
        switch (s_.kind()) {
            case SpaceKind::BMetricLike:
            case SpaceKind::BMetric: {
                const double rhs = s_.k_const() * (dxz + dzy);
                if (!leq_slack(dxy, rhs, dxz + dzy, tol_)) add("D3", {x, y, z}, dxy, rhs);
                break;
            }
            case SpaceKind::MetricLike: {
                const double rhs = dxz + dzy;
                if (!leq_slack(dxy, rhs, rhs, tol_)) add("sigma3", {x, y, z}, dxy, rhs);
                break;
            }
            case SpaceKind::PartialMetric: {
                const double dzz = s_(z, z);
                const double rhs = dxz + dzy - dzz;
                if (!leq_slack(dxy, rhs, std::abs(dxz) + std::abs(dzy) + std::abs(dzz), tol_)) {
                    add("P4", {x, y, z}, dxy, rhs);
                }
                break;
            }
        }
    }

    AxiomReport finish(std::size_t triples) && {
        report_.checked_triples = triples;
        report_.passed = report_.violations.empty();
        return std::move(report_);
    }

private:
    std::string_view symmetry_id() const {
        switch (s_.kind()) {
            case SpaceKind::PartialMetric: return "P3";
            case SpaceKind::MetricLike: return "sigma2";
            default: return "D2";
        }
    }

    void add(std::string_view id, std::vector<Point> witness, double lhs, double rhs) {
        report_.violations.push_back({std::string(id), std::move(witness), lhs, rhs});
    }

    const Space& s_;
    double tol_;
    AxiomReport report_;
};

}  // namespace detail

/// Checks the axioms of the space's declared kind. Triangle-type axioms use
/// the third tuple entry as the intermediate point; pair axioms run on every
/// (x, y) and (x, x) drawn.
inline AxiomReport check_axioms(const Space& space, const SampleStrategy& strategy,
                                double tol_axiom = kTolAxiom) {
    detail::AxiomChecker checker(space, tol_axiom);
    const auto triples = enumerate_tuples<3>(space, strategy);

    if (std::holds_alternative<Exhaustive>(strategy)) {
        for (const auto& [x, y] : enumerate_tuples<2>(space, strategy)) checker.check_pair(x, y);
    } else {
        // Pairs and diagonal taken from the triples, without repeats from
        // the anchor block.
        const auto anchors = space.finite() ? std::vector<Point>{} : space.anchors();
        const std::size_t anchor_block = anchors.size() * anchors.size() * anchors.size();
        for (std::size_t i = 0; i < triples.size(); ++i) {
            const auto& [x, y, z] = triples[i];
            if (i < anchor_block && z != anchors.front()) continue;
            checker.check_pair(x, y);
            checker.check_pair(x, x);
        }
    }
    for (const auto& [x, y, z] : triples) checker.check_triple(x, y, z);
    return std::move(checker).finish(triples.size());
}

/// |2 D(x, y) - D(x, x) - D(y, y)|.
inline double d_sharp(const Space& space, Point x, Point y) {
    return std::abs(2.0 * space(x, y) - (space(x, x) + space(y, y)));
}

/// Smallest K >= 1 making the relaxed triangle inequality hold on a finite
/// carrier.
inline double min_valid_k(const Space& space) {
    const auto& pts = space.finite_carrier().points;
    double best = 1.0;
    for (Point x : pts) {
        for (Point y : pts) {
            const double dxy = space(x, y);
            for (Point z : pts) {
                const double denom = space(x, z) + space(z, y);
                if (denom > 0.0) {
                    best = std::max(best, dxy / denom);
                } else if (dxy > 0.0) {
                    throw Error(ErrorCode::NoFiniteK, "D(x,y) > 0 with D(x,z) + D(z,y) = 0");
                }
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Convergence
// ---------------------------------------------------------------------------

enum class Convergence { Converged, NotConverged, Inconclusive };

inline std::string_view to_string(Convergence c) {
    switch (c) {
        case Convergence::Converged: return "Converged";
        case Convergence::NotConverged: return "NotConverged";
        case Convergence::Inconclusive: return "Inconclusive";
    }
    return "unknown";
}

struct ConvergenceResult {
    Convergence verdict = Convergence::Inconclusive;
    double gap = 0.0;  ///< max |D(x, x_n) - D(x, x)| over the tail window
    std::size_t tail_window = 0;
};

/// x_n -> x in the b-metric-like sense: D(x, x_n) -> D(x, x). Decided on the
/// last quarter of the prefix (at least 8 entries).
inline ConvergenceResult converges_to(const Space& space, std::span<const Point> seq, Point x, double tol) {
    if (seq.empty()) throw Error(ErrorCode::InvalidArgument, "empty sequence prefix");
    if (!(tol > 0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");

    const std::size_t w = detail::tail_window(seq.size());
    const double self = space(x, x);
    ConvergenceResult out;
    out.tail_window = w;
    const auto tail = seq.last(w);
    double first_gap = 0.0;
    double last_gap = 0.0;
    for (std::size_t i = 0; i < tail.size(); ++i) {
        const double gap = std::abs(space(x, tail[i]) - self);
        out.gap = std::max(out.gap, gap);
        if (i == 0) first_gap = gap;
        last_gap = gap;
    }
    if (out.gap < tol) {
        out.verdict = seq.size() >= kMinTailWindow ? Convergence::Converged : Convergence::Inconclusive;
    } else {
        out.verdict = last_gap < first_gap ? Convergence::Inconclusive : Convergence::NotConverged;
    }
    return out;
}

}  // namespace bml
