#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bml/analysis.hpp"
#include "bml/core.hpp"
#include "bml/spaces.hpp"

namespace bml {

// ---------------------------------------------------------------------------
// Maps
// ---------------------------------------------------------------------------

/// A self-map with a deterministic right inverse: forward(preimage(y)) == y.
struct Map {
    std::function<Point(Point)> forward;
    std::function<Point(Point)> preimage;
    std::string description;
};

/// T acts on the first argument of the expansion inequality, S on the second.
struct MapPair {
    Map t;
    Map s;
};

namespace maps {

inline Map identity() {
    return {[](Point x) { return x; }, [](Point y) { return y; }, "identity"};
}

/// x -> a x, a > 0, with preimage y / a.
inline Map linear(double a) {
    if (!(a > 0) || !std::isfinite(a)) throw Error(ErrorCode::InvalidArgument, "linear map needs a > 0");
    return {[a](Point x) { return a * x; }, [a](Point y) { return y / a; }, "linear{" + std::to_string(a) + "}"};
}

/// Bijection of a finite carrier: point i goes to point table[i].
inline Map permutation(const FiniteCarrier& carrier, std::vector<std::size_t> table) {
    const std::size_t n = carrier.size();
    if (table.size() != n) throw Error(ErrorCode::InvalidArgument, "permutation table size mismatch");
    std::vector<std::size_t> inverse(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (table[i] >= n || inverse[table[i]] != n) {
            throw Error(ErrorCode::InvalidArgument, "permutation table is not a bijection");
        }
        inverse[table[i]] = i;
    }
    std::string desc = "permutation[";
    for (std::size_t i = 0; i < n; ++i) desc += (i ? "," : "") + std::to_string(table[i]);
    desc += "]";

    auto lookup = [carrier](std::span<const std::size_t> tab, Point p) {
        const auto idx = carrier.index_of(p);
        if (!idx) throw Error(ErrorCode::InvalidArgument, "point outside finite carrier");
        return carrier.points[tab[*idx]];
    };
    return {[lookup, table](Point x) { return lookup(table, x); },
            [lookup, inverse](Point y) { return lookup(inverse, y); }, std::move(desc)};
}

}  // namespace maps

struct MapCheckFailure {
    std::string map;  ///< "T" or "S"
    Point y = 0.0;
    Point round_trip = 0.0;
};

struct MapCheckReport {
    std::size_t checked = 0;
    std::vector<MapCheckFailure> failures;
    bool passed() const { return failures.empty(); }
};

/// Round-trip and carrier-closure checks on enumerated or sampled points.
inline MapCheckReport check_map_pair(const Space& space, const MapPair& maps, const SampleStrategy& strategy,
                                     double tol_point = kTolPoint) {
    MapCheckReport out;
    for (const auto& [y] : enumerate_tuples<1>(space, strategy)) {
        ++out.checked;
        for (const auto& [name, map] : {std::pair<std::string, const Map*>{"T", &maps.t}, {"S", &maps.s}}) {
            const Point pre = map->preimage(y);
            const Point back = space.contains(pre) ? map->forward(pre) : pre;
            const Point fwd = map->forward(y);
            if (!space.contains(pre) || !space.same_point(back, y, tol_point) || !space.contains(fwd)) {
                out.failures.push_back({name, y, back});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Expansion hypotheses
// ---------------------------------------------------------------------------

/// D(Tx, Sy) >= [R + L min{D^s(x,Tx), D^s(y,Sy), D^s(x,Sy), D^s(y,Tx)}] D(x, y).
struct RLHypothesis {
    double r_const = 0.0;
    double l_const = 0.0;
};

/// D(Tx, Sy) >= phi(D(x, y)) D(x, y) with phi : (0, inf) -> (k_squared, inf).
/// The limit condition on phi cannot be checked and is carried as an
/// attestation only.
struct PhiHypothesis {
    std::function<double(double)> phi;
    double k_squared = 1.0;
    std::string description;
    bool limit_condition_attested = false;
};

using ExpansionHypothesis = std::variant<RLHypothesis, PhiHypothesis>;

namespace phi {

/// t -> a + b t.
inline PhiHypothesis affine(double a, double b, double k_squared) {
    return {[a, b](double t) { return a + b * t; }, k_squared,
            "affine{" + std::to_string(a) + "," + std::to_string(b) + "}", false};
}

}  // namespace phi

struct AuditViolation {
    Point x = 0.0;
    Point y = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct AuditReport {
    std::size_t checked_pairs = 0;
    std::vector<AuditViolation> violations;
    bool passed = true;
};

using PairList = std::vector<std::pair<Point, Point>>;
using PairFilter = std::function<bool(Point, Point)>;

namespace detail {

inline PairList select_pairs(const Space& space, const SampleStrategy& strategy, const PairFilter& filter) {
    PairList out;
    for (const auto& [x, y] : enumerate_tuples<2>(space, strategy)) {
        if (!filter || filter(x, y)) out.emplace_back(x, y);
    }
    return out;
}

inline void validate(const Space& space, const RLHypothesis& hyp) {
    if (!(hyp.r_const > space.k_const())) throw Error(ErrorCode::InvalidArgument, "R must exceed K");
    if (!(hyp.l_const >= 0)) throw Error(ErrorCode::InvalidArgument, "L must be >= 0");
}

inline void validate(const Space&, const PhiHypothesis& hyp) {
    if (!hyp.phi) throw Error(ErrorCode::InvalidArgument, "phi hypothesis without a function");
}

inline void probe_phi(const PhiHypothesis& hyp, double t) {
    const double v = hyp.phi(t);
    if (!(v > hyp.k_squared)) {
        throw Error(ErrorCode::PhiBelowKSquared, "phi(" + std::to_string(t) + ") = " + std::to_string(v) +
                                                     " is not above " + std::to_string(hyp.k_squared));
    }
}

/// Fixed probe grid t = 2^e, e in [-40, 40].
inline void probe_phi_grid(const PhiHypothesis& hyp) {
    for (int e = -40; e <= 40; ++e) probe_phi(hyp, std::ldexp(1.0, e));
}

inline std::optional<AuditViolation> audit_pair(const Space& space, const MapPair& maps, const RLHypothesis& hyp,
                                                Point x, Point y, double tol) {
    const Point tx = maps.t.forward(x);
    const Point sy = maps.s.forward(y);
    const double lhs = space(tx, sy);
    double coeff = hyp.r_const;
    if (hyp.l_const != 0.0) {
        const double m = std::min({d_sharp(space, x, tx), d_sharp(space, y, sy), d_sharp(space, x, sy),
                                   d_sharp(space, y, tx)});
        coeff += hyp.l_const * m;
    }
    const double rhs = coeff * space(x, y);
    if (leq_slack(rhs, lhs, std::max(std::abs(lhs), std::abs(rhs)), tol)) return std::nullopt;
    return AuditViolation{x, y, lhs, rhs};
}

inline std::optional<AuditViolation> audit_pair(const Space& space, const MapPair& maps, const PhiHypothesis& hyp,
                                                Point x, Point y, double tol) {
    const double t = space(x, y);
    if (!(t > 0)) return std::nullopt;
    probe_phi(hyp, t);
    const double lhs = space(maps.t.forward(x), maps.s.forward(y));
    const double rhs = hyp.phi(t) * t;
    if (leq_slack(rhs, lhs, std::max(std::abs(lhs), std::abs(rhs)), tol)) return std::nullopt;
    return AuditViolation{x, y, lhs, rhs};
}

template <typename Hyp>
AuditReport audit_pairs(const Space& space, const MapPair& maps, const Hyp& hyp, std::span<const std::pair<Point, Point>> pairs,
                        double tol) {
    AuditReport out;
    for (const auto& [x, y] : pairs) {
        ++out.checked_pairs;
        if (auto v = audit_pair(space, maps, hyp, x, y, tol)) out.violations.push_back(*v);
    }
    out.passed = out.violations.empty();
    return out;
}

}  // namespace detail

/// Checks the (R, L) expansion inequality on ordered pairs (x through T, y
/// through S). An optional filter restricts the region audited.
inline AuditReport audit_rl(const Space& space, const MapPair& maps, const RLHypothesis& hyp,
                            const SampleStrategy& pairs, const PairFilter& filter = {},
                            double tol_axiom = kTolAxiom) {
    detail::validate(space, hyp);
    const auto selected = detail::select_pairs(space, pairs, filter);
    return detail::audit_pairs(space, maps, hyp, selected, tol_axiom);
}

/// Checks D(Tx, Sy) >= phi(D(x, y)) D(x, y); zero-distance pairs are outside
/// phi's domain and pass vacuously.
inline AuditReport audit_phi(const Space& space, const MapPair& maps, const PhiHypothesis& hyp,
                             const SampleStrategy& pairs, const PairFilter& filter = {},
                             double tol_axiom = kTolAxiom) {
    detail::validate(space, hyp);
    detail::probe_phi_grid(hyp);
    const auto selected = detail::select_pairs(space, pairs, filter);
    return detail::audit_pairs(space, maps, hyp, selected, tol_axiom);
}

inline AuditReport audit(const Space& space, const MapPair& maps, const ExpansionHypothesis& hyp,
                         const SampleStrategy& pairs, const PairFilter& filter = {},
                         double tol_axiom = kTolAxiom) {
    return std::visit(
        [&](const auto& h) {
            if constexpr (std::is_same_v<std::decay_t<decltype(h)>, RLHypothesis>) {
                return audit_rl(space, maps, h, pairs, filter, tol_axiom);
            } else {
                return audit_phi(space, maps, h, pairs, filter, tol_axiom);
            }
        },
        hyp);
}

inline AuditReport audit_explicit(const Space& space, const MapPair& maps, const ExpansionHypothesis& hyp,
                                  std::span<const std::pair<Point, Point>> pairs, double tol_axiom = kTolAxiom) {
    return std::visit(
        [&](const auto& h) {
            detail::validate(space, h);
            return detail::audit_pairs(space, maps, h, pairs, tol_axiom);
        },
        hyp);
}

// ---------------------------------------------------------------------------
// Inverse orbit
// ---------------------------------------------------------------------------

enum class Termination { FixedPointHit, ToleranceMet, MaxIterations };

inline std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::FixedPointHit: return "FixedPointHit";
        case Termination::ToleranceMet: return "ToleranceMet";
        case Termination::MaxIterations: return "MaxIterations";
    }
    return "unknown";
}

struct OrbitTrace {
    std::vector<Point> points;
    std::vector<double> successive_distances;
    CauchyVerdict cauchy;
    Termination terminated_by = Termination::MaxIterations;
};

/// x_{2n} = T x_{2n+1}, x_{2n+1} = S x_{2n+2}: alternate T- and S-preimages
/// starting from x0. Stops once a T-step and an S-step both stay put at a
/// common fixed point, once the last tail window of distances is below
/// tol.fix, or after max_steps preimage steps.
inline OrbitTrace inverse_orbit(const Space& space, const MapPair& maps, Point x0, std::size_t max_steps,
                                const Tolerances& tol = {}) {
    if (max_steps < 2) throw Error(ErrorCode::InvalidArgument, "max_steps must be at least 2");
    if (!space.contains(x0)) throw Error(ErrorCode::InvalidArgument, "x0 is not in the carrier");

    OrbitTrace trace;
    trace.points.reserve(std::min<std::size_t>(max_steps + 1, 4096));
    trace.points.push_back(x0);

    for (std::size_t n = 0; n < max_steps; ++n) {
        const Point current = trace.points.back();
        const Map& map = (n % 2 == 0) ? maps.t : maps.s;
        const Point next = map.preimage(current);
        if (!space.contains(next)) {
            throw Error(ErrorCode::PreimageBroken, "preimage left the carrier at step " + std::to_string(n + 1));
        }
        if (!space.same_point(map.forward(next), current, tol.point)) {
            throw Error(ErrorCode::PreimageBroken, "round trip failed at step " + std::to_string(n + 1));
        }
        trace.points.push_back(next);
        trace.successive_distances.push_back(space(current, next));

        const std::size_t m = trace.points.size();
        if (m >= 3 && space.same_point(trace.points[m - 3], current, tol.point) &&
            space.same_point(current, next, tol.point) && space.same_point(maps.t.forward(next), next, tol.point) &&
            space.same_point(maps.s.forward(next), next, tol.point)) {
            trace.terminated_by = Termination::FixedPointHit;
            break;
        }
        const auto& d = trace.successive_distances;
        if (d.size() >= kMinTailWindow) {
            const auto tail = std::span<const double>(d).last(detail::tail_window(d.size()));
            if (std::all_of(tail.begin(), tail.end(), [&](double v) { return v < tol.fix; })) {
                trace.terminated_by = Termination::ToleranceMet;
                break;
            }
        }
    }
    trace.cauchy = geometric_cauchy_check(trace.successive_distances, space.k_const());
    return trace;
}

/// The ordered (T-argument, S-argument) pairs the existence argument uses:
/// (x_{2n+1}, x_{2n+2}), (x_{2n+3}, x_{2n+2}), and the limit-identification
/// pairs (x_{2n+1}, w_2), (w_1, x_{2n+2}) with T w_1 = S w_2 = z.
inline PairList orbit_audit_pairs(const OrbitTrace& trace, const MapPair& maps, Point z) {
    const auto& p = trace.points;
    const Point w1 = maps.t.preimage(z);
    const Point w2 = maps.s.preimage(z);
    PairList out;
    for (std::size_t j = 1; j < p.size(); j += 2) {
        if (j + 1 < p.size()) out.emplace_back(p[j], p[j + 1]);
        if (j >= 3) out.emplace_back(p[j], p[j - 1]);
        out.emplace_back(p[j], w2);
    }
    for (std::size_t j = 2; j < p.size(); j += 2) out.emplace_back(w1, p[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

struct SolveConfig {
    std::size_t max_steps = kDefaultMaxSteps;
    Tolerances tol;
};

struct SolveReport {
    Point candidate = 0.0;    ///< z, possibly the canonical anchor for the orbit limit
    Point orbit_limit = 0.0;  ///< last orbit point as computed
    double t_residual = 0.0;  ///< D^s(z, Tz)
    double s_residual = 0.0;  ///< D^s(z, Sz)
    bool forward_fixed = false;
    OrbitTrace trace;
    bool certified = false;
    AuditReport hypothesis_audit;
};

namespace detail {

inline std::pair<double, double> residuals(const Space& space, const MapPair& maps, Point z) {
    return {d_sharp(space, z, maps.t.forward(z)), d_sharp(space, z, maps.s.forward(z))};
}

}  // namespace detail

/// Runs the inverse orbit from x0 and certifies its last point as a common
/// fixed point: D^s residuals within tol.fix, T z = S z = z under ambient
/// equality, and a certified geometric Cauchy check. The hypothesis audit over
/// the orbit's pairs is reported alongside and does not gate certification.
inline SolveReport solve(const Space& space, const MapPair& maps, const ExpansionHypothesis& hyp, Point x0,
                         const SolveConfig& config = {}) {
    if (!space.complete()) {
        throw Error(ErrorCode::InvalidArgument, "space '" + space.name() + "' is not declared complete");
    }
    std::visit([&](const auto& h) { detail::validate(space, h); }, hyp);

    SolveReport out;
    out.trace = inverse_orbit(space, maps, x0, config.max_steps, config.tol);
    out.orbit_limit = out.trace.points.back();
    out.candidate = out.orbit_limit;

    auto [tr, sr] = detail::residuals(space, maps, out.candidate);
    // Replace the raw limit by an anchor (0, an endpoint) it is ambient-equal
    // to or converges to within tol.fix, when that is at least as good a
    // fixed point.
    if (!space.finite()) {
        for (Point anchor : space.anchors()) {
            if (anchor == out.candidate) continue;
            const bool near = space.same_point(anchor, out.candidate, config.tol.point) ||
                              std::abs(space(out.candidate, anchor) - space(anchor, anchor)) <= config.tol.fix;
            if (!near) continue;
            auto [ta, sa] = detail::residuals(space, maps, anchor);
            if (std::max(ta, sa) <= std::max(tr, sr)) {
                out.candidate = anchor;
                tr = ta;
                sr = sa;
                break;
            }
        }
    }
    out.t_residual = tr;
    out.s_residual = sr;
    out.forward_fixed = space.same_point(maps.t.forward(out.candidate), out.candidate, config.tol.point) &&
                        space.same_point(maps.s.forward(out.candidate), out.candidate, config.tol.point);

    const auto pairs = orbit_audit_pairs(out.trace, maps, out.candidate);
    out.hypothesis_audit = audit_explicit(space, maps, hyp, pairs, config.tol.axiom);

    out.certified = out.t_residual <= config.tol.fix && out.s_residual <= config.tol.fix && out.forward_fixed &&
                    out.trace.cauchy.verdict == CauchyStatus::CauchyCertified;
    return out;
}

/// Two claimed common fixed points coincide (ambient equality) or sit at
/// distance zero. A false result contradicts the uniqueness argument, which
/// is only possible when the expansion inequality fails on (z1, z2).
inline bool verify_uniqueness_argument(const Space& space, const MapPair& maps, const ExpansionHypothesis& hyp,
                                       Point z1, Point z2, const Tolerances& tol = {}) {
    std::visit([&](const auto& h) { detail::validate(space, h); }, hyp);
    for (Point z : {z1, z2}) {
        const auto [tr, sr] = detail::residuals(space, maps, z);
        if (tr > tol.fix || sr > tol.fix) {
            throw Error(ErrorCode::NotAFixedPoint, "residual gate failed at " + std::to_string(z));
        }
    }
    return space.same_point(z1, z2, tol.point) || space(z1, z2) == 0.0;
}

}  // namespace bml
