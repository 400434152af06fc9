#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "bml/core.hpp"
#include "bml/spaces.hpp"

namespace bml {

// ---------------------------------------------------------------------------
// Polygon inequality
// ---------------------------------------------------------------------------

struct PolygonBound {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/// D(x_n, x_0) against K D(x_0,x_1) + K^2 D(x_1,x_2) + ... + K^{n-1} D(x_{n-2},x_{n-1})
/// + K^{n-1} D(x_{n-1},x_n). The last two links share the weight K^{n-1}; a
/// two-point chain gets K D(x_0, x_1).
inline PolygonBound polygon_bound(const Space& space, std::span<const Point> chain,
                                  double tol_axiom = kTolAxiom) {
    if (chain.size() < 2) throw Error(ErrorCode::InvalidArgument, "polygon chain needs at least two points");
    const std::size_t links = chain.size() - 1;
    const double k = space.k_const();

    PolygonBound out;
    out.lhs = space(chain.back(), chain.front());
    double weight = 1.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < links; ++i) {
        if (i + 1 < links || links == 1) weight *= k;
        const double d = space(chain[i], chain[i + 1]);
        out.rhs += weight * d;
        scale += d;
    }
    out.holds = detail::leq_slack(out.lhs, out.rhs, std::max(scale, out.lhs), tol_axiom);
    return out;
}

// ---------------------------------------------------------------------------
// Geometric Cauchy criterion
// ---------------------------------------------------------------------------

enum class CauchyStatus { CauchyCertified, Inconclusive };

inline std::string_view to_string(CauchyStatus s) {
    return s == CauchyStatus::CauchyCertified ? "CauchyCertified" : "Inconclusive";
}

struct CauchyVerdict {
    double lambda_hat = 0.0;  ///< max per-step ratio; +inf after a divergent step
    double threshold = 1.0;   ///< 1 / K
    CauchyStatus verdict = CauchyStatus::Inconclusive;
    std::vector<double> per_step_ratios;
    bool divergent_step = false;  ///< some d_i = 0 followed by d_{i+1} > 0
};

/// Certifies lim D(x_n, x_m) = 0 when every ratio d_{i+1} / d_i stays strictly
/// below 1/K. Failing that is Inconclusive, never a proof of non-Cauchy.
inline CauchyVerdict geometric_cauchy_check(std::span<const double> distances, double k_const) {
    if (distances.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two distances");
    if (!(k_const >= 1.0)) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
    for (double d : distances) {
        if (d < 0 || std::isnan(d)) throw Error(ErrorCode::NegativeDistance, "negative distance in sequence");
    }

    CauchyVerdict out;
    out.threshold = 1.0 / k_const;
    out.per_step_ratios.reserve(distances.size() - 1);
    for (std::size_t i = 0; i + 1 < distances.size(); ++i) {
        double ratio = 0.0;
        if (distances[i] > 0) {
            ratio = distances[i + 1] / distances[i];
        } else if (distances[i + 1] > 0) {
            ratio = std::numeric_limits<double>::infinity();
            out.divergent_step = true;
        }
        out.per_step_ratios.push_back(ratio);
        out.lambda_hat = std::max(out.lambda_hat, ratio);
    }
    out.verdict = out.lambda_hat < out.threshold ? CauchyStatus::CauchyCertified : CauchyStatus::Inconclusive;
    return out;
}

// ---------------------------------------------------------------------------
// Limit sandwich
// ---------------------------------------------------------------------------

struct SandwichResult {
    double lower = 0.0;     ///< D(x, y) / K
    double estimate = 0.0;  ///< tail mean of D(x_n, y)
    double upper = 0.0;     ///< K D(x, y)
    bool holds = false;
};

namespace detail {

inline bool tail_tends_to_zero(const Space& space, std::span<const Point> seq, Point x, double tol) {
    if (seq.size() < kMinTailWindow) return false;
    const auto tail = seq.last(tail_window(seq.size()));
    return std::all_of(tail.begin(), tail.end(), [&](Point p) { return space(p, x) < tol; });
}

}  // namespace detail

/// Given D(x_n, x) -> 0 on the prefix, checks that the limit of D(x_n, y)
/// lies in [D(x, y) / K, K D(x, y)] up to tol.
inline SandwichResult limit_sandwich_check(const Space& space, std::span<const Point> seq, Point x, Point y,
                                           double tol) {
    if (!(tol > 0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
    if (!detail::tail_tends_to_zero(space, seq, x, tol)) {
        throw Error(ErrorCode::HypothesisNotMet, "prefix does not exhibit D(x_n, x) -> 0");
    }
    const auto tail = seq.last(detail::tail_window(seq.size()));
    double sum = 0.0;
    for (Point p : tail) sum += space(p, y);

    const double dxy = space(x, y);
    SandwichResult out;
    out.estimate = sum / static_cast<double>(tail.size());
    out.lower = dxy / space.k_const();
    out.upper = space.k_const() * dxy;
    out.holds = out.lower - tol <= out.estimate && out.estimate <= out.upper + tol;
    return out;
}

/// All carrier points x with D(x_n, x) -> 0 along the prefix. On a space
/// satisfying D1 this has at most one element.
inline std::vector<Point> zero_distance_limits(const Space& space, std::span<const Point> seq, double tol) {
    std::vector<Point> out;
    for (Point x : space.finite_carrier().points) {
        if (detail::tail_tends_to_zero(space, seq, x, tol)) out.push_back(x);
    }
    return out;
}

}  // namespace bml
