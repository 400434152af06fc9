#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "bml/solver.hpp"
#include "bml/spaces.hpp"

namespace bml::oracle {

inline constexpr std::size_t kDefaultMaxCarrier = 4;

using Permutation = std::vector<std::size_t>;

inline std::vector<Permutation> all_permutations(std::size_t n) {
    Permutation p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::vector<Permutation> out;
    do {
        out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
}

/// {x : T x = x and S x = x}, by enumeration.
inline std::vector<Point> common_fixed_points(const Space& space, const MapPair& maps) {
    std::vector<Point> out;
    for (Point x : space.finite_carrier().points) {
        if (maps.t.forward(x) == x && maps.s.forward(x) == x) out.push_back(x);
    }
    return out;
}

/// Distinct points at distance zero. Only possible when D1 is not enforced.
inline bool has_zero_distance_pair(const Space& space) {
    const auto& pts = space.finite_carrier().points;
    for (Point x : pts) {
        for (Point y : pts) {
            if (x != y && space(x, y) == 0.0) return true;
        }
    }
    return false;
}

struct Counterexample {
    Permutation t;
    Permutation s;
    std::vector<Point> fixed_points;
};

struct TheoremAudit {
    std::size_t instances_checked = 0;
    std::size_t hypothesis_holders = 0;
    std::vector<Counterexample> counterexamples;
    std::vector<std::pair<Permutation, Permutation>> holders;
};

inline void check_carrier_size(const Space& space, std::size_t n_max) {
    if (space.finite_carrier().size() > n_max) {
        throw Error(ErrorCode::CarrierTooLarge, "carrier has " + std::to_string(space.finite_carrier().size()) +
                                                    " points, limit is " + std::to_string(n_max));
    }
}

/// Every ordered pair (T, S) of bijections is audited exhaustively over all
/// n^2 ordered point pairs. A holder without exactly one common fixed point
/// is a counterexample unless the space identifies distinct points at
/// distance zero.
inline TheoremAudit audit_theorem_finite(const Space& space, const ExpansionHypothesis& hyp,
                                         std::size_t n_max = kDefaultMaxCarrier, double tol_axiom = kTolAxiom) {
    check_carrier_size(space, n_max);
    const auto& carrier = space.finite_carrier();
    const auto perms = all_permutations(carrier.size());
    const auto pairs = enumerate_tuples<2>(space, Exhaustive{});
    PairList point_pairs;
    point_pairs.reserve(pairs.size());
    for (const auto& [x, y] : pairs) point_pairs.emplace_back(x, y);
    const bool degenerate = has_zero_distance_pair(space);

    TheoremAudit out;
    for (const auto& t : perms) {
        for (const auto& s : perms) {
            ++out.instances_checked;
            const MapPair maps{maps::permutation(carrier, t), maps::permutation(carrier, s)};
            if (!audit_explicit(space, maps, hyp, point_pairs, tol_axiom).passed) continue;
            ++out.hypothesis_holders;
            out.holders.emplace_back(t, s);
            auto fixed = common_fixed_points(space, maps);
            if (fixed.size() != 1 && !degenerate) out.counterexamples.push_back({t, s, std::move(fixed)});
        }
    }
    return out;
}

/// Solves every hypothesis-holding pair from every start point (or only
/// `x0`) and compares against enumeration: a certified candidate must be a
/// common fixed point, and on non-degenerate spaces every run must certify.
inline bool cross_validate(const Space& space, const ExpansionHypothesis& hyp, std::optional<Point> x0 = {},
                           std::size_t n_max = kDefaultMaxCarrier, SolveConfig config = {64, {}}) {
    const auto result = audit_theorem_finite(space, hyp, n_max, config.tol.axiom);
    const auto& carrier = space.finite_carrier();
    const bool degenerate = has_zero_distance_pair(space);
    const std::vector<Point> starts = x0 ? std::vector<Point>{*x0} : carrier.points;

    for (const auto& [t, s] : result.holders) {
        const MapPair maps{maps::permutation(carrier, t), maps::permutation(carrier, s)};
        const auto fixed = common_fixed_points(space, maps);
        for (Point start : starts) {
            const auto report = solve(space, maps, hyp, start, config);
            const bool in_fixed = std::find(fixed.begin(), fixed.end(), report.candidate) != fixed.end();
            if (report.certified && !in_fixed) return false;
            if (!degenerate && !report.certified) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Falsification sweep
// ---------------------------------------------------------------------------

struct SweepConfig {
    std::size_t max_n = 3;
    std::vector<double> grid{0, 1, 2, 3};
    std::vector<double> k_values{1, 2};
    std::vector<double> l_values{0, 1};
    std::vector<double> r_offsets{0.5};  ///< R = K + offset
    std::vector<double> r_factors{2.0};  ///< R = factor * K
};

struct SweepCounterexample {
    std::vector<std::vector<double>> matrix;
    double k_const = 1.0;
    double r_const = 0.0;
    double l_const = 0.0;
    Counterexample instance;
};

struct SweepResult {
    std::size_t matrices_enumerated = 0;
    std::size_t valid_spaces = 0;  ///< (matrix, K) combinations passing the axioms
    std::size_t instances_checked = 0;
    std::size_t hypothesis_holders = 0;
    std::size_t cross_validation_failures = 0;
    std::vector<SweepCounterexample> counterexamples;
};

/// Calls `visit(matrix)` for every symmetric n x n matrix over `grid`.
template <typename Visit>
void for_each_symmetric_matrix(std::size_t n, const std::vector<double>& grid, Visit&& visit) {
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) cells.emplace_back(i, j);
    }
    std::vector<std::size_t> digit(cells.size(), 0);
    std::vector<std::vector<double>> m(n, std::vector<double>(n, grid.front()));
    while (true) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto [i, j] = cells[c];
            m[i][j] = m[j][i] = grid[digit[c]];
        }
        visit(std::as_const(m));
        std::size_t c = 0;
        while (c < digit.size() && ++digit[c] == grid.size()) digit[c++] = 0;
        if (c == digit.size()) return;
    }
}

/// Enumerates small b-metric-like spaces and hypotheses and collects any
/// instance where an exhaustively verified hypothesis fails to yield exactly
/// one common fixed point.
inline SweepResult falsification_sweep(const SweepConfig& config = {}) {
    SweepResult out;
    for (std::size_t n = 1; n <= config.max_n; ++n) {
        for_each_symmetric_matrix(n, config.grid, [&](const std::vector<std::vector<double>>& matrix) {
            ++out.matrices_enumerated;
            for (double k : config.k_values) {
                const Space space = spaces::table({}, matrix, k, SpaceKind::BMetricLike);
                if (!check_axioms(space, Exhaustive{}).passed) continue;
                ++out.valid_spaces;

                std::vector<double> r_values;
                for (double off : config.r_offsets) r_values.push_back(k + off);
                for (double f : config.r_factors) r_values.push_back(f * k);
                for (double r : r_values) {
                    for (double l : config.l_values) {
                        const ExpansionHypothesis hyp = RLHypothesis{r, l};
                        auto result = audit_theorem_finite(space, hyp, config.max_n);
                        out.instances_checked += result.instances_checked;
                        out.hypothesis_holders += result.hypothesis_holders;
                        for (auto& ce : result.counterexamples) {
                            out.counterexamples.push_back({matrix, k, r, l, std::move(ce)});
                        }
                        if (result.hypothesis_holders > 0 && !cross_validate(space, hyp, {}, config.max_n)) {
                            ++out.cross_validation_failures;
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace bml::oracle
