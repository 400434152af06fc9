#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bml {

/// A point of the carrier. Finite carriers identify points by distinct
/// coordinates, so a plain real suffices for both carrier kinds.
using Point = double;

inline constexpr double kTolAxiom = 1e-9;
inline constexpr double kTolPoint = 1e-12;
inline constexpr double kTolFix = 1e-10;
inline constexpr std::size_t kDefaultMaxSteps = 10000;
inline constexpr std::size_t kMinTailWindow = 8;

struct Tolerances {
    double axiom = kTolAxiom;  ///< relative slack on every inequality
    double point = kTolPoint;  ///< ambient point equality on interval carriers
    double fix = kTolFix;      ///< d_sharp residual gate and orbit termination
};

enum class ErrorCode {
    InvalidArgument,
    ExhaustiveOnInfiniteCarrier,
    NoFiniteK,
    NegativeDistance,
    HypothesisNotMet,
    PreimageBroken,
    PhiBelowKSquared,
    NotAFixedPoint,
    CarrierTooLarge,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ExhaustiveOnInfiniteCarrier: return "ExhaustiveOnInfiniteCarrier";
        case ErrorCode::NoFiniteK: return "NoFiniteK";
        case ErrorCode::NegativeDistance: return "NegativeDistance";
        case ErrorCode::HypothesisNotMet: return "HypothesisNotMet";
        case ErrorCode::PreimageBroken: return "PreimageBroken";
        case ErrorCode::PhiBelowKSquared: return "PhiBelowKSquared";
        case ErrorCode::NotAFixedPoint: return "NotAFixedPoint";
        case ErrorCode::CarrierTooLarge: return "CarrierTooLarge";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {

/// `lhs <= rhs` up to `tol * scale`, where scale is the magnitude of the
/// distance terms entering the inequality (not the K-weighted right side).
inline bool leq_slack(double lhs, double rhs, double scale, double tol) {
    return lhs <= rhs + tol * std::abs(scale);
}

inline bool approx_equal(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::size_t tail_window(std::size_t n) {
    const std::size_t quarter = (n + 3) / 4;
    return std::min(n, std::max(kMinTailWindow, quarter));
}

/// Platform-independent uniform double in [0, 1).
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

inline double van_der_corput(std::uint64_t index, std::uint64_t base) {
    double result = 0.0;
    double denom = 1.0;
    while (index > 0) {
        denom *= static_cast<double>(base);
        result += static_cast<double>(index % base) / denom;
        index /= base;
    }
    return result;
}

}  // namespace detail
}  // namespace bml
