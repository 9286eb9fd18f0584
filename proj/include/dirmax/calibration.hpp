#pragma once

// Constants fixed by calibration runs on the shipped instances. Each one is
// recomputed by a test so that drift is noticed.

#include "dirmax/dyadic.hpp"

namespace dirmax::calibration {

/// Smallest power of two for which every shrinking step halves on the
/// corpus, with E the test set and with E all covered cells. At 1 the
/// covered-cell runs fail to halve.
inline DyadicRational lambda0() { return DyadicRational(2); }

/// Kakeya lower bound: best ratio >= kakeya * sqrt(log2(1/delta)) for delta
/// in 2^-3 .. 2^-8. Measured minimum 0.877 (delta = 2^-4).
inline constexpr double kakeya = 0.8;

/// Allowed drop between successive Kakeya points.
inline constexpr double kakeya_monotone_slack = 0.05;

/// Organized collections: best ratio <= collections * (1 + log2 N) for N in
/// 2 .. 64. Measured maximum of ratio / (1 + log2 N) is 0.567 (N = 2).
inline constexpr double collections = 0.75;

/// Largest allowed ratio(64) / ratio(2).
inline constexpr double collections_growth = 6.0;

/// Quadratic reformulation: integral of (T* 1_E)^2 <= reformulate * sum nu B.
/// Measured lhs / rhs between 1.17 and 1.40.
inline constexpr double reformulate = 2.0;

/// Square instance at p = 1.5: ratio within this factor of delta^(1 - 2/p).
inline constexpr double square_factor = 4.0;

/// Square instance: |{Mf >= delta / 4}| >= square_level_measure.
inline constexpr double square_level_measure = 0.25;

/// Diagonal pieces: ||T_j f|| / ||f|| <= diagonal * (1 + log2(1/delta)) on
/// seeded random f. Measured maximum 0.82 on the corpus up to m = 5.
inline constexpr double diagonal = 1.0;

/// Fitted exponent window for ratio ~ a * log2(1/delta)^b.
inline constexpr double exponent_low = 0.4;
inline constexpr double exponent_high = 1.6;

}  // namespace dirmax::calibration
