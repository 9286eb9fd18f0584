#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirmax/dyadic.hpp"
#include "dirmax/family.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/parallel.hpp"
#include "dirmax/parallelogram.hpp"

namespace dirmax {

/// Linearization: for every cell, the index of the chosen family member, or
/// none on the cells covered by no member.
class ChoiceMap {
public:
    static constexpr std::int32_t none = -1;

    ChoiceMap() = default;
    explicit ChoiceMap(const GridSpec& spec) : spec_(spec), choice_(spec.cell_count(), none) {}
    ChoiceMap(const GridSpec& spec, std::vector<std::int32_t> choice) : spec_(spec), choice_(std::move(choice)) {
        if (choice_.size() != spec.cell_count()) throw std::invalid_argument("choice map size mismatch");
    }

    const GridSpec& spec() const { return spec_; }
    std::size_t size() const { return choice_.size(); }
    std::int32_t at(std::size_t i) const { return choice_[i]; }
    void set(std::size_t i, std::int32_t member) { choice_[i] = member; }
    const std::vector<std::int32_t>& entries() const { return choice_; }

    /// Cells with a chosen member.
    CellSet covered() const {
        CellSet out(spec_);
        for (std::size_t i = 0; i < choice_.size(); ++i)
            if (choice_[i] != none) out.insert(i);
        return out;
    }
    /// The exceptional set: cells with no member.
    CellSet exceptional() const {
        CellSet out(spec_);
        for (std::size_t i = 0; i < choice_.size(); ++i)
            if (choice_[i] == none) out.insert(i);
        return out;
    }

    friend bool operator==(const ChoiceMap&, const ChoiceMap&) = default;

private:
    GridSpec spec_{};
    std::vector<std::int32_t> choice_;
};

namespace detail {

/// Grid values as wide numerators over 2^exponent.
struct WideGrid {
    std::vector<int128> num;
    int exponent = 0;
};

// Per-column prefix sums of the numerators: prefix[c * (side + 1) + r] is the
// sum of rows [0, r) of column c.
inline std::vector<int128> column_prefix(const GridFunction& f) {
    const auto& spec = f.spec();
    const auto side = static_cast<std::size_t>(spec.side());
    std::vector<int128> prefix((side + 1) * side);
    const auto& num = f.numerators();
    for (std::size_t c = 0; c < side; ++c) {
        int128 acc = 0;
        prefix[c * (side + 1)] = 0;
        for (std::size_t r = 0; r < side; ++r) {
            acc += num[c * side + r];
            prefix[c * (side + 1) + r + 1] = acc;
        }
    }
    return prefix;
}

// Average of f over R as a numerator over 2^(e_f + 2m + 2).
inline int128 scaled_average(const Parallelogram& rect, const GridFunction& f, const std::vector<int128>& prefix) {
    const auto& spec = f.spec();
    const auto side = spec.side();
    const auto& num = f.numerators();
    const int q = rect.cell_shift();
    const std::int64_t cell = std::int64_t{1} << q;
    const std::int64_t mask = cell - 1;
    const std::int64_t n = spec.slab_cells();
    int128 sum = 0;
    for (auto c = rect.column_begin(); c < rect.column_end(); ++c) {
        std::int64_t y = rect.slab_low_units(c);
        std::int64_t r0 = y >> q;
        std::int64_t a = y & mask;
        const auto base = static_cast<std::size_t>(c * side);
        const auto pbase = static_cast<std::size_t>(c * (side + 1));
        sum += int128{cell - a} * num[base + static_cast<std::size_t>(r0)];
        sum += int128{cell} * (prefix[pbase + static_cast<std::size_t>(r0 + n)] -
                               prefix[pbase + static_cast<std::size_t>(r0 + 1)]);
        if (a != 0) sum += int128{a} * num[base + static_cast<std::size_t>(r0 + n)];
    }
    return sum << (2 * (spec.mw - rect.level()));
}

inline std::vector<int128> member_averages(const RectangleFamily& fam, const GridFunction& f,
                                           const std::vector<std::uint8_t>* wanted = nullptr) {
    auto prefix = column_prefix(f);
    std::vector<int128> avg(fam.size(), 0);
    parallel_for(fam.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            if (!wanted || (*wanted)[i]) avg[i] = scaled_average(fam[i], f, prefix);
    });
    return avg;
}

struct MaximalResult {
    WideGrid values;
    ChoiceMap choice;
};

inline MaximalResult maximal_kernel(const GridFunction& f, const RectangleFamily& fam) {
    require_same_spec(f.spec(), fam.spec());
    const auto& spec = f.spec();
    auto avg = member_averages(fam, f);
    std::vector<int128> best(spec.cell_count(), -1);
    std::vector<std::int32_t> arg(spec.cell_count(), ChoiceMap::none);
    const std::int64_t n = spec.slab_cells();
    parallel_for(static_cast<std::size_t>(spec.side()), [&](std::size_t cb, std::size_t ce) {
        for (std::size_t i = 0; i < fam.size(); ++i) {
            const auto& rect = fam[i];
            auto c_lo = std::max<std::int64_t>(rect.column_begin(), static_cast<std::int64_t>(cb));
            auto c_hi = std::min<std::int64_t>(rect.column_end(), static_cast<std::int64_t>(ce));
            const int128 a = avg[i];
            for (auto c = c_lo; c < c_hi; ++c) {
                auto r0 = rect.first_center_row(c);
                auto idx = spec.index(c, r0);
                for (std::int64_t t = 0; t < n; ++t, ++idx) {
                    if (a > best[idx]) {
                        best[idx] = a;
                        arg[idx] = static_cast<std::int32_t>(i);
                    }
                }
            }
        }
    });
    for (auto& b : best) b = std::max<int128>(b, 0);
    return {{std::move(best), f.exponent() + 2 * spec.m + 2}, ChoiceMap(spec, std::move(arg))};
}

inline void check_choice(const ChoiceMap& rho, const RectangleFamily& fam) {
    require_same_spec(rho.spec(), fam.spec());
    for (auto v : rho.entries())
        if (v < ChoiceMap::none || (v != ChoiceMap::none && static_cast<std::size_t>(v) >= fam.size()))
            throw std::out_of_range("corrupt choice map");
}

inline WideGrid apply_T_wide(const ChoiceMap& rho, const RectangleFamily& fam, const GridFunction& f) {
    check_choice(rho, fam);
    require_same_spec(f.spec(), fam.spec());
    std::vector<std::uint8_t> used(fam.size(), 0);
    for (auto v : rho.entries())
        if (v != ChoiceMap::none) used[static_cast<std::size_t>(v)] = 1;
    auto avg = member_averages(fam, f, &used);
    std::vector<int128> out(rho.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (rho.at(i) != ChoiceMap::none) out[i] = avg[static_cast<std::size_t>(rho.at(i))];
    return {std::move(out), f.exponent() + 2 * fam.spec().m + 2};
}

/// Adjoint from per-member weights: sum over R of weight[R] * 1_R / |R|,
/// where weight[R] is a numerator over 2^(weight_exponent + 2m) (a measure).
inline WideGrid adjoint_from_weights(const RectangleFamily& fam, const std::vector<int128>& weight,
                                     int weight_exponent) {
    const auto& spec = fam.spec();
    const auto side = static_cast<std::size_t>(spec.side());
    const std::size_t stride = side + 2;
    const std::int64_t n = spec.slab_cells();
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < fam.size(); ++i)
        if (weight[i] != 0) active.push_back(i);
    std::vector<int128> out(spec.cell_count(), 0);
    parallel_for(side, [&](std::size_t cb, std::size_t ce) {
        std::vector<int128> diff((ce - cb) * stride, 0);
        for (auto i : active) {
            const auto& rect = fam[i];
            auto c_lo = std::max<std::int64_t>(rect.column_begin(), static_cast<std::int64_t>(cb));
            auto c_hi = std::min<std::int64_t>(rect.column_end(), static_cast<std::int64_t>(ce));
            if (c_lo >= c_hi) continue;
            const int q = rect.cell_shift();
            const std::int64_t cell = std::int64_t{1} << q;
            const int128 coef = weight[i] << (2 * (spec.mw - rect.level()));
            for (auto c = c_lo; c < c_hi; ++c) {
                std::int64_t y = rect.slab_low_units(c);
                auto r0 = static_cast<std::size_t>(y >> q);
                std::int64_t a = y & (cell - 1);
                auto* d = &diff[(static_cast<std::size_t>(c) - cb) * stride];
                d[r0] += coef * (cell - a);
                d[r0 + 1] += coef * a;
                d[r0 + static_cast<std::size_t>(n)] += coef * (a - cell);
                d[r0 + static_cast<std::size_t>(n) + 1] -= coef * a;
            }
        }
        for (std::size_t c = cb; c < ce; ++c) {
            int128 acc = 0;
            const auto* d = &diff[(c - cb) * stride];
            for (std::size_t r = 0; r < side; ++r) {
                acc += d[r];
                out[c * side + r] = acc;
            }
        }
    });
    return {std::move(out), weight_exponent + 2 * spec.m + 2};
}

inline WideGrid apply_T_adjoint_wide(const ChoiceMap& rho, const RectangleFamily& fam, const GridFunction& g) {
    check_choice(rho, fam);
    require_same_spec(g.spec(), fam.spec());
    std::vector<int128> weight(fam.size(), 0);
    const auto& num = g.numerators();
    for (std::size_t i = 0; i < rho.size(); ++i)
        if (rho.at(i) != ChoiceMap::none) weight[static_cast<std::size_t>(rho.at(i))] += num[i];
    return adjoint_from_weights(fam, weight, g.exponent());
}

inline GridFunction to_grid(const GridSpec& spec, const WideGrid& w) {
    return GridFunction::from_scaled(spec, w.num, w.exponent);
}

}  // namespace detail

/// Maximal average over the family members containing each cell; 0 on cells
/// covered by no member.
inline GridFunction maximal_apply(const GridFunction& f, const RectangleFamily& fam) {
    return detail::to_grid(f.spec(), detail::maximal_kernel(f, fam).values);
}

/// Maximizing member per cell; ties go to the member first in canonical order.
inline ChoiceMap linearize(const GridFunction& f, const RectangleFamily& fam) {
    return detail::maximal_kernel(f, fam).choice;
}

/// Average of f over the chosen member of each cell.
inline GridFunction apply_T(const ChoiceMap& rho, const RectangleFamily& fam, const GridFunction& f) {
    return detail::to_grid(f.spec(), detail::apply_T_wide(rho, fam, f));
}

/// Adjoint of apply_T: sum over members R of (1_R / |R|) times the integral
/// of g over the cells choosing R. The indicator 1_R is taken cell-averaged.
inline GridFunction apply_T_adjoint(const ChoiceMap& rho, const RectangleFamily& fam, const GridFunction& g) {
    return detail::to_grid(g.spec(), detail::apply_T_adjoint_wide(rho, fam, g));
}

/// Number of cells of F choosing each member.
inline std::vector<std::int64_t> chooser_counts(const ChoiceMap& rho, const CellSet& f, std::size_t family_size) {
    require_same_spec(rho.spec(), f.spec());
    std::vector<std::int64_t> counts(family_size, 0);
    for (std::size_t i = 0; i < rho.size(); ++i) {
        auto v = rho.at(i);
        if (v == ChoiceMap::none || !f.contains(i)) continue;
        if (static_cast<std::size_t>(v) >= family_size) throw std::out_of_range("corrupt choice map");
        ++counts[static_cast<std::size_t>(v)];
    }
    return counts;
}

/// Measure of the cells of F choosing member index r.
inline DyadicRational nu(const ChoiceMap& rho, const CellSet& f, std::size_t member) {
    require_same_spec(rho.spec(), f.spec());
    std::int64_t count = 0;
    for (std::size_t i = 0; i < rho.size(); ++i)
        count += f.contains(i) && rho.at(i) == static_cast<std::int32_t>(member);
    return DyadicRational::make(count, 2 * rho.spec().m);
}

// ---------------------------------------------------------------------------
// Vertical maximal function

/// Grid of exact quotients (segment averages are not dyadic in general).
struct RatioGrid {
    GridSpec spec;
    std::vector<Ratio> values;
    const Ratio& at(std::int64_t c, std::int64_t r) const { return values[spec.index(c, r)]; }
};

namespace detail {

inline Ratio make_ratio(int128 sum, int exponent, std::int64_t len) {
    int tz = std::countr_zero(static_cast<std::uint64_t>(len));
    len >>= tz;
    exponent += tz;
    if (sum != 0 && len > 1) {
        auto g = std::gcd(static_cast<std::int64_t>(sum % len), len);
        if (g == 0) g = len;
        sum /= g;
        len /= g;
    }
    return {DyadicRational::make(sum, exponent), len};
}

}  // namespace detail

/// Maximal average over the cell-aligned vertical segments of the column
/// containing each cell.
inline RatioGrid m2_vertical(const GridFunction& g) {
    const auto& spec = g.spec();
    const auto side = static_cast<std::size_t>(spec.side());
    auto prefix = detail::column_prefix(g);
    RatioGrid out{spec, std::vector<Ratio>(spec.cell_count())};
    parallel_for(side, [&](std::size_t cb, std::size_t ce) {
        // best[hi] holds the best (sum, len) over segments [lo', hi'] with
        // lo' <= lo and hi' >= hi, for the current lo.
        std::vector<std::pair<int128, std::int64_t>> best(side + 1);
        for (std::size_t c = cb; c < ce; ++c) {
            const int128* p = &prefix[c * (side + 1)];
            auto better = [](const std::pair<int128, std::int64_t>& x, const std::pair<int128, std::int64_t>& y) {
                return x.first * y.second > y.first * x.second;
            };
            std::fill(best.begin(), best.end(), std::pair<int128, std::int64_t>{0, 1});
            for (std::size_t lo = 0; lo < side; ++lo) {
                std::pair<int128, std::int64_t> right{-1, 1};
                for (std::size_t hi = side; hi-- > lo;) {
                    std::pair<int128, std::int64_t> cur{p[hi + 1] - p[lo], static_cast<std::int64_t>(hi - lo + 1)};
                    if (lo > 0 && better(best[hi], cur)) cur = best[hi];
                    if (right.first >= 0 && better(right, cur)) cur = right;
                    best[hi] = cur;
                    right = cur;
                }
                out.values[c * side + lo] = detail::make_ratio(best[lo].first, g.exponent(), best[lo].second);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Norm estimation

struct NormTraceRow {
    std::size_t seed_id = 0;
    int iteration = 0;
    double ratio = 0;
};

struct NormReport {
    std::size_t family_size = 0;
    std::size_t seed_count = 0;
    int ascent_iters = 0;
    std::vector<NormTraceRow> trace;
    double best_ratio = 0;
    std::size_t best_seed = 0;
    int best_iteration = 0;
    /// ||Mf||_p / ||f||_p for the best test function, p in {1, 1.5, 2}.
    std::vector<std::pair<double, double>> lp_ratios;

    std::string to_key_values() const {
        std::ostringstream os;
        os << std::setprecision(12);
        os << "family_size=" << family_size << "\n";
        os << "seed_count=" << seed_count << "\n";
        os << "ascent_iters=" << ascent_iters << "\n";
        os << "best_ratio=" << best_ratio << "\n";
        os << "best_seed=" << best_seed << "\n";
        os << "best_iteration=" << best_iteration << "\n";
        for (auto [p, r] : lp_ratios) os << "lp_ratio_" << p << "=" << r << "\n";
        return os.str();
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << std::setprecision(12);
        os << "seed_id,iteration,ratio\n";
        for (const auto& row : trace) os << row.seed_id << "," << row.iteration << "," << row.ratio << "\n";
        return os.str();
    }
};

struct NormOptions {
    /// Significant bits kept for iterates of the ascent.
    int precision_bits = 24;
};

inline double l2_ratio(const GridFunction& mf, const GridFunction& f) {
    auto den = f.norm2_squared_ld();
    if (den == 0) return 0;
    return static_cast<double>(std::sqrt(mf.norm2_squared_ld() / den));
}

/// Lower estimate of ||M||_{2->2}: Rayleigh ratios of the seeds and of the
/// ascent iterates f <- T*T f with the linearization refreshed from f.
inline NormReport estimate_norm(const RectangleFamily& fam, const std::vector<GridFunction>& seeds, int ascent_iters,
                                const NormOptions& options = {}) {
    NormReport report;
    report.family_size = fam.size();
    report.seed_count = seeds.size();
    report.ascent_iters = ascent_iters;
    GridFunction best_f, best_mf;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        require_same_spec(seeds[s].spec(), fam.spec());
        if (seeds[s].is_zero()) throw std::invalid_argument("degenerate seed");
        auto f = seeds[s].quantized(options.precision_bits);
        for (int it = 0; it <= ascent_iters; ++it) {
            auto res = detail::maximal_kernel(f, fam);
            auto mf = GridFunction::from_scaled_rounded(fam.spec(), res.values.num, res.values.exponent,
                                                        options.precision_bits + 8);
            double ratio = l2_ratio(mf, f);
            report.trace.push_back({s, it, ratio});
            if (report.trace.size() == 1 || ratio > report.best_ratio) {
                report.best_ratio = ratio;
                report.best_seed = s;
                report.best_iteration = it;
                best_f = f;
                best_mf = mf;
            }
            if (it == ascent_iters || mf.is_zero()) break;
            auto next = detail::apply_T_adjoint_wide(res.choice, fam, mf);
            auto nf = GridFunction::from_scaled_rounded(fam.spec(), std::move(next.num), next.exponent,
                                                        options.precision_bits);
            if (nf.is_zero() || nf == f) break;
            f = std::move(nf);
        }
    }
    if (!best_f.numerators().empty()) {
        for (double p : {1.0, 1.5, 2.0}) {
            double den = best_f.lp_norm(p);
            report.lp_ratios.emplace_back(p, den > 0 ? best_mf.lp_norm(p) / den : 0.0);
        }
    }
    return report;
}

}  // namespace dirmax
