#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dirmax/dyadic.hpp"
#include "dirmax/family.hpp"
#include "dirmax/fit.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/maximal.hpp"
#include "dirmax/parallel.hpp"
#include "dirmax/parallelogram.hpp"

namespace dirmax {

// ---------------------------------------------------------------------------
// Badness

namespace detail {

inline bool base_within(const Parallelogram& q, const DyadicInterval& i) { return i.contains(q.base()); }

/// Cells of E whose chosen member has its base inside I.
inline CellSet choosers_within(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                               const DyadicInterval& i) {
    CellSet out(e.spec());
    for (std::size_t x = 0; x < rho.size(); ++x) {
        auto v = rho.at(x);
        if (v == ChoiceMap::none || !e.contains(x)) continue;
        if (base_within(fam[static_cast<std::size_t>(v)], i)) out.insert(x);
    }
    return out;
}

inline GridFunction adjoint_of_counts(const RectangleFamily& fam, const std::vector<std::int64_t>& counts) {
    std::vector<int128> weight(counts.begin(), counts.end());
    return to_grid(fam.spec(), adjoint_from_weights(fam, weight, 0));
}

}  // namespace detail

/// B_R^E: the average over R of T*(1_{E_I}), where E_I holds the cells of E
/// whose chosen rectangle has its base inside the base I of R.
inline DyadicRational badness(const Parallelogram& r, const CellSet& e, const ChoiceMap& rho,
                              const RectangleFamily& fam) {
    require_same_spec(r.spec(), fam.spec());
    require_same_spec(e.spec(), fam.spec());
    auto local = detail::choosers_within(e, rho, fam, r.base());
    return average(r, apply_T_adjoint(rho, fam, local.indicator()));
}

/// B_R^E for every member. One adjoint per base level: on the columns of a
/// base I, T*(1_{E_I}) agrees with T* of the choosers whose base is at least
/// as fine as I.
inline std::vector<DyadicRational> badness_all(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam) {
    require_same_spec(e.spec(), fam.spec());
    const auto& spec = fam.spec();
    auto counts = chooser_counts(rho, e, fam.size());
    std::vector<DyadicRational> out(fam.size());
    for (int level = 0; level <= spec.mw; ++level) {
        bool wanted = false;
        for (const auto& r : fam.members()) wanted |= r.base().level() == level;
        if (!wanted) continue;
        std::vector<std::int64_t> finer(fam.size(), 0);
        for (std::size_t i = 0; i < fam.size(); ++i)
            if (fam[i].base().level() >= level) finer[i] = counts[i];
        auto g = detail::adjoint_of_counts(fam, finer);
        for (std::size_t i = 0; i < fam.size(); ++i)
            if (fam[i].base().level() == level) out[i] = average(fam[i], g);
    }
    return out;
}

/// Per-member chooser measures and badness.
struct BadnessTable {
    std::vector<DyadicRational> nu;
    std::vector<DyadicRational> badness;
};

inline BadnessTable badness_table(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam) {
    BadnessTable t;
    auto counts = chooser_counts(rho, e, fam.size());
    for (auto c : counts) t.nu.push_back(DyadicRational::make(c, 2 * fam.spec().m));
    t.badness = badness_all(e, rho, fam);
    return t;
}

/// Both sides of the quadratic bound: the integral of (T* 1_E)^2 and the sum
/// over members of nu_R^E B_R^E.
struct ReformulateSides {
    DyadicRational lhs;
    DyadicRational rhs;
};

inline ReformulateSides reformulate_check(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam) {
    auto t = badness_table(e, rho, fam);
    ReformulateSides s;
    s.lhs = apply_T_adjoint(rho, fam, e.indicator()).norm2_squared();
    for (std::size_t i = 0; i < fam.size(); ++i) s.rhs = s.rhs + t.nu[i] * t.badness[i];
    return s;
}

// ---------------------------------------------------------------------------
// Vertical windows

/// Averages over I x window of T* applied to the choosers split by whether
/// the vertical projection of the chosen rectangle lies in the containment
/// span.
struct WindowSplit {
    Ratio in;
    Ratio out;
};

namespace detail {

/// Rows [lo, hi) of the clipped concentric triple of a vertical dyadic interval.
inline std::pair<std::int64_t, std::int64_t> tripled_rows(const GridSpec& spec, const DyadicInterval& k) {
    auto lo = k.first_cell(spec.m);
    auto n = k.cell_count(spec.m);
    return {std::max<std::int64_t>(0, lo - n), std::min<std::int64_t>(spec.side(), lo + 2 * n)};
}

inline Ratio window_average(const GridFunction& g, const DyadicInterval& i, std::int64_t row_lo,
                            std::int64_t row_hi) {
    const auto& spec = g.spec();
    int128 sum = 0;
    auto c0 = i.first_cell(spec.m);
    for (auto c = c0; c < c0 + i.cell_count(spec.m); ++c)
        for (auto r = row_lo; r < row_hi; ++r) sum += g.numerators()[spec.index(c, r)];
    // sum * 2^-(e + 2m) / (2^-level(I) * rows * 2^-m)
    return make_ratio(sum, g.exponent() + spec.m - i.level(), row_hi - row_lo);
}

inline WindowSplit split_over(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                              const DyadicInterval& i, const Span& containment, std::int64_t row_lo,
                              std::int64_t row_hi) {
    require_same_spec(e.spec(), fam.spec());
    auto local = choosers_within(e, rho, fam, i);
    CellSet in(e.spec()), out(e.spec());
    for (std::size_t x = 0; x < rho.size(); ++x) {
        if (!local.contains(x)) continue;
        if (containment.contains(fam[static_cast<std::size_t>(rho.at(x))].vertical_extent()))
            in.insert(x);
        else
            out.insert(x);
    }
    return {window_average(apply_T_adjoint(rho, fam, in.indicator()), i, row_lo, row_hi),
            window_average(apply_T_adjoint(rho, fam, out.indicator()), i, row_lo, row_hi)};
}

}  // namespace detail

/// B^in_{I,K} and B^out_{I,K}: window I x K, containment in 3K.
inline WindowSplit in_out_split(const DyadicInterval& i, const DyadicInterval& k, const CellSet& e,
                                const ChoiceMap& rho, const RectangleFamily& fam) {
    const auto& spec = fam.spec();
    if (i.level() > spec.m || k.level() > spec.m) throw std::invalid_argument("window finer than the grid");
    auto lo = k.first_cell(spec.m);
    return detail::split_over(e, rho, fam, i, to_span(k).tripled(), lo, lo + k.cell_count(spec.m));
}

/// B^in_{I,3K} and B^out_{I,3K}: window I x (3K clipped to [0,1]),
/// containment in 9K.
inline WindowSplit tripled_split(const DyadicInterval& i, const DyadicInterval& k, const CellSet& e,
                                 const ChoiceMap& rho, const RectangleFamily& fam) {
    const auto& spec = fam.spec();
    if (i.level() > spec.m || k.level() > spec.m) throw std::invalid_argument("window finer than the grid");
    auto [lo, hi] = detail::tripled_rows(spec, k);
    return detail::split_over(e, rho, fam, i, to_span(k).tripled().tripled(), lo, hi);
}

/// The two halves of B_R^E for the window K: averages over R of T* applied
/// to the choosers (base inside the base of R) split by containment in 3K.
inline std::pair<DyadicRational, DyadicRational> split_over_rectangle(const Parallelogram& r,
                                                                      const DyadicInterval& k, const CellSet& e,
                                                                      const ChoiceMap& rho,
                                                                      const RectangleFamily& fam) {
    auto local = detail::choosers_within(e, rho, fam, r.base());
    auto triple = to_span(k).tripled();
    CellSet in(e.spec()), out(e.spec());
    for (std::size_t x = 0; x < rho.size(); ++x) {
        if (!local.contains(x)) continue;
        if (triple.contains(fam[static_cast<std::size_t>(rho.at(x))].vertical_extent()))
            in.insert(x);
        else
            out.insert(x);
    }
    return {average(r, apply_T_adjoint(rho, fam, in.indicator())),
            average(r, apply_T_adjoint(rho, fam, out.indicator()))};
}

/// One (I, K) pair of the window scan.
struct WindowEntry {
    DyadicInterval base;
    DyadicInterval window;
    DyadicRational b_in;
    DyadicRational b_out;
    /// B^out_{I,3K}.
    Ratio b_out_tripled;
};

namespace detail {

inline std::size_t node_id(const DyadicInterval& i) {
    return (std::size_t{1} << i.level()) - 1 + static_cast<std::size_t>(i.index());
}

inline DyadicInterval node_interval(std::size_t id) {
    int level = 0;
    while ((std::size_t{2} << level) - 1 <= id) ++level;
    return {level, static_cast<std::int64_t>(id - ((std::size_t{1} << level) - 1))};
}

/// Integer tables over all horizontal I (levels 0..mw) and vertical K
/// (levels 0..m): the window integrals of T*(1_{E_I}) in total, of the part
/// leaving 3K over I x K, and of the part leaving 9K over I x 3K. Units are
/// 2^-(4m + mw + 2).
struct WindowTables {
    std::size_t base_nodes = 0;
    std::size_t window_nodes = 0;
    std::vector<int128> all, out, out_tripled;
    int exponent = 0;
    int128& at(std::vector<int128>& t, std::size_t b, std::size_t w) { return t[b * window_nodes + w]; }
};

inline WindowTables window_tables(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam) {
    require_same_spec(e.spec(), fam.spec());
    const auto& spec = fam.spec();
    const auto side = static_cast<std::size_t>(spec.side());
    WindowTables t;
    t.base_nodes = (std::size_t{2} << spec.mw) - 1;
    t.window_nodes = (std::size_t{2} << spec.m) - 1;
    t.exponent = 4 * spec.m + spec.mw + 2;
    t.all.assign(t.base_nodes * t.window_nodes, 0);
    t.out = t.all;
    t.out_tripled = t.all;

    auto counts = chooser_counts(rho, e, fam.size());
    struct Active {
        std::size_t base_node;
        int128 weight;
        std::int64_t ext_lo, ext_hi;
        std::vector<std::int64_t> prefix;
    };
    std::vector<Active> active;
    for (std::size_t i = 0; i < fam.size(); ++i) {
        if (counts[i] == 0) continue;
        const auto& q = fam[i];
        const int up = spec.mw - q.level();
        Active a;
        a.base_node = node_id(q.base());
        a.weight = int128{counts[i]} << (2 * spec.mw - q.level());
        a.ext_lo = q.slab_low_units(q.column_begin()) << up;
        a.ext_hi = (q.slab_low_units(q.column_end() - 1) + q.slab_height_units()) << up;
        std::vector<std::int64_t> rows(side, 0);
        q.for_each_overlap([&](std::int64_t, std::int64_t r, std::int64_t ov) {
            rows[static_cast<std::size_t>(r)] += ov << up;
        });
        a.prefix.assign(side + 1, 0);
        for (std::size_t r = 0; r < side; ++r) a.prefix[r + 1] = a.prefix[r] + rows[r];
        active.push_back(std::move(a));
    }

    const int unit_exp = spec.m + spec.mw + 2;
    parallel_for(t.window_nodes, [&](std::size_t wb, std::size_t we) {
        for (std::size_t w = wb; w < we; ++w) {
            auto k = node_interval(w);
            auto row_lo = k.first_cell(spec.m);
            auto row_hi = row_lo + k.cell_count(spec.m);
            auto [t_lo, t_hi] = tripled_rows(spec, k);
            const std::int64_t len = std::int64_t{1} << (unit_exp - k.level());
            const std::int64_t lo = k.index() * len;
            for (const auto& a : active) {
                int128 mass = a.prefix[static_cast<std::size_t>(row_hi)] - a.prefix[static_cast<std::size_t>(row_lo)];
                int128 mass3 = a.prefix[static_cast<std::size_t>(t_hi)] - a.prefix[static_cast<std::size_t>(t_lo)];
                bool inside3 = a.ext_lo >= lo - len && a.ext_hi <= lo + 2 * len;
                bool inside9 = a.ext_lo >= lo - 4 * len && a.ext_hi <= lo + 5 * len;
                t.at(t.all, a.base_node, w) += a.weight * mass;
                if (!inside3) t.at(t.out, a.base_node, w) += a.weight * mass;
                if (!inside9) t.at(t.out_tripled, a.base_node, w) += a.weight * mass3;
            }
        }
    });
    // Accumulate from each base interval into its ancestors.
    for (std::size_t b = t.base_nodes; b-- > 1;) {
        auto parent = node_id(node_interval(b).parent());
        for (std::size_t w = 0; w < t.window_nodes; ++w) {
            t.at(t.all, parent, w) += t.at(t.all, b, w);
            t.at(t.out, parent, w) += t.at(t.out, b, w);
            t.at(t.out_tripled, parent, w) += t.at(t.out_tripled, b, w);
        }
    }
    return t;
}

}  // namespace detail

/// Every (I, K) pair with I a dyadic base interval (levels 0..mw) and K a
/// vertical dyadic interval (levels 0..m).
inline std::vector<WindowEntry> scan_windows(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam) {
    const auto& spec = fam.spec();
    auto t = detail::window_tables(e, rho, fam);
    std::vector<WindowEntry> out;
    out.reserve(t.base_nodes * t.window_nodes);
    for (std::size_t b = 0; b < t.base_nodes; ++b) {
        auto i = detail::node_interval(b);
        for (std::size_t w = 0; w < t.window_nodes; ++w) {
            auto k = detail::node_interval(w);
            int exp = t.exponent - i.level() - k.level();
            auto all = t.at(t.all, b, w);
            auto o = t.at(t.out, b, w);
            auto [lo, hi] = detail::tripled_rows(spec, k);
            out.push_back({i, k, DyadicRational::make(all - o, exp), DyadicRational::make(o, exp),
                           detail::make_ratio(t.at(t.out_tripled, b, w), exp, (hi - lo) / k.cell_count(spec.m))});
        }
    }
    return out;
}

inline bool is_bad_window(const WindowEntry& w, const DyadicRational& lambda0) {
    return w.b_out >= lambda0 && w.b_out_tripled < lambda0;
}

/// calB_I: the windows K with B^out_{I,K} >= lambda0 and B^out_{I,3K} < lambda0.
inline std::vector<DyadicInterval> select_bad_windows(const DyadicInterval& i, const CellSet& e, const ChoiceMap& rho,
                                                      const RectangleFamily& fam, const DyadicRational& lambda0) {
    if (lambda0 < DyadicRational(1)) throw std::invalid_argument("lambda0 must be at least 1");
    std::vector<DyadicInterval> out;
    for (const auto& w : scan_windows(e, rho, fam))
        if (w.base == i && is_bad_window(w, lambda0)) out.push_back(w.window);
    return out;
}

// ---------------------------------------------------------------------------
// Shrinking step

struct ShrinkStep {
    /// E' = union of I x 3K over the selected windows.
    CellSet next;
    /// Selected (I, K) pairs in scan order.
    std::vector<std::pair<DyadicInterval, DyadicInterval>> windows;
    /// {x : M T*(1_E)(x) >= lambda0 / 2}.
    CellSet high_maximal;
    /// Members audited against the dichotomy, and the failures.
    std::size_t audited = 0;
    std::vector<std::string> counterexamples;
};

inline DyadicRational key_constant(const DyadicRational& lambda0) { return DyadicRational(20) * lambda0; }

/// R is contained in the set: every cell R meets in positive area is in it.
inline bool rectangle_within(const Parallelogram& r, const CellSet& s) {
    return touched_cells(r).is_subset_of(s);
}

inline ShrinkStep shrink_once(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                              const DyadicRational& lambda0) {
    if (lambda0 < DyadicRational(1)) throw std::invalid_argument("lambda0 must be at least 1");
    const auto& spec = fam.spec();
    ShrinkStep step{CellSet(spec), {}, CellSet(spec), 0, {}};
    for (const auto& w : scan_windows(e, rho, fam)) {
        if (!is_bad_window(w, lambda0)) continue;
        step.windows.emplace_back(w.base, w.window);
        auto [lo, hi] = detail::tripled_rows(spec, w.window);
        auto c0 = w.base.first_cell(spec.m);
        for (auto c = c0; c < c0 + w.base.cell_count(spec.m); ++c)
            for (auto r = lo; r < hi; ++r) step.next.insert(spec.index(c, r));
    }
    auto mt = maximal_apply(apply_T_adjoint(rho, fam, e.indicator()), fam);
    auto half = lambda0.shifted(-1);
    for (std::size_t x = 0; x < spec.cell_count(); ++x)
        if (mt.at(x) >= half) step.high_maximal.insert(x);

    auto before = badness_all(e, rho, fam);
    auto after = badness_all(step.next, rho, fam);
    auto bound = key_constant(lambda0);
    for (std::size_t i = 0; i < fam.size(); ++i) {
        ++step.audited;
        if (before[i] <= bound) continue;
        bool inside = rectangle_within(fam[i], step.next);
        if (inside && before[i] <= bound + after[i]) continue;
        step.counterexamples.push_back(fam[i].to_string() + " B=" + before[i].to_string() +
                                       " B_next=" + after[i].to_string() + (inside ? "" : " not inside E'"));
    }
    return step;
}

// ---------------------------------------------------------------------------
// Iterated shrinking

struct BandRow {
    std::int64_t k = 0;
    std::size_t members = 0;
    DyadicRational union_measure;
    /// 2^-k |E_0|.
    DyadicRational bound;
    double ratio = 0;
    /// Members of the band not contained in E_{k-1} (checked for k >= 2).
    std::size_t chain_violations = 0;
};

struct ShrinkTrace {
    DyadicRational lambda0;
    std::vector<CellSet> sets;
    std::vector<std::vector<std::pair<DyadicInterval, DyadicInterval>>> windows;
    std::vector<std::size_t> audit_failures;
    bool nested = true;
    bool truncated = false;
    std::vector<BandRow> bands;

    std::vector<DyadicRational> measures() const {
        std::vector<DyadicRational> out;
        for (const auto& s : sets) out.push_back(s.measure());
        return out;
    }
    std::string to_csv() const {
        std::ostringstream os;
        os << "step,measure\n";
        for (std::size_t i = 0; i < sets.size(); ++i) os << i << ',' << sets[i].measure().to_string() << '\n';
        return os.str();
    }
    std::string bands_csv() const {
        std::ostringstream os;
        os.precision(12);
        os << "k,members,union_measure,bound,ratio,chain_violations\n";
        for (const auto& b : bands)
            os << b.k << ',' << b.members << ',' << b.union_measure.to_string() << ',' << b.bound.to_string() << ','
               << b.ratio << ',' << b.chain_violations << '\n';
        return os.str();
    }
};

/// Thrown when a shrinking step fails to halve the set.
class HalvingFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Exact measure of a union of family members.
inline DyadicRational union_measure(const RectangleFamily& fam, const std::vector<std::size_t>& members) {
    const auto& spec = fam.spec();
    const auto side = static_cast<std::size_t>(spec.side());
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> cols(side);
    for (auto i : members) {
        const auto& q = fam[i];
        const int up = spec.mw - q.level();
        for (auto c = q.column_begin(); c < q.column_end(); ++c) {
            auto lo = q.slab_low_units(c) << up;
            cols[static_cast<std::size_t>(c)].emplace_back(lo, lo + (q.slab_height_units() << up));
        }
    }
    int128 total = 0;
    for (auto& col : cols) {
        std::sort(col.begin(), col.end());
        std::int64_t end = 0;
        bool open = false;
        for (auto [lo, hi] : col) {
            if (!open || lo > end) {
                total += hi - lo;
                end = hi;
                open = true;
            } else if (hi > end) {
                total += hi - end;
                end = hi;
            }
        }
    }
    return DyadicRational::make(total, 2 * spec.m + spec.mw + 2);
}

inline ShrinkTrace shrink_iterate(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                                  const DyadicRational& lambda0, int max_steps) {
    ShrinkTrace trace;
    trace.lambda0 = lambda0;
    if (e.empty()) return trace;
    trace.sets.push_back(e);
    for (int step = 0; step < max_steps && !trace.sets.back().empty(); ++step) {
        const auto& cur = trace.sets.back();
        auto res = shrink_once(cur, rho, fam, lambda0);
        if (DyadicRational(2) * res.next.measure() > cur.measure()) {
            std::ostringstream msg;
            msg << "shrinking step " << step << " does not halve: |E| = " << cur.measure().to_string()
                << ", |E'| = " << res.next.measure().to_string() << ", windows = " << res.windows.size();
            throw HalvingFailure(msg.str());
        }
        trace.nested = trace.nested && res.next.is_subset_of(cur);
        trace.windows.push_back(std::move(res.windows));
        trace.audit_failures.push_back(res.counterexamples.size());
        trace.sets.push_back(std::move(res.next));
    }
    trace.truncated = !trace.sets.back().empty();

    auto b0 = badness_all(e, rho, fam);
    auto c = key_constant(lambda0);
    const auto e0 = e.measure();
    for (std::int64_t k = 1;; ++k) {
        std::vector<std::size_t> band;
        for (std::size_t i = 0; i < fam.size(); ++i)
            if (b0[i] >= c * DyadicRational(k)) band.push_back(i);
        if (band.empty()) break;
        BandRow row;
        row.k = k;
        row.members = band.size();
        row.union_measure = union_measure(fam, band);
        row.bound = e0.shifted(static_cast<int>(-k));
        row.ratio = row.union_measure.to_double() / row.bound.to_double();
        if (k >= 2) {
            auto idx = static_cast<std::size_t>(k - 1);
            CellSet empty(fam.spec());
            const auto& target = idx < trace.sets.size() ? trace.sets[idx] : empty;
            for (auto i : band) row.chain_violations += !rectangle_within(fam[i], target);
        }
        trace.bands.push_back(row);
    }
    return trace;
}

/// One calibration input for lambda0.
struct ShrinkInstance {
    CellSet e;
    ChoiceMap rho;
    RectangleFamily fam;
};

/// True when every shrinking step of every instance halves, up to max_steps.
inline bool halving_holds(const std::vector<ShrinkInstance>& corpus, const DyadicRational& lambda0, int max_steps) {
    for (const auto& inst : corpus) {
        try {
            shrink_iterate(inst.e, inst.rho, inst.fam, lambda0, max_steps);
        } catch (const HalvingFailure&) {
            return false;
        }
    }
    return true;
}

/// Smallest power of two lambda0 >= 1 for which halving holds on the corpus.
inline DyadicRational calibrate_lambda0(const std::vector<ShrinkInstance>& corpus, int max_steps, int max_log2 = 40) {
    for (int p = 0; p <= max_log2; ++p) {
        auto lambda0 = DyadicRational::pow2(p);
        if (halving_holds(corpus, lambda0, max_steps)) return lambda0;
    }
    throw std::runtime_error("no lambda0 up to 2^" + std::to_string(max_log2) + " halves the corpus");
}

// ---------------------------------------------------------------------------
// Unions of good collections

struct GrowthRow {
    std::int64_t n = 0;
    std::size_t members = 0;
    double best_ratio = 0;
    double fit_residual = 0;
};

struct GrowthReport {
    std::vector<GrowthRow> rows;
    /// best_ratio ~ intercept + slope * log2 N.
    LinearFit fit;

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(12);
        os << "N,best_ratio,fit_residual\n";
        for (const auto& r : rows) os << r.n << ',' << r.best_ratio << ',' << r.fit_residual << '\n';
        return os.str();
    }
};

/// Builds N good collections on a common grid.
using CollectionBuilder = std::function<std::vector<RectangleFamily>(std::int64_t n)>;

/// Largest Rayleigh ratio of the maximal operator over the union of the
/// collections produced by the builder, for each N.
inline GrowthReport multi_collection_experiment(const std::vector<std::int64_t>& ns, const CollectionBuilder& builder,
                                                const std::function<std::vector<GridFunction>(const GridSpec&)>& seeds,
                                                int ascent_iters) {
    GrowthReport rep;
    for (auto n : ns)
        if (n < 1) throw std::invalid_argument("collection count must be positive");
    rep.rows.resize(ns.size());
    parallel_for(ns.size(), [&](std::size_t b, std::size_t e) {
        for (auto t = b; t < e; ++t) {
            auto parts = builder(ns[t]);
            if (parts.empty()) throw std::invalid_argument("builder produced no collections");
            for (const auto& p : parts) {
                auto witness = is_good_collection(p);
                if (witness.conflict) {
                    auto [i, j] = *witness.conflict;
                    throw std::invalid_argument("builder produced a collection that is not good: " + p[i].to_string() +
                                                " and " + p[j].to_string());
                }
                if (!witness.good || !witness.organized)
                    throw std::invalid_argument("builder produced a collection without an organized witness");
            }
            auto fam = unite(parts);
            auto report = estimate_norm(fam, seeds(fam.spec()), ascent_iters);
            rep.rows[t] = {ns[t], fam.size(), report.best_ratio, 0};
        }
    });
    std::vector<double> x, y;
    for (const auto& row : rep.rows) {
        x.push_back(std::log2(static_cast<double>(row.n)));
        y.push_back(row.best_ratio);
    }
    rep.fit = fit_line(x, y);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) rep.rows[i].fit_residual = rep.fit.residuals[i];
    return rep;
}

}  // namespace dirmax
