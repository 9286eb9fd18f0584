#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dirmax/dyadic.hpp"
#include "dirmax/family.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/maximal.hpp"
#include "dirmax/parallel.hpp"

namespace dirmax {

struct SlopeEntry {
    SlopeCell slope;
    DyadicRational mu;
    friend bool operator==(const SlopeEntry&, const SlopeEntry&) = default;
};

/// Slope sets T(J) for every dyadic J inside a root interval I with
/// |J| = 2^k w, computed top-down so that a slope cell containing a cell
/// already used by an ancestor is never reused.
class SlopeAssignment {
public:
    SlopeAssignment() = default;
    SlopeAssignment(const DyadicInterval& root, const GridSpec& spec, WindowMode mode)
        : root_(root), spec_(spec), mode_(mode) {
        if (root.level() > spec.mw) throw std::invalid_argument("interval/width mismatch");
        std::size_t nodes = (std::size_t{2} << depth()) - 1;
        chosen_.resize(nodes);
        allowable_.resize(nodes);
    }

    const DyadicInterval& root() const { return root_; }
    const GridSpec& spec() const { return spec_; }
    WindowMode mode() const { return mode_; }
    /// Number of levels below the root that carry slope sets.
    int depth() const { return spec_.mw - root_.level(); }

    bool covers(const DyadicInterval& j) const {
        return root_.contains(j) && j.level() <= spec_.mw;
    }

    const std::vector<SlopeEntry>& chosen(const DyadicInterval& j) const { return chosen_.at(slot(j)); }
    std::vector<SlopeEntry>& chosen(const DyadicInterval& j) { return chosen_.at(slot(j)); }
    const std::vector<SlopeCell>& allowable(const DyadicInterval& j) const { return allowable_.at(slot(j)); }
    std::vector<SlopeCell>& allowable(const DyadicInterval& j) { return allowable_.at(slot(j)); }

    /// Sum of mu over the chosen slopes of J.
    DyadicRational mu(const DyadicInterval& j) const {
        DyadicRational s;
        for (const auto& e : chosen(j)) s += e.mu;
        return s;
    }

    /// Visits every J under the root, parents before children.
    template <class Fn>
    void for_each_interval(Fn&& fn) const {
        for (int d = 0; d <= depth(); ++d)
            for (std::int64_t t = 0; t < (std::int64_t{1} << d); ++t)
                fn(DyadicInterval(root_.level() + d, (root_.index() << d) + t));
    }

    friend bool operator==(const SlopeAssignment&, const SlopeAssignment&) = default;

private:
    std::size_t slot(const DyadicInterval& j) const {
        if (!covers(j)) throw std::out_of_range("interval outside assignment");
        int d = j.level() - root_.level();
        return ((std::size_t{1} << d) - 1) + static_cast<std::size_t>(j.index() - (root_.index() << d));
    }

    DyadicInterval root_{};
    GridSpec spec_{};
    WindowMode mode_ = WindowMode::theta;
    std::vector<std::vector<SlopeEntry>> chosen_;
    std::vector<std::vector<SlopeCell>> allowable_;
};

namespace detail {

inline void assign_recursive(SlopeAssignment& out, const DyadicInterval& j, const OneVarField& v,
                             const DyadicRational& delta, std::vector<SlopeCell>& used) {
    const auto& spec = out.spec();
    const int k = spec.mw - j.level();
    auto counts = window_counts(j, v, k, out.mode());
    auto threshold = delta * DyadicRational(j.cell_count(spec.m));
    auto& allow = out.allowable(j);
    auto& chosen = out.chosen(j);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (DyadicRational(counts[i]) < threshold) continue;
        SlopeCell s(k, static_cast<std::int64_t>(i));
        allow.push_back(s);
        bool blocked = std::any_of(used.begin(), used.end(), [&](const SlopeCell& u) { return s.contains(u); });
        if (!blocked) chosen.push_back({s, DyadicRational::make(counts[i], spec.m)});
    }
    if (j.level() == spec.mw) return;
    auto mark = used.size();
    for (const auto& e : chosen) used.push_back(e.slope);
    assign_recursive(out, j.child(0), v, delta, used);
    assign_recursive(out, j.child(1), v, delta, used);
    used.resize(mark);
}

}  // namespace detail

inline SlopeAssignment compute_assignments(const DyadicInterval& root, const OneVarField& v,
                                           const DyadicRational& delta, WindowMode mode = WindowMode::theta) {
    SlopeAssignment out(root, v.spec(), mode);
    std::vector<SlopeCell> used;
    detail::assign_recursive(out, root, v, delta, used);
    return out;
}

/// Sum of mu_J over all J under the root.
inline DyadicRational carleson_sum(const SlopeAssignment& assign) {
    DyadicRational s;
    assign.for_each_interval([&](const DyadicInterval& j) { s += assign.mu(j); });
    return s;
}

/// Maximal J under the root where the accumulated density
/// sum_{J <= K <= I} mu_K / |K| reaches 2.
inline std::vector<DyadicInterval> stopping_intervals(const SlopeAssignment& assign) {
    std::vector<DyadicInterval> out;
    const DyadicRational two(2);
    auto visit = [&](auto&& self, const DyadicInterval& j, DyadicRational acc) -> void {
        acc += assign.mu(j).shifted(j.level());
        if (acc >= two) {
            out.push_back(j);
            return;
        }
        if (j.level() == assign.spec().mw) return;
        self(self, j.child(0), acc);
        self(self, j.child(1), acc);
    };
    visit(visit, assign.root(), DyadicRational());
    std::sort(out.begin(), out.end());
    return out;
}

/// Total length of a collection of disjoint dyadic intervals.
inline DyadicRational shadow_measure(const std::vector<DyadicInterval>& intervals) {
    DyadicRational s;
    for (const auto& i : intervals) s += i.length();
    return s;
}

// ---------------------------------------------------------------------------
// Pairs (J, s) and their order

struct ThetaPair {
    DyadicInterval interval;
    SlopeCell slope;

    /// Storage order (not the partial order): interval, then slope.
    friend auto operator<=>(const ThetaPair&, const ThetaPair&) = default;
    friend bool operator==(const ThetaPair&, const ThetaPair&) = default;
};

/// The partial order: same interval and center(s) <= center(s'), or the
/// interval strictly inside the other.
inline bool theta_leq(const ThetaPair& a, const ThetaPair& b) {
    if (a.interval == b.interval) return a.slope.center() <= b.slope.center();
    return b.interval.strictly_contains(a.interval);
}

inline std::vector<ThetaPair> theta_pairs(const SlopeAssignment& assign) {
    std::vector<ThetaPair> out;
    assign.for_each_interval([&](const DyadicInterval& j) {
        for (const auto& e : assign.chosen(j)) out.push_back({j, e.slope});
    });
    std::sort(out.begin(), out.end());
    return out;
}

struct ThetaPartition {
    std::vector<ThetaPair> good;
    std::vector<ThetaPair> bad;
};

inline ThetaPartition partition_theta(const SlopeAssignment& assign, const std::vector<DyadicInterval>& stopping) {
    ThetaPartition out;
    for (const auto& p : theta_pairs(assign)) {
        bool bad = std::any_of(stopping.begin(), stopping.end(),
                               [&](const DyadicInterval& s) { return s.contains(p.interval); });
        (bad ? out.bad : out.good).push_back(p);
    }
    return out;
}

/// Maximal pairs strictly below p in the order on all pairs of the assignment.
inline std::vector<ThetaPair> theta_children(const SlopeAssignment& assign, const ThetaPair& p) {
    const auto& here = assign.chosen(p.interval);
    // chosen slopes at one level have distinct centers, stored by index
    const SlopeEntry* lower = nullptr;
    for (const auto& e : here)
        if (e.slope.index() < p.slope.index()) lower = &e;
    if (lower) return {{p.interval, lower->slope}};
    std::vector<ThetaPair> out;
    auto descend = [&](auto&& self, const DyadicInterval& j) -> void {
        if (j.level() > assign.spec().mw) return;
        const auto& ch = assign.chosen(j);
        if (!ch.empty()) {
            out.push_back({j, ch.back().slope});
            return;
        }
        if (j.level() == assign.spec().mw) return;
        self(self, j.child(0));
        self(self, j.child(1));
    };
    if (p.interval.level() < assign.spec().mw) {
        descend(descend, p.interval.child(0));
        descend(descend, p.interval.child(1));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Levels Omega_0, Omega_1, ... of the good pairs: Omega_0 the maximal good
/// pairs, Omega_{n+1} the good children of Omega_n. Stops at the first
/// empty level (not included).
inline std::vector<std::vector<ThetaPair>> omega_levels(const SlopeAssignment& assign,
                                                        const std::vector<ThetaPair>& good) {
    std::set<ThetaPair> good_set(good.begin(), good.end());
    std::vector<ThetaPair> level;
    for (const auto& p : good) {
        bool dominated = false;
        for (const auto& e : assign.chosen(p.interval))
            if (e.slope.index() > p.slope.index() && good_set.count({p.interval, e.slope})) dominated = true;
        for (auto j = p.interval; !dominated && j.level() > assign.root().level();) {
            j = j.parent();
            for (const auto& e : assign.chosen(j))
                if (good_set.count({j, e.slope})) dominated = true;
        }
        if (!dominated) level.push_back(p);
    }
    std::vector<std::vector<ThetaPair>> out;
    while (!level.empty()) {
        std::sort(level.begin(), level.end());
        out.push_back(level);
        std::set<ThetaPair> next;
        for (const auto& p : level)
            for (const auto& c : theta_children(assign, p))
                if (good_set.count(c)) next.insert(c);
        level.assign(next.begin(), next.end());
        if (out.size() > good.size() + 1) throw std::logic_error("omega levels do not terminate");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Point classification

struct PointClasses {
    /// F_n; a cell is placed in the first level whose condition it meets.
    std::vector<CellSet> levels;
    CellSet good;
    CellSet bad;
    /// Members chosen by the cells of each level, as sorted family indices.
    std::vector<std::vector<std::size_t>> collections;
};

inline PointClasses classify_points(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                                    const SlopeAssignment& assign,
                                    const std::vector<std::vector<ThetaPair>>& omega) {
    require_same_spec(e.spec(), rho.spec());
    const auto& spec = e.spec();
    PointClasses out;
    out.good = CellSet(spec);
    out.bad = CellSet(spec);
    std::vector<std::map<DyadicInterval, SlopeCell>> lookup(omega.size());
    for (std::size_t n = 0; n < omega.size(); ++n)
        for (const auto& p : omega[n]) lookup[n].emplace(p.interval, p.slope);
    out.levels.assign(omega.size(), CellSet(spec));
    std::vector<std::set<std::size_t>> members(omega.size());
    for (std::size_t x = 0; x < e.bits().size(); ++x) {
        if (!e.contains(x)) continue;
        auto choice = rho.at(x);
        if (choice == ChoiceMap::none) throw std::invalid_argument("choice escapes interval");
        const auto& rect = fam[static_cast<std::size_t>(choice)];
        if (!assign.root().contains(rect.base())) throw std::invalid_argument("choice escapes interval");
        bool placed = false;
        for (std::size_t n = 0; n < omega.size() && !placed; ++n) {
            for (auto j = rect.base();; j = j.parent()) {
                auto it = lookup[n].find(j);
                if (it != lookup[n].end() && rect.slope().contains(it->second)) {
                    out.levels[n].insert(x);
                    members[n].insert(static_cast<std::size_t>(choice));
                    placed = true;
                    break;
                }
                if (j.level() == assign.root().level()) break;
            }
        }
        (placed ? out.good : out.bad).insert(x);
    }
    for (const auto& s : members) out.collections.emplace_back(s.begin(), s.end());
    return out;
}

// ---------------------------------------------------------------------------
// Generations

struct IntervalRecord {
    DyadicInterval interval;
    CellSet cells;
    SlopeAssignment assignment;
    std::vector<DyadicInterval> stopping;
    ThetaPartition theta;
    std::vector<std::vector<ThetaPair>> omega;
    PointClasses classes;
};

struct GenerationRecord {
    int generation = 0;
    std::vector<IntervalRecord> intervals;
    /// E_j, A_j and E_{j+1}.
    CellSet cells;
    CellSet good;
    CellSet bad;

    std::vector<DyadicInterval> interval_list() const {
        std::vector<DyadicInterval> out;
        for (const auto& r : intervals) out.push_back(r.interval);
        return out;
    }
};

struct DecompositionTree {
    GridSpec spec;
    DyadicRational delta;
    WindowMode mode = WindowMode::theta;
    std::vector<GenerationRecord> generations;
    /// Cells choosing no member.
    CellSet exceptional;
    /// Cells still unclassified when the iteration stopped.
    CellSet remaining;
    bool truncated = false;
};

struct GenerationOptions {
    WindowMode mode = WindowMode::theta;
    int max_gen = 64;
};

/// Runs the interval lemma on I_0 = {[0,1)}, E_0 = covered cells, and then on
/// the stopping intervals and bad cells of each generation.
inline DecompositionTree run_generations(const OneVarField& v, const RectangleFamily& fam, const ChoiceMap& rho,
                                         const DyadicRational& delta, const GenerationOptions& options = {}) {
    const auto& spec = fam.spec();
    require_same_spec(spec, v.spec());
    require_same_spec(spec, rho.spec());
    DecompositionTree tree;
    tree.spec = spec;
    tree.delta = delta;
    tree.mode = options.mode;
    tree.exceptional = rho.exceptional();
    std::vector<DyadicInterval> current{DyadicInterval::unit()};
    CellSet e = rho.covered();
    for (int gen = 0; gen < options.max_gen; ++gen) {
        if (e.empty() || current.empty()) {
            tree.remaining = e;
            return tree;
        }
        GenerationRecord record;
        record.generation = gen;
        record.cells = e;
        record.good = CellSet(spec);
        record.bad = CellSet(spec);
        record.intervals.resize(current.size());
        parallel_for(current.size(), [&](std::size_t b, std::size_t end) {
            for (std::size_t t = b; t < end; ++t) {
                auto& rec = record.intervals[t];
                rec.interval = current[t];
                rec.cells = e.restricted_to_columns(current[t]);
                rec.assignment = compute_assignments(current[t], v, delta, options.mode);
                rec.stopping = stopping_intervals(rec.assignment);
                rec.theta = partition_theta(rec.assignment, rec.stopping);
                rec.omega = omega_levels(rec.assignment, rec.theta.good);
                rec.classes = classify_points(rec.cells, rho, fam, rec.assignment, rec.omega);
            }
        });
        std::vector<DyadicInterval> next;
        for (const auto& rec : record.intervals) {
            record.good |= rec.classes.good;
            record.bad |= rec.classes.bad;
            next.insert(next.end(), rec.stopping.begin(), rec.stopping.end());
        }
        std::sort(next.begin(), next.end());
        e = record.bad;
        current = std::move(next);
        tree.generations.push_back(std::move(record));
    }
    tree.remaining = e;
    tree.truncated = !e.empty() && !current.empty();
    return tree;
}

// ---------------------------------------------------------------------------
// Structural checks

/// Number of Omega levels that can be nonempty: ceil(3 / delta).
inline std::int64_t omega_level_bound(const DyadicRational& delta) {
    // 3 / (n / 2^e) = 3 * 2^e / n
    int128 num = int128{3} << delta.exponent();
    int128 den = delta.numerator();
    return static_cast<std::int64_t>((num + den - 1) / den);
}

/// Violations of |I cap shad(I_k)| <= 2^-(k-j) |I| for I in I_j, k >= j.
inline std::vector<std::string> generation_decay_violations(const DecompositionTree& tree) {
    std::vector<std::string> out;
    const auto& gens = tree.generations;
    for (std::size_t j = 0; j < gens.size(); ++j) {
        for (const auto& rec : gens[j].intervals) {
            for (std::size_t k = j; k <= gens.size(); ++k) {
                std::vector<DyadicInterval> later;
                if (k < gens.size()) {
                    later = gens[k].interval_list();
                } else {
                    for (const auto& r : gens.back().intervals)
                        later.insert(later.end(), r.stopping.begin(), r.stopping.end());
                }
                DyadicRational inside;
                for (const auto& i : later)
                    if (rec.interval.contains(i)) inside += i.length();
                if (rec.interval.length().shifted(-static_cast<int>(k - j)) < inside)
                    out.push_back("generation " + std::to_string(j) + " interval " + rec.interval.to_string() +
                                  " vs generation " + std::to_string(k));
            }
        }
    }
    return out;
}

/// #Theta_K <= (1/delta) sum_{K <= J <= I} mu_J / |J| for every K.
inline bool counting_bound_holds(const SlopeAssignment& assign, const DyadicRational& delta) {
    bool ok = true;
    assign.for_each_interval([&](const DyadicInterval& k) {
        std::int64_t count = 0;
        DyadicRational density;
        for (auto j = k;; j = j.parent()) {
            count += static_cast<std::int64_t>(assign.chosen(j).size());
            density += assign.mu(j).shifted(j.level());
            if (j == assign.root()) break;
        }
        if (density < delta * DyadicRational(count)) ok = false;
    });
    return ok;
}

/// Pairs with intersecting intervals are comparable.
inline bool chain_comparability_holds(const std::vector<ThetaPair>& pairs) {
    for (std::size_t a = 0; a < pairs.size(); ++a)
        for (std::size_t b = a + 1; b < pairs.size(); ++b)
            if (pairs[a].interval.intersects(pairs[b].interval) && !theta_leq(pairs[a], pairs[b]) &&
                !theta_leq(pairs[b], pairs[a]))
                return false;
    return true;
}

/// Distinct pairs of one level have disjoint intervals.
inline bool level_disjoint(const std::vector<ThetaPair>& level) {
    for (std::size_t a = 0; a < level.size(); ++a)
        for (std::size_t b = a + 1; b < level.size(); ++b)
            if (level[a].interval.intersects(level[b].interval)) return false;
    return true;
}

/// Bad cells whose chosen slope is allowable for its base must lie over the
/// stopping intervals.
inline bool bad_cells_in_shadow(const IntervalRecord& rec, const ChoiceMap& rho, const RectangleFamily& fam) {
    for (std::size_t x = 0; x < rec.classes.bad.bits().size(); ++x) {
        if (!rec.classes.bad.contains(x)) continue;
        const auto& r = fam[static_cast<std::size_t>(rho.at(x))];
        const auto& allow = rec.assignment.allowable(r.base());
        if (std::find(allow.begin(), allow.end(), r.slope()) == allow.end()) continue;
        bool inside = std::any_of(rec.stopping.begin(), rec.stopping.end(),
                                  [&](const DyadicInterval& s) { return s.contains(r.base()); });
        if (!inside) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Pieces of the decomposed operator

/// 1_A * T f.
inline GridFunction restricted_T(const ChoiceMap& rho, const RectangleFamily& fam, const CellSet& a,
                                 const GridFunction& f) {
    return apply_T(rho, fam, f).masked(a.bits());
}

/// Adjoint of restricted_T: T*(1_A g).
inline GridFunction restricted_T_adjoint(const ChoiceMap& rho, const RectangleFamily& fam, const CellSet& a,
                                         const GridFunction& g) {
    return apply_T_adjoint(rho, fam, g.masked(a.bits()));
}

struct DominationReport {
    std::size_t checked = 0;
    std::size_t violations = 0;
    /// Same counts restricted to k > j.
    std::size_t checked_later = 0;
    std::size_t violations_later = 0;
    /// Largest (average over rho(x)) / (vertical maximal value) seen among
    /// violations; 0 when there are none.
    double worst_excess = 0;
    double worst_excess_later = 0;
    std::string first_violation;
};

/// For every generation j, interval J of I_j and level n, with
/// h = (T_{j,J,n})* f, compares the average of h over rho(x) with the
/// vertical maximal function of h at x for the cells x of A_k (k >= j)
/// inside J.
inline DominationReport domination_check(const DecompositionTree& tree, const RectangleFamily& fam,
                                         const ChoiceMap& rho, const GridFunction& f) {
    DominationReport rep;
    const auto& spec = tree.spec;
    const auto& gens = tree.generations;
    for (std::size_t j = 0; j < gens.size(); ++j) {
        for (const auto& rec : gens[j].intervals) {
            for (std::size_t n = 0; n < rec.classes.levels.size(); ++n) {
                const auto& piece = rec.classes.levels[n];
                if (piece.empty()) continue;
                auto h = restricted_T_adjoint(rho, fam, piece, f);
                auto m2 = m2_vertical(h);
                for (std::size_t k = j; k < gens.size(); ++k) {
                    const auto& ak = gens[k].good;
                    auto c0 = rec.interval.first_cell(spec.m);
                    auto nc = rec.interval.cell_count(spec.m);
                    for (auto c = c0; c < c0 + nc; ++c) {
                        for (std::int64_t r = 0; r < spec.side(); ++r) {
                            auto x = spec.index(c, r);
                            if (!ak.contains(x)) continue;
                            auto avg = average(fam[static_cast<std::size_t>(rho.at(x))], h);
                            const auto& bound = m2.values[x];
                            bool ok = (bound <=> avg) >= 0;
                            ++rep.checked;
                            if (k > j) ++rep.checked_later;
                            if (ok) continue;
                            ++rep.violations;
                            if (k > j) ++rep.violations_later;
                            double ex = bound.to_double() > 0 ? avg.to_double() / bound.to_double() : INFINITY;
                            rep.worst_excess = std::max(rep.worst_excess, ex);
                            if (k > j) rep.worst_excess_later = std::max(rep.worst_excess_later, ex);
                            if (rep.first_violation.empty())
                                rep.first_violation = "j=" + std::to_string(j) + " J=" + rec.interval.to_string() +
                                                      " n=" + std::to_string(n) + " k=" + std::to_string(k) +
                                                      " cell=(" + std::to_string(c) + "," + std::to_string(r) +
                                                      ") avg=" + avg.to_string() + " m2=" + bound.to_string();
                        }
                    }
                }
            }
        }
    }
    return rep;
}

namespace detail {

inline GridFunction random_grid(const GridSpec& spec, std::uint64_t seed, int bits = 8) {
    std::mt19937_64 rng(seed);
    std::vector<int128> num(spec.cell_count());
    for (auto& x : num) x = static_cast<int128>(rng() >> (64 - bits));
    return GridFunction::from_scaled(spec, num, bits);
}

}  // namespace detail

struct DiagonalRow {
    int generation = 0;
    std::size_t collections = 0;
    double ratio = 0;
};

/// Measured ||T_j f|| / ||f|| on seeded random f for every generation,
/// together with the number of nonempty good collections.
inline std::vector<DiagonalRow> diagonal_ratios(const DecompositionTree& tree, const RectangleFamily& fam,
                                                const ChoiceMap& rho, std::uint64_t seed, int samples = 4) {
    std::vector<DiagonalRow> out;
    for (std::size_t j = 0; j < tree.generations.size(); ++j) {
        const auto& gen = tree.generations[j];
        std::size_t levels = 0;
        for (const auto& rec : gen.intervals) levels = std::max(levels, rec.classes.levels.size());
        double best = 0;
        for (int s = 0; s < samples; ++s) {
            auto f = detail::random_grid(tree.spec, seed + static_cast<std::uint64_t>(s));
            best = std::max(best, l2_ratio(restricted_T(rho, fam, gen.good, f), f));
        }
        out.push_back({static_cast<int>(j), levels, best});
    }
    return out;
}

/// Power-iteration estimate of ||T_j T_k^*|| for all generation pairs.
inline std::vector<std::vector<double>> piece_norms(const DecompositionTree& tree, const RectangleFamily& fam,
                                                    const ChoiceMap& rho, std::uint64_t seed, int iters = 12) {
    const auto g = tree.generations.size();
    std::vector<std::vector<double>> table(g, std::vector<double>(g, 0.0));
    for (std::size_t j = 0; j < g; ++j) {
        for (std::size_t k = 0; k < g; ++k) {
            const auto& aj = tree.generations[j].good;
            const auto& ak = tree.generations[k].good;
            auto f = detail::random_grid(tree.spec, seed + j * g + k);
            double est = 0;
            for (int it = 0; it < iters; ++it) {
                auto y = restricted_T(rho, fam, aj, restricted_T_adjoint(rho, fam, ak, f));
                est = l2_ratio(y, f);
                auto back = restricted_T(rho, fam, ak, restricted_T_adjoint(rho, fam, aj, y));
                if (back.is_zero()) break;
                f = back.quantized(24);
            }
            table[j][k] = est;
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// JSON export

namespace detail {

inline nlohmann::ordered_json interval_json(const DyadicInterval& i) {
    return nlohmann::ordered_json::array({i.level(), i.index()});
}

inline nlohmann::ordered_json pair_json(const ThetaPair& p) {
    nlohmann::ordered_json o;
    o["J"] = interval_json(p.interval);
    o["s"] = nlohmann::ordered_json::array({p.slope.level(), p.slope.index()});
    return o;
}

inline nlohmann::ordered_json cells_json(const CellSet& s) { return s.run_lengths(); }

}  // namespace detail

inline nlohmann::ordered_json to_json(const DecompositionTree& tree) {
    using nlohmann::ordered_json;
    ordered_json root;
    root["format"] = "decomposition 1";
    root["m"] = tree.spec.m;
    root["mw"] = tree.spec.mw;
    root["offstep"] = to_string(tree.spec.offset_step);
    root["delta"] = tree.delta.to_string();
    root["window"] = to_string(tree.mode);
    root["truncated"] = tree.truncated;
    root["exceptional"] = detail::cells_json(tree.exceptional);
    root["remaining"] = detail::cells_json(tree.remaining);
    ordered_json gens = ordered_json::array();
    for (const auto& g : tree.generations) {
        ordered_json gj;
        gj["generation"] = g.generation;
        gj["E"] = detail::cells_json(g.cells);
        gj["A"] = detail::cells_json(g.good);
        gj["E_next"] = detail::cells_json(g.bad);
        ordered_json ivs = ordered_json::array();
        for (const auto& rec : g.intervals) {
            ordered_json ij;
            ij["I"] = detail::interval_json(rec.interval);
            ordered_json tmap = ordered_json::array();
            rec.assignment.for_each_interval([&](const DyadicInterval& j) {
                const auto& ch = rec.assignment.chosen(j);
                if (ch.empty()) return;
                ordered_json entry;
                entry["J"] = detail::interval_json(j);
                ordered_json slopes = ordered_json::array();
                for (const auto& e : ch) {
                    ordered_json se;
                    se["s"] = ordered_json::array({e.slope.level(), e.slope.index()});
                    se["mu"] = e.mu.to_string();
                    slopes.push_back(se);
                }
                entry["T"] = slopes;
                tmap.push_back(entry);
            });
            ij["assignments"] = tmap;
            ordered_json stops = ordered_json::array();
            for (const auto& s : rec.stopping) stops.push_back(detail::interval_json(s));
            ij["stopping"] = stops;
            ordered_json omega = ordered_json::array();
            for (const auto& level : rec.omega) {
                ordered_json lj = ordered_json::array();
                for (const auto& p : level) lj.push_back(detail::pair_json(p));
                omega.push_back(lj);
            }
            ij["omega"] = omega;
            ordered_json levels = ordered_json::array();
            for (std::size_t n = 0; n < rec.classes.levels.size(); ++n) {
                ordered_json lj;
                lj["cells"] = detail::cells_json(rec.classes.levels[n]);
                lj["members"] = rec.classes.collections[n];
                levels.push_back(lj);
            }
            ij["classes"] = levels;
            ij["good"] = detail::cells_json(rec.classes.good);
            ij["bad"] = detail::cells_json(rec.classes.bad);
            ivs.push_back(ij);
        }
        gj["intervals"] = ivs;
        gens.push_back(gj);
    }
    root["generations"] = gens;
    return root;
}

}  // namespace dirmax
