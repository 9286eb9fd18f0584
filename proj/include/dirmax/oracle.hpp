#pragma once

// Brute-force reference implementations. Everything here is recomputed
// from the definitions with DyadicRational arithmetic only; no grid,
// parallelogram or family code is shared with the optimized modules.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "dirmax/dyadic.hpp"

namespace dirmax::oracle {

using Q = DyadicRational;

struct Grid {
    int m = 0;
    int mw = 0;
    /// Offsets are multiples of 2^-offset_exp.
    int offset_exp = 0;

    std::int64_t side() const { return std::int64_t{1} << m; }
    Q cell() const { return Q::pow2(-m); }
    Q width() const { return Q::pow2(-mw); }
    Q column_center(std::int64_t c) const { return Q::make(2 * c + 1, m + 1); }
    Q row_lo(std::int64_t r) const { return Q::make(r, m); }
    Q row_hi(std::int64_t r) const { return Q::make(r + 1, m); }
    std::size_t index(std::int64_t c, std::int64_t r) const { return static_cast<std::size_t>(c * side() + r); }
};

/// A rectangle: base [base * L, (base + 1) * L) with L = 2^k w, slope cell
/// [slope 2^-k, (slope + 1) 2^-k), offset b; column c of the base carries
/// the vertical segment [s x_c + b, s x_c + b + w) with s the cell center.
struct Rect {
    int k = 0;
    std::int64_t base = 0;
    std::int64_t slope = 0;
    Q offset;

    auto key() const { return std::make_tuple(k, base, slope, offset); }
    friend bool operator==(const Rect& a, const Rect& b) { return a.key() == b.key(); }
    friend bool operator<(const Rect& a, const Rect& b) { return a.key() < b.key(); }
};

inline Q base_lo(const Grid& g, const Rect& r) { return Q::make(r.base, g.mw - r.k); }
inline Q base_hi(const Grid& g, const Rect& r) { return Q::make(r.base + 1, g.mw - r.k); }
inline Q slope_lo(const Rect& r) { return Q::make(r.slope, r.k); }
inline Q slope_hi(const Rect& r) { return Q::make(r.slope + 1, r.k); }
inline Q slope_value(const Rect& r) { return Q::make(2 * r.slope + 1, r.k + 1); }
inline Q area(const Grid& g, const Rect& r) { return (base_hi(g, r) - base_lo(g, r)) * g.width(); }

/// 1/|R| (always a power of two).
inline Q area_inverse(const Grid& g, const Rect& r) {
    auto a = area(g, r);
    return Q::pow2(a.exponent());
}

inline bool over_column(const Grid& g, const Rect& r, std::int64_t c) {
    auto x = g.column_center(c);
    return base_lo(g, r) <= x && x < base_hi(g, r);
}

inline std::pair<Q, Q> segment(const Grid& g, const Rect& r, std::int64_t c) {
    auto lo = slope_value(r) * g.column_center(c) + r.offset;
    return {lo, lo + g.width()};
}

/// Area of the rectangle inside cell (c, r).
inline Q overlap(const Grid& g, const Rect& rect, std::int64_t c, std::int64_t r) {
    if (!over_column(g, rect, c)) return {};
    auto [lo, hi] = segment(g, rect, c);
    auto a = max(lo, g.row_lo(r));
    auto b = min(hi, g.row_hi(r));
    return a < b ? (b - a) * g.cell() : Q();
}

/// The cell center lies in the rectangle.
inline bool member(const Grid& g, const Rect& rect, std::int64_t c, std::int64_t r) {
    if (!over_column(g, rect, c)) return false;
    auto [lo, hi] = segment(g, rect, c);
    auto y = Q::make(2 * r + 1, g.m + 1);
    return lo <= y && y < hi;
}

/// Lowest and highest point over the base (the whole vertical projection).
inline std::pair<Q, Q> vertical_projection(const Grid& g, const Rect& rect) {
    std::optional<Q> lo, hi;
    for (std::int64_t c = 0; c < g.side(); ++c) {
        if (!over_column(g, rect, c)) continue;
        auto [a, b] = segment(g, rect, c);
        lo = lo ? min(*lo, a) : a;
        hi = hi ? max(*hi, b) : b;
    }
    return {*lo, *hi};
}

// ---------------------------------------------------------------------------
// Enumeration

/// Every rectangle inside the unit square whose slope cell contains the
/// field on at least a delta fraction of its base columns.
inline std::vector<Rect> enumerate(const Grid& g, const std::vector<Q>& v, const Q& delta) {
    std::vector<Rect> out;
    for (int k = 0; k <= g.mw; ++k) {
        for (std::int64_t base = 0; base < (std::int64_t{1} << (g.mw - k)); ++base) {
            for (std::int64_t slope = 0; slope < (std::int64_t{1} << k); ++slope) {
                Rect r{k, base, slope, Q()};
                std::int64_t cols = 0, hits = 0;
                for (std::int64_t c = 0; c < g.side(); ++c) {
                    if (!over_column(g, r, c)) continue;
                    ++cols;
                    hits += slope_lo(r) <= v[static_cast<std::size_t>(c)] && v[static_cast<std::size_t>(c)] < slope_hi(r);
                }
                if (Q(hits) < delta * Q(cols)) continue;
                for (std::int64_t t = 0;; ++t) {
                    r.offset = Q::make(t, g.offset_exp);
                    // the continuous parallelogram over the base stays below 1
                    if (Q(1) < slope_value(r) * base_hi(g, r) + r.offset + g.width()) break;
                    out.push_back(r);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Maximal operator

inline Q integral(const Grid& g, const Rect& rect, const std::vector<Q>& f) {
    Q s;
    for (std::int64_t c = 0; c < g.side(); ++c)
        for (std::int64_t r = 0; r < g.side(); ++r) {
            auto ov = overlap(g, rect, c, r);
            if (ov.sign() != 0) s += ov * f[g.index(c, r)];
        }
    return s;
}

struct MaximalOut {
    std::vector<Q> values;
    /// Index of the first maximizing rectangle, -1 where none contains the cell.
    std::vector<std::int64_t> choice;
};

inline MaximalOut maximal(const Grid& g, const std::vector<Rect>& rects, const std::vector<Q>& f) {
    std::vector<Q> avg;
    for (const auto& r : rects) avg.push_back(integral(g, r, f) * area_inverse(g, r));
    MaximalOut out{std::vector<Q>(f.size()), std::vector<std::int64_t>(f.size(), -1)};
    for (std::size_t i = 0; i < rects.size(); ++i)
        for (std::int64_t c = 0; c < g.side(); ++c)
            for (std::int64_t r = 0; r < g.side(); ++r) {
                if (!member(g, rects[i], c, r)) continue;
                auto x = g.index(c, r);
                if (out.choice[x] < 0 || out.values[x] < avg[i]) {
                    out.values[x] = avg[i];
                    out.choice[x] = static_cast<std::int64_t>(i);
                }
            }
    return out;
}

/// sum over cells x with a choice of g(x) * (cell-averaged 1_{rho(x)}) / |rho(x)|.
inline std::vector<Q> adjoint(const Grid& g, const std::vector<Rect>& rects, const std::vector<std::int64_t>& choice,
                              const std::vector<Q>& h) {
    std::vector<Q> weight(rects.size());
    for (std::size_t x = 0; x < choice.size(); ++x)
        if (choice[x] >= 0) weight[static_cast<std::size_t>(choice[x])] += h[x] * g.cell() * g.cell();
    std::vector<Q> out(h.size());
    for (std::size_t i = 0; i < rects.size(); ++i) {
        if (weight[i].sign() == 0) continue;
        auto coef = weight[i] * area_inverse(g, rects[i]);
        for (std::int64_t c = 0; c < g.side(); ++c)
            for (std::int64_t r = 0; r < g.side(); ++r) {
                auto ov = overlap(g, rects[i], c, r);
                if (ov.sign() != 0) out[g.index(c, r)] += coef * ov * Q::pow2(2 * g.m);
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stopping time

struct Interval {
    int level = 0;
    std::int64_t index = 0;
    auto key() const { return std::make_pair(level, index); }
    friend bool operator<(const Interval& a, const Interval& b) { return a.key() < b.key(); }
    friend bool operator==(const Interval& a, const Interval& b) { return a.key() == b.key(); }
    bool inside(const Interval& o) const { return level >= o.level && (index >> (level - o.level)) == o.index; }
};

struct Slope {
    int level = 0;
    std::int64_t index = 0;
    auto key() const { return std::make_pair(level, index); }
    friend bool operator<(const Slope& a, const Slope& b) { return a.key() < b.key(); }
    friend bool operator==(const Slope& a, const Slope& b) { return a.key() == b.key(); }
    bool inside(const Slope& o) const { return level >= o.level && (index >> (level - o.level)) == o.index; }
    Q center() const { return Q::make(2 * index + 1, level + 1); }
};

/// Chosen slope cells and their mu for every interval under the root.
struct Assignment {
    std::map<Interval, std::vector<std::pair<Slope, Q>>> chosen;
};

/// Popular slope cells of J (theta window: the field value lies in the
/// cell) that contain no cell chosen by a strict ancestor under the root.
inline Assignment assign(const Grid& g, const Interval& root, const std::vector<Q>& v, const Q& delta) {
    Assignment out;
    std::vector<Interval> order;
    for (int level = root.level; level <= g.mw; ++level)
        for (std::int64_t i = 0; i < (std::int64_t{1} << level); ++i)
            if (Interval{level, i}.inside(root)) order.push_back({level, i});
    for (const auto& j : order) {
        int k = g.mw - j.level;
        auto lo = Q::make(j.index, j.level);
        auto hi = Q::make(j.index + 1, j.level);
        std::int64_t cols = 0;
        std::map<std::int64_t, std::int64_t> counts;
        for (std::int64_t c = 0; c < g.side(); ++c) {
            auto x = g.column_center(c);
            if (x < lo || !(x < hi)) continue;
            ++cols;
            for (std::int64_t s = 0; s < (std::int64_t{1} << k); ++s)
                if (Q::make(s, k) <= v[static_cast<std::size_t>(c)] && v[static_cast<std::size_t>(c)] < Q::make(s + 1, k))
                    ++counts[s];
        }
        auto& list = out.chosen[j];
        for (auto [s, n] : counts) {
            if (Q(n) < delta * Q(cols)) continue;
            Slope cell{k, s};
            bool blocked = false;
            for (const auto& [anc, entries] : out.chosen) {
                if (anc == j || !j.inside(anc)) continue;
                for (const auto& e : entries) blocked |= e.first.inside(cell);
            }
            if (!blocked) list.push_back({cell, Q::make(n, g.m)});
        }
    }
    return out;
}

/// Maximal J whose accumulated density sum_{J <= K <= root} mu_K / |K| is at least 2.
inline std::vector<Interval> stopping(const Grid& g, const Interval& root, const Assignment& a) {
    std::vector<Interval> hits;
    for (const auto& [j, _] : a.chosen) {
        Q acc;
        for (const auto& [k, entries] : a.chosen) {
            if (!j.inside(k)) continue;
            for (const auto& e : entries) acc += e.second * Q::pow2(k.level);
        }
        if (Q(2) <= acc) hits.push_back(j);
    }
    std::vector<Interval> out;
    for (const auto& j : hits) {
        bool maximal = true;
        for (const auto& o : hits) maximal &= !(j.inside(o) && !(j == o));
        if (maximal) out.push_back(j);
    }
    (void)g;
    (void)root;
    std::sort(out.begin(), out.end());
    return out;
}

struct Pair {
    Interval interval;
    Slope slope;
    auto key() const { return std::make_pair(interval.key(), slope.key()); }
    friend bool operator<(const Pair& a, const Pair& b) { return a.key() < b.key(); }
    friend bool operator==(const Pair& a, const Pair& b) { return a.key() == b.key(); }
};

/// a < b: same interval with smaller slope center, or a strictly smaller interval.
inline bool below(const Pair& a, const Pair& b) {
    if (a.interval == b.interval) return a.slope.center() < b.slope.center();
    return a.interval.inside(b.interval);
}

/// Omega levels: Omega_0 = maximal good pairs; Omega_{n+1} = good pairs that
/// are maximal among all pairs strictly below some member of Omega_n.
inline std::vector<std::vector<Pair>> omega(const Assignment& a, const std::vector<Interval>& stops) {
    std::vector<Pair> all, good;
    for (const auto& [j, entries] : a.chosen)
        for (const auto& e : entries) all.push_back({j, e.first});
    for (const auto& p : all) {
        bool bad = false;
        for (const auto& s : stops) bad |= p.interval.inside(s);
        if (!bad) good.push_back(p);
    }
    std::set<Pair> good_set(good.begin(), good.end());
    std::vector<Pair> level;
    for (const auto& p : good) {
        bool top = true;
        for (const auto& q : good) top &= !below(p, q);
        if (top) level.push_back(p);
    }
    std::vector<std::vector<Pair>> out;
    while (!level.empty()) {
        std::sort(level.begin(), level.end());
        out.push_back(level);
        std::set<Pair> next;
        for (const auto& p : level)
            for (const auto& q : all) {
                if (!below(q, p) || !good_set.count(q)) continue;
                bool maximal = true;
                for (const auto& r : all) maximal &= !(below(q, r) && below(r, p));
                if (maximal) next.insert(q);
            }
        level.assign(next.begin(), next.end());
    }
    return out;
}

/// Omega level of a chosen rectangle: the first n with a pair (J, s) of
/// Omega_n such that J contains the base and s lies inside the slope cell;
/// -1 when there is none.
inline int classify(const Grid& g, const Rect& chosen, const std::vector<std::vector<Pair>>& levels) {
    Interval base{g.mw - chosen.k, chosen.base};
    Slope slope{chosen.k, chosen.slope};
    for (std::size_t n = 0; n < levels.size(); ++n)
        for (const auto& p : levels[n])
            if (base.inside(p.interval) && p.slope.inside(slope)) return static_cast<int>(n);
    return -1;
}

// ---------------------------------------------------------------------------
// Badness

inline bool base_inside(const Grid& g, const Rect& q, const Q& lo, const Q& hi) {
    return lo <= base_lo(g, q) && base_hi(g, q) <= hi;
}

/// B_R^E for every rectangle: the average over R of T*(1_{E_I}), where E_I
/// keeps the cells of E whose chosen rectangle has its base inside the base
/// I of R.
inline std::vector<Q> badness(const Grid& g, const std::vector<Rect>& rects, const std::vector<std::int64_t>& choice,
                              const std::vector<bool>& e) {
    std::map<std::pair<int, std::int64_t>, std::vector<Q>> by_base;
    std::vector<Q> out;
    for (const auto& r : rects) {
        auto key = std::make_pair(r.k, r.base);
        auto it = by_base.find(key);
        if (it == by_base.end()) {
            auto lo = base_lo(g, r), hi = base_hi(g, r);
            std::vector<Q> local(e.size());
            for (std::size_t x = 0; x < e.size(); ++x)
                if (e[x] && choice[x] >= 0 && base_inside(g, rects[static_cast<std::size_t>(choice[x])], lo, hi))
                    local[x] = Q(1);
            it = by_base.emplace(key, adjoint(g, rects, choice, local)).first;
        }
        out.push_back(integral(g, r, it->second) * area_inverse(g, r));
    }
    return out;
}

struct ShrinkOut {
    std::vector<bool> next;
    /// Cells where the maximal function of T*(1_E) is at least lambda0 / 2.
    std::vector<bool> high;
    std::vector<std::pair<Interval, Interval>> windows;
};

/// E' by replaying the definition: for every horizontal I (levels 0..mw) and
/// vertical K (levels 0..m), B^out_{I,K} >= lambda0 and B^out_{I,3K} <
/// lambda0, where "out" means the vertical projection of rho(x) is not inside
/// the concentric triple of the window, and windows are clipped to [0,1].
inline ShrinkOut shrink_once(const Grid& g, const std::vector<Rect>& rects, const std::vector<std::int64_t>& choice,
                             const std::vector<bool>& e, const Q& lambda0) {
    ShrinkOut out{std::vector<bool>(e.size(), false), std::vector<bool>(e.size(), false), {}};
    std::vector<std::pair<Q, Q>> proj;
    for (const auto& r : rects) proj.push_back(vertical_projection(g, r));
    // mass of each rectangle inside each row band
    std::vector<std::vector<Q>> row_mass(rects.size(), std::vector<Q>(static_cast<std::size_t>(g.side())));
    for (std::size_t i = 0; i < rects.size(); ++i)
        for (std::int64_t c = 0; c < g.side(); ++c)
            for (std::int64_t r = 0; r < g.side(); ++r) row_mass[i][static_cast<std::size_t>(r)] += overlap(g, rects[i], c, r);
    auto mass_in = [&](std::size_t i, const Q& lo, const Q& hi) {
        Q s;
        for (std::int64_t r = 0; r < g.side(); ++r)
            if (lo <= g.row_lo(r) && g.row_hi(r) <= hi) s += row_mass[i][static_cast<std::size_t>(r)];
        return s;
    };
    for (int il = 0; il <= g.mw; ++il) {
        for (std::int64_t ii = 0; ii < (std::int64_t{1} << il); ++ii) {
            auto ilo = Q::make(ii, il), ihi = Q::make(ii + 1, il);
            std::vector<std::int64_t> counts(rects.size(), 0);
            for (std::size_t x = 0; x < choice.size(); ++x) {
                if (!e[x] || choice[x] < 0) continue;
                auto idx = static_cast<std::size_t>(choice[x]);
                if (ilo <= base_lo(g, rects[idx]) && base_hi(g, rects[idx]) <= ihi) ++counts[idx];
            }
            for (int kl = 0; kl <= g.m; ++kl) {
                for (std::int64_t ki = 0; ki < (std::int64_t{1} << kl); ++ki) {
                    auto len = Q::pow2(-kl);
                    auto klo = Q::make(ki, kl), khi = Q::make(ki + 1, kl);
                    auto t_lo = max(Q(), klo - len), t_hi = min(Q(1), khi + len);
                    Q out_k, out_3k;
                    for (std::size_t i = 0; i < rects.size(); ++i) {
                        if (counts[i] == 0) continue;
                        auto w = Q(counts[i]) * g.cell() * g.cell() * area_inverse(g, rects[i]);
                        auto [plo, phi] = proj[i];
                        if (plo < klo - len || khi + len < phi) out_k += w * mass_in(i, klo, khi);
                        if (plo < klo - Q(4) * len || khi + Q(4) * len < phi) out_3k += w * mass_in(i, t_lo, t_hi);
                    }
                    auto width = ihi - ilo;
                    bool big = lambda0 * width * len <= out_k;
                    bool small = out_3k < lambda0 * width * (t_hi - t_lo);
                    if (!big || !small) continue;
                    out.windows.push_back({{il, ii}, {kl, ki}});
                    for (std::int64_t c = 0; c < g.side(); ++c) {
                        auto x = g.column_center(c);
                        if (x < ilo || !(x < ihi)) continue;
                        for (std::int64_t r = 0; r < g.side(); ++r)
                            if (t_lo <= g.row_lo(r) && g.row_hi(r) <= t_hi) out.next[g.index(c, r)] = true;
                    }
                }
            }
        }
    }
    std::vector<Q> ind(e.size());
    for (std::size_t x = 0; x < e.size(); ++x) ind[x] = e[x] ? Q(1) : Q();
    auto mt = maximal(g, rects, adjoint(g, rects, choice, ind));
    for (std::size_t x = 0; x < e.size(); ++x) out.high[x] = lambda0 <= Q(2) * mt.values[x];
    return out;
}

}  // namespace dirmax::oracle
