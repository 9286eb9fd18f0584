#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dirmax/dyadic.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/parallelogram.hpp"

namespace dirmax {

struct FamilyParams {
    GridSpec spec;
    DyadicRational delta{1};

    static FamilyParams make(const GridSpec& spec, const DyadicRational& delta) {
        if (delta.sign() <= 0 || DyadicRational(1) < delta)
            throw std::invalid_argument("density must satisfy 0 < delta <= 1");
        return {spec, delta};
    }
    friend bool operator==(const FamilyParams&, const FamilyParams&) = default;
};

enum class Provenance { enumerated, constructed, subfamily };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::enumerated: return "enumerated";
        case Provenance::constructed: return "constructed";
        case Provenance::subfamily: return "subfamily";
    }
    return "constructed";
}

inline Provenance parse_provenance(const std::string& s) {
    if (s == "enumerated") return Provenance::enumerated;
    if (s == "constructed") return Provenance::constructed;
    if (s == "subfamily") return Provenance::subfamily;
    throw std::invalid_argument("unknown provenance '" + s + "'");
}

/// Finite set of parallelograms kept in canonical order, so that a member's
/// index doubles as its rank for tie-breaking.
class RectangleFamily {
public:
    RectangleFamily() = default;

    RectangleFamily(FamilyParams params, std::vector<Parallelogram> members,
                    Provenance provenance = Provenance::constructed)
        : params_(params), members_(std::move(members)), provenance_(provenance) {
        for (const auto& r : members_) require_same_spec(r.spec(), params_.spec);
        if (!std::is_sorted(members_.begin(), members_.end())) std::sort(members_.begin(), members_.end());
        if (std::adjacent_find(members_.begin(), members_.end()) != members_.end())
            throw std::invalid_argument("duplicate family member");
    }

    const FamilyParams& params() const { return params_; }
    const GridSpec& spec() const { return params_.spec; }
    const std::vector<Parallelogram>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }
    const Parallelogram& operator[](std::size_t i) const { return members_[i]; }
    Provenance provenance() const { return provenance_; }

    std::optional<std::size_t> find(const Parallelogram& r) const {
        auto it = std::lower_bound(members_.begin(), members_.end(), r);
        if (it == members_.end() || !(*it == r)) return std::nullopt;
        return static_cast<std::size_t>(it - members_.begin());
    }

    RectangleFamily subfamily(const std::vector<std::size_t>& indices) const {
        std::vector<Parallelogram> out;
        out.reserve(indices.size());
        for (auto i : indices) out.push_back(members_.at(i));
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return {params_, std::move(out), Provenance::subfamily};
    }

    friend bool operator==(const RectangleFamily& a, const RectangleFamily& b) {
        return a.params_ == b.params_ && a.members_ == b.members_;
    }

private:
    FamilyParams params_{};
    std::vector<Parallelogram> members_;
    Provenance provenance_ = Provenance::constructed;
};

/// Union of families on the same grid; repeated members are kept once.
inline RectangleFamily unite(const std::vector<RectangleFamily>& parts) {
    if (parts.empty()) throw std::invalid_argument("nothing to unite");
    std::vector<Parallelogram> all;
    for (const auto& p : parts) {
        require_same_spec(p.spec(), parts.front().spec());
        all.insert(all.end(), p.members().begin(), p.members().end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return {parts.front().params(), std::move(all), Provenance::constructed};
}

// ---------------------------------------------------------------------------
// Slope windows and density

/// Slope window of R: width w / L(R) centered at the slope of R, which is
/// exactly the slope cell of R.
inline Span theta(const Parallelogram& r) {
    auto half = DyadicRational::pow2(-r.level() - 1);
    return {r.slope().center() - half, r.slope().center() + half};
}

namespace detail {

inline std::int64_t count_in_cell(const OneVarField& v, std::int64_t c0, std::int64_t n, int level,
                                  std::int64_t index) {
    std::int64_t count = 0;
    for (auto c = c0; c < c0 + n; ++c) count += v.floor_scaled(c, level) == index;
    return count;
}

}  // namespace detail

/// Measure of the part of R on which the field lies in theta(R).
inline DyadicRational v_measure(const Parallelogram& r, const OneVarField& v) {
    require_same_spec(r.spec(), v.spec());
    auto count = detail::count_in_cell(v, r.column_begin(), r.column_count(), r.level(), r.slope().index());
    return DyadicRational::make(count, r.spec().mw + r.spec().m);
}

inline bool is_dense(const Parallelogram& r, const OneVarField& v, const DyadicRational& delta) {
    require_same_spec(r.spec(), v.spec());
    auto count = detail::count_in_cell(v, r.column_begin(), r.column_count(), r.level(), r.slope().index());
    return delta * DyadicRational(r.column_count()) <= DyadicRational(count);
}

struct EnumerationLimits {
    int max_m = 12;
    std::size_t max_members = 40'000'000;
};

/// All dense parallelograms contained in the unit square, in canonical order.
inline RectangleFamily enumerate_family(const FamilyParams& params, const OneVarField& v,
                                        const EnumerationLimits& limits = {}) {
    const auto& spec = params.spec;
    require_same_spec(spec, v.spec());
    if (spec.m > limits.max_m) throw std::length_error("family too large");
    std::vector<Parallelogram> members;
    const int oe = spec.offset_exponent();
    for (int k = 0; k <= spec.mw; ++k) {
        const int base_level = spec.mw - k;
        const std::int64_t slopes = std::int64_t{1} << k;
        std::vector<std::int64_t> hist(static_cast<std::size_t>(slopes) + 1);
        for (std::int64_t i = 0; i < (std::int64_t{1} << base_level); ++i) {
            DyadicInterval base(base_level, i);
            auto c0 = base.first_cell(spec.m);
            auto n = base.cell_count(spec.m);
            std::fill(hist.begin(), hist.end(), 0);
            for (auto c = c0; c < c0 + n; ++c) ++hist[static_cast<std::size_t>(v.floor_scaled(c, k))];
            const auto threshold = params.delta * DyadicRational(n);
            for (std::int64_t j = 0; j < slopes; ++j) {
                if (DyadicRational(hist[static_cast<std::size_t>(j)]) < threshold) continue;
                // largest offset: s sup(I) + b + w <= 1
                auto room = DyadicRational(1) - spec.width() - SlopeCell(k, j).center() * base.hi();
                if (room.sign() < 0) continue;
                auto t_max = static_cast<std::int64_t>(room.scaled_to(std::max(room.exponent(), oe)) >>
                                                       (std::max(room.exponent(), oe) - oe));
                if (members.size() + static_cast<std::size_t>(t_max + 1) > limits.max_members)
                    throw std::length_error("family too large");
                for (std::int64_t t = 0; t <= t_max; ++t) members.push_back(Parallelogram::from_units(spec, k, i, j, t));
            }
        }
    }
    return {params, std::move(members), Provenance::enumerated};
}

// ---------------------------------------------------------------------------
// Popularity windows on dyadic intervals

/// Which slope window decides that a column's field value supports a slope
/// cell s of level k: the cell itself (half-width 2^-k-1), or the wider
/// window of half-width 2^-k around its center.
enum class WindowMode { theta, wide };

inline std::string to_string(WindowMode m) { return m == WindowMode::theta ? "theta" : "wide"; }

namespace detail {

inline void require_interval_level(const DyadicInterval& j, const GridSpec& spec) {
    if (j.level() > spec.mw) throw std::invalid_argument("interval/width mismatch");
}

inline bool in_window(const OneVarField& v, std::int64_t c, const SlopeCell& s, WindowMode mode) {
    if (mode == WindowMode::theta) return v.floor_scaled(c, s.level()) == s.index();
    auto h = v.floor_scaled(c, s.level() + 1);
    return h >= 2 * s.index() - 1 && h <= 2 * s.index() + 2;
}

/// Column counts per slope cell of level k for the columns of J.
inline std::vector<std::int64_t> window_counts(const DyadicInterval& j, const OneVarField& v, int k,
                                               WindowMode mode) {
    const auto& spec = v.spec();
    auto c0 = j.first_cell(spec.m);
    auto n = j.cell_count(spec.m);
    const std::int64_t cells = std::int64_t{1} << k;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(cells), 0);
    if (mode == WindowMode::theta) {
        for (auto c = c0; c < c0 + n; ++c) {
            auto idx = v.floor_scaled(c, k);
            if (idx < cells) ++counts[static_cast<std::size_t>(idx)];
        }
        return counts;
    }
    // half-cell h lies in the wide window of cells j with 2j-1 <= h <= 2j+2
    for (auto c = c0; c < c0 + n; ++c) {
        auto h = v.floor_scaled(c, k + 1);
        for (auto idx = h / 2 - 1; idx <= (h + 1) / 2; ++idx) {
            if (idx < 0 || idx >= cells) continue;
            if (h >= 2 * idx - 1 && h <= 2 * idx + 2) ++counts[static_cast<std::size_t>(idx)];
        }
    }
    return counts;
}

}  // namespace detail

/// Measure of the columns of J whose field value lies in the window of s.
/// The slope level must match |J| = 2^k w.
inline DyadicRational g_measure(const DyadicInterval& j, const SlopeCell& s, const OneVarField& v,
                                WindowMode mode = WindowMode::wide) {
    const auto& spec = v.spec();
    detail::require_interval_level(j, spec);
    if (s.level() != spec.mw - j.level()) throw std::invalid_argument("slope level mismatch");
    std::int64_t count = 0;
    auto c0 = j.first_cell(spec.m);
    for (auto c = c0; c < c0 + j.cell_count(spec.m); ++c) count += detail::in_window(v, c, s, mode);
    return DyadicRational::make(count, spec.m);
}

/// Slope cells of level k(J) whose window is delta-popular on J.
inline std::vector<SlopeCell> allowable_slopes(const DyadicInterval& j, const OneVarField& v,
                                               const DyadicRational& delta, WindowMode mode = WindowMode::wide) {
    const auto& spec = v.spec();
    detail::require_interval_level(j, spec);
    const int k = spec.mw - j.level();
    auto counts = detail::window_counts(j, v, k, mode);
    auto threshold = delta * DyadicRational(j.cell_count(spec.m));
    std::vector<SlopeCell> out;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (threshold <= DyadicRational(counts[i])) out.emplace_back(k, static_cast<std::int64_t>(i));
    return out;
}

// ---------------------------------------------------------------------------
// Goodness

struct GoodnessWitness {
    /// Equal horizontal projections force equal slopes.
    bool good = true;
    /// Members that share a projection but not a slope (when !good).
    std::optional<std::pair<std::size_t, std::size_t>> conflict;
    /// Disjoint intervals J with slope cells s_J such that every member lies
    /// over some J with slope containing s_J.
    bool organized = false;
    std::vector<std::pair<DyadicInterval, SlopeCell>> pairs;
};

namespace detail {

// Finest slope cell contained in every slope of the group, if the slopes form
// a chain under containment.
inline std::optional<SlopeCell> common_refinement(const std::vector<const Parallelogram*>& group) {
    const SlopeCell* finest = nullptr;
    for (auto* r : group)
        if (!finest || r->slope().level() > finest->level()) finest = &r->slope();
    for (auto* r : group)
        if (!r->slope().contains(*finest)) return std::nullopt;
    return *finest;
}

inline bool organize(const DyadicInterval& j, const std::vector<const Parallelogram*>& group,
                     std::vector<std::pair<DyadicInterval, SlopeCell>>& out) {
    if (group.empty()) return true;
    if (auto s = common_refinement(group)) {
        out.emplace_back(j, *s);
        return true;
    }
    std::vector<const Parallelogram*> left, right;
    for (auto* r : group) {
        if (r->base() == j) return false;
        (j.child(0).contains(r->base()) ? left : right).push_back(r);
    }
    return organize(j.child(0), left, out) && organize(j.child(1), right, out);
}

}  // namespace detail

inline GoodnessWitness is_good_collection(std::span<const Parallelogram> members) {
    GoodnessWitness w;
    std::map<DyadicInterval, std::size_t> first_with_base;
    for (std::size_t i = 0; i < members.size(); ++i) {
        auto [it, inserted] = first_with_base.emplace(members[i].base(), i);
        if (!inserted && !(members[it->second].slope() == members[i].slope())) {
            auto a = std::min(it->second, i), b = std::max(it->second, i);
            if (w.good || *w.conflict > std::pair{a, b}) w.conflict = std::pair{a, b};
            w.good = false;
        }
    }
    std::vector<const Parallelogram*> all;
    all.reserve(members.size());
    for (const auto& r : members) all.push_back(&r);
    w.organized = detail::organize(DyadicInterval::unit(), all, w.pairs);
    if (!w.organized) w.pairs.clear();
    std::sort(w.pairs.begin(), w.pairs.end());
    return w;
}

inline GoodnessWitness is_good_collection(const RectangleFamily& fam) { return is_good_collection(fam.members()); }

// ---------------------------------------------------------------------------
// Text export

inline void write_family(std::ostream& os, const RectangleFamily& fam) {
    const auto& spec = fam.spec();
    os << "family 1\n";
    os << "m " << spec.m << " mw " << spec.mw << " offstep " << to_string(spec.offset_step) << " delta "
       << fam.params().delta.to_string() << " provenance " << to_string(fam.provenance()) << " count " << fam.size()
       << "\n";
    for (const auto& r : fam.members()) os << r.to_string() << "\n";
}

inline RectangleFamily read_family(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "family" || version != 1)
        throw std::invalid_argument("not a family v1 file");
    std::string km, kmw, ko, off, kd, delta, kp, prov, kc;
    int m = 0, mw = 0;
    std::size_t count = 0;
    if (!(is >> km >> m >> kmw >> mw >> ko >> off >> kd >> delta >> kp >> prov >> kc >> count) || km != "m" ||
        kmw != "mw" || ko != "offstep" || kd != "delta" || kp != "provenance" || kc != "count")
        throw std::invalid_argument("malformed family header");
    auto params = FamilyParams::make(GridSpec::make(m, mw, parse_offset_step(off)), DyadicRational::parse(delta));
    std::vector<Parallelogram> members;
    members.reserve(count);
    std::string kk, kb, ks, ko2, offset;
    int k = 0;
    std::int64_t base = 0, slope = 0;
    while (members.size() < count && is >> kk >> k >> kb >> base >> ks >> slope >> ko2 >> offset) {
        if (kk != "k" || kb != "base" || ks != "slope" || ko2 != "off")
            throw std::invalid_argument("malformed family record");
        members.push_back(Parallelogram::make(params.spec, k, base, slope, DyadicRational::parse(offset)));
    }
    if (members.size() != count) throw std::invalid_argument("family record count mismatch");
    if (!std::is_sorted(members.begin(), members.end()))
        throw std::invalid_argument("family records not in canonical order");
    return {params, std::move(members), parse_provenance(prov)};
}

}  // namespace dirmax
