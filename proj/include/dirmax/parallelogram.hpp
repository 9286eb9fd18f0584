#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include "dirmax/dyadic.hpp"
#include "dirmax/grid.hpp"

namespace dirmax {

/// Width-w staircase parallelogram: the union, over the grid columns of its
/// base interval, of the vertical slabs [s x_c + b, s x_c + b + w) where x_c
/// is the column center.
///
/// A rectangle at level k has base length 2^k w and a slope cell of level k.
/// Vertical positions are handled internally as integers in units of
/// 2^-(m + k + 2), in which every slab endpoint is exact.
class Parallelogram {
public:
    Parallelogram() = default;

    static Parallelogram make(const GridSpec& spec, int k, std::int64_t base_index, std::int64_t slope_index,
                              const DyadicRational& offset) {
        auto units = offset.shifted(spec.offset_exponent());
        if (units.exponent() != 0) throw std::invalid_argument("offset is not a multiple of the offset step");
        return from_units(spec, k, base_index, slope_index, units.numerator());
    }

    /// Offset given as an integer multiple of spec.offset_quantum().
    static Parallelogram from_units(const GridSpec& spec, int k, std::int64_t base_index, std::int64_t slope_index,
                                    std::int64_t offset_units) {
        if (k < 0 || k > spec.mw) throw std::invalid_argument("rectangle level out of range");
        Parallelogram p;
        p.spec_ = spec;
        p.k_ = k;
        p.base_ = DyadicInterval(spec.mw - k, base_index);
        p.slope_ = SlopeCell(k, slope_index);
        p.offset_units_ = offset_units;
        if (offset_units < 0) throw std::invalid_argument("rectangle leaves the unit square");
        if (DyadicRational(1) < p.slope_.center() * p.base_.hi() + p.offset() + spec.width())
            throw std::invalid_argument("rectangle leaves the unit square");
        return p;
    }

    /// True when the rectangle with these parameters fits in the unit square.
    static bool fits(const GridSpec& spec, int k, std::int64_t base_index, std::int64_t slope_index,
                     std::int64_t offset_units) {
        if (offset_units < 0) return false;
        auto top = SlopeCell(k, slope_index).center() * DyadicInterval(spec.mw - k, base_index).hi() +
                   DyadicRational::make(offset_units, spec.offset_exponent()) + spec.width();
        return top <= DyadicRational(1);
    }

    const GridSpec& spec() const { return spec_; }
    int level() const { return k_; }
    const DyadicInterval& base() const { return base_; }
    const SlopeCell& slope() const { return slope_; }
    std::int64_t offset_units() const { return offset_units_; }
    DyadicRational offset() const { return DyadicRational::make(offset_units_, spec_.offset_exponent()); }

    DyadicRational length() const { return base_.length(); }
    DyadicRational width() const { return spec_.width(); }
    DyadicRational measure() const { return DyadicRational::pow2(-(spec_.mw - k_) - spec_.mw); }

    std::int64_t column_begin() const { return base_.first_cell(spec_.m); }
    std::int64_t column_count() const { return base_.cell_count(spec_.m); }
    std::int64_t column_end() const { return column_begin() + column_count(); }
    bool has_column(std::int64_t c) const { return c >= column_begin() && c < column_end(); }

    /// Exponent of the internal vertical unit; one cell is 2^cell_shift() units.
    int unit_exponent() const { return spec_.m + k_ + 2; }
    int cell_shift() const { return k_ + 2; }
    std::int64_t slab_height_units() const { return std::int64_t{1} << (unit_exponent() - spec_.mw); }
    std::int64_t slab_low_units(std::int64_t c) const {
        return (2 * slope_.index() + 1) * (2 * c + 1) +
               (offset_units_ << (unit_exponent() - spec_.offset_exponent()));
    }

    std::pair<DyadicRational, DyadicRational> column_segment(std::int64_t c) const {
        if (!has_column(c)) throw std::out_of_range("column out of range");
        auto lo = DyadicRational::make(slab_low_units(c), unit_exponent());
        return {lo, lo + width()};
    }

    /// Cells whose center lies in the slab of column c are rows
    /// [first_center_row(c), first_center_row(c) + center_row_count()).
    std::int64_t first_center_row(std::int64_t c) const {
        int q = cell_shift();
        return (slab_low_units(c) + (std::int64_t{1} << (q - 1)) - 1) >> q;
    }
    std::int64_t center_row_count() const { return spec_.slab_cells(); }

    bool contains_cell(std::int64_t c, std::int64_t r) const {
        if (!has_column(c)) return false;
        auto r0 = first_center_row(c);
        return r >= r0 && r < r0 + center_row_count();
    }

    /// Calls fn(column, row, overlap) for every cell meeting the rectangle,
    /// where overlap is the vertical length of slab and cell in units of
    /// 2^-unit_exponent().
    template <class Fn>
    void for_each_overlap(Fn&& fn) const {
        int q = cell_shift();
        std::int64_t cell = std::int64_t{1} << q;
        std::int64_t h = slab_height_units();
        for (auto c = column_begin(); c < column_end(); ++c) {
            std::int64_t lo = slab_low_units(c);
            std::int64_t hi = lo + h;
            for (std::int64_t r = lo >> q; r * cell < hi; ++r) {
                std::int64_t a = std::max(lo, r * cell);
                std::int64_t b = std::min(hi, (r + 1) * cell);
                fn(c, r, b - a);
            }
        }
    }

    /// Vertical projection: from the bottom of the first slab to the top of
    /// the last one.
    Span vertical_extent() const {
        auto lo = DyadicRational::make(slab_low_units(column_begin()), unit_exponent());
        auto hi = DyadicRational::make(slab_low_units(column_end() - 1) + slab_height_units(), unit_exponent());
        return {lo, hi};
    }

    /// Canonical order: level, base index, slope index, offset.
    friend std::strong_ordering operator<=>(const Parallelogram& a, const Parallelogram& b) {
        if (auto c = a.k_ <=> b.k_; c != 0) return c;
        if (auto c = a.base_.index() <=> b.base_.index(); c != 0) return c;
        if (auto c = a.slope_.index() <=> b.slope_.index(); c != 0) return c;
        return a.offset_units_ <=> b.offset_units_;
    }
    friend bool operator==(const Parallelogram& a, const Parallelogram& b) {
        return a.spec_ == b.spec_ && (a <=> b) == 0;
    }

    std::string to_string() const {
        return "k " + std::to_string(k_) + " base " + std::to_string(base_.index()) + " slope " +
               std::to_string(slope_.index()) + " off " + offset().to_string();
    }

private:
    GridSpec spec_{};
    int k_ = 0;
    DyadicInterval base_{};
    SlopeCell slope_{};
    std::int64_t offset_units_ = 0;
};

inline DyadicRational measure(const Parallelogram& r) { return r.measure(); }

/// Exact integral of f over the staircase parallelogram.
inline DyadicRational integrate(const Parallelogram& rect, const GridFunction& f) {
    require_same_spec(rect.spec(), f.spec());
    const auto& spec = f.spec();
    const auto& num = f.numerators();
    int128 sum = 0;
    rect.for_each_overlap([&](std::int64_t c, std::int64_t r, std::int64_t overlap) {
        sum += int128{overlap} * num[spec.index(c, r)];
    });
    // overlap units 2^-(m+k+2), cell width 2^-m, values 2^-e
    return DyadicRational::make(sum, rect.unit_exponent() + spec.m + f.exponent());
}

/// Exact average of f over the parallelogram.
inline DyadicRational average(const Parallelogram& rect, const GridFunction& f) {
    return integrate(rect, f).shifted(2 * rect.spec().mw - rect.level());
}

/// The indicator of the parallelogram averaged over each grid cell: the
/// fraction of the cell area covered. This is the grid representative of
/// 1_R used by adjoint operators, so that integrals against it reproduce
/// integrate() exactly.
inline GridFunction cell_averaged_indicator(const Parallelogram& rect) {
    const auto& spec = rect.spec();
    std::vector<int128> wide(spec.cell_count(), 0);
    rect.for_each_overlap([&](std::int64_t c, std::int64_t r, std::int64_t overlap) {
        wide[spec.index(c, r)] += overlap;
    });
    return GridFunction::from_scaled(spec, wide, rect.cell_shift());
}

/// Cells whose centers lie in the parallelogram.
inline CellSet member_cells(const Parallelogram& rect) {
    const auto& spec = rect.spec();
    CellSet out(spec);
    for (auto c = rect.column_begin(); c < rect.column_end(); ++c) {
        auto r0 = rect.first_center_row(c);
        for (auto r = r0; r < r0 + rect.center_row_count(); ++r) out.insert(spec.index(c, r));
    }
    return out;
}

/// Cells meeting the parallelogram in positive area.
inline CellSet touched_cells(const Parallelogram& rect) {
    CellSet out(rect.spec());
    rect.for_each_overlap([&](std::int64_t c, std::int64_t r, std::int64_t overlap) {
        if (overlap > 0) out.insert(rect.spec().index(c, r));
    });
    return out;
}

}  // namespace dirmax
