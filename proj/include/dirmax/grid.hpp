#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirmax/dyadic.hpp"

namespace dirmax {

enum class OffsetStep { w, half_w };

inline std::string to_string(OffsetStep s) { return s == OffsetStep::w ? "w" : "w2"; }

inline OffsetStep parse_offset_step(const std::string& s) {
    if (s == "w") return OffsetStep::w;
    if (s == "w2") return OffsetStep::half_w;
    throw std::invalid_argument("offset step must be 'w' or 'w2', got '" + s + "'");
}

/// A 2^m x 2^m grid of cells on the unit square together with the common
/// rectangle width w = 2^-mw and the vertical offset quantum.
struct GridSpec {
    int m = 0;
    int mw = 0;
    OffsetStep offset_step = OffsetStep::w;

    static constexpr int max_m = 20;

    static GridSpec make(int m, int mw, OffsetStep step = OffsetStep::w) {
        if (m < 2 || m > max_m) throw std::invalid_argument("grid exponent m out of range");
        if (mw < 0 || mw > m - 2)
            throw std::invalid_argument("width exponent must satisfy 0 <= mw <= m - 2");
        return GridSpec{m, mw, step};
    }

    std::int64_t side() const { return std::int64_t{1} << m; }
    std::size_t cell_count() const { return std::size_t{1} << (2 * m); }
    std::size_t index(std::int64_t column, std::int64_t row) const {
        return static_cast<std::size_t>((column << m) | row);
    }
    std::int64_t column_of(std::size_t i) const { return static_cast<std::int64_t>(i >> m); }
    std::int64_t row_of(std::size_t i) const { return static_cast<std::int64_t>(i) & (side() - 1); }

    DyadicRational width() const { return DyadicRational::pow2(-mw); }
    DyadicRational cell_side() const { return DyadicRational::pow2(-m); }
    DyadicRational cell_area() const { return DyadicRational::pow2(-2 * m); }
    /// Offsets are integer multiples of 2^-offset_exponent().
    int offset_exponent() const { return offset_step == OffsetStep::w ? mw : mw + 1; }
    DyadicRational offset_quantum() const { return DyadicRational::pow2(-offset_exponent()); }
    /// Cells spanned vertically by one slab of height w.
    std::int64_t slab_cells() const { return std::int64_t{1} << (m - mw); }
    /// Largest rectangle level k (base length 2^k w = 1).
    int max_level() const { return mw; }

    DyadicRational column_center(std::int64_t c) const { return DyadicRational::make(2 * c + 1, m + 1); }
    DyadicRational row_center(std::int64_t r) const { return DyadicRational::make(2 * r + 1, m + 1); }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline void require_same_spec(const GridSpec& a, const GridSpec& b) {
    if (!(a == b)) throw std::invalid_argument("incompatible grids");
}

/// Nonnegative piecewise-constant function on the grid cells.
///
/// Stored as 64-bit numerators over one shared power-of-two denominator; the
/// shared exponent is always the smallest one that represents every value, so
/// equal functions have identical representations.
class GridFunction {
public:
    GridFunction() = default;

    static GridFunction zeros(const GridSpec& spec) {
        GridFunction g;
        g.spec_ = spec;
        g.num_.assign(spec.cell_count(), 0);
        return g;
    }

    static GridFunction constant(const GridSpec& spec, const DyadicRational& value) {
        check_nonnegative(value);
        GridFunction g;
        g.spec_ = spec;
        g.exponent_ = value.exponent();
        g.num_.assign(spec.cell_count(), value.numerator());
        g.normalize();
        return g;
    }

    static GridFunction from_values(const GridSpec& spec, const std::vector<DyadicRational>& values) {
        if (values.size() != spec.cell_count()) throw std::invalid_argument("grid value count mismatch");
        int e = 0;
        for (const auto& v : values) {
            check_nonnegative(v);
            e = std::max(e, v.exponent());
        }
        GridFunction g;
        g.spec_ = spec;
        g.exponent_ = e;
        g.num_.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) g.num_[i] = narrow(values[i].scaled_to(e));
        g.normalize();
        return g;
    }

    /// Builds from wide numerators over 2^exponent (exponent may be negative).
    static GridFunction from_scaled(const GridSpec& spec, const std::vector<int128>& numerators, int exponent) {
        if (numerators.size() != spec.cell_count()) throw std::invalid_argument("grid value count mismatch");
        int common = 128;
        for (auto v : numerators) {
            if (v < 0) throw std::invalid_argument("grid values must be nonnegative");
            if (v != 0) common = std::min(common, detail::ctz128(v));
        }
        if (common == 128) return zeros(spec);
        int strip = exponent > 0 ? std::min(common, exponent) : 0;
        int lift = exponent < 0 ? -exponent : 0;
        GridFunction g;
        g.spec_ = spec;
        g.exponent_ = exponent - strip + lift;
        g.num_.resize(numerators.size());
        for (std::size_t i = 0; i < numerators.size(); ++i)
            g.num_[i] = narrow(detail::shl_checked(numerators[i] >> strip, lift));
        return g;
    }

    /// As from_scaled, after rounding every value down to a multiple of
    /// 2^(top - bits) where top is the bit length of the largest numerator.
    static GridFunction from_scaled_rounded(const GridSpec& spec, std::vector<int128> numerators, int exponent,
                                            int bits) {
        int top = 0;
        for (auto v : numerators) top = std::max(top, detail::bit_width128(v));
        if (top > bits) {
            int drop = top - bits;
            for (auto& v : numerators) v >>= drop;
            exponent -= drop;
        }
        return from_scaled(spec, numerators, exponent);
    }

    static GridFunction indicator(const GridSpec& spec, const std::vector<std::uint8_t>& cells) {
        if (cells.size() != spec.cell_count()) throw std::invalid_argument("grid value count mismatch");
        GridFunction g = zeros(spec);
        for (std::size_t i = 0; i < cells.size(); ++i) g.num_[i] = cells[i] ? 1 : 0;
        return g;
    }

    const GridSpec& spec() const { return spec_; }
    std::size_t size() const { return num_.size(); }
    int exponent() const { return exponent_; }
    const std::vector<std::int64_t>& numerators() const { return num_; }

    DyadicRational at(std::size_t i) const { return DyadicRational::make(num_[i], exponent_); }
    DyadicRational at(std::int64_t column, std::int64_t row) const { return at(spec_.index(column, row)); }

    std::vector<DyadicRational> values() const {
        std::vector<DyadicRational> out(num_.size());
        for (std::size_t i = 0; i < num_.size(); ++i) out[i] = at(i);
        return out;
    }

    bool is_zero() const {
        for (auto v : num_)
            if (v != 0) return false;
        return true;
    }

    /// Exact integral over [0,1]^2.
    DyadicRational integral() const {
        int128 s = 0;
        for (auto v : num_) s += v;
        return DyadicRational::make(s, exponent_ + 2 * spec_.m);
    }

    /// Exact inner product with another grid function.
    DyadicRational inner(const GridFunction& o) const {
        require_same_spec(spec_, o.spec_);
        int128 s = 0;
        for (std::size_t i = 0; i < num_.size(); ++i) s += int128{num_[i]} * o.num_[i];
        return DyadicRational::make(s, exponent_ + o.exponent_ + 2 * spec_.m);
    }

    /// Squared L2 norm.
    DyadicRational norm2_squared() const { return inner(*this); }

    /// L^p norm in floating point (reporting only).
    double lp_norm(double p) const {
        long double s = 0;
        long double scale = std::ldexp(1.0L, -exponent_);
        for (auto v : num_)
            if (v != 0) s += std::pow(static_cast<long double>(v) * scale, static_cast<long double>(p));
        s *= std::ldexp(1.0L, -2 * spec_.m);
        return static_cast<double>(std::pow(s, 1.0L / p));
    }

    /// Squared L2 norm in extended precision (reporting only; never overflows).
    long double norm2_squared_ld() const {
        long double s = 0;
        for (auto v : num_) s += static_cast<long double>(v) * static_cast<long double>(v);
        return std::ldexp(s, -2 * exponent_ - 2 * spec_.m);
    }

    GridFunction scaled(const DyadicRational& c) const {
        check_nonnegative(c);
        std::vector<int128> wide(num_.size());
        for (std::size_t i = 0; i < num_.size(); ++i) wide[i] = int128{num_[i]} * c.numerator();
        return from_scaled(spec_, wide, exponent_ + c.exponent());
    }

    friend GridFunction operator+(const GridFunction& a, const GridFunction& b) {
        require_same_spec(a.spec_, b.spec_);
        int e = std::max(a.exponent_, b.exponent_);
        std::vector<int128> wide(a.num_.size());
        for (std::size_t i = 0; i < wide.size(); ++i)
            wide[i] = (int128{a.num_[i]} << (e - a.exponent_)) + (int128{b.num_[i]} << (e - b.exponent_));
        return from_scaled(a.spec_, wide, e);
    }

    /// Keeps only the cells where mask is set.
    GridFunction masked(const std::vector<std::uint8_t>& mask) const {
        GridFunction g = *this;
        for (std::size_t i = 0; i < num_.size(); ++i)
            if (!mask[i]) g.num_[i] = 0;
        g.normalize();
        return g;
    }

    /// Rounds every value down to a multiple of 2^(top - bits), where top is
    /// the bit position of the largest value. Lossy; used only to keep
    /// iterated heuristics inside 64-bit numerators.
    GridFunction quantized(int bits) const {
        std::int64_t mx = 0;
        for (auto v : num_) mx = std::max(mx, v);
        int top = std::bit_width(static_cast<std::uint64_t>(mx));
        if (top <= bits) return *this;
        int drop = top - bits;
        GridFunction g = *this;
        for (auto& v : g.num_) v = (v >> drop) << drop;
        g.normalize();
        return g;
    }

    friend bool operator==(const GridFunction& a, const GridFunction& b) {
        return a.spec_ == b.spec_ && a.exponent_ == b.exponent_ && a.num_ == b.num_;
    }

private:
    static void check_nonnegative(const DyadicRational& v) {
        if (v.sign() < 0) throw std::invalid_argument("grid values must be nonnegative");
    }

    static std::int64_t narrow(int128 v) {
        if (v > detail::int64_max || v < detail::int64_min) throw std::overflow_error("grid value overflow");
        return static_cast<std::int64_t>(v);
    }

    void normalize() {
        int common = 64;
        for (auto v : num_)
            if (v != 0) common = std::min(common, std::countr_zero(static_cast<std::uint64_t>(v)));
        if (common == 64) {
            exponent_ = 0;
            return;
        }
        int strip = std::min(common, exponent_);
        if (strip == 0) return;
        for (auto& v : num_) v >>= strip;
        exponent_ -= strip;
    }

    GridSpec spec_{};
    int exponent_ = 0;
    std::vector<std::int64_t> num_;
};

/// Slope field depending on the horizontal variable only: one value in [0,1]
/// per grid column.
class OneVarField {
public:
    OneVarField() = default;
    OneVarField(const GridSpec& spec, std::vector<DyadicRational> column_values)
        : spec_(spec), values_(std::move(column_values)) {
        if (values_.size() != static_cast<std::size_t>(spec.side()))
            throw std::invalid_argument("field value count mismatch");
        for (const auto& v : values_)
            if (v.sign() < 0 || DyadicRational(1) < v) throw std::invalid_argument("field values must lie in [0,1]");
    }

    static OneVarField constant(const GridSpec& spec, const DyadicRational& c) {
        return {spec, std::vector<DyadicRational>(static_cast<std::size_t>(spec.side()), c)};
    }

    /// v(x) = x sampled at column centers.
    static OneVarField identity(const GridSpec& spec) {
        std::vector<DyadicRational> vals(static_cast<std::size_t>(spec.side()));
        for (std::int64_t c = 0; c < spec.side(); ++c) vals[static_cast<std::size_t>(c)] = spec.column_center(c);
        return {spec, std::move(vals)};
    }

    const GridSpec& spec() const { return spec_; }
    const DyadicRational& at(std::int64_t column) const { return values_[static_cast<std::size_t>(column)]; }
    const std::vector<DyadicRational>& values() const { return values_; }

    /// Index of the level-k slope cell containing v(column), or -1 when
    /// v(column) = 1 lies outside every cell.
    std::int64_t cell_index(std::int64_t column, int k) const {
        auto idx = floor_scaled(column, k);
        return idx >= (std::int64_t{1} << k) ? -1 : idx;
    }

    /// floor(v(column) * 2^level), in [0, 2^level].
    std::int64_t floor_scaled(std::int64_t column, int level) const {
        const auto& v = at(column);
        int128 n = v.numerator();
        int e = v.exponent();
        return static_cast<std::int64_t>(e >= level ? (n >> (e - level)) : (n << (level - e)));
    }

    friend bool operator==(const OneVarField&, const OneVarField&) = default;

private:
    GridSpec spec_{};
    std::vector<DyadicRational> values_;
};

/// Set of grid cells.
class CellSet {
public:
    CellSet() = default;
    explicit CellSet(const GridSpec& spec) : spec_(spec), bits_(spec.cell_count(), 0) {}
    CellSet(const GridSpec& spec, std::vector<std::uint8_t> bits) : spec_(spec), bits_(std::move(bits)) {
        if (bits_.size() != spec.cell_count()) throw std::invalid_argument("cell set size mismatch");
        for (auto& b : bits_) b = b ? 1 : 0;
    }

    static CellSet all(const GridSpec& spec) { return {spec, std::vector<std::uint8_t>(spec.cell_count(), 1)}; }

    const GridSpec& spec() const { return spec_; }
    bool contains(std::size_t i) const { return bits_[i] != 0; }
    void insert(std::size_t i) { bits_[i] = 1; }
    void erase(std::size_t i) { bits_[i] = 0; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }
    bool empty() const { return count() == 0; }
    DyadicRational measure() const {
        return DyadicRational::make(static_cast<std::int64_t>(count()), 2 * spec_.m);
    }

    /// Cells whose column lies in the horizontal dyadic interval.
    CellSet restricted_to_columns(const DyadicInterval& iv) const {
        CellSet out(spec_);
        auto c0 = iv.first_cell(spec_.m);
        auto nc = iv.cell_count(spec_.m);
        for (auto c = c0; c < c0 + nc; ++c)
            for (std::int64_t r = 0; r < spec_.side(); ++r) {
                auto i = spec_.index(c, r);
                out.bits_[i] = bits_[i];
            }
        return out;
    }

    friend CellSet operator|(const CellSet& a, const CellSet& b) {
        require_same_spec(a.spec_, b.spec_);
        CellSet out(a.spec_);
        for (std::size_t i = 0; i < a.bits_.size(); ++i) out.bits_[i] = a.bits_[i] | b.bits_[i];
        return out;
    }
    friend CellSet operator&(const CellSet& a, const CellSet& b) {
        require_same_spec(a.spec_, b.spec_);
        CellSet out(a.spec_);
        for (std::size_t i = 0; i < a.bits_.size(); ++i) out.bits_[i] = a.bits_[i] & b.bits_[i];
        return out;
    }
    friend CellSet operator-(const CellSet& a, const CellSet& b) {
        require_same_spec(a.spec_, b.spec_);
        CellSet out(a.spec_);
        for (std::size_t i = 0; i < a.bits_.size(); ++i) out.bits_[i] = a.bits_[i] & !b.bits_[i];
        return out;
    }
    CellSet& operator|=(const CellSet& o) { return *this = *this | o; }

    bool is_subset_of(const CellSet& o) const {
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (bits_[i] && !o.bits_[i]) return false;
        return true;
    }
    bool intersects(const CellSet& o) const {
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (bits_[i] && o.bits_[i]) return true;
        return false;
    }

    GridFunction indicator() const { return GridFunction::indicator(spec_, bits_); }

    /// Run-length encoding in index order, starting with a run of zeros.
    std::vector<std::int64_t> run_lengths() const {
        std::vector<std::int64_t> runs;
        std::uint8_t cur = 0;
        std::int64_t len = 0;
        for (auto b : bits_) {
            if (b != cur) {
                runs.push_back(len);
                cur = b;
                len = 0;
            }
            ++len;
        }
        runs.push_back(len);
        return runs;
    }

    static CellSet from_run_lengths(const GridSpec& spec, const std::vector<std::int64_t>& runs) {
        CellSet out(spec);
        std::size_t pos = 0;
        std::uint8_t cur = 0;
        for (auto len : runs) {
            if (len < 0 || pos + static_cast<std::size_t>(len) > out.bits_.size())
                throw std::invalid_argument("run-length encoding overflows grid");
            for (std::int64_t i = 0; i < len; ++i) out.bits_[pos++] = cur;
            cur ^= 1;
        }
        if (pos != out.bits_.size()) throw std::invalid_argument("run-length encoding does not cover grid");
        return out;
    }

    friend bool operator==(const CellSet&, const CellSet&) = default;

private:
    GridSpec spec_{};
    std::vector<std::uint8_t> bits_;
};

// ---------------------------------------------------------------------------
// MAXGRID v1 text format

namespace detail {

inline void write_maxgrid_header(std::ostream& os, const GridSpec& spec) {
    os << "maxgrid 1\n";
    os << "m " << spec.m << " mw " << spec.mw << " offstep " << to_string(spec.offset_step) << "\n";
}

inline GridSpec read_maxgrid_header(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "maxgrid" || version != 1)
        throw std::invalid_argument("not a MAXGRID v1 file");
    std::string km, kmw, ko, off;
    int m = 0, mw = 0;
    if (!(is >> km >> m >> kmw >> mw >> ko >> off) || km != "m" || kmw != "mw" || ko != "offstep")
        throw std::invalid_argument("malformed MAXGRID header");
    return GridSpec::make(m, mw, parse_offset_step(off));
}

inline std::vector<DyadicRational> read_values(std::istream& is, std::size_t count) {
    std::vector<DyadicRational> vals;
    vals.reserve(count);
    std::string tok;
    while (vals.size() < count && is >> tok) vals.push_back(DyadicRational::parse(tok));
    if (vals.size() != count) throw std::invalid_argument("MAXGRID value count mismatch");
    if (is >> tok) throw std::invalid_argument("trailing data after MAXGRID values");
    return vals;
}

}  // namespace detail

/// Values are written one grid column per line, rows varying fastest.
inline void write_grid(std::ostream& os, const GridFunction& f) {
    const auto& spec = f.spec();
    detail::write_maxgrid_header(os, spec);
    for (std::int64_t c = 0; c < spec.side(); ++c) {
        for (std::int64_t r = 0; r < spec.side(); ++r) {
            if (r) os << ' ';
            os << f.at(c, r).to_string();
        }
        os << '\n';
    }
}

inline GridFunction read_grid(std::istream& is) {
    auto spec = detail::read_maxgrid_header(is);
    return GridFunction::from_values(spec, detail::read_values(is, spec.cell_count()));
}

inline void write_field(std::ostream& os, const OneVarField& v) {
    detail::write_maxgrid_header(os, v.spec());
    for (std::size_t c = 0; c < v.values().size(); ++c) os << (c ? " " : "") << v.values()[c].to_string();
    os << '\n';
}

inline OneVarField read_field(std::istream& is) {
    auto spec = detail::read_maxgrid_header(is);
    return {spec, detail::read_values(is, static_cast<std::size_t>(spec.side()))};
}

}  // namespace dirmax
