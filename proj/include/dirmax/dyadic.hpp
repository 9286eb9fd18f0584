#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dirmax {

using int128 = __int128;

namespace detail {

inline constexpr int128 int64_min = std::numeric_limits<std::int64_t>::min();
inline constexpr int128 int64_max = std::numeric_limits<std::int64_t>::max();

inline int ctz128(int128 v) {
    auto u = static_cast<unsigned __int128>(v);
    auto lo = static_cast<std::uint64_t>(u);
    if (lo != 0) return std::countr_zero(lo);
    return 64 + std::countr_zero(static_cast<std::uint64_t>(u >> 64));
}

// Number of significant bits of |v|.
inline int bit_width128(int128 v) {
    auto u = static_cast<unsigned __int128>(v < 0 ? -v : v);
    auto hi = static_cast<std::uint64_t>(u >> 64);
    if (hi != 0) return 64 + std::bit_width(hi);
    return std::bit_width(static_cast<std::uint64_t>(u));
}

inline int128 shl_checked(int128 v, int shift) {
    if (v == 0 || shift == 0) return v;
    if (bit_width128(v) + shift > 126) throw std::overflow_error("dyadic overflow");
    return v * (int128{1} << shift);
}

inline std::string to_string128(int128 v) {
    if (v == 0) return "0";
    bool neg = v < 0;
    auto u = static_cast<unsigned __int128>(neg ? -v : v);
    std::string out;
    while (u != 0) {
        out.insert(out.begin(), static_cast<char>('0' + static_cast<int>(u % 10)));
        u /= 10;
    }
    if (neg) out.insert(out.begin(), '-');
    return out;
}

}  // namespace detail

/// Exact number of the form numerator / 2^exponent with exponent >= 0.
///
/// Values are always canonical: the numerator is odd unless the exponent is
/// zero, and zero is stored as 0/2^0. Every operation is exact; a result that
/// does not fit a 64-bit numerator throws std::overflow_error.
class DyadicRational {
public:
    constexpr DyadicRational() = default;
    constexpr DyadicRational(std::int64_t integer) : num_(integer) {}  // NOLINT(implicit)

    static DyadicRational make(int128 numerator, int exponent) {
        if (numerator == 0) return {};
        if (exponent < 0) {
            numerator = detail::shl_checked(numerator, -exponent);
            exponent = 0;
        }
        int strip = std::min(detail::ctz128(numerator), exponent);
        numerator >>= strip;
        exponent -= strip;
        if (numerator > detail::int64_max || numerator < detail::int64_min)
            throw std::overflow_error("dyadic overflow");
        DyadicRational out;
        out.num_ = static_cast<std::int64_t>(numerator);
        out.exp_ = exponent;
        return out;
    }

    /// 2^e for any integer e.
    static DyadicRational pow2(int e) {
        if (e >= 0) return make(int128{1} << e, 0);
        return make(1, -e);
    }

    static DyadicRational parse(std::string_view text);

    std::int64_t numerator() const { return num_; }
    int exponent() const { return exp_; }
    bool is_zero() const { return num_ == 0; }
    int sign() const { return (num_ > 0) - (num_ < 0); }

    /// Numerator after rescaling to denominator 2^target (target >= exponent()).
    int128 scaled_to(int target) const {
        if (target < exp_) throw std::logic_error("scaled_to: target exponent too small");
        return detail::shl_checked(num_, target - exp_);
    }

    /// Multiplies by 2^e exactly.
    DyadicRational shifted(int e) const { return make(num_, exp_ - e); }

    double to_double() const { return std::ldexp(static_cast<double>(num_), -exp_); }
    long double to_long_double() const {
        return std::ldexp(static_cast<long double>(num_), -exp_);
    }

    std::string to_string() const {
        if (exp_ == 0) return std::to_string(num_);
        return std::to_string(num_) + "/2^" + std::to_string(exp_);
    }

    friend DyadicRational operator+(const DyadicRational& a, const DyadicRational& b) {
        int e = std::max(a.exp_, b.exp_);
        return make(a.scaled_to(e) + b.scaled_to(e), e);
    }
    friend DyadicRational operator-(const DyadicRational& a, const DyadicRational& b) {
        int e = std::max(a.exp_, b.exp_);
        return make(a.scaled_to(e) - b.scaled_to(e), e);
    }
    DyadicRational operator-() const { return make(-int128{num_}, exp_); }
    friend DyadicRational operator*(const DyadicRational& a, const DyadicRational& b) {
        return make(int128{a.num_} * int128{b.num_}, a.exp_ + b.exp_);
    }
    DyadicRational& operator+=(const DyadicRational& o) { return *this = *this + o; }
    DyadicRational& operator-=(const DyadicRational& o) { return *this = *this - o; }
    DyadicRational& operator*=(const DyadicRational& o) { return *this = *this * o; }

    friend bool operator==(const DyadicRational&, const DyadicRational&) = default;

    friend std::strong_ordering operator<=>(const DyadicRational& a, const DyadicRational& b) {
        int e = std::max(a.exp_, b.exp_);
        int da = e - a.exp_;
        int db = e - b.exp_;
        // Shifts beyond 64 bits: the operand with the smaller exponent dominates
        // unless it is zero.
        if (da > 64) return a.num_ != 0 ? a.sign() <=> 0 : 0 <=> b.sign();
        if (db > 64) return b.num_ != 0 ? 0 <=> b.sign() : a.sign() <=> 0;
        int128 x = int128{a.num_} << da;
        int128 y = int128{b.num_} << db;
        return x < y ? std::strong_ordering::less
                     : (x > y ? std::strong_ordering::greater : std::strong_ordering::equal);
    }

    friend std::ostream& operator<<(std::ostream& os, const DyadicRational& d) {
        return os << d.to_string();
    }

private:
    std::int64_t num_ = 0;
    int exp_ = 0;
};

inline DyadicRational DyadicRational::parse(std::string_view text) {
    auto parse_int = [&](std::string_view s) -> std::int64_t {
        if (s.empty()) throw std::invalid_argument("malformed dyadic: '" + std::string(text) + "'");
        std::size_t pos = 0;
        bool neg = false;
        if (s[0] == '-' || s[0] == '+') {
            neg = s[0] == '-';
            pos = 1;
        }
        if (pos == s.size()) throw std::invalid_argument("malformed dyadic: '" + std::string(text) + "'");
        int128 v = 0;
        for (; pos < s.size(); ++pos) {
            char ch = s[pos];
            if (ch < '0' || ch > '9')
                throw std::invalid_argument("malformed dyadic: '" + std::string(text) + "'");
            v = v * 10 + (ch - '0');
            if (v > detail::int64_max + 1) throw std::overflow_error("dyadic overflow");
        }
        v = neg ? -v : v;
        if (v > detail::int64_max) throw std::overflow_error("dyadic overflow");
        return static_cast<std::int64_t>(v);
    };
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return DyadicRational(parse_int(text));
    auto den = text.substr(slash + 1);
    std::int64_t e = 0;
    if (den.size() >= 2 && den.substr(0, 2) == "2^") {
        e = parse_int(den.substr(2));
    } else {
        // Plain power-of-two denominator, e.g. "1/8".
        auto q = parse_int(den);
        if (q <= 0 || !std::has_single_bit(static_cast<std::uint64_t>(q)))
            throw std::invalid_argument("non-dyadic denominator: '" + std::string(text) + "'");
        e = std::countr_zero(static_cast<std::uint64_t>(q));
    }
    if (e < 0 || e > 4096) throw std::invalid_argument("malformed dyadic: '" + std::string(text) + "'");
    return make(parse_int(text.substr(0, slash)), static_cast<int>(e));
}

inline DyadicRational min(const DyadicRational& a, const DyadicRational& b) { return b < a ? b : a; }
inline DyadicRational max(const DyadicRational& a, const DyadicRational& b) { return a < b ? b : a; }

/// Exact quotient of a dyadic rational by a positive integer. Used where
/// averages over non-dyadic lengths appear (vertical segment averages,
/// tripled windows).
struct Ratio {
    DyadicRational num;
    std::int64_t den = 1;

    double to_double() const { return num.to_double() / static_cast<double>(den); }

    friend std::strong_ordering operator<=>(const Ratio& a, const Ratio& b) {
        return a.num * DyadicRational(b.den) <=> b.num * DyadicRational(a.den);
    }
    friend bool operator==(const Ratio& a, const Ratio& b) { return (a <=> b) == 0; }

    friend std::strong_ordering operator<=>(const Ratio& a, const DyadicRational& b) {
        return a.num <=> b * DyadicRational(a.den);
    }
    friend bool operator==(const Ratio& a, const DyadicRational& b) { return (a <=> b) == 0; }

    std::string to_string() const {
        if (den == 1) return num.to_string();
        return "(" + num.to_string() + ")/" + std::to_string(den);
    }
};

/// Half-open dyadic interval [index * 2^-level, (index + 1) * 2^-level) in [0,1).
class DyadicInterval {
public:
    DyadicInterval() = default;
    DyadicInterval(int level, std::int64_t index) : level_(level), index_(index) {
        if (level < 0 || level > 62) throw std::invalid_argument("dyadic interval level out of range");
        if (index < 0 || index >= (std::int64_t{1} << level))
            throw std::invalid_argument("dyadic interval index out of range");
    }

    static DyadicInterval unit() { return {0, 0}; }

    int level() const { return level_; }
    std::int64_t index() const { return index_; }

    DyadicRational lo() const { return DyadicRational::make(index_, level_); }
    DyadicRational hi() const { return DyadicRational::make(index_ + 1, level_); }
    DyadicRational length() const { return DyadicRational::pow2(-level_); }

    bool contains(const DyadicInterval& o) const {
        return o.level_ >= level_ && (o.index_ >> (o.level_ - level_)) == index_;
    }
    bool strictly_contains(const DyadicInterval& o) const { return contains(o) && o.level_ > level_; }
    bool intersects(const DyadicInterval& o) const { return contains(o) || o.contains(*this); }

    DyadicInterval parent() const {
        if (level_ == 0) throw std::logic_error("unit interval has no parent");
        return {level_ - 1, index_ >> 1};
    }
    DyadicInterval child(int which) const { return {level_ + 1, 2 * index_ + which}; }

    /// Ancestor at a coarser level.
    DyadicInterval ancestor(int level) const {
        if (level > level_ || level < 0) throw std::logic_error("ancestor level out of range");
        return {level, index_ >> (level_ - level)};
    }

    /// Grid cells [first, last) covered on a 2^m grid (requires level <= m).
    std::int64_t first_cell(int m) const { return index_ << (m - level_); }
    std::int64_t cell_count(int m) const { return std::int64_t{1} << (m - level_); }

    friend bool operator==(const DyadicInterval&, const DyadicInterval&) = default;
    friend auto operator<=>(const DyadicInterval&, const DyadicInterval&) = default;

    std::string to_string() const {
        return "[" + lo().to_string() + "," + hi().to_string() + ")";
    }

private:
    int level_ = 0;
    std::int64_t index_ = 0;
};

/// Half-open interval with dyadic endpoints; used for tripled windows that
/// are no longer dyadic.
struct Span {
    DyadicRational lo;
    DyadicRational hi;

    DyadicRational length() const { return hi - lo; }
    bool contains(const Span& o) const { return lo <= o.lo && o.hi <= hi; }
    bool contains(const DyadicRational& x) const { return lo <= x && x < hi; }
    Span clipped() const {
        return {max(lo, DyadicRational(0)), min(hi, DyadicRational(1))};
    }
    /// Concentric triple.
    Span tripled() const {
        auto len = length();
        return {lo - len, hi + len};
    }
    friend bool operator==(const Span&, const Span&) = default;
};

inline Span to_span(const DyadicInterval& i) { return {i.lo(), i.hi()}; }

/// Discrete slope cell: level k, index j; the slope interval is
/// [j * 2^-k, (j + 1) * 2^-k) with center (j + 1/2) * 2^-k.
class SlopeCell {
public:
    SlopeCell() = default;
    SlopeCell(int level, std::int64_t index) : level_(level), index_(index) {
        if (level < 0 || level > 62) throw std::invalid_argument("slope level out of range");
        if (index < 0 || index >= (std::int64_t{1} << level))
            throw std::invalid_argument("slope index out of range");
    }

    int level() const { return level_; }
    std::int64_t index() const { return index_; }

    DyadicRational center() const { return DyadicRational::make(2 * index_ + 1, level_ + 1); }
    DyadicRational lo() const { return DyadicRational::make(index_, level_); }
    DyadicRational hi() const { return DyadicRational::make(index_ + 1, level_); }

    bool contains(const SlopeCell& o) const {
        return o.level_ >= level_ && (o.index_ >> (o.level_ - level_)) == index_;
    }
    bool contains_value(const DyadicRational& v) const { return lo() <= v && v < hi(); }

    friend bool operator==(const SlopeCell&, const SlopeCell&) = default;
    friend auto operator<=>(const SlopeCell&, const SlopeCell&) = default;

    std::string to_string() const {
        return "s(" + std::to_string(level_) + "," + std::to_string(index_) + ")";
    }

private:
    int level_ = 0;
    std::int64_t index_ = 0;
};

}  // namespace dirmax

template <>
struct std::hash<dirmax::DyadicInterval> {
    std::size_t operator()(const dirmax::DyadicInterval& i) const noexcept {
        return std::hash<std::int64_t>{}((i.index() << 6) ^ i.level());
    }
};
