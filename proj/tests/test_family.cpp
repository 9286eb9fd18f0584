#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dirmax/family.hpp"

using namespace dirmax;

namespace {

DyadicRational q(std::int64_t num, int exp) { return DyadicRational::make(num, exp); }

OneVarField random_field(const GridSpec& spec, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::int64_t> num(0, spec.side());
    std::vector<DyadicRational> v(static_cast<std::size_t>(spec.side()));
    for (auto& x : v) x = q(num(rng), spec.m);
    return {spec, v};
}

/// Columns of [lo, hi) whose field value lies in [center - half, center + half).
std::int64_t scan_columns(const OneVarField& v, const DyadicRational& lo, const DyadicRational& hi,
                          const DyadicRational& center, const DyadicRational& half) {
    const auto& spec = v.spec();
    std::int64_t count = 0;
    for (std::int64_t c = 0; c < spec.side(); ++c) {
        auto x = spec.column_center(c);
        if (x < lo || !(x < hi)) continue;
        if (center - half <= v.at(c) && v.at(c) < center + half) ++count;
    }
    return count;
}

struct Key {
    int k;
    std::int64_t base, slope;
    DyadicRational offset;
    friend bool operator==(const Key&, const Key&) = default;
};

/// Quadruple loop over level, base, slope and offset with direct rational
/// tests for containment and density.
std::vector<Key> brute_force_family(const OneVarField& v, const DyadicRational& delta) {
    const auto& spec = v.spec();
    std::vector<Key> out;
    const auto w = spec.width();
    const auto quantum = spec.offset_quantum();
    for (int k = 0; k <= spec.mw; ++k) {
        const auto len = w * DyadicRational::pow2(k);
        const auto half = DyadicRational::pow2(-k - 1);
        for (std::int64_t b = 0; len * DyadicRational(b) < DyadicRational(1); ++b) {
            const auto lo = len * DyadicRational(b), hi = lo + len;
            for (std::int64_t j = 0; j < (std::int64_t{1} << k); ++j) {
                const auto s = (DyadicRational(2 * j + 1)) * half;
                for (auto off = DyadicRational(0); off + w <= DyadicRational(1); off += quantum) {
                    if (DyadicRational(1) < s * hi + off + w) continue;
                    auto qualifying = scan_columns(v, lo, hi, s, half);
                    auto columns = len * DyadicRational::pow2(spec.m);
                    if (delta * columns <= DyadicRational(qualifying)) out.push_back({k, b, j, off});
                }
            }
        }
    }
    return out;
}

std::vector<Key> keys(const RectangleFamily& fam) {
    std::vector<Key> out;
    for (const auto& r : fam.members()) out.push_back({r.level(), r.base().index(), r.slope().index(), r.offset()});
    return out;
}

}  // namespace

TEST(Theta, Examples) {
    auto spec = GridSpec::make(4, 2);
    auto r0 = Parallelogram::make(spec, 0, 0, 0, DyadicRational(0));
    // window width w / L(R) = 1 centered at 1/2
    EXPECT_EQ(theta(r0).lo, DyadicRational(0));
    EXPECT_EQ(theta(r0).hi, DyadicRational(1));
    auto r2 = Parallelogram::make(spec, 2, 0, 0, DyadicRational(0));
    // s = 1/8, window width 1/4
    EXPECT_EQ(r2.slope().center(), q(1, 3));
    EXPECT_EQ(theta(r2).lo, DyadicRational(0));
    EXPECT_EQ(theta(r2).hi, q(1, 2));
}

TEST(ThetaProperty, WidthIsWidthOverLength) {
    auto spec = GridSpec::make(5, 3);
    auto fam = enumerate_family(FamilyParams::make(spec, q(1, 5)), OneVarField::identity(spec));
    for (const auto& r : fam.members()) EXPECT_EQ(theta(r).length() * r.length(), r.width());
}

TEST(VMeasure, ConstantFieldExamples) {
    auto spec = GridSpec::make(5, 2);
    auto r = Parallelogram::make(spec, 2, 0, 1, DyadicRational(0));
    EXPECT_EQ(v_measure(r, OneVarField::constant(spec, r.slope().center())), r.measure());
    EXPECT_EQ(v_measure(r, OneVarField::constant(spec, r.slope().center() + q(1, 1))), DyadicRational(0));
}

TEST(VMeasure, IdentityFieldAgainstColumnScan) {
    // base [0,1/2), window [1/4,1/2): k = 2, w = 1/8
    auto spec = GridSpec::make(5, 3);
    auto v = OneVarField::identity(spec);
    auto r = Parallelogram::make(spec, 2, 0, 1, DyadicRational(0));
    EXPECT_EQ(theta(r).lo, q(1, 2));
    EXPECT_EQ(theta(r).hi, q(1, 1));
    auto count = scan_columns(v, DyadicRational(0), q(1, 1), r.slope().center(), q(1, 3));
    EXPECT_EQ(v_measure(r, v), spec.width() * spec.cell_side() * DyadicRational(count));
    EXPECT_EQ(v_measure(r, v), spec.width() * q(1, 2));
}

TEST(IsDense, Examples) {
    auto spec = GridSpec::make(5, 2);
    auto r = Parallelogram::make(spec, 1, 1, 0, DyadicRational(0));
    EXPECT_TRUE(is_dense(r, OneVarField::constant(spec, r.slope().center()), DyadicRational(1)));
    EXPECT_FALSE(is_dense(r, OneVarField::constant(spec, q(7, 3)), DyadicRational(1)));
}

TEST(IsDense, IdentityFieldAgainstColumnScan) {
    // base [0,1/4), window [1/8,1/4): k = 3, w = 1/32
    auto spec = GridSpec::make(7, 5);
    auto v = OneVarField::identity(spec);
    auto r = Parallelogram::make(spec, 3, 0, 1, DyadicRational(0));
    EXPECT_EQ(theta(r).lo, q(1, 3));
    auto count = scan_columns(v, DyadicRational(0), q(1, 2), r.slope().center(), q(1, 4));
    bool expected = q(1, 1) * DyadicRational(r.column_count()) <= DyadicRational(count);
    EXPECT_EQ(is_dense(r, v, q(1, 1)), expected);
    EXPECT_TRUE(expected);  // exactly half the columns qualify
    EXPECT_FALSE(is_dense(r, v, q(5, 3)));
}

TEST(IsDenseProperty, MatchesColumnScanOnRandomFields) {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 5; ++t) {
        auto spec = GridSpec::make(5, 3);
        auto v = random_field(spec, rng);
        auto fam = enumerate_family(FamilyParams::make(spec, q(1, 10)), v);
        for (const auto& r : fam.members()) {
            auto half = DyadicRational::pow2(-r.level() - 1);
            auto count = scan_columns(v, r.base().lo(), r.base().hi(), r.slope().center(), half);
            EXPECT_EQ(v_measure(r, v), spec.width() * spec.cell_side() * DyadicRational(count));
            for (auto delta : {q(1, 3), q(1, 1), q(3, 2), DyadicRational(1)})
                EXPECT_EQ(is_dense(r, v, delta), delta * DyadicRational(r.column_count()) <= DyadicRational(count));
        }
    }
}

TEST(IsDenseProperty, MovingTheFieldTowardTheCenterKeepsDensity) {
    std::mt19937_64 rng(4);
    auto spec = GridSpec::make(5, 3);
    for (int t = 0; t < 10; ++t) {
        auto v = random_field(spec, rng);
        auto fam = enumerate_family(FamilyParams::make(spec, q(1, 2)), v);
        for (std::size_t i = 0; i < fam.size(); i += 5) {
            const auto& r = fam[i];
            auto moved = v.values();
            auto col = r.column_begin() + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(r.column_count()));
            moved[static_cast<std::size_t>(col)] = r.slope().center();
            EXPECT_TRUE(is_dense(r, OneVarField(spec, moved), q(1, 2)));
        }
    }
}

TEST(EnumerateFamily, MatchesBruteForceFilter) {
    std::mt19937_64 rng(8);
    for (auto step : {OffsetStep::w, OffsetStep::half_w}) {
        for (int m = 3; m <= 5; ++m) {
            auto spec = GridSpec::make(m, m - 2, step);
            for (auto delta : {DyadicRational(1), q(1, 1), q(1, 3)}) {
                for (const auto& v : {OneVarField::identity(spec), OneVarField::constant(spec, q(1, 2)),
                                      random_field(spec, rng)}) {
                    auto fam = enumerate_family(FamilyParams::make(spec, delta), v);
                    EXPECT_EQ(keys(fam), brute_force_family(v, delta)) << "m=" << m << " delta=" << delta;
                }
            }
        }
    }
}

TEST(EnumerateFamily, CanonicalOrderAndDistinctMembers) {
    auto spec = GridSpec::make(5, 3, OffsetStep::half_w);
    auto fam = enumerate_family(FamilyParams::make(spec, q(1, 3)), OneVarField::identity(spec));
    EXPECT_TRUE(std::is_sorted(fam.members().begin(), fam.members().end()));
    EXPECT_EQ(std::adjacent_find(fam.members().begin(), fam.members().end()), fam.members().end());
    EXPECT_EQ(fam.provenance(), Provenance::enumerated);
}

TEST(EnumerateFamily, SmallestDensityKeepsEveryFullLengthRectangle) {
    auto spec = GridSpec::make(6, 4);
    auto v = OneVarField::identity(spec);
    auto fam = enumerate_family(FamilyParams::make(spec, DyadicRational::pow2(-spec.m)), v);
    std::size_t expected = 0, found = 0;
    const auto units = std::int64_t{1} << spec.offset_exponent();
    for (std::int64_t j = 0; j < (std::int64_t{1} << spec.mw); ++j)
        for (std::int64_t o = 0; o < units; ++o)
            if (Parallelogram::fits(spec, spec.mw, 0, j, o)) ++expected;
    for (const auto& r : fam.members()) found += r.level() == spec.mw;
    EXPECT_EQ(found, expected);
    EXPECT_GT(found, std::size_t{0});
}

TEST(EnumerateFamily, ZeroFieldAtFullDensity) {
    auto spec = GridSpec::make(4, 2);
    auto fam = enumerate_family(FamilyParams::make(spec, DyadicRational(1)), OneVarField::constant(spec, 0));
    ASSERT_FALSE(fam.empty());
    for (const auto& r : fam.members()) {
        EXPECT_EQ(r.slope().index(), 0);
        EXPECT_TRUE(theta(r).contains(DyadicRational(0)) || r.slope().lo() == DyadicRational(0));
    }
}

TEST(EnumerateFamily, ResourceGuard) {
    auto spec = GridSpec::make(5, 3);
    EnumerationLimits limits;
    limits.max_m = 4;
    EXPECT_THROW(enumerate_family(FamilyParams::make(spec, q(1, 1)), OneVarField::identity(spec), limits),
                 std::length_error);
    EXPECT_THROW(FamilyParams::make(spec, DyadicRational(0)), std::invalid_argument);
    EXPECT_THROW(FamilyParams::make(spec, DyadicRational(2)), std::invalid_argument);
}

TEST(EnumerateFamilyProperty, MonotoneInDensity) {
    std::mt19937_64 rng(13);
    auto spec = GridSpec::make(5, 3);
    for (int t = 0; t < 6; ++t) {
        auto v = random_field(spec, rng);
        auto loose = keys(enumerate_family(FamilyParams::make(spec, q(1, 3)), v));
        auto tight = keys(enumerate_family(FamilyParams::make(spec, q(3, 3)), v));
        for (const auto& key : tight) EXPECT_NE(std::find(loose.begin(), loose.end(), key), loose.end());
    }
}

TEST(GMeasure, Examples) {
    auto spec = GridSpec::make(4, 2);
    DyadicInterval j(0, 0);
    SlopeCell s(2, 0);
    EXPECT_EQ(g_measure(j, s, OneVarField::constant(spec, s.center())), j.length());
    EXPECT_EQ(g_measure(j, s, OneVarField::constant(spec, s.center() + q(1, 1))), DyadicRational(0));
    EXPECT_THROW(g_measure(j, SlopeCell(0, 0), OneVarField::identity(spec)), std::invalid_argument);
}

TEST(GMeasure, IdentityFieldAgainstColumnScan) {
    // J = [0,1/2), s centered at 1/4 at level 1: window [-1/4, 3/4)
    auto spec = GridSpec::make(4, 2);
    auto v = OneVarField::identity(spec);
    DyadicInterval j(1, 0);
    SlopeCell s(1, 0);
    EXPECT_EQ(s.center(), q(1, 2));
    auto count = scan_columns(v, j.lo(), j.hi(), s.center(), q(1, 1));
    EXPECT_EQ(g_measure(j, s, v), spec.cell_side() * DyadicRational(count));
    EXPECT_EQ(g_measure(j, s, v), q(1, 1));
}

TEST(GMeasureProperty, BothWindowsMatchColumnScan) {
    std::mt19937_64 rng(17);
    auto spec = GridSpec::make(5, 3);
    for (int t = 0; t < 8; ++t) {
        auto v = random_field(spec, rng);
        for (int level = 0; level <= spec.mw; ++level) {
            int k = spec.mw - level;
            for (std::int64_t i = 0; i < (std::int64_t{1} << level); ++i) {
                DyadicInterval j(level, i);
                for (std::int64_t x = 0; x < (std::int64_t{1} << k); ++x) {
                    SlopeCell s(k, x);
                    auto wide = scan_columns(v, j.lo(), j.hi(), s.center(), DyadicRational::pow2(-k));
                    auto narrow = scan_columns(v, j.lo(), j.hi(), s.center(), DyadicRational::pow2(-k - 1));
                    EXPECT_EQ(g_measure(j, s, v), spec.cell_side() * DyadicRational(wide));
                    EXPECT_EQ(g_measure(j, s, v, WindowMode::theta), spec.cell_side() * DyadicRational(narrow));
                }
            }
        }
    }
}

TEST(AllowableSlopes, ConstantFieldGivesAtMostTwoCells) {
    auto spec = GridSpec::make(5, 3);
    for (auto c : {q(1, 3), q(5, 4), q(1, 1), q(31, 5)}) {
        auto v = OneVarField::constant(spec, c);
        for (int level = 0; level <= spec.mw; ++level) {
            auto slopes = allowable_slopes(DyadicInterval(level, 0), v, DyadicRational(1));
            EXPECT_GE(slopes.size(), std::size_t{1});
            EXPECT_LE(slopes.size(), std::size_t{2});
            for (const auto& s : slopes) {
                auto half = DyadicRational::pow2(-s.level());
                EXPECT_TRUE(s.center() - half <= c && c < s.center() + half);
            }
        }
    }
}

TEST(AllowableSlopes, FullDensityOnLongIntervalForIdentityField) {
    auto spec = GridSpec::make(5, 3);
    auto v = OneVarField::identity(spec);
    DyadicInterval j(0, 0);  // slopes at level 3, window half-width 1/8
    for (const auto& s : allowable_slopes(j, v, DyadicRational(1))) {
        auto half = DyadicRational::pow2(-s.level());
        for (std::int64_t c = 0; c < spec.side(); ++c)
            EXPECT_TRUE(s.center() - half <= v.at(c) && v.at(c) < s.center() + half);
    }
    EXPECT_TRUE(allowable_slopes(j, v, DyadicRational(1)).empty());
}

TEST(AllowableSlopesProperty, CountBoundedByTwoOverDeltaPlusTwo) {
    std::mt19937_64 rng(19);
    auto spec = GridSpec::make(6, 4);
    for (int t = 0; t < 10; ++t) {
        auto v = random_field(spec, rng);
        for (auto delta : {q(1, 1), q(1, 3), q(1, 5)}) {
            auto bound = 2 * (std::int64_t{1} << (delta.exponent())) / delta.numerator() + 2;
            for (int level = 0; level <= spec.mw; ++level)
                for (std::int64_t i = 0; i < (std::int64_t{1} << level); ++i) {
                    DyadicInterval j(level, i);
                    auto slopes = allowable_slopes(j, v, delta);
                    EXPECT_LE(static_cast<std::int64_t>(slopes.size()), bound);
                    // counting oracle
                    std::size_t expected = 0;
                    int k = spec.mw - level;
                    for (std::int64_t x = 0; x < (std::int64_t{1} << k); ++x) {
                        SlopeCell s(k, x);
                        auto count = scan_columns(v, j.lo(), j.hi(), s.center(), DyadicRational::pow2(-k));
                        expected += delta * DyadicRational(j.cell_count(spec.m)) <= DyadicRational(count);
                    }
                    EXPECT_EQ(slopes.size(), expected);
                }
        }
    }
}

TEST(IsGoodCollection, SharedSlopeIsOrganizedOverTheUnitInterval) {
    auto spec = GridSpec::make(5, 3);
    std::vector<Parallelogram> members = {Parallelogram::make(spec, 1, 0, 1, DyadicRational(0)),
                                          Parallelogram::make(spec, 1, 2, 1, DyadicRational(0)),
                                          Parallelogram::make(spec, 1, 1, 1, q(1, 3))};
    auto w = is_good_collection(members);
    EXPECT_TRUE(w.good);
    EXPECT_TRUE(w.organized);
    ASSERT_EQ(w.pairs.size(), std::size_t{1});
    EXPECT_EQ(w.pairs[0].first, DyadicInterval::unit());
    EXPECT_EQ(w.pairs[0].second, SlopeCell(1, 1));
}

TEST(IsGoodCollection, SameBaseDifferentSlopesIsNotGood) {
    auto spec = GridSpec::make(5, 3);
    std::vector<Parallelogram> members = {Parallelogram::make(spec, 1, 0, 0, DyadicRational(0)),
                                          Parallelogram::make(spec, 1, 0, 1, DyadicRational(0))};
    auto w = is_good_collection(members);
    EXPECT_FALSE(w.good);
    ASSERT_TRUE(w.conflict.has_value());
    EXPECT_EQ(*w.conflict, (std::pair<std::size_t, std::size_t>{0, 1}));
    EXPECT_FALSE(w.organized);
}

TEST(IsGoodCollection, EmptyCollection) {
    auto w = is_good_collection(std::span<const Parallelogram>{});
    EXPECT_TRUE(w.good);
    EXPECT_TRUE(w.organized);
}

TEST(IsGoodCollectionProperty, InvariantUnderReordering) {
    std::mt19937_64 rng(23);
    auto spec = GridSpec::make(5, 3);
    auto fam = enumerate_family(FamilyParams::make(spec, q(1, 2)), random_field(spec, rng));
    for (int t = 0; t < 50; ++t) {
        std::vector<Parallelogram> pick;
        for (const auto& r : fam.members())
            if (rng() % 8 == 0) pick.push_back(r);
        auto a = is_good_collection(pick);
        std::shuffle(pick.begin(), pick.end(), rng);
        auto b = is_good_collection(pick);
        EXPECT_EQ(a.good, b.good);
        EXPECT_EQ(a.organized, b.organized);
        EXPECT_EQ(a.pairs, b.pairs);
        if (a.organized) {
            for (const auto& r : pick) {
                bool covered = false;
                for (const auto& [j, s] : a.pairs) covered = covered || (j.contains(r.base()) && r.slope().contains(s));
                EXPECT_TRUE(covered);
            }
            for (std::size_t i = 0; i < a.pairs.size(); ++i)
                for (std::size_t k = i + 1; k < a.pairs.size(); ++k)
                    EXPECT_FALSE(a.pairs[i].first.intersects(a.pairs[k].first));
        }
    }
}

TEST(FamilyExport, RoundTripPreservesOrderAndParams) {
    auto spec = GridSpec::make(4, 2, OffsetStep::half_w);
    auto fam = enumerate_family(FamilyParams::make(spec, q(1, 2)), OneVarField::identity(spec));
    std::stringstream ss;
    write_family(ss, fam);
    auto back = read_family(ss);
    EXPECT_EQ(back.params(), fam.params());
    EXPECT_EQ(back.members(), fam.members());
    std::stringstream bad("family 1\nm 4 mw 2 offstep w delta 1 provenance enumerated count 1\nk 9 base 0 slope 0 off 0\n");
    EXPECT_THROW(read_family(bad), std::invalid_argument);
}
