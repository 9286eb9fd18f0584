#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "dirmax/badness.hpp"
#include "dirmax/calibration.hpp"
#include "dirmax/experiments.hpp"

using namespace dirmax;

namespace {

DyadicRational q(std::int64_t num, int exp) { return DyadicRational::make(num, exp); }

struct Setup {
    GridSpec spec;
    RectangleFamily fam;
    ChoiceMap rho;
    CellSet e;
};

Setup make_setup(int m, int mw, OffsetStep step, const DyadicRational& delta, std::uint64_t seed) {
    auto spec = GridSpec::make(m, mw, step);
    auto fam = enumerate_family(FamilyParams::make(spec, delta), random_field(spec, seed));
    auto rho = linearize(random_function(spec, seed + 1), fam);
    return {spec, fam, rho, random_set(spec, seed + 2)};
}

bool holds(const DyadicInterval& i, const DyadicRational& x) { return i.lo() <= x && x < i.hi(); }

/// Divides by a power-of-two measure.
DyadicRational over_measure(const DyadicRational& x, const DyadicRational& measure) {
    EXPECT_EQ(measure, DyadicRational::pow2(-measure.exponent()));
    return x.shifted(measure.exponent());
}

/// Fraction of cell (c, row) covered by R.
DyadicRational covered_fraction(const Parallelogram& r, std::int64_t c, std::int64_t row) {
    if (!r.has_column(c)) return DyadicRational(0);
    auto [lo, hi] = r.column_segment(c);
    const auto side = r.spec().cell_side();
    auto a = max(lo, DyadicRational(row) * side);
    auto b = min(hi, DyadicRational(row + 1) * side);
    return a < b ? (b - a).shifted(r.spec().m) : DyadicRational(0);
}

/// T*(1_F) cell by cell: each chooser x spreads |x| / |rho(x)| over the
/// cells its rectangle covers, weighted by the covered fraction.
std::vector<DyadicRational> brute_adjoint(const CellSet& f, const ChoiceMap& rho, const RectangleFamily& fam) {
    const auto& spec = fam.spec();
    std::vector<DyadicRational> out(spec.cell_count());
    const auto cell = q(1, 2 * spec.m);
    for (std::size_t x = 0; x < spec.cell_count(); ++x) {
        if (!f.contains(x) || rho.at(x) == ChoiceMap::none) continue;
        const auto& r = fam[static_cast<std::size_t>(rho.at(x))];
        auto weight = over_measure(cell, r.measure());
        for (std::int64_t c = 0; c < spec.side(); ++c)
            for (std::int64_t row = 0; row < spec.side(); ++row)
                out[spec.index(c, row)] += weight * covered_fraction(r, c, row);
    }
    return out;
}

DyadicRational brute_average(const Parallelogram& r, const std::vector<DyadicRational>& h) {
    const auto& spec = r.spec();
    DyadicRational sum;
    for (std::int64_t c = 0; c < spec.side(); ++c)
        for (std::int64_t row = 0; row < spec.side(); ++row)
            sum += h[spec.index(c, row)] * covered_fraction(r, c, row) * q(1, 2 * spec.m);
    return over_measure(sum, r.measure());
}

/// Choosers of E whose rectangle has its base inside I.
CellSet brute_local(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam, const DyadicInterval& i) {
    CellSet out(e.spec());
    for (std::size_t x = 0; x < e.spec().cell_count(); ++x) {
        if (!e.contains(x) || rho.at(x) == ChoiceMap::none) continue;
        const auto& base = fam[static_cast<std::size_t>(rho.at(x))].base();
        if (i.lo() <= base.lo() && base.hi() <= i.hi()) out.insert(x);
    }
    return out;
}

DyadicRational brute_badness(const Parallelogram& r, const CellSet& e, const ChoiceMap& rho,
                             const RectangleFamily& fam) {
    return brute_average(r, brute_adjoint(brute_local(e, rho, fam, r.base()), rho, fam));
}

/// Lowest and highest point of R, read off its column segments.
Span brute_extent(const Parallelogram& r) {
    auto [lo, hi] = r.column_segment(r.column_begin());
    for (auto c = r.column_begin(); c < r.column_end(); ++c) {
        auto [a, b] = r.column_segment(c);
        lo = min(lo, a);
        hi = max(hi, b);
    }
    return {lo, hi};
}

struct BruteSplit {
    Ratio in;
    Ratio out;
};

/// Averages over the cells of I x [row_lo, row_hi) of T* applied to the
/// local choosers split by containment of their extent in [span_lo, span_hi).
BruteSplit brute_split(const DyadicInterval& i, const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                       const Span& containment, std::int64_t row_lo, std::int64_t row_hi) {
    const auto& spec = fam.spec();
    auto local = brute_local(e, rho, fam, i);
    CellSet in(spec), out(spec);
    for (std::size_t x = 0; x < spec.cell_count(); ++x) {
        if (!local.contains(x)) continue;
        auto ext = brute_extent(fam[static_cast<std::size_t>(rho.at(x))]);
        if (containment.lo <= ext.lo && ext.hi <= containment.hi)
            in.insert(x);
        else
            out.insert(x);
    }
    auto window_sum = [&](const std::vector<DyadicRational>& h) {
        DyadicRational sum;
        for (std::int64_t c = 0; c < spec.side(); ++c) {
            if (!holds(i, spec.column_center(c))) continue;
            for (auto row = row_lo; row < row_hi; ++row) sum += h[spec.index(c, row)];
        }
        return sum;
    };
    std::int64_t cells = 0;
    for (std::int64_t c = 0; c < spec.side(); ++c) cells += holds(i, spec.column_center(c));
    cells *= row_hi - row_lo;
    return {Ratio{window_sum(brute_adjoint(in, rho, fam)), cells},
            Ratio{window_sum(brute_adjoint(out, rho, fam)), cells}};
}

std::pair<std::int64_t, std::int64_t> rows_of(const GridSpec& spec, const DyadicInterval& k) {
    std::int64_t lo = spec.side(), hi = 0;
    for (std::int64_t row = 0; row < spec.side(); ++row) {
        if (!holds(k, spec.row_center(row))) continue;
        lo = std::min(lo, row);
        hi = std::max(hi, row + 1);
    }
    return {lo, hi};
}

/// Rows of the concentric triple of K clipped to [0,1].
std::pair<std::int64_t, std::int64_t> tripled_rows_of(const GridSpec& spec, const DyadicInterval& k) {
    auto [lo, hi] = rows_of(spec, k);
    auto n = hi - lo;
    return {std::max<std::int64_t>(0, lo - n), std::min<std::int64_t>(spec.side(), hi + n)};
}

BruteSplit brute_in_out(const DyadicInterval& i, const DyadicInterval& k, const CellSet& e, const ChoiceMap& rho,
                        const RectangleFamily& fam) {
    auto [lo, hi] = rows_of(fam.spec(), k);
    auto len = k.length();
    return brute_split(i, e, rho, fam, {k.lo() - len, k.hi() + len}, lo, hi);
}

BruteSplit brute_tripled(const DyadicInterval& i, const DyadicInterval& k, const CellSet& e, const ChoiceMap& rho,
                         const RectangleFamily& fam) {
    auto [lo, hi] = tripled_rows_of(fam.spec(), k);
    auto len = k.length();
    return brute_split(i, e, rho, fam, {k.lo() - DyadicRational(4) * len, k.hi() + DyadicRational(4) * len}, lo, hi);
}

std::vector<DyadicInterval> all_intervals(int max_level) {
    std::vector<DyadicInterval> out;
    for (int level = 0; level <= max_level; ++level)
        for (std::int64_t t = 0; t < (std::int64_t{1} << level); ++t) out.emplace_back(level, t);
    return out;
}

/// Bad windows of I by scanning every vertical dyadic K.
std::vector<DyadicInterval> brute_bad_windows(const DyadicInterval& i, const CellSet& e, const ChoiceMap& rho,
                                              const RectangleFamily& fam, const DyadicRational& lambda0) {
    std::vector<DyadicInterval> out;
    for (const auto& k : all_intervals(fam.spec().m)) {
        auto inside = brute_in_out(i, k, e, rho, fam);
        auto wide = brute_tripled(i, k, e, rho, fam);
        if (inside.out >= lambda0 && wide.out < lambda0) out.push_back(k);
    }
    return out;
}

/// E' from the definition: union of I x 3K over all bad windows.
CellSet brute_next(const CellSet& e, const ChoiceMap& rho, const RectangleFamily& fam,
                   const DyadicRational& lambda0) {
    const auto& spec = fam.spec();
    CellSet out(spec);
    for (const auto& i : all_intervals(spec.mw)) {
        for (const auto& k : brute_bad_windows(i, e, rho, fam, lambda0)) {
            auto [lo, hi] = tripled_rows_of(spec, k);
            for (std::int64_t c = 0; c < spec.side(); ++c) {
                if (!holds(i, spec.column_center(c))) continue;
                for (auto row = lo; row < hi; ++row) out.insert(spec.index(c, row));
            }
        }
    }
    return out;
}

RectangleFamily single_member(const GridSpec& spec, const Parallelogram& r) {
    return RectangleFamily(FamilyParams::make(spec, DyadicRational(1)), {r});
}

}  // namespace

// ---------------------------------------------------------------------------
// Badness

TEST(Badness, EmptySetHasZeroBadness) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 1), 3);
    CellSet none(s.spec);
    for (const auto& b : badness_all(none, s.rho, s.fam)) EXPECT_EQ(b, DyadicRational(0));
    EXPECT_EQ(badness(s.fam[0], none, s.rho, s.fam), DyadicRational(0));
}

TEST(Badness, SingleMemberIsNuOverMeasureTimesSelfOverlap) {
    auto spec = GridSpec::make(4, 2, OffsetStep::w);
    auto r = Parallelogram::from_units(spec, 1, 0, 0, 0);
    auto fam = single_member(spec, r);
    auto rho = linearize(member_cells(r).indicator(), fam);
    auto e = rho.covered();
    auto nu_r = nu(rho, e, 0);
    ASSERT_GT(nu_r, DyadicRational(0));
    // Cell-averaged T* spreads nu/|R| over the covered fractions of R, so the
    // average over R is nu/|R| times the average of that profile.
    std::vector<DyadicRational> fractions(spec.cell_count());
    for (std::int64_t c = 0; c < spec.side(); ++c)
        for (std::int64_t row = 0; row < spec.side(); ++row) fractions[spec.index(c, row)] = covered_fraction(r, c, row);
    auto expected = over_measure(nu_r, r.measure()) * brute_average(r, fractions);
    EXPECT_EQ(badness(r, e, rho, fam), expected);
    EXPECT_LE(badness(r, e, rho, fam), over_measure(nu_r, r.measure()));
}

TEST(Badness, MatchesDirectDoubleIntegral) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto s = make_setup(4, 1 + static_cast<int>(seed % 2), seed % 3 ? OffsetStep::w : OffsetStep::half_w,
                            q(1, 1 + static_cast<int>(seed % 3)), 100 + seed);
        auto all = badness_all(s.e, s.rho, s.fam);
        ASSERT_EQ(all.size(), s.fam.size());
        for (std::size_t i = 0; i < s.fam.size(); ++i) {
            auto expected = brute_badness(s.fam[i], s.e, s.rho, s.fam);
            EXPECT_EQ(all[i], expected) << s.fam[i].to_string();
            if (i % 7 == 0) EXPECT_EQ(badness(s.fam[i], s.e, s.rho, s.fam), expected);
        }
    }
}

TEST(Badness, TableCarriesChooserMeasures) {
    auto s = make_setup(4, 2, OffsetStep::half_w, q(1, 2), 41);
    auto t = badness_table(s.e, s.rho, s.fam);
    ASSERT_EQ(t.nu.size(), s.fam.size());
    for (std::size_t i = 0; i < s.fam.size(); ++i) {
        EXPECT_EQ(t.nu[i], nu(s.rho, s.e, i));
        EXPECT_GE(t.badness[i], DyadicRational(0));
    }
}

TEST(Badness, MonotoneInTheSet) {
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 200 + seed);
        auto bigger = s.e;
        for (std::size_t x = 0; x < s.spec.cell_count(); ++x)
            if (rng() % 2) bigger.insert(x);
        auto small = badness_all(s.e, s.rho, s.fam);
        auto large = badness_all(bigger, s.rho, s.fam);
        for (std::size_t i = 0; i < s.fam.size(); ++i) EXPECT_LE(small[i], large[i]);
    }
}

// ---------------------------------------------------------------------------
// Quadratic reformulation

TEST(Reformulate, EmptySetGivesZeroSides) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 1), 7);
    auto sides = reformulate_check(CellSet(s.spec), s.rho, s.fam);
    EXPECT_EQ(sides.lhs, DyadicRational(0));
    EXPECT_EQ(sides.rhs, DyadicRational(0));
}

TEST(Reformulate, SingleMemberSidesAreEqual) {
    auto spec = GridSpec::make(5, 2, OffsetStep::half_w);
    for (std::int64_t off = 0; off < 3; ++off) {
        ASSERT_TRUE(Parallelogram::fits(spec, 1, 1, 0, off));
        auto r = Parallelogram::from_units(spec, 1, 1, 0, off);
        auto fam = single_member(spec, r);
        auto rho = linearize(member_cells(r).indicator(), fam);
        auto sides = reformulate_check(rho.covered(), rho, fam);
        EXPECT_GT(sides.lhs, DyadicRational(0));
        EXPECT_EQ(sides.lhs, sides.rhs) << r.to_string();
    }
}

TEST(Reformulate, BothSidesMatchDirectSumsAndCalibratedBound) {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto s = make_setup(4, 1 + static_cast<int>(seed % 2), seed % 2 ? OffsetStep::w : OffsetStep::half_w,
                            q(1, 1 + static_cast<int>(seed % 3)), 300 + seed);
        auto sides = reformulate_check(s.e, s.rho, s.fam);
        if (seed < 10) {
            auto h = brute_adjoint(s.e, s.rho, s.fam);
            DyadicRational lhs, rhs;
            for (const auto& v : h) lhs += v * v * q(1, 2 * s.spec.m);
            for (std::size_t i = 0; i < s.fam.size(); ++i)
                rhs += nu(s.rho, s.e, i) * brute_badness(s.fam[i], s.e, s.rho, s.fam);
            EXPECT_EQ(sides.lhs, lhs);
            EXPECT_EQ(sides.rhs, rhs);
        }
        EXPECT_LE(sides.lhs.to_double(), calibration::reformulate * sides.rhs.to_double()) << seed;
        if (sides.rhs > DyadicRational(0)) worst = std::max(worst, sides.lhs.to_double() / sides.rhs.to_double());
    }
    RecordProperty("worst_lhs_over_rhs", std::to_string(worst));
}

// ---------------------------------------------------------------------------
// Window splits

TEST(InOutSplit, EmptySetGivesZero) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 1), 9);
    auto split = in_out_split(DyadicInterval(0, 0), DyadicInterval(1, 1), CellSet(s.spec), s.rho, s.fam);
    EXPECT_EQ(split.in, DyadicRational(0));
    EXPECT_EQ(split.out, DyadicRational(0));
}

TEST(InOutSplit, EverythingInsideLeavesNothingOut) {
    // K = [0,1) triples to a span containing every rectangle.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 500 + seed);
        for (const auto& i : all_intervals(s.spec.mw)) {
            auto split = in_out_split(i, DyadicInterval(0, 0), s.e, s.rho, s.fam);
            EXPECT_EQ(split.out, DyadicRational(0));
        }
    }
}

TEST(InOutSplit, MatchesDirectClassification) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto s = make_setup(4, 2, seed % 2 ? OffsetStep::half_w : OffsetStep::w, q(1, 1 + static_cast<int>(seed)),
                            600 + seed);
        for (const auto& i : all_intervals(s.spec.mw)) {
            for (const auto& k : all_intervals(s.spec.m)) {
                auto mine = in_out_split(i, k, s.e, s.rho, s.fam);
                auto theirs = brute_in_out(i, k, s.e, s.rho, s.fam);
                EXPECT_EQ(mine.in, theirs.in) << i.to_string() << " x " << k.to_string();
                EXPECT_EQ(mine.out, theirs.out) << i.to_string() << " x " << k.to_string();
                if (k.level() <= 2) {
                    auto wide = tripled_split(i, k, s.e, s.rho, s.fam);
                    auto wide_brute = brute_tripled(i, k, s.e, s.rho, s.fam);
                    EXPECT_EQ(wide.in, wide_brute.in);
                    EXPECT_EQ(wide.out, wide_brute.out);
                }
            }
        }
    }
}

TEST(InOutSplit, WindowScanAgreesWithSplits) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 650);
    for (const auto& w : scan_windows(s.e, s.rho, s.fam)) {
        auto split = in_out_split(w.base, w.window, s.e, s.rho, s.fam);
        EXPECT_EQ(split.in, w.b_in);
        EXPECT_EQ(split.out, w.b_out);
        EXPECT_EQ(tripled_split(w.base, w.window, s.e, s.rho, s.fam).out, w.b_out_tripled);
    }
}

TEST(InOutSplit, RejectsWindowsFinerThanTheGrid) {
    auto s = make_setup(3, 1, OffsetStep::w, q(1, 1), 11);
    EXPECT_THROW(in_out_split(DyadicInterval(0, 0), DyadicInterval(4, 0), s.e, s.rho, s.fam), std::invalid_argument);
}

TEST(SplitIdentity, HalvesAddUpToBadnessForEveryWindow) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto s = make_setup(4, 2, seed % 2 ? OffsetStep::half_w : OffsetStep::w, q(1, 1 + static_cast<int>(seed % 3)),
                            700 + seed);
        auto b = badness_all(s.e, s.rho, s.fam);
        for (std::size_t i = 0; i < s.fam.size(); i += 3) {
            for (const auto& k : all_intervals(s.spec.m)) {
                auto [in, out] = split_over_rectangle(s.fam[i], k, s.e, s.rho, s.fam);
                EXPECT_GE(in, DyadicRational(0));
                EXPECT_GE(out, DyadicRational(0));
                EXPECT_EQ(in + out, b[i]);
            }
        }
    }
}

TEST(MassBound, AdjointOfWindowSetHasMassAtMostItsArea) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 800 + seed);
        auto ones = CellSet::all(s.spec).indicator();
        for (const auto& i : all_intervals(s.spec.mw)) {
            for (const auto& k : all_intervals(3)) {
                auto [lo, hi] = tripled_rows_of(s.spec, k);
                CellSet window(s.spec);
                for (std::int64_t c = 0; c < s.spec.side(); ++c) {
                    if (!holds(i, s.spec.column_center(c))) continue;
                    for (auto row = lo; row < hi; ++row) window.insert(s.spec.index(c, row));
                }
                auto mass = apply_T_adjoint(s.rho, s.fam, (s.e & window).indicator()).inner(ones);
                auto span = to_span(k).tripled().clipped();
                EXPECT_LE(mass, i.length() * span.length());
                EXPECT_EQ(mass, (s.e & window & s.rho.covered()).measure());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Bad windows and the shrinking step

TEST(BadWindows, HugeThresholdSelectsNothing) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 13);
    auto all = CellSet::all(s.spec);
    for (const auto& i : all_intervals(s.spec.mw))
        EXPECT_TRUE(select_bad_windows(i, all, s.rho, s.fam, DyadicRational::pow2(20)).empty());
}

TEST(BadWindows, NothingWhenNoWindowReachesTheThreshold) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 14);
    for (const auto& i : all_intervals(s.spec.mw)) {
        Ratio largest{DyadicRational(0), 1};
        for (const auto& k : all_intervals(s.spec.m))
            largest = std::max(largest, in_out_split(i, k, s.e, s.rho, s.fam).out);
        // Any threshold above every B_out selects nothing.
        auto above = DyadicRational(1);
        while (!(largest < above)) above = above * DyadicRational(2);
        EXPECT_TRUE(select_bad_windows(i, s.e, s.rho, s.fam, above).empty());
    }
}

TEST(BadWindows, MatchBruteForceScan) {
    int found = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto s = make_setup(4, 2, OffsetStep::w, q(1, 1 + static_cast<int>(seed)), 900 + seed);
        auto covered = s.rho.covered();
        for (const auto& lambda0 : {DyadicRational(1), DyadicRational(2)}) {
            for (const auto& i : all_intervals(s.spec.mw)) {
                auto mine = select_bad_windows(i, covered, s.rho, s.fam, lambda0);
                auto theirs = brute_bad_windows(i, covered, s.rho, s.fam, lambda0);
                std::sort(mine.begin(), mine.end());
                std::sort(theirs.begin(), theirs.end());
                EXPECT_EQ(mine, theirs) << i.to_string();
                found += static_cast<int>(theirs.size());
            }
        }
    }
    EXPECT_GT(found, 0);
}

TEST(BadWindows, ThresholdBelowOneIsRejected) {
    auto s = make_setup(3, 1, OffsetStep::w, q(1, 1), 15);
    EXPECT_THROW(select_bad_windows(DyadicInterval(0, 0), s.e, s.rho, s.fam, q(1, 1)), std::invalid_argument);
    EXPECT_THROW(shrink_once(s.e, s.rho, s.fam, q(1, 1)), std::invalid_argument);
}

TEST(ShrinkOnce, EmptySetStaysEmpty) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 16);
    auto step = shrink_once(CellSet(s.spec), s.rho, s.fam, calibration::lambda0());
    EXPECT_TRUE(step.next.empty());
    EXPECT_TRUE(step.windows.empty());
    EXPECT_TRUE(step.counterexamples.empty());
}

TEST(ShrinkOnce, MatchesDefinitionReplay) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto s = make_setup(4, 2, seed % 2 ? OffsetStep::half_w : OffsetStep::w, q(1, 1 + static_cast<int>(seed)),
                            1000 + seed);
        for (const auto& e : {s.e, s.rho.covered()}) {
            for (const auto& lambda0 : {DyadicRational(1), calibration::lambda0()}) {
                auto step = shrink_once(e, s.rho, s.fam, lambda0);
                EXPECT_EQ(step.next, brute_next(e, s.rho, s.fam, lambda0));
                // high_maximal is the level set of M T*(1_E).
                auto h = GridFunction::from_values(s.spec, brute_adjoint(e, s.rho, s.fam));
                auto mt = maximal_apply(h, s.fam);
                for (std::size_t x = 0; x < s.spec.cell_count(); ++x)
                    EXPECT_EQ(step.high_maximal.contains(x), mt.at(x) >= lambda0.shifted(-1));
                EXPECT_EQ(step.audited, s.fam.size());
            }
        }
    }
}

TEST(ShrinkOnce, HalvesAtTheCalibratedThreshold) {
    for (const auto& inst : corpus_up_to(4)) {
        auto fam = enumerate_family(FamilyParams::make(inst.spec, inst.delta), inst.field);
        auto rho = linearize(inst.f, fam);
        for (const auto& e : {inst.e, rho.covered()}) {
            auto step = shrink_once(e, rho, fam, calibration::lambda0());
            EXPECT_LE(DyadicRational(2) * step.next.measure(), e.measure()) << inst.name;
            EXPECT_TRUE(step.counterexamples.empty()) << inst.name;
        }
    }
}

TEST(ShrinkOnce, KeyConstantIsTwentyLambda) {
    EXPECT_EQ(key_constant(DyadicRational(2)), DyadicRational(40));
    EXPECT_EQ(key_constant(DyadicRational(1)), DyadicRational(20));
}

// ---------------------------------------------------------------------------
// Iterated shrinking

TEST(ShrinkIterate, EmptySetGivesEmptyTrace) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 17);
    auto trace = shrink_iterate(CellSet(s.spec), s.rho, s.fam, calibration::lambda0(), 16);
    EXPECT_TRUE(trace.sets.empty());
    EXPECT_TRUE(trace.windows.empty());
    EXPECT_TRUE(trace.bands.empty());
    EXPECT_FALSE(trace.truncated);
}

TEST(ShrinkIterate, MeasuresDecayGeometrically) {
    for (const auto& inst : corpus_up_to(4)) {
        auto fam = enumerate_family(FamilyParams::make(inst.spec, inst.delta), inst.field);
        auto rho = linearize(inst.f, fam);
        for (const auto& e : {inst.e, rho.covered()}) {
            if (e.empty()) continue;
            auto trace = shrink_iterate(e, rho, fam, calibration::lambda0(), 64);
            auto measures = trace.measures();
            ASSERT_EQ(measures.size(), trace.sets.size());
            EXPECT_EQ(measures.front(), e.measure());
            for (std::size_t j = 0; j < measures.size(); ++j)
                EXPECT_LE(measures[j], e.measure().shifted(-static_cast<int>(j))) << inst.name;
            EXPECT_FALSE(trace.truncated);
            EXPECT_TRUE(trace.sets.back().empty());
        }
    }
}

TEST(ShrinkIterate, BandsMatchDirectComputation) {
    // At lambda0 = 1 the bands are C_key * k = 20 k; use covered sets so
    // badness is as large as it gets on the instance.
    std::size_t rows = 0;
    for (const auto& inst : corpus_up_to(4)) {
        auto fam = enumerate_family(FamilyParams::make(inst.spec, inst.delta), inst.field);
        auto rho = linearize(inst.f, fam);
        auto e = rho.covered();
        if (e.empty()) continue;
        ShrinkTrace trace;
        try {
            trace = shrink_iterate(e, rho, fam, DyadicRational(1), 64);
        } catch (const HalvingFailure&) {
            continue;
        }
        auto b = badness_all(e, rho, fam);
        for (const auto& row : trace.bands) {
            ++rows;
            std::size_t members = 0;
            CellSet union_cells(inst.spec);
            for (std::size_t i = 0; i < fam.size(); ++i)
                if (b[i] >= DyadicRational(20 * row.k)) ++members;
            EXPECT_EQ(row.members, members);
            EXPECT_EQ(row.bound, e.measure().shifted(-static_cast<int>(row.k)));
            EXPECT_EQ(row.chain_violations, 0u) << inst.name << " k=" << row.k;
        }
        // The first band past the last row is empty.
        std::int64_t next = static_cast<std::int64_t>(trace.bands.size()) + 1;
        for (std::size_t i = 0; i < fam.size(); ++i) EXPECT_LT(b[i], DyadicRational(20 * next));
    }
    RecordProperty("band_rows", std::to_string(rows));
}

TEST(ShrinkIterate, UnionMeasureMatchesCoveredFractions) {
    auto s = make_setup(4, 2, OffsetStep::half_w, q(1, 2), 18);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < s.fam.size(); i += 5) members.push_back(i);
    DyadicRational expected;
    for (std::int64_t c = 0; c < s.spec.side(); ++c) {
        // Exact union of the slabs over column c.
        std::vector<std::pair<DyadicRational, DyadicRational>> segs;
        for (auto i : members)
            if (s.fam[i].has_column(c)) segs.push_back(s.fam[i].column_segment(c));
        std::sort(segs.begin(), segs.end());
        DyadicRational end;
        bool open = false;
        for (const auto& [lo, hi] : segs) {
            if (!open || end < lo) {
                expected += (hi - lo) * s.spec.cell_side();
                end = hi;
                open = true;
            } else if (end < hi) {
                expected += (hi - end) * s.spec.cell_side();
                end = hi;
            }
        }
    }
    EXPECT_EQ(union_measure(s.fam, members), expected);
}

TEST(ShrinkIterate, CsvListsEveryStep) {
    auto s = make_setup(4, 2, OffsetStep::w, q(1, 2), 19);
    auto trace = shrink_iterate(s.rho.covered(), s.rho, s.fam, calibration::lambda0(), 64);
    auto csv = trace.to_csv();
    EXPECT_EQ(csv.rfind("step,measure\n", 0), 0u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), trace.sets.size() + 1);
}

TEST(ShrinkIterate, CalibratedThresholdIsTheSmallestThatHalves) {
    std::vector<ShrinkInstance> corpus;
    for (const auto& inst : corpus_up_to(5)) {
        auto fam = enumerate_family(FamilyParams::make(inst.spec, inst.delta), inst.field);
        auto rho = linearize(inst.f, fam);
        corpus.push_back({inst.e, rho, fam});
        corpus.push_back({rho.covered(), rho, fam});
    }
    EXPECT_EQ(calibrate_lambda0(corpus, 64), calibration::lambda0());
}

// ---------------------------------------------------------------------------
// Unions of good collections

namespace {

std::vector<GridFunction> seeds_for(const GridSpec& spec) { return norm_seeds(spec, {}, 1, 2); }

}  // namespace

TEST(Collections, SingleCollectionIsBounded) {
    auto spec = GridSpec::make(6, 4, OffsetStep::w);
    auto rep = multi_collection_experiment(
        {1}, [&](std::int64_t n) { return distinct_slope_collections(spec, n); }, seeds_for, 8);
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_GT(rep.rows[0].best_ratio, 0.0);
    // Translates of one rectangle at offset step w tile each column, so M is
    // an average over a partition.
    EXPECT_LE(rep.rows[0].best_ratio, 1.0);
}

TEST(Collections, IdenticalCopiesLeaveTheRatioUnchanged) {
    auto spec = GridSpec::make(6, 4, OffsetStep::w);
    auto base = distinct_slope_collections(spec, 2);
    auto once = multi_collection_experiment(
        {2}, [&](std::int64_t) { return base; }, seeds_for, 8);
    auto twice = multi_collection_experiment(
        {2},
        [&](std::int64_t) {
            auto doubled = base;
            doubled.insert(doubled.end(), base.begin(), base.end());
            return doubled;
        },
        seeds_for, 8);
    EXPECT_EQ(once.rows[0].members, twice.rows[0].members);
    EXPECT_DOUBLE_EQ(once.rows[0].best_ratio, twice.rows[0].best_ratio);
}

TEST(Collections, NonGoodCollectionIsRejectedWithWitness) {
    auto spec = GridSpec::make(5, 3, OffsetStep::w);
    // Two overlapping rectangles with distinct slopes at the same level are
    // not a good collection.
    std::vector<Parallelogram> members{Parallelogram::from_units(spec, 1, 0, 0, 0),
                                       Parallelogram::from_units(spec, 1, 0, 1, 0)};
    RectangleFamily bad(FamilyParams::make(spec, DyadicRational(1)), members);
    try {
        multi_collection_experiment({1}, [&](std::int64_t) { return std::vector<RectangleFamily>{bad}; }, seeds_for, 4);
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& err) {
        EXPECT_NE(std::string(err.what()).find("not good"), std::string::npos) << err.what();
    }
}

TEST(Collections, SweepFitsAgainstLogN) {
    auto spec = GridSpec::make(7, 5, OffsetStep::w);
    auto rep = multi_collection_experiment(
        {2, 4, 8}, [&](std::int64_t n) { return distinct_slope_collections(spec, n); }, seeds_for, 8);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_TRUE(rep.fit.determined);
    for (const auto& row : rep.rows)
        EXPECT_LE(row.best_ratio, calibration::collections * (1 + std::log2(static_cast<double>(row.n))));
    EXPECT_THROW(multi_collection_experiment(
                     {0}, [&](std::int64_t n) { return distinct_slope_collections(spec, n); }, seeds_for, 4),
                 std::invalid_argument);
}
