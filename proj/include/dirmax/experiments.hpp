#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirmax/badness.hpp"
#include "dirmax/dyadic.hpp"
#include "dirmax/family.hpp"
#include "dirmax/fit.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/maximal.hpp"
#include "dirmax/parallel.hpp"
#include "dirmax/parallelogram.hpp"

namespace dirmax {

/// n with delta = 2^-n.
inline int dyadic_log2(const DyadicRational& delta) {
    if (delta.sign() <= 0 || delta.numerator() != 1 || delta.exponent() < 0)
        throw std::invalid_argument("dyadic delta required");
    return delta.exponent();
}

// ---------------------------------------------------------------------------
// Fields and random data

enum class FieldKind { constant, identity, random, ladder };

inline std::string to_string(FieldKind k) {
    switch (k) {
        case FieldKind::constant: return "constant";
        case FieldKind::identity: return "identity";
        case FieldKind::random: return "random";
        case FieldKind::ladder: return "ladder";
    }
    return "?";
}

/// Per-column values drawn uniformly from the level-m grid {0, 2^-m, ...}.
inline OneVarField random_field(const GridSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<DyadicRational> vals;
    for (std::int64_t c = 0; c < spec.side(); ++c)
        vals.push_back(DyadicRational::make(static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(spec.side())),
                                            spec.m));
    return {spec, std::move(vals)};
}

/// Piecewise constant field taking the value (2t + 1)/8 on the columns whose
/// index starts with exactly t one-bits (t capped at 3). Successive right
/// halves carry fresh popular slopes, so the accumulated density reaches 2
/// on [3/4, 1) once mw >= 3.
inline OneVarField ladder_field(const GridSpec& spec) {
    std::vector<DyadicRational> vals;
    for (std::int64_t c = 0; c < spec.side(); ++c) {
        int ones = 0;
        while (ones < spec.m && ((c >> (spec.m - 1 - ones)) & 1)) ++ones;
        vals.push_back(DyadicRational::make(2 * std::min(ones, 3) + 1, 3));
    }
    return {spec, std::move(vals)};
}

inline OneVarField make_field(const GridSpec& spec, FieldKind kind, std::uint64_t seed) {
    switch (kind) {
        case FieldKind::constant: {
            std::mt19937_64 rng(seed);
            return OneVarField::constant(
                spec, DyadicRational::make(static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(spec.side())),
                                           spec.m));
        }
        case FieldKind::identity: return OneVarField::identity(spec);
        case FieldKind::random: return random_field(spec, seed);
        case FieldKind::ladder: return ladder_field(spec);
    }
    throw std::invalid_argument("unknown field kind");
}

/// Values k / 2^bits with k uniform in [0, 2^bits).
inline GridFunction random_function(const GridSpec& spec, std::uint64_t seed, int bits = 4) {
    std::mt19937_64 rng(seed);
    std::vector<int128> num(spec.cell_count());
    for (auto& x : num) x = static_cast<int128>(rng() >> (64 - bits));
    return GridFunction::from_scaled(spec, num, bits);
}

/// Each cell independently with probability 1/2.
inline CellSet random_set(const GridSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CellSet out(spec);
    for (std::size_t i = 0; i < spec.cell_count(); ++i)
        if (rng() & 1) out.insert(i);
    return out;
}

// ---------------------------------------------------------------------------
// Verification corpus

struct Instance {
    std::string name;
    GridSpec spec;
    DyadicRational delta;
    FieldKind kind = FieldKind::random;
    std::uint64_t seed = 0;
    OneVarField field;
    /// Test function; its linearization is the instance's choice map.
    GridFunction f;
    /// Test set for the badness machinery.
    CellSet e;
};

struct InstanceSpec {
    int m;
    int mw;
    OffsetStep step;
    FieldKind kind;
    DyadicRational delta;
};

inline Instance make_instance(const InstanceSpec& s, std::uint64_t seed) {
    Instance inst;
    inst.spec = GridSpec::make(s.m, s.mw, s.step);
    inst.delta = s.delta;
    inst.kind = s.kind;
    inst.seed = seed;
    inst.field = make_field(inst.spec, s.kind, seed);
    inst.f = random_function(inst.spec, seed ^ 0x9e3779b97f4a7c15ULL);
    inst.e = random_set(inst.spec, seed ^ 0x5851f42d4c957f2dULL);
    std::ostringstream name;
    name << "m" << s.m << "-mw" << s.mw << "-" << to_string(s.step) << "-" << to_string(s.kind) << "-d"
         << s.delta.to_string() << "-s" << seed;
    inst.name = name.str();
    if (s.kind == FieldKind::ladder) {
        // Concentrate f on a rectangle over [3/4, 1) with slope cell [1/2, 1)
        // at level 1 so that some choices fall outside every good pair.
        auto fam = enumerate_family(FamilyParams::make(inst.spec, inst.delta), inst.field);
        DyadicInterval target(2, 3);
        for (const auto& r : fam.members()) {
            if (target.contains(r.base()) && r.level() >= 1 &&
                r.slope().index() == (std::int64_t{1} << r.level()) - 1) {
                inst.f = member_cells(r).indicator() + inst.f.scaled(DyadicRational::make(1, 4));
                break;
            }
        }
    }
    return inst;
}

/// Fixed corpus: 50 instances at m <= 4 and 10 at m = 5, covering the
/// constant field, v(x) = x, random fields, both offset steps and
/// delta in {1, 1/2, 1/8}, plus ladder fields that produce several
/// generations.
inline std::vector<Instance> standard_corpus() {
    const std::vector<DyadicRational> deltas{DyadicRational(1), DyadicRational::make(1, 1),
                                             DyadicRational::make(1, 3)};
    const FieldKind kinds[] = {FieldKind::constant, FieldKind::identity, FieldKind::random};
    std::vector<InstanceSpec> specs;
    for (int i = 0; i < 50; ++i) {
        int m = 3 + i % 2;
        // two empty families (w = 1 admits no rectangle), the rest nonempty
        int mw = i < 2 ? 0 : 1 + (i / 2) % (m - 2);
        auto step = (i / 6) % 2 ? OffsetStep::half_w : OffsetStep::w;
        specs.push_back({m, mw, step, kinds[i % 3], deltas[(i / 3) % 3]});
    }
    auto half = DyadicRational::make(1, 1);
    specs.push_back({5, 3, OffsetStep::w, FieldKind::ladder, half});
    specs.push_back({5, 3, OffsetStep::half_w, FieldKind::ladder, half});
    specs.push_back({5, 3, OffsetStep::w, FieldKind::ladder, DyadicRational::make(1, 3)});
    specs.push_back({5, 0, OffsetStep::w, FieldKind::constant, DyadicRational(1)});
    specs.push_back({5, 3, OffsetStep::half_w, FieldKind::constant, half});
    specs.push_back({5, 2, OffsetStep::half_w, FieldKind::identity, half});
    specs.push_back({5, 2, OffsetStep::half_w, FieldKind::identity, DyadicRational::make(1, 3)});
    specs.push_back({5, 3, OffsetStep::w, FieldKind::random, DyadicRational::make(1, 3)});
    specs.push_back({5, 2, OffsetStep::half_w, FieldKind::random, half});
    specs.push_back({5, 1, OffsetStep::w, FieldKind::random, DyadicRational(1)});
    std::vector<Instance> out;
    for (std::size_t i = 0; i < specs.size(); ++i) out.push_back(make_instance(specs[i], 1000 + i));
    return out;
}

/// Corpus instances with m <= max_m.
inline std::vector<Instance> corpus_up_to(int max_m) {
    std::vector<Instance> out;
    for (auto& inst : standard_corpus())
        if (inst.spec.m <= max_m) out.push_back(std::move(inst));
    return out;
}

// ---------------------------------------------------------------------------
// Kakeya and square instances

struct KakeyaOptions {
    /// The support of f is cut to the columns left of this abscissa; the
    /// rectangles fan out to the right of it.
    DyadicRational trunk = DyadicRational::make(1, 1);
    /// Number of slope digits that are compressed; -1 means all.
    int depth = -1;
    OffsetStep step = OffsetStep::w;
};

struct KakeyaInstance {
    GridSpec spec;
    DyadicRational delta;
    OneVarField field;
    GridFunction f;
    /// One length-1 rectangle per slope cell of level log2(1/delta), except
    /// the top cell, whose rectangle cannot fit in the square.
    std::vector<Parallelogram> rectangles;
    DyadicRational support_measure;
    int depth = 0;
    DyadicRational trunk;

    std::string metadata() const {
        std::ostringstream os;
        os << "construction=bisect-translate\ndepth=" << depth << "\ntrunk=" << trunk.to_string()
           << "\nrectangles=" << rectangles.size() << "\nsupport=" << support_measure.to_string() << '\n';
        return os.str();
    }
};

/// Perron-tree instance on v(x) = x with w = delta: slope j with binary
/// digits e_1..e_n gets offset T - sum_i e_i 2^-i c_i, where c_i = trunk *
/// min(i - 1, depth) / n. Lines of
/// slopes sharing their first digits stay together up to abscissa c_i and
/// split there, which is the triangle bisect-and-translate scheme in closed
/// form. Offsets are rounded to the offset step; f is the indicator of the
/// union of the rectangles restricted to the trunk.
inline KakeyaInstance make_kakeya_instance(int m, const DyadicRational& delta, const KakeyaOptions& opt = {}) {
    const int n = dyadic_log2(delta);
    if (n < 1) throw std::invalid_argument("kakeya instance needs delta < 1");
    if (m < n + 2) throw std::invalid_argument("grid too coarse for delta");
    KakeyaInstance inst;
    inst.spec = GridSpec::make(m, n, opt.step);
    inst.delta = delta;
    inst.field = OneVarField::identity(inst.spec);
    inst.depth = opt.depth < 0 ? n : std::min(opt.depth, n);
    inst.trunk = opt.trunk;
    const double trunk = opt.trunk.to_double();
    const auto count = std::int64_t{1} << n;
    std::vector<double> shift(static_cast<std::size_t>(count), 0.0);
    for (std::int64_t j = 0; j < count; ++j) {
        double s = 0;
        for (int i = 1; i <= n; ++i) {
            if (!((j >> (n - i)) & 1)) continue;
            double c = trunk * std::min(i - 1, inst.depth) / n;
            s += std::ldexp(c, -i);
        }
        shift[static_cast<std::size_t>(j)] = s;
    }
    const double top = *std::max_element(shift.begin(), shift.end());
    const double quantum = inst.spec.offset_quantum().to_double();
    CellSet support(inst.spec);
    const auto trunk_columns = static_cast<std::int64_t>(std::ldexp(trunk, m));
    for (std::int64_t j = 0; j + 1 < count; ++j) {
        auto units = static_cast<std::int64_t>(std::llround((top - shift[static_cast<std::size_t>(j)]) / quantum));
        while (units > 0 && !Parallelogram::fits(inst.spec, n, 0, j, units)) --units;
        if (!Parallelogram::fits(inst.spec, n, 0, j, units)) continue;
        auto rect = Parallelogram::from_units(inst.spec, n, 0, j, units);
        for (std::int64_t c = 0; c < trunk_columns; ++c) {
            auto r0 = rect.first_center_row(c);
            for (auto r = r0; r < r0 + rect.center_row_count(); ++r) support.insert(inst.spec.index(c, r));
        }
        inst.rectangles.push_back(rect);
    }
    inst.f = support.indicator();
    inst.support_measure = support.measure();
    return inst;
}

struct SquareInstance {
    GridSpec spec;
    DyadicRational delta;
    OneVarField field;
    GridFunction f;
};

/// v(x) = x, w = delta, f the indicator of [0, delta)^2.
inline SquareInstance make_square_instance(int m, const DyadicRational& delta, OffsetStep step = OffsetStep::w) {
    const int n = dyadic_log2(delta);
    if (m < n + 2) throw std::invalid_argument("grid too coarse for delta");
    SquareInstance inst{GridSpec::make(m, n, step), delta, {}, {}};
    inst.field = OneVarField::identity(inst.spec);
    CellSet sq(inst.spec);
    const auto side = std::int64_t{1} << (m - n);
    for (std::int64_t c = 0; c < side; ++c)
        for (std::int64_t r = 0; r < side; ++r) sq.insert(inst.spec.index(c, r));
    inst.f = sq.indicator();
    return inst;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
    int m = -1;
    int mw = -1;
    std::vector<DyadicRational> deltas;
    std::vector<double> ps;
    std::vector<std::int64_t> ns;
    std::uint64_t seed = 1;
    int seeds = 2;
    int ascent = 6;
    std::optional<DyadicRational> lambda0;
    OffsetStep step = OffsetStep::w;
    std::string sweep;
    std::string out;
    int threads = 0;
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline std::vector<DyadicRational> parse_delta_list(const std::string& s) {
    std::vector<DyadicRational> out;
    for (const auto& item : split_list(s)) {
        auto d = DyadicRational::parse(item);
        if (d.sign() <= 0 || DyadicRational(1) < d) throw std::invalid_argument("delta must lie in (0,1]: " + item);
        out.push_back(d);
    }
    return out;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Reads plain-text key=value lines; '#' starts a comment.
inline std::map<std::string, std::string> read_key_values(std::istream& is) {
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

/// Applies one setting; unknown keys are rejected.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "m") {
        cfg.m = std::stoi(value);
    } else if (key == "mw") {
        cfg.mw = std::stoi(value);
    } else if (key == "delta") {
        cfg.deltas = parse_delta_list(value);
    } else if (key == "p") {
        cfg.ps.clear();
        for (const auto& item : split_list(value)) cfg.ps.push_back(std::stod(item));
    } else if (key == "N") {
        cfg.ns.clear();
        for (const auto& item : split_list(value)) cfg.ns.push_back(std::stoll(item));
    } else if (key == "seed") {
        cfg.seed = std::stoull(value);
    } else if (key == "seeds") {
        cfg.seeds = std::stoi(value);
    } else if (key == "ascent") {
        cfg.ascent = std::stoi(value);
    } else if (key == "lambda0") {
        cfg.lambda0 = DyadicRational::parse(value);
    } else if (key == "offstep") {
        cfg.step = parse_offset_step(value);
    } else if (key == "sweep") {
        cfg.sweep = value;
    } else if (key == "out") {
        cfg.out = value;
    } else if (key == "threads") {
        cfg.threads = std::stoi(value);
    } else {
        throw std::invalid_argument("unknown config key: " + key);
    }
}

inline ExperimentConfig read_config(std::istream& is) {
    ExperimentConfig cfg;
    for (const auto& [k, v] : read_key_values(is)) apply_setting(cfg, k, v);
    return cfg;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Seeds for norm estimation: the given functions followed by `count`
/// seeded random functions.
inline std::vector<GridFunction> norm_seeds(const GridSpec& spec, std::vector<GridFunction> base, std::uint64_t seed,
                                            int count) {
    for (int i = 0; i < count; ++i)
        base.push_back(random_function(spec, seed + static_cast<std::uint64_t>(i), 8));
    return base;
}

struct DeltaRow {
    DyadicRational delta;
    int log2_inv = 0;
    std::size_t family_size = 0;
    double kakeya_ratio = 0;
    double random_ratio = 0;
    double best_ratio = 0;
    /// (log2(1/delta))^{3/2}.
    double reference = 0;
};

struct DeltaSweep {
    std::vector<DeltaRow> rows;
    PowerFit fit;

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(12);
        os << "delta,log2_inv_delta,family_size,kakeya_ratio,random_ratio,best_ratio,reference\n";
        for (const auto& r : rows)
            os << r.delta.to_string() << ',' << r.log2_inv << ',' << r.family_size << ',' << r.kakeya_ratio << ','
               << r.random_ratio << ',' << r.best_ratio << ',' << r.reference << '\n';
        return os.str();
    }
    std::string fit_report() const {
        std::ostringstream os;
        os.precision(12);
        os << "model=a*log2(1/delta)^b\nfit_status=" << (fit.determined ? "ok" : "degenerate") << "\na=" << fit.a
           << "\nb=" << fit.b << '\n';
        for (std::size_t i = 0; i < fit.residuals.size(); ++i) os << "residual_" << i << '=' << fit.residuals[i] << '\n';
        return os.str();
    }
};

/// Grid for the delta sweep: m = log2(1/delta) + 3 unless set.
inline int sweep_grid_m(const ExperimentConfig& cfg, int n) { return cfg.m > 0 ? cfg.m : n + 3; }

/// One delta point: the Kakeya instance (ascent from its indicator and from
/// random seeds) and a random field on the same grid.
inline DeltaRow delta_point(const ExperimentConfig& cfg, const DyadicRational& delta) {
    const int n = dyadic_log2(delta);
    const int m = sweep_grid_m(cfg, n);
    DeltaRow row;
    row.delta = delta;
    row.log2_inv = n;
    row.reference = std::pow(static_cast<double>(n), 1.5);
    if (n == 0) {
        auto spec = GridSpec::make(m, 0, cfg.step);
        auto fam = enumerate_family(FamilyParams::make(spec, delta), OneVarField::identity(spec));
        row.family_size = fam.size();
        auto rep = estimate_norm(fam, norm_seeds(spec, {}, cfg.seed, std::max(cfg.seeds, 1)), cfg.ascent);
        row.kakeya_ratio = row.random_ratio = row.best_ratio = rep.best_ratio;
        return row;
    }
    KakeyaOptions opt;
    opt.step = cfg.step;
    auto kak = make_kakeya_instance(m, delta, opt);
    auto fam = enumerate_family(FamilyParams::make(kak.spec, delta), kak.field);
    row.family_size = fam.size();
    row.kakeya_ratio = estimate_norm(fam, norm_seeds(kak.spec, {kak.f}, cfg.seed, cfg.seeds), cfg.ascent).best_ratio;
    auto field = random_field(kak.spec, cfg.seed);
    auto rfam = enumerate_family(FamilyParams::make(kak.spec, delta), field);
    row.random_ratio =
        rfam.empty() ? 0.0 : estimate_norm(rfam, norm_seeds(kak.spec, {}, cfg.seed, cfg.seeds), cfg.ascent).best_ratio;
    row.best_ratio = std::max(row.kakeya_ratio, row.random_ratio);
    return row;
}

inline DeltaSweep sweep_delta(const ExperimentConfig& cfg) {
    DeltaSweep s;
    s.rows.resize(cfg.deltas.size());
    parallel_for(cfg.deltas.size(), [&](std::size_t b, std::size_t e) {
        for (auto i = b; i < e; ++i) s.rows[i] = delta_point(cfg, cfg.deltas[i]);
    });
    std::vector<double> x, y;
    for (const auto& r : s.rows) {
        if (r.log2_inv < 1 || r.best_ratio <= 0) continue;
        x.push_back(r.log2_inv);
        y.push_back(r.best_ratio);
    }
    if (!x.empty()) s.fit = fit_power(x, y);
    return s;
}

struct LpRow {
    DyadicRational delta;
    double p = 0;
    double ratio = 0;
    /// delta^{1 - 2/p}.
    double reference = 0;
    /// max(ratio / reference, reference / ratio).
    double factor = 0;
};

struct LpSweep {
    std::vector<LpRow> rows;
    std::string to_csv() const {
        std::ostringstream os;
        os.precision(12);
        os << "delta,p,ratio,reference,factor\n";
        for (const auto& r : rows)
            os << r.delta.to_string() << ',' << r.p << ',' << r.ratio << ',' << r.reference << ',' << r.factor << '\n';
        return os.str();
    }
};

/// ||M f||_p / ||f||_p on the square instance at m = log2(1/delta) + 4
/// unless set.
inline LpRow lp_point(const ExperimentConfig& cfg, const DyadicRational& delta, double p) {
    const int n = dyadic_log2(delta);
    const int m = cfg.m > 0 ? cfg.m : n + 4;
    auto inst = make_square_instance(m, delta, cfg.step);
    auto fam = enumerate_family(FamilyParams::make(inst.spec, delta), inst.field);
    auto mf = maximal_apply(inst.f, fam);
    LpRow row;
    row.delta = delta;
    row.p = p;
    row.ratio = mf.lp_norm(p) / inst.f.lp_norm(p);
    row.reference = std::pow(delta.to_double(), 1.0 - 2.0 / p);
    row.factor = std::max(row.ratio / row.reference, row.reference / row.ratio);
    return row;
}

inline LpSweep sweep_lp(const ExperimentConfig& cfg) {
    LpSweep s;
    auto ps = cfg.ps.empty() ? std::vector<double>{1.5} : cfg.ps;
    s.rows.resize(cfg.deltas.size() * ps.size());
    parallel_for(s.rows.size(), [&](std::size_t b, std::size_t e) {
        for (auto i = b; i < e; ++i) s.rows[i] = lp_point(cfg, cfg.deltas[i / ps.size()], ps[i % ps.size()]);
    });
    return s;
}

/// N single-slope collections of length-1 rectangles at evenly spaced slope
/// cells of the finest level, every admissible offset.
inline std::vector<RectangleFamily> distinct_slope_collections(const GridSpec& spec, std::int64_t n) {
    const auto cells = std::int64_t{1} << spec.mw;
    if (n < 1 || n > cells) throw std::invalid_argument("collection count exceeds the slope cells of the grid");
    auto params = FamilyParams::make(spec, DyadicRational(1));
    std::vector<RectangleFamily> out;
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t slope = i * (cells / n);
        std::vector<Parallelogram> members;
        for (std::int64_t units = 0; Parallelogram::fits(spec, spec.mw, 0, slope, units); ++units)
            members.push_back(Parallelogram::from_units(spec, spec.mw, 0, slope, units));
        out.emplace_back(params, std::move(members), Provenance::constructed);
    }
    return out;
}

/// Grid for the log N sweep: m = 9, mw = 7 unless set, so that 64 distinct
/// length-1 slope cells exist.
inline GridSpec logn_grid(const ExperimentConfig& cfg) {
    int m = cfg.m > 0 ? cfg.m : 9;
    int mw = cfg.mw >= 0 ? cfg.mw : m - 2;
    return GridSpec::make(m, mw, cfg.step);
}

inline GrowthReport sweep_logn(const ExperimentConfig& cfg) {
    auto spec = logn_grid(cfg);
    auto ns = cfg.ns.empty() ? std::vector<std::int64_t>{2, 4, 8, 16, 32, 64} : cfg.ns;
    return multi_collection_experiment(
        ns, [&](std::int64_t n) { return distinct_slope_collections(spec, n); },
        [&](const GridSpec& s) { return norm_seeds(s, {}, cfg.seed, cfg.seeds); }, cfg.ascent);
}

}  // namespace dirmax
