#pragma once

// Comparison of the optimized modules against the brute-force oracle on one
// instance. Mismatches are collected as text and, on request, the instance
// is written out as a reproducer.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dirmax/badness.hpp"
#include "dirmax/experiments.hpp"
#include "dirmax/family.hpp"
#include "dirmax/maximal.hpp"
#include "dirmax/oracle.hpp"
#include "dirmax/stopping_time.hpp"

namespace dirmax {

struct OracleReport {
    /// Comparisons made per component.
    std::map<std::string, std::size_t> checked;
    std::vector<std::string> mismatches;
    std::vector<std::string> reproducers;

    bool ok() const { return mismatches.empty(); }
    void merge(const OracleReport& o) {
        for (const auto& [k, v] : o.checked) checked[k] += v;
        mismatches.insert(mismatches.end(), o.mismatches.begin(), o.mismatches.end());
        reproducers.insert(reproducers.end(), o.reproducers.begin(), o.reproducers.end());
    }
};

namespace detail {

inline oracle::Grid oracle_grid(const GridSpec& spec) { return {spec.m, spec.mw, spec.offset_exponent()}; }

inline oracle::Rect oracle_rect(const Parallelogram& r) {
    return {r.level(), r.base().index(), r.slope().index(), r.offset()};
}

inline oracle::Interval oracle_interval(const DyadicInterval& i) { return {i.level(), i.index()}; }

inline std::vector<DyadicRational> grid_values(const GridFunction& f) {
    std::vector<DyadicRational> out(f.spec().cell_count());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = f.at(x);
    return out;
}

inline std::vector<bool> cell_bits(const CellSet& s) {
    std::vector<bool> out(s.bits().size());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = s.contains(x);
    return out;
}

}  // namespace detail

inline nlohmann::ordered_json instance_json(const Instance& inst) {
    nlohmann::ordered_json j;
    j["name"] = inst.name;
    j["m"] = inst.spec.m;
    j["mw"] = inst.spec.mw;
    j["offstep"] = to_string(inst.spec.offset_step);
    j["delta"] = inst.delta.to_string();
    j["seed"] = inst.seed;
    std::vector<std::string> field, f;
    for (const auto& v : inst.field.values()) field.push_back(v.to_string());
    for (const auto& v : detail::grid_values(inst.f)) f.push_back(v.to_string());
    j["field"] = field;
    j["f"] = f;
    j["e_runs"] = inst.e.run_lengths();
    return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
    Instance inst;
    inst.name = j.at("name").get<std::string>();
    inst.spec = GridSpec::make(j.at("m").get<int>(), j.at("mw").get<int>(),
                               parse_offset_step(j.at("offstep").get<std::string>()));
    inst.delta = DyadicRational::parse(j.at("delta").get<std::string>());
    inst.seed = j.at("seed").get<std::uint64_t>();
    std::vector<DyadicRational> field, f;
    for (const auto& s : j.at("field")) field.push_back(DyadicRational::parse(s.get<std::string>()));
    for (const auto& s : j.at("f")) f.push_back(DyadicRational::parse(s.get<std::string>()));
    inst.field = OneVarField(inst.spec, field);
    inst.f = GridFunction::from_values(inst.spec, f);
    inst.e = CellSet::from_run_lengths(inst.spec, j.at("e_runs").get<std::vector<std::int64_t>>());
    return inst;
}

/// Compares enumerate_family, maximal_apply (and the choice map), T*,
/// the slope assignments, stopping intervals, Omega levels and point
/// classes of every decomposition root, badness, and shrink_once.
inline OracleReport oracle_check(const Instance& inst, const DyadicRational& lambda0) {
    OracleReport rep;
    auto fail = [&](const std::string& what, const std::string& detail) {
        rep.mismatches.push_back(inst.name + ": " + what + (detail.empty() ? "" : " (" + detail + ")"));
    };
    const auto& spec = inst.spec;
    const auto g = detail::oracle_grid(spec);

    // enumeration
    auto fam = enumerate_family(FamilyParams::make(spec, inst.delta), inst.field);
    auto rects = oracle::enumerate(g, inst.field.values(), inst.delta);
    ++rep.checked["enumerate"];
    bool same_family = rects.size() == fam.size();
    for (std::size_t i = 0; same_family && i < rects.size(); ++i) same_family = rects[i] == detail::oracle_rect(fam[i]);
    if (!same_family) {
        fail("enumerate", std::to_string(fam.size()) + " vs " + std::to_string(rects.size()) + " members");
        return rep;
    }

    // maximal function and choice
    auto mf = maximal_apply(inst.f, fam);
    auto rho = linearize(inst.f, fam);
    auto om = oracle::maximal(g, rects, detail::grid_values(inst.f));
    ++rep.checked["maximal"];
    for (std::size_t x = 0; x < spec.cell_count(); ++x) {
        if (mf.at(x) != om.values[x] || rho.at(x) != om.choice[x]) {
            fail("maximal", "cell " + std::to_string(x));
            break;
        }
    }

    // adjoint
    std::vector<std::int64_t> choice(rho.entries().begin(), rho.entries().end());
    auto e_bits = detail::cell_bits(inst.e);
    {
        auto ta = apply_T_adjoint(rho, fam, inst.e.indicator());
        auto oa = oracle::adjoint(g, rects, choice, detail::grid_values(inst.e.indicator()));
        ++rep.checked["adjoint"];
        for (std::size_t x = 0; x < spec.cell_count(); ++x) {
            if (ta.at(x) != oa[x]) {
                fail("adjoint", "cell " + std::to_string(x));
                break;
            }
        }
    }

    // stopping time on every root of the decomposition
    auto tree = run_generations(inst.field, fam, rho, inst.delta);
    for (const auto& gen : tree.generations) {
        for (const auto& rec : gen.intervals) {
            auto root = detail::oracle_interval(rec.interval);
            auto oa = oracle::assign(g, root, inst.field.values(), inst.delta);
            std::string where = "gen " + std::to_string(gen.generation) + " root " + rec.interval.to_string();
            ++rep.checked["assignment"];
            bool same = true;
            rec.assignment.for_each_interval([&](const DyadicInterval& j) {
                const auto& mine = rec.assignment.chosen(j);
                const auto& theirs = oa.chosen[detail::oracle_interval(j)];
                same = same && mine.size() == theirs.size();
                for (std::size_t t = 0; same && t < mine.size(); ++t)
                    same = mine[t].slope.level() == theirs[t].first.level &&
                           mine[t].slope.index() == theirs[t].first.index && mine[t].mu == theirs[t].second;
            });
            if (!same) fail("assignment", where);

            auto ostop = oracle::stopping(g, root, oa);
            ++rep.checked["stopping"];
            same = ostop.size() == rec.stopping.size();
            for (std::size_t t = 0; same && t < ostop.size(); ++t)
                same = ostop[t] == detail::oracle_interval(rec.stopping[t]);
            if (!same) fail("stopping", where);

            auto olevels = oracle::omega(oa, ostop);
            ++rep.checked["omega"];
            same = olevels.size() == rec.omega.size();
            for (std::size_t n = 0; same && n < olevels.size(); ++n) {
                same = olevels[n].size() == rec.omega[n].size();
                for (std::size_t t = 0; same && t < olevels[n].size(); ++t) {
                    const auto& p = rec.omega[n][t];
                    same = olevels[n][t].interval == detail::oracle_interval(p.interval) &&
                           olevels[n][t].slope == oracle::Slope{p.slope.level(), p.slope.index()};
                }
            }
            if (!same) fail("omega", where);

            ++rep.checked["classes"];
            for (std::size_t x = 0; x < spec.cell_count(); ++x) {
                if (!rec.cells.contains(x)) continue;
                int level = oracle::classify(g, rects[static_cast<std::size_t>(rho.at(x))], olevels);
                int mine = -1;
                for (std::size_t n = 0; n < rec.classes.levels.size(); ++n)
                    if (rec.classes.levels[n].contains(x)) mine = static_cast<int>(n);
                if (level != mine) {
                    fail("classes", where + " cell " + std::to_string(x));
                    break;
                }
            }
        }
    }

    // badness
    {
        auto mine = badness_all(inst.e, rho, fam);
        auto theirs = oracle::badness(g, rects, choice, e_bits);
        ++rep.checked["badness"];
        for (std::size_t i = 0; i < fam.size(); ++i) {
            if (mine[i] != theirs[i]) {
                fail("badness", fam[i].to_string());
                break;
            }
        }
    }

    // shrinking step, on the test set and on all covered cells, at lambda0
    // and at 1 (where bad windows do occur)
    for (const auto& set : {inst.e, rho.covered()}) {
        auto bits = detail::cell_bits(set);
        for (const auto& level : {lambda0, DyadicRational(1)}) {
            auto step = shrink_once(set, rho, fam, level);
            auto os = oracle::shrink_once(g, rects, choice, bits, level);
            ++rep.checked["shrink"];
            bool same = os.windows.size() == step.windows.size();
            std::set<std::pair<oracle::Interval, oracle::Interval>> theirs(os.windows.begin(), os.windows.end());
            for (const auto& [i, k] : step.windows)
                same = same && theirs.count({detail::oracle_interval(i), detail::oracle_interval(k)});
            for (std::size_t x = 0; x < spec.cell_count(); ++x)
                same = same && step.next.contains(x) == os.next[x] && step.high_maximal.contains(x) == os.high[x];
            if (!same) fail("shrink", "lambda0 " + level.to_string() + ", |E| " + set.measure().to_string());
        }
    }
    return rep;
}

/// File name for an instance: '/' and '^' from the delta become '_'.
inline std::string reproducer_file_name(const Instance& inst) {
    auto name = inst.name;
    for (auto& ch : name)
        if (ch == '/' || ch == '^') ch = '_';
    return name + ".json";
}

/// Writes the instance as JSON into dir and records the path.
inline void write_reproducer(OracleReport& rep, const Instance& inst, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto path = dir / reproducer_file_name(inst);
    std::ofstream os(path);
    os << instance_json(inst).dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write reproducer " + path.string());
    rep.reproducers.push_back(path.string());
}

}  // namespace dirmax
