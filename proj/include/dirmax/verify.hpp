#pragma once

// The invariant suite run by `dirmax verify` and by the acceptance binary:
// oracle equivalence, exact identities, stopping-time properties, the
// shrinking dichotomy, and the pointwise domination diagnostic.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dirmax/badness.hpp"
#include "dirmax/calibration.hpp"
#include "dirmax/experiments.hpp"
#include "dirmax/oracle_check.hpp"
#include "dirmax/stopping_time.hpp"

namespace dirmax {

struct CheckResult {
    explicit CheckResult(std::string name_, bool gating_ = true) : name(std::move(name_)), gating(gating_) {}

    std::string name;
    /// Gating checks decide the exit status; the others are reported only.
    bool gating = true;
    std::size_t checks = 0;
    std::vector<std::string> failures;
    /// Extra key=value facts printed after the status.
    std::vector<std::string> notes;

    bool passed() const { return failures.empty(); }
    void expect(bool ok, const std::string& what) {
        ++checks;
        if (!ok) failures.push_back(what);
    }
};

struct VerifyReport {
    std::size_t instances = 0;
    DyadicRational lambda0;
    std::vector<CheckResult> checks;
    std::vector<std::string> reproducers;

    bool ok() const {
        for (const auto& c : checks)
            if (c.gating && !c.passed()) return false;
        return true;
    }
    const CheckResult& check(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return c;
        throw std::out_of_range("no check named " + name);
    }

    std::string to_text(std::size_t max_failures = 10) const {
        std::ostringstream os;
        os << "instances=" << instances << " lambda0=" << lambda0.to_string() << '\n';
        for (const auto& c : checks) {
            os << c.name << ": " << (c.passed() ? "pass" : "FAIL") << (c.gating ? "" : " (diagnostic)")
               << " checks=" << c.checks << " failures=" << c.failures.size();
            for (const auto& n : c.notes) os << ' ' << n;
            os << '\n';
            for (std::size_t i = 0; i < c.failures.size() && i < max_failures; ++i) os << "  " << c.failures[i] << '\n';
            if (c.failures.size() > max_failures) os << "  ... " << c.failures.size() - max_failures << " more\n";
        }
        for (const auto& r : reproducers) os << "reproducer " << r << '\n';
        os << "result: " << (ok() ? "pass" : "FAIL") << '\n';
        return os.str();
    }
};

namespace detail {

inline GridFunction weighted_count(const ChoiceMap& rho, const RectangleFamily& fam, const CellSet& f) {
    auto g = GridFunction::zeros(fam.spec());
    auto counts = chooser_counts(rho, f, fam.size());
    for (std::size_t i = 0; i < fam.size(); ++i) {
        if (counts[i] == 0) continue;
        auto weight = nu(rho, f, i).shifted(fam[i].measure().exponent());
        g = g + cell_averaged_indicator(fam[i]).scaled(weight);
    }
    return g;
}

inline void identity_checks(const Instance& inst, const RectangleFamily& fam, const ChoiceMap& rho,
                            CheckResult& out) {
    const auto& name = inst.name;
    auto g = random_grid(inst.spec, inst.seed + 17, 6);
    out.expect(apply_T(rho, fam, inst.f).inner(g) == inst.f.inner(apply_T_adjoint(rho, fam, g)),
               name + ": adjointness");
    out.expect(apply_T_adjoint(rho, fam, inst.e.indicator()) == weighted_count(rho, fam, inst.e),
               name + ": weighted count");
    DyadicRational total;
    for (std::size_t i = 0; i < fam.size(); ++i) total += nu(rho, inst.e, i);
    auto f_measure = inst.e.measure();
    bool meets_exceptional = !(inst.e & rho.exceptional()).empty();
    out.expect(total <= f_measure && (total == f_measure) == !meets_exceptional, name + ": sum of nu");
    // Split identity over the coarse vertical windows.
    auto b = badness_all(inst.e, rho, fam);
    for (std::size_t i = 0; i < fam.size(); ++i) {
        for (int level = 0; level <= std::min(inst.spec.m, 2); ++level) {
            for (std::int64_t t = 0; t < (std::int64_t{1} << level); ++t) {
                auto [in, outside] = split_over_rectangle(fam[i], DyadicInterval(level, t), inst.e, rho, fam);
                out.expect(in + outside == b[i], name + ": split identity " + fam[i].to_string());
            }
        }
    }
}

inline void stopping_checks(const Instance& inst, const RectangleFamily& fam, const DecompositionTree& tree,
                            CheckResult& out) {
    const auto& name = inst.name;
    const auto bound = omega_level_bound(inst.delta);
    for (const auto& gen : tree.generations) {
        for (const auto& rec : gen.intervals) {
            auto where = name + " gen " + std::to_string(gen.generation) + " " + rec.interval.to_string();
            out.expect(carleson_sum(rec.assignment) <= rec.interval.length(), where + ": Carleson sum");
            out.expect(DyadicRational(2) * shadow_measure(rec.stopping) <= rec.interval.length(), where + ": halving");
            out.expect(static_cast<std::int64_t>(rec.omega.size()) <= bound, where + ": Omega levels exhausted");
            for (const auto& level : rec.omega) out.expect(level_disjoint(level), where + ": level disjointness");
            out.expect(counting_bound_holds(rec.assignment, inst.delta), where + ": counting bound");
            out.expect(chain_comparability_holds(theta_pairs(rec.assignment)), where + ": chain comparability");
            for (std::size_t n = 0; n < rec.classes.collections.size(); ++n) {
                std::vector<Parallelogram> members;
                for (auto i : rec.classes.collections[n]) members.push_back(fam[i]);
                auto w = is_good_collection(members);
                out.expect(w.good && w.organized, where + ": collection " + std::to_string(n) + " organized");
            }
        }
    }
    for (const auto& v : generation_decay_violations(tree)) out.expect(false, name + ": generation decay " + v);
    out.expect(!tree.truncated, name + ": decomposition terminates");
}

inline void key_checks(const Instance& inst, const RectangleFamily& fam, const ChoiceMap& rho,
                       const DyadicRational& lambda0, CheckResult& out, std::size_t& band_rows,
                       std::size_t& chain_violations) {
    for (const auto& e : {inst.e, rho.covered()}) {
        auto where = inst.name + " |E|=" + e.measure().to_string();
        try {
            auto trace = shrink_iterate(e, rho, fam, lambda0, 64);
            out.expect(true, where + ": halving");
            for (std::size_t s = 0; s < trace.audit_failures.size(); ++s)
                out.expect(trace.audit_failures[s] == 0, where + ": dichotomy at step " + std::to_string(s));
            auto measures = trace.measures();
            for (std::size_t j = 0; j < measures.size(); ++j)
                out.expect(measures[j] <= measures.front().shifted(-static_cast<int>(j)),
                           where + ": |E_j| decay at step " + std::to_string(j));
            out.expect(!trace.truncated, where + ": trace terminates");
            band_rows += trace.bands.size();
            for (const auto& b : trace.bands) chain_violations += b.chain_violations;
        } catch (const HalvingFailure& err) {
            out.expect(false, where + ": " + err.what());
        }
    }
}

}  // namespace detail

/// Runs the suite on the given instances. With a reproducer directory, each
/// instance failing the oracle comparison is written there as JSON.
inline VerifyReport run_verify(const std::vector<Instance>& corpus, const DyadicRational& lambda0,
                               const std::optional<std::filesystem::path>& reproducer_dir = std::nullopt) {
    VerifyReport rep;
    rep.instances = corpus.size();
    rep.lambda0 = lambda0;
    CheckResult oracle{"oracle"}, identities{"identities"}, stopping{"stopping"}, key{"key"};
    CheckResult domination{"domination", false};
    OracleReport oracle_all;
    std::size_t band_rows = 0, chain_violations = 0;
    DominationReport dom_all;
    for (const auto& inst : corpus) {
        auto orep = oracle_check(inst, lambda0);
        if (!orep.ok() && reproducer_dir) write_reproducer(orep, inst, *reproducer_dir);
        oracle_all.merge(orep);

        auto fam = enumerate_family(FamilyParams::make(inst.spec, inst.delta), inst.field);
        auto rho = linearize(inst.f, fam);
        detail::identity_checks(inst, fam, rho, identities);
        auto tree = run_generations(inst.field, fam, rho, inst.delta);
        detail::stopping_checks(inst, fam, tree, stopping);
        detail::key_checks(inst, fam, rho, lambda0, key, band_rows, chain_violations);

        auto d = domination_check(tree, fam, rho, inst.f);
        domination.checks += d.checked;
        if (d.violations > 0)
            domination.failures.push_back(inst.name + ": " + std::to_string(d.violations) + "/" +
                                          std::to_string(d.checked) + " cells, first " + d.first_violation);
        dom_all.checked += d.checked;
        dom_all.violations += d.violations;
        dom_all.checked_later += d.checked_later;
        dom_all.violations_later += d.violations_later;
        dom_all.worst_excess = std::max(dom_all.worst_excess, d.worst_excess);
        dom_all.worst_excess_later = std::max(dom_all.worst_excess_later, d.worst_excess_later);
    }
    for (const auto& [k, v] : oracle_all.checked) {
        oracle.checks += v;
        oracle.notes.push_back(k + "=" + std::to_string(v));
    }
    oracle.failures = oracle_all.mismatches;
    rep.reproducers = oracle_all.reproducers;
    key.notes.push_back("band_rows=" + std::to_string(band_rows));
    key.notes.push_back("band_chain_violations=" + std::to_string(chain_violations));
    std::ostringstream dn;
    dn.precision(6);
    dn << "violating_cells=" << dom_all.violations << " later_checks=" << dom_all.checked_later
       << " later_violations=" << dom_all.violations_later << " worst_excess=" << dom_all.worst_excess
       << " worst_excess_later=" << dom_all.worst_excess_later;
    domination.notes.push_back(dn.str());
    rep.checks = {oracle, identities, stopping, key, domination};
    return rep;
}

}  // namespace dirmax
