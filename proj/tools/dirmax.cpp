// Command-line front end: enumerate, maximal, decompose, badness, sweep,
// kakeya, verify.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "dirmax/badness.hpp"
#include "dirmax/calibration.hpp"
#include "dirmax/experiments.hpp"
#include "dirmax/family.hpp"
#include "dirmax/grid.hpp"
#include "dirmax/maximal.hpp"
#include "dirmax/parallel.hpp"
#include "dirmax/stopping_time.hpp"
#include "dirmax/verify.hpp"

namespace {

using namespace dirmax;

constexpr int exit_ok = 0;
constexpr int exit_invariant = 1;
constexpr int exit_usage = 2;

/// Thrown for bad arguments discovered after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::map<std::string, std::string> settings;
    std::string config;
    std::string field = "identity";
    std::string field_file;
    std::string input;
    std::string set = "random";
    std::string sweep_kind;
    int max_steps = 64;
};

FieldKind parse_field_kind(const std::string& s) {
    if (s == "constant") return FieldKind::constant;
    if (s == "identity") return FieldKind::identity;
    if (s == "random") return FieldKind::random;
    if (s == "ladder") return FieldKind::ladder;
    throw UsageError("unknown field kind: " + s);
}

ExperimentConfig build_config(const Options& opt) {
    ExperimentConfig cfg;
    try {
        if (!opt.config.empty()) {
            std::ifstream is(opt.config);
            if (!is) throw UsageError("cannot read config file " + opt.config);
            cfg = read_config(is);
        }
        for (const auto& [k, v] : opt.settings) apply_setting(cfg, k, v);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    } catch (const std::out_of_range& e) {
        throw UsageError(std::string("value out of range: ") + e.what());
    }
    if (cfg.threads < 0) throw UsageError("threads must be nonnegative");
    set_worker_count(static_cast<unsigned>(cfg.threads));
    return cfg;
}

GridSpec grid_of(const ExperimentConfig& cfg, int default_m) {
    int m = cfg.m > 0 ? cfg.m : default_m;
    int mw = cfg.mw >= 0 ? cfg.mw : m - 2;
    try {
        return GridSpec::make(m, mw, cfg.step);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

DyadicRational single_delta(const ExperimentConfig& cfg, const DyadicRational& fallback) {
    if (cfg.deltas.empty()) return fallback;
    if (cfg.deltas.size() != 1) throw UsageError("this command takes a single delta");
    return cfg.deltas.front();
}

OneVarField field_of(const Options& opt, const ExperimentConfig& cfg, const GridSpec& spec) {
    if (opt.field_file.empty()) return make_field(spec, parse_field_kind(opt.field), cfg.seed);
    std::ifstream is(opt.field_file);
    if (!is) throw UsageError("cannot read field file " + opt.field_file);
    auto v = read_field(is);
    if (!(v.spec() == spec)) throw UsageError("field file grid does not match --m/--mw/--offstep");
    return v;
}

GridFunction input_or_random(const Options& opt, const ExperimentConfig& cfg, const GridSpec& spec) {
    if (opt.input.empty()) return random_function(spec, cfg.seed);
    std::ifstream is(opt.input);
    if (!is) throw UsageError("cannot read grid file " + opt.input);
    auto f = read_grid(is);
    if (!(f.spec() == spec)) throw UsageError("grid file does not match --m/--mw/--offstep");
    return f;
}

/// Writes text to the --out path (with an optional suffix) or to stdout.
void emit(const ExperimentConfig& cfg, const std::string& suffix, const std::string& text) {
    if (cfg.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream os(cfg.out + suffix, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + cfg.out + suffix);
    os << text;
}

int run_enumerate(const Options& opt) {
    auto cfg = build_config(opt);
    auto spec = grid_of(cfg, 4);
    auto delta = single_delta(cfg, DyadicRational::make(1, 1));
    auto field = field_of(opt, cfg, spec);
    auto fam = enumerate_family(FamilyParams::make(spec, delta), field);
    std::ostringstream stats;
    stats << "m=" << spec.m << "\nmw=" << spec.mw << "\noffstep=" << to_string(spec.offset_step)
          << "\ndelta=" << delta.to_string() << "\nfamily_size=" << fam.size() << '\n';
    std::vector<std::size_t> per_level(static_cast<std::size_t>(spec.mw) + 1, 0);
    for (const auto& r : fam.members()) ++per_level[static_cast<std::size_t>(r.level())];
    for (std::size_t k = 0; k < per_level.size(); ++k) stats << "level_" << k << '=' << per_level[k] << '\n';
    std::cout << stats.str();
    if (!cfg.out.empty()) {
        std::ostringstream os;
        write_family(os, fam);
        emit(cfg, "", os.str());
    }
    return exit_ok;
}

int run_maximal(const Options& opt) {
    if (opt.input.empty()) throw UsageError("maximal needs --input <grid file>");
    auto cfg = build_config(opt);
    std::ifstream is(opt.input);
    if (!is) throw UsageError("cannot read grid file " + opt.input);
    auto f = read_grid(is);
    auto delta = single_delta(cfg, DyadicRational::make(1, 1));
    auto field = field_of(opt, cfg, f.spec());
    auto fam = enumerate_family(FamilyParams::make(f.spec(), delta), field);
    std::ostringstream os;
    write_grid(os, maximal_apply(f, fam));
    emit(cfg, "", os.str());
    return exit_ok;
}

int run_decompose(const Options& opt) {
    auto cfg = build_config(opt);
    auto spec = grid_of(cfg, 5);
    auto delta = single_delta(cfg, DyadicRational::make(1, 1));
    auto field = field_of(opt, cfg, spec);
    auto f = input_or_random(opt, cfg, spec);
    auto fam = enumerate_family(FamilyParams::make(spec, delta), field);
    auto rho = linearize(f, fam);
    auto tree = run_generations(field, fam, rho, delta);
    emit(cfg, "", to_json(tree).dump(1) + "\n");
    return exit_ok;
}

int run_badness(const Options& opt) {
    auto cfg = build_config(opt);
    auto spec = grid_of(cfg, 4);
    auto delta = single_delta(cfg, DyadicRational::make(1, 1));
    auto lambda0 = cfg.lambda0.value_or(calibration::lambda0());
    if (lambda0 < DyadicRational(1)) throw UsageError("lambda0 must be at least 1");
    auto field = field_of(opt, cfg, spec);
    auto f = input_or_random(opt, cfg, spec);
    auto fam = enumerate_family(FamilyParams::make(spec, delta), field);
    auto rho = linearize(f, fam);
    CellSet e;
    if (opt.set == "random")
        e = random_set(spec, cfg.seed);
    else if (opt.set == "covered")
        e = rho.covered();
    else if (opt.set == "all")
        e = CellSet::all(spec);
    else
        throw UsageError("unknown set: " + opt.set);

    auto table = badness_table(e, rho, fam);
    std::ostringstream os;
    os << "k,base,slope,off,nu,badness\n";
    for (std::size_t i = 0; i < fam.size(); ++i)
        os << fam[i].level() << ',' << fam[i].base().index() << ',' << fam[i].slope().index() << ','
           << fam[i].offset().to_string() << ',' << table.nu[i].to_string() << ',' << table.badness[i].to_string()
           << '\n';
    try {
        auto trace = shrink_iterate(e, rho, fam, lambda0, opt.max_steps);
        if (cfg.out.empty()) {
            std::cout << os.str() << '\n' << trace.to_csv() << '\n' << trace.bands_csv();
        } else {
            emit(cfg, "", os.str());
            emit(cfg, ".shrink.csv", trace.to_csv());
            emit(cfg, ".bands.csv", trace.bands_csv());
        }
        std::size_t failures = 0;
        for (auto n : trace.audit_failures) failures += n;
        if (failures > 0) {
            std::cerr << "dichotomy failures: " << failures << '\n';
            return exit_invariant;
        }
    } catch (const HalvingFailure& err) {
        emit(cfg, "", os.str());
        std::cerr << err.what() << '\n';
        return exit_invariant;
    }
    return exit_ok;
}

int run_sweep(const Options& opt) {
    auto cfg = build_config(opt);
    std::string kind = opt.sweep_kind.empty() ? cfg.sweep : opt.sweep_kind;
    std::string csv, fit;
    if (kind == "delta") {
        if (cfg.deltas.empty()) cfg.deltas = parse_delta_list("1/8,1/16,1/32,1/64,1/128,1/256");
        auto s = sweep_delta(cfg);
        csv = s.to_csv();
        fit = s.fit_report();
    } else if (kind == "logN") {
        auto r = sweep_logn(cfg);
        csv = r.to_csv();
        std::ostringstream os;
        os.precision(12);
        os << "model=intercept+slope*log2(N)\nfit_status=" << (r.fit.determined ? "ok" : "degenerate")
           << "\nintercept=" << r.fit.intercept << "\nslope=" << r.fit.slope << '\n';
        fit = os.str();
    } else if (kind == "lp") {
        if (cfg.deltas.empty()) cfg.deltas = parse_delta_list("1/8,1/16,1/32,1/64");
        csv = sweep_lp(cfg).to_csv();
    } else {
        throw UsageError("sweep kind must be delta, logN or lp");
    }
    emit(cfg, "", csv);
    if (!fit.empty()) {
        if (cfg.out.empty())
            std::cerr << fit;
        else
            emit(cfg, ".fit", fit);
    }
    return exit_ok;
}

int run_kakeya(const Options& opt) {
    auto cfg = build_config(opt);
    auto delta = single_delta(cfg, DyadicRational::make(1, 3));
    int n = 0;
    try {
        n = dyadic_log2(delta);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    KakeyaOptions ko;
    ko.step = cfg.step;
    auto inst = make_kakeya_instance(cfg.m > 0 ? cfg.m : n + 3, delta, ko);
    std::cout << "m=" << inst.spec.m << "\nmw=" << inst.spec.mw << "\ndelta=" << delta.to_string() << '\n'
              << inst.metadata();
    if (!cfg.out.empty()) {
        std::ostringstream field, grid;
        write_field(field, inst.field);
        write_grid(grid, inst.f);
        emit(cfg, ".field", field.str());
        emit(cfg, ".grid", grid.str());
        emit(cfg, ".meta", inst.metadata());
    }
    return exit_ok;
}

int run_verify_command(const Options& opt) {
    auto cfg = build_config(opt);
    int max_m = cfg.m > 0 ? cfg.m : 5;
    auto lambda0 = cfg.lambda0.value_or(calibration::lambda0());
    if (lambda0 < DyadicRational(1)) throw UsageError("lambda0 must be at least 1");
    auto corpus = corpus_up_to(max_m);
    std::filesystem::path repro = cfg.out.empty() ? "dirmax-reproducers" : cfg.out + ".reproducers";
    auto rep = run_verify(corpus, lambda0, repro);
    emit(cfg, "", rep.to_text());
    if (!cfg.out.empty()) std::cout << (rep.ok() ? "pass" : "FAIL") << '\n';
    return rep.ok() ? exit_ok : exit_invariant;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Directional maximal operators over dyadic rectangle families"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;

    auto setting = [&](const std::string& flag, const std::string& key, const std::string& help) {
        app.add_option_function<std::string>(
            flag, [&opt, key](const std::string& v) { opt.settings[key] = v; }, help);
    };
    setting("--m", "m", "grid exponent: 2^m x 2^m cells");
    setting("--mw", "mw", "width exponent: w = 2^-mw");
    setting("--delta", "delta", "density threshold(s), comma-separated dyadics such as 1/8");
    setting("--lambda0", "lambda0", "shrinking threshold (default: calibrated)");
    setting("--offstep", "offstep", "offset quantum: w or w2 (w/2)");
    setting("--seed", "seed", "random seed");
    setting("--seeds", "seeds", "random seeds per norm estimate");
    setting("--ascent", "ascent", "ascent iterations per norm estimate");
    setting("--p", "p", "exponents for the lp sweep");
    setting("--N", "N", "collection counts for the logN sweep");
    setting("--out", "out", "output path (or prefix for multi-file output)");
    setting("--threads", "threads", "worker threads (0 = all cores)");
    app.add_option("--config", opt.config, "plain-text key=value file; flags override it");
    app.add_option("--field", opt.field, "field kind: constant, identity, random, ladder")
        ->check(CLI::IsMember({"constant", "identity", "random", "ladder"}));
    app.add_option("--field-file", opt.field_file, "MAXGRID field file");

    auto* enumerate = app.add_subcommand("enumerate", "family statistics; --out writes the family");
    auto* maximal = app.add_subcommand("maximal", "apply the maximal operator to a MAXGRID grid file");
    maximal->add_option("--input", opt.input, "MAXGRID grid file")->required();
    auto* decompose = app.add_subcommand("decompose", "emit the stopping-time decomposition as JSON");
    decompose->add_option("--input", opt.input, "MAXGRID grid file (default: seeded random)");
    auto* badness = app.add_subcommand("badness", "badness table and shrinking trace");
    badness->add_option("--input", opt.input, "MAXGRID grid file (default: seeded random)");
    badness->add_option("--set", opt.set, "test set: random, covered, all");
    badness->add_option("--max-steps", opt.max_steps, "shrinking steps");
    auto* sweep = app.add_subcommand("sweep", "parameter sweep as CSV");
    sweep->add_option("kind", opt.sweep_kind, "delta, logN or lp");
    auto* kakeya = app.add_subcommand("kakeya", "emit a Kakeya instance");
    auto* verify = app.add_subcommand("verify", "oracle and invariant suite on the corpus up to --m");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return exit_usage;
    }

    try {
        if (enumerate->parsed()) return run_enumerate(opt);
        if (maximal->parsed()) return run_maximal(opt);
        if (decompose->parsed()) return run_decompose(opt);
        if (badness->parsed()) return run_badness(opt);
        if (sweep->parsed()) return run_sweep(opt);
        if (kakeya->parsed()) return run_kakeya(opt);
        if (verify->parsed()) return run_verify_command(opt);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invariant;
    }
    return exit_usage;
}
