#pragma once

// Command-line front end. parse_args validates flags into a RunConfig and
// throws UsageError (exit 2); execute dispatches to the library and maps
// runtime failures to exit 1 with a one-line diagnostic.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "datekit/baselines.hpp"
#include "datekit/cov_models.hpp"
#include "datekit/date.hpp"
#include "datekit/evaluation.hpp"
#include "datekit/io.hpp"
#include "datekit/precision.hpp"
#include "datekit/simulation.hpp"

namespace datekit::cli {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by parse_args for --help; what() is the help text.
class HelpRequested : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Command { Gen, EstimateOmega, Recover, Bh, Simulate, Phase };

inline std::string command_name(Command c) {
    switch (c) {
        case Command::Gen: return "gen";
        case Command::EstimateOmega: return "estimate-omega";
        case Command::Recover: return "recover";
        case Command::Bh: return "bh";
        case Command::Simulate: return "simulate";
        case Command::Phase: return "phase";
    }
    return "?";
}

struct RunConfig {
    Command command = Command::Gen;
    std::uint64_t seed = 0;

    // covariance model and signal
    std::string model = "ar1";
    double rho = 0.6;
    double within_corr = 0.6;
    Index block_size = 2;
    double d1 = 0.5;
    double d2 = 0.2;
    double sparse_low = 1.0;
    double sparse_high = 2.0;
    Index p = 500;
    Index n1 = 60;
    Index n2 = 60;
    std::optional<double> beta;  // signal sparsity; oracle tuning falls back to dataset metadata
    std::optional<double> r;
    double mag_low = 1.0;
    double mag_high = 3.0;

    // precision estimation and recovery
    std::string omega = "known";
    std::string omega_path;
    std::string tuning = "estimated";
    double s = 0.4;
    double q = 0.8;
    double alpha = 0.05;
    int component_cap = 12;
    int cv_splits = 50;
    bool unequal_cov = false;

    // simulate
    int reps = 100;
    std::vector<std::string> methods{"date-known", "bh"};
    int threads = 1;

    // phase
    double omega_lower = 1.0;
    double omega_bar = 1.0;
    std::vector<double> betas;  // empty: 0.51, ..., 0.99

    // io
    std::string data;
    std::string out;
    std::string csv_out;
    bool csv = false;
};

inline constexpr double kDefaultBeta = 0.6;
inline constexpr double kDefaultR = 1.0;

namespace detail {

inline void check(bool ok, const std::string& flag, const std::string& msg) {
    if (!ok) throw UsageError(flag + ": " + msg);
}

inline int threads_from_env() {
    const char* env = std::getenv("DATEKIT_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    try {
        std::size_t pos = 0;
        const int t = std::stoi(env, &pos);
        if (pos == std::string(env).size() && t >= 1) return t;
    } catch (const std::exception&) {
    }
    throw UsageError("DATEKIT_THREADS: must be a positive integer");
}

inline void add_model_flags(CLI::App* sub, RunConfig& c) {
    sub->add_option("--model", c.model, "covariance model")
        ->check(CLI::IsMember({"ar1", "block", "penta", "sparse"}));
    sub->add_option("--rho", c.rho, "AR(1) correlation");
    sub->add_option("--within-corr", c.within_corr, "block model within-block correlation");
    sub->add_option("--block-size", c.block_size, "block model block size");
    sub->add_option("--d1", c.d1, "pentadiagonal first off-diagonal");
    sub->add_option("--d2", c.d2, "pentadiagonal second off-diagonal");
    sub->add_option("--sparse-low", c.sparse_low, "sparse model lower loading magnitude");
    sub->add_option("--sparse-high", c.sparse_high, "sparse model upper loading magnitude");
    sub->add_option("--p", c.p, "dimension");
    sub->add_option("--n1", c.n1, "group 1 sample size");
    sub->add_option("--n2", c.n2, "group 2 sample size");
    sub->add_option("--beta", c.beta, "signal sparsity exponent");
    sub->add_option("--r", c.r, "signal strength");
    sub->add_option("--mag-low", c.mag_low, "lower signal magnitude factor");
    sub->add_option("--mag-high", c.mag_high, "upper signal magnitude factor");
}

inline void add_date_flags(CLI::App* sub, RunConfig& c) {
    sub->add_option("--tuning", c.tuning, "tuning mode")->check(CLI::IsMember({"estimated", "oracle"}));
    sub->add_option("--s", c.s, "screening exponent");
    sub->add_option("--q", c.q, "tuning-estimation exponent");
    sub->add_option("--alpha", c.alpha, "target mFDR level");
    sub->add_option("--component-cap", c.component_cap, "largest component searched exhaustively");
}

inline void add_cv_flags(CLI::App* sub, RunConfig& c) {
    sub->add_option("--cv-splits", c.cv_splits, "cross-validation splits");
    sub->add_flag("--unequal-cov", c.unequal_cov, "use the one-sample reduction for unequal covariances");
}

inline void validate_model(const RunConfig& c) {
    check(c.p >= 2, "--p", "p must be at least 2");
    check(c.n1 >= 2, "--n1", "n1 must be at least 2");
    check(c.n2 >= 2, "--n2", "n2 must be at least 2");
    check(c.rho > -1.0 && c.rho < 1.0, "--rho", "rho must be in (-1,1)");
    check(c.block_size >= 1, "--block-size", "block size must be positive");
    const double corr_floor = c.block_size > 1 ? -1.0 / static_cast<double>(c.block_size - 1) : -1.0;
    check(c.within_corr > corr_floor && c.within_corr < 1.0, "--within-corr",
          "within-block correlation must be in (-1/(block_size-1),1)");
    check(c.sparse_low > 0.0 && c.sparse_low <= c.sparse_high, "--sparse-low",
          "need 0 < sparse-low <= sparse-high");
    if (c.beta) check(*c.beta > 0.0 && *c.beta < 1.0, "--beta", "beta must be in (0,1)");
    if (c.r) check(*c.r > 0.0, "--r", "r must be positive");
    check(c.mag_low > 0.0 && c.mag_low <= c.mag_high, "--mag-low", "need 0 < mag-low <= mag-high");
}

inline void validate_date(const RunConfig& c) {
    check(c.alpha > 0.0 && c.alpha < 1.0, "--alpha", "alpha must be in (0,1)");
    check(c.s >= 0.0, "--s", "s must be non-negative");
    check(c.component_cap >= 1 && c.component_cap <= 20, "--component-cap", "component cap must be in [1,20]");
    if (c.tuning == "estimated") {
        check(c.q > 0.0, "--q", "q must be positive");
        check(c.s < c.q, "--s", "s must be below q");
    } else {
        if (c.beta) check(*c.beta > 0.5 && *c.beta < 1.0, "--beta", "oracle beta must be in (1/2,1)");
    }
}

inline void validate_cv(const RunConfig& c) { check(c.cv_splits >= 1, "--cv-splits", "cv splits must be positive"); }

}  // namespace detail

/// argv excludes the program name.
inline RunConfig parse_args(const std::vector<std::string>& args) {
    RunConfig c;
    CLI::App app{"datekit: two-sample sparse mean-difference recovery"};
    app.require_subcommand(1, 1);
    std::optional<int> threads;

    auto* gen = app.add_subcommand("gen", "generate a two-sample dataset");
    detail::add_model_flags(gen, c);
    gen->add_option("--seed", c.seed, "random seed");
    gen->add_option("--out", c.out, "output dataset path (prefix with --csv)")->required();
    gen->add_flag("--csv", c.csv, "write headerless CSV files");

    auto* est = app.add_subcommand("estimate-omega", "estimate the transform matrix of a dataset");
    est->add_option("--omega", c.omega, "estimator")->check(CLI::IsMember({"banded", "threshcov"}));
    detail::add_cv_flags(est, c);
    est->add_option("--seed", c.seed, "cross-validation seed");
    est->add_option("--data", c.data, "input dataset")->required();
    est->add_flag("--csv", c.csv, "read headerless CSV files");
    est->add_option("--out", c.out, "output JSON path")->required();

    auto* rec = app.add_subcommand("recover", "run DATE on a dataset");
    rec->add_option("--omega", c.omega, "transform matrix source")
        ->check(CLI::IsMember({"known", "banded", "threshcov", "file"}));
    rec->add_option("--omega-path", c.omega_path, "precision JSON written by estimate-omega");
    detail::add_date_flags(rec, c);
    detail::add_cv_flags(rec, c);
    rec->add_option("--beta", c.beta, "oracle sparsity exponent");
    rec->add_option("--r", c.r, "oracle signal strength");
    rec->add_option("--seed", c.seed, "cross-validation seed");
    rec->add_option("--data", c.data, "input dataset")->required();
    rec->add_flag("--csv", c.csv, "read headerless CSV files");
    rec->add_option("--out", c.out, "output JSON path")->required();

    auto* bh = app.add_subcommand("bh", "Benjamini-Hochberg over two-sample t tests");
    bh->add_option("--alpha", c.alpha, "target FDR level");
    bh->add_option("--seed", c.seed, "unused; echoed for completeness");
    bh->add_option("--data", c.data, "input dataset")->required();
    bh->add_flag("--csv", c.csv, "read headerless CSV files");
    bh->add_option("--out", c.out, "output JSON path")->required();

    auto* sim = app.add_subcommand("simulate", "Monte Carlo sweep");
    detail::add_model_flags(sim, c);
    detail::add_date_flags(sim, c);
    sim->add_option("--cv-splits", c.cv_splits, "cross-validation splits");
    sim->add_option("--reps", c.reps, "replications");
    sim->add_option("--methods", c.methods, "comma-separated methods")->delimiter(',');
    sim->add_option("--threads", threads, "worker threads (default: DATEKIT_THREADS or 1)");
    sim->add_option("--seed", c.seed, "base seed");
    sim->add_option("--out", c.out, "report JSON path")->required();
    sim->add_option("--csv-out", c.csv_out, "flat per-replication CSV path");

    auto* phase = app.add_subcommand("phase", "recovery boundary curves");
    phase->add_option("--omega-lower", c.omega_lower, "smallest diagonal of the transform matrix")->required();
    phase->add_option("--omega-bar", c.omega_bar, "largest diagonal of the transform matrix")->required();
    phase->add_option("--betas", c.betas, "comma-separated beta grid")->delimiter(',');
    phase->add_option("--out", c.out, "output CSV path")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        std::ostringstream text;
        app.exit(e, text, text);
        throw HelpRequested(text.str());
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (gen->parsed()) c.command = Command::Gen;
    if (est->parsed()) c.command = Command::EstimateOmega;
    if (rec->parsed()) c.command = Command::Recover;
    if (bh->parsed()) c.command = Command::Bh;
    if (sim->parsed()) c.command = Command::Simulate;
    if (phase->parsed()) c.command = Command::Phase;

    switch (c.command) {
        case Command::Gen:
            detail::validate_model(c);
            if (!c.beta) c.beta = kDefaultBeta;
            if (!c.r) c.r = kDefaultR;
            break;
        case Command::EstimateOmega:
            if (est->count("--omega") == 0) c.omega = "banded";
            detail::validate_cv(c);
            break;
        case Command::Recover:
            detail::validate_date(c);
            detail::validate_cv(c);
            if (c.beta) detail::check(*c.beta > 0.0 && *c.beta < 1.0, "--beta", "beta must be in (0,1)");
            if (c.r) detail::check(*c.r > 0.0, "--r", "r must be positive");
            detail::check(c.omega != "file" || !c.omega_path.empty(), "--omega-path",
                          "required when --omega is file");
            break;
        case Command::Bh:
            detail::check(c.alpha > 0.0 && c.alpha < 1.0, "--alpha", "alpha must be in (0,1)");
            break;
        case Command::Simulate:
            detail::validate_model(c);
            detail::validate_date(c);
            detail::validate_cv(c);
            if (!c.beta) c.beta = kDefaultBeta;
            if (!c.r) c.r = kDefaultR;
            detail::check(c.reps >= 1, "--reps", "reps must be positive");
            detail::check(!c.methods.empty(), "--methods", "at least one method is required");
            for (const auto& m : c.methods)
                detail::check(parse_method(m).has_value(), "--methods",
                              "unknown method '" + m + "' (expected date-known, date-banded, date-threshcov, bh)");
            c.threads = threads ? *threads : detail::threads_from_env();
            detail::check(c.threads >= 1, "--threads", "threads must be positive");
            break;
        case Command::Phase:
            detail::check(c.omega_lower >= 1.0, "--omega-lower", "omega-lower must be at least 1");
            detail::check(c.omega_bar >= c.omega_lower, "--omega-bar", "omega-bar must be at least omega-lower");
            for (double b : c.betas) detail::check(b > 0.0 && b < 1.0, "--betas", "every beta must be in (0,1)");
            break;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Resolved configuration

inline CovarianceSpec covariance_spec(const RunConfig& c) {
    CovarianceSpec spec;
    spec.p = c.p;
    if (c.model == "ar1") spec.kind = Ar1{c.rho};
    if (c.model == "block") spec.kind = BlockDiag{c.within_corr, c.block_size};
    if (c.model == "penta") spec.kind = PentaDiag{c.d1, c.d2};
    if (c.model == "sparse") spec.kind = RandomSparse{c.sparse_low, c.sparse_high};
    return spec;
}

inline SignalSpec signal_spec(const RunConfig& c) {
    return SignalSpec{c.beta.value_or(kDefaultBeta), c.r.value_or(kDefaultR), c.mag_low, c.mag_high};
}

inline DateConfig date_config(const RunConfig& c) {
    DateConfig d;
    d.s = c.s;
    d.q = c.q;
    d.alpha = c.alpha;
    d.component_cap = c.component_cap;
    if (c.tuning == "oracle") d.tuning = OracleTuning{c.beta.value_or(kDefaultBeta), c.r.value_or(kDefaultR)};
    return d;
}

/// Every key needed to reproduce the run; threads is omitted because it
/// never changes the output.
inline io::Json config_json(const RunConfig& c) {
    io::Json j;
    j["command"] = command_name(c.command);
    j["seed"] = c.seed;
    auto date_keys = [&] {
        j["tuning"] = c.tuning;
        j["s"] = c.s;
        j["q"] = c.q;
        j["alpha"] = c.alpha;
        j["component_cap"] = c.component_cap;
        if (c.tuning == "oracle") {
            j["beta"] = c.beta ? io::Json(*c.beta) : io::Json(nullptr);
            j["r"] = c.r ? io::Json(*c.r) : io::Json(nullptr);
        }
    };
    switch (c.command) {
        case Command::Gen:
        case Command::Simulate:
            j["covariance"] = io::covariance_json(covariance_spec(c));
            j["signal"] = io::signal_json(signal_spec(c));
            j["n1"] = c.n1;
            j["n2"] = c.n2;
            if (c.command == Command::Gen) {
                j["csv"] = c.csv;
                break;
            }
            date_keys();
            j["beta"] = *c.beta;
            j["r"] = *c.r;
            j["cv_splits"] = c.cv_splits;
            j["reps"] = c.reps;
            j["methods"] = c.methods;
            break;
        case Command::EstimateOmega:
            j["omega"] = c.omega;
            j["cv_splits"] = c.cv_splits;
            j["unequal_cov"] = c.unequal_cov;
            j["data"] = c.data;
            j["csv"] = c.csv;
            break;
        case Command::Recover:
            j["omega"] = c.omega;
            if (c.omega == "file") j["omega_path"] = c.omega_path;
            date_keys();
            j["cv_splits"] = c.cv_splits;
            j["unequal_cov"] = c.unequal_cov;
            j["data"] = c.data;
            j["csv"] = c.csv;
            break;
        case Command::Bh:
            j["alpha"] = c.alpha;
            j["data"] = c.data;
            j["csv"] = c.csv;
            break;
        case Command::Phase:
            j["omega_lower"] = c.omega_lower;
            j["omega_bar"] = c.omega_bar;
            j["betas"] = c.betas.empty() ? default_beta_grid() : c.betas;
            break;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Dispatch

namespace detail {

inline CvConfig cv_config(const RunConfig& c) {
    CvConfig cv;
    cv.n_splits = c.cv_splits;
    cv.rng = SeededRng(c.seed);
    return cv;
}

inline io::Json confusion_json(const ConfusionCounts& k) {
    return io::Json{{"fp", k.fp}, {"tp", k.tp}, {"fn", k.fn}, {"tn", k.tn}, {"tp_sign_correct", k.tp_sign_correct}};
}

inline void run_gen(const RunConfig& c) {
    const TwoSampleData d = generate_dataset(covariance_spec(c), signal_spec(c), c.n1, c.n2, SeededRng(c.seed));
    if (c.csv) {
        io::write_dataset(d, c.out, true);
        return;
    }
    io::Json j = io::dataset_json(d);
    j["config"] = config_json(c);
    io::write_atomic(c.out, j.dump() + "\n");
}

inline PrecisionEstimate resolve_omega(RunConfig& c, const TwoSampleData& d) {
    if (c.omega == "file") return io::precision_from_json(io::parse_json(io::read_file(c.omega_path), c.omega_path));
    if (c.omega == "known") {
        if (!d.meta) throw IoError("--omega known needs a dataset carrying generation metadata");
        const SymmetricMatrix sigma = regenerate_covariance(*d.meta);
        return known_precision(known_omega(d.meta->cov, sigma));
    }
    const OmegaSource src = c.omega == "banded" ? OmegaSource::Banded : OmegaSource::ThresholdedCov;
    return estimate_precision(d, src, cv_config(c), !c.unequal_cov);
}

inline void run_estimate(RunConfig& c) {
    const TwoSampleData d = io::read_dataset(c.data, c.csv);
    const PrecisionEstimate est = resolve_omega(c, d);
    io::Json j = io::precision_json(est);
    j["config"] = config_json(c);
    io::write_atomic(c.out, j.dump() + "\n");
}

inline void run_recover(RunConfig& c) {
    const TwoSampleData d = io::read_dataset(c.data, c.csv);
    if (c.tuning == "oracle") {
        if (d.meta) {
            if (!c.beta) c.beta = d.meta->signal.beta;
            if (!c.r) c.r = d.meta->signal.r;
        }
        if (!c.beta || !c.r) throw IoError("oracle tuning needs --beta and --r or dataset metadata");
    }
    const PrecisionEstimate omega = resolve_omega(c, d);
    const RecoveryResult res = run_date(d, omega, date_config(c));
    io::Json j;
    j["schema_version"] = io::kSchemaVersion;
    j["config"] = config_json(c);
    j["omega_method"] = method_name(omega.method);
    j["result"] = io::recovery_json(res);
    if (d.truth) j["confusion"] = confusion_json(confusion(*d.truth, res.decisions));
    io::write_atomic(c.out, j.dump() + "\n");
}

inline void run_bh(const RunConfig& c) {
    const TwoSampleData d = io::read_dataset(c.data, c.csv);
    const TestResult tr = two_sample_t(d.x1, d.x2);
    const auto selected = bh_select(tr.p_values, c.alpha);
    const auto decisions = decisions_from_selection(d.p(), selected, &tr.t_stats);
    io::Json j;
    j["schema_version"] = io::kSchemaVersion;
    j["config"] = config_json(c);
    j["selected"] = selected;
    j["decisions"] = decisions;
    j["df"] = tr.df;
    j["t_stats"] = io::vector_json(tr.t_stats);
    j["p_values"] = io::vector_json(tr.p_values);
    if (d.truth) j["confusion"] = confusion_json(confusion(*d.truth, decisions));
    io::write_atomic(c.out, j.dump() + "\n");
}

inline void run_simulate(const RunConfig& c) {
    SimConfig sc;
    sc.cov = covariance_spec(c);
    sc.signal = signal_spec(c);
    sc.n1 = c.n1;
    sc.n2 = c.n2;
    sc.date = date_config(c);
    sc.cv_splits = c.cv_splits;
    std::vector<Method> methods;
    for (const auto& m : c.methods) methods.push_back(*parse_method(m));
    const SimulationReport rep = run_sweep(sc, methods, c.reps, c.seed, c.threads);
    io::write_atomic(c.out, io::report_json(rep, config_json(c), c.threads).dump(2) + "\n");
    if (!c.csv_out.empty()) io::write_atomic(c.csv_out, io::report_csv(rep));
}

inline void run_phase(const RunConfig& c) {
    const auto grid = c.betas.empty() ? default_beta_grid() : c.betas;
    io::write_atomic(c.out, io::phase_csv(phase_boundaries(c.omega_lower, c.omega_bar, grid)));
}

}  // namespace detail

/// Returns 0 on success and 1 on a runtime failure, after writing a single
/// diagnostic line to `err`.
inline int execute(RunConfig cfg, std::ostream& err = std::cerr) {
    try {
        switch (cfg.command) {
            case Command::Gen: detail::run_gen(cfg); break;
            case Command::EstimateOmega: detail::run_estimate(cfg); break;
            case Command::Recover: detail::run_recover(cfg); break;
            case Command::Bh: detail::run_bh(cfg); break;
            case Command::Simulate: detail::run_simulate(cfg); break;
            case Command::Phase: detail::run_phase(cfg); break;
        }
    } catch (const std::exception& e) {
        err << "datekit " << command_name(cfg.command) << ": error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

/// Full entry point: parse, then execute. Usage errors exit with 2.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    try {
        cfg = parse_args(args);
    } catch (const UsageError& e) {
        err << "datekit: usage error: " << e.what() << '\n';
        return 2;
    } catch (const HelpRequested& h) {
        out << h.what();
        return 0;
    }
    return execute(std::move(cfg), err);
}

}  // namespace datekit::cli
