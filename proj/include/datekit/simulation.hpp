#pragma once

// Monte Carlo harness: regenerate a dataset per replication from a derived
// seed, run every requested method on it, and aggregate the confusion counts.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "datekit/baselines.hpp"
#include "datekit/cov_models.hpp"
#include "datekit/date.hpp"
#include "datekit/evaluation.hpp"
#include "datekit/precision.hpp"

namespace datekit {

enum class Method { DateKnown, DateBanded, DateThreshCov, Bh };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::DateKnown: return "date-known";
        case Method::DateBanded: return "date-banded";
        case Method::DateThreshCov: return "date-threshcov";
        case Method::Bh: return "bh";
    }
    return "?";
}

inline std::optional<Method> parse_method(const std::string& name) {
    for (Method m : {Method::DateKnown, Method::DateBanded, Method::DateThreshCov, Method::Bh})
        if (method_name(m) == name) return m;
    return std::nullopt;
}

struct SimConfig {
    CovarianceSpec cov{Ar1{0.6}, 500};
    SignalSpec signal;
    Index n1 = 60;
    Index n2 = 60;
    DateConfig date;
    int cv_splits = 50;
};

struct RepRecord {
    int rep = 0;
    ConfusionCounts counts;
    std::string error;  // empty on success

    bool ok() const noexcept { return error.empty(); }
};

struct MethodReport {
    Method method = Method::DateKnown;
    std::vector<RepRecord> per_rep;
    ErrorRates rates;
    int failures = 0;
};

struct SimulationReport {
    SimConfig config;
    std::uint64_t seed = 0;
    int reps = 0;
    std::vector<MethodReport> per_method;
    double wall_time = 0.0;  // seconds
};

// Stream reserved for a covariance shared by all replications (model (d)).
inline constexpr std::uint64_t kCovarianceStream = 0xC0FFEE0000000000ULL;

namespace detail {

inline ConfusionCounts run_method(Method method, const TwoSampleData& data, const PrecisionEstimate& known,
                                  const SimConfig& cfg, const SeededRng& rep_rng) {
    const Vector& truth = *data.truth;
    if (method == Method::Bh) {
        const TestResult tr = two_sample_t(data.x1, data.x2);
        const auto selected = bh_select(tr.p_values, cfg.date.alpha);
        return confusion(truth, decisions_from_selection(data.p(), selected, &tr.t_stats));
    }
    CvConfig cv;
    cv.n_splits = cfg.cv_splits;
    cv.rng = rep_rng.derive(20);
    PrecisionEstimate omega = known;
    if (method == Method::DateBanded) omega = estimate_precision(data, OmegaSource::Banded, cv);
    if (method == Method::DateThreshCov) omega = estimate_precision(data, OmegaSource::ThresholdedCov, cv);
    const RecoveryResult res = run_date(data, omega, cfg.date);
    return confusion(truth, res.decisions);
}

}  // namespace detail

/// Known precision for a covariance model: the exact tridiagonal inverse for
/// AR(1), a numerical inverse otherwise.
inline SymmetricMatrix known_omega(const CovarianceSpec& spec, const SymmetricMatrix& sigma) {
    if (const auto* a = std::get_if<Ar1>(&spec.kind)) return ar1_precision_exact(a->rho, spec.p);
    return spd_inverse(sigma);
}

/// Output is a function of (cfg, methods, reps, base_seed) only; the thread
/// count changes nothing but the wall time.
inline SimulationReport run_sweep(const SimConfig& cfg, const std::vector<Method>& methods, int reps,
                                  std::uint64_t base_seed, int threads = 1) {
    detail::require(reps >= 1, "run_sweep: reps must be positive");
    detail::require(!methods.empty(), "run_sweep: no methods");
    cfg.date.validate();
    const auto start = std::chrono::steady_clock::now();

    SeededRng cov_rng = SeededRng::derive(base_seed, kCovarianceStream);
    const Covariance cov = Covariance::factor(build_covariance(cfg.cov, cov_rng));
    const PrecisionEstimate known = known_precision(known_omega(cfg.cov, cov.sigma));

    const std::size_t nm = methods.size();
    std::vector<RepRecord> table(static_cast<std::size_t>(reps) * nm);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < reps; i = next++) {
            const SeededRng rep_rng = SeededRng::derive(base_seed, static_cast<std::uint64_t>(i));
            std::optional<TwoSampleData> data;
            std::string gen_error;
            try {
                data = generate_dataset(cov, cfg.signal, cfg.n1, cfg.n2, rep_rng);
            } catch (const std::exception& e) {
                gen_error = std::string("generation: ") + e.what();
            }
            for (std::size_t m = 0; m < nm; ++m) {
                RepRecord& rec = table[static_cast<std::size_t>(i) * nm + m];
                rec.rep = i;
                if (!data) {
                    rec.error = gen_error;
                    continue;
                }
                try {
                    rec.counts = detail::run_method(methods[m], *data, known, cfg, rep_rng);
                } catch (const std::exception& e) {
                    rec.error = e.what();
                    if (rec.error.empty()) rec.error = "unknown error";
                }
            }
        }
    };
    const int nthreads = std::clamp(threads, 1, reps);
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    SimulationReport report;
    report.config = cfg;
    report.seed = base_seed;
    report.reps = reps;
    for (std::size_t m = 0; m < nm; ++m) {
        MethodReport mr;
        mr.method = methods[m];
        std::vector<ConfusionCounts> ok;
        for (int i = 0; i < reps; ++i) {
            const RepRecord& rec = table[static_cast<std::size_t>(i) * nm + m];
            mr.per_rep.push_back(rec);
            if (rec.ok()) {
                ok.push_back(rec.counts);
            } else {
                ++mr.failures;
            }
        }
        if (!ok.empty()) mr.rates = aggregate(ok);
        report.per_method.push_back(std::move(mr));
    }
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace datekit
