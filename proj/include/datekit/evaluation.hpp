#pragma once

// Confusion counts, marginal error rates, recovery-region boundaries and
// exponent-level evaluators for the risk and mFNR lower bounds. Every bound
// sets the slowly varying logarithmic factor to 1.

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "datekit/error.hpp"
#include "datekit/linalg.hpp"

namespace datekit {

struct ConfusionCounts {
    Index fp = 0;
    Index tp = 0;
    Index fn = 0;
    Index tn = 0;
    Index tp_sign_correct = 0;  // diagnostic only

    Index total() const noexcept { return fp + tp + fn + tn; }
};

/// Support-based counts; a true positive needs truth != 0 and decision != 0
/// regardless of sign.
inline ConfusionCounts confusion(const Vector& truth, std::span<const int> decisions) {
    detail::require_dims(truth.size() == static_cast<Index>(decisions.size()), "confusion: length mismatch");
    ConfusionCounts c;
    for (Index k = 0; k < truth.size(); ++k) {
        const bool signal = truth(k) != 0.0;
        const int d = decisions[static_cast<std::size_t>(k)];
        if (signal && d != 0) {
            ++c.tp;
            if ((truth(k) > 0) == (d > 0)) ++c.tp_sign_correct;
        } else if (!signal && d != 0) {
            ++c.fp;
        } else if (signal) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

/// Decisions vector from a selected index set (used for the BH baseline).
inline std::vector<int> decisions_from_selection(Index p, std::span<const Index> selected,
                                                 const Vector* signs = nullptr) {
    std::vector<int> d(static_cast<std::size_t>(p), 0);
    for (Index k : selected) {
        int s = 1;
        if (signs != nullptr && (*signs)(k) < 0) s = -1;
        d[static_cast<std::size_t>(k)] = s;
    }
    return d;
}

struct ErrorRates {
    double mfdr = 0.0;
    double mfnr = 0.0;
    double atp = 0.0;
};

/// mFDR = E(FP) / (E(FP) + E(TP)), mFNR = E(FN) / (E(FN) + E(TN)),
/// ATP = E(TP); a 0/0 ratio is 0.
inline ErrorRates aggregate(std::span<const ConfusionCounts> reps) {
    if (reps.empty()) throw InvalidDomain("aggregate: no replications");
    double fp = 0, tp = 0, fn = 0, tn = 0;
    for (const auto& c : reps) {
        fp += static_cast<double>(c.fp);
        tp += static_cast<double>(c.tp);
        fn += static_cast<double>(c.fn);
        tn += static_cast<double>(c.tn);
    }
    const double count = static_cast<double>(reps.size());
    fp /= count;
    tp /= count;
    fn /= count;
    tn /= count;
    auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    return {ratio(fp, fp + tp), ratio(fn, fn + tn), tp};
}

// ---------------------------------------------------------------------------
// Recovery regions in the (beta, r) plane

struct PhaseCurves {
    std::vector<double> beta_grid;
    std::vector<double> no_recovery_r;        // beta / omega_bar
    std::vector<double> full_recovery_r;      // (1 + sqrt(1 - beta))^2 / omega_lower
    std::vector<double> indep_no_recovery_r;  // beta
    std::vector<double> indep_full_recovery_r;
};

inline PhaseCurves phase_boundaries(double omega_lower, double omega_bar, const std::vector<double>& beta_grid) {
    if (!(omega_lower >= 1.0 && omega_bar >= omega_lower))
        throw InvalidDomain("phase_boundaries: need 1 <= omega_lower <= omega_bar");
    PhaseCurves c;
    c.beta_grid = beta_grid;
    for (double beta : beta_grid) {
        const double full = std::pow(1.0 + std::sqrt(1.0 - beta), 2);
        c.no_recovery_r.push_back(beta / omega_bar);
        c.full_recovery_r.push_back(full / omega_lower);
        c.indep_no_recovery_r.push_back(beta);
        c.indep_full_recovery_r.push_back(full);
    }
    return c;
}

/// 0.51, 0.52, ..., 0.99
inline std::vector<double> default_beta_grid() {
    std::vector<double> g;
    for (int k = 51; k <= 99; ++k) g.push_back(k / 100.0);
    return g;
}

// ---------------------------------------------------------------------------
// Weighted-risk lower bound

enum class RiskRegion {
    Partial,           // -r < (Lambda - beta) / omega_lower < r
    NoRecovery,        // r < (beta - Lambda) / omega_bar
    PenaltyDominated,  // r < (Lambda - beta) / omega_bar
    Indeterminate,     // none of the above
};

inline std::string region_name(RiskRegion r) {
    switch (r) {
        case RiskRegion::Partial: return "partial";
        case RiskRegion::NoRecovery: return "no_recovery";
        case RiskRegion::PenaltyDominated: return "penalty_dominated";
        case RiskRegion::Indeterminate: break;
    }
    return "indeterminate";
}

struct RiskBound {
    RiskRegion region = RiskRegion::Indeterminate;
    double exponent = std::numeric_limits<double>::quiet_NaN();  // bound = p^exponent
    double bound = std::numeric_limits<double>::quiet_NaN();
};

inline RiskBound theorem1_lower_bound(double lambda, double beta, double r, double omega_lower, double omega_bar,
                                      Index p) {
    detail::require(p >= 2, "theorem1_lower_bound: p must be at least 2");
    detail::require(r > 0.0 && omega_lower > 0.0 && omega_bar >= omega_lower,
                    "theorem1_lower_bound: need r > 0 and 0 < omega_lower <= omega_bar");
    RiskBound out;
    const double partial_ratio = (lambda - beta) / omega_lower;
    if (-r < partial_ratio && partial_ratio < r) {
        out.region = RiskRegion::Partial;
        const double wr = omega_bar * r;
        out.exponent = 1.0 - beta - std::pow(wr - beta + lambda, 2) / (4.0 * wr);
    } else if (r < (beta - lambda) / omega_bar) {
        out.region = RiskRegion::NoRecovery;
        out.exponent = 1.0 - beta;
    } else if (r < (lambda - beta) / omega_bar) {
        out.region = RiskRegion::PenaltyDominated;
        out.exponent = 1.0 - lambda;
    } else {
        return out;
    }
    out.bound = std::pow(static_cast<double>(p), out.exponent);
    return out;
}

// ---------------------------------------------------------------------------
// mFNR lower bound at a target mFDR level

struct MfnrBound {
    double g = 0.0;
    double lambda_alpha = 0.0;
    double exponent = 0.0;  // bound = p^exponent
    double bound = 0.0;
};

/// g(alpha, p) = log((alpha / (1 - alpha)) sqrt(4 pi beta log p)) / log p
inline double g_alpha_p(double alpha, double beta, Index p) {
    const double lp = std::log(static_cast<double>(p));
    return std::log(alpha / (1.0 - alpha) * std::sqrt(4.0 * std::numbers::pi * beta * lp)) / lp;
}

/// Lambda(alpha) = w r + beta - 2 sqrt(w r beta (1 - g / beta)) for a given g.
inline double lambda_alpha_from_g(double g, double beta, double r, double omega_lower) {
    const double radicand = 1.0 - g / beta;
    if (radicand < 0.0) throw InvalidDomain("lambda_alpha: 1 - g/beta is negative");
    const double wr = omega_lower * r;
    return wr + beta - 2.0 * std::sqrt(wr * beta * radicand);
}

/// -beta - (sqrt(omega_bar r) - sqrt(beta - g))^2
inline double mfnr_exponent_from_g(double g, double beta, double r, double omega_bar) {
    if (beta - g < 0.0) throw InvalidDomain("mfnr_exponent: beta - g is negative");
    return -beta - std::pow(std::sqrt(omega_bar * r) - std::sqrt(beta - g), 2);
}

inline MfnrBound theorem2_oracle(double alpha, double beta, double r, double omega_lower, double omega_bar, Index p) {
    detail::require(alpha > 0.0 && alpha < 1.0, "theorem2_oracle: alpha must lie in (0, 1)");
    detail::require(beta > 0.0 && r > 0.0 && p >= 2, "theorem2_oracle: need beta > 0, r > 0, p >= 2");
    MfnrBound out;
    out.g = g_alpha_p(alpha, beta, p);
    out.lambda_alpha = lambda_alpha_from_g(out.g, beta, r, omega_lower);
    out.exponent = mfnr_exponent_from_g(out.g, beta, r, omega_bar);
    out.bound = std::pow(static_cast<double>(p), out.exponent);
    return out;
}

}  // namespace datekit
