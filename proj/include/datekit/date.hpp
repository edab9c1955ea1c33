#pragma once

// Dependence-assisted thresholding and excising.
//
//   1. transform both groups by the precision estimate,
//   2. keep coordinates whose standardized statistic reaches 2 s log p,
//   3. split the survivors into connected pieces of the regularized
//      precision graph and, inside each piece, pick signs in
//      {-delta, 0, +delta} minimizing an L0-penalized quadratic fit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "datekit/cov_models.hpp"
#include "datekit/linalg.hpp"
#include "datekit/precision.hpp"

namespace datekit {

/// Tuning from known sparsity and strength.
struct OracleTuning {
    double beta = 0.6;
    double r = 1.0;
};

/// Tuning estimated from the exceedances of 2 q log p.
struct EstimatedTuning {};

using TuningMode = std::variant<EstimatedTuning, OracleTuning>;

struct DateConfig {
    double s = 0.4;
    double q = 0.8;
    double alpha = 0.05;
    TuningMode tuning = EstimatedTuning{};
    int component_cap = 12;

    void validate() const {
        detail::require(s >= 0.0, "DateConfig: s must be non-negative");
        detail::require(alpha > 0.0 && alpha < 1.0, "DateConfig: alpha must lie in (0, 1)");
        detail::require(component_cap >= 1, "DateConfig: component_cap must be positive");
        if (std::holds_alternative<EstimatedTuning>(tuning)) {
            detail::require(q > 0.0, "DateConfig: q must be positive");
            detail::require(s < q, "DateConfig: s must be below q");
        }
    }
};

struct TuningParams {
    double beta_hat = 0.0;
    double r_hat = 0.0;
    double omega_lower_hat = 1.0;
    double lambda_cap = 0.0;  // the false-positive weight exponent
    double upsilon = 0.0;
    double lambda_date = 0.0;
    double delta_date = 0.0;
    std::vector<std::string> clamps;
};

struct RecoveryDiagnostics {
    bool no_exceedances = false;
    std::vector<std::size_t> oversize_components;  // indices into components
    std::vector<std::size_t> ridge_repaired_components;
};

struct RecoveryResult {
    std::vector<int> decisions;  // sign of the estimate; magnitude is tuning.delta_date
    Vector t_stats;
    std::vector<Index> survivors;
    std::vector<std::vector<Index>> components;
    TuningParams tuning;
    RecoveryDiagnostics flags;
};

// ---------------------------------------------------------------------------
// Statistics

inline Matrix transform_data(const Matrix& x, const PrecisionEstimate& omega) {
    detail::require_dims(x.cols() == omega.dim(), "transform_data: dimension mismatch");
    return x * omega.omega.matrix();
}

/// T_k = n (zbar1_k - zbar2_k)^2 / omega_kk with n = n1 n2 / (n1 + n2).
inline Vector compute_statistics(const Matrix& z1, const Matrix& z2, const Vector& omega_diag) {
    detail::require_dims(z1.cols() == z2.cols() && z1.cols() == omega_diag.size(),
                         "compute_statistics: dimension mismatch");
    if (omega_diag.size() > 0 && !(omega_diag.minCoeff() > 0.0))
        throw NonpositiveDiagonal("compute_statistics: precision diagonal must be positive");
    const double n = effective_n(z1.rows(), z2.rows());
    const Vector diff = column_means(z1) - column_means(z2);
    return n * diff.array().square() / omega_diag.array();
}

inline double log_p(Index p) { return std::log(static_cast<double>(p)); }

/// {k : T_k >= 2 s log p}
inline std::vector<Index> threshold_survivors(const Vector& t, double s, Index p) {
    detail::require(s >= 0.0, "threshold_survivors: s must be non-negative");
    const double cut = 2.0 * s * log_p(p);
    std::vector<Index> out;
    for (Index k = 0; k < t.size(); ++k)
        if (t(k) >= cut) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// Graph

/// Undirected graph on 0..p-1 stored as sorted neighbor lists.
class Adjacency {
public:
    explicit Adjacency(Index p = 0) : nbrs_(static_cast<std::size_t>(p)) {}

    void add_edge(Index i, Index j) {
        nbrs_[static_cast<std::size_t>(i)].push_back(j);
        nbrs_[static_cast<std::size_t>(j)].push_back(i);
    }
    void finalize() {
        for (auto& v : nbrs_) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
    }

    Index size() const noexcept { return static_cast<Index>(nbrs_.size()); }
    const std::vector<Index>& neighbors(Index i) const { return nbrs_[static_cast<std::size_t>(i)]; }
    bool connected(Index i, Index j) const {
        const auto& v = neighbors(i);
        return std::binary_search(v.begin(), v.end(), j);
    }
    std::size_t edge_count() const {
        std::size_t e = 0;
        for (const auto& v : nbrs_) e += v.size();
        return e / 2;
    }

private:
    std::vector<std::vector<Index>> nbrs_;
};

/// Edge (i, j) iff |omega_ij| >= 1 / log p.
inline Adjacency regularize_precision(const SymmetricMatrix& omega, Index p) {
    detail::require(p >= 2, "regularize_precision: p must be at least 2");
    detail::require_dims(omega.dim() == p, "regularize_precision: dimension mismatch");
    const double cut = 1.0 / log_p(p);
    Adjacency g(p);
    const Matrix& m = omega.matrix();
    for (Index j = 1; j < p; ++j)
        for (Index i = 0; i < j; ++i)
            if (std::abs(m(i, j)) >= cut) g.add_edge(i, j);
    g.finalize();
    return g;
}

/// Connected components of the subgraph induced on `survivors`. Each
/// component is sorted; components are ordered by their smallest member.
inline std::vector<std::vector<Index>> connected_components(const std::vector<Index>& survivors,
                                                            const Adjacency& graph) {
    std::vector<char> in_set(static_cast<std::size_t>(graph.size()), 0);
    for (Index k : survivors) in_set[static_cast<std::size_t>(k)] = 1;
    std::vector<char> seen(static_cast<std::size_t>(graph.size()), 0);
    std::vector<Index> sorted = survivors;
    std::sort(sorted.begin(), sorted.end());

    std::vector<std::vector<Index>> out;
    std::vector<Index> stack;
    for (Index start : sorted) {
        if (seen[static_cast<std::size_t>(start)]) continue;
        std::vector<Index> comp;
        stack.push_back(start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const Index v = stack.back();
            stack.pop_back();
            comp.push_back(v);
            for (Index w : graph.neighbors(v)) {
                const auto wi = static_cast<std::size_t>(w);
                if (in_set[wi] && !seen[wi]) {
                    seen[wi] = 1;
                    stack.push_back(w);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Excision

inline constexpr double kExcisionTieTolerance = 1e-9;
inline constexpr double kConditionLimit = 1e12;

struct ExcisionResult {
    std::vector<int> signs;  // values in {-1, 0, +1}
    double objective = 0.0;
    bool exhaustive = true;
    bool ridge_repaired = false;
};

namespace detail {

// Per-coordinate order used to break ties: 0 < +delta < -delta.
inline constexpr int kDigitSign[3] = {0, 1, -1};

inline int sign_rank(int sign) { return sign == 0 ? 0 : (sign > 0 ? 1 : 2); }

/// n (z - A d)^T A^{-1} (z - A d) + lambda^2 |d|_0, expanded as
/// n (z^T A^{-1} z - 2 z^T d + d^T A d) + lambda^2 |d|_0.
class ExcisionObjective {
public:
    ExcisionObjective(Matrix a, const Vector& z, double n, double lambda, double delta)
        : a_(std::move(a)), z_(z), n_(n), penalty_(lambda * lambda), delta_(delta) {
        Eigen::LLT<Matrix> llt(a_);
        constant_ = z_.dot(llt.solve(z_));
    }

    Index size() const noexcept { return z_.size(); }

    double operator()(const std::vector<int>& signs) const {
        const Index m = size();
        double linear = 0.0;
        double quad = 0.0;
        int nnz = 0;
        for (Index i = 0; i < m; ++i) {
            const int si = signs[static_cast<std::size_t>(i)];
            if (si == 0) continue;
            ++nnz;
            linear += si * z_(i);
            double row = 0.0;
            for (Index j = 0; j < m; ++j) {
                const int sj = signs[static_cast<std::size_t>(j)];
                if (sj != 0) row += sj * a_(i, j);
            }
            quad += si * row;
        }
        return n_ * (constant_ - 2.0 * delta_ * linear + delta_ * delta_ * quad) + penalty_ * nnz;
    }

private:
    Matrix a_;
    Vector z_;
    double n_;
    double penalty_;
    double delta_;
    double constant_ = 0.0;
};

inline int nonzeros(const std::vector<int>& v) {
    return static_cast<int>(std::count_if(v.begin(), v.end(), [](int x) { return x != 0; }));
}

/// true when a is preferred over b among near-equal objectives.
inline bool tie_preferred(const std::vector<int>& a, const std::vector<int>& b) {
    const int na = nonzeros(a);
    const int nb = nonzeros(b);
    if (na != nb) return na < nb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return sign_rank(a[i]) < sign_rank(b[i]);
    }
    return false;
}

inline double tie_window(double best) { return kExcisionTieTolerance * std::max(1.0, std::abs(best)); }

inline ExcisionResult excise_exhaustive(const ExcisionObjective& f) {
    const auto m = static_cast<std::size_t>(f.size());
    std::size_t total = 1;
    for (std::size_t i = 0; i < m; ++i) total *= 3;

    // Codes run in lexicographic order (coordinate 0 most significant), so the
    // first candidate met at a given sparsity is the tie-rule winner.
    std::vector<double> values(total);
    std::vector<int> signs(m, 0);
    std::vector<int> digits(m, 0);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t code = 0; code < total; ++code) {
        for (std::size_t i = 0; i < m; ++i) signs[i] = kDigitSign[digits[i]];
        values[code] = f(signs);
        best = std::min(best, values[code]);
        for (std::size_t i = m; i-- > 0;) {  // increment, last coordinate fastest
            if (++digits[i] < 3) break;
            digits[i] = 0;
        }
    }

    const double limit = best + tie_window(best);
    ExcisionResult out;
    int best_nnz = std::numeric_limits<int>::max();
    std::fill(digits.begin(), digits.end(), 0);
    for (std::size_t code = 0; code < total; ++code) {
        if (values[code] <= limit) {
            int nnz = 0;
            for (int d : digits) nnz += d != 0;
            if (nnz < best_nnz) {
                best_nnz = nnz;
                out.signs.assign(m, 0);
                for (std::size_t i = 0; i < m; ++i) out.signs[i] = kDigitSign[digits[i]];
                out.objective = values[code];
            }
        }
        for (std::size_t i = m; i-- > 0;) {
            if (++digits[i] < 3) break;
            digits[i] = 0;
        }
    }
    return out;
}

/// Coordinate-wise sweeps from the all-zero assignment; a coordinate moves
/// only on a strict improvement beyond the tie window.
inline ExcisionResult excise_coordinatewise(const ExcisionObjective& f) {
    const auto m = static_cast<std::size_t>(f.size());
    std::vector<int> signs(m, 0);
    double current = f(signs);
    for (int sweep = 0; sweep < 1000; ++sweep) {
        bool changed = false;
        for (std::size_t i = 0; i < m; ++i) {
            const int keep = signs[i];
            int best_sign = keep;
            double best_val = current;
            for (int d : kDigitSign) {
                if (d == keep) continue;
                signs[i] = d;
                const double v = f(signs);
                if (v < best_val - tie_window(best_val)) {
                    best_val = v;
                    best_sign = d;
                }
            }
            signs[i] = best_sign;
            if (best_sign != keep) {
                changed = true;
                current = best_val;
            }
        }
        if (!changed) break;
    }
    return {signs, current, false, false};
}

}  // namespace detail

/// Minimizes the penalized fit over {-delta, 0, +delta}^m for one component.
/// Exhaustive for m <= cap, coordinate-wise descent from zero beyond.
inline ExcisionResult excise_component(const std::vector<Index>& component, const SymmetricMatrix& omega,
                                       const Vector& zbar_diff, double n, double lambda_date, double delta_date,
                                       int cap = 12) {
    const auto m = static_cast<Index>(component.size());
    detail::require(m >= 1, "excise_component: empty component");
    detail::require_dims(zbar_diff.size() == m, "excise_component: zbar_diff length differs from component size");
    detail::require(n > 0.0 && delta_date >= 0.0 && lambda_date >= 0.0, "excise_component: invalid tuning");

    Matrix a = omega.principal(component).matrix();
    bool repaired = false;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmin > 0.0)) {
        a.diagonal().array() += std::abs(lmin) + 1e-8;
        repaired = true;
    } else if (lmax / lmin > kConditionLimit) {
        a.diagonal().array() += 1e-8;
        repaired = true;
    }

    const detail::ExcisionObjective f(std::move(a), zbar_diff, n, lambda_date, delta_date);
    ExcisionResult out = m <= cap ? detail::excise_exhaustive(f) : detail::excise_coordinatewise(f);
    out.ridge_repaired = repaired;
    return out;
}

// ---------------------------------------------------------------------------
// Tuning

/// Plug-in formulas shared by the oracle and estimated tuning:
///   Lambda  = (sqrt(w r) - sqrt(beta))^2
///   Upsilon = 4 w r / (w r + beta - Lambda)
///             * (log log p / 2 + log(alpha sqrt(pi) (w r + beta - Lambda) / (2 sqrt(w r) (1 - alpha))))
///   lambda  = sqrt(max(0, 2 (beta - Lambda) log p - Upsilon)),  delta = sqrt(2 r log p / n)
inline TuningParams tuning_from_parameters(double beta, double r, double omega_lower, Index p, double n,
                                           double alpha) {
    TuningParams t;
    t.beta_hat = beta;
    t.r_hat = r;
    t.omega_lower_hat = omega_lower;
    const double lp = log_p(p);
    const double wr = omega_lower * r;
    t.lambda_cap = std::pow(std::sqrt(wr) - std::sqrt(beta), 2);
    const double spread = wr + beta - t.lambda_cap;
    t.upsilon = 4.0 * wr / spread *
                (0.5 * std::log(lp) +
                 std::log(alpha * std::sqrt(std::numbers::pi) * spread / (2.0 * std::sqrt(wr) * (1.0 - alpha))));
    const double radicand = 2.0 * (beta - t.lambda_cap) * lp - t.upsilon;
    if (radicand < 0.0) t.clamps.push_back("lambda_date radicand clamped to 0");
    t.lambda_date = std::sqrt(std::max(0.0, radicand));
    t.delta_date = std::sqrt(2.0 * r * lp / n);
    return t;
}

inline TuningParams oracle_tuning(double beta, double r, double omega_lower, Index p, double n, double alpha) {
    detail::require(beta > 0.5 && beta < 1.0, "oracle_tuning: beta must lie in (1/2, 1)");
    detail::require(r > 0.0, "oracle_tuning: r must be positive");
    detail::require(omega_lower >= 1.0 - 1e-9, "oracle_tuning: omega_lower must be at least 1");
    detail::require(alpha > 0.0 && alpha < 1.0, "oracle_tuning: alpha must lie in (0, 1)");
    detail::require(p >= 2 && n > 0.0, "oracle_tuning: need p >= 2 and n > 0");
    return tuning_from_parameters(beta, r, omega_lower, p, n, alpha);
}

inline constexpr double kBetaHatMin = 0.05;
inline constexpr double kBetaHatMax = 0.95;
inline constexpr double kRHatMin = 1e-6;

/// Sparsity, strength and minimum precision diagonal estimated from the
/// statistics exceeding 2 q log p, then plugged into tuning_from_parameters.
inline TuningParams estimate_tuning(const Vector& t, const Vector& omega_diag, double q, Index p, double n,
                                    double alpha) {
    detail::require(q > 0.0, "estimate_tuning: q must be positive");
    detail::require(p >= 2 && n > 0.0, "estimate_tuning: need p >= 2 and n > 0");
    detail::require(alpha > 0.0 && alpha < 1.0, "estimate_tuning: alpha must lie in (0, 1)");
    detail::require_dims(t.size() == p && omega_diag.size() == p, "estimate_tuning: dimension mismatch");
    const double lp = log_p(p);
    const double cut = 2.0 * q * lp;
    Index count = 0;
    double excess = 0.0;
    for (Index k = 0; k < p; ++k) {
        if (t(k) > cut) {
            ++count;
            excess += (t(k) - 1.0) / omega_diag(k);
        }
    }
    if (count == 0) throw NoExceedances("estimate_tuning: no statistic exceeds 2 q log p");

    std::vector<std::string> clamps;
    const double beta_raw = -std::log(static_cast<double>(count) / static_cast<double>(p)) / lp;
    // p^(1 - beta_raw) equals the exceedance count
    double r_hat = excess / (2.0 * static_cast<double>(count) * lp);
    double beta_hat = beta_raw;
    if (beta_hat < kBetaHatMin || beta_hat > kBetaHatMax) {
        beta_hat = std::clamp(beta_hat, kBetaHatMin, kBetaHatMax);
        clamps.push_back("beta_hat clamped to [0.05, 0.95]");
    }
    if (r_hat < kRHatMin) {
        r_hat = kRHatMin;
        clamps.push_back("r_hat clamped to 1e-6");
    }
    double w = omega_diag.minCoeff();
    if (w < 1.0) {
        w = 1.0;
        clamps.push_back("omega_lower_hat clamped to 1");
    }
    TuningParams out = tuning_from_parameters(beta_hat, r_hat, w, p, n, alpha);
    clamps.insert(clamps.end(), out.clamps.begin(), out.clamps.end());
    out.clamps = std::move(clamps);
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline

inline RecoveryResult run_date(const TwoSampleData& data, const PrecisionEstimate& omega, const DateConfig& cfg) {
    cfg.validate();
    const Index p = data.p();
    detail::require_dims(data.x2.cols() == p && omega.dim() == p, "run_date: dimension mismatch");
    detail::require(p >= 2, "run_date: p must be at least 2");
    detail::require(data.n1() >= 1 && data.n2() >= 1, "run_date: empty group");
    const double n = effective_n(data.n1(), data.n2());

    const Matrix z1 = transform_data(data.x1, omega);
    const Matrix z2 = transform_data(data.x2, omega);
    const Vector zbar_diff = column_means(z1) - column_means(z2);

    RecoveryResult res;
    res.t_stats = compute_statistics(z1, z2, omega.diag);
    res.decisions.assign(static_cast<std::size_t>(p), 0);
    res.survivors = threshold_survivors(res.t_stats, cfg.s, p);
    res.components = connected_components(res.survivors, regularize_precision(omega.omega, p));

    if (const auto* oracle = std::get_if<OracleTuning>(&cfg.tuning)) {
        res.tuning = oracle_tuning(oracle->beta, oracle->r, omega.diag.minCoeff(), p, n, cfg.alpha);
    } else {
        try {
            res.tuning = estimate_tuning(res.t_stats, omega.diag, cfg.q, p, n, cfg.alpha);
        } catch (const NoExceedances&) {
            res.flags.no_exceedances = true;
            res.tuning.beta_hat = std::numeric_limits<double>::quiet_NaN();
            res.tuning.r_hat = std::numeric_limits<double>::quiet_NaN();
            res.tuning.omega_lower_hat = omega.diag.minCoeff();
            return res;
        }
    }

    for (std::size_t c = 0; c < res.components.size(); ++c) {
        const auto& comp = res.components[c];
        Vector z(static_cast<Index>(comp.size()));
        for (std::size_t i = 0; i < comp.size(); ++i) z(static_cast<Index>(i)) = zbar_diff(comp[i]);
        const ExcisionResult ex = excise_component(comp, omega.omega, z, n, res.tuning.lambda_date,
                                                   res.tuning.delta_date, cfg.component_cap);
        if (!ex.exhaustive) res.flags.oversize_components.push_back(c);
        if (ex.ridge_repaired) res.flags.ridge_repaired_components.push_back(c);
        for (std::size_t i = 0; i < comp.size(); ++i)
            res.decisions[static_cast<std::size_t>(comp[i])] = ex.signs[i];
    }
    return res;
}

}  // namespace datekit
