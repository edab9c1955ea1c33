#pragma once

// Precision-matrix estimation when the transform matrix is unknown:
// banded modified-Cholesky regression with cross-validated bandwidth,
// thresholded sample covariance with cross-validated threshold, and the
// one-sample reduction for groups with unequal covariances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "datekit/cov_models.hpp"
#include "datekit/linalg.hpp"
#include "datekit/rng.hpp"

namespace datekit {

struct KnownOmega {};
struct BandedCholesky {
    Index tau = 0;
};
struct ThresholdedCov {
    double m = 0.0;
};
using PrecisionMethod = std::variant<KnownOmega, BandedCholesky, ThresholdedCov>;

struct PrecisionEstimate {
    SymmetricMatrix omega;
    PrecisionMethod method = KnownOmega{};
    Vector diag;
    double repair_shift = 0.0;  // ridge added before inversion, 0 when none

    static PrecisionEstimate make(SymmetricMatrix omega, PrecisionMethod method, double shift = 0.0) {
        Vector d = omega.diagonal();
        return {std::move(omega), method, std::move(d), shift};
    }

    Index dim() const noexcept { return omega.dim(); }

    PrecisionEstimate scaled(double factor) const {
        return make(SymmetricMatrix(factor * omega.matrix()), method, repair_shift);
    }
};

inline PrecisionEstimate known_precision(SymmetricMatrix omega) {
    return PrecisionEstimate::make(std::move(omega), KnownOmega{});
}

inline std::string method_name(const PrecisionMethod& m) {
    if (std::holds_alternative<KnownOmega>(m)) return "known";
    if (std::holds_alternative<BandedCholesky>(m)) return "banded";
    return "threshcov";
}

struct CvConfig {
    int n_splits = 50;
    std::optional<double> split_fraction;  // default 1 - 1/log(n)
    std::vector<double> grid;              // empty selects the default grid
    SeededRng rng{0};
};

// ---------------------------------------------------------------------------
// Banded modified Cholesky

/// Row k of the unit lower-triangular factor regresses coordinate k on its
/// min(tau, k) predecessors; `coef[k]` holds those coefficients, oldest first.
struct BandedFactor {
    Index tau = 0;
    std::vector<Vector> coef;
    Vector resid_var;

    Index dim() const noexcept { return resid_var.size(); }
    Index first_predecessor(Index k) const { return k - coef[static_cast<std::size_t>(k)].size(); }

    /// (I - A)^T D^{-1} (I - A)
    Matrix precision() const {
        const Index p = dim();
        Matrix omega = Matrix::Zero(p, p);
        for (Index k = 0; k < p; ++k) {
            const Vector& a = coef[static_cast<std::size_t>(k)];
            const Index t = a.size();
            const Index lo = k - t;
            const double w = 1.0 / resid_var(k);
            // row k of I - A is e_k - a on [lo, k)
            Vector row(t + 1);
            row.head(t) = -a;
            row(t) = 1.0;
            omega.block(lo, lo, t + 1, t + 1).noalias() += w * row * row.transpose();
        }
        return omega;
    }

    /// (I - A)^{-1} D (I - A)^{-T}, built row by row from the regression
    /// recursion X_k = sum_j a_kj X_j + e_k.
    Matrix covariance() const {
        const Index p = dim();
        Matrix sigma = Matrix::Zero(p, p);
        for (Index k = 0; k < p; ++k) {
            const Vector& a = coef[static_cast<std::size_t>(k)];
            const Index t = a.size();
            const Index lo = k - t;
            if (t > 0) {
                // rows lo..k-1 are complete on columns 0..k-1 by now
                sigma.row(k).head(k).noalias() = a.transpose() * sigma.block(lo, 0, t, k);
                sigma(k, k) = a.dot(sigma.row(k).segment(lo, t).transpose()) + resid_var(k);
            } else {
                sigma(k, k) = resid_var(k);
            }
            sigma.col(k).head(k) = sigma.row(k).head(k).transpose();
        }
        return sigma;
    }
};

inline constexpr double kRegressionRidge = 1e-8;
inline constexpr double kResidualFloor = 1e-12;

/// Least-squares band regressions from a (centered, divisor-n) covariance.
inline BandedFactor banded_factor(const Matrix& s, Index tau) {
    const Index p = s.rows();
    BandedFactor f;
    f.tau = tau;
    f.coef.resize(static_cast<std::size_t>(p));
    f.resid_var.resize(p);
    for (Index k = 0; k < p; ++k) {
        const Index t = std::min(tau, k);
        const Index lo = k - t;
        Vector a = Vector::Zero(t);
        double d = s(k, k);
        if (t > 0) {
            Matrix gram = s.block(lo, lo, t, t);
            const Vector rhs = s.col(k).segment(lo, t);
            Eigen::LLT<Matrix> llt(gram);
            const double max_diag = gram.diagonal().maxCoeff();
            bool ok = llt.info() == Eigen::Success &&
                      llt.matrixLLT().diagonal().minCoeff() > std::sqrt(kPivotTolerance * max_diag);
            if (!ok) {
                gram.diagonal().array() += kRegressionRidge;
                llt.compute(gram);
            }
            a = llt.solve(rhs);
            d = s(k, k) - a.dot(rhs);
        }
        f.coef[static_cast<std::size_t>(k)] = std::move(a);
        f.resid_var(k) = std::max(d, kResidualFloor);
    }
    return f;
}

inline PrecisionEstimate banded_cholesky_precision(const Matrix& data, Index tau) {
    const Index n = data.rows();
    const Index p = data.cols();
    if (tau < 0 || tau > std::min(n - 2, p - 1)) {
        throw InvalidBand("banded_cholesky_precision: tau " + std::to_string(tau) + " outside [0, " +
                          std::to_string(std::min(n - 2, p - 1)) + "]");
    }
    const Matrix s = covariance(data, 0);
    const BandedFactor f = banded_factor(s, tau);
    return PrecisionEstimate::make(SymmetricMatrix(f.precision()), BandedCholesky{tau});
}

// ---------------------------------------------------------------------------
// Cross-validation splits

namespace detail {

inline Index first_split_size(Index n, const CvConfig& cfg) {
    const double frac = cfg.split_fraction.value_or(1.0 - 1.0 / std::log(static_cast<double>(n)));
    require(frac > 0.0 && frac < 1.0, "cross-validation: split fraction must lie in (0, 1)");
    auto n1 = static_cast<Index>(std::floor(static_cast<double>(n) * frac));
    return std::clamp<Index>(n1, 2, n - 2);
}

/// Row split number `l`: rows of the first subsample, then the second.
inline std::pair<Matrix, Matrix> random_split(const Matrix& data, Index n_first, SeededRng rng) {
    const Index n = data.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    Matrix a(n_first, data.cols());
    Matrix b(n - n_first, data.cols());
    for (Index i = 0; i < n_first; ++i) a.row(i) = data.row(order[static_cast<std::size_t>(i)]);
    for (Index i = n_first; i < n; ++i) b.row(i - n_first) = data.row(order[static_cast<std::size_t>(i)]);
    return {std::move(a), std::move(b)};
}

inline std::size_t argmin_mean(const std::vector<double>& total, const std::vector<int>& count, bool prefer_last) {
    std::size_t best = total.size();
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < total.size(); ++g) {
        if (count[g] == 0) continue;
        const double v = total[g] / count[g];
        if (v < best_val || (prefer_last && v == best_val)) {
            best_val = v;
            best = g;
        }
    }
    return best;
}

}  // namespace detail

inline std::vector<double> default_band_grid(Index n_first, Index p) {
    std::vector<double> grid;
    const Index hi = std::min<Index>({20, n_first - 2, p - 1});
    for (Index t = 0; t <= hi; ++t) grid.push_back(static_cast<double>(t));
    return grid;
}

/// Bandwidth minimizing the mean Frobenius distance between the banded
/// covariance fitted on one subsample and the sample covariance of the other.
/// Ties go to the smaller bandwidth.
inline Index select_band(const Matrix& data, const CvConfig& cfg) {
    const Index n = data.rows();
    const Index p = data.cols();
    detail::require(n >= 4, "select_band: need at least 4 rows");
    detail::require(cfg.n_splits >= 1, "select_band: n_splits must be positive");
    const Index n_first = detail::first_split_size(n, cfg);
    const std::vector<double> grid = cfg.grid.empty() ? default_band_grid(n_first, p) : cfg.grid;
    const Index max_tau = std::min(n_first - 2, p - 1);
    for (double t : grid) {
        if (t < 0 || t != std::floor(t) || static_cast<Index>(t) > max_tau)
            throw InvalidBand("select_band: grid value " + std::to_string(t) + " invalid for split size " +
                              std::to_string(n_first));
    }

    std::vector<double> total(grid.size(), 0.0);
    std::vector<int> count(grid.size(), 0);
    for (int l = 0; l < cfg.n_splits; ++l) {
        try {
            auto [first, second] = detail::random_split(data, n_first, cfg.rng.derive(static_cast<std::uint64_t>(l)));
            const Matrix s_fit = covariance(first, 0);
            const Matrix s_test = covariance(second, 1);
            std::vector<double> errs(grid.size());
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const BandedFactor f = banded_factor(s_fit, static_cast<Index>(grid[g]));
                errs[g] = (f.covariance() - s_test).norm();
                if (!std::isfinite(errs[g])) throw Error("select_band: non-finite loss");
            }
            for (std::size_t g = 0; g < grid.size(); ++g) {
                total[g] += errs[g];
                ++count[g];
            }
        } catch (const Error&) {
            // a failed split is skipped
        }
    }
    const std::size_t best = detail::argmin_mean(total, count, false);
    if (best == grid.size()) throw Error("select_band: every split failed");
    return static_cast<Index>(grid[best]);
}

// ---------------------------------------------------------------------------
// Thresholded covariance

/// Keeps s_ij when |s_ij| >= m; the diagonal is always kept.
inline Matrix threshold_matrix(const Matrix& s, double m) {
    Matrix out = s;
    for (Index j = 0; j < s.cols(); ++j)
        for (Index i = 0; i < s.rows(); ++i)
            if (i != j && std::abs(s(i, j)) < m) out(i, j) = 0.0;
    return out;
}

inline SymmetricMatrix thresholded_covariance(const Matrix& data, double m) {
    detail::require(m >= 0.0, "thresholded_covariance: m must be non-negative");
    return SymmetricMatrix(threshold_matrix(covariance(data, 1), m));
}

/// Quantile levels k/(count-1) of the off-diagonal |s_ij| (linear interpolation).
inline std::vector<double> default_threshold_grid(const Matrix& s, int count = 20) {
    std::vector<double> offdiag;
    const Index p = s.rows();
    offdiag.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
    for (Index j = 1; j < p; ++j)
        for (Index i = 0; i < j; ++i) offdiag.push_back(std::abs(s(i, j)));
    if (offdiag.empty()) return {0.0};
    std::sort(offdiag.begin(), offdiag.end());
    std::vector<double> grid;
    for (int k = 0; k < count; ++k) {
        const double pos = static_cast<double>(k) / (count - 1) * static_cast<double>(offdiag.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, offdiag.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        grid.push_back(offdiag[lo] + frac * (offdiag[hi] - offdiag[lo]));
    }
    return grid;
}

/// Threshold minimizing the mean squared Frobenius distance between the
/// thresholded covariance of one subsample and the sample covariance of the
/// other. Ties go to the larger threshold.
inline double select_threshold(const Matrix& data, const CvConfig& cfg) {
    const Index n = data.rows();
    detail::require(n >= 4, "select_threshold: need at least 4 rows");
    detail::require(cfg.n_splits >= 1, "select_threshold: n_splits must be positive");
    const Index n_first = detail::first_split_size(n, cfg);
    std::vector<double> grid = cfg.grid.empty() ? default_threshold_grid(covariance(data, 1)) : cfg.grid;
    std::sort(grid.begin(), grid.end());
    for (double m : grid) detail::require(m >= 0.0, "select_threshold: negative grid value");

    std::vector<double> total(grid.size(), 0.0);
    std::vector<int> count(grid.size(), 0);
    for (int l = 0; l < cfg.n_splits; ++l) {
        try {
            auto [first, second] = detail::random_split(data, n_first, cfg.rng.derive(static_cast<std::uint64_t>(l)));
            const Matrix s1 = covariance(first, 1);
            const Matrix s2 = covariance(second, 1);
            for (std::size_t g = 0; g < grid.size(); ++g) {
                total[g] += (threshold_matrix(s1, grid[g]) - s2).squaredNorm();
                ++count[g];
            }
        } catch (const Error&) {
        }
    }
    const std::size_t best = detail::argmin_mean(total, count, true);
    if (best == grid.size()) throw Error("select_threshold: every split failed");
    return grid[best];
}

/// Inverse of a symmetric estimate, shifting by (|lambda_min| + 1e-6) I first
/// when the input is not positive definite.
inline PrecisionEstimate invert_regularized(const SymmetricMatrix& sigma_hat,
                                            PrecisionMethod method = ThresholdedCov{}) {
    try {
        return PrecisionEstimate::make(spd_inverse(sigma_hat), method);
    } catch (const NotPositiveDefinite&) {
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_hat.matrix(), Eigen::EigenvaluesOnly);
    const double shift = std::abs(eig.eigenvalues().minCoeff()) + 1e-6;
    Matrix repaired = sigma_hat.matrix();
    repaired.diagonal().array() += shift;
    return PrecisionEstimate::make(spd_inverse(SymmetricMatrix(repaired)), method, shift);
}

// ---------------------------------------------------------------------------
// One-sample reduction

/// Y_i = X1_i - sqrt(n1/n2) X2_i + (1/sqrt(n1 n2)) sum_{j<=n1} X2_j - (1/n2) sum_l X2_l.
inline Matrix one_sample_transform(const Matrix& x1, const Matrix& x2) {
    const Index n1 = x1.rows();
    const Index n2 = x2.rows();
    detail::require_dims(x1.cols() == x2.cols(), "one_sample_transform: column counts differ");
    if (n1 > n2) throw SampleOrder("one_sample_transform: requires n1 <= n2 (swap the groups and negate delta)");
    detail::require(n1 >= 1, "one_sample_transform: empty group");
    const double a = std::sqrt(static_cast<double>(n1) / static_cast<double>(n2));
    const Eigen::RowVectorXd head_sum = x2.topRows(n1).colwise().sum();
    const Eigen::RowVectorXd full_sum = x2.colwise().sum();
    const Eigen::RowVectorXd shift = head_sum / std::sqrt(static_cast<double>(n1) * static_cast<double>(n2)) -
                                     full_sum / static_cast<double>(n2);
    Matrix y = x1 - a * x2.topRows(n1);
    y.rowwise() += shift;
    return y;
}

// ---------------------------------------------------------------------------
// Two-sample estimation paths

enum class OmegaSource { Known, Banded, ThresholdedCov };

/// Estimates the precision of a single sample with cross-validated tuning.
inline PrecisionEstimate estimate_single_sample(const Matrix& data, OmegaSource source, const CvConfig& cfg) {
    switch (source) {
        case OmegaSource::Banded: {
            const Index tau = select_band(data, cfg);
            return banded_cholesky_precision(data, tau);
        }
        case OmegaSource::ThresholdedCov: {
            const double m = select_threshold(data, cfg);
            return invert_regularized(thresholded_covariance(data, m), ThresholdedCov{m});
        }
        case OmegaSource::Known:
            break;
    }
    throw InvalidDomain("estimate_single_sample: a known precision cannot be estimated");
}

/// Estimates the pooled transform matrix. With a shared covariance the
/// group-centered rows are stacked; otherwise the one-sample reduction is
/// applied and the estimate rescaled by (n_a + n_b) / n_b.
inline PrecisionEstimate estimate_precision(const TwoSampleData& data, OmegaSource source, const CvConfig& cfg,
                                            bool shared_covariance = true) {
    detail::require_dims(data.x1.cols() == data.x2.cols(), "estimate_precision: column counts differ");
    if (shared_covariance) {
        Matrix stacked(data.n1() + data.n2(), data.p());
        stacked << center_columns(data.x1), center_columns(data.x2);
        return estimate_single_sample(stacked, source, cfg);
    }
    const bool swap = data.n1() > data.n2();
    const Matrix& first = swap ? data.x2 : data.x1;
    const Matrix& second = swap ? data.x1 : data.x2;
    const Matrix y = one_sample_transform(first, second);
    const double factor = static_cast<double>(first.rows() + second.rows()) / static_cast<double>(second.rows());
    return estimate_single_sample(y, source, cfg).scaled(factor);
}

}  // namespace datekit
