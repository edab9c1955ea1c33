#pragma once

// Covariance models used in the simulation study, the pooled transform
// matrix, and synthetic two-sample datasets with planted sparse signals.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "datekit/linalg.hpp"
#include "datekit/rng.hpp"

namespace datekit {

/// (a) sigma_ij = rho^|i-j|
struct Ar1 {
    double rho = 0.6;
};

/// (b) unit diagonal, within_corr inside consecutive blocks of block_size;
/// coordinates past the last full block are uncorrelated.
struct BlockDiag {
    double within_corr = 0.6;
    Index block_size = 2;
};

/// (c) d1 on the first off-diagonal, d2 on the second.
struct PentaDiag {
    double d1 = 0.5;
    double d2 = 0.2;
};

/// (d) standardized Gamma Gamma^T + I, Gamma with one nonzero per row of
/// magnitude Unif(mag_low, mag_high) and random sign.
struct RandomSparse {
    double mag_low = 1.0;
    double mag_high = 2.0;
};

using CovarianceKind = std::variant<Ar1, BlockDiag, PentaDiag, RandomSparse>;

struct CovarianceSpec {
    CovarianceKind kind = Ar1{};
    Index p = 0;
};

inline std::string model_name(const CovarianceKind& kind) {
    struct Visitor {
        std::string operator()(const Ar1&) const { return "ar1"; }
        std::string operator()(const BlockDiag&) const { return "block"; }
        std::string operator()(const PentaDiag&) const { return "penta"; }
        std::string operator()(const RandomSparse&) const { return "sparse"; }
    };
    return std::visit(Visitor{}, kind);
}

/// A covariance together with its Cholesky factor.
struct Covariance {
    SymmetricMatrix sigma;
    LowerTriangular chol;

    static Covariance factor(SymmetricMatrix s) {
        LowerTriangular l = cholesky(s);
        return {std::move(s), std::move(l)};
    }
};

namespace detail {

inline Matrix ar1_matrix(double rho, Index p) {
    Matrix m(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) m(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    return m;
}

inline Matrix block_matrix(const BlockDiag& b, Index p) {
    require(b.block_size >= 1, "BlockDiag: block_size must be positive");
    Matrix m = Matrix::Identity(p, p);
    const Index full = (p / b.block_size) * b.block_size;
    for (Index i = 0; i < full; ++i)
        for (Index j = 0; j < full; ++j)
            if (i != j && i / b.block_size == j / b.block_size) m(i, j) = b.within_corr;
    return m;
}

inline Matrix penta_matrix(const PentaDiag& c, Index p) {
    Matrix m = Matrix::Identity(p, p);
    for (Index i = 0; i < p; ++i) {
        if (i + 1 < p) m(i, i + 1) = m(i + 1, i) = c.d1;
        if (i + 2 < p) m(i, i + 2) = m(i + 2, i) = c.d2;
    }
    return m;
}

inline Matrix random_sparse_matrix(const RandomSparse& d, Index p, SeededRng& rng) {
    require(d.mag_low <= d.mag_high, "RandomSparse: mag_low exceeds mag_high");
    std::vector<Index> column(static_cast<std::size_t>(p));
    Vector value(p);
    for (Index i = 0; i < p; ++i) {
        column[static_cast<std::size_t>(i)] = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
        const double mag = rng.uniform(d.mag_low, d.mag_high);
        value(i) = rng.coin() ? mag : -mag;
    }
    // (Gamma Gamma^T)_ij = g_i g_j when rows i and j share their nonzero column.
    Matrix m = Matrix::Identity(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j)
            if (column[static_cast<std::size_t>(i)] == column[static_cast<std::size_t>(j)])
                m(i, j) += value(i) * value(j);
    const Vector scale = m.diagonal().cwiseSqrt().cwiseInverse();
    m = scale.asDiagonal() * m * scale.asDiagonal();
    m.diagonal().setOnes();
    return m;
}

}  // namespace detail

/// Unit-diagonal SPD covariance for the given model. Only RandomSparse
/// consumes the rng.
inline SymmetricMatrix build_covariance(const CovarianceSpec& spec, SeededRng& rng) {
    detail::require(spec.p >= 1, "build_covariance: p must be positive");
    const Index p = spec.p;
    Matrix m;
    if (const auto* a = std::get_if<Ar1>(&spec.kind)) {
        if (!(std::abs(a->rho) < 1.0)) throw NotPositiveDefinite("AR(1): |rho| must be below 1");
        m = detail::ar1_matrix(a->rho, p);
    } else if (const auto* b = std::get_if<BlockDiag>(&spec.kind)) {
        m = detail::block_matrix(*b, p);
    } else if (const auto* c = std::get_if<PentaDiag>(&spec.kind)) {
        m = detail::penta_matrix(*c, p);
    } else {
        m = detail::random_sparse_matrix(std::get<RandomSparse>(spec.kind), p, rng);
    }
    SymmetricMatrix sigma(m);
    (void)cholesky(sigma);  // throws NotPositiveDefinite
    return sigma;
}

/// Tridiagonal inverse of the AR(1) correlation matrix.
inline SymmetricMatrix ar1_precision_exact(double rho, Index p) {
    detail::require(std::abs(rho) < 1.0, "ar1_precision_exact: |rho| must be below 1");
    detail::require(p >= 1, "ar1_precision_exact: p must be positive");
    const double denom = 1.0 - rho * rho;
    Matrix m = Matrix::Zero(p, p);
    for (Index i = 0; i < p; ++i) {
        const bool boundary = (i == 0 || i == p - 1);
        m(i, i) = boundary ? 1.0 / denom : (1.0 + rho * rho) / denom;
        if (i + 1 < p) m(i, i + 1) = m(i + 1, i) = -rho / denom;
    }
    if (p == 1) m(0, 0) = 1.0;
    return SymmetricMatrix(m);
}

/// Inverse of (n2 Sigma1 + n1 Sigma2) / (n1 + n2).
inline SymmetricMatrix pooled_omega(const SymmetricMatrix& sigma1, const SymmetricMatrix& sigma2, Index n1,
                                    Index n2) {
    detail::require_dims(sigma1.dim() == sigma2.dim(), "pooled_omega: dimension mismatch");
    detail::require(n1 >= 1 && n2 >= 1, "pooled_omega: sample sizes must be positive");
    const double total = static_cast<double>(n1 + n2);
    const Matrix pooled = (static_cast<double>(n2) / total) * sigma1.matrix() +
                          (static_cast<double>(n1) / total) * sigma2.matrix();
    return spd_inverse(SymmetricMatrix(pooled));
}

inline double effective_n(Index n1, Index n2) {
    return static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
}

struct SignalSpec {
    double beta = 0.6;
    double r = 1.0;
    // Magnitudes are drawn from [sqrt(low * r log p / n), sqrt(high * r log p / n)].
    double mag_low = 1.0;
    double mag_high = 3.0;
};

/// Number of planted signals, [p^(1 - beta)] rounded to the nearest integer.
inline Index signal_count(Index p, double beta) {
    return static_cast<Index>(std::llround(std::pow(static_cast<double>(p), 1.0 - beta)));
}

struct GenerationRecord {
    CovarianceSpec cov;
    SignalSpec signal;
    std::uint64_t seed = 0;
};

struct TwoSampleData {
    Matrix x1;
    Matrix x2;
    std::optional<Vector> truth;  // delta = mu1 - mu2
    std::optional<GenerationRecord> meta;

    Index p() const noexcept { return x1.cols(); }
    Index n1() const noexcept { return x1.rows(); }
    Index n2() const noexcept { return x2.rows(); }
};

/// Draws the dataset for an already factored covariance. Child streams of
/// `rng`: 10 for signal placement, 11 for group 1, 12 for group 2.
inline TwoSampleData generate_dataset(const Covariance& cov, const SignalSpec& sig, Index n1, Index n2,
                                      const SeededRng& rng) {
    const Index p = cov.sigma.dim();
    detail::require(n1 >= 2 && n2 >= 2, "generate_dataset: n1 and n2 must be at least 2");
    detail::require(sig.beta > 0.0 && sig.beta < 1.0, "generate_dataset: beta must lie in (0, 1)");
    detail::require(sig.r > 0.0, "generate_dataset: r must be positive");
    detail::require(0.0 < sig.mag_low && sig.mag_low <= sig.mag_high, "generate_dataset: bad magnitude interval");
    const Index k = signal_count(p, sig.beta);
    detail::require(k >= 1 && k <= p, "generate_dataset: signal count must lie in [1, p]");

    SeededRng placement = rng.derive(10);
    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = 0; i < k; ++i) {  // partial Fisher-Yates
        const auto j = i + static_cast<Index>(placement.below(static_cast<std::uint64_t>(p - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const double n = effective_n(n1, n2);
    const double base = sig.r * std::log(static_cast<double>(p)) / n;
    const double lo = std::sqrt(sig.mag_low * base);
    const double hi = std::sqrt(sig.mag_high * base);

    Vector mu2 = Vector::Zero(p);
    for (Index i = 0; i < k; ++i) {
        const double mag = placement.uniform(lo, hi);
        mu2(order[static_cast<std::size_t>(i)]) = placement.coin() ? mag : -mag;
    }

    TwoSampleData data;
    SeededRng g1 = rng.derive(11);
    SeededRng g2 = rng.derive(12);
    data.x1 = mvn_sample(Vector::Zero(p), cov.chol, n1, g1);
    data.x2 = mvn_sample(mu2, cov.chol, n2, g2);
    data.truth = -mu2;
    return data;
}

/// Builds the covariance from child stream 0 of `rng` and the data from
/// child stream 1.
inline TwoSampleData generate_dataset(const CovarianceSpec& cov_spec, const SignalSpec& sig, Index n1, Index n2,
                                      const SeededRng& rng) {
    SeededRng cov_rng = rng.derive(0);
    const Covariance cov = Covariance::factor(build_covariance(cov_spec, cov_rng));
    TwoSampleData data = generate_dataset(cov, sig, n1, n2, rng.derive(1));
    data.meta = GenerationRecord{cov_spec, sig, rng.seed()};
    return data;
}

/// Rebuilds the covariance a dataset produced by the spec overload of
/// generate_dataset was drawn from.
inline SymmetricMatrix regenerate_covariance(const GenerationRecord& meta) {
    SeededRng cov_rng = SeededRng(meta.seed).derive(0);
    return build_covariance(meta.cov, cov_rng);
}

}  // namespace datekit
