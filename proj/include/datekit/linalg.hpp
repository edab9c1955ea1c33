#pragma once

// Dense symmetric linear algebra on top of Eigen storage: Cholesky with an
// explicit pivot tolerance, SPD inversion, precision-diagonal bounds and
// multivariate normal sampling.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "datekit/error.hpp"
#include "datekit/rng.hpp"

namespace datekit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Square symmetric matrix. Construction checks symmetry and then stores the
/// exactly symmetrized average, so (i,j) and (j,i) always compare equal.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;

    explicit SymmetricMatrix(const Matrix& m, double rel_tol = 1e-9) {
        detail::require_dims(m.rows() == m.cols(), "SymmetricMatrix: matrix is not square");
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        const double asym = m.rows() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
        if (!(asym <= rel_tol * scale)) {
            throw InvalidDomain("SymmetricMatrix: matrix is not symmetric (max asymmetry " +
                                std::to_string(asym) + ")");
        }
        values_ = 0.5 * (m + m.transpose());
    }

    static SymmetricMatrix identity(Index p) { return SymmetricMatrix(Matrix::Identity(p, p)); }

    static SymmetricMatrix from_row_major(Index p, std::span<const double> values) {
        detail::require_dims(static_cast<Index>(values.size()) == p * p,
                             "SymmetricMatrix: expected p*p values");
        Matrix m(p, p);
        for (Index i = 0; i < p; ++i)
            for (Index j = 0; j < p; ++j) m(i, j) = values[static_cast<std::size_t>(i * p + j)];
        return SymmetricMatrix(m);
    }

    Index dim() const noexcept { return values_.rows(); }
    double operator()(Index i, Index j) const { return values_(i, j); }
    const Matrix& matrix() const noexcept { return values_; }
    Vector diagonal() const { return values_.diagonal(); }

    std::vector<double> row_major() const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(dim() * dim()));
        for (Index i = 0; i < dim(); ++i)
            for (Index j = 0; j < dim(); ++j) out.push_back(values_(i, j));
        return out;
    }

    /// Principal submatrix on the given (ordered) indices.
    SymmetricMatrix principal(std::span<const Index> idx) const {
        const auto m = static_cast<Index>(idx.size());
        Matrix sub(m, m);
        for (Index a = 0; a < m; ++a)
            for (Index b = 0; b < m; ++b) sub(a, b) = values_(idx[a], idx[b]);
        return SymmetricMatrix(sub);
    }

private:
    Matrix values_;
};

/// Lower-triangular Cholesky factor.
class LowerTriangular {
public:
    LowerTriangular() = default;
    explicit LowerTriangular(Matrix l) : values_(std::move(l)) {
        values_.triangularView<Eigen::StrictlyUpper>().setZero();
    }

    Index dim() const noexcept { return values_.rows(); }
    const Matrix& matrix() const noexcept { return values_; }
    double operator()(Index i, Index j) const { return values_(i, j); }

    Matrix reconstruct() const { return values_ * values_.transpose(); }

    /// Solves (L L^T) x = b.
    Vector solve(const Vector& b) const {
        Vector y = values_.triangularView<Eigen::Lower>().solve(b);
        return values_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

private:
    Matrix values_;
};

struct OmegaBounds {
    double omega_lower = 1.0;
    double omega_bar = 1.0;
};

inline constexpr double kPivotTolerance = 1e-12;

/// Fails with NotPositiveDefinite when a pivot drops to 1e-12 times the
/// largest diagonal entry or below.
inline LowerTriangular cholesky(const SymmetricMatrix& a) {
    const Index p = a.dim();
    const Matrix& m = a.matrix();
    Matrix l = Matrix::Zero(p, p);
    if (p == 0) return LowerTriangular(l);
    const double max_diag = m.diagonal().maxCoeff();
    if (!(max_diag > 0.0)) throw NotPositiveDefinite("cholesky: non-positive diagonal");
    const double floor = kPivotTolerance * max_diag;
    for (Index j = 0; j < p; ++j) {
        const double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
        if (!(pivot > floor)) {
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) + " at index " +
                                      std::to_string(j));
        }
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        const Index rest = p - j - 1;
        if (rest > 0) {
            l.col(j).tail(rest) =
                (m.col(j).tail(rest) - l.block(j + 1, 0, rest, j) * l.row(j).head(j).transpose()) / ljj;
        }
    }
    return LowerTriangular(std::move(l));
}

inline SymmetricMatrix inverse_from_cholesky(const LowerTriangular& l) {
    const Index p = l.dim();
    Matrix linv = l.matrix().triangularView<Eigen::Lower>().solve(Matrix::Identity(p, p));
    Matrix inv = linv.transpose() * linv;
    return SymmetricMatrix(inv, 1e-6);
}

inline SymmetricMatrix spd_inverse(const SymmetricMatrix& a) { return inverse_from_cholesky(cholesky(a)); }

inline bool is_positive_definite(const SymmetricMatrix& a) {
    try {
        (void)cholesky(a);
        return true;
    } catch (const NotPositiveDefinite&) {
        return false;
    }
}

inline OmegaBounds omega_bounds(const SymmetricMatrix& omega) {
    detail::require(omega.dim() > 0, "omega_bounds: empty matrix");
    const Vector d = omega.diagonal();
    return {d.minCoeff(), d.maxCoeff()};
}

/// n draws of N(mean, L L^T), one per row. Normals are consumed row by row.
inline Matrix mvn_sample(const Vector& mean, const LowerTriangular& chol_sigma, Index n, SeededRng& rng) {
    const Index p = mean.size();
    detail::require_dims(chol_sigma.dim() == p, "mvn_sample: mean and factor dimensions differ");
    detail::require(n >= 0, "mvn_sample: negative sample size");
    Matrix z(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    Matrix x = z * chol_sigma.matrix().transpose().triangularView<Eigen::Upper>();
    x.rowwise() += mean.transpose();
    return x;
}

inline Vector column_means(const Matrix& data) {
    detail::require(data.rows() > 0, "column_means: no rows");
    return data.colwise().mean().transpose();
}

inline Matrix center_columns(const Matrix& data) {
    Matrix c = data;
    c.rowwise() -= data.colwise().mean();
    return c;
}

/// Sample covariance of the rows; divisor n - ddof.
inline Matrix covariance(const Matrix& data, int ddof = 1) {
    const Index n = data.rows();
    detail::require(n > ddof, "covariance: too few rows");
    const Matrix c = center_columns(data);
    Matrix s = (c.transpose() * c) / static_cast<double>(n - ddof);
    return 0.5 * (s + s.transpose());
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace datekit
