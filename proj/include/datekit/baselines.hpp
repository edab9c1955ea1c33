#pragma once

// Benjamini-Hochberg over per-coordinate pooled-variance two-sample t tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "datekit/linalg.hpp"

namespace datekit {

namespace detail {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 100000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b); y = 1 - x is passed separately so
/// callers can supply it without cancellation.
inline double incomplete_beta(double a, double b, double x, double y) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, y) / b;
}

/// Lower tail of Student's t with df degrees of freedom.
inline double t_cdf(double t, double df) {
    detail::require(df > 0.0, "t_cdf: df must be positive");
    if (std::isnan(t)) return t;
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    if (t == 0.0) return 0.5;
    const double t2 = t * t;
    const double x = df / (df + t2);
    const double y = t2 / (df + t2);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x, y);  // P(T > |t|)
    return t > 0 ? 1.0 - tail : tail;
}

/// Two-sided p-value 2 P(T > |t|), computed without subtracting from 1.
inline double t_two_sided_p(double t, double df) {
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    const double t2 = t * t;
    return std::min(1.0, incomplete_beta(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2)));
}

struct TestResult {
    Vector t_stats;
    Vector p_values;
    double df = 0.0;
    std::vector<Index> zero_variance;  // coordinates with pooled variance below 1e-300
};

inline constexpr double kZeroVariance = 1e-300;

/// Equal-variance t test per coordinate, df = n1 + n2 - 2.
inline TestResult two_sample_t(const Matrix& x1, const Matrix& x2) {
    const Index n1 = x1.rows();
    const Index n2 = x2.rows();
    detail::require(n1 >= 2 && n2 >= 2, "two_sample_t: each group needs at least 2 rows");
    detail::require_dims(x1.cols() == x2.cols(), "two_sample_t: column counts differ");
    const Index p = x1.cols();
    TestResult res;
    res.df = static_cast<double>(n1 + n2 - 2);
    res.t_stats.resize(p);
    res.p_values.resize(p);
    const Vector m1 = column_means(x1);
    const Vector m2 = column_means(x2);
    const Vector ss1 = (x1.rowwise() - m1.transpose()).colwise().squaredNorm().transpose();
    const Vector ss2 = (x2.rowwise() - m2.transpose()).colwise().squaredNorm().transpose();
    const double scale = 1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2);
    for (Index k = 0; k < p; ++k) {
        const double pooled = (ss1(k) + ss2(k)) / res.df;
        const double diff = m1(k) - m2(k);
        if (pooled < kZeroVariance) {
            res.zero_variance.push_back(k);
            if (diff == 0.0) {
                res.t_stats(k) = 0.0;
                res.p_values(k) = 1.0;
            } else {
                res.t_stats(k) = std::copysign(std::numeric_limits<double>::infinity(), diff);
                res.p_values(k) = 0.0;
            }
            continue;
        }
        res.t_stats(k) = diff / std::sqrt(pooled * scale);
        res.p_values(k) = t_two_sided_p(res.t_stats(k), res.df);
    }
    return res;
}

/// Step-up selection: with P_(1) <= ... <= P_(p) and
/// m = max{k : P_(k) <= k alpha / p}, select every i with P_i <= P_(m).
/// Returns sorted indices.
inline std::vector<Index> bh_select(const Vector& p_values, double alpha) {
    detail::require(alpha > 0.0 && alpha < 1.0, "bh_select: alpha must lie in (0, 1)");
    const Index p = p_values.size();
    std::vector<double> sorted(p_values.data(), p_values.data() + p);
    std::sort(sorted.begin(), sorted.end());
    Index m = 0;
    for (Index k = p; k >= 1; --k) {
        if (sorted[static_cast<std::size_t>(k - 1)] <= static_cast<double>(k) * alpha / static_cast<double>(p)) {
            m = k;
            break;
        }
    }
    std::vector<Index> out;
    if (m == 0) return out;
    const double cutoff = sorted[static_cast<std::size_t>(m - 1)];
    for (Index i = 0; i < p; ++i)
        if (p_values(i) <= cutoff) out.push_back(i);
    return out;
}

}  // namespace datekit
