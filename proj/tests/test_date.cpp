#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "datekit/cov_models.hpp"
#include "datekit/date.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace datekit;

namespace {

PrecisionEstimate identity_omega(Index p) { return known_precision(SymmetricMatrix::identity(p)); }

}  // namespace

TEST(TransformData, IdentityAndScaling) {
    SeededRng rng(1);
    Matrix x(4, 3);
    for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    EXPECT_EQ(transform_data(x, identity_omega(3)), x);
    const PrecisionEstimate two = known_precision(SymmetricMatrix(2.0 * Matrix::Identity(3, 3)));
    EXPECT_EQ(transform_data(x, two), 2.0 * x);
}

TEST(ComputeStatistics, HandArithmetic) {
    const Matrix z1 = Matrix::Constant(60, 1, 0.5);
    const Matrix z2 = Matrix::Zero(60, 1);
    const Vector t = compute_statistics(z1, z2, Vector::Constant(1, 2.0));
    EXPECT_DOUBLE_EQ(t(0), 3.75);
}

TEST(ComputeStatistics, IdentityReducesToRawStatistic) {
    SeededRng rng(2);
    Matrix x1(10, 4), x2(15, 4);
    for (Index i = 0; i < x1.size(); ++i) x1(i) = rng.normal();
    for (Index i = 0; i < x2.size(); ++i) x2(i) = rng.normal();
    const Vector t = compute_statistics(x1, x2, Vector::Ones(4));
    const double n = 10.0 * 15.0 / 25.0;
    const Vector diff = column_means(x1) - column_means(x2);
    for (Index k = 0; k < 4; ++k) EXPECT_NEAR(t(k), n * diff(k) * diff(k), 1e-12);
}

TEST(ThresholdSurvivors, HandExample) {
    Vector t(3);
    t << 5.0, 4.0, 4.7;
    EXPECT_EQ(threshold_survivors(t, 0.5, 100), (std::vector<Index>{0, 2}));
}

TEST(ThresholdSurvivors, ZeroAndLargeCutoffs) {
    Vector t(4);
    t << 0.0, 1.0, 2.5, 9.0;
    EXPECT_EQ(threshold_survivors(t, 0.0, 50).size(), 4u);
    EXPECT_TRUE(threshold_survivors(t, 9.0 / (2.0 * std::log(50.0)) + 1e-6, 50).empty());
}

TEST(ThresholdSurvivors, MonotoneInS) {
    SeededRng rng(3);
    Vector t(300);
    for (Index k = 0; k < 300; ++k) t(k) = std::pow(rng.normal(), 2) * 3.0;
    for (double s1 = 0.0; s1 < 1.5; s1 += 0.1) {
        const auto big = threshold_survivors(t, s1, 300);
        const auto small = threshold_survivors(t, s1 + 0.05, 300);
        EXPECT_TRUE(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    }
}

TEST(RegularizePrecision, IdentityHasNoEdges) {
    EXPECT_EQ(regularize_precision(SymmetricMatrix::identity(40), 40).edge_count(), 0u);
}

TEST(RegularizePrecision, Ar1ChainRetained) {
    const Adjacency g = regularize_precision(ar1_precision_exact(0.6, 500), 500);
    EXPECT_EQ(g.edge_count(), 499u);
    EXPECT_TRUE(g.connected(10, 11));
    EXPECT_FALSE(g.connected(10, 12));
}

TEST(RegularizePrecision, SmallEntryRemoved) {
    Matrix m = Matrix::Identity(500, 500);
    m(3, 4) = m(4, 3) = 0.1;
    m(7, 9) = m(9, 7) = 0.17;
    const Adjacency g = regularize_precision(SymmetricMatrix(m), 500);
    EXPECT_FALSE(g.connected(3, 4));
    EXPECT_TRUE(g.connected(7, 9));
}

TEST(ConnectedComponents, Examples) {
    Adjacency none(5);
    none.finalize();
    EXPECT_EQ(connected_components({1, 3, 4}, none).size(), 3u);

    Adjacency chain(5);
    chain.add_edge(1, 2);
    chain.add_edge(2, 3);
    chain.finalize();
    const auto all = connected_components({1, 2, 3}, chain);
    ASSERT_EQ(all.size(), 1u);
    EXPECT_EQ(all[0], (std::vector<Index>{1, 2, 3}));
    const auto split = connected_components({1, 3}, chain);
    ASSERT_EQ(split.size(), 2u);
    EXPECT_EQ(split[0], (std::vector<Index>{1}));
    EXPECT_EQ(split[1], (std::vector<Index>{3}));
}

TEST(ConnectedComponents, PartitionProperty) {
    SeededRng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Index p = 60;
        Adjacency g(p);
        for (int e = 0; e < 70; ++e) {
            const auto i = static_cast<Index>(rng.below(p));
            const auto j = static_cast<Index>(rng.below(p));
            if (i != j) g.add_edge(i, j);
        }
        g.finalize();
        std::vector<Index> surv;
        for (Index k = 0; k < p; ++k)
            if (rng.coin()) surv.push_back(k);
        const auto comps = connected_components(surv, g);
        std::vector<int> label(static_cast<std::size_t>(p), -1);
        std::size_t covered = 0;
        for (std::size_t c = 0; c < comps.size(); ++c) {
            for (Index k : comps[c]) {
                EXPECT_EQ(label[static_cast<std::size_t>(k)], -1);
                label[static_cast<std::size_t>(k)] = static_cast<int>(c);
                ++covered;
            }
        }
        EXPECT_EQ(covered, surv.size());
        for (Index i : surv) {
            EXPECT_GE(label[static_cast<std::size_t>(i)], 0);
            for (Index j : g.neighbors(i))
                if (label[static_cast<std::size_t>(j)] >= 0)
                    EXPECT_EQ(label[static_cast<std::size_t>(i)], label[static_cast<std::size_t>(j)]);
        }
    }
}

TEST(ExciseComponent, ZeroDataGivesZero) {
    const std::vector<Index> comp{0, 1, 2};
    const auto res = excise_component(comp, ar1_precision_exact(0.6, 3), Vector::Zero(3), 30.0, 1.0, 0.5);
    EXPECT_EQ(res.signs, (std::vector<int>{0, 0, 0}));
    EXPECT_TRUE(res.exhaustive);
}

TEST(ExciseComponent, SingleCoordinateHandComparison) {
    const double w = 2.125, delta = 0.5, n = 30.0, lambda = 0.1;
    const SymmetricMatrix a(Matrix::Constant(1, 1, w));
    const std::vector<Index> comp{0};
    // values: 0 -> n w delta^2, + -> lambda^2, - -> 4 n w delta^2 + lambda^2
    const auto res = excise_component(comp, a, Vector::Constant(1, w * delta), n, lambda, delta);
    EXPECT_EQ(res.signs, std::vector<int>{1});
    EXPECT_NEAR(res.objective, lambda * lambda, 1e-9);
    const auto neg = excise_component(comp, a, Vector::Constant(1, -w * delta), n, lambda, delta);
    EXPECT_EQ(neg.signs, std::vector<int>{-1});
}

TEST(ExciseComponent, HugePenaltyGivesZero) {
    SeededRng rng(5);
    const Matrix a = fixtures::to_unit_diagonal(fixtures::random_spd(5, rng, 0.5));
    Vector z(5);
    for (Index i = 0; i < 5; ++i) z(i) = 3.0 * rng.normal();
    const std::vector<Index> comp{0, 1, 2, 3, 4};
    EXPECT_EQ(excise_component(comp, SymmetricMatrix(a), z, 30.0, 1e9, 0.5).signs, std::vector<int>(5, 0));
}

TEST(ExciseComponent, TieBreaksTowardFewerNonzeros) {
    // With delta = 0 and lambda = 0 every candidate ties.
    const std::vector<Index> comp{0, 1};
    const auto res = excise_component(comp, SymmetricMatrix::identity(2), Vector::Ones(2), 10.0, 0.0, 0.0);
    EXPECT_EQ(res.signs, (std::vector<int>{0, 0}));
}

TEST(ExciseComponent, MatchesBruteForceOracle) {
    SeededRng rng(6);
    for (int trial = 0; trial < 500; ++trial) {
        const Index m = 1 + static_cast<Index>(rng.below(8));
        const Index p = m + 3;
        const Matrix full = fixtures::to_unit_diagonal(fixtures::random_spd(p, rng, 0.3));
        std::vector<Index> comp(static_cast<std::size_t>(p));
        std::iota(comp.begin(), comp.end(), Index{0});
        for (Index i = p - 1; i > 0; --i) std::swap(comp[i], comp[rng.below(static_cast<std::uint64_t>(i + 1))]);
        comp.resize(static_cast<std::size_t>(m));
        std::sort(comp.begin(), comp.end());
        Matrix a(m, m);
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j) a(i, j) = full(comp[i], comp[j]);
        const double n = rng.uniform(10.0, 100.0);
        const double delta = rng.uniform(0.1, 1.0);
        const double lambda = rng.uniform(0.0, 5.0);
        Vector truth(m);
        for (Index i = 0; i < m; ++i) truth(i) = delta * static_cast<double>(static_cast<int>(rng.below(3)) - 1);
        Vector z = a * truth;
        for (Index i = 0; i < m; ++i) z(i) += rng.normal() / std::sqrt(n);
        const auto got = excise_component(comp, SymmetricMatrix(full), z, n, lambda, delta);
        EXPECT_EQ(got.signs, fixtures::brute_force_excision(a, z, n, lambda, delta)) << "trial " << trial;
    }
}

TEST(ExciseComponent, OversizeUsesCoordinateDescent) {
    const Index m = 14;
    const SymmetricMatrix omega = ar1_precision_exact(0.3, m);
    std::vector<Index> comp(static_cast<std::size_t>(m));
    std::iota(comp.begin(), comp.end(), Index{0});
    Vector truth = Vector::Zero(m);
    truth(3) = 0.5;
    truth(9) = -0.5;
    const Vector z = omega.matrix() * truth;
    const auto res = excise_component(comp, omega, z, 60.0, 1.0, 0.5, 12);
    EXPECT_FALSE(res.exhaustive);
    std::vector<int> want(static_cast<std::size_t>(m), 0);
    want[3] = 1;
    want[9] = -1;
    EXPECT_EQ(res.signs, want);
}

TEST(ExciseComponent, IndefiniteBlockIsRepaired) {
    Matrix a(2, 2);
    a << 1, 2, 2, 1;
    const std::vector<Index> comp{0, 1};
    const auto res = excise_component(comp, SymmetricMatrix(a), Vector::Zero(2), 10.0, 1.0, 0.5);
    EXPECT_TRUE(res.ridge_repaired);
    EXPECT_EQ(res.signs, (std::vector<int>{0, 0}));
}

TEST(OracleTuning, LambdaCapVanishesOnBoundary) {
    const TuningParams t = oracle_tuning(0.64, 0.4, 1.6, 500, 30.0, 0.05);
    EXPECT_NEAR(t.lambda_cap, 0.0, 1e-15);
}

TEST(OracleTuning, DeltaDateValue) {
    const TuningParams t = oracle_tuning(0.6, 0.8, 1.5625, 500, 30.0, 0.05);
    EXPECT_NEAR(t.delta_date, 0.5757, 5e-5);
    EXPECT_NEAR(t.delta_date, std::sqrt(2.0 * 0.8 * std::log(500.0) / 30.0), 1e-15);
}

TEST(OracleTuning, MatchesFormulaEvaluation) {
    const double beta = 0.6, r = 1.0, w = 1.5625, alpha = 0.05;
    const Index p = 500;
    const double lp = std::log(500.0);
    const double cap = w * r + beta - 2.0 * std::sqrt(w * r * beta);
    const double spread = w * r + beta - cap;
    const double ups = 4.0 * w * r / spread *
                       (0.5 * std::log(lp) + std::log(alpha * std::sqrt(std::numbers::pi) * spread /
                                                      (2.0 * std::sqrt(w * r) * (1.0 - alpha))));
    const TuningParams t = oracle_tuning(beta, r, w, p, 30.0, alpha);
    EXPECT_NEAR(t.lambda_cap, cap, 1e-12);
    EXPECT_NEAR(t.upsilon, ups, 1e-12);
    EXPECT_NEAR(t.lambda_date, std::sqrt(std::max(0.0, 2.0 * (beta - cap) * lp - ups)), 1e-12);
}

TEST(OracleTuning, RejectsOutOfDomain) {
    EXPECT_THROW(oracle_tuning(0.4, 1.0, 1.5, 500, 30.0, 0.05), InvalidDomain);
    EXPECT_THROW(oracle_tuning(0.6, 0.0, 1.5, 500, 30.0, 0.05), InvalidDomain);
    EXPECT_THROW(oracle_tuning(0.6, 1.0, 0.5, 500, 30.0, 0.05), InvalidDomain);
    EXPECT_THROW(oracle_tuning(0.6, 1.0, 1.5, 500, 30.0, 1.0), InvalidDomain);
}

TEST(EstimateTuning, RecoversSparsityAndStrength) {
    const Index p = 1024;  // p^0.4 = 16 exactly
    const double r = 0.9, lp = std::log(1024.0);
    Vector omega_diag = Vector::Constant(p, 1.8);
    Vector t = Vector::Zero(p);
    for (Index k = 0; k < 16; ++k) t(k * 7) = 1.0 + 2.0 * r * omega_diag(k * 7) * lp;
    const TuningParams est = estimate_tuning(t, omega_diag, 0.8, p, 30.0, 0.05);
    EXPECT_NEAR(est.beta_hat, 0.6, 1e-12);
    EXPECT_NEAR(est.r_hat, r, 1e-12);
    EXPECT_DOUBLE_EQ(est.omega_lower_hat, 1.8);
    EXPECT_TRUE(est.clamps.empty());
}

TEST(EstimateTuning, NoExceedancesThrows) {
    Vector t = Vector::Constant(100, 3.0);
    EXPECT_THROW(estimate_tuning(t, Vector::Ones(100), 3.0 / (2.0 * std::log(100.0)) + 0.01, 100, 30.0, 0.05),
                 NoExceedances);
}

TEST(EstimateTuning, ClampsAreReported) {
    Vector t = Vector::Constant(100, 50.0);  // every coordinate exceeds, beta_hat = 0
    const TuningParams est = estimate_tuning(t, Vector::Constant(100, 0.9), 0.8, 100, 30.0, 0.05);
    EXPECT_DOUBLE_EQ(est.beta_hat, kBetaHatMin);
    EXPECT_DOUBLE_EQ(est.omega_lower_hat, 1.0);
    EXPECT_GE(est.clamps.size(), 2u);
}

// With a single nonzero delta_k and Omega = Sigma^{-1} of a unit-diagonal
// Sigma, the standardized transformed strength is sqrt(omega_kk) delta_k.
TEST(SignalEnhancement, ExactSingleSignalCase) {
    SeededRng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const Index p = 2 + static_cast<Index>(rng.below(20));
        const Matrix sigma = fixtures::to_unit_diagonal(fixtures::random_spd(p, rng));
        const Matrix omega = spd_inverse(SymmetricMatrix(sigma)).matrix();
        const auto k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
        const double dk = rng.uniform(0.1, 2.0);
        Vector delta = Vector::Zero(p);
        delta(k) = dk;
        const double strength = (omega * delta)(k) / std::sqrt(omega(k, k));
        EXPECT_NEAR(strength, std::sqrt(omega(k, k)) * dk, 1e-9 * dk);
        EXPECT_GE(strength, dk * (1.0 - 1e-10));
    }
}

namespace {

TwoSampleData single_signal_dataset(std::uint64_t seed, Index p, double rho, double r, Index* index, int* sign) {
    SeededRng rng(seed);
    SeededRng cov_rng(0);
    const SymmetricMatrix sigma = build_covariance({Ar1{rho}, p}, cov_rng);
    const LowerTriangular l = cholesky(sigma);
    *index = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
    *sign = rng.coin() ? 1 : -1;
    const double mag = std::sqrt(2.0 * r * std::log(static_cast<double>(p)) / 30.0);
    Vector mu1 = Vector::Zero(p);
    mu1(*index) = *sign * mag;
    TwoSampleData d;
    d.x1 = mvn_sample(mu1, l, 60, rng);
    d.x2 = mvn_sample(Vector::Zero(p), l, 60, rng);
    d.truth = mu1;
    return d;
}

}  // namespace

// A single signal in p = 200 means beta = 1, outside the oracle domain; the
// nearest admissible sparsity is used with the planted strength.
int single_signal_hits(const DateConfig& cfg) {
    const Index p = 200;
    const PrecisionEstimate omega = known_precision(ar1_precision_exact(0.6, p));
    int exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Index k = 0;
        int sign = 0;
        const TwoSampleData d = single_signal_dataset(seed, p, 0.6, 2.0, &k, &sign);
        const RecoveryResult res = run_date(d, omega, cfg);
        std::vector<int> want(static_cast<std::size_t>(p), 0);
        want[static_cast<std::size_t>(k)] = sign;
        exact += res.decisions == want;
    }
    return exact;
}

TEST(RunDate, SingleStrongSignalRecovered) {
    DateConfig cfg;
    cfg.tuning = OracleTuning{0.9, 2.0};
    EXPECT_GE(single_signal_hits(cfg), 95);
}

// Estimated tuning sees the signal plus its enhanced neighbours as
// exceedances, so the sparsity estimate is low and an occasional null
// coordinate slips through.
TEST(RunDate, SingleStrongSignalEstimatedTuning) { EXPECT_GE(single_signal_hits(DateConfig{}), 90); }

TEST(RunDate, NullDataMostlyEmpty) {
    const Index p = 200;
    const PrecisionEstimate omega = known_precision(ar1_precision_exact(0.6, p));
    SeededRng cov_rng(0);
    const LowerTriangular l = cholesky(build_covariance({Ar1{0.6}, p}, cov_rng));
    int empty = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        SeededRng rng(1000 + seed);
        TwoSampleData d;
        d.x1 = mvn_sample(Vector::Zero(p), l, 60, rng);
        d.x2 = mvn_sample(Vector::Zero(p), l, 60, rng);
        const RecoveryResult res = run_date(d, omega, DateConfig{});
        empty += std::all_of(res.decisions.begin(), res.decisions.end(), [](int x) { return x == 0; });
    }
    EXPECT_GE(empty, 45);
}

TEST(RunDate, IdentityOmegaUsesRawStatistics) {
    const TwoSampleData d = generate_dataset({Ar1{0.0}, 300}, SignalSpec{0.6, 1.5}, 60, 60, SeededRng(8));
    const RecoveryResult res = run_date(d, identity_omega(300), DateConfig{});
    const Vector diff = column_means(d.x1) - column_means(d.x2);
    const Vector raw = 30.0 * diff.array().square().matrix();
    EXPECT_LE((res.t_stats - raw).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(res.survivors, threshold_survivors(raw, 0.4, 300));
}

TEST(RunDate, DecisionsLieInSurvivorsAndAreDeterministic) {
    const Index p = 500;
    const PrecisionEstimate omega = known_precision(ar1_precision_exact(0.6, p));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const TwoSampleData d = generate_dataset({Ar1{0.6}, p}, SignalSpec{}, 60, 60, SeededRng(seed));
        const RecoveryResult a = run_date(d, omega, DateConfig{});
        const RecoveryResult b = run_date(d, omega, DateConfig{});
        EXPECT_EQ(a.decisions, b.decisions);
        EXPECT_EQ(a.t_stats, b.t_stats);
        EXPECT_EQ(a.components, b.components);
        const std::set<Index> surv(a.survivors.begin(), a.survivors.end());
        for (Index k = 0; k < p; ++k) {
            const int dk = a.decisions[static_cast<std::size_t>(k)];
            EXPECT_LE(std::abs(dk), 1);
            if (dk != 0) EXPECT_TRUE(surv.count(k));
        }
    }
}

TEST(RunDate, NoExceedancesGivesZeroDecisions) {
    const TwoSampleData d = generate_dataset({Ar1{0.6}, 100}, SignalSpec{}, 60, 60, SeededRng(9));
    DateConfig cfg;
    cfg.s = 0.4;
    cfg.q = 50.0;
    const RecoveryResult res = run_date(d, known_precision(ar1_precision_exact(0.6, 100)), cfg);
    EXPECT_TRUE(res.flags.no_exceedances);
    EXPECT_EQ(res.decisions, std::vector<int>(100, 0));
}

TEST(DateConfig, ValidatesOrdering) {
    DateConfig cfg;
    cfg.s = 0.9;
    cfg.q = 0.8;
    EXPECT_THROW(cfg.validate(), InvalidDomain);
    cfg.tuning = OracleTuning{};
    EXPECT_NO_THROW(cfg.validate());
}
