#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bt_test;

namespace {

SimConfig small_config() {
    SimConfig c;
    c.shape = ModelShape{30, {4, 3}, {3, 2}};
    c.theta_star = {{2, 2}, {2, 1}};
    c.snr = 3.0;
    c.n_eval_sets = 2;
    c.n_eval_samples = 50;
    c.n_replicates = 2;
    return c;
}

}  // namespace

TEST(Sim, RealizedSnrIsExact) {
    for (double snr : {0.5, 2.0, 5.0, 100.0}) {
        SimConfig c = small_config();
        c.snr = snr;
        Rng rng(71);
        const SimDataset ds = gen_dataset(c, rng);
        EXPECT_NEAR(realized_snr(ds, 2), snr, 1e-12 * snr);
        Tensor rebuilt = predict_mean(ds.x, ds.b_true, 2);
        rebuilt.vec() += ds.c * ds.e.vec();
        EXPECT_EQ(rebuilt, ds.y);
        for (const EvalSet& es : ds.eval) {
            const Tensor sig = predict_mean(es.x, ds.b_true, 2);
            EXPECT_NEAR(frobenius_norm_sq(sig) / (es.c * es.c * frobenius_norm_sq(es.e)), snr, 1e-12 * snr);
        }
    }
}

TEST(Sim, PaperShapesAndNoiselessOption) {
    SimConfig c;
    c.n_eval_sets = 1;
    c.n_eval_samples = 10;
    c.noiseless = true;
    Rng rng(72);
    const SimDataset ds = gen_dataset(c, rng);
    EXPECT_EQ(ds.x.dims(), (Dims{100, 16, 12}));
    EXPECT_EQ(ds.y.dims(), (Dims{100, 10, 8}));
    EXPECT_EQ(ds.c, 0.0);
    EXPECT_EQ(ds.y, predict_mean(ds.x, ds.b_true, 2));
}

TEST(Sim, DatasetIsDeterministicGivenSeed) {
    Rng a(73), b(73);
    const SimDataset d1 = gen_dataset(small_config(), a), d2 = gen_dataset(small_config(), b);
    EXPECT_EQ(d1.y, d2.y);
    EXPECT_EQ(d1.eval[1].y, d2.eval[1].y);
}

TEST(Sim, ConfigValidation) {
    SimConfig c = small_config();
    c.snr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.design = Design::correlated;
    c.r = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.theta_star = {{5, 1}, {1, 1}};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Sim, CorrelationMatrixProperties) {
    const Matrix c = predictor_correlation({3, 4}, 0.5);
    EXPECT_EQ(c.rows(), 12);
    for (Eigen::Index i = 0; i < 12; ++i) EXPECT_EQ(c(i, i), 1.0);
    // Cell (i, j) sits at i + 3 j: (1,0) and (0,1) are adjacent to (0,0), (1,1) is sqrt(2) away.
    EXPECT_DOUBLE_EQ(c(0, 1), std::exp(-0.5));
    EXPECT_DOUBLE_EQ(c(0, 3), std::exp(-0.5));
    EXPECT_DOUBLE_EQ(c(0, 4), std::exp(-0.5 * std::sqrt(2.0)));
    EXPECT_DOUBLE_EQ(c(0, 11), std::exp(-0.5 * std::sqrt(4.0 + 9.0)));
    EXPECT_TRUE(c.isApprox(c.transpose()));
}

TEST(Sim, CorrelatedDesignEmpiricalCorrelation) {
    Rng rng(74);
    const double r = 0.5;
    const std::size_t n = 20000;
    const Tensor x = gen_X_correlated(n, 3, 2, r, rng);
    const Matrix xm = x.as_matrix(n, 6);
    const Matrix cov = (xm.transpose() * xm) / static_cast<double>(n);
    const Matrix target = predictor_correlation({3, 2}, r);
    EXPECT_LE((cov - target).cwiseAbs().maxCoeff(), 0.05);
    EXPECT_NEAR(cov(0, 1), std::exp(-r), 0.05);
}

TEST(Sim, LargeDecayDecorrelates) {
    Rng rng(75);
    const std::size_t n = 10000;
    const Tensor x = gen_X_correlated(n, 2, 2, 50.0, rng);
    const Matrix xm = x.as_matrix(n, 4);
    const Matrix cov = (xm.transpose() * xm) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
            if (i != j) {
                EXPECT_LT(std::abs(cov(i, j)), 0.05);
            }
}

TEST(Sim, CoverageRateCounting) {
    const Tensor y({3}, {0.0, 1.0, 2.0});
    const Tensor lo({3}, {-1.0, 1.5, 2.0});
    const Tensor hi({3}, {1.0, 2.0, 2.0});
    EXPECT_DOUBLE_EQ(coverage_rate(lo, hi, y), 2.0 / 3.0);
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_DOUBLE_EQ(coverage_rate(Tensor({3}, {-inf, -inf, -inf}), Tensor({3}, {inf, inf, inf}), y), 1.0);
    EXPECT_THROW(coverage_rate(Tensor({2}), hi, y), ShapeError);
}

TEST(Sim, CalibratedGaussianCoverage) {
    Rng rng(76);
    const std::size_t n = 20000;
    Tensor y({n}), lo({n}), hi({n});
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = rng.normal();
        y[i] = mu + rng.normal();
        lo[i] = mu - 1.959964;
        hi[i] = mu + 1.959964;
    }
    EXPECT_NEAR(coverage_rate(lo, hi, y), 0.95, 3 * std::sqrt(0.95 * 0.05 / n));
}

TEST(Sim, DimensionRecoveryCounting) {
    const CoreDim a{{3, 3}, {3, 3}}, b{{3, 4}, {3, 3}};
    std::vector<DimensionOutcome> all{{a, a}, {a, a}};
    EXPECT_EQ(dimension_recovery_rate(all), 1.0);
    std::vector<DimensionOutcome> none{{a, b}};
    EXPECT_EQ(dimension_recovery_rate(none), 0.0);
    std::vector<DimensionOutcome> mixed{{a, a}, {a, b}, {a, b}, {b, b}};
    EXPECT_EQ(dimension_recovery_rate(mixed), 0.5);
}

TEST(Sim, OracleFloorAndZeroReplicates) {
    ReplicationConfig rc;
    rc.sim = small_config();
    rc.sim.n_eval_samples = 400;
    rc.sim.n_replicates = 3;
    rc.methods = {Method::oracle};
    const ReplicationReport rep = run_replication(rc);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_NEAR(rep.summary[0].rpe_mean, 1.0 / (1.0 + rc.sim.snr), 0.03);

    rc.sim.n_replicates = 0;
    const ReplicationReport empty = run_replication(rc);
    EXPECT_TRUE(empty.rows.empty());
    EXPECT_EQ(empty.summary[0].n_ok, 0u);
}

TEST(Sim, ReplicationDeterministicAcrossThreadCounts) {
    ReplicationConfig rc;
    rc.sim = small_config();
    rc.sim.n_replicates = 3;
    rc.methods = {Method::fast, Method::ols, Method::mcmc};
    rc.mcmc.iterations = 30;
    rc.mcmc.burn_in = 10;
    rc.mcmc.inner_sweeps = 1;
    rc.fast.iterations = 10;
    rc.coverage.samples = 20;
    ScopedWarningSink quiet([](const std::string&) {});
    const ReplicationReport a = run_replication(rc);
    rc.threads = 3;
    const ReplicationReport b = run_replication(rc);
    ASSERT_EQ(a.rows.size(), 9u);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].rpe, b.rows[i].rpe);
        EXPECT_EQ(a.rows[i].theta, b.rows[i].theta);
        EXPECT_EQ(a.rows[i].coverage, b.rows[i].coverage);
        EXPECT_TRUE(a.rows[i].error.empty()) << a.rows[i].error;
    }
}

TEST(Sim, FailuresAreRecordedNotFatal) {
    ReplicationConfig rc;
    rc.sim = small_config();
    rc.sim.n_replicates = 1;
    rc.methods = {Method::fast, Method::ols};
    rc.fast.initial_theta = CoreDim{{9, 9}, {9, 9}};  // outside the extents
    ScopedWarningSink quiet([](const std::string&) {});
    const ReplicationReport rep = run_replication(rc);
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_FALSE(rep.rows[0].error.empty());
    EXPECT_TRUE(rep.rows[1].error.empty());
    EXPECT_EQ(rep.summary[0].n_ok, 0u);
    EXPECT_EQ(rep.summary[1].n_ok, 1u);
}
