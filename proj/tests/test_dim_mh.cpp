#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace bt_test;

namespace {

const ModelShape paper_shape{100, {16, 12}, {10, 8}};

double spearman(std::vector<double> a, std::vector<double> b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(DimMh, NeighborsAtCornerAndInterior) {
    const CoreDim bounds = CoreDim::extents(paper_shape);
    EXPECT_EQ(neighbors(CoreDim::ones(paper_shape), bounds).size(), 4u);
    const auto nb = neighbors({{4, 4}, {2, 2}}, bounds);
    EXPECT_EQ(nb.size(), 8u);
    EXPECT_NE(std::find(nb.begin(), nb.end(), CoreDim{{3, 4}, {2, 2}}), nb.end());
    EXPECT_NE(std::find(nb.begin(), nb.end(), CoreDim{{4, 4}, {2, 3}}), nb.end());
    const CoreDim center{{4, 4}, {2, 2}};
    for (const auto& t : nb) {
        std::size_t dist = 0;
        for (std::size_t k = 0; k < 4; ++k) dist += t[k] > center[k] ? t[k] - center[k] : center[k] - t[k];
        EXPECT_EQ(dist, 1u);
        EXPECT_TRUE(t.within(bounds));
    }
    EXPECT_EQ(neighbors(bounds, bounds).size(), 4u);
    EXPECT_THROW(neighbors({{17, 1}, {1, 1}}, bounds), ConfigError);
}

TEST(DimMh, ProposalDensitiesUseNeighborCounts) {
    const CoreDim bounds = CoreDim::extents(paper_shape);
    Rng rng(41);
    const Proposal p = propose_theta(CoreDim::ones(paper_shape), bounds, rng);
    EXPECT_DOUBLE_EQ(p.log_q_forward, -std::log(4.0));
    // From the corner every neighbour has one coordinate at 2: 4 + 1 = 5 neighbours.
    EXPECT_DOUBLE_EQ(p.log_q_reverse, -std::log(5.0));
    const Proposal q = propose_theta({{4, 4}, {3, 3}}, bounds, rng);
    EXPECT_DOUBLE_EQ(q.log_q_forward, q.log_q_reverse);
    EXPECT_THROW(propose_theta({{1}, {1}}, {{1}, {1}}, rng), ConfigError);
}

TEST(DimMh, ProposalFrequenciesAreUniform) {
    const CoreDim bounds = CoreDim::extents(paper_shape);
    const CoreDim theta{{4, 4}, {2, 2}};
    const auto nb = neighbors(theta, bounds);
    std::map<CoreDim, int> counts;
    Rng rng(42);
    const int n = 80000;
    for (int i = 0; i < n; ++i) ++counts[propose_theta(theta, bounds, rng).theta];
    double chi2 = 0;
    const double e = static_cast<double>(n) / static_cast<double>(nb.size());
    for (const auto& t : nb) chi2 += (counts[t] - e) * (counts[t] - e) / e;
    EXPECT_EQ(counts.size(), nb.size());
    EXPECT_LT(chi2, 18.48);  // chi^2_7 upper 1% point
}

TEST(DimMh, LogRatioArithmetic) {
    Proposal p;
    p.log_q_forward = std::log(0.25);
    p.log_q_reverse = std::log(0.125);
    const Fraction b(0.2);
    const double r = mh_log_ratio(-10.0, -12.0, std::log(0.3), std::log(0.6), p, b);
    EXPECT_NEAR(r, std::log(0.5) + std::log(0.5) + 0.8 * 2.0, 1e-14);
    // Adding a constant to both log-likelihoods changes nothing.
    EXPECT_NEAR(mh_log_ratio(-10.0 + 1e4, -12.0 + 1e4, std::log(0.3), std::log(0.6), p, b), r, 1e-9);
    // b -> 1 leaves the prior x proposal ratio.
    EXPECT_NEAR(mh_log_ratio(-1.0, -500.0, 0.0, 0.0, p, Fraction(1.0 - 1e-12)), std::log(0.5), 1e-8);
    EXPECT_EQ(mh_log_ratio(0, 0, -std::numeric_limits<double>::infinity(), 0, p, b),
              -std::numeric_limits<double>::infinity());
}

TEST(DimMh, AcceptProbIdentityAndPriorDominance) {
    Rng rng(43);
    const ModelShape shape{6, {3}, {2}};
    Problem pb = make_problem(shape, {{2}, {1}}, 0.3, rng);
    const GibbsWorkspace ws(pb.x, pb.y, PriorConfig{});
    const DimPrior prior = DimPrior::uniform(CoreDim::extents(shape));
    const Proposal same{pb.truth.theta, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(mh_accept_prob(pb.truth, pb.truth, ws, Fraction(0.1), prior, same), 1.0);

    DimPrior tilted{CoreDim::extents(shape), [](const CoreDim& t) { return -2.0 * static_cast<double>(t.r[0]); }};
    ParamState bigger = pb.truth;
    bigger.theta.r[0] = 3;  // likelihood unchanged: same state, relabelled
    EXPECT_NEAR(mh_accept_prob(bigger, pb.truth, ws, Fraction(0.1), tilted, same), std::exp(-2.0), 1e-12);
}

TEST(DimMh, ResizeKeepsOverlap) {
    Rng rng(44);
    const ModelShape shape{4, {4, 3}, {3}};
    const ParamState s = prior_draw_state({{2, 2}, {2}}, shape, PriorConfig{}, rng);
    const ParamState up = resize_state(s, {{3, 2}, {1}}, shape, PriorConfig{}, rng);
    EXPECT_NO_THROW(up.validate(shape));
    EXPECT_EQ(Matrix(up.u[0].leftCols(2)), s.u[0]);
    EXPECT_EQ(Matrix(up.v[0].col(0)), Matrix(s.v[0].col(0)));
    EXPECT_EQ(up.g.at({1, 1, 0}), s.g.at({1, 1, 0}));
    EXPECT_EQ(up.sigma2, s.sigma2);
}

TEST(DimMh, FractionalFitShapesAndPriorLimit) {
    Rng rng(45);
    const ModelShape shape{10, {3, 2}, {2}};
    Problem pb = make_problem(shape, {{2, 1}, {1}}, 0.2, rng);
    const GibbsWorkspace ws(pb.x, pb.y, PriorConfig{});
    const ParamState s = fractional_fit({{3, 2}, {2}}, ws, Fraction(0.1), 5, rng);
    EXPECT_NO_THROW(s.validate(shape));
    // Tiny b: sigma2 stays near the prior scale instead of the data scale.
    const ParamState t = fractional_fit({{1, 1}, {1}}, ws, Fraction(1e-9), 5, rng);
    EXPECT_GT(t.sigma2, 0.01);
}

TEST(DimMh, ConfigValidation) {
    MhConfig c;
    c.burn_in = c.iterations;
    EXPECT_THROW(c.validate(), ConfigError);
    c = MhConfig{};
    c.b = Fraction(1.0);
    EXPECT_THROW(c.validate(), ConfigError);
    c = MhConfig{};
    c.thin = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DimMh, ChainStaysOnGridAndIsReproducible) {
    Rng rng(46);
    const ModelShape shape{12, {3, 3}, {3}};
    Problem pb = make_problem(shape, {{2, 2}, {2}}, 0.3, rng);
    const GibbsWorkspace ws(pb.x, pb.y, PriorConfig{});
    const DimPrior prior = DimPrior::uniform({{3, 2}, {3}});
    MhConfig cfg;
    cfg.iterations = 120;
    cfg.burn_in = 40;
    cfg.thin = 2;
    cfg.seed = 9;
    const McmcResult a = run_mcmc(ws, prior, cfg);
    const McmcResult b = run_mcmc(ws, prior, cfg);
    ASSERT_FALSE(a.aborted);
    EXPECT_EQ(a.trace.draws.size(), 40u);
    for (const auto& t : a.theta_path) EXPECT_TRUE(t.within(prior.bounds));
    EXPECT_GT(a.acceptance_rate(), 0.0);
    EXPECT_LT(a.acceptance_rate(), 1.0);
    ASSERT_EQ(a.trace.draws.size(), b.trace.draws.size());
    for (std::size_t i = 0; i < a.trace.draws.size(); ++i) {
        EXPECT_EQ(a.trace.draws[i].theta, b.trace.draws[i].theta);
        EXPECT_EQ(*a.trace.draws[i].b, *b.trace.draws[i].b);
    }
}

TEST(DimMh, FixedThetaChainMatchesMapOnNoiselessData) {
    Rng rng(47);
    const ModelShape shape{40, {4, 3}, {3, 2}};
    const CoreDim theta{{2, 2}, {2, 1}};
    Problem pb = make_problem(shape, theta, 0.0, rng);
    const GibbsWorkspace ws(pb.x, pb.y, PriorConfig{});
    MhConfig cfg;
    cfg.move_dimension = false;
    cfg.initial_theta = theta;
    cfg.iterations = 400;
    cfg.burn_in = 300;
    const McmcResult mc = run_mcmc(ws, DimPrior::uniform(CoreDim::extents(shape)), cfg);
    Rng r2(1);
    const ParamState map = map_cycle(prior_draw_state(theta, shape, PriorConfig{}, r2), ws, 200, 1e-12);

    const Tensor xt = random_tensor(shape.x_dims(40), rng);
    const std::vector<Tensor> truth{predict_mean(xt, assemble_B(pb.truth), 2)};
    const double rpe_mc = rpe(truth, std::vector<Tensor>{predict_mean(xt, mc.trace.mean_coefficient(), 2)});
    const double rpe_map = rpe(truth, std::vector<Tensor>{predict_mean(xt, assemble_B(map), 2)});
    EXPECT_LT(rpe_mc, 1e-3);
    EXPECT_LT(rpe_map, 1e-3);
    EXPECT_NEAR(rpe_mc, rpe_map, 0.05 * std::max(rpe_mc, rpe_map) + 1e-6);
}

TEST(DimMh, OccupancyReproducibleAcrossSeeds) {
    // Extents at most 2, so the grid holds at most 16 points.
    Rng rng(48);
    const ModelShape shape{4, {2, 2}, {2, 2}};
    Problem pb = make_problem(shape, {{1, 2}, {2, 1}}, 0.5, rng);
    const GibbsWorkspace ws(pb.x, pb.y, PriorConfig{});
    const DimPrior prior = DimPrior::uniform(CoreDim::extents(shape));
    std::vector<std::vector<double>> occ;
    for (std::uint64_t seed : {101u, 202u}) {
        MhConfig cfg;
        cfg.iterations = 100000;
        cfg.burn_in = 1000;
        cfg.inner_sweeps = 1;
        cfg.seed = seed;
        cfg.storage = TraceStorage::coefficient;
        const McmcResult r = run_mcmc(ws, prior, cfg);
        ASSERT_FALSE(r.aborted);
        std::map<CoreDim, double> counts;
        for (const auto& t : r.theta_path) counts[t] += 1.0;
        std::vector<double> v;
        for (std::size_t a = 1; a <= 2; ++a)
            for (std::size_t b = 1; b <= 2; ++b)
                for (std::size_t c = 1; c <= 2; ++c)
                    for (std::size_t d = 1; d <= 2; ++d) v.push_back(counts[CoreDim{{a, b}, {c, d}}]);
        occ.push_back(v);
    }
    EXPECT_GE(spearman(occ[0], occ[1]), 0.9);
}
