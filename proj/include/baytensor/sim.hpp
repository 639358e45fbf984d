#pragma once

// Simulation studies: synthetic data with a calibrated signal-to-noise
// ratio, replicated fits across methods, and the evaluation metrics.

#include "baytensor/dim_mh.hpp"
#include "baytensor/errors.hpp"
#include "baytensor/gibbs.hpp"
#include "baytensor/map_sa.hpp"
#include "baytensor/model.hpp"
#include "baytensor/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace baytensor {

enum class Design { uncorrelated, correlated };

struct SimConfig {
    ModelShape shape{100, {16, 12}, {10, 8}};
    CoreDim theta_star{{3, 3}, {3, 3}};
    double snr = 5.0;
    bool noiseless = false;  // c = 0 regardless of snr
    Design design = Design::uncorrelated;
    double r = 0.5;  // correlation decay for the correlated design
    std::size_t n_replicates = 5;
    std::size_t n_eval_sets = 5;
    std::size_t n_eval_samples = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        shape.validate();
        theta_star.validate(shape);
        if (!noiseless && !(snr > 0.0 && std::isfinite(snr))) throw ConfigError("snr must be positive");
        if (design == Design::correlated && !(r > 0.0)) throw ConfigError("correlated design needs r > 0");
        if (n_eval_sets == 0 || n_eval_samples == 0) throw ConfigError("evaluation needs at least one set and sample");
    }
};

struct EvalSet {
    Tensor x;
    Tensor y;
    Tensor e;
    double c = 0.0;
};

struct SimDataset {
    Tensor x;
    Tensor y;
    Tensor b_true;
    Tensor e;  // unscaled noise, y = <x, b_true> + c e
    double c = 0.0;
    std::vector<EvalSet> eval;
};

/// Correlation e^{-r ||i - k||_2} between predictor cells i and k (0-based multi-indices).
inline Matrix predictor_correlation(const Dims& predictor, double r) {
    const std::size_t p = product(predictor);
    std::vector<Dims> cells(p, Dims(predictor.size(), 0));
    for (std::size_t j = 1; j < p; ++j) {
        cells[j] = cells[j - 1];
        for (std::size_t k = 0; k < predictor.size() && ++cells[j][k] == predictor[k]; ++k) cells[j][k] = 0;
    }
    Matrix corr(p, p);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < predictor.size(); ++k) {
                const double d = static_cast<double>(cells[a][k]) - static_cast<double>(cells[b][k]);
                d2 += d * d;
            }
            corr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = std::exp(-r * std::sqrt(d2));
        }
    return corr;
}

inline Tensor gen_X_uncorrelated(std::size_t n, const Dims& predictor, Rng& rng) {
    Dims dims{n};
    dims.insert(dims.end(), predictor.begin(), predictor.end());
    Tensor x(dims);
    for (double& v : x.data()) v = rng.normal();
    return x;
}

/// Each sample's predictor slice is an independent zero-mean Gaussian with
/// unit variances and correlation e^{-r * distance} between cells.
inline Tensor gen_X_correlated(std::size_t n, const Dims& predictor, double r, Rng& rng) {
    if (!(r > 0.0)) throw ConfigError("correlation decay r must be positive");
    const Matrix corr = predictor_correlation(predictor, r);
    const Matrix chol = spd_factor(corr, "predictor correlation").matrixL();
    Tensor z = gen_X_uncorrelated(n, predictor, rng);
    Dims dims = z.dims();
    Tensor x(dims);
    const std::size_t p = product(predictor);
    x.as_matrix(n, p).noalias() = z.as_matrix(n, p) * chol.transpose();
    return x;
}

inline Tensor gen_X_correlated(std::size_t n, std::size_t p1, std::size_t p2, double r, Rng& rng) {
    return gen_X_correlated(n, Dims{p1, p2}, r, rng);
}

inline Tensor gen_predictor(const SimConfig& cfg, std::size_t n, Rng& rng) {
    return cfg.design == Design::correlated ? gen_X_correlated(n, cfg.shape.predictor, cfg.r, rng)
                                            : gen_X_uncorrelated(n, cfg.shape.predictor, rng);
}

namespace detail {
inline double noise_scale(const SimConfig& cfg, const Tensor& signal, const Tensor& e) {
    return cfg.noiseless ? 0.0 : std::sqrt(frobenius_norm_sq(signal) / (cfg.snr * frobenius_norm_sq(e)));
}
}  // namespace detail

/// X, then U_l, V_m, G with iid N(0,1) entries, then E; c is chosen so that
/// ||<X,B>||^2 / (c^2 ||E||^2) = snr. Evaluation sets reuse B and are
/// generated the same way, each with its own c.
inline SimDataset gen_dataset(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    const ModelShape& shape = cfg.shape;
    SimDataset ds;
    ds.x = gen_predictor(cfg, shape.n_samples, rng);

    ParamState truth;
    truth.theta = cfg.theta_star;
    for (std::size_t l = 0; l < shape.L(); ++l) {
        Matrix u(shape.predictor[l], cfg.theta_star.r[l]);
        for (Eigen::Index j = 0; j < u.size(); ++j) u.data()[j] = rng.normal();
        truth.u.push_back(std::move(u));
    }
    for (std::size_t m = 0; m < shape.M(); ++m) {
        Matrix v(shape.response[m], cfg.theta_star.s[m]);
        for (Eigen::Index j = 0; j < v.size(); ++j) v.data()[j] = rng.normal();
        truth.v.push_back(std::move(v));
    }
    truth.g = Tensor(cfg.theta_star.flat());
    for (double& g : truth.g.data()) g = rng.normal();
    ds.b_true = assemble_B(truth);

    const Tensor signal = predict_mean(ds.x, ds.b_true, shape.L());
    ds.e = Tensor(signal.dims());
    for (double& v : ds.e.data()) v = rng.normal();
    ds.c = detail::noise_scale(cfg, signal, ds.e);
    ds.y = signal;
    ds.y.vec() += ds.c * ds.e.vec();

    for (std::size_t i = 0; i < cfg.n_eval_sets; ++i) {
        EvalSet es;
        es.x = gen_predictor(cfg, cfg.n_eval_samples, rng);
        es.y = predict_mean(es.x, ds.b_true, shape.L());
        es.e = Tensor(es.y.dims());
        for (double& v : es.e.data()) v = rng.normal();
        es.c = detail::noise_scale(cfg, es.y, es.e);
        es.y.vec() += es.c * es.e.vec();
        ds.eval.push_back(std::move(es));
    }
    return ds;
}

/// ||<X,B>||^2 / (c^2 ||E||^2) for a generated dataset.
inline double realized_snr(const SimDataset& ds, std::size_t L) {
    return frobenius_norm_sq(predict_mean(ds.x, ds.b_true, L)) / (ds.c * ds.c * frobenius_norm_sq(ds.e));
}

/// Fraction of entries of y inside [lower, upper].
inline double coverage_rate(const Tensor& lower, const Tensor& upper, const Tensor& y) {
    if (lower.dims() != y.dims() || upper.dims() != y.dims()) throw ShapeError("coverage_rate: mismatched dims");
    std::size_t inside = 0;
    for (std::size_t k = 0; k < y.size(); ++k) inside += (y[k] >= lower[k] && y[k] <= upper[k]) ? 1 : 0;
    return static_cast<double>(inside) / static_cast<double>(y.size());
}

struct DimensionOutcome {
    CoreDim truth;
    CoreDim selected;
};

inline double dimension_recovery_rate(std::span<const DimensionOutcome> outcomes) {
    if (outcomes.empty()) return 0.0;
    const auto hits = std::count_if(outcomes.begin(), outcomes.end(),
                                    [](const DimensionOutcome& o) { return o.truth == o.selected; });
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

enum class Method { mcmc, fast, ols, oracle };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::mcmc: return "mcmc";
        case Method::fast: return "fast";
        case Method::ols: return "ols";
        case Method::oracle: return "oracle";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "mcmc") return Method::mcmc;
    if (s == "fast") return Method::fast;
    if (s == "ols") return Method::ols;
    if (s == "oracle") return Method::oracle;
    throw ConfigError("unknown method '" + s + "' (expected mcmc, fast, ols or oracle)");
}

/// Posterior-predictive coverage settings for MCMC replicates: intervals are
/// computed on the first `samples` rows of the first `sets` evaluation sets.
struct CoverageConfig {
    double level = 0.95;
    std::size_t sets = 1;
    std::size_t samples = 200;
};

struct ReplicationConfig {
    SimConfig sim;
    std::vector<Method> methods{Method::mcmc, Method::fast, Method::ols};
    PriorConfig prior;
    MhConfig mcmc;
    SaConfig fast;
    CoverageConfig coverage;
    std::optional<CoreDim> mcmc_bounds;  // data extents when unset
    bool fast_pick_best = false;  // score the lowest-BIC state instead of the final one
    std::size_t threads = 1;
};

struct ReplicateRow {
    std::size_t replicate = 0;
    Method method = Method::ols;
    double rpe = 0.0;
    std::optional<CoreDim> theta;
    std::optional<std::size_t> n_params;
    std::optional<bool> recovered;
    std::optional<double> coverage;
    std::optional<double> acceptance_rate;
    double seconds = 0.0;
    std::string error;  // non-empty when the replicate failed
};

struct MethodSummary {
    Method method = Method::ols;
    std::size_t n_ok = 0;
    double rpe_mean = 0.0;
    double rpe_sd = 0.0;
    std::optional<double> recovery_rate;
    std::optional<double> params_mean;
    std::optional<double> params_sd;
    std::optional<double> coverage_mean;
    std::optional<double> coverage_sd;
    double seconds_mean = 0.0;
};

struct ReplicationReport {
    std::vector<ReplicateRow> rows;
    std::vector<MethodSummary> summary;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline double eval_rpe(const SimDataset& ds, const Tensor& b, std::size_t L) {
    std::vector<Tensor> truth;
    std::vector<Tensor> pred;
    for (const auto& es : ds.eval) {
        truth.push_back(es.y);
        pred.push_back(predict_mean(es.x, b, L));
    }
    return rpe(truth, pred);
}

/// First n rows (samples) of a tensor whose mode 0 indexes samples.
inline Tensor leading_samples(const Tensor& t, std::size_t n) {
    n = std::min(n, t.dim(0));
    Dims dims = t.dims();
    const std::size_t rest = t.size() / dims[0];
    Tensor out([&] {
        Dims d = dims;
        d[0] = n;
        return d;
    }());
    out.as_matrix(n, rest) = t.as_matrix(dims[0], rest).topRows(static_cast<Eigen::Index>(n));
    return out;
}

}  // namespace detail

inline std::vector<ReplicateRow> run_one_replicate(const ReplicationConfig& cfg, std::size_t rep) {
    const SimConfig& sc = cfg.sim;
    const std::size_t L = sc.shape.L();
    Rng data_rng = Rng::stream(sc.seed, {rep, 0});
    const SimDataset ds = gen_dataset(sc, data_rng);
    const GibbsWorkspace ws(ds.x, ds.y, cfg.prior);

    std::vector<ReplicateRow> rows;
    for (Method method : cfg.methods) {
        ReplicateRow row;
        row.replicate = rep;
        row.method = method;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (method) {
                case Method::oracle: row.rpe = detail::eval_rpe(ds, ds.b_true, L); break;
                case Method::ols: row.rpe = detail::eval_rpe(ds, ols_baseline(ds.x, ds.y).as_tensor(sc.shape), L); break;
                case Method::fast: {
                    SaConfig fc = cfg.fast;
                    fc.seed = derive_seed(sc.seed, {rep, 2});
                    const FastResult fr = run_fast(ws, fc);
                    const MapFit& pick = cfg.fast_pick_best ? fr.best : fr.final;
                    row.rpe = detail::eval_rpe(ds, assemble_B(pick.state), L);
                    row.theta = pick.state.theta;
                    break;
                }
                case Method::mcmc: {
                    MhConfig mc = cfg.mcmc;
                    mc.seed = derive_seed(sc.seed, {rep, 1});
                    const McmcResult mr = run_mcmc(ws, DimPrior::uniform(cfg.mcmc_bounds.value_or(CoreDim::extents(sc.shape))), mc);
                    if (mr.trace.empty()) throw NumericalError("chain stored no draws: " + mr.error);
                    row.rpe = detail::eval_rpe(ds, mr.trace.mean_coefficient(), L);
                    row.theta = mr.trace.posterior_mode();
                    row.acceptance_rate = mr.acceptance_rate();
                    Rng pred_rng = Rng::stream(sc.seed, {rep, 3});
                    double cov = 0.0;
                    const std::size_t sets = std::min(cfg.coverage.sets, ds.eval.size());
                    for (std::size_t i = 0; i < sets; ++i) {
                        const Tensor xs = detail::leading_samples(ds.eval[i].x, cfg.coverage.samples);
                        const Tensor ys = detail::leading_samples(ds.eval[i].y, cfg.coverage.samples);
                        const auto pp = posterior_predict(mr.trace, xs, 1, cfg.coverage.level, pred_rng);
                        cov += coverage_rate(pp.lower, pp.upper, ys);
                    }
                    if (sets > 0) row.coverage = cov / static_cast<double>(sets);
                    if (mr.aborted) row.error = "chain aborted early: " + mr.error;
                    break;
                }
            }
            if (row.theta) {
                row.n_params = param_count(sc.shape, *row.theta);
                row.recovered = *row.theta == sc.theta_star;
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<MethodSummary> summarize(const std::vector<ReplicateRow>& rows, const std::vector<Method>& methods) {
    std::vector<MethodSummary> out;
    for (Method m : methods) {
        MethodSummary s;
        s.method = m;
        std::vector<double> rpes, params, covs, secs;
        std::size_t recovered = 0, with_theta = 0;
        for (const auto& r : rows) {
            if (r.method != m || (!r.error.empty() && r.error.rfind("chain aborted", 0) != 0)) continue;
            rpes.push_back(r.rpe);
            secs.push_back(r.seconds);
            if (r.n_params) params.push_back(static_cast<double>(*r.n_params));
            if (r.recovered) {
                ++with_theta;
                recovered += *r.recovered ? 1 : 0;
            }
            if (r.coverage) covs.push_back(*r.coverage);
        }
        s.n_ok = rpes.size();
        std::tie(s.rpe_mean, s.rpe_sd) = detail::mean_sd(rpes);
        s.seconds_mean = detail::mean_sd(secs).first;
        if (with_theta) s.recovery_rate = static_cast<double>(recovered) / static_cast<double>(with_theta);
        if (!params.empty()) {
            const auto [pm, ps] = detail::mean_sd(params);
            s.params_mean = pm;
            s.params_sd = ps;
        }
        if (!covs.empty()) {
            const auto [cm, cs] = detail::mean_sd(covs);
            s.coverage_mean = cm;
            s.coverage_sd = cs;
        }
        out.push_back(s);
    }
    return out;
}

/// Replicate r draws its data, chains and predictive noise from streams keyed
/// by (seed, r, role), so results do not depend on the thread count.
inline ReplicationReport run_replication(const ReplicationConfig& cfg) {
    cfg.sim.validate();
    const std::size_t n = cfg.sim.n_replicates;
    std::vector<std::vector<ReplicateRow>> per_rep(n);
    const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, n));
    if (threads == 1) {
        for (std::size_t r = 0; r < n; ++r) per_rep[r] = run_one_replicate(cfg, r);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t r = w; r < n; r += threads) per_rep[r] = run_one_replicate(cfg, r);
            });
    }
    ReplicationReport rep;
    for (auto& rows : per_rep)
        for (auto& row : rows) rep.rows.push_back(std::move(row));
    rep.summary = summarize(rep.rows, cfg.methods);
    return rep;
}

}  // namespace baytensor
