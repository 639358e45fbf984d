#pragma once

// Fast path: blockwise closed-form MAP updates at fixed theta and simulated
// annealing over theta with BIC as the loss.

#include "baytensor/dim_mh.hpp"
#include "baytensor/errors.hpp"
#include "baytensor/gibbs.hpp"
#include "baytensor/model.hpp"
#include "baytensor/rng.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace baytensor {

/// vec U_l = (C^T C + sigma^2 Sigma_U^{-1})^{-1} (C^T vec Y + sigma^2 Sigma_U^{-1} mu_U).
/// With mu_U = 0 this is the ridge solution with penalty sigma^2 / var_u.
inline Matrix map_U(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_l) {
    const PriorConfig& pr = ws.prior();
    const Matrix c = build_C(s, ws, target_l);
    Matrix lhs = c.transpose() * c;
    lhs.diagonal().array() += s.sigma2 / pr.var_u;
    Vector rhs = c.transpose() * ws.y().vec();
    rhs.array() += s.sigma2 * pr.mu_u / pr.var_u;
    const Vector sol = spd_factor(lhs, "MAP U_" + std::to_string(target_l + 1)).solve(rhs);
    return Eigen::Map<const Matrix>(sol.data(), static_cast<Eigen::Index>(ws.shape().predictor[target_l]),
                                    static_cast<Eigen::Index>(s.theta.r[target_l]));
}

/// Block form of (I_Q (x) D^T D + sigma^2 Sigma_V^{-1})^{-1} (I_Q (x) D^T) vec Y~:
/// one S_m x S_m system shared by all Q_m rows.
inline Matrix map_V(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_m) {
    const PriorConfig& pr = ws.prior();
    const Matrix d = build_D(s, ws, target_m);
    Matrix lhs = d.transpose() * d;
    lhs.diagonal().array() += s.sigma2 / pr.var_v;
    Matrix rhs = d.transpose() * ws.y_tilde(target_m);
    rhs.array() += s.sigma2 * pr.mu_v / pr.var_v;
    return spd_factor(lhs, "MAP V_" + std::to_string(target_m + 1)).solve(rhs).transpose();
}

/// vec G = ((V^T V) (x) (A^T A) + sigma^2 Sigma_G^{-1})^{-1} vec(A^T Y_(1) V).
/// The right-hand side equals ((V^T V) (x) A^T) vec Y= without forming (V^T V)^{-1},
/// so a rank-deficient V is tolerated.
inline Tensor map_G(const ParamState& s, const GibbsWorkspace& ws) {
    const PriorConfig& pr = ws.prior();
    const CoreDesign cd = core_design(s, ws);
    Matrix lhs = kronecker(cd.vtv, cd.a.transpose() * cd.a);
    lhs.diagonal().array() += s.sigma2 / pr.var_g;
    const Matrix lin = cd.a.transpose() * ws.y1() * cd.v;
    Vector rhs = lin.reshaped();
    rhs.array() += s.sigma2 * pr.mu_g / pr.var_g;
    return core_from_vec(spd_factor(lhs, "MAP core").solve(rhs), s.theta);
}

/// beta' / (alpha' - 1): the mode of the precision 1/sigma^2, mapped back.
inline double map_sigma2(const ParamState& s, const GibbsWorkspace& ws) {
    const PriorConfig& pr = ws.prior();
    const double alpha_post = pr.alpha + 0.5 * static_cast<double>(ws.y().size());
    if (alpha_post <= 1.0) throw NumericalError("map_sigma2 needs alpha' > 1");
    return (pr.beta + 0.5 * ws.residual_ss(s)) / (alpha_post - 1.0);
}

/// Negative log joint posterior, up to a constant, in the coordinates
/// (U, V, G, tau = 1/sigma^2). Every MAP block update minimizes it exactly in
/// its block, so it never increases across a map_cycle.
inline double map_objective(const ParamState& s, const GibbsWorkspace& ws) {
    const PriorConfig& pr = ws.prior();
    const double tau = 1.0 / s.sigma2;
    const double nq = static_cast<double>(ws.y().size());
    double f = 0.5 * tau * ws.residual_ss(s) - 0.5 * nq * std::log(tau);
    for (const auto& u : s.u) f += (u.array() - pr.mu_u).square().sum() / (2.0 * pr.var_u);
    for (const auto& v : s.v) f += (v.array() - pr.mu_v).square().sum() / (2.0 * pr.var_v);
    f += (s.g.vec().array() - pr.mu_g).square().sum() / (2.0 * pr.var_g);
    f += pr.beta * tau - (pr.alpha - 1.0) * std::log(tau);
    return f;
}

namespace detail {

inline double state_norm_sq(const ParamState& s) {
    double n = s.g.vec().squaredNorm() + s.sigma2 * s.sigma2;
    for (const auto& u : s.u) n += u.squaredNorm();
    for (const auto& v : s.v) n += v.squaredNorm();
    return n;
}

inline double state_diff_sq(const ParamState& a, const ParamState& b) {
    double n = (a.g.vec() - b.g.vec()).squaredNorm() + (a.sigma2 - b.sigma2) * (a.sigma2 - b.sigma2);
    for (std::size_t l = 0; l < a.u.size(); ++l) n += (a.u[l] - b.u[l]).squaredNorm();
    for (std::size_t m = 0; m < a.v.size(); ++m) n += (a.v[m] - b.v[m]).squaredNorm();
    return n;
}

}  // namespace detail

/// Up to K passes of (U_1..U_L, V_1..V_M, G, sigma^2) MAP updates. Stops early
/// once a pass moves the stacked parameters by less than `tol` relative.
/// When `objective_trace` is given, map_objective is appended after every block.
inline ParamState map_cycle(ParamState s, const GibbsWorkspace& ws, std::size_t K, double tol = 1e-8,
                            std::vector<double>* objective_trace = nullptr) {
    auto record = [&] {
        if (objective_trace) objective_trace->push_back(map_objective(s, ws));
    };
    record();
    for (std::size_t k = 0; k < K; ++k) {
        const ParamState before = s;
        for (std::size_t l = 0; l < s.u.size(); ++l) {
            s.u[l] = map_U(s, ws, l);
            record();
        }
        for (std::size_t m = 0; m < s.v.size(); ++m) {
            s.v[m] = map_V(s, ws, m);
            record();
        }
        s.g = map_G(s, ws);
        record();
        s.sigma2 = map_sigma2(s, ws);
        record();
        if (detail::state_diff_sq(s, before) <= tol * tol * detail::state_norm_sq(before)) break;
    }
    return s;
}

/// -2 log p(Y | xi) + param_count(theta) log(N prod Q).
inline double bic(const ParamState& s, const GibbsWorkspace& ws) {
    const double loglik = state_log_likelihood(s, ws);
    const auto k = static_cast<double>(param_count(ws.shape(), s.theta));
    return -2.0 * loglik + k * std::log(static_cast<double>(ws.y().size()));
}

/// Accept when not worse; otherwise with probability exp(-(bic_new - bic_old) / zeta).
inline bool sa_accept(double bic_new, double bic_old, double zeta, Rng& rng) {
    if (!(zeta > 0.0)) throw ConfigError("annealing temperature must be positive");
    if (bic_new <= bic_old) return true;
    return rng.uniform() < std::exp((bic_old - bic_new) / zeta);
}

enum class Schedule { geometric, logarithmic };

struct SaConfig {
    std::size_t iterations = 200;  // T
    std::size_t inner_passes = 10; // K
    double tol = 1e-8;
    Schedule schedule = Schedule::geometric;
    double gamma = 0.95;
    std::optional<double> zeta0;  // estimated from neighbour probes when unset
    std::size_t probes = 5;
    std::uint64_t seed = 0;
    std::optional<CoreDim> initial_theta;  // all ones when unset
    std::optional<CoreDim> bounds;         // data extents when unset

    void validate() const {
        if (inner_passes == 0) throw ConfigError("fast inner_passes (K) must be at least 1");
        if (schedule == Schedule::geometric && !(gamma > 0.0 && gamma < 1.0))
            throw ConfigError("geometric schedule needs 0 < gamma < 1");
        if (zeta0 && !(*zeta0 > 0.0)) throw ConfigError("zeta0 must be positive");
        if (!zeta0 && probes == 0) throw ConfigError("zeta0 estimation needs at least one probe");
    }
};

/// zeta(t) for t >= 1.
inline double temperature(Schedule sched, double zeta0, double gamma, std::size_t t) {
    const auto tt = static_cast<double>(t);
    return sched == Schedule::geometric ? zeta0 * std::pow(gamma, tt) : zeta0 / std::log1p(tt);
}

struct MapFit {
    ParamState state;
    double bic = 0.0;
    double loglik_at_map = 0.0;
};

inline MapFit make_map_fit(ParamState s, const GibbsWorkspace& ws) {
    MapFit f;
    f.loglik_at_map = state_log_likelihood(s, ws);
    f.bic = -2.0 * f.loglik_at_map +
            static_cast<double>(param_count(ws.shape(), s.theta)) * std::log(static_cast<double>(ws.y().size()));
    f.state = std::move(s);
    return f;
}

struct FastResult {
    MapFit best;                 // lowest BIC seen
    MapFit final;                // state held after the last iteration
    std::vector<CoreDim> path;   // theta after every iteration
    std::size_t accepted = 0;
    double zeta0 = 0.0;
    double seconds = 0.0;
};

inline FastResult run_fast(const GibbsWorkspace& ws, const SaConfig& cfg) {
    cfg.validate();
    const ModelShape& shape = ws.shape();
    const CoreDim bounds = cfg.bounds.value_or(CoreDim::extents(shape));
    const CoreDim theta0 = cfg.initial_theta.value_or(CoreDim::ones(shape));
    theta0.validate(shape);
    if (!theta0.within(bounds)) throw ConfigError("initial theta lies outside the annealing bounds");
    if (!bounds.within(CoreDim::extents(shape))) throw ConfigError("annealing bounds may not exceed the data extents");

    const auto start = std::chrono::steady_clock::now();
    Rng rng = Rng::stream(cfg.seed, {1});
    auto fit_at = [&](const ParamState& from, const CoreDim& theta) {
        return make_map_fit(map_cycle(resize_state(from, theta, shape, ws.prior(), rng), ws, cfg.inner_passes, cfg.tol),
                            ws);
    };

    FastResult res;
    MapFit current = make_map_fit(
        map_cycle(prior_draw_state(theta0, shape, ws.prior(), rng), ws, cfg.inner_passes, cfg.tol), ws);
    res.best = current;

    const bool can_move = !neighbors(theta0, bounds).empty();
    if (cfg.zeta0) {
        res.zeta0 = *cfg.zeta0;
    } else {
        double scale = 0.0;
        if (can_move)
            for (std::size_t i = 0; i < cfg.probes; ++i) {
                const Proposal p = propose_theta(current.state.theta, bounds, rng);
                scale += std::abs(fit_at(current.state, p.theta).bic - current.bic);
            }
        scale /= static_cast<double>(cfg.probes);
        res.zeta0 = scale > 0.0 ? 10.0 * scale : 1.0;
    }

    for (std::size_t t = 1; t <= cfg.iterations && can_move; ++t) {
        const double zeta = temperature(cfg.schedule, res.zeta0, cfg.gamma, t);
        const Proposal p = propose_theta(current.state.theta, bounds, rng);
        MapFit cand = fit_at(current.state, p.theta);
        if (sa_accept(cand.bic, current.bic, zeta, rng)) {
            current = std::move(cand);
            ++res.accepted;
            if (current.bic < res.best.bic) res.best = current;
        }
        res.path.push_back(current.state.theta);
    }
    res.final = std::move(current);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

}  // namespace baytensor
