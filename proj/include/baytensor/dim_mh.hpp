#pragma once

// Metropolis-Hastings moves on the core dimension theta driven by a
// fractional Bayes factor, and the full MCMC driver that interleaves them
// with fixed-theta Gibbs sweeps.
//
// Each iteration proposes a neighbour theta~ (L1 distance one), draws
// xi~ and xi= from the b-tempered posteriors at theta~ and at the current
// theta, and accepts with
//     min(1, pi(theta~) q(theta | theta~) / (pi(theta) q(theta~ | theta))
//            * [p(Y | xi~, theta~) / p(Y | xi=, theta)]^(1 - b)).

#include "baytensor/errors.hpp"
#include "baytensor/gibbs.hpp"
#include "baytensor/model.hpp"
#include "baytensor/rng.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace baytensor {

/// Prior mass over the bounded grid {1..bounds}. Only log-ratios are used, so
/// log_mass need not be normalized; an empty log_mass means uniform.
struct DimPrior {
    CoreDim bounds;
    std::function<double(const CoreDim&)> log_mass;

    double log_pi(const CoreDim& theta) const {
        if (!theta.within(bounds)) return -std::numeric_limits<double>::infinity();
        return log_mass ? log_mass(theta) : 0.0;
    }

    static DimPrior uniform(CoreDim bounds) { return {std::move(bounds), {}}; }
};

/// All grid points at L1 distance one from theta inside [1, bounds].
/// Order: coordinate by coordinate, the -1 move before the +1 move.
inline std::vector<CoreDim> neighbors(const CoreDim& theta, const CoreDim& bounds) {
    if (!theta.within(bounds)) throw ConfigError("theta " + theta.to_string() + " lies outside the bounds " + bounds.to_string());
    std::vector<CoreDim> out;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        if (theta[k] > 1) {
            CoreDim t = theta;
            --t[k];
            out.push_back(std::move(t));
        }
        if (theta[k] < bounds[k]) {
            CoreDim t = theta;
            ++t[k];
            out.push_back(std::move(t));
        }
    }
    return out;
}

struct Proposal {
    CoreDim theta;
    double log_q_forward = 0.0;  // log q(theta~ | theta)
    double log_q_reverse = 0.0;  // log q(theta | theta~)
};

/// Uniform draw over neighbors(theta); the reverse density uses the neighbour count of theta~.
inline Proposal propose_theta(const CoreDim& theta, const CoreDim& bounds, Rng& rng) {
    const auto nb = neighbors(theta, bounds);
    if (nb.empty()) throw ConfigError("theta has no neighbours: every bound equals one");
    Proposal p;
    p.theta = nb[rng.index(nb.size())];
    p.log_q_forward = -std::log(static_cast<double>(nb.size()));
    p.log_q_reverse = -std::log(static_cast<double>(neighbors(p.theta, bounds).size()));
    return p;
}

/// Carries a state to a new core dimension: overlapping entries are kept,
/// new factor columns and core entries are drawn from the prior.
inline ParamState resize_state(const ParamState& s, const CoreDim& theta, const ModelShape& shape, const PriorConfig& pr,
                               Rng& rng) {
    ParamState out = prior_draw_state(theta, shape, pr, rng);
    for (std::size_t l = 0; l < s.u.size(); ++l) {
        const auto c = std::min(s.u[l].cols(), out.u[l].cols());
        out.u[l].leftCols(c) = s.u[l].leftCols(c);
    }
    for (std::size_t m = 0; m < s.v.size(); ++m) {
        const auto c = std::min(s.v[m].cols(), out.v[m].cols());
        out.v[m].leftCols(c) = s.v[m].leftCols(c);
    }
    // Copy the overlapping block of the core.
    const Dims& od = out.g.dims();
    const Dims& sd = s.g.dims();
    Dims idx(od.size(), 0);
    for (std::size_t flat = 0; flat < out.g.size(); ++flat) {
        bool inside = true;
        for (std::size_t k = 0; k < od.size(); ++k) inside = inside && idx[k] < sd[k];
        if (inside) out.g[flat] = s.g.at(std::span<const std::size_t>(idx));
        for (std::size_t k = 0; k < od.size() && ++idx[k] == od[k]; ++k) idx[k] = 0;
    }
    out.sigma2 = s.sigma2;
    return out;
}

/// Where a fractional fit starts: at the prior means, or from the chain's
/// current state carried to the target dimension.
enum class FitInit { prior_mean, warm };

/// n_sweeps b-tempered Gibbs sweeps at theta, started from `start`.
inline ParamState fractional_fit(ParamState start, const GibbsWorkspace& ws, Fraction b, std::size_t n_sweeps, Rng& rng) {
    for (std::size_t i = 0; i < n_sweeps; ++i) start = gibbs_sweep(std::move(start), ws, rng, b);
    return start;
}

/// Fractional fit from the prior-mean initialization.
inline ParamState fractional_fit(const CoreDim& theta, const GibbsWorkspace& ws, Fraction b, std::size_t n_sweeps,
                                 Rng& rng) {
    return fractional_fit(prior_mean_state(theta, ws.shape(), ws.prior()), ws, b, n_sweeps, rng);
}

/// log A for the dimension move, from the two log-likelihoods and the prior and proposal terms.
inline double mh_log_ratio(double loglik_new, double loglik_old, double log_pi_new, double log_pi_old,
                           const Proposal& prop, Fraction b) {
    if (log_pi_new == -std::numeric_limits<double>::infinity()) return log_pi_new;
    return (log_pi_new - log_pi_old) + (prop.log_q_reverse - prop.log_q_forward) +
           (1.0 - b.value()) * (loglik_new - loglik_old);
}

inline double state_log_likelihood(const ParamState& s, const GibbsWorkspace& ws) {
    return log_likelihood(ws.y(), predict_mean(ws.x(), assemble_B(s), ws.shape().L()), s.sigma2);
}

/// Acceptance probability in [0, 1], evaluated at single draws xi~ and xi=.
inline double mh_accept_prob(const ParamState& xi_new, const ParamState& xi_old, const GibbsWorkspace& ws, Fraction b,
                             const DimPrior& prior, const Proposal& prop) {
    const double log_a = mh_log_ratio(state_log_likelihood(xi_new, ws), state_log_likelihood(xi_old, ws),
                                      prior.log_pi(xi_new.theta), prior.log_pi(xi_old.theta), prop, b);
    return log_a >= 0.0 ? 1.0 : std::exp(log_a);
}

struct MhConfig {
    Fraction b{0.1};
    std::size_t iterations = 1000;
    std::size_t burn_in = 500;
    std::size_t thin = 1;
    std::uint64_t seed = 0;
    std::optional<CoreDim> initial_theta;  // all ones when unset
    std::size_t inner_sweeps = 5;
    FitInit fit_init = FitInit::warm;  // short prior-mean fits are far from converged at desk scale
    bool move_dimension = true;  // false: plain Gibbs at initial_theta
    TraceStorage storage = TraceStorage::coefficient;

    void validate() const {
        if (iterations == 0) throw ConfigError("mcmc iterations must be positive");
        if (burn_in >= iterations) throw ConfigError("mcmc burn_in must be smaller than iterations");
        if (thin == 0) throw ConfigError("mcmc thin must be at least 1");
        if (move_dimension && b.value() >= 1.0) throw ConfigError("fractional b must be strictly below 1");
        if (move_dimension && inner_sweeps == 0) throw ConfigError("inner_sweeps must be at least 1");
    }
};

struct McmcResult {
    ChainTrace trace;
    std::vector<CoreDim> theta_path;  // theta after every iteration, burn-in included
    std::size_t proposals = 0;
    std::size_t accepted = 0;
    bool aborted = false;
    std::string error;
    double seconds = 0.0;

    double acceptance_rate() const {
        return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
    }
};

/// The full sampler. A numerical failure stops the chain and returns the
/// draws collected so far with `aborted` set.
inline McmcResult run_mcmc(const GibbsWorkspace& ws, const DimPrior& dim_prior, const MhConfig& cfg) {
    cfg.validate();
    const ModelShape& shape = ws.shape();
    const CoreDim theta0 = cfg.initial_theta.value_or(CoreDim::ones(shape));
    theta0.validate(shape);
    if (!theta0.within(dim_prior.bounds))
        throw ConfigError("initial theta " + theta0.to_string() + " lies outside the prior bounds");
    for (std::size_t k = 0; k < dim_prior.bounds.size(); ++k)
        if (dim_prior.bounds[k] > CoreDim::extents(shape)[k])
            throw ConfigError("theta bounds may not exceed the data extents");

    const auto start = std::chrono::steady_clock::now();
    Rng rng = Rng::stream(cfg.seed, {0});
    McmcResult res;
    res.trace.shape = shape;
    res.trace.burn_in = cfg.burn_in;
    res.trace.seed = cfg.seed;

    ParamState state = prior_draw_state(theta0, shape, ws.prior(), rng);
    try {
        for (std::size_t t = 1; t <= cfg.iterations; ++t) {
            if (cfg.move_dimension) {
                const Proposal prop = propose_theta(state.theta, dim_prior.bounds, rng);
                ParamState start_new = cfg.fit_init == FitInit::warm
                                           ? resize_state(state, prop.theta, shape, ws.prior(), rng)
                                           : prior_mean_state(prop.theta, shape, ws.prior());
                ParamState start_old =
                    cfg.fit_init == FitInit::warm ? state : prior_mean_state(state.theta, shape, ws.prior());
                ParamState xi_new = fractional_fit(std::move(start_new), ws, cfg.b, cfg.inner_sweeps, rng);
                ParamState xi_old = fractional_fit(std::move(start_old), ws, cfg.b, cfg.inner_sweeps, rng);
                const double log_a =
                    mh_log_ratio(state_log_likelihood(xi_new, ws), state_log_likelihood(xi_old, ws),
                                 dim_prior.log_pi(prop.theta), dim_prior.log_pi(state.theta), prop, cfg.b);
                ++res.proposals;
                if (std::log(rng.uniform()) < log_a) {
                    ++res.accepted;
                    state = std::move(xi_new);
                }
            }
            state = gibbs_sweep(std::move(state), ws, rng);
            res.theta_path.push_back(state.theta);

            if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
                ChainTrace::Draw d;
                d.iteration = t;
                d.theta = state.theta;
                d.sigma2 = state.sigma2;
                if (cfg.storage == TraceStorage::coefficient)
                    d.b = assemble_B(state);
                else
                    d.factors = state;
                res.trace.append(std::move(d));
            }
        }
    } catch (const NumericalError& e) {
        res.aborted = true;
        res.error = e.what();
        warn(std::string("mcmc chain aborted: ") + e.what());
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

}  // namespace baytensor
