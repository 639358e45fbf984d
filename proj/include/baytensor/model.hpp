#pragma once

// Tensor-on-tensor regression Y = <X, B>_L + E with a Tucker-structured
// coefficient B = [[G; U_1..U_L, V_1..V_M]] and iid N(0, sigma^2) noise.

#include "baytensor/errors.hpp"
#include "baytensor/rng.hpp"
#include "baytensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace baytensor {

/// N samples, predictor extents P_1..P_L, response extents Q_1..Q_M.
struct ModelShape {
    std::size_t n_samples = 0;
    Dims predictor;
    Dims response;

    std::size_t L() const noexcept { return predictor.size(); }
    std::size_t M() const noexcept { return response.size(); }
    std::size_t P() const { return product(predictor); }
    std::size_t Q() const { return product(response); }

    /// Extents of B: (P_1..P_L, Q_1..Q_M).
    Dims coefficient_dims() const {
        Dims d = predictor;
        d.insert(d.end(), response.begin(), response.end());
        return d;
    }
    Dims x_dims(std::size_t n) const {
        Dims d{n};
        d.insert(d.end(), predictor.begin(), predictor.end());
        return d;
    }
    Dims y_dims(std::size_t n) const {
        Dims d{n};
        d.insert(d.end(), response.begin(), response.end());
        return d;
    }

    void validate() const {
        if (n_samples == 0) throw ShapeError("model needs at least one sample");
        if (predictor.empty() || response.empty()) throw ShapeError("model needs L >= 1 and M >= 1");
        for (std::size_t d : predictor)
            if (d == 0) throw ShapeError("predictor extents must be positive");
        for (std::size_t d : response)
            if (d == 0) throw ShapeError("response extents must be positive");
    }

    /// Shape implied by X (N, P...) and Y (N, Q...).
    static ModelShape from_data(const Tensor& x, const Tensor& y) {
        if (x.order() < 2 || y.order() < 2)
            throw ShapeError("X and Y need a sample mode plus at least one further mode");
        if (x.dim(0) != y.dim(0))
            throw ShapeError("X has " + std::to_string(x.dim(0)) + " samples but Y has " + std::to_string(y.dim(0)));
        ModelShape s{x.dim(0), Dims(x.dims().begin() + 1, x.dims().end()), Dims(y.dims().begin() + 1, y.dims().end())};
        s.validate();
        return s;
    }

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Core dimension theta = (R_1..R_L, S_1..S_M).
struct CoreDim {
    Dims r;
    Dims s;

    std::size_t size() const noexcept { return r.size() + s.size(); }

    /// Coordinate k of the flattened tuple (R..., S...).
    std::size_t operator[](std::size_t k) const { return k < r.size() ? r[k] : s[k - r.size()]; }
    std::size_t& operator[](std::size_t k) { return k < r.size() ? r[k] : s[k - r.size()]; }

    Dims flat() const {
        Dims d = r;
        d.insert(d.end(), s.begin(), s.end());
        return d;
    }
    static CoreDim from_flat(std::span<const std::size_t> flat, std::size_t L) {
        if (L > flat.size()) throw ShapeError("core dimension tuple shorter than L");
        return {Dims(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(L)),
                Dims(flat.begin() + static_cast<std::ptrdiff_t>(L), flat.end())};
    }
    static CoreDim ones(const ModelShape& shape) { return {Dims(shape.L(), 1), Dims(shape.M(), 1)}; }
    /// Upper corner (P_1..P_L, Q_1..Q_M).
    static CoreDim extents(const ModelShape& shape) { return {shape.predictor, shape.response}; }

    std::string to_string() const { return dims_to_string(flat()); }

    /// 1 <= R_l <= bound and 1 <= S_m <= bound coordinate-wise.
    bool within(const CoreDim& bounds) const {
        if (r.size() != bounds.r.size() || s.size() != bounds.s.size()) return false;
        for (std::size_t k = 0; k < size(); ++k)
            if ((*this)[k] < 1 || (*this)[k] > bounds[k]) return false;
        return true;
    }

    void validate(const ModelShape& shape) const {
        if (r.size() != shape.L() || s.size() != shape.M())
            throw ShapeError("core dimension " + to_string() + " has the wrong arity for L=" +
                             std::to_string(shape.L()) + ", M=" + std::to_string(shape.M()));
        if (!within(extents(shape)))
            throw ConfigError("core dimension " + to_string() + " must satisfy 1 <= R_l <= P_l and 1 <= S_m <= Q_m");
    }

    friend bool operator==(const CoreDim&, const CoreDim&) = default;
    friend auto operator<=>(const CoreDim& a, const CoreDim& b) { return a.flat() <=> b.flat(); }
};

/// Isotropic normal priors on vec U_l, vec V_m, vec G and IG(alpha, beta) on sigma^2.
struct PriorConfig {
    double mu_u = 0.0;
    double mu_v = 0.0;
    double mu_g = 0.0;
    double var_u = 1.0;
    double var_v = 1.0;
    double var_g = 1.0;
    double alpha = 1.0;
    double beta = 1.0;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive and finite");
        };
        positive(var_u, "var_u");
        positive(var_v, "var_v");
        positive(var_g, "var_g");
        positive(alpha, "alpha");
        positive(beta, "beta");
        for (double mu : {mu_u, mu_v, mu_g})
            if (!std::isfinite(mu)) throw ConfigError("prior means must be finite");
    }
};

/// One draw or iterate xi = ({U_l}, {V_m}, G, sigma^2) at core dimension theta.
struct ParamState {
    CoreDim theta;
    std::vector<Matrix> u;  // P_l x R_l
    std::vector<Matrix> v;  // Q_m x S_m
    Tensor g;               // dims theta
    double sigma2 = 1.0;

    void validate(const ModelShape& shape) const {
        theta.validate(shape);
        if (u.size() != shape.L() || v.size() != shape.M()) throw ShapeError("factor count does not match L, M");
        for (std::size_t l = 0; l < u.size(); ++l)
            if (static_cast<std::size_t>(u[l].rows()) != shape.predictor[l] ||
                static_cast<std::size_t>(u[l].cols()) != theta.r[l])
                throw ShapeError("U_" + std::to_string(l + 1) + " has the wrong shape");
        for (std::size_t m = 0; m < v.size(); ++m)
            if (static_cast<std::size_t>(v[m].rows()) != shape.response[m] ||
                static_cast<std::size_t>(v[m].cols()) != theta.s[m])
                throw ShapeError("V_" + std::to_string(m + 1) + " has the wrong shape");
        if (g.dims() != theta.flat()) throw ShapeError("core tensor dims do not match theta");
        if (!(sigma2 > 0.0)) throw ShapeError("sigma2 must be positive");
    }

    /// Factor list ordered as the modes of B: U_1..U_L, V_1..V_M.
    std::vector<Matrix> factors() const {
        std::vector<Matrix> f(u);
        f.insert(f.end(), v.begin(), v.end());
        return f;
    }
};

inline Tensor assemble_B(const ParamState& s) {
    const auto f = s.factors();
    return tucker_assemble(s.g, f);
}

/// Y_hat = <X, B>_L.
inline Tensor predict_mean(const Tensor& x, const Tensor& b, std::size_t l_contract) {
    if (l_contract + 1 != x.order()) throw ShapeError("X must have one sample mode plus the L contracted modes");
    return contracted_product(x, b, l_contract);
}

/// Sum of iid N(yhat, sigma2) log densities over every entry.
inline double log_likelihood(const Tensor& y, const Tensor& yhat, double sigma2) {
    if (y.dims() != yhat.dims()) throw ShapeError("log_likelihood: Y and Y_hat dims differ");
    const double rss = (y.vec() - yhat.vec()).squaredNorm();
    const auto n = static_cast<double>(y.size());
    return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * rss / sigma2;
}

/// sum_l P_l R_l + sum_m Q_m S_m + prod R_l * prod S_m.
inline std::size_t param_count(const ModelShape& shape, const CoreDim& theta) {
    if (theta.r.size() != shape.L() || theta.s.size() != shape.M())
        throw ShapeError("core dimension arity does not match the model shape");
    std::size_t n = 0;
    for (std::size_t l = 0; l < shape.L(); ++l) n += shape.predictor[l] * theta.r[l];
    for (std::size_t m = 0; m < shape.M(); ++m) n += shape.response[m] * theta.s[m];
    return n + product(theta.r) * product(theta.s);
}

enum class TraceStorage { coefficient, factors };

/// Post-burn-in record of one chain.
struct ChainTrace {
    struct Draw {
        std::size_t iteration = 0;
        CoreDim theta;
        double sigma2 = 1.0;
        std::optional<Tensor> b;            // set under TraceStorage::coefficient
        std::optional<ParamState> factors;  // set under TraceStorage::factors

        Tensor coefficient() const {
            if (b) return *b;
            if (factors) return assemble_B(*factors);
            throw ShapeError("trace draw carries neither B nor Tucker factors");
        }
    };

    ModelShape shape;
    std::size_t burn_in = 0;
    std::uint64_t seed = 0;
    std::vector<Draw> draws;

    bool empty() const noexcept { return draws.empty(); }

    void append(Draw d) {
        if (!draws.empty() && d.iteration <= draws.back().iteration)
            throw ShapeError("trace iterations must be strictly increasing");
        draws.push_back(std::move(d));
    }

    /// Most frequent theta among the stored draws; ties go to the smaller tuple.
    CoreDim posterior_mode() const {
        if (draws.empty()) throw ShapeError("posterior mode of an empty trace");
        std::vector<std::pair<CoreDim, std::size_t>> counts;
        for (const auto& d : draws) {
            auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == d.theta; });
            if (it == counts.end())
                counts.emplace_back(d.theta, 1);
            else
                ++it->second;
        }
        std::sort(counts.begin(), counts.end());
        return std::max_element(counts.begin(), counts.end(),
                                [](const auto& a, const auto& b) { return a.second < b.second; })
            ->first;
    }

    /// Pointwise average of the stored coefficient draws.
    Tensor mean_coefficient() const {
        if (draws.empty()) throw ShapeError("mean coefficient of an empty trace");
        Tensor acc(shape.coefficient_dims());
        for (const auto& d : draws) acc.vec() += d.coefficient().vec();
        acc.vec() /= static_cast<double>(draws.size());
        return acc;
    }
};

/// Empirical quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::vector<double>& values, double q) {
    if (values.empty()) throw ShapeError("quantile of an empty sample");
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (hi == lo) return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

struct PredictiveSummary {
    Tensor mean;   // average of per-draw means <X_new, B_d>
    Tensor lower;  // equal-tailed (1 - level)/2 quantile of the predictive samples
    Tensor upper;
    double level = 0.95;
    std::size_t n_samples = 0;
    std::vector<Tensor> samples;  // filled only when requested
};

/// Posterior predictive draws vec Y_new ~ N(vec <X_new, B_d>, sigma2_d I) for
/// every stored draw d, summarized entrywise.
inline PredictiveSummary posterior_predict(const ChainTrace& trace, const Tensor& x_new, std::size_t draws_per_sample,
                                           double level, Rng& rng, bool keep_samples = false) {
    if (trace.empty()) throw ShapeError("posterior_predict needs a non-empty trace");
    if (draws_per_sample == 0) throw ConfigError("draws_per_sample must be at least 1");
    if (!(level >= 0.0 && level < 1.0)) throw ConfigError("credible level must lie in [0, 1)");
    const ModelShape& shape = trace.shape;
    if (x_new.order() != shape.L() + 1 || Dims(x_new.dims().begin() + 1, x_new.dims().end()) != shape.predictor)
        throw ShapeError("X_new predictor dims " + dims_to_string(x_new.dims()) + " do not match the trained shape");

    const Dims out_dims = shape.y_dims(x_new.dim(0));
    const std::size_t n_out = product(out_dims);
    const std::size_t total = trace.draws.size() * draws_per_sample;

    PredictiveSummary res{Tensor(out_dims), Tensor(out_dims), Tensor(out_dims), level, total, {}};
    // samples[k * total + s]: entry-major so each entry's sample is contiguous.
    std::vector<double> samples(n_out * total);
    std::size_t s = 0;
    for (const auto& d : trace.draws) {
        const Tensor mean_d = predict_mean(x_new, d.coefficient(), shape.L());
        res.mean.vec() += mean_d.vec();
        const double sd = std::sqrt(d.sigma2);
        for (std::size_t rep = 0; rep < draws_per_sample; ++rep, ++s) {
            Tensor sample(out_dims);
            for (std::size_t k = 0; k < n_out; ++k) {
                const double v = mean_d[k] + sd * rng.normal();
                samples[k * total + s] = v;
                sample[k] = v;
            }
            if (keep_samples) res.samples.push_back(std::move(sample));
        }
    }
    res.mean.vec() /= static_cast<double>(trace.draws.size());

    const double tail = 0.5 * (1.0 - level);
    std::vector<double> scratch(total);
    for (std::size_t k = 0; k < n_out; ++k) {
        std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(k * total), total, scratch.begin());
        res.lower[k] = empirical_quantile(scratch, tail);
        res.upper[k] = empirical_quantile(scratch, 1.0 - tail);
    }
    return res;
}

/// Mean over sets of ||Y - Y_hat||_F^2 / ||Y||_F^2.
inline double rpe(std::span<const Tensor> truth, std::span<const Tensor> pred) {
    if (truth.size() != pred.size()) throw ShapeError("rpe: truth and prediction lists differ in length");
    if (truth.empty()) throw ShapeError("rpe of an empty list");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].dims() != pred[i].dims()) throw ShapeError("rpe: mismatched dims in set " + std::to_string(i));
        const double denom = frobenius_norm_sq(truth[i]);
        if (denom == 0.0) throw NumericalError("rpe: truth set " + std::to_string(i) + " is identically zero");
        acc += (truth[i].vec() - pred[i].vec()).squaredNorm() / denom;
    }
    return acc / static_cast<double>(truth.size());
}

struct OlsFit {
    Matrix coef;  // B_(P x Q): prod P rows, prod Q columns
    std::size_t rank = 0;
    bool rank_deficient = false;

    /// Coefficient as a tensor with dims (P..., Q...).
    Tensor as_tensor(const ModelShape& shape) const {
        return Tensor(shape.coefficient_dims(), std::vector<double>(coef.data(), coef.data() + coef.size()));
    }
};

/// Column-wise least squares of Y_(1) on X_(1); minimum-norm when X_(1) is rank deficient.
inline OlsFit ols_baseline(const Tensor& x, const Tensor& y) {
    const ModelShape shape = ModelShape::from_data(x, y);
    const auto xm = x.as_matrix(shape.n_samples, shape.P());
    const auto ym = y.as_matrix(shape.n_samples, shape.Q());
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xm);
    OlsFit fit;
    fit.rank = static_cast<std::size_t>(cod.rank());
    fit.rank_deficient = fit.rank < shape.P();
    if (fit.rank_deficient)
        warn("OLS design has rank " + std::to_string(fit.rank) + " < " + std::to_string(shape.P()) +
             " predictors; returning the minimum-norm solution");
    fit.coef = cod.solve(ym);
    return fit;
}

}  // namespace baytensor
