#pragma once

// Closed-form full conditionals for U_l, V_m, G and sigma^2, optionally
// tempered by a likelihood fraction b in (0, 1].
//
// Every factor update is written for the first predictor (or response) mode
// and applied to mode l (or m) by rotating that mode to the front of X, G and
// the factor list. Rotating predictor modes leaves <X, B>_L unchanged;
// rotating response modes permutes Y consistently, which the cached
// unfoldings below account for.

#include "baytensor/errors.hpp"
#include "baytensor/model.hpp"
#include "baytensor/rng.hpp"
#include "baytensor/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace baytensor {

/// Likelihood fraction b with 0 < b <= 1; b = 1 gives the ordinary full conditionals.
class Fraction {
public:
    constexpr Fraction() = default;
    explicit Fraction(double b) : b_(b) {
        if (!(b > 0.0 && b <= 1.0)) throw ConfigError("likelihood fraction b must lie in (0, 1], got " + std::to_string(b));
    }
    static constexpr Fraction full() { return {}; }
    constexpr double value() const noexcept { return b_; }

private:
    double b_ = 1.0;
};

namespace detail {

/// Predictor mode order with mode l first, the rest ascending.
inline std::vector<std::size_t> rotated_modes(std::size_t count, std::size_t first) {
    std::vector<std::size_t> order{first};
    for (std::size_t k = 0; k < count; ++k)
        if (k != first) order.push_back(k);
    return order;
}

}  // namespace detail

/// Data plus the unfoldings every update reads. Immutable after construction,
/// so one workspace may back several chains.
class GibbsWorkspace {
public:
    GibbsWorkspace(Tensor x, Tensor y, PriorConfig prior)
        : x_(std::move(x)), y_(std::move(y)), shape_(ModelShape::from_data(x_, y_)), prior_(prior) {
        prior_.validate();
        const std::size_t n = shape_.n_samples;
        x1_ = x_.as_matrix(n, shape_.P());
        y1_ = y_.as_matrix(n, shape_.Q());

        for (std::size_t l = 0; l < shape_.L(); ++l) {
            std::vector<std::size_t> perm{0};
            for (std::size_t k : detail::rotated_modes(shape_.L(), l)) perm.push_back(k + 1);
            const std::size_t rows = n * shape_.predictor[l];
            x_rot_.push_back(permute_modes(x_, perm).as_matrix(rows, x_.size() / rows));
        }
        for (std::size_t m = 0; m < shape_.M(); ++m) {
            std::vector<std::size_t> perm{0};
            for (std::size_t k = 0; k < shape_.M(); ++k)
                if (k != m) perm.push_back(k + 1);
            perm.push_back(m + 1);
            const std::size_t cols = shape_.response[m];
            y_tilde_.push_back(permute_modes(y_, perm).as_matrix(y_.size() / cols, cols));
        }
    }

    const Tensor& x() const noexcept { return x_; }
    const Tensor& y() const noexcept { return y_; }
    const ModelShape& shape() const noexcept { return shape_; }
    const PriorConfig& prior() const noexcept { return prior_; }

    /// X_(1): N x prod P.
    const Matrix& x1() const noexcept { return x1_; }
    /// Y_(1): N x prod Q.
    const Matrix& y1() const noexcept { return y1_; }
    /// X with predictor mode l rotated first, unfolded as (N P_l) x (prod of other P).
    const Matrix& x_rotated(std::size_t l) const { return x_rot_.at(l); }
    /// Y with response mode m rotated last, unfolded as (N prod of other Q) x Q_m.
    const Matrix& y_tilde(std::size_t m) const { return y_tilde_.at(m); }

    double residual_ss(const ParamState& s) const {
        return (y_.vec() - predict_mean(x_, assemble_B(s), shape_.L()).vec()).squaredNorm();
    }

private:
    Tensor x_;
    Tensor y_;
    ModelShape shape_;
    PriorConfig prior_;
    Matrix x1_;
    Matrix y1_;
    std::vector<Matrix> x_rot_;
    std::vector<Matrix> y_tilde_;
};

/// Cholesky of a symmetric positive-definite matrix. On failure adds
/// 1e-8 * mean(diag) to the diagonal once, then gives up.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& a, const std::string& what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) return llt;
    const double jitter = 1e-8 * a.diagonal().mean();
    warn(what + ": matrix not positive definite, retrying with diagonal jitter " + std::to_string(jitter));
    Matrix b = a;
    b.diagonal().array() += jitter;
    llt.compute(b);
    if (llt.info() != Eigen::Success)
        throw NumericalError(what + ": positive-definite factorization failed after jitter (dim " +
                             std::to_string(a.rows()) + ", mean diagonal " + std::to_string(a.diagonal().mean()) + ")");
    return llt;
}

/// Draw from N(precision^{-1} rhs, precision^{-1}) given precision = L L^T.
inline Vector gaussian_draw(const Eigen::LLT<Matrix>& llt, const Vector& rhs, Rng& rng) {
    Vector z(rhs.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return llt.solve(rhs) + llt.matrixU().solve(z);
}

/// Canonical-form Gaussian: N(precision^{-1} rhs, precision^{-1}).
struct GaussianConditional {
    Matrix precision;
    Vector rhs;

    Vector mean() const { return spd_factor(precision, "conditional mean").solve(rhs); }
    Matrix covariance() const {
        return spd_factor(precision, "conditional covariance").solve(Matrix::Identity(precision.rows(), precision.cols()));
    }
};

/// Rows of a factor share one precision; column j of rhs is the linear term of row j.
struct RowwiseGaussianConditional {
    Matrix precision;
    Matrix rhs;
};

/// C_(RxC) with vec Y = C vec U_l + vec E. Rows index (n, q_1..q_M), n fastest;
/// columns index (p_l, r_l), p_l fastest, matching vec U_l.
inline Matrix build_C(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_l) {
    const ModelShape& shape = ws.shape();
    const std::size_t L = shape.L();
    if (target_l >= L) throw ShapeError("build_C: predictor mode out of range");

    // B_(-): every factor applied except U_l.
    Tensor b_minus = s.g;
    for (std::size_t k = 0; k < L; ++k)
        if (k != target_l) b_minus = mode_n_product(b_minus, s.u[k], k);
    for (std::size_t m = 0; m < shape.M(); ++m) b_minus = mode_n_product(b_minus, s.v[m], L + m);

    std::vector<std::size_t> perm;
    for (std::size_t k = 0; k < L; ++k)
        if (k != target_l) perm.push_back(k);
    perm.push_back(target_l);
    for (std::size_t m = 0; m < shape.M(); ++m) perm.push_back(L + m);
    const Tensor b_rot = permute_modes(b_minus, perm);

    const std::size_t n = shape.n_samples;
    const std::size_t p_l = shape.predictor[target_l];
    const std::size_t r_l = s.theta.r[target_l];
    const std::size_t q = shape.Q();
    const std::size_t p_rest = shape.P() / p_l;

    // W[(n, p_l), (r_l, q)] = sum over the other predictor modes.
    Tensor w({n, p_l, r_l, q});
    w.as_matrix(n * p_l, r_l * q).noalias() = ws.x_rotated(target_l) * b_rot.as_matrix(p_rest, r_l * q);
    return permute_modes(w, {0, 3, 1, 2}).as_matrix(n * q, p_l * r_l);
}

/// D_(RxC) with Y~ = D V_m^T + E~, where Y~ is Y with response mode m unfolded
/// into columns (GibbsWorkspace::y_tilde). Rows index (n, other q), columns s_m.
inline Matrix build_D(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_m) {
    const ModelShape& shape = ws.shape();
    const std::size_t L = shape.L();
    const std::size_t M = shape.M();
    if (target_m >= M) throw ShapeError("build_D: response mode out of range");

    Tensor d_minus = s.g;
    for (std::size_t k = 0; k < L; ++k) d_minus = mode_n_product(d_minus, s.u[k], k);
    for (std::size_t m = 0; m < M; ++m)
        if (m != target_m) d_minus = mode_n_product(d_minus, s.v[m], L + m);

    std::vector<std::size_t> perm;
    for (std::size_t k = 0; k < L; ++k) perm.push_back(k);
    perm.push_back(L + target_m);
    for (std::size_t m = 0; m < M; ++m)
        if (m != target_m) perm.push_back(L + m);
    const Tensor d_rot = permute_modes(d_minus, perm);

    const std::size_t n = shape.n_samples;
    const std::size_t s_m = s.theta.s[target_m];
    const std::size_t q_rest = shape.Q() / shape.response[target_m];

    Tensor d({n, s_m, q_rest});
    d.as_matrix(n, s_m * q_rest).noalias() = ws.x1() * d_rot.as_matrix(shape.P(), s_m * q_rest);
    return permute_modes(d, {0, 2, 1}).as_matrix(n * q_rest, s_m);
}

/// Conditional of vec U_l given everything else, likelihood tempered by b.
inline GaussianConditional conditional_U(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_l,
                                         Fraction b = Fraction::full()) {
    const PriorConfig& pr = ws.prior();
    const Matrix c = build_C(s, ws, target_l);
    const double w = b.value() / s.sigma2;
    GaussianConditional out;
    out.precision.noalias() = w * (c.transpose() * c);
    out.precision.diagonal().array() += 1.0 / pr.var_u;
    out.rhs.noalias() = w * (c.transpose() * ws.y().vec());
    out.rhs.array() += pr.mu_u / pr.var_u;
    return out;
}

inline Matrix sample_U(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_l, Fraction b, Rng& rng) {
    const auto cond = conditional_U(s, ws, target_l, b);
    const Vector draw = gaussian_draw(spd_factor(cond.precision, "U_" + std::to_string(target_l + 1) + " update"),
                                      cond.rhs, rng);
    return Eigen::Map<const Matrix>(draw.data(), static_cast<Eigen::Index>(ws.shape().predictor[target_l]),
                                    static_cast<Eigen::Index>(s.theta.r[target_l]));
}

/// Conditional of V_m: the (I_{Q_m} (x) D) design decouples into Q_m
/// independent S_m-dimensional rows sharing one precision matrix.
inline RowwiseGaussianConditional conditional_V(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_m,
                                                Fraction b = Fraction::full()) {
    const PriorConfig& pr = ws.prior();
    const Matrix d = build_D(s, ws, target_m);
    const double w = b.value() / s.sigma2;
    RowwiseGaussianConditional out;
    out.precision.noalias() = w * (d.transpose() * d);
    out.precision.diagonal().array() += 1.0 / pr.var_v;
    out.rhs.noalias() = w * (d.transpose() * ws.y_tilde(target_m));
    out.rhs.array() += pr.mu_v / pr.var_v;
    return out;
}

inline Matrix sample_V(const ParamState& s, const GibbsWorkspace& ws, std::size_t target_m, Fraction b, Rng& rng) {
    const auto cond = conditional_V(s, ws, target_m, b);
    const auto llt = spd_factor(cond.precision, "V_" + std::to_string(target_m + 1) + " update");
    Matrix v(cond.rhs.cols(), cond.rhs.rows());
    for (Eigen::Index q = 0; q < cond.rhs.cols(); ++q) v.row(q) = gaussian_draw(llt, cond.rhs.col(q), rng).transpose();
    return v;
}

/// Pieces of the core update: A = X_(1) U with U = U_L (x) ... (x) U_1, and
/// V = V_M (x) ... (x) V_1, so that Y_(1) = A G_(RxC) V^T + E_(1).
struct CoreDesign {
    Matrix a;    // N x prod R
    Matrix v;    // prod Q x prod S
    Matrix vtv;  // V^T V
};

inline CoreDesign core_design(const ParamState& s, const GibbsWorkspace& ws) {
    CoreDesign cd;
    cd.a.noalias() = ws.x1() * kronecker_reversed(s.u);
    cd.v = kronecker_reversed(s.v);
    cd.vtv.noalias() = cd.v.transpose() * cd.v;
    return cd;
}

/// Conditional of vec G_(RxC) via the whitened response
/// Y= = Y_(1) V (V^T V)^{-1}, whose noise covariance is sigma^2 (V^T V)^{-1} (x) I_N.
inline GaussianConditional conditional_G(const ParamState& s, const GibbsWorkspace& ws, Fraction b = Fraction::full()) {
    const PriorConfig& pr = ws.prior();
    const CoreDesign cd = core_design(s, ws);
    const auto vtv_llt = spd_factor(cd.vtv, "V^T V in the core update");
    // (V^T V)^{-1} V^T Y_(1)^T, transposed.
    const Matrix y_white = vtv_llt.solve(cd.v.transpose() * ws.y1().transpose()).transpose();

    const double w = b.value() / s.sigma2;
    const Matrix ata = cd.a.transpose() * cd.a;
    GaussianConditional out;
    out.precision = w * kronecker(cd.vtv, ata);
    out.precision.diagonal().array() += 1.0 / pr.var_g;
    const Matrix lin = cd.a.transpose() * y_white * cd.vtv;  // R x S
    out.rhs = w * lin.reshaped();
    out.rhs.array() += pr.mu_g / pr.var_g;
    return out;
}

/// Partition of G's modes into (R_1..R_L) rows and (S_1..S_M) columns.
inline IndexPartition core_partition(std::size_t L, std::size_t M) {
    IndexPartition p;
    for (std::size_t k = 0; k < L; ++k) p.row_modes.push_back(k);
    for (std::size_t m = 0; m < M; ++m) p.col_modes.push_back(L + m);
    return p;
}

inline Tensor core_from_vec(const Vector& vec_g, const CoreDim& theta) {
    const std::size_t rows = product(theta.r);
    const std::size_t cols = product(theta.s);
    const Matrix gm = Eigen::Map<const Matrix>(vec_g.data(), static_cast<Eigen::Index>(rows),
                                               static_cast<Eigen::Index>(cols));
    return unmatricize(gm, theta.flat(), core_partition(theta.r.size(), theta.s.size()));
}

inline Tensor sample_G(const ParamState& s, const GibbsWorkspace& ws, Fraction b, Rng& rng) {
    const auto cond = conditional_G(s, ws, b);
    return core_from_vec(gaussian_draw(spd_factor(cond.precision, "core update"), cond.rhs, rng), s.theta);
}

/// IG(alpha + b N Q / 2, beta + b RSS / 2).
inline double sample_sigma2(const ParamState& s, const GibbsWorkspace& ws, Fraction b, Rng& rng) {
    const PriorConfig& pr = ws.prior();
    const double nq = static_cast<double>(ws.y().size());
    const double shape = pr.alpha + 0.5 * b.value() * nq;
    const double scale = pr.beta + 0.5 * b.value() * ws.residual_ss(s);
    return rng.inverse_gamma(shape, scale);
}

/// One deterministic-scan sweep: U_1..U_L, V_1..V_M, G, sigma^2.
inline ParamState gibbs_sweep(ParamState s, const GibbsWorkspace& ws, Rng& rng, Fraction b = Fraction::full()) {
    for (std::size_t l = 0; l < s.u.size(); ++l) s.u[l] = sample_U(s, ws, l, b, rng);
    for (std::size_t m = 0; m < s.v.size(); ++m) s.v[m] = sample_V(s, ws, m, b, rng);
    s.g = sample_G(s, ws, b, rng);
    s.sigma2 = sample_sigma2(s, ws, b, rng);
    return s;
}

/// Factors and core filled with their prior means; sigma^2 at the IG prior mode.
inline ParamState prior_mean_state(const CoreDim& theta, const ModelShape& shape, const PriorConfig& pr) {
    theta.validate(shape);
    ParamState s;
    s.theta = theta;
    for (std::size_t l = 0; l < shape.L(); ++l)
        s.u.push_back(Matrix::Constant(static_cast<Eigen::Index>(shape.predictor[l]),
                                       static_cast<Eigen::Index>(theta.r[l]), pr.mu_u));
    for (std::size_t m = 0; m < shape.M(); ++m)
        s.v.push_back(Matrix::Constant(static_cast<Eigen::Index>(shape.response[m]),
                                       static_cast<Eigen::Index>(theta.s[m]), pr.mu_v));
    s.g = Tensor(theta.flat());
    s.g.vec().setConstant(pr.mu_g);
    s.sigma2 = pr.beta / (pr.alpha + 1.0);
    return s;
}

/// Factors and core drawn from their priors; sigma^2 at the IG prior mode.
inline ParamState prior_draw_state(const CoreDim& theta, const ModelShape& shape, const PriorConfig& pr, Rng& rng) {
    ParamState s = prior_mean_state(theta, shape, pr);
    const double su = std::sqrt(pr.var_u), sv = std::sqrt(pr.var_v), sg = std::sqrt(pr.var_g);
    for (auto& u : s.u) u = u.unaryExpr([&](double mu) { return rng.normal(mu, su); });
    for (auto& v : s.v) v = v.unaryExpr([&](double mu) { return rng.normal(mu, sv); });
    for (double& g : s.g.data()) g = rng.normal(g, sg);
    return s;
}

}  // namespace baytensor
