#pragma once

#include "wszsl/linalg.hpp"
#include "wszsl/prox.hpp"
#include "wszsl/qp_smo.hpp"
#include "wszsl/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wszsl {

/// Test images, web images with their (possibly wrong) category codes, and the auxiliary
/// dictionary. `x_priv` holds the privileged textual features of the web images.
struct Problem {
    FeatureMatrix x_test;   // d x n^t
    FeatureMatrix x_web;    // d x n^w
    SemanticMatrix a_web;   // m x n^w
    Dictionary d_aux;       // d x m
    std::optional<FeatureMatrix> x_priv;  // d~ x n^w

    Index feature_dim() const { return d_aux.rows(); }
    Index semantic_dim() const { return d_aux.cols(); }
    Index n_test() const { return x_test.cols(); }
    Index n_web() const { return x_web.cols(); }

    void validate() const {
        const Index d = d_aux.rows(), m = d_aux.cols();
        if (d < 1 || m < 1) throw DimensionError("problem: empty auxiliary dictionary");
        if (x_test.cols() < 1) throw DimensionError("problem: no test instances");
        require_shape(x_test, d, x_test.cols(), "X^t");
        require_shape(x_web, d, x_web.cols(), "X^w");
        require_shape(a_web, m, x_web.cols(), "A^w");
        if (x_priv) require_shape(*x_priv, x_priv->rows(), x_web.cols(), "X~^w");
        require_finite(x_test, "X^t");
        require_finite(x_web, "X^w");
        require_finite(a_web, "A^w");
        require_finite(d_aux, "D^a");
        if (x_priv) require_finite(*x_priv, "X~^w");
    }
};

enum class Mode { full, zsl_only, wsl_only, sim1, sim2, full_pi };

inline std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::full: return "full";
        case Mode::zsl_only: return "zsl_only";
        case Mode::wsl_only: return "wsl_only";
        case Mode::sim1: return "sim1";
        case Mode::sim2: return "sim2";
        case Mode::full_pi: return "full_pi";
    }
    return "full";
}

inline Mode parse_mode(std::string_view name) {
    for (Mode m : {Mode::full, Mode::zsl_only, Mode::wsl_only, Mode::sim1, Mode::sim2, Mode::full_pi})
        if (to_string(m) == name) return m;
    throw InvalidParameter("unknown mode '" + std::string(name) + "'");
}

enum class InitStrategy { ridge, zeros };

struct SolverConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    double lambda4 = 1.0;
    double b = 2.0;
    double gamma = 1.0;
    double rho = 0.1;
    double mu0 = 0.1;
    double mu_max = 1e6;
    double nu = 1e-5;
    int max_iters = 500;
    double qp_tol = 1e-8;
    long qp_max_iters = 0;
    long seed = 0;
    InitStrategy init = InitStrategy::ridge;
    bool allow_ridge = true;

    void validate() const {
        for (double v : {lambda1, lambda2, lambda3, lambda4, gamma})
            if (!(v >= 0.0) || !std::isfinite(v))
                throw InvalidParameter("config: trade-off parameters must be finite and >= 0");
        for (double v : {b, rho, mu0, mu_max, nu, qp_tol})
            if (!(v > 0.0) || !std::isfinite(v))
                throw InvalidParameter("config: b, rho, mu0, mu_max, nu, qp_tol must be positive");
        if (max_iters < 1) throw InvalidParameter("config: max_iters must be >= 1");
        if (mu0 > mu_max) throw InvalidParameter("config: mu0 exceeds mu_max");
    }
};

/// Mode variants are configuration filters over the same iteration.
inline SolverConfig apply_mode(SolverConfig config, Mode mode) {
    switch (mode) {
        case Mode::zsl_only: config.lambda3 = 0.0; config.lambda4 = 0.0; break;
        case Mode::wsl_only: config.lambda1 = 0.0; break;
        case Mode::sim1: config.lambda2 = 0.0; break;
        case Mode::sim2: config.lambda3 = 0.0; break;
        case Mode::full:
        case Mode::full_pi: break;
    }
    return config;
}

struct SolverState {
    Dictionary d_test;
    SemanticMatrix a_test;
    SemanticMatrix z_aux;
    Matrix e_slack;
    ImportanceWeights theta;
    Matrix r_mult;
    Matrix t_mult;
    std::optional<Dictionary> w_tilde;
    double mu = 0.1;
    int iter = 0;
};

/// Which optional blocks of the objective participate in a solve.
///
/// With lambda3 = lambda4 = 0 no web term remains in the objective, so E^w, theta and R are
/// left out of the iteration entirely. The privileged block is present only in full_pi mode.
struct ActiveTerms {
    bool web = true;
    bool privileged = false;

    static ActiveTerms from(const SolverConfig& config, bool privileged) {
        return {!(config.lambda3 == 0.0 && config.lambda4 == 0.0), privileged};
    }
};

struct Solution {
    SemanticMatrix a_test;
    ImportanceWeights theta;
    Dictionary d_test;
    std::optional<Dictionary> w_tilde;
    bool converged = false;
    int iterations = 0;
    double e_residual_inf = 0.0;
    double z_residual_inf = 0.0;
    std::vector<double> objective_trace;
    std::vector<std::pair<double, double>> residual_trace;
    std::vector<double> mu_trace;
    std::vector<std::string> warnings;
};

/// Called once per outer iteration after the multiplier and penalty updates.
using IterationObserver = std::function<void(const SolverState&)>;

inline double nuclear_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues().sum();
}

inline double l21_norm(const Matrix& m) { return m.colwise().norm().sum(); }

/// X^w - D^t A^w.
inline Matrix web_residual(const Problem& p, const Dictionary& d_test) {
    return p.x_web - d_test * p.a_web;
}

/// The augmented Lagrangian at the current state, multipliers and penalty.
inline double lagrangian(const SolverState& s, const Problem& p, const SolverConfig& c,
                         const ActiveTerms& terms) {
    double value = 0.5 * (p.x_test - s.d_test * s.a_test).squaredNorm() +
                   0.5 * c.lambda1 * (s.d_test - p.d_aux).squaredNorm() +
                   c.lambda2 * nuclear_norm(s.z_aux);
    const Matrix a_gap = s.a_test - s.z_aux;
    value += 0.5 * s.mu * a_gap.squaredNorm() + (s.t_mult.array() * a_gap.array()).sum();
    if (terms.web && p.n_web() > 0) {
        const double nw = static_cast<double>(p.n_web()), nt = static_cast<double>(p.n_test());
        const Vector mmd = p.x_web * s.theta / nw - p.x_test.rowwise().sum() / nt;
        const Matrix e_gap = s.e_slack - web_residual(p, s.d_test) * s.theta.asDiagonal();
        value += 0.5 * c.lambda3 * mmd.squaredNorm() + c.lambda4 * l21_norm(s.e_slack) +
                 0.5 * s.mu * e_gap.squaredNorm() + (s.r_mult.array() * e_gap.array()).sum();
    }
    if (terms.privileged && s.w_tilde && p.x_priv) {
        value += 0.5 * c.gamma * (web_residual(p, s.d_test) - *s.w_tilde * *p.x_priv).squaredNorm();
    }
    return value;
}

/// The unaugmented objective at (D^t, A^t, theta), with E^w and Z^t eliminated.
inline double primal_objective(const SolverState& s, const Problem& p, const SolverConfig& c,
                               const ActiveTerms& terms) {
    double value = 0.5 * (p.x_test - s.d_test * s.a_test).squaredNorm() +
                   0.5 * c.lambda1 * (s.d_test - p.d_aux).squaredNorm() +
                   c.lambda2 * nuclear_norm(s.a_test);
    if (terms.web && p.n_web() > 0) {
        const double nw = static_cast<double>(p.n_web()), nt = static_cast<double>(p.n_test());
        const Vector mmd = p.x_web * s.theta / nw - p.x_test.rowwise().sum() / nt;
        value += 0.5 * c.lambda3 * mmd.squaredNorm() +
                 c.lambda4 * l21_norm(web_residual(p, s.d_test) * s.theta.asDiagonal());
    }
    if (terms.privileged && s.w_tilde && p.x_priv) {
        value += 0.5 * c.gamma * (web_residual(p, s.d_test) - *s.w_tilde * *p.x_priv).squaredNorm();
    }
    return value;
}

/// E^w = prox_l21(Q, lambda4 / mu),  Q = (X^w - D^t A^w) Theta - R / mu.
inline Matrix update_e(const SolverState& s, const Problem& p, const SolverConfig& c) {
    const Matrix q = web_residual(p, s.d_test) * s.theta.asDiagonal() - s.r_mult / s.mu;
    if (c.lambda4 == 0.0) return q;
    return prox_l21(q, c.lambda4 / s.mu);
}

/// Z^t = svt(A^t + T / mu, lambda2 / mu).
inline SemanticMatrix update_z(const SolverState& s, const SolverConfig& c) {
    Matrix m = s.a_test + s.t_mult / s.mu;
    if (c.lambda2 == 0.0) return m;
    return svt(m, c.lambda2 / s.mu);
}

/// Closed-form dictionary update; includes the slack-mapping term when terms.privileged.
inline Dictionary update_d(const SolverState& s, const Problem& p, const SolverConfig& c,
                           const ActiveTerms& terms, std::vector<std::string>* warnings = nullptr) {
    Matrix numer = p.x_test * s.a_test.transpose() + c.lambda1 * p.d_aux;
    Matrix gram = s.a_test * s.a_test.transpose();
    gram.diagonal().array() += c.lambda1;
    if (terms.web && p.n_web() > 0) {
        const auto theta = s.theta.asDiagonal();
        const Matrix weighted_codes = p.a_web * theta;  // A^w Theta
        numer += (s.mu * (p.x_web * theta) - s.mu * s.e_slack - s.r_mult) * weighted_codes.transpose();
        gram += s.mu * weighted_codes * weighted_codes.transpose();
    }
    if (terms.privileged && s.w_tilde && p.x_priv) {
        numer += c.gamma * (p.x_web - *s.w_tilde * *p.x_priv) * p.a_web.transpose();
        gram += c.gamma * p.a_web * p.a_web.transpose();
    }
    SpdSolveOptions opts;
    opts.allow_ridge = c.allow_ridge;
    // D G = N  <=>  G D' = N' for symmetric G.
    const Matrix dt = spd_solve(gram, numer.transpose(), "update_d", warnings, opts);
    return dt.transpose();
}

/// A^t = (D^t' D^t + mu I)^-1 (D^t' X^t + mu Z^t - T).
inline SemanticMatrix update_a(const SolverState& s, const Problem& p) {
    Matrix gram = s.d_test.transpose() * s.d_test;
    gram.diagonal().array() += s.mu;
    const Matrix rhs = s.d_test.transpose() * p.x_test + s.mu * s.z_aux - s.t_mult;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("update_a: Cholesky factorization failed");
    return llt.solve(rhs);
}

inline QpProblem theta_qp(const SolverState& s, const Problem& p, const SolverConfig& c) {
    return build_theta_qp(p.x_web, p.x_test, s.d_test, p.a_web, s.e_slack, s.r_mult, c.lambda3,
                          s.mu, c.b);
}

/// Importance weights by SMO on the theta subproblem, warm-started from s.theta.
inline QpSolution solve_theta(const SolverState& s, const Problem& p, const SolverConfig& c) {
    SmoOptions opts;
    opts.tol = c.qp_tol;
    opts.max_iters = c.qp_max_iters;
    return smo_solve(theta_qp(s, p, c), opts, s.theta);
}

inline ImportanceWeights update_theta(const SolverState& s, const Problem& p, const SolverConfig& c) {
    return solve_theta(s, p, c).theta;
}

/// W~ = (X^w - D^t A^w) X~' (X~ X~')^-1.
inline Dictionary update_w_tilde(const SolverState& s, const Problem& p, const SolverConfig& c,
                                 std::vector<std::string>* warnings = nullptr) {
    if (!p.x_priv) throw InvalidParameter("update_w_tilde: no privileged features");
    const Matrix& xp = *p.x_priv;
    const Matrix gram = xp * xp.transpose();
    const Matrix rhs = xp * web_residual(p, s.d_test).transpose();
    SpdSolveOptions opts;
    opts.allow_ridge = c.allow_ridge;
    return spd_solve(gram, rhs, "update_w_tilde", warnings, opts).transpose();
}

/// Auxiliary dictionary D^a = X^a A^a' (A^a A^a' + I)^-1.
inline Dictionary train_auxiliary_dictionary(const FeatureMatrix& x_aux, const SemanticMatrix& a_aux) {
    if (x_aux.cols() < 1) throw DimensionError("train_auxiliary_dictionary: no instances");
    if (a_aux.cols() != x_aux.cols())
        throw DimensionError("train_auxiliary_dictionary: X^a and A^a differ in instance count");
    require_finite(x_aux, "X^a");
    require_finite(a_aux, "A^a");
    Matrix gram = a_aux * a_aux.transpose();
    gram.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(gram);
    return llt.solve(a_aux * x_aux.transpose()).transpose();
}

inline SolverState initial_state(const Problem& p, const SolverConfig& c, const ActiveTerms& terms,
                                 std::vector<std::string>* warnings = nullptr) {
    const Index d = p.feature_dim(), m = p.semantic_dim(), nw = p.n_web(), nt = p.n_test();
    SolverState s;
    s.d_test = p.d_aux;
    if (c.init == InitStrategy::ridge) {
        Matrix gram = p.d_aux.transpose() * p.d_aux;
        gram.diagonal().array() += 1.0;
        s.a_test = gram.llt().solve(p.d_aux.transpose() * p.x_test);
    } else {
        s.a_test = Matrix::Zero(m, nt);
    }
    s.z_aux = s.a_test;
    s.e_slack = Matrix::Zero(d, nw);
    s.theta = Vector::Ones(nw);
    s.r_mult = Matrix::Zero(d, nw);
    s.t_mult = Matrix::Zero(m, nt);
    s.mu = c.mu0;
    if (terms.privileged) s.w_tilde = update_w_tilde(s, p, c, warnings);
    return s;
}

namespace detail {

inline bool state_finite(const SolverState& s) {
    return s.d_test.allFinite() && s.a_test.allFinite() && s.z_aux.allFinite() &&
           s.e_slack.allFinite() && s.theta.allFinite() && s.r_mult.allFinite() &&
           s.t_mult.allFinite() && (!s.w_tilde || s.w_tilde->allFinite());
}

}  // namespace detail

/// Inexact ALM over (E^w, Z^t, D^t, A^t, theta[, W~]) with multiplier updates and a
/// geometrically increasing penalty. `config` is used as given; see solve() for modes.
inline Solution solve_configured(const Problem& problem, const SolverConfig& config,
                                 bool privileged, const IterationObserver& observer = {}) {
    problem.validate();
    config.validate();
    if (privileged && !problem.x_priv)
        throw InvalidParameter("privileged solve requires x_priv");
    const Index nw = problem.n_web();
    if (nw > 0 && config.b * static_cast<double>(nw) < static_cast<double>(nw))
        throw InfeasibleError("importance weights infeasible: b < 1 leaves no theta with sum n^w");

    const ActiveTerms terms = ActiveTerms::from(config, privileged);
    Solution out;
    SolverState s = initial_state(problem, config, terms, &out.warnings);

    for (int t = 1; t <= config.max_iters; ++t) {
        s.iter = t;
        try {
            if (terms.web) s.e_slack = update_e(s, problem, config);
            s.z_aux = update_z(s, config);
            s.d_test = update_d(s, problem, config, terms, &out.warnings);
            s.a_test = update_a(s, problem);
            if (terms.web && nw > 0) {
                const QpSolution qp = solve_theta(s, problem, config);
                if (!qp.converged) {
                    out.warnings.push_back("theta QP hit its iteration budget at outer iteration " +
                                           std::to_string(t));
                }
                s.theta = qp.theta;
            }
            if (terms.privileged) s.w_tilde = update_w_tilde(s, problem, config, &out.warnings);
        } catch (const NonFiniteError& e) {
            throw DivergedError(e.what(), t);
        } catch (const InvalidInput& e) {
            // The data were validated above, so a rejected argument here is an overflowed iterate.
            throw DivergedError(e.what(), t);
        }

        double e_res = 0.0;
        if (terms.web && nw > 0) {
            const Matrix e_gap = s.e_slack - web_residual(problem, s.d_test) * s.theta.asDiagonal();
            s.r_mult += s.mu * e_gap;
            e_res = e_gap.cwiseAbs().maxCoeff();
        }
        const Matrix z_gap = s.a_test - s.z_aux;
        s.t_mult += s.mu * z_gap;
        const double z_res = z_gap.cwiseAbs().maxCoeff();

        if (!detail::state_finite(s)) throw DivergedError("non-finite iterate", t);

        out.objective_trace.push_back(primal_objective(s, problem, config, terms));
        out.residual_trace.emplace_back(e_res, z_res);
        out.mu_trace.push_back(s.mu);
        s.mu = std::min(config.mu_max, (1.0 + config.rho) * s.mu);
        if (observer) observer(s);

        out.iterations = t;
        out.e_residual_inf = e_res;
        out.z_residual_inf = z_res;
        if (e_res < config.nu && z_res < config.nu) {
            out.converged = true;
            break;
        }
    }

    out.a_test = std::move(s.a_test);
    out.theta = std::move(s.theta);
    out.d_test = std::move(s.d_test);
    out.w_tilde = std::move(s.w_tilde);
    return out;
}

inline Solution solve(const Problem& problem, const SolverConfig& config, Mode mode,
                      const IterationObserver& observer = {}) {
    const bool privileged = mode == Mode::full_pi;
    if (privileged && !problem.x_priv)
        throw InvalidParameter("full_pi mode requires privileged features");
    return solve_configured(problem, apply_mode(config, mode), privileged, observer);
}

}  // namespace wszsl
