#pragma once

#include "wszsl/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

namespace wszsl {

/// minimize 0.5 theta' H theta - f' theta  s.t.  1' theta = sum_target,  0 <= theta <= upper_bound.
struct QpProblem {
    Matrix h_matrix;
    Vector f_vector;
    double sum_target = 0.0;
    double upper_bound = 0.0;

    Index size() const { return f_vector.size(); }

    double objective(const Vector& theta) const {
        return 0.5 * theta.dot(h_matrix * theta) - f_vector.dot(theta);
    }
};

struct QpSolution {
    Vector theta;
    double objective = 0.0;
    long iterations = 0;
    double kkt_violation = 0.0;
    bool converged = false;
};

struct SmoOptions {
    double tol = 1e-8;
    /// 0 selects the default budget of 100 * n^2 pair updates.
    long max_iters = 0;
    /// Bound-activity threshold.
    double eps = 1e-12;
};

/// Called after every pair update with the current iterate and its objective.
using SmoObserver = std::function<void(const Vector& theta, double objective)>;

namespace detail {

inline void validate_qp(const QpProblem& p) {
    const Index n = p.size();
    if (n < 1) throw DimensionError("smo_solve: empty problem");
    require_shape(p.h_matrix, n, n, "H");
    if (!p.h_matrix.allFinite() || !p.f_vector.allFinite())
        throw InvalidInput("smo_solve: non-finite H or f");
    const double asym = (p.h_matrix - p.h_matrix.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9 * std::max(1.0, p.h_matrix.cwiseAbs().maxCoeff()))
        throw InvalidInput("smo_solve: H is not symmetric");
    if (!(p.upper_bound > 0.0) || !(p.sum_target > 0.0))
        throw InvalidParameter("smo_solve: sum_target and upper_bound must be positive");
    if (p.upper_bound * static_cast<double>(n) < p.sum_target)
        throw InfeasibleError("smo_solve: b * n < sum_target, feasible set is empty");
}

inline bool is_feasible(const Vector& theta, const QpProblem& p, double tol = 1e-9) {
    if (theta.size() != p.size() || !theta.allFinite()) return false;
    if (std::abs(theta.sum() - p.sum_target) > tol) return false;
    return theta.minCoeff() >= -tol && theta.maxCoeff() <= p.upper_bound + tol;
}

}  // namespace detail

/// Pairwise SMO with maximal-violating-pair selection.
///
/// Each step moves mass delta from coordinate j to coordinate i, so the sum constraint is
/// preserved exactly and the box is kept by clipping delta. `start`, when feasible, warm-starts
/// the iteration; otherwise theta = (sum_target / n) * 1 is used.
inline QpSolution smo_solve(const QpProblem& problem, const SmoOptions& opts = {},
                            const std::optional<Vector>& start = std::nullopt,
                            const SmoObserver& observer = {}) {
    detail::validate_qp(problem);
    if (!(opts.tol > 0.0)) throw InvalidParameter("smo_solve: tol must be positive");
    const Index n = problem.size();
    const Matrix& H = problem.h_matrix;
    const double b = problem.upper_bound;
    const long budget = opts.max_iters > 0 ? opts.max_iters : 100L * n * n;

    Vector theta;
    if (start && detail::is_feasible(*start, problem)) {
        theta = start->cwiseMax(0.0).cwiseMin(b);
    } else {
        theta = Vector::Constant(n, problem.sum_target / static_cast<double>(n));
    }
    Vector grad = H * theta - problem.f_vector;
    double objective = problem.objective(theta);

    QpSolution sol;
    long iter = 0;
    double violation = 0.0;
    bool fresh_grad = true;
    for (;; ++iter) {
        // i may increase, j may decrease.
        Index up = -1, down = -1;
        double best_up = -std::numeric_limits<double>::infinity();
        double best_down = std::numeric_limits<double>::infinity();
        for (Index k = 0; k < n; ++k) {
            const double neg_g = -grad(k);
            if (theta(k) < b - opts.eps && neg_g > best_up) {
                best_up = neg_g;
                up = k;
            }
            if (theta(k) > opts.eps && neg_g < best_down) {
                best_down = neg_g;
                down = k;
            }
        }
        violation = (up < 0 || down < 0 || up == down) ? 0.0 : std::max(0.0, best_up - best_down);
        if (violation <= opts.tol && !fresh_grad) {
            // Confirm against an exact gradient before stopping.
            grad.noalias() = H * theta - problem.f_vector;
            fresh_grad = true;
            --iter;
            continue;
        }
        if (violation <= opts.tol || iter >= budget) break;
        fresh_grad = false;

        const Index i = up, j = down;
        const double slope = grad(i) - grad(j);  // < 0
        const double curvature = H(i, i) + H(j, j) - 2.0 * H(i, j);
        const double max_step = std::min(b - theta(i), theta(j));
        double delta = curvature > 0.0 ? -slope / curvature : max_step;
        bool clipped = false;
        if (delta >= max_step) {
            delta = max_step;
            clipped = true;
        }
        if (!(delta > 0.0)) break;

        if (clipped && max_step == theta(j)) {
            theta(i) += theta(j);
            theta(j) = 0.0;
        } else if (clipped) {
            theta(j) -= b - theta(i);
            theta(i) = b;
        } else {
            theta(i) += delta;
            theta(j) -= delta;
        }
        grad.noalias() += delta * (H.col(i) - H.col(j));
        objective += delta * slope + 0.5 * delta * delta * curvature;
        if (observer) observer(theta, objective);
    }

    sol.theta = std::move(theta);
    sol.objective = problem.objective(sol.theta);
    sol.iterations = iter;
    sol.kkt_violation = violation;
    sol.converged = violation <= opts.tol;
    return sol;
}

/// Assembles the quadratic program for the importance weights with everything else held fixed.
///
/// With M = X^w - D^t A^w:
///   H = lambda3 / (n^w)^2 * X^w' X^w + mu * diag(||m_i||^2)
///   f = lambda3 / (n^w n^t) * X^w' X^t 1 + mu * (m_i' e_i)_i + ((R o M)' 1)
inline QpProblem build_theta_qp(const FeatureMatrix& xw, const FeatureMatrix& xt,
                                const Dictionary& dt, const SemanticMatrix& aw, const Matrix& ew,
                                const Matrix& r_mult, double lambda3, double mu, double b) {
    const Index d = xw.rows(), nw = xw.cols(), nt = xt.cols(), m = dt.cols();
    require_shape(xt, d, nt, "X^t");
    require_shape(dt, d, m, "D^t");
    require_shape(aw, m, nw, "A^w");
    require_shape(ew, d, nw, "E^w");
    require_shape(r_mult, d, nw, "R");
    if (nw < 1 || nt < 1) throw DimensionError("build_theta_qp: empty web or test set");

    const Matrix resid = xw - dt * aw;
    const double nw_d = static_cast<double>(nw), nt_d = static_cast<double>(nt);

    QpProblem qp;
    qp.h_matrix = (lambda3 / (nw_d * nw_d)) * (xw.transpose() * xw);
    qp.h_matrix.diagonal() += mu * resid.colwise().squaredNorm().transpose();
    qp.f_vector = (lambda3 / (nw_d * nt_d)) * (xw.transpose() * xt.rowwise().sum());
    qp.f_vector += mu * resid.cwiseProduct(ew).colwise().sum().transpose();
    qp.f_vector += r_mult.cwiseProduct(resid).colwise().sum().transpose();
    qp.sum_target = nw_d;
    qp.upper_bound = b;
    return qp;
}

}  // namespace wszsl
