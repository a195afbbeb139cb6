#pragma once

#include "wszsl/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <string>
#include <vector>

namespace wszsl {

struct SpdSolveOptions {
    bool allow_ridge = true;
    double relative_floor = 1e-10;
    double ridge = 1e-8;
};

/// Solves G X = B for symmetric positive (semi)definite G.
///
/// When the smallest eigenvalue of G is at or below relative_floor * trace(G) / n, a ridge
/// of `ridge * I` is added and a message is appended to `warnings` (if given). With ridge
/// disabled a near-singular G raises NumericalError.
inline Matrix spd_solve(const Matrix& g, const Matrix& b, const char* what,
                        std::vector<std::string>* warnings = nullptr,
                        const SpdSolveOptions& opts = {}) {
    const Index n = g.rows();
    if (g.cols() != n || b.rows() != n)
        throw DimensionError(std::string(what) + ": incompatible system dimensions");
    if (!g.allFinite() || !b.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite system");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success)
        throw NumericalError(std::string(what) + ": eigenvalue computation failed");
    const double min_eig = eig.eigenvalues()(0);
    const double floor = opts.relative_floor * g.trace() / static_cast<double>(n);
    Matrix system = g;
    if (min_eig <= floor) {
        if (!opts.allow_ridge) {
            throw NumericalError(std::string(what) + ": system matrix is singular (min eigenvalue " +
                                 std::to_string(min_eig) + ")");
        }
        system.diagonal().array() += opts.ridge;
        if (warnings) {
            warnings->push_back(std::string(what) + ": near-singular system (min eigenvalue " +
                                std::to_string(min_eig) + "), added ridge " +
                                std::to_string(opts.ridge));
        }
    }
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string(what) + ": Cholesky factorization failed");
    return llt.solve(b);
}

}  // namespace wszsl
