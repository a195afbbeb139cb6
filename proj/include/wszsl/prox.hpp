#pragma once

#include "wszsl/types.hpp"

#include <Eigen/SVD>

#include <sstream>

namespace wszsl {

namespace detail {

inline void check_prox_args(const Matrix& m, double tau, const char* op) {
    if (m.rows() < 1 || m.cols() < 1) throw InvalidInput(std::string(op) + ": empty matrix");
    if (!m.allFinite()) throw InvalidInput(std::string(op) + ": non-finite input");
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw InvalidParameter(std::string(op) + ": tau must be positive and finite");
}

}  // namespace detail

/// Column-wise group shrinkage: the proximal map of tau * sum_i ||e_i||_2.
///
/// Column i becomes (1 - tau / ||q_i||) q_i when tau < ||q_i||, and zero otherwise
/// (the tie tau == ||q_i|| maps to zero).
inline Matrix prox_l21(const Matrix& q, double tau) {
    detail::check_prox_args(q, tau, "prox_l21");
    Matrix out = Matrix::Zero(q.rows(), q.cols());
    for (Index i = 0; i < q.cols(); ++i) {
        const double norm = q.col(i).norm();
        if (tau < norm) out.col(i) = ((norm - tau) / norm) * q.col(i);
    }
    return out;
}

/// Singular value thresholding: the proximal map of tau * ||Z||_*.
///
/// Components with sigma_i <= 1e-12 * sigma_max are treated as outside the numerical rank.
inline Matrix svt(const Matrix& m, double tau) {
    detail::check_prox_args(m, tau, "svt");
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "svt: SVD failed for " << m.rows() << "x" << m.cols()
            << " matrix with Frobenius norm " << m.norm();
        throw NumericalError(msg.str());
    }
    const Vector& sigma = svd.singularValues();
    Matrix out = Matrix::Zero(m.rows(), m.cols());
    if (sigma.size() == 0 || sigma(0) == 0.0) return out;
    const double cutoff = 1e-12 * sigma(0);
    Index rank = 0;
    while (rank < sigma.size() && sigma(rank) > cutoff) ++rank;
    Index kept = 0;
    while (kept < rank && sigma(kept) > tau) ++kept;
    if (kept == 0) return out;
    const Vector shrunk = (sigma.head(kept).array() - tau).matrix();
    out.noalias() = svd.matrixU().leftCols(kept) * shrunk.asDiagonal() *
                    svd.matrixV().leftCols(kept).transpose();
    return out;
}

}  // namespace wszsl
