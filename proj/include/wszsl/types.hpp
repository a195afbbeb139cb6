#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wszsl {

/// Dense real matrix. Feature and semantic matrices store one instance per column.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using FeatureMatrix = Matrix;   // d x n
using SemanticMatrix = Matrix;  // m x n, or m x C for category prototypes
using Dictionary = Matrix;      // d x m (visual-semantic) or d x d~ (slack map)
using ImportanceWeights = Vector;

using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise malformed input data.
class InvalidInput : public Error {
 public:
    using Error::Error;
};

/// A scalar parameter outside its admissible range.
class InvalidParameter : public Error {
 public:
    using Error::Error;
};

class DimensionError : public Error {
 public:
    using Error::Error;
};

/// Decomposition or linear solve failure.
class NumericalError : public Error {
 public:
    using Error::Error;
};

/// A linear system whose entries overflowed to Inf/NaN.
class NonFiniteError : public NumericalError {
 public:
    using NumericalError::NumericalError;
};

/// Empty feasible set for the importance weights.
class InfeasibleError : public Error {
 public:
    using Error::Error;
};

class DivergedError : public Error {
 public:
    DivergedError(const std::string& what, int iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    int iteration() const noexcept { return iteration_; }

 private:
    int iteration_;
};

class ParseError : public Error {
 public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " at line " + std::to_string(line)), message_(what), line_(line) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& message() const noexcept { return message_; }

 private:
    std::string message_;
    std::size_t line_;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* name) {
    if (!m.allFinite()) throw InvalidInput(std::string(name) + " contains non-finite entries");
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                             "x" + std::to_string(cols));
    }
}

}  // namespace wszsl
