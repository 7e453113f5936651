#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "slowfast/errors.hpp"

namespace slowfast {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Largest real part over the spectrum of a square matrix.
inline double spectral_abscissa(const Matrix& M)
{
    if (M.rows() == 1) return M(0, 0);
    Eigen::EigenSolver<Matrix> solver(M, false);
    return solver.eigenvalues().real().maxCoeff();
}

/// Smallest real part over the spectrum.
inline double spectral_floor(const Matrix& M)
{
    if (M.rows() == 1) return M(0, 0);
    Eigen::EigenSolver<Matrix> solver(M, false);
    return solver.eigenvalues().real().minCoeff();
}

/// Decay rate beta of e^{Bt} for t >= 0. Throws unless every eigenvalue of B
/// has strictly negative real part (the fast part must be exponentially stable).
inline double fast_decay_rate(const Matrix& B)
{
    if (B.rows() == 0 || B.rows() != B.cols()) {
        throw ConfigError("fast linear part B must be a non-empty square matrix");
    }
    const double abscissa = spectral_abscissa(B);
    if (!(abscissa < 0.0)) {
        std::ostringstream msg;
        msg << "H1 violated: B has an eigenvalue with real part " << abscissa
            << " >= 0, so e^{Bt} does not decay for t >= 0";
        throw HypothesisError(msg.str());
    }
    return -abscissa;
}

/// Transient constant K of a diagonalizable matrix: condition number of its
/// eigenvector basis (1 for normal matrices).
inline double transient_constant(const Matrix& M)
{
    if (M.rows() == 1) return 1.0;
    Eigen::EigenSolver<Matrix> solver(M, true);
    const Eigen::MatrixXcd V = solver.eigenvectors();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
    const auto& s = svd.singularValues();
    if (s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(s.size() - 1);
}

/// Matrix exponential; Eigen's scaling-and-squaring Padé for m > 1.
inline Matrix expm(const Matrix& M)
{
    if (M.rows() == 1) return Matrix::Constant(1, 1, std::exp(M(0, 0)));
    return M.exp();
}

/// Solves B S + S B^T = -I. S is the stationary covariance of dη = Bη dt + dW.
inline Matrix stationary_covariance(const Matrix& B)
{
    const auto m = B.rows();
    if (m == 1) return Matrix::Constant(1, 1, -0.5 / B(0, 0));
    const Matrix I = Matrix::Identity(m, m);
    Matrix kron(m * m, m * m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            kron.block(i * m, j * m, m, m) = B(i, j) * I;
        }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        kron.block(i * m, i * m, m, m) += B;
    }
    const Vector rhs = -Eigen::Map<const Vector>(I.data(), m * m);
    const Vector vec = kron.fullPivLu().solve(rhs);
    Matrix S = Eigen::Map<const Matrix>(vec.data(), m, m);
    return 0.5 * (S + S.transpose());
}

/// Lower Cholesky factor tolerant of a numerically semi-definite input.
inline Matrix covariance_factor(const Matrix& S)
{
    if (S.rows() == 1) return Matrix::Constant(1, 1, std::sqrt(std::max(S(0, 0), 0.0)));
    Eigen::LDLT<Matrix> ldlt(S);
    const Matrix L = ldlt.matrixL();
    Vector d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    return ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
}

/// One-step weights of the exponential integrator for Z' = B Z + q(τ) with q
/// linear on [0, h]:
///   Z(h) = phi Z(0) + w0 q(0) + w1 q(h)
/// exact for linear forcing. Read off a 3m x 3m block exponential.
struct ExponentialWeights {
    Matrix phi;
    Matrix w0;
    Matrix w1;
};

inline ExponentialWeights exponential_weights(const Matrix& B, double h)
{
    const auto m = B.rows();
    if (m == 1) {
        const double b = B(0, 0);
        const double z = b * h;
        const double e = std::exp(z);
        double phi1;  // (e^z - 1)/z
        double phi2;  // (e^z - 1 - z)/z^2
        if (std::abs(z) < 1e-4) {
            phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
            phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
        } else {
            phi1 = std::expm1(z) / z;
            phi2 = (std::expm1(z) - z) / (z * z);
        }
        // ∫_0^h e^{b(h-u)} du = h phi1,  ∫_0^h e^{b(h-u)} u/h du = h phi2
        ExponentialWeights w;
        w.phi = Matrix::Constant(1, 1, e);
        w.w1 = Matrix::Constant(1, 1, h * phi2);
        w.w0 = Matrix::Constant(1, 1, h * phi1 - h * phi2);
        return w;
    }
    Matrix big = Matrix::Zero(3 * m, 3 * m);
    big.block(0, 0, m, m) = B * h;
    big.block(0, m, m, m) = Matrix::Identity(m, m) * h;
    big.block(m, 2 * m, m, m) = Matrix::Identity(m, m) * h;
    const Matrix E = big.exp();
    ExponentialWeights w;
    w.phi = E.block(0, 0, m, m);
    const Matrix int0 = E.block(0, m, m, m);            // ∫_0^h e^{B(h-u)} du
    const Matrix int1 = E.block(0, 2 * m, m, m) / h;    // ∫_0^h e^{B(h-u)} u/h du
    w.w1 = int1;
    w.w0 = int0 - int1;
    return w;
}

}  // namespace slowfast
