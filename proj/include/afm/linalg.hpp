#pragma once

#include <Eigen/Dense>

namespace afm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Singular values below this fraction of the leading one are treated as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Thin rank-k SVD Z ~ U diag(D) V'. Each column of U has its largest-magnitude
/// entry positive, and V is flipped in tandem, so results are reproducible.
/// Within a block of tied singular values the basis is whatever the symmetric
/// eigensolver returned.
struct SvdResult {
    Matrix U;  // T x k
    Vector D;  // k, nonincreasing, >= 0
    Matrix V;  // N x k
    int k = 0;
};

struct ThresholdedSpectrum {
    Vector D_gamma;
    double gamma = 0.0;
};

struct EigenDecomposition {
    Vector values;   // descending
    Matrix vectors;  // columns match values
};

/// Z = X / sqrt(N T).
Matrix normalize_panel(const Matrix& X);

/// Rank-k truncated SVD computed from the eigen-decomposition of the smaller
/// Gram matrix (Z'Z when N <= T, else ZZ').
SvdResult truncated_svd(const Matrix& Z, int k);

/// Full spectrum of Z (min(T,N) squared singular values, descending).
Vector squared_singular_values(const Matrix& Z);

/// Soft-threshold: max(D_j - gamma, 0).
ThresholdedSpectrum svt(const Vector& D, double gamma);

/// Cyclic Jacobi eigen-decomposition. Deliberately shares no code with
/// truncated_svd so tests can use it as an independent oracle.
EigenDecomposition dense_eigen_oracle(const Matrix& S);

/// Flip column signs of U (and V in tandem) so that the largest-|entry| element
/// of every U column is positive.
void apply_sign_convention(Matrix& U, Matrix& V);

/// Symmetric square root and inverse square root via eigen-decomposition.
/// Eigenvalues in (-1e-10, 0) are clipped to zero; anything more negative
/// throws a numerical error.
Matrix sym_sqrt(const Matrix& S);
Matrix sym_inv_sqrt(const Matrix& S);

/// Reciprocal condition number estimate (min/max singular value).
double rcond(const Matrix& A);

/// Inverse of a square matrix; throws Degenerate when rcond < 1e-12.
Matrix checked_inverse(const Matrix& A, const char* what);

bool is_symmetric(const Matrix& S, double tol);

}  // namespace afm
