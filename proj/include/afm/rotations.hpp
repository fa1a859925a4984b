#pragma once

#include <array>

#include "afm/estimators.hpp"

namespace afm {

/// The five asymptotically equivalent rotations between true and estimated
/// factors (all require an APC fit and simulation-known F0, Lambda0):
///   H0 = (L0'L0/N)(F0'F~/T) D^-2      H1 = (L0'L0)(L~'L0)^-1
///   H2 = (F0'F0)^-1 (F0'F~)            H3 = (F~'F0/T)^-1
///   H4 = (L0'L~/N) D^-2
struct RotationSet {
    std::array<Matrix, 5> H;
    double max_pairwise_dev = 0.0;  // max_l ||H_l - H_0||_F
};

/// Probability limit of F~'F0/T built from population moments.
/// Sigma = Sigma_L^{1/2} Sigma_F Sigma_L^{1/2} = Upsilon diag(D2_r) Upsilon',
/// Q = D_r Upsilon' Sigma_L^{-1/2}.
struct QLimit {
    Matrix Q;
    Vector D2_r;
    Matrix Upsilon;
    Matrix Sigma_F;
    Matrix Sigma_Lambda;
};

Matrix rotation_matrix(int ell, const Matrix& F0, const Matrix& Lambda0,
                       const FactorDecomposition& fd);

RotationSet rotation_set(const Matrix& F0, const Matrix& Lambda0, const FactorDecomposition& fd);

QLimit q_analytic(const Matrix& Sigma_F, const Matrix& Sigma_Lambda);

/// F~'F0/T.
Matrix q_empirical(const Matrix& F0, const FactorDecomposition& fd);

/// Flip columns of fd.F and fd.Lambda together so diag(F0'F) > 0.
FactorDecomposition align_signs(const FactorDecomposition& fd, const Matrix& F0);

}  // namespace afm
