#include "afm/rotations.hpp"

#include <cmath>
#include <string>

namespace afm {

namespace {

void check_inputs(const Matrix& F0, const Matrix& Lambda0, const FactorDecomposition& fd) {
    require(fd.flavor == Flavor::APC, ErrorKind::InvalidInput,
            "rotation matrices are defined for APC fits");
    require(F0.rows() == fd.F.rows() && Lambda0.rows() == fd.Lambda.rows() &&
                F0.cols() == fd.r && Lambda0.cols() == fd.r,
            ErrorKind::InvalidInput, "true factors/loadings do not match the fit dimensions");
}

// scale: product of the norms of the two factors of A.
Matrix inverse_or_degenerate(const Matrix& A, double scale, const char* what) {
    const Vector s = Eigen::JacobiSVD<Matrix>(A).singularValues();
    if (rcond(A) < 1e-12 || s(s.size() - 1) < 1e-10 * scale)
        throw Error(ErrorKind::Degenerate,
                    std::string("degenerate geometry: ") + what +
                        " is singular (estimated and true spaces nearly orthogonal)");
    return A.partialPivLu().inverse();
}

}  // namespace

Matrix rotation_matrix(int ell, const Matrix& F0, const Matrix& Lambda0,
                       const FactorDecomposition& fd) {
    check_inputs(F0, Lambda0, fd);
    const double T = static_cast<double>(fd.F.rows());
    const double N = static_cast<double>(fd.Lambda.rows());
    const Matrix& Ft = fd.F;
    const Matrix& Lt = fd.Lambda;
    require(fd.D2.minCoeff() > 0.0, ErrorKind::Degenerate, "zero eigenvalue in D^2");
    const Vector d2_inv = fd.D2.cwiseInverse();

    switch (ell) {
        case 0:
            return (Lambda0.transpose() * Lambda0 / N) * (F0.transpose() * Ft / T) *
                   d2_inv.asDiagonal();
        case 1:
            return (Lambda0.transpose() * Lambda0) *
                   inverse_or_degenerate(Lt.transpose() * Lambda0, Lt.norm() * Lambda0.norm(),
                                         "Lambda~'Lambda0");
        case 2:
            return inverse_or_degenerate(F0.transpose() * F0, F0.squaredNorm(), "F0'F0") * (F0.transpose() * Ft);
        case 3:
            return inverse_or_degenerate(Ft.transpose() * F0 / T, Ft.norm() * F0.norm() / T, "F~'F0/T");
        case 4:
            return (Lambda0.transpose() * Lt / N) * d2_inv.asDiagonal();
        default:
            throw Error(ErrorKind::InvalidIndex,
                        "rotation index must be in 0..4, got " + std::to_string(ell));
    }
}

RotationSet rotation_set(const Matrix& F0, const Matrix& Lambda0, const FactorDecomposition& fd) {
    RotationSet out;
    for (int ell = 0; ell < 5; ++ell) {
        out.H[static_cast<std::size_t>(ell)] = rotation_matrix(ell, F0, Lambda0, fd);
        const Matrix& H = out.H[static_cast<std::size_t>(ell)];
        if (rcond(H) < 1e-12)
            throw Error(ErrorKind::Degenerate, "rotation H" + std::to_string(ell) + " is singular");
        out.max_pairwise_dev = std::max(out.max_pairwise_dev, (H - out.H[0]).norm());
    }
    return out;
}

QLimit q_analytic(const Matrix& Sigma_F, const Matrix& Sigma_Lambda) {
    require(Sigma_F.rows() == Sigma_F.cols() && Sigma_Lambda.rows() == Sigma_Lambda.cols() &&
                Sigma_F.rows() == Sigma_Lambda.rows(),
            ErrorKind::InvalidInput, "Sigma_F and Sigma_Lambda must be r x r");
    const Matrix root = sym_sqrt(Sigma_Lambda);
    const Matrix inv_root = sym_inv_sqrt(Sigma_Lambda);
    const Matrix sigma = root * Sigma_F * root;

    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()));
    require(eig.info() == Eigen::Success, ErrorKind::Numerical,
            "eigen-decomposition of Sigma did not converge");
    const Eigen::Index r = sigma.rows();
    Vector d2 = eig.eigenvalues().reverse();
    Matrix ups = eig.eigenvectors().rowwise().reverse();
    require(d2.minCoeff() > 0.0, ErrorKind::Numerical, "Sigma is not positive definite");
    for (Eigen::Index j = 0; j + 1 < r; ++j) {
        require(d2(j) - d2(j + 1) > 1e-8 * d2(j), ErrorKind::Numerical,
                "non-distinct eigenvalues of Sigma_L^{1/2} Sigma_F Sigma_L^{1/2}");
    }
    Matrix none(r, 0);
    apply_sign_convention(ups, none);

    QLimit q;
    q.D2_r = d2;
    q.Upsilon = ups;
    q.Sigma_F = Sigma_F;
    q.Sigma_Lambda = Sigma_Lambda;
    q.Q = d2.cwiseSqrt().asDiagonal() * ups.transpose() * inv_root;
    return q;
}

Matrix q_empirical(const Matrix& F0, const FactorDecomposition& fd) {
    require(fd.flavor == Flavor::APC, ErrorKind::InvalidInput, "q_empirical expects an APC fit");
    require(F0.rows() == fd.F.rows(), ErrorKind::InvalidInput, "F0 has the wrong number of rows");
    return fd.F.transpose() * F0 / static_cast<double>(fd.F.rows());
}

FactorDecomposition align_signs(const FactorDecomposition& fd, const Matrix& F0) {
    require(F0.rows() == fd.F.rows() && F0.cols() == fd.F.cols(), ErrorKind::InvalidInput,
            "F0 does not match the fitted factors");
    FactorDecomposition out = fd;
    const Vector overlap = (F0.transpose() * fd.F).diagonal();
    for (Eigen::Index j = 0; j < overlap.size(); ++j) {
        if (overlap(j) < 0.0) {
            out.F.col(j) *= -1.0;
            out.Lambda.col(j) *= -1.0;
        }
    }
    return out;
}

}  // namespace afm
