#include "afm/estimators.hpp"

#include <cmath>
#include <random>
#include <string>

namespace afm {

const char* to_string(Flavor f) noexcept {
    switch (f) {
        case Flavor::APC: return "APC";
        case Flavor::PC: return "PC";
        case Flavor::RPC: return "RPC";
    }
    return "?";
}

namespace {

struct Scales {
    double sqrtT;
    double sqrtN;
};

Scales scales_of(const PanelData& panel) {
    return {std::sqrt(static_cast<double>(panel.T())), std::sqrt(static_cast<double>(panel.N()))};
}

void check_rank(const PanelData& panel, int r) {
    const auto m = std::min(panel.T(), panel.N());
    require(r >= 1 && r <= m, ErrorKind::InvalidRank,
            "number of factors r=" + std::to_string(r) + " outside [1, " + std::to_string(m) + "]");
}

// Shared by PC and RPC: F = sqrt(T) U S, Lambda = sqrt(N) V S.
FactorDecomposition balanced_fit(const PanelData& panel, const SvdResult& svd, const Vector& s2,
                                 Flavor flavor, double gamma) {
    const auto [sqrtT, sqrtN] = scales_of(panel);
    const Vector s = s2.cwiseMax(0.0).cwiseSqrt();
    FactorDecomposition fd;
    fd.F = sqrtT * svd.U * s.asDiagonal();
    fd.Lambda = sqrtN * svd.V * s.asDiagonal();
    fd.D2 = svd.D.cwiseAbs2();
    fd.flavor = flavor;
    fd.gamma = gamma;
    fd.r = svd.k;
    return fd;
}

}  // namespace

FactorDecomposition estimate_apc(const PanelData& panel, int r) {
    validate_panel(panel.X);
    check_rank(panel, r);
    const auto [sqrtT, sqrtN] = scales_of(panel);
    const SvdResult svd = truncated_svd(normalize_panel(panel.X), r);
    FactorDecomposition fd;
    fd.F = sqrtT * svd.U;
    fd.Lambda = sqrtN * svd.V * svd.D.asDiagonal();
    fd.D2 = svd.D.cwiseAbs2();
    fd.flavor = Flavor::APC;
    fd.r = r;
    return fd;
}

FactorDecomposition estimate_pc(const PanelData& panel, int r) {
    validate_panel(panel.X);
    check_rank(panel, r);
    const SvdResult svd = truncated_svd(normalize_panel(panel.X), r);
    return balanced_fit(panel, svd, svd.D, Flavor::PC, 0.0);
}

FactorDecomposition estimate_rpc(const PanelData& panel, int r, double gamma) {
    validate_panel(panel.X);
    check_rank(panel, r);
    const SvdResult svd = truncated_svd(normalize_panel(panel.X), r);
    const ThresholdedSpectrum th = svt(svd.D, gamma);
    return balanced_fit(panel, svd, th.D_gamma, Flavor::RPC, gamma);
}

FactorDecomposition pc_from_apc(const FactorDecomposition& apc) {
    require(apc.flavor == Flavor::APC, ErrorKind::InvalidInput, "pc_from_apc expects an APC fit");
    const Vector d = apc.singular_values();
    require(d.size() == 0 || d.minCoeff() > kRankTolerance * d.maxCoeff(), ErrorKind::Degenerate,
            "zero singular value among the first r; Lambda_hat = Lambda_tilde D^{-1/2} undefined");
    const Vector root = d.cwiseSqrt();
    FactorDecomposition pc = apc;
    pc.F = apc.F * root.asDiagonal();
    pc.Lambda = apc.Lambda * root.cwiseInverse().asDiagonal();
    pc.flavor = Flavor::PC;
    return pc;
}

double suggest_gamma(const PanelData& panel, int r) {
    validate_panel(panel.X);
    const auto m = std::min(panel.T(), panel.N());
    require(r >= 0 && r < m, ErrorKind::InvalidRank,
            "suggest_gamma needs r < min(T, N) so that d_{r+1} exists");
    const Vector d2 = squared_singular_values(normalize_panel(panel.X));
    return std::sqrt(d2(r));
}

CommonComponent common_component(const FactorDecomposition& fd) {
    return {fd.F * fd.Lambda.transpose()};
}

Matrix residuals(const PanelData& panel, const FactorDecomposition& fd) {
    require(fd.F.rows() == panel.T() && fd.Lambda.rows() == panel.N() &&
                fd.F.cols() == fd.Lambda.cols(),
            ErrorKind::InvalidInput, "factor decomposition does not match the panel shape");
    return panel.X - fd.F * fd.Lambda.transpose();
}

double ssr(const PanelData& panel, const FactorDecomposition& fd) {
    const double nt = static_cast<double>(panel.N()) * static_cast<double>(panel.T());
    return residuals(panel, fd).squaredNorm() / nt;
}

namespace {

Matrix orthonormal_factor(const Matrix& F, double sqrtT) {
    Eigen::HouseholderQR<Matrix> qr(F);
    Matrix Q = qr.householderQ() * Matrix::Identity(F.rows(), F.cols());
    return sqrtT * Q;
}

}  // namespace

AlsResult als_solve(const PanelData& panel, int r, const AlsOptions& opts) {
    validate_panel(panel.X);
    check_rank(panel, r);
    require(opts.tol > 0.0, ErrorKind::InvalidParameter, "ALS tolerance must be positive");
    require(opts.max_iter >= 1, ErrorKind::InvalidParameter, "ALS max_iter must be >= 1");

    const Matrix& X = panel.X;
    const double T = static_cast<double>(panel.T());
    const double nt = T * static_cast<double>(panel.N());
    const double sqrtT = std::sqrt(T);
    const double xnorm = std::max(X.norm(), 1e-300);
    const double total_ss = xnorm * xnorm / nt;

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix F(panel.T(), r);
    for (Eigen::Index j = 0; j < F.cols(); ++j)
        for (Eigen::Index t = 0; t < F.rows(); ++t) F(t, j) = normal(rng);
    F = orthonormal_factor(F, sqrtT);
    Matrix Lambda = X.transpose() * F / T;
    Matrix C = F * Lambda.transpose();
    double prev_ssr = (X - C).squaredNorm() / nt;

    auto finalize = [&](int iterations, double cur_ssr) {
        // Rotate so Lambda'Lambda/N is diagonal and descending; F'F/T stays I.
        const double N = static_cast<double>(panel.N());
        Eigen::SelfAdjointEigenSolver<Matrix> eig(Lambda.transpose() * Lambda / N);
        Matrix W = eig.eigenvectors().rowwise().reverse();
        AlsResult res;
        res.fit.F = F * W;
        res.fit.Lambda = Lambda * W;
        apply_sign_convention(res.fit.F, res.fit.Lambda);
        res.fit.D2 = (res.fit.Lambda.transpose() * res.fit.Lambda / N).diagonal();
        res.fit.flavor = Flavor::APC;
        res.fit.r = r;
        res.iterations = iterations;
        res.ssr = cur_ssr;
        return res;
    };

    for (int it = 1; it <= opts.max_iter; ++it) {
        const Matrix LtL = Lambda.transpose() * Lambda;
        require(rcond(LtL) >= 1e-12, ErrorKind::Degenerate,
                "ALS iterate has singular Lambda'Lambda");
        F = X * Lambda * LtL.inverse();
        F = orthonormal_factor(F, sqrtT);
        Lambda = X.transpose() * F / T;
        Matrix C_next = F * Lambda.transpose();
        const double cur_ssr = (X - C_next).squaredNorm() / nt;
        const double ssr_change = std::abs(prev_ssr - cur_ssr) / total_ss;
        const double c_change = (C_next - C).norm() / xnorm;
        C = std::move(C_next);
        prev_ssr = cur_ssr;
        if (ssr_change < opts.tol && c_change < opts.tol)
            return finalize(it, cur_ssr);
    }
    throw AlsNonConvergence("ALS did not converge within " + std::to_string(opts.max_iter) +
                                " iterations",
                            finalize(opts.max_iter, prev_ssr));
}

}  // namespace afm
