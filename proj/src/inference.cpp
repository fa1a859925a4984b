#include "afm/inference.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>
#include <unordered_map>

namespace afm {

const char* to_string(CovMethod m) noexcept {
    switch (m) {
        case CovMethod::CsIndependent: return "cs-independent";
        case CovMethod::CsClustered: return "cs-clustered";
        case CovMethod::TsHac: return "ts-hac";
    }
    return "?";
}

const char* to_string(CiTarget t) noexcept {
    switch (t) {
        case CiTarget::Factor: return "factor";
        case CiTarget::Loading: return "loading";
        case CiTarget::Common: return "common";
    }
    return "?";
}

int default_hac_bandwidth(Eigen::Index T) {
    return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(T) / 100.0, 2.0 / 9.0)));
}

double normal_critical_value(double level) {
    require(level > 0.0 && level < 1.0, ErrorKind::InvalidParameter,
            "confidence level must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0),
                                 0.5 + 0.5 * level);
}

namespace {

void check_resid(const FactorDecomposition& fd, const Matrix& resid) {
    require(resid.rows() == fd.F.rows() && resid.cols() == fd.Lambda.rows(), ErrorKind::InvalidInput,
            "residual matrix does not match the fit");
}

void check_psd(const Matrix& S, const char* what) {
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    require(is_symmetric(S, 1e-10 * scale), ErrorKind::Numerical,
            std::string(what) + " is not symmetric");
    if (S.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
    require(eig.eigenvalues().minCoeff() >= -1e-10 * scale, ErrorKind::Numerical,
            std::string(what) + " is not positive semidefinite");
}

const Matrix& lookup(const std::map<Eigen::Index, Matrix>& m, Eigen::Index key, const char* what) {
    auto it = m.find(key);
    require(it != m.end(), ErrorKind::InvalidIndex,
            std::string(what) + " not estimated for index " + std::to_string(key));
    return it->second;
}

Matrix moment_inverse(const Matrix& A, double n, const char* what) {
    return checked_inverse(A.transpose() * A / n, what);
}

}  // namespace

Matrix estimate_gamma_t(const FactorDecomposition& fd, const Matrix& resid, Eigen::Index t,
                        CovMethod method, std::span<const int> clusters) {
    check_resid(fd, resid);
    require(t >= 0 && t < resid.rows(), ErrorKind::InvalidIndex,
            "time index " + std::to_string(t) + " out of range");
    const Eigen::Index N = fd.Lambda.rows();
    const Eigen::Index r = fd.Lambda.cols();

    Matrix G = Matrix::Zero(r, r);
    switch (method) {
        case CovMethod::CsIndependent:
            for (Eigen::Index i = 0; i < N; ++i) {
                const double e = resid(t, i);
                G.noalias() += (e * e) * fd.Lambda.row(i).transpose() * fd.Lambda.row(i);
            }
            break;
        case CovMethod::CsClustered: {
            require(static_cast<Eigen::Index>(clusters.size()) == N, ErrorKind::InvalidInput,
                    "cluster vector must have one entry per unit");
            std::unordered_map<int, Vector> sums;
            std::vector<int> order;
            for (Eigen::Index i = 0; i < N; ++i) {
                const int c = clusters[static_cast<std::size_t>(i)];
                auto [it, inserted] = sums.try_emplace(c, Vector::Zero(r));
                if (inserted) order.push_back(c);
                it->second += resid(t, i) * fd.Lambda.row(i).transpose();
            }
            for (int c : order) G.noalias() += sums[c] * sums[c].transpose();
            break;
        }
        case CovMethod::TsHac:
            throw Error(ErrorKind::InvalidParameter, "ts-hac is a time-series method; use estimate_phi_i");
    }
    G /= static_cast<double>(N);
    return 0.5 * (G + G.transpose());
}

Matrix estimate_phi_i(const FactorDecomposition& fd, const Matrix& resid, Eigen::Index i,
                      int bandwidth) {
    check_resid(fd, resid);
    require(i >= 0 && i < resid.cols(), ErrorKind::InvalidIndex,
            "unit index " + std::to_string(i) + " out of range");
    require(bandwidth >= 0, ErrorKind::InvalidParameter, "HAC bandwidth must be >= 0");
    const Eigen::Index T = fd.F.rows();
    const double Td = static_cast<double>(T);

    // v_t = F_t e_it stored as rows.
    const Matrix v = resid.col(i).asDiagonal() * fd.F;
    Matrix omega = v.transpose() * v / Td;
    const int L = static_cast<int>(std::min<Eigen::Index>(bandwidth, T - 1));
    for (int lag = 1; lag <= L; ++lag) {
        const double w = 1.0 - static_cast<double>(lag) / static_cast<double>(bandwidth + 1);
        const Matrix g = v.bottomRows(T - lag).transpose() * v.topRows(T - lag) / Td;
        omega += w * (g + g.transpose());
    }
    return 0.5 * (omega + omega.transpose());
}

CovarianceEstimates estimate_covariances(const FactorDecomposition& fd, const Matrix& resid,
                                         const CovarianceRequest& req) {
    CovarianceEstimates out;
    out.gamma_method = req.gamma_method;
    out.hac_bandwidth = req.hac_bandwidth.value_or(default_hac_bandwidth(fd.F.rows()));
    for (Eigen::Index t : req.times)
        out.Gamma[t] = estimate_gamma_t(fd, resid, t, req.gamma_method, req.clusters);
    for (Eigen::Index i : req.units) out.Phi[i] = estimate_phi_i(fd, resid, i, out.hac_bandwidth);
    return out;
}

ConfidenceInterval ci_factor(const FactorDecomposition& fd, const CovarianceEstimates& cov,
                             Eigen::Index t, double level) {
    require(t >= 0 && t < fd.F.rows(), ErrorKind::InvalidIndex, "time index out of range");
    const Matrix& G = lookup(cov.Gamma, t, "Gamma_t");
    check_psd(G, "Gamma_t");
    const double N = static_cast<double>(fd.Lambda.rows());
    const Matrix SLinv = moment_inverse(fd.Lambda, N, "Lambda'Lambda/N");
    const Matrix avar = SLinv * G * SLinv;
    const double z = normal_critical_value(level);

    ConfidenceInterval ci;
    ci.target = CiTarget::Factor;
    ci.t = t;
    ci.level = level;
    ci.center = fd.F.row(t).transpose();
    ci.half_width = z * (avar.diagonal().cwiseMax(0.0) / N).cwiseSqrt();
    return ci;
}

ConfidenceInterval ci_loading(const FactorDecomposition& fd, const CovarianceEstimates& cov,
                              Eigen::Index i, double level) {
    require(i >= 0 && i < fd.Lambda.rows(), ErrorKind::InvalidIndex, "unit index out of range");
    const Matrix& P = lookup(cov.Phi, i, "Phi_i");
    check_psd(P, "Phi_i");
    const double T = static_cast<double>(fd.F.rows());
    const Matrix SFinv = moment_inverse(fd.F, T, "F'F/T");
    const Matrix avar = SFinv * P * SFinv;
    const double z = normal_critical_value(level);

    ConfidenceInterval ci;
    ci.target = CiTarget::Loading;
    ci.i = i;
    ci.level = level;
    ci.center = fd.Lambda.row(i).transpose();
    ci.half_width = z * (avar.diagonal().cwiseMax(0.0) / T).cwiseSqrt();
    return ci;
}

ConfidenceInterval ci_common(const FactorDecomposition& fd, const CovarianceEstimates& cov,
                             Eigen::Index i, Eigen::Index t, double level) {
    require(i >= 0 && i < fd.Lambda.rows(), ErrorKind::InvalidIndex, "unit index out of range");
    require(t >= 0 && t < fd.F.rows(), ErrorKind::InvalidIndex, "time index out of range");
    const Matrix& G = lookup(cov.Gamma, t, "Gamma_t");
    const Matrix& P = lookup(cov.Phi, i, "Phi_i");
    check_psd(G, "Gamma_t");
    check_psd(P, "Phi_i");
    const double N = static_cast<double>(fd.Lambda.rows());
    const double T = static_cast<double>(fd.F.rows());
    const Vector li = fd.Lambda.row(i).transpose();
    const Vector ft = fd.F.row(t).transpose();
    const Vector a = moment_inverse(fd.Lambda, N, "Lambda'Lambda/N") * li;
    const Vector b = moment_inverse(fd.F, T, "F'F/T") * ft;

    ConfidenceInterval ci;
    ci.target = CiTarget::Common;
    ci.i = i;
    ci.t = t;
    ci.level = level;
    ci.W_lambda = std::max(0.0, a.dot(G * a));
    ci.W_f = std::max(0.0, b.dot(P * b));
    ci.center = Vector::Constant(1, li.dot(ft));
    ci.half_width =
        Vector::Constant(1, normal_critical_value(level) * std::sqrt(ci.W_lambda / N + ci.W_f / T));
    return ci;
}

}  // namespace afm
