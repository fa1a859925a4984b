#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "afm/estimators.hpp"

namespace afm {

enum class CovMethod { CsIndependent, CsClustered, TsHac };

const char* to_string(CovMethod m) noexcept;

/// Plug-in score variances: Gamma_t (cross-section) keyed by t, Phi_i (time
/// series) keyed by i. All matrices are symmetric PSD.
struct CovarianceEstimates {
    std::map<Eigen::Index, Matrix> Gamma;
    std::map<Eigen::Index, Matrix> Phi;
    CovMethod gamma_method = CovMethod::CsIndependent;
    int hac_bandwidth = 0;
};

enum class CiTarget { Factor, Loading, Common };

const char* to_string(CiTarget t) noexcept;

struct ConfidenceInterval {
    CiTarget target = CiTarget::Factor;
    Eigen::Index i = -1;  // unit index, -1 when not applicable
    Eigen::Index t = -1;  // time index, -1 when not applicable
    Vector center;
    Vector half_width;
    double level = 0.95;
    // Common-component intervals only.
    double W_lambda = 0.0;
    double W_f = 0.0;

    Vector lower() const { return center - half_width; }
    Vector upper() const { return center + half_width; }
};

/// floor(4 (T/100)^{2/9}).
int default_hac_bandwidth(Eigen::Index T);

/// Two-sided standard normal critical value for the given coverage level.
double normal_critical_value(double level);

/// Gamma_t = (1/N) sum_i L_i L_i' e_it^2 (CsIndependent), or with within-cluster
/// cross terms (CsClustered; `clusters[i]` is the cluster id of unit i).
Matrix estimate_gamma_t(const FactorDecomposition& fd, const Matrix& resid, Eigen::Index t,
                        CovMethod method = CovMethod::CsIndependent,
                        std::span<const int> clusters = {});

/// Bartlett-kernel long-run variance of F_t e_it over t. Bandwidth 0 gives
/// (1/T) sum_t F_t F_t' e_it^2.
Matrix estimate_phi_i(const FactorDecomposition& fd, const Matrix& resid, Eigen::Index i,
                      int bandwidth);

struct CovarianceRequest {
    std::vector<Eigen::Index> times;
    std::vector<Eigen::Index> units;
    CovMethod gamma_method = CovMethod::CsIndependent;
    std::vector<int> clusters;
    std::optional<int> hac_bandwidth;  // default_hac_bandwidth(T) when empty
};

CovarianceEstimates estimate_covariances(const FactorDecomposition& fd, const Matrix& resid,
                                         const CovarianceRequest& req);

/// F_t +/- z sqrt(diag(A)/N), A = S_L^{-1} Gamma_t S_L^{-1}, S_L = Lambda'Lambda/N.
ConfidenceInterval ci_factor(const FactorDecomposition& fd, const CovarianceEstimates& cov,
                             Eigen::Index t, double level);

/// Lambda_i +/- z sqrt(diag(B)/T), B = S_F^{-1} Phi_i S_F^{-1}, S_F = F'F/T
/// (S_F = I for APC, so B = Phi_i).
ConfidenceInterval ci_loading(const FactorDecomposition& fd, const CovarianceEstimates& cov,
                              Eigen::Index i, double level);

/// C_it +/- z sqrt(W_lambda/N + W_f/T) with
///   W_lambda = L_i' S_L^{-1} Gamma_t S_L^{-1} L_i,  W_f = F_t' S_F^{-1} Phi_i S_F^{-1} F_t.
/// Both scalars are invariant to F -> F A, Lambda -> Lambda A'^{-1}.
ConfidenceInterval ci_common(const FactorDecomposition& fd, const CovarianceEstimates& cov,
                             Eigen::Index i, Eigen::Index t, double level);

}  // namespace afm
