#pragma once

#include <cstdint>

#include "afm/error.hpp"
#include "afm/linalg.hpp"
#include "afm/panel.hpp"

namespace afm {

enum class Flavor { APC, PC, RPC };

const char* to_string(Flavor f) noexcept;

/// Estimated factors and loadings for a rank-r fit.
///
/// Normalizations by flavor (d = singular values of Z = X/sqrt(NT)):
///   APC: F'F/T = I,         Lambda'Lambda/N = diag(d^2)
///   PC:  F'F/T = Lambda'Lambda/N = diag(d)
///   RPC: F'F/T = Lambda'Lambda/N = diag(max(d - gamma, 0))
/// In every case F * Lambda' is on the scale of X.
struct FactorDecomposition {
    Matrix F;       // T x r
    Matrix Lambda;  // N x r
    Vector D2;      // squared singular values d_j^2, j < r
    Flavor flavor = Flavor::APC;
    double gamma = 0.0;
    int r = 0;

    Vector singular_values() const { return D2.cwiseMax(0.0).cwiseSqrt(); }
};

struct CommonComponent {
    Matrix C;
};

FactorDecomposition estimate_apc(const PanelData& panel, int r);
FactorDecomposition estimate_pc(const PanelData& panel, int r);
FactorDecomposition estimate_rpc(const PanelData& panel, int r, double gamma);

/// PC estimates obtained by rescaling an APC fit: F_hat = F_tilde D^{1/2},
/// Lambda_hat = Lambda_tilde D^{-1/2}. Throws Degenerate if any of the first r
/// singular values is zero.
FactorDecomposition pc_from_apc(const FactorDecomposition& apc);

/// Suggested RPC threshold: the first excluded singular value d_{r+1}.
double suggest_gamma(const PanelData& panel, int r);

struct AlsOptions {
    double tol = 1e-9;
    int max_iter = 1000;
    std::uint64_t seed = 20240521;
};

struct AlsResult {
    FactorDecomposition fit;  // APC-normalized
    int iterations = 0;
    double ssr = 0.0;
};

/// Thrown when ALS hits max_iter; carries the last iterate.
class AlsNonConvergence : public Error {
public:
    AlsNonConvergence(const std::string& what, AlsResult last)
        : Error(ErrorKind::NonConvergence, what), last_(std::move(last)) {}
    const AlsResult& last_iterate() const noexcept { return last_; }

private:
    AlsResult last_;
};

/// Alternating least squares (orthogonal subspace iteration). Each sweep sets
/// F <- X Lambda (Lambda'Lambda)^{-1}, re-orthonormalizes to F'F/T = I, then
/// Lambda' <- F'X/T. Stops once both the SSR change (relative to the total sum
/// of squares) and the relative change of the common component fall below tol. The converged pair is
/// rotated so Lambda'Lambda/N is diagonal (descending), matching estimate_apc.
AlsResult als_solve(const PanelData& panel, int r, const AlsOptions& opts = {});

CommonComponent common_component(const FactorDecomposition& fd);

/// (1/NT) ||X - F Lambda'||_F^2.
double ssr(const PanelData& panel, const FactorDecomposition& fd);

/// X - F Lambda'.
Matrix residuals(const PanelData& panel, const FactorDecomposition& fd);

}  // namespace afm
