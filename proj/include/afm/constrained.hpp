#pragma once

#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/SparseCore>

#include "afm/error.hpp"
#include "afm/linalg.hpp"
#include "afm/panel.hpp"

namespace afm {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Linear restrictions R vec(Lambda) = phi on an N x r loading matrix.
/// vec() stacks columns: entry (i, j) of Lambda sits at position j*N + i
/// (0-based). R always has full row rank and m < N r.
struct ConstraintSystem {
    SparseRowMatrix R;  // m x (N r)
    Vector phi;         // m
    Eigen::Index N = 0;
    int r = 0;

    Eigen::Index m() const { return R.rows(); }
    double violation(const Matrix& Lambda) const;
};

inline Eigen::Index vec_index(Eigen::Index i, Eigen::Index j, Eigen::Index N) { return j * N + i; }

/// Validates shape, m < N r and full row rank (tolerance 1e-10).
ConstraintSystem make_constraint_system(SparseRowMatrix R, Vector phi, Eigen::Index N, int r);

ConstraintSystem empty_constraints(Eigen::Index N, int r);

// Restriction primitives; indices are 0-based.
struct FixEntry {
    Eigen::Index i;
    int j;
    double value;
};
struct EqualEntries {
    Eigen::Index i1;
    int j1;
    Eigen::Index i2;
    int j2;
};
/// Lambda(i, j) = 0 for i in [row_first, row_last], j in [col_first, col_last].
struct ZeroBlock {
    Eigen::Index row_first;
    Eigen::Index row_last;
    int col_first;
    int col_last;
};
/// Units share the same loading on factor j.
struct HomogeneousGroup {
    int j;
    std::vector<Eigen::Index> units;
};

using Restriction = std::variant<FixEntry, EqualEntries, ZeroBlock, HomogeneousGroup>;

/// Zero entries above the diagonal of the leading r x r block.
std::vector<Restriction> lower_triangular(int r);

/// Compile primitives into (R, phi), dropping linearly dependent rows. A
/// dependent row whose phi disagrees with the rest throws Infeasible.
ConstraintSystem build_restrictions(Eigen::Index N, int r, const std::vector<Restriction>& spec);

/// F = Z Lambda (Lambda'Lambda + gamma I)^{-1}.
Matrix f_update(const Matrix& Z, const Matrix& Lambda, double gamma);

/// Exact minimizer over Lambda of the tau-penalized objective for fixed F:
/// ((F'F + gamma I) (x) I_N + tau R'R) vec(Lambda) = vec(Z'F) + tau R'phi.
/// Uses the Woodbury identity around the Kronecker block when m <= N r / 4 and
/// F'F + gamma I is well conditioned, otherwise a dense Cholesky solve.
Matrix lambda_update_penalized(const Matrix& Z, const Matrix& F, double gamma, double tau,
                               const ConstraintSystem& cs);

/// Restricted-ridge correction of an unrestricted ridge solution Lambda0:
/// vec(L) = vec(L0) - (P (x) I) R' [R (P (x) I) R']^{-1} (R vec(L0) - phi),
/// P = (F'F + gamma I)^{-1}.
Matrix lambda_restrict_exact(const Matrix& Lambda0, const Matrix& F, double gamma,
                             const ConstraintSystem& cs);

inline constexpr double kTauInfinity = std::numeric_limits<double>::infinity();

struct ConstrainedOptions {
    double tol = 1e-8;
    int max_iter = 500;
    /// Starting (F, Lambda) on the Z = X/sqrt(NT) scale; defaults to the RPC
    /// solution U (D^gamma)^{1/2}, V (D^gamma)^{1/2}.
    std::optional<std::pair<Matrix, Matrix>> init;
};

/// Solution of
///   0.5 ||Z - F Lambda'||^2 + 0.5 gamma (||F||^2 + ||Lambda||^2) + 0.5 tau ||R vec(Lambda) - phi||^2
/// with F, Lambda on the scale of Z = X / sqrt(NT).
struct ConstrainedFit {
    Matrix F;
    Matrix Lambda;
    double gamma = 0.0;
    double tau = 0.0;
    int iterations = 0;
    std::vector<double> objective_trace;
    double constraint_violation = 0.0;

    bool tau_infinite() const { return tau == kTauInfinity; }
    /// sqrt(NT) F Lambda', on the scale of the panel.
    Matrix common_component(Eigen::Index N, Eigen::Index T) const;
};

class ConstrainedNonConvergence : public Error {
public:
    ConstrainedNonConvergence(const std::string& what, ConstrainedFit last)
        : Error(ErrorKind::NonConvergence, what), last_(std::move(last)) {}
    const ConstrainedFit& last_iterate() const noexcept { return last_; }

private:
    ConstrainedFit last_;
};

double constrained_objective(const Matrix& Z, const Matrix& F, const Matrix& Lambda, double gamma,
                             double tau, const ConstraintSystem& cs);

/// Alternates the Lambda step (penalized for finite tau, exact restriction for
/// tau = infinity) with f_update until the relative objective change is below
/// tol.
ConstrainedFit constrained_solve(const PanelData& panel, int r, double gamma,
                                 const ConstraintSystem& cs, double tau,
                                 const ConstrainedOptions& opts = {});

}  // namespace afm
