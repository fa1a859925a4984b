#include "afm/constrained.hpp"

#include <cmath>
#include <string>

namespace afm {

namespace {

Eigen::Map<const Vector> vec_view(const Matrix& M) { return {M.data(), M.size()}; }

Matrix unvec(const Vector& v, Eigen::Index N, Eigen::Index r) {
    return Eigen::Map<const Matrix>(v.data(), N, r);
}

void check_system_shape(const ConstraintSystem& cs, Eigen::Index N, Eigen::Index r) {
    require(cs.N == N && cs.r == r, ErrorKind::InvalidInput,
            "constraint system built for a different loading shape");
}

}  // namespace

double ConstraintSystem::violation(const Matrix& Lambda) const {
    if (m() == 0) return 0.0;
    require(Lambda.rows() == N && Lambda.cols() == r, ErrorKind::InvalidInput,
            "loading matrix does not match the constraint system");
    return (R * vec_view(Lambda) - phi).norm();
}

ConstraintSystem make_constraint_system(SparseRowMatrix R, Vector phi, Eigen::Index N, int r) {
    require(N >= 1 && r >= 1, ErrorKind::InvalidInput, "constraint system needs N, r >= 1");
    require(R.cols() == N * r, ErrorKind::InvalidInput,
            "R must have N*r = " + std::to_string(N * r) + " columns");
    require(R.rows() == phi.size(), ErrorKind::InvalidInput, "R and phi disagree on m");
    require(R.rows() < N * r, ErrorKind::InvalidInput, "need m < N*r restrictions");
    if (R.rows() > 0) {
        const Matrix Rt = Matrix(R).transpose();
        Eigen::ColPivHouseholderQR<Matrix> qr(Rt);
        qr.setThreshold(1e-10);
        require(qr.rank() == R.rows(), ErrorKind::Degenerate,
                "restriction matrix R does not have full row rank");
    }
    R.makeCompressed();
    return ConstraintSystem{std::move(R), std::move(phi), N, r};
}

ConstraintSystem empty_constraints(Eigen::Index N, int r) {
    return make_constraint_system(SparseRowMatrix(0, N * r), Vector(0), N, r);
}

std::vector<Restriction> lower_triangular(int r) {
    std::vector<Restriction> out;
    for (int i = 0; i < r; ++i)
        for (int j = i + 1; j < r; ++j) out.emplace_back(FixEntry{i, j, 0.0});
    return out;
}

namespace {

struct CandidateRow {
    std::vector<std::pair<Eigen::Index, double>> terms;
    double rhs = 0.0;
};

class RowCollector {
public:
    RowCollector(Eigen::Index N, int r) : N_(N), r_(r) {}

    Eigen::Index pos(Eigen::Index i, int j) const {
        require(i >= 0 && i < N_ && j >= 0 && j < r_, ErrorKind::InvalidIndex,
                "restriction refers to loading (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") outside the " + std::to_string(N_) + "x" + std::to_string(r_) + " matrix");
        return vec_index(i, j, N_);
    }

    void operator()(const FixEntry& f) { rows.push_back({{{pos(f.i, f.j), 1.0}}, f.value}); }

    void operator()(const EqualEntries& e) {
        const auto a = pos(e.i1, e.j1);
        const auto b = pos(e.i2, e.j2);
        rows.push_back({{{a, 1.0}, {b, -1.0}}, 0.0});
    }

    void operator()(const ZeroBlock& z) {
        require(z.row_first <= z.row_last && z.col_first <= z.col_last, ErrorKind::InvalidInput,
                "zero block has an empty range");
        for (int j = z.col_first; j <= z.col_last; ++j)
            for (Eigen::Index i = z.row_first; i <= z.row_last; ++i)
                rows.push_back({{{pos(i, j), 1.0}}, 0.0});
    }

    void operator()(const HomogeneousGroup& h) {
        require(h.units.size() >= 2, ErrorKind::InvalidInput,
                "homogeneous group needs at least two units");
        for (std::size_t k = 0; k + 1 < h.units.size(); ++k)
            rows.push_back({{{pos(h.units[k], h.j), 1.0}, {pos(h.units[k + 1], h.j), -1.0}}, 0.0});
    }

    std::vector<CandidateRow> rows;

private:
    Eigen::Index N_;
    int r_;
};

}  // namespace

ConstraintSystem build_restrictions(Eigen::Index N, int r, const std::vector<Restriction>& spec) {
    require(N >= 1 && r >= 1, ErrorKind::InvalidInput, "restrictions need N, r >= 1");
    RowCollector collect(N, r);
    for (const auto& item : spec) std::visit(collect, item);

    const Eigen::Index n = N * r;
    std::vector<Vector> basis;  // orthonormalized accepted rows
    std::vector<double> basis_rhs;
    std::vector<const CandidateRow*> kept;

    for (const auto& row : collect.rows) {
        Vector a = Vector::Zero(n);
        for (auto [col, coef] : row.terms) a(col) += coef;
        const double a_norm = a.norm();
        double b = row.rhs;
        if (a_norm == 0.0) {
            require(std::abs(b) <= 1e-10, ErrorKind::Infeasible,
                    "restriction 0 = " + std::to_string(b) + " is infeasible");
            continue;
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < basis.size(); ++k) {
                const double c = basis[k].dot(a);
                a -= c * basis[k];
                b -= c * basis_rhs[k];
            }
        }
        const double res = a.norm();
        if (res <= 1e-10 * a_norm) {
            require(std::abs(b) <= 1e-10 * (1.0 + std::abs(row.rhs)), ErrorKind::Infeasible,
                    "contradictory restrictions: a redundant row disagrees on phi");
            continue;
        }
        basis.push_back(a / res);
        basis_rhs.push_back(b / res);
        kept.push_back(&row);
    }

    const auto m = static_cast<Eigen::Index>(kept.size());
    require(m < n, ErrorKind::InvalidInput, "restrictions pin down every loading (need m < N*r)");
    std::vector<Eigen::Triplet<double>> trips;
    Vector phi(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        for (auto [col, coef] : kept[static_cast<std::size_t>(k)]->terms)
            trips.emplace_back(k, col, coef);
        phi(k) = kept[static_cast<std::size_t>(k)]->rhs;
    }
    SparseRowMatrix R(m, n);
    R.setFromTriplets(trips.begin(), trips.end());
    R.prune(0.0);
    return make_constraint_system(std::move(R), std::move(phi), N, r);
}

Matrix f_update(const Matrix& Z, const Matrix& Lambda, double gamma) {
    require(gamma >= 0.0, ErrorKind::InvalidParameter, "gamma must be >= 0");
    require(Z.cols() == Lambda.rows(), ErrorKind::InvalidInput, "Z and Lambda disagree on N");
    const Matrix A = Lambda.transpose() * Lambda + gamma * Matrix::Identity(Lambda.cols(), Lambda.cols());
    require(rcond(A) >= 1e-12, ErrorKind::Degenerate,
            "degenerate loadings: Lambda'Lambda + gamma I is singular");
    return (Z * Lambda) * A.llt().solve(Matrix::Identity(A.rows(), A.cols()));
}

namespace {

Matrix ridge_gram(const Matrix& F, double gamma) {
    return F.transpose() * F + gamma * Matrix::Identity(F.cols(), F.cols());
}

// (P (x) I_N) R' as a dense (N r) x m matrix: each column is vec(M P) where
// vec(M) is a row of R.
Matrix kron_apply_rt(const SparseRowMatrix& R, const Matrix& P, Eigen::Index N) {
    const Eigen::Index r = P.rows();
    Matrix W = Matrix::Zero(N * r, R.rows());
    for (Eigen::Index k = 0; k < R.outerSize(); ++k) {
        for (SparseRowMatrix::InnerIterator it(R, k); it; ++it) {
            const Eigen::Index i = it.col() % N;
            const Eigen::Index j = it.col() / N;
            for (Eigen::Index c = 0; c < r; ++c) W(c * N + i, k) += it.value() * P(j, c);
        }
    }
    return W;
}

}  // namespace

Matrix lambda_update_penalized(const Matrix& Z, const Matrix& F, double gamma, double tau,
                               const ConstraintSystem& cs) {
    require(gamma >= 0.0, ErrorKind::InvalidParameter, "gamma must be >= 0");
    require(tau >= 0.0 && std::isfinite(tau), ErrorKind::InvalidParameter,
            "tau must be finite and >= 0 (use lambda_restrict_exact for tau = infinity)");
    require(Z.rows() == F.rows(), ErrorKind::InvalidInput, "Z and F disagree on T");
    const Eigen::Index N = Z.cols();
    const Eigen::Index r = F.cols();
    check_system_shape(cs, N, r);

    const Matrix G = ridge_gram(F, gamma);
    const Matrix ZtF = Z.transpose() * F;
    const bool penalized = tau > 0.0 && cs.m() > 0;
    const bool g_ok = rcond(G) >= 1e-12;

    if (!penalized) {
        require(g_ok, ErrorKind::Degenerate, "degenerate system: F'F + gamma I is singular");
        return G.llt().solve(ZtF.transpose()).transpose();
    }

    Vector rhs = vec_view(ZtF);
    rhs += tau * (cs.R.transpose() * cs.phi);

    if (g_ok && 4 * cs.m() <= N * r) {
        const Matrix P = G.llt().solve(Matrix::Identity(r, r));
        auto apply_kinv = [&](const Vector& v) -> Vector {
            const Matrix M = unvec(v, N, r) * P;
            return vec_view(M);
        };
        const Vector y = apply_kinv(rhs);
        const Matrix W = kron_apply_rt(cs.R, P, N);  // K^{-1} R'
        Matrix small = cs.R * W;
        small.diagonal().array() += 1.0 / tau;
        Eigen::LDLT<Matrix> ldlt(small);
        require(ldlt.info() == Eigen::Success && rcond(small) >= 1e-14, ErrorKind::Degenerate,
                "degenerate system in the Woodbury correction");
        const Vector corr = W * ldlt.solve(cs.R * y);
        return unvec(y - corr, N, r);
    }

    Matrix K = Matrix::Zero(N * r, N * r);
    for (Eigen::Index a = 0; a < r; ++a)
        for (Eigen::Index b = 0; b < r; ++b)
            K.block(a * N, b * N, N, N).diagonal().setConstant(G(a, b));
    K += tau * Matrix(cs.R.transpose() * cs.R);
    Eigen::LLT<Matrix> llt(K);
    require(llt.info() == Eigen::Success, ErrorKind::Degenerate,
            "degenerate system: penalized loading system is singular");
    return unvec(llt.solve(rhs), N, r);
}

Matrix lambda_restrict_exact(const Matrix& Lambda0, const Matrix& F, double gamma,
                             const ConstraintSystem& cs) {
    require(gamma >= 0.0, ErrorKind::InvalidParameter, "gamma must be >= 0");
    require(Lambda0.cols() == F.cols(), ErrorKind::InvalidInput, "Lambda0 and F disagree on r");
    const Eigen::Index N = Lambda0.rows();
    const Eigen::Index r = Lambda0.cols();
    check_system_shape(cs, N, r);
    if (cs.m() == 0) return Lambda0;

    const Matrix G = ridge_gram(F, gamma);
    require(rcond(G) >= 1e-12, ErrorKind::Degenerate, "F'F + gamma I is singular");
    const Matrix P = G.llt().solve(Matrix::Identity(r, r));
    const Matrix W = kron_apply_rt(cs.R, P, N);
    const Matrix middle = cs.R * W;
    require(rcond(middle) >= 1e-12, ErrorKind::Degenerate,
            "degenerate constraints: R (P (x) I) R' is singular");
    const Vector gap = cs.R * vec_view(Lambda0) - cs.phi;
    const Vector corr = W * middle.ldlt().solve(gap);
    return Lambda0 - unvec(corr, N, r);
}

Matrix ConstrainedFit::common_component(Eigen::Index N, Eigen::Index T) const {
    return std::sqrt(static_cast<double>(N) * static_cast<double>(T)) * F * Lambda.transpose();
}

double constrained_objective(const Matrix& Z, const Matrix& F, const Matrix& Lambda, double gamma,
                             double tau, const ConstraintSystem& cs) {
    double obj = 0.5 * (Z - F * Lambda.transpose()).squaredNorm() +
                 0.5 * gamma * (F.squaredNorm() + Lambda.squaredNorm());
    if (std::isfinite(tau) && tau > 0.0 && cs.m() > 0) {
        const double v = cs.violation(Lambda);
        obj += 0.5 * tau * v * v;
    }
    return obj;
}

ConstrainedFit constrained_solve(const PanelData& panel, int r, double gamma,
                                 const ConstraintSystem& cs, double tau,
                                 const ConstrainedOptions& opts) {
    validate_panel(panel.X);
    const auto N = panel.N();
    const auto T = panel.T();
    require(r >= 1 && r <= std::min(N, T), ErrorKind::InvalidRank, "r outside [1, min(N,T)]");
    require(gamma >= 0.0 && std::isfinite(gamma), ErrorKind::InvalidParameter,
            "gamma must be finite and >= 0");
    require(tau >= 0.0, ErrorKind::InvalidParameter, "tau must be >= 0");
    require(opts.tol > 0.0 && opts.max_iter >= 1, ErrorKind::InvalidParameter,
            "tol must be positive and max_iter >= 1");
    check_system_shape(cs, N, r);

    const Matrix Z = normalize_panel(panel.X);
    ConstrainedFit fit;
    fit.gamma = gamma;
    fit.tau = tau;
    if (opts.init) {
        require(opts.init->first.rows() == T && opts.init->first.cols() == r &&
                    opts.init->second.rows() == N && opts.init->second.cols() == r,
                ErrorKind::InvalidInput, "initial (F, Lambda) has the wrong shape");
        fit.F = opts.init->first;
        fit.Lambda = opts.init->second;
    } else {
        const SvdResult svd = truncated_svd(Z, r);
        const Vector s = svt(svd.D, gamma).D_gamma.cwiseSqrt();
        fit.F = svd.U * s.asDiagonal();
        fit.Lambda = svd.V * s.asDiagonal();
    }

    const bool exact = tau == kTauInfinity;
    for (int it = 1; it <= opts.max_iter; ++it) {
        if (exact) {
            const Matrix ridge = lambda_update_penalized(Z, fit.F, gamma, 0.0, cs);
            fit.Lambda = lambda_restrict_exact(ridge, fit.F, gamma, cs);
        } else {
            fit.Lambda = lambda_update_penalized(Z, fit.F, gamma, tau, cs);
        }
        fit.F = f_update(Z, fit.Lambda, gamma);
        const double obj = constrained_objective(Z, fit.F, fit.Lambda, gamma, tau, cs);
        fit.objective_trace.push_back(obj);
        fit.iterations = it;
        if (fit.objective_trace.size() >= 2) {
            const double prev = fit.objective_trace[fit.objective_trace.size() - 2];
            if (std::abs(prev - obj) <= opts.tol * std::max(std::abs(prev), 1e-300)) {
                fit.constraint_violation = cs.violation(fit.Lambda);
                return fit;
            }
        }
    }
    fit.constraint_violation = cs.violation(fit.Lambda);
    throw ConstrainedNonConvergence(
        "constrained iteration did not converge within " + std::to_string(opts.max_iter) + " sweeps",
        std::move(fit));
}

}  // namespace afm
