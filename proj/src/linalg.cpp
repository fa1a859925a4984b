#include "afm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "afm/error.hpp"

namespace afm {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::InvalidRank: return "invalid-rank";
        case ErrorKind::InvalidParameter: return "invalid-parameter";
        case ErrorKind::InvalidIndex: return "invalid-index";
        case ErrorKind::Format: return "format";
        case ErrorKind::Io: return "io";
        case ErrorKind::Numerical: return "numerical";
        case ErrorKind::NonConvergence: return "non-convergence";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Infeasible: return "infeasible";
        case ErrorKind::UnstableDgp: return "unstable-dgp";
    }
    return "unknown";
}

Matrix normalize_panel(const Matrix& X) {
    require(X.rows() >= 2 && X.cols() >= 2, ErrorKind::InvalidInput,
            "panel must have T >= 2 and N >= 2");
    require(X.allFinite(), ErrorKind::InvalidInput, "panel contains non-finite entries");
    const double scale = std::sqrt(static_cast<double>(X.rows()) * static_cast<double>(X.cols()));
    return X / scale;
}

namespace {

// Modified Gram-Schmidt over the columns of W, in place. Columns flagged in
// `fill` are replaced by the first standard basis vector that survives
// orthogonalization against everything before it.
void orthonormalize_columns(Matrix& W, const std::vector<bool>& fill) {
    const Eigen::Index n = W.rows();
    Eigen::Index next_basis = 0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
        if (fill[static_cast<std::size_t>(j)]) {
            for (;;) {
                require(next_basis < n, ErrorKind::Numerical,
                        "unable to complete an orthonormal basis");
                Vector cand = Vector::Unit(n, next_basis++);
                for (int pass = 0; pass < 2; ++pass)
                    for (Eigen::Index p = 0; p < j; ++p) cand -= W.col(p).dot(cand) * W.col(p);
                const double nrm = cand.norm();
                if (nrm > 1e-6) {
                    W.col(j) = cand / nrm;
                    break;
                }
            }
            continue;
        }
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index p = 0; p < j; ++p) W.col(j) -= W.col(p).dot(W.col(j)) * W.col(p);
        W.col(j).normalize();
    }
}

}  // namespace

void apply_sign_convention(Matrix& U, Matrix& V) {
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
        Eigen::Index imax = 0;
        U.col(j).cwiseAbs().maxCoeff(&imax);
        if (U(imax, j) < 0.0) {
            U.col(j) *= -1.0;
            if (j < V.cols()) V.col(j) *= -1.0;
        }
    }
}

SvdResult truncated_svd(const Matrix& Z, int k) {
    const Eigen::Index T = Z.rows();
    const Eigen::Index N = Z.cols();
    const Eigen::Index m = std::min(T, N);
    require(k >= 1 && k <= m, ErrorKind::InvalidRank,
            "rank k=" + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
    require(Z.allFinite(), ErrorKind::InvalidInput, "matrix contains non-finite entries");

    // Eigenvectors of the smaller Gram matrix give one side exactly; the other
    // side is recovered by projection.
    const bool gram_on_cols = N <= T;
    const Matrix G = gram_on_cols ? Matrix(Z.transpose() * Z) : Matrix(Z * Z.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
    require(eig.info() == Eigen::Success, ErrorKind::Numerical,
            "symmetric eigen-decomposition did not converge");

    Matrix small(m, k);
    for (int j = 0; j < k; ++j) small.col(j) = eig.eigenvectors().col(m - 1 - j);
    Matrix other = gram_on_cols ? Matrix(Z * small) : Matrix(Z.transpose() * small);

    Vector d(k);
    for (int j = 0; j < k; ++j) d(j) = other.col(j).norm();

    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return d(a) > d(b); });

    SvdResult out;
    out.k = k;
    out.D.resize(k);
    Matrix small_sorted(m, k);
    Matrix other_sorted(other.rows(), k);
    for (int j = 0; j < k; ++j) {
        const int src = order[static_cast<std::size_t>(j)];
        out.D(j) = d(src);
        small_sorted.col(j) = small.col(src);
        other_sorted.col(j) = other.col(src);
    }

    const double d0 = out.D(0);
    std::vector<bool> fill(static_cast<std::size_t>(k), false);
    for (int j = 0; j < k; ++j) {
        if (d0 <= 0.0 || out.D(j) <= kRankTolerance * d0) {
            out.D(j) = 0.0;
            fill[static_cast<std::size_t>(j)] = true;
        }
    }
    orthonormalize_columns(other_sorted, fill);

    if (gram_on_cols) {
        out.V = std::move(small_sorted);
        out.U = std::move(other_sorted);
    } else {
        out.U = std::move(small_sorted);
        out.V = std::move(other_sorted);
    }
    apply_sign_convention(out.U, out.V);
    return out;
}

Vector squared_singular_values(const Matrix& Z) {
    require(Z.allFinite(), ErrorKind::InvalidInput, "matrix contains non-finite entries");
    const bool gram_on_cols = Z.cols() <= Z.rows();
    const Matrix G = gram_on_cols ? Matrix(Z.transpose() * Z) : Matrix(Z * Z.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G, Eigen::EigenvaluesOnly);
    require(eig.info() == Eigen::Success, ErrorKind::Numerical,
            "symmetric eigen-decomposition did not converge");
    Vector out = eig.eigenvalues().reverse();
    return out.cwiseMax(0.0);
}

ThresholdedSpectrum svt(const Vector& D, double gamma) {
    require(gamma >= 0.0 && std::isfinite(gamma), ErrorKind::InvalidParameter,
            "threshold gamma must be finite and >= 0");
    ThresholdedSpectrum out;
    out.gamma = gamma;
    out.D_gamma = (D.array() - gamma).cwiseMax(0.0).matrix();
    return out;
}

bool is_symmetric(const Matrix& S, double tol) {
    if (S.rows() != S.cols()) return false;
    return (S - S.transpose()).cwiseAbs().maxCoeff() <= tol;
}

EigenDecomposition dense_eigen_oracle(const Matrix& S) {
    const Eigen::Index n = S.rows();
    require(n >= 1 && n <= 500, ErrorKind::InvalidInput, "oracle accepts 1 <= n <= 500");
    require(is_symmetric(S, 1e-12), ErrorKind::InvalidInput, "oracle input is not symmetric");

    Matrix A = 0.5 * (S + S.transpose());
    Matrix Vt = Matrix::Identity(n, n);
    const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (std::sqrt(off) <= 1e-15 * scale) break;

        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                // Rotation angle zeroing A(p,q), stable form from Golub & Van Loan 8.5.
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = A(k, p);
                    const double akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = A(p, k);
                    const double aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = Vt(k, p);
                    const double vkq = Vt(k, q);
                    Vt(k, p) = c * vkp - s * vkq;
                    Vt(k, q) = s * vkp + c * vkq;
                }
            }
        }
        if (sweep == 99)
            throw Error(ErrorKind::Numerical, "Jacobi eigen oracle did not converge");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return A(a, a) > A(b, b); });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        out.values(j) = A(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j)]);
        out.vectors.col(j) = Vt.col(order[static_cast<std::size_t>(j)]);
    }
    Matrix none(n, 0);
    apply_sign_convention(out.vectors, none);
    return out;
}

namespace {

Matrix sym_power(const Matrix& S, bool inverse) {
    require(is_symmetric(S, 1e-8 * std::max(1.0, S.cwiseAbs().maxCoeff())),
            ErrorKind::InvalidInput, "matrix square root needs a symmetric input");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (S + S.transpose()));
    require(eig.info() == Eigen::Success, ErrorKind::Numerical,
            "symmetric eigen-decomposition did not converge");
    Vector ev = eig.eigenvalues();
    for (Eigen::Index j = 0; j < ev.size(); ++j) {
        require(ev(j) >= -1e-10, ErrorKind::Numerical,
                "matrix square root of a matrix with a negative eigenvalue");
        ev(j) = std::max(ev(j), 0.0);
    }
    if (inverse) {
        require(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300), ErrorKind::Degenerate,
                "inverse square root of a singular matrix");
        ev = ev.cwiseSqrt().cwiseInverse();
    } else {
        ev = ev.cwiseSqrt();
    }
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Matrix sym_sqrt(const Matrix& S) { return sym_power(S, false); }
Matrix sym_inv_sqrt(const Matrix& S) { return sym_power(S, true); }

double rcond(const Matrix& A) {
    if (A.size() == 0) return 1.0;
    Eigen::JacobiSVD<Matrix> svd(A);
    const Vector& s = svd.singularValues();
    if (s(0) <= 0.0) return 0.0;
    return s(s.size() - 1) / s(0);
}

Matrix checked_inverse(const Matrix& A, const char* what) {
    require(A.rows() == A.cols(), ErrorKind::InvalidInput, std::string(what) + ": not square");
    require(rcond(A) >= 1e-12, ErrorKind::Degenerate, std::string(what) + " is singular");
    return A.partialPivLu().inverse();
}

}  // namespace afm
