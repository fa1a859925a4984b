#include <doctest.h>

#include "afm/constrained.hpp"
#include "afm/error.hpp"
#include "afm/estimators.hpp"
#include "afm/simulation.hpp"
#include "oracles.hpp"

using namespace afm;

namespace {

Matrix dense(const ConstraintSystem& cs) { return Matrix(cs.R); }

ConstraintSystem random_system(std::mt19937_64& rng, Eigen::Index N, int r, Eigen::Index m) {
    const Matrix R = oracle::gaussian(rng, m, N * r);
    return make_constraint_system(R.sparseView(), oracle::gaussian(rng, m, 1), N, r);
}

double max_abs(const Matrix& A) { return A.size() ? A.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("vec ordering") {
    CHECK(vec_index(0, 0, 5) == 0);
    CHECK(vec_index(3, 0, 5) == 3);
    CHECK(vec_index(0, 1, 5) == 5);
    CHECK(vec_index(4, 2, 5) == 14);
    Matrix L(3, 2);
    L << 1, 4, 2, 5, 3, 6;
    const Vector v = oracle::vec(L);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) CHECK(v(vec_index(i, j, 3)) == L(i, j));
}

TEST_CASE("build_restrictions primitives") {
    auto fix = build_restrictions(3, 2, {FixEntry{0, 0, 1.0}});
    CHECK(fix.m() == 1);
    Matrix expect = Matrix::Zero(1, 6);
    expect(0, 0) = 1.0;
    CHECK(dense(fix) == expect);
    CHECK(fix.phi(0) == 1.0);

    auto lt = build_restrictions(4, 2, lower_triangular(2));
    CHECK(lt.m() == 1);
    CHECK(dense(lt)(0, vec_index(0, 1, 4)) == 1.0);
    CHECK(build_restrictions(5, 3, lower_triangular(3)).m() == 3);

    // Equality chain 1=2, 2=3, 1=3 has rank 2.
    auto chain = build_restrictions(
        3, 1, {EqualEntries{0, 0, 1, 0}, EqualEntries{1, 0, 2, 0}, EqualEntries{0, 0, 2, 0}});
    CHECK(chain.m() == 2);
    Eigen::FullPivLU<Matrix> lu(dense(chain));
    CHECK(lu.rank() == 2);

    CHECK(build_restrictions(4, 2, {HomogeneousGroup{1, {0, 2, 3}}}).m() == 2);
    CHECK(build_restrictions(4, 3, {ZeroBlock{0, 1, 0, 1}}).m() == 4);
    CHECK(build_restrictions(3, 2, {FixEntry{1, 1, 2.0}, FixEntry{1, 1, 2.0}}).m() == 1);

    try {
        build_restrictions(3, 2, {FixEntry{0, 0, 1.0}, FixEntry{0, 0, 2.0}});
        FAIL("expected infeasible");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Infeasible);
    }
    try {
        build_restrictions(3, 1, {FixEntry{0, 0, 1.0}, FixEntry{1, 0, 2.0}, EqualEntries{0, 0, 1, 0}});
        FAIL("expected infeasible");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Infeasible);
    }
    CHECK_THROWS_AS(build_restrictions(3, 2, {FixEntry{3, 0, 1.0}}), Error);
}

TEST_CASE("make_constraint_system validation") {
    Matrix R(2, 4);
    R << 1, 0, 0, 0, 2, 0, 0, 0;
    try {
        make_constraint_system(R.sparseView(), Vector::Zero(2), 2, 2);
        FAIL("expected degenerate");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Degenerate);
    }
    CHECK_THROWS_AS(make_constraint_system(Matrix::Identity(4, 4).sparseView(), Vector::Zero(4), 2, 2), Error);
    CHECK_THROWS_AS(make_constraint_system(Matrix::Identity(1, 5).sparseView(), Vector::Zero(1), 2, 2), Error);
    CHECK(empty_constraints(5, 2).m() == 0);
}

TEST_CASE("f_update") {
    std::mt19937_64 rng(1);
    const Matrix Z = oracle::gaussian(rng, 8, 6);
    Eigen::HouseholderQR<Matrix> qr(oracle::gaussian(rng, 6, 2));
    const Matrix L = qr.householderQ() * Matrix::Identity(6, 2);
    CHECK(max_abs(f_update(Z, L, 0.0) - Z * L) < 1e-12);
    CHECK(f_update(Z, Matrix::Zero(6, 2), 0.5).isZero(0.0));
    const Matrix Lr = oracle::gaussian(rng, 6, 3);
    const Matrix ref = (Lr.transpose() * Lr + 0.3 * Matrix::Identity(3, 3)).fullPivLu().solve(Lr.transpose() * Z.transpose()).transpose();
    CHECK(max_abs(f_update(Z, Lr, 0.3) - ref) < 1e-10);
    try {
        f_update(Z, Matrix::Zero(6, 2), 0.0);
        FAIL("expected degenerate");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Degenerate);
    }
}

TEST_CASE("lambda_update_penalized against the dense Kronecker oracle") {
    std::mt19937_64 rng(2);
    const Matrix Z = oracle::gaussian(rng, 10, 6);
    const Matrix F = oracle::gaussian(rng, 10, 2);

    // tau = 0 is column-wise ridge.
    const ConstraintSystem none = empty_constraints(6, 2);
    const Matrix ridge = Z.transpose() * F * (F.transpose() * F + 0.4 * Matrix::Identity(2, 2)).inverse();
    CHECK(max_abs(lambda_update_penalized(Z, F, 0.4, 0.0, none) - ridge) < 1e-12);
    CHECK(max_abs(lambda_update_penalized(Z, F, 0.4, 7.0, none) - ridge) < 1e-12);

    for (Eigen::Index m : {1, 3, 5, 9}) {  // Woodbury for m <= 3, dense beyond
        const ConstraintSystem cs = random_system(rng, 6, 2, m);
        for (double tau : {0.0, 0.5, 30.0}) {
            const Matrix got = lambda_update_penalized(Z, F, 0.4, tau, cs);
            const Matrix ref = oracle::penalized_lambda(Z, F, 0.4, tau, dense(cs), cs.phi);
            CHECK(max_abs(got - ref) < 1e-9);
        }
    }
    CHECK_THROWS_AS(lambda_update_penalized(Z, F, 0.4, kTauInfinity, none), Error);
}

TEST_CASE("lambda_restrict_exact") {
    std::mt19937_64 rng(3);
    SUBCASE("already feasible") {
        const Matrix Z = oracle::gaussian(rng, 9, 5);
        const Matrix F = oracle::gaussian(rng, 9, 2);
        const Matrix L0 = lambda_update_penalized(Z, F, 0.1, 0.0, empty_constraints(5, 2));
        const Matrix R = oracle::gaussian(rng, 2, 10);
        const ConstraintSystem cs = make_constraint_system(R.sparseView(), R * oracle::vec(L0), 5, 2);
        CHECK(max_abs(lambda_restrict_exact(L0, F, 0.1, cs) - L0) < 1e-12);
    }
    SUBCASE("row selector with F'F + gamma I = c I") {
        Matrix F = Matrix::Zero(6, 2);
        F(0, 0) = 2.0;
        F(1, 1) = 2.0;
        const Matrix L0 = oracle::gaussian(rng, 4, 2);
        const ConstraintSystem cs = build_restrictions(4, 2, {FixEntry{2, 1, 0.0}});
        Matrix expect = L0;
        expect(2, 1) = 0.0;
        CHECK(max_abs(lambda_restrict_exact(L0, F, 0.5, cs) - expect) < 1e-12);
    }
    SUBCASE("KKT oracle") {
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix Z = oracle::gaussian(rng, 8, 5);
            const Matrix F = oracle::gaussian(rng, 8, 2);
            const ConstraintSystem cs = random_system(rng, 5, 2, 2);
            const Matrix L0 = lambda_update_penalized(Z, F, 0.2, 0.0, empty_constraints(5, 2));
            const Matrix got = lambda_restrict_exact(L0, F, 0.2, cs);
            CHECK(max_abs(got - oracle::kkt_lambda(Z, F, 0.2, dense(cs), cs.phi)) < 1e-9);
            CHECK(cs.violation(got) < 1e-10);
        }
    }
    SUBCASE("random full-row-rank systems are satisfied") {
        for (int trial = 0; trial < 100; ++trial) {
            const Eigen::Index N = 3 + trial % 7;
            const int r = 1 + trial % 3;
            const Eigen::Index m = 1 + trial % (N * r - 1);
            const ConstraintSystem cs = random_system(rng, N, r, m);
            const Matrix F = oracle::gaussian(rng, 12, r);
            const Matrix L0 = oracle::gaussian(rng, N, r);
            const Matrix L = lambda_restrict_exact(L0, F, 0.1, cs);
            CHECK((dense(cs) * oracle::vec(L) - cs.phi).norm() <= 1e-10 * std::max(1.0, cs.phi.norm()));
        }
    }
}

TEST_CASE("constraint violation decreases in tau") {
    std::mt19937_64 rng(4);
    const Matrix Z = oracle::gaussian(rng, 12, 6);
    const Matrix F = oracle::gaussian(rng, 12, 2);
    const ConstraintSystem cs = random_system(rng, 6, 2, 3);
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
        const double v = cs.violation(lambda_update_penalized(Z, F, 0.1, tau, cs));
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("constrained_solve without constraints reproduces RPC") {
    std::mt19937_64 rng(5);
    const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 40, 30, 2, 1.0));
    const double gamma = 0.5 * suggest_gamma(p, 2);
    for (double tau : {0.0, 5.0, kTauInfinity}) {
        const ConstrainedFit fit = constrained_solve(p, 2, gamma, empty_constraints(30, 2), tau);
        const Matrix Crpc = common_component(estimate_rpc(p, 2, gamma)).C;
        CHECK((fit.common_component(30, 40) - Crpc).norm() / Crpc.norm() <= 1e-6);
        for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
            CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-10);
    }
}

TEST_CASE("constrained_solve with exact restrictions") {
    std::mt19937_64 rng(6);
    const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 50, 20, 2, 1.0));
    const ConstraintSystem cs = build_restrictions(20, 2, {FixEntry{0, 0, 0.3}, FixEntry{0, 1, 0.0}});
    const ConstrainedFit fit = constrained_solve(p, 2, 0.05, cs, kTauInfinity);
    CHECK(std::abs(fit.Lambda(0, 0) - 0.3) < 1e-10);
    CHECK(std::abs(fit.Lambda(0, 1)) < 1e-10);
    CHECK(fit.constraint_violation <= 1e-8);
    CHECK(fit.tau_infinite());
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
        CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-10);
    const Matrix FF = fit.F.transpose() * fit.F;
    const Matrix LL = fit.Lambda.transpose() * fit.Lambda;
    CHECK(is_symmetric(FF, 1e-10));
    CHECK(is_symmetric(LL, 1e-10));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(FF).eigenvalues().minCoeff() >= -1e-10);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(LL).eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("lower-triangular truth is recovered under lower-triangular restrictions") {
    DgpConfig cfg;
    cfg.N = 60;
    cfg.T = 60;
    cfg.r = 2;
    cfg.loading_dist = LoadingDist::LowerTriangularNormal;
    cfg.seed = 8;
    const SimulatedPanel sim = generate_panel(cfg);
    const double gamma = 0.01;
    const ConstraintSystem cs = build_restrictions(60, 2, lower_triangular(2));
    ConstrainedOptions o;
    o.max_iter = 5000;
    const ConstrainedFit fit = constrained_solve(sim.panel, 2, gamma, cs, kTauInfinity, o);
    CHECK(fit.constraint_violation <= 1e-8);
    const Matrix C0 = sim.F0 * sim.Lambda0.transpose();
    const double err_con = (fit.common_component(60, 60) - C0).squaredNorm() / 3600.0;
    const double err_free = (common_component(estimate_rpc(sim.panel, 2, gamma)).C - C0).squaredNorm() / 3600.0;
    CHECK(err_con <= 1.2 * err_free);
}

TEST_CASE("constrained_solve reports non-convergence") {
    std::mt19937_64 rng(7);
    const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 30, 20, 2, 1.0));
    const ConstraintSystem cs = build_restrictions(20, 2, {FixEntry{0, 0, 1.0}});
    ConstrainedOptions o;
    o.max_iter = 1;
    try {
        constrained_solve(p, 2, 0.0, cs, kTauInfinity, o);
        FAIL("expected non-convergence");
    } catch (const ConstrainedNonConvergence& e) {
        CHECK(e.kind() == ErrorKind::NonConvergence);
        CHECK(e.last_iterate().objective_trace.size() == 1);
    }
}
