#include <doctest.h>

#include <numeric>

#include "afm/error.hpp"
#include "afm/estimators.hpp"
#include "oracles.hpp"

using namespace afm;

namespace {

double max_abs(const Matrix& A) { return A.size() ? A.cwiseAbs().maxCoeff() : 0.0; }

void check_normalization(const FactorDecomposition& fd) {
    const double T = static_cast<double>(fd.F.rows());
    const double N = static_cast<double>(fd.Lambda.rows());
    const Matrix FF = fd.F.transpose() * fd.F / T;
    const Matrix LL = fd.Lambda.transpose() * fd.Lambda / N;
    const Vector d = fd.singular_values();
    switch (fd.flavor) {
        case Flavor::APC:
            CHECK(max_abs(FF - Matrix::Identity(fd.r, fd.r)) < 1e-8);
            CHECK(max_abs(LL - Matrix(fd.D2.asDiagonal())) < 1e-8);
            break;
        case Flavor::PC:
            CHECK(max_abs(FF - Matrix(d.asDiagonal())) < 1e-8);
            CHECK(max_abs(LL - Matrix(d.asDiagonal())) < 1e-8);
            break;
        case Flavor::RPC: {
            const Vector dg = (d.array() - fd.gamma).max(0.0).matrix();
            CHECK(max_abs(FF - Matrix(dg.asDiagonal())) < 1e-8);
            CHECK(max_abs(LL - Matrix(dg.asDiagonal())) < 1e-8);
            break;
        }
    }
}

}  // namespace

TEST_CASE("APC on an exact rank-1 panel") {
    std::mt19937_64 rng(1);
    const Matrix X = oracle::factor_panel(rng, 12, 8, 1, 0.0);
    const PanelData p = PanelData::raw(X);
    const auto fd = estimate_apc(p, 1);
    CHECK((common_component(fd).C - X).norm() < 1e-10);
    CHECK(ssr(p, fd) < 1e-20);
    check_normalization(fd);
}

TEST_CASE("APC and PC match the oracle SVD on a tiny panel") {
    Matrix X(4, 3);
    X << 4, 0.5, 0, 0.2, 3, 0.1, 0, 0.3, 2, 1, 1, 1;
    const PanelData p = PanelData::raw(X);
    const oracle::Svd s = oracle::jacobi_svd(X / std::sqrt(12.0), 1);
    const auto apc = estimate_apc(p, 1);
    CHECK(max_abs(apc.F - 2.0 * s.U) < 1e-9);
    CHECK(max_abs(apc.Lambda - std::sqrt(3.0) * s.V * s.D(0)) < 1e-9);
    const auto pc = estimate_pc(p, 1);
    CHECK(max_abs(pc.F - 2.0 * s.U * std::sqrt(s.D(0))) < 1e-9);
    CHECK(max_abs(pc.Lambda - std::sqrt(3.0) * s.V * std::sqrt(s.D(0))) < 1e-9);
}

TEST_CASE("normalizations and common-component identities") {
    std::mt19937_64 rng(2);
    for (auto [T, N, r] : {std::tuple{30, 20, 2}, std::tuple{15, 40, 3}, std::tuple{25, 25, 1}}) {
        const PanelData p = PanelData::standardize(oracle::factor_panel(rng, T, N, r, 1.0));
        const auto apc = estimate_apc(p, r);
        const auto pc = estimate_pc(p, r);
        check_normalization(apc);
        check_normalization(pc);
        CHECK(max_abs(common_component(apc).C - common_component(pc).C) < 1e-10);
        const auto rel = pc_from_apc(apc);
        CHECK(max_abs(rel.F - pc.F) < 1e-10);
        CHECK(max_abs(rel.Lambda - pc.Lambda) < 1e-10);

        const auto rpc0 = estimate_rpc(p, r, 0.0);
        CHECK(rpc0.F == pc.F);
        CHECK(rpc0.Lambda == pc.Lambda);
        const auto rpc = estimate_rpc(p, r, 0.3 * apc.singular_values()(r - 1));
        check_normalization(rpc);

        // SSR identity on standardized data.
        CHECK(std::abs(ssr(p, apc) - (1.0 - apc.D2.sum())) < 1e-8);
        CHECK(std::abs(ssr(p, apc) - oracle::double_sum_sq(p.X - common_component(apc).C) / (T * N)) < 1e-12);
    }
}

TEST_CASE("RPC thresholding") {
    std::mt19937_64 rng(3);
    const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 20, 10, 2, 0.5));
    const auto apc = estimate_apc(p, 2);
    const double d1 = apc.singular_values()(0);
    const auto zero = estimate_rpc(p, 2, d1);
    CHECK(zero.F.isZero(0.0));
    CHECK(zero.Lambda.isZero(0.0));
    CHECK_THROWS_AS(estimate_rpc(p, 2, -1e-3), Error);

    // Continuity of C in gamma as gamma -> 0.
    const Matrix Cpc = common_component(estimate_pc(p, 2)).C;
    double prev = std::numeric_limits<double>::infinity();
    for (double g : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
        const double dev = (common_component(estimate_rpc(p, 2, g)).C - Cpc).norm();
        CHECK(dev < prev);
        prev = dev;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("RPC column norms for a known spectrum") {
    // Z = diag(0.9, 0.3) embedded in a 4x2 panel: X = sqrt(NT) Z.
    Matrix Z = Matrix::Zero(4, 2);
    Z(0, 0) = 0.9;
    Z(1, 1) = 0.3;
    const PanelData p = PanelData::raw(Z * std::sqrt(8.0));
    const auto rpc = estimate_rpc(p, 2, 0.5);
    const Vector norms = rpc.F.colwise().squaredNorm() / 4.0;
    CHECK(norms(0) == doctest::Approx(0.4));
    CHECK(norms(1) == 0.0);
}

TEST_CASE("full rank reconstruction and zero SSR") {
    std::mt19937_64 rng(4);
    const PanelData p = PanelData::raw(oracle::gaussian(rng, 6, 4));
    const auto fd = estimate_apc(p, 4);
    CHECK(max_abs(common_component(fd).C - p.X) < 1e-10);
    CHECK(ssr(p, fd) < 1e-20);
}

TEST_CASE("SSR nonincreasing in r and rank of C") {
    std::mt19937_64 rng(5);
    const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 30, 12, 3, 1.0));
    double prev = ssr(p, estimate_apc(p, 1));
    for (int r = 2; r <= 12; ++r) {
        const auto fd = estimate_apc(p, r);
        const double cur = ssr(p, fd);
        CHECK(cur <= prev + 1e-14);
        prev = cur;
        if (r < 12) {
            const auto sv = oracle::jacobi_svd(common_component(fd).C, r + 1).D;
            CHECK(sv(r) <= 1e-10 * sv(0));
        }
    }
}

TEST_CASE("unit permutation and scaling") {
    std::mt19937_64 rng(6);
    const Matrix X = oracle::factor_panel(rng, 25, 10, 2, 0.5);
    const auto fd = estimate_apc(PanelData::raw(X), 2);

    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix Xp(25, 10);
    for (int j = 0; j < 10; ++j) Xp.col(j) = X.col(perm[j]);
    const auto fp = estimate_apc(PanelData::raw(Xp), 2);
    CHECK(max_abs(fp.F - fd.F) < 1e-9);
    CHECK(max_abs(fp.D2 - fd.D2) < 1e-12);
    for (int j = 0; j < 10; ++j) CHECK(max_abs(fp.Lambda.row(j) - fd.Lambda.row(perm[j])) < 1e-9);

    const auto fs = estimate_apc(PanelData::raw(3.0 * X), 2);
    CHECK(max_abs(fs.singular_values() - 3.0 * fd.singular_values()) < 1e-10);
    CHECK(max_abs(common_component(fs).C - 3.0 * common_component(fd).C) < 1e-9);
}

TEST_CASE("rank errors and degenerate PC relation") {
    std::mt19937_64 rng(7);
    const PanelData p = PanelData::raw(oracle::gaussian(rng, 5, 4));
    CHECK_THROWS_AS(estimate_apc(p, 0), Error);
    CHECK_THROWS_AS(estimate_apc(p, 5), Error);
    const PanelData rank1 = PanelData::raw(oracle::factor_panel(rng, 6, 4, 1, 0.0));
    const auto apc = estimate_apc(rank1, 2);
    CHECK_NOTHROW(estimate_pc(rank1, 2));
    try {
        pc_from_apc(apc);
        FAIL("expected degenerate");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Degenerate);
    }
    CHECK(suggest_gamma(p, 2) == doctest::Approx(estimate_apc(p, 3).singular_values()(2)));
}

TEST_CASE("ALS") {
    std::mt19937_64 rng(8);
    SUBCASE("exact rank") {
        const PanelData p = PanelData::raw(oracle::factor_panel(rng, 20, 15, 2, 0.0));
        AlsOptions o;
        o.tol = 1e-12;
        const auto res = als_solve(p, 2, o);
        CHECK(res.ssr <= 1e-10);
        CHECK((common_component(res.fit).C - p.X).norm() < 1e-8 * p.X.norm());
    }
    SUBCASE("random panel agrees with the SVD path") {
        const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 30, 20, 2, 1.0));
        AlsOptions o;
        o.tol = 1e-10;
        const auto res = als_solve(p, 2, o);
        const Matrix Capc = common_component(estimate_apc(p, 2)).C;
        CHECK((common_component(res.fit).C - Capc).norm() / p.X.norm() <= 1e-8);
        check_normalization(res.fit);
        o.seed = 99;
        const auto other = als_solve(p, 2, o);
        CHECK((common_component(other.fit).C - common_component(res.fit).C).norm() / p.X.norm() <= 1e-8);
    }
    SUBCASE("non-convergence carries the last iterate") {
        const PanelData p = PanelData::standardize(oracle::factor_panel(rng, 30, 20, 3, 3.0));
        AlsOptions o;
        o.tol = 1e-14;
        o.max_iter = 2;
        try {
            als_solve(p, 3, o);
            FAIL("expected non-convergence");
        } catch (const AlsNonConvergence& e) {
            CHECK(e.kind() == ErrorKind::NonConvergence);
            CHECK(e.last_iterate().iterations == 2);
            CHECK(e.last_iterate().fit.F.rows() == 30);
        }
    }
}

TEST_CASE("standardization metadata") {
    std::mt19937_64 rng(9);
    Matrix X = oracle::gaussian(rng, 40, 5);
    X.col(2).array() += 10.0;
    X.col(3) *= 4.0;
    const PanelData p = PanelData::standardize(X);
    CHECK(p.X.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
    for (int j = 0; j < 5; ++j) CHECK(std::abs(std::sqrt(p.X.col(j).squaredNorm() / 40.0) - 1.0) <= 1e-8);
    CHECK(max_abs(p.to_original_units(p.X) - X) < 1e-10);
    Matrix c = X;
    c.col(1).setConstant(2.0);
    CHECK_THROWS_AS(PanelData::standardize(c), Error);
}
