#include <doctest.h>

#include <algorithm>

#include "afm/error.hpp"
#include "afm/inference.hpp"
#include "afm/simulation.hpp"
#include "oracles.hpp"

using namespace afm;

namespace {

FactorDecomposition make_fd(Matrix F, Matrix L) {
    FactorDecomposition fd;
    fd.r = static_cast<int>(F.cols());
    fd.D2 = (L.transpose() * L / static_cast<double>(L.rows())).diagonal();
    fd.F = std::move(F);
    fd.Lambda = std::move(L);
    return fd;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("critical values and bandwidth rule") {
    CHECK(normal_critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_critical_value(0.5) == doctest::Approx(0.6744897501960817).epsilon(1e-12));
    CHECK_THROWS_AS(normal_critical_value(1.0), Error);
    CHECK(default_hac_bandwidth(100) == 4);
    CHECK(default_hac_bandwidth(500) == 5);
    CHECK(default_hac_bandwidth(20) == 2);
}

TEST_CASE("Gamma_t hand cases") {
    const auto fd = make_fd(Matrix::Ones(3, 2), Matrix::Identity(2, 2));
    Matrix resid = Matrix::Zero(3, 2);
    resid(1, 0) = 1.0;
    resid(1, 1) = 2.0;
    const Matrix G = estimate_gamma_t(fd, resid, 1);
    CHECK(G(0, 0) == doctest::Approx(0.5));
    CHECK(G(1, 1) == doctest::Approx(2.0));
    CHECK(G(0, 1) == 0.0);
    CHECK(estimate_gamma_t(fd, resid, 0).isZero(0.0));
    CHECK_THROWS_AS(estimate_gamma_t(fd, resid, 3), Error);

    // Singleton clusters reproduce the independent estimator.
    const std::vector<int> singletons = {0, 1};
    CHECK((estimate_gamma_t(fd, resid, 1, CovMethod::CsClustered, singletons) - G).norm() < 1e-15);
    // One cluster: (sum_i L_i e_i)(...)' / N.
    const std::vector<int> one = {5, 5};
    const Matrix Gc = estimate_gamma_t(fd, resid, 1, CovMethod::CsClustered, one);
    CHECK(Gc(0, 1) == doctest::Approx(1.0));
    CHECK(Gc(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("Phi_i hand cases") {
    Matrix F(2, 1);
    F << 1, -1;
    const auto fd = make_fd(F, Matrix::Ones(1, 1));
    Matrix resid(2, 1);
    resid << 2, 3;
    CHECK(estimate_phi_i(fd, resid, 0, 0)(0, 0) == doctest::Approx(6.5));
    // Lag 1 with Bartlett weight 1/2: 6.5 + 0.5 * 2 * (-3).
    CHECK(estimate_phi_i(fd, resid, 0, 1)(0, 0) == doctest::Approx(3.5));
    CHECK(estimate_phi_i(fd, Matrix::Zero(2, 1), 0, 3).isZero(0.0));
    CHECK_THROWS_AS(estimate_phi_i(fd, resid, 0, -1), Error);
    CHECK_THROWS_AS(estimate_phi_i(fd, resid, 1, 0), Error);
}

TEST_CASE("scalar sandwich widths") {
    const double z = normal_critical_value(0.95);
    // r = 1, Lambda'Lambda/N = d^2 = 4, Gamma_t = g.
    const int N = 5, T = 4;
    const auto fd = make_fd(Matrix::Ones(T, 1), Matrix::Constant(N, 1, 2.0));
    CovarianceEstimates cov;
    const double g = 0.7, p = 0.3;
    cov.Gamma[0] = Matrix::Constant(1, 1, g);
    cov.Phi[0] = Matrix::Constant(1, 1, p);
    const auto cf = ci_factor(fd, cov, 0, 0.95);
    CHECK(cf.half_width(0) == doctest::Approx(z * std::sqrt(g / 16.0 / N)));
    const auto cl = ci_loading(fd, cov, 0, 0.95);
    CHECK(cl.half_width(0) == doctest::Approx(z * std::sqrt(p / T)));
    CHECK(cl.center(0) == 2.0);

    // Lambda_i = 1, Lambda'Lambda/N = 1, F_t = 1, F'F/T = 1.
    const auto unit = make_fd(Matrix::Ones(T, 1), Matrix::Ones(N, 1));
    const auto cc = ci_common(unit, cov, 0, 0, 0.95);
    CHECK(cc.upper()(0) - cc.lower()(0) == doctest::Approx(2.0 * z * std::sqrt(g / N + p / T)));
    CHECK(cc.W_lambda == doctest::Approx(g));
    CHECK(cc.W_f == doctest::Approx(p));

    CovarianceEstimates zero;
    zero.Gamma[0] = Matrix::Zero(1, 1);
    zero.Phi[0] = Matrix::Zero(1, 1);
    CHECK(ci_factor(fd, zero, 0, 0.95).half_width(0) == 0.0);
    CHECK(ci_loading(fd, zero, 0, 0.95).half_width(0) == 0.0);
    CHECK(ci_common(fd, zero, 0, 0, 0.95).half_width(0) == 0.0);

    CHECK_THROWS_AS(ci_factor(fd, cov, 1, 0.95), Error);
    CovarianceEstimates bad;
    bad.Gamma[0] = Matrix::Constant(1, 1, -1.0);
    try {
        ci_factor(fd, bad, 0, 0.95);
        FAIL("expected numerical error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numerical);
    }
}

TEST_CASE("W scalars are invariant to rotating the fit") {
    std::mt19937_64 rng(1);
    const Matrix X = oracle::factor_panel(rng, 40, 30, 3, 1.0);
    const PanelData p = PanelData::raw(X);
    const auto fd = estimate_apc(p, 3);
    const Matrix resid = residuals(p, fd);
    CovarianceRequest req;
    req.times = {0, 7};
    req.units = {3, 11};
    req.hac_bandwidth = 2;
    const auto cov = estimate_covariances(fd, resid, req);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix A = oracle::gaussian(rng, 3, 3) + 2.0 * Matrix::Identity(3, 3);
        FactorDecomposition rot = fd;
        rot.F = fd.F * A;
        rot.Lambda = fd.Lambda * A.transpose().inverse();
        const auto cov2 = estimate_covariances(rot, resid, req);
        for (Eigen::Index i : req.units)
            for (Eigen::Index t : req.times) {
                const auto a = ci_common(fd, cov, i, t, 0.9);
                const auto b = ci_common(rot, cov2, i, t, 0.9);
                CHECK(std::abs(a.W_lambda - b.W_lambda) <= 1e-8 * std::max(1.0, a.W_lambda));
                CHECK(std::abs(a.W_f - b.W_f) <= 1e-8 * std::max(1.0, a.W_f));
                CHECK(std::abs(a.center(0) - b.center(0)) < 1e-10);
            }
    }
    for (const auto& [t, G] : cov.Gamma) {
        CHECK(is_symmetric(G, 1e-10));
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().minCoeff() >= -1e-10);
    }
    for (const auto& [i, P] : cov.Phi) {
        CHECK(is_symmetric(P, 1e-10));
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvalues().minCoeff() >= -1e-10);
    }
    CHECK_THROWS_AS(ci_common(fd, cov, 0, 0, 0.9), Error);
}

TEST_CASE("Gamma_t concentrates around sigma^2 Lambda'Lambda/N") {
    std::mt19937_64 rng(2);
    const int N = 4000;
    const double sigma = 1.5;
    const auto fd = make_fd(Matrix::Ones(3, 2), oracle::gaussian(rng, N, 2));
    const Matrix resid = sigma * oracle::gaussian(rng, 3, N);
    Matrix mean = Matrix::Zero(2, 2);
    for (int t = 0; t < 3; ++t) mean += estimate_gamma_t(fd, resid, t) / 3.0;
    const Matrix target = sigma * sigma * fd.Lambda.transpose() * fd.Lambda / N;
    CHECK((mean - target).norm() / target.norm() < 0.1);
}

TEST_CASE("HAC with serially uncorrelated errors: bandwidth 0 and 4 agree") {
    DgpConfig cfg;
    cfg.N = 60;
    cfg.T = 500;
    cfg.r = 2;
    cfg.seed = 31;
    const SimulatedPanel sim = generate_panel(cfg);
    const auto fd = estimate_apc(sim.panel, 2);
    const Matrix resid = residuals(sim.panel, fd);
    double m0 = 0.0, m4 = 0.0;
    for (Eigen::Index i = 0; i < cfg.N; ++i) {
        m0 += estimate_phi_i(fd, resid, i, 0).trace();
        m4 += estimate_phi_i(fd, resid, i, 4).trace();
    }
    CHECK(std::abs(m4 - m0) / m0 < 0.1);
}

TEST_CASE("interval widths shrink like 1/sqrt(N) and 1/sqrt(T)") {
    auto widths = [](Eigen::Index N, Eigen::Index T, bool factor) {
        std::vector<double> w;
        for (int rep = 0; rep < 20; ++rep) {
            DgpConfig cfg;
            cfg.N = N;
            cfg.T = T;
            cfg.r = 1;
            cfg.seed = derive_seed(77, rep);
            const SimulatedPanel sim = generate_panel(cfg);
            const auto fd = estimate_apc(sim.panel, 1);
            const Matrix resid = residuals(sim.panel, fd);
            CovarianceRequest req;
            for (Eigen::Index k = 0; k < 10; ++k) {
                req.times.push_back(k);
                req.units.push_back(k);
            }
            const auto cov = estimate_covariances(fd, resid, req);
            for (Eigen::Index k = 0; k < 10; ++k) {
                // Widths in scale-free form: factor CI relative to sd of F (=1),
                // loading CI relative to the loading scale sqrt(D2).
                if (factor)
                    w.push_back(ci_factor(fd, cov, k, 0.95).half_width(0));
                else
                    w.push_back(ci_loading(fd, cov, k, 0.95).half_width(0) / std::sqrt(fd.D2(0)));
            }
        }
        return median(w);
    };
    const double f_ratio = widths(400, 100, true) / widths(200, 100, true);
    CHECK(f_ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.15));
    const double l_ratio = widths(100, 400, false) / widths(100, 200, false);
    CHECK(l_ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.15));
}
