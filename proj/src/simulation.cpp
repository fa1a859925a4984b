#include "afm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "afm/estimators.hpp"
#include "afm/rotations.hpp"

namespace afm {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 finalizer applied to base + golden-ratio stride.
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

void validate_config(const DgpConfig& cfg) {
    require(cfg.N >= 2 && cfg.T >= 2, ErrorKind::InvalidParameter, "DGP needs N, T >= 2");
    require(cfg.r >= 1 && cfg.r + cfg.weak_factors <= std::min(cfg.N, cfg.T),
            ErrorKind::InvalidParameter, "DGP needs 1 <= r (+ weak factors) <= min(N, T)");
    require(cfg.weak_factors >= 0, ErrorKind::InvalidParameter, "weak_factors must be >= 0");
    require(std::abs(cfg.factor_ar) < 1.0, ErrorKind::InvalidParameter, "factor AR must be in (-1, 1)");
    require(cfg.error_cross_corr >= 0.0 && cfg.error_cross_corr < 1.0, ErrorKind::InvalidParameter,
            "error cross-correlation beta must be in [0, 1)");
    require(cfg.error_serial_corr >= 0.0 && cfg.error_serial_corr < 1.0,
            ErrorKind::InvalidParameter, "error serial correlation must be in [0, 1)");
    require(cfg.noise_scale >= 0.0 && cfg.loading_sd >= 0.0, ErrorKind::InvalidParameter,
            "noise_scale and loading_sd must be >= 0");
    require(cfg.loading_scales.empty() ||
                static_cast<int>(cfg.loading_scales.size()) == cfg.r,
            ErrorKind::InvalidParameter, "loading_scales must have r entries");
}

double column_scale(const DgpConfig& cfg, int j) {
    return cfg.loading_scales.empty() ? 1.0 : cfg.loading_scales[static_cast<std::size_t>(j)];
}

}  // namespace

SimulatedPanel generate_panel(const DgpConfig& cfg) {
    validate_config(cfg);
    const Eigen::Index N = cfg.N;
    const Eigen::Index T = cfg.T;
    const int k = cfg.r + cfg.weak_factors;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SimulatedPanel out;
    out.F0.resize(T, k);
    const double innov = std::sqrt(1.0 - cfg.factor_ar * cfg.factor_ar);
    for (int j = 0; j < k; ++j) {
        for (Eigen::Index t = 0; t < T; ++t) {
            const double u = normal(rng);
            if (cfg.factor_process == FactorProcess::Ar1 && t > 0)
                out.F0(t, j) = cfg.factor_ar * out.F0(t - 1, j) + innov * u;
            else
                out.F0(t, j) = u;
        }
    }

    const double weak_scale = std::pow(static_cast<double>(N), -cfg.weak_exponent);
    for (int attempt = 0;; ++attempt) {
        require(attempt < 100, ErrorKind::UnstableDgp,
                "could not draw loadings with min eigenvalue of Lambda'Lambda/N >= 0.1");
        out.Lambda0.resize(N, k);
        for (int j = 0; j < k; ++j) {
            const double scale = j < cfg.r ? column_scale(cfg, j) : weak_scale;
            for (Eigen::Index i = 0; i < N; ++i)
                out.Lambda0(i, j) = scale * (cfg.loading_mean + cfg.loading_sd * normal(rng));
        }
        if (cfg.loading_dist == LoadingDist::LowerTriangularNormal)
            for (Eigen::Index i = 0; i < std::min<Eigen::Index>(k, N); ++i)
                for (int j = static_cast<int>(i) + 1; j < k; ++j) out.Lambda0(i, j) = 0.0;
        const Matrix strong = out.Lambda0.leftCols(cfg.r);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(strong.transpose() * strong / static_cast<double>(N),
                                                  Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() >= 0.1) break;
    }

    // Serially correlated unit-variance field.
    Matrix v(T, N);
    const double rho = cfg.error_serial_corr;
    const double v_innov = std::sqrt(1.0 - rho * rho);
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index t = 0; t < T; ++t) {
            const double u = normal(rng);
            v(t, i) = t > 0 ? rho * v(t - 1, i) + v_innov * u : u;
        }
    }

    const double beta = cfg.error_cross_corr;
    if (beta > 0.0) {
        Matrix mixed = Matrix::Zero(T, N);
        for (Eigen::Index i = 0; i < N; ++i) {
            double norm2 = 0.0;
            for (Eigen::Index j = std::max<Eigen::Index>(0, i - kErrorBand);
                 j <= std::min<Eigen::Index>(N - 1, i + kErrorBand); ++j) {
                const double w = std::pow(beta, static_cast<double>(std::abs(i - j)));
                mixed.col(i) += w * v.col(j);
                norm2 += w * w;
            }
            mixed.col(i) /= std::sqrt(norm2);
        }
        v = std::move(mixed);
    }
    out.e = cfg.noise_scale * v;
    out.panel = PanelData::raw(out.F0 * out.Lambda0.transpose() + out.e);
    return out;
}

std::pair<Matrix, Matrix> population_moments(const DgpConfig& cfg) {
    validate_config(cfg);
    require(cfg.loading_dist == LoadingDist::Normal, ErrorKind::InvalidParameter,
            "population moments are available for the normal loading design only");
    const int r = cfg.r;
    Vector scale(r);
    for (int j = 0; j < r; ++j) scale(j) = column_scale(cfg, j);
    // E[l l'] with l_j = s_j (mu + sigma z_j).
    Matrix sigma_l = cfg.loading_mean * cfg.loading_mean * scale * scale.transpose();
    sigma_l.diagonal() += cfg.loading_sd * cfg.loading_sd * scale.cwiseAbs2();
    return {Matrix::Identity(r, r), sigma_l};
}

std::string metric_name(const Metric& m) {
    const std::string ell = std::to_string(m.ell);
    switch (m.kind) {
        case MetricKind::FactorSpaceError: return "factor-space-error";
        case MetricKind::LoadingSpaceError: return "loading-space-error";
        case MetricKind::CommonError: return "common-error";
        case MetricKind::EeNorm: return "ee-norm";
        case MetricKind::FeeF: return "FeeF";
        case MetricKind::LeeL: return "LeeL";
        case MetricKind::HEquivalence: return "H-equivalence-" + ell;
        case MetricKind::Lemma3i: return "lemma3-i-" + ell;
        case MetricKind::Lemma3ii: return "lemma3-ii-" + ell;
        case MetricKind::Lemma3iii: return "lemma3-iii-" + ell;
        case MetricKind::Lemma3iv: return "lemma3-iv-" + ell;
    }
    return "?";
}

Metric parse_metric(const std::string& name) {
    static const std::map<std::string, MetricKind> plain = {
        {"factor-space-error", MetricKind::FactorSpaceError},
        {"loading-space-error", MetricKind::LoadingSpaceError},
        {"common-error", MetricKind::CommonError},
        {"ee-norm", MetricKind::EeNorm},
        {"FeeF", MetricKind::FeeF},
        {"LeeL", MetricKind::LeeL},
    };
    if (auto it = plain.find(name); it != plain.end()) return {it->second, 0};
    static const std::vector<std::pair<std::string, MetricKind>> indexed = {
        {"H-equivalence", MetricKind::HEquivalence}, {"lemma3-iii", MetricKind::Lemma3iii},
        {"lemma3-iv", MetricKind::Lemma3iv},         {"lemma3-ii", MetricKind::Lemma3ii},
        {"lemma3-i", MetricKind::Lemma3i},
    };
    for (const auto& [prefix, kind] : indexed) {
        if (name == prefix) return {kind, kind == MetricKind::HEquivalence ? 1 : 0};
        if (name.size() == prefix.size() + 2 && name.compare(0, prefix.size(), prefix) == 0 &&
            name[prefix.size()] == '-') {
            const int ell = name.back() - '0';
            require(ell >= 0 && ell <= 4, ErrorKind::InvalidParameter,
                    "rotation index in metric '" + name + "' must be 0..4");
            return {kind, ell};
        }
    }
    throw Error(ErrorKind::InvalidParameter, "unknown metric '" + name + "'");
}

double evaluate_metric(const Metric& metric, const SimulatedPanel& sim, int r) {
    const Matrix& e = sim.e;
    const double N = static_cast<double>(e.cols());
    const double T = static_cast<double>(e.rows());
    const Matrix F0 = sim.F0.leftCols(r);
    const Matrix L0 = sim.Lambda0.leftCols(r);

    switch (metric.kind) {
        case MetricKind::EeNorm: {
            const Matrix g = e.cols() <= e.rows() ? Matrix(e.transpose() * e) : Matrix(e * e.transpose());
            return g.squaredNorm() / (N * N * T * T);
        }
        case MetricKind::FeeF: {
            const Matrix a = e.transpose() * F0;
            return (a.transpose() * a).norm() / (N * T * T);
        }
        case MetricKind::LeeL: {
            const Matrix a = e * L0;
            return (a.transpose() * a).norm() / (N * N * T);
        }
        default: break;
    }

    const FactorDecomposition fd = align_signs(estimate_apc(sim.panel, r), F0);
    if (metric.kind == MetricKind::CommonError)
        return (common_component(fd).C - F0 * L0.transpose()).squaredNorm() / (N * T);

    const Matrix H0 = rotation_matrix(0, F0, L0, fd);
    if (metric.kind == MetricKind::FactorSpaceError) return (fd.F - F0 * H0).squaredNorm() / T;
    if (metric.kind == MetricKind::LoadingSpaceError) {
        const Matrix Hinv_t = checked_inverse(H0, "H0").transpose();
        return (fd.Lambda - L0 * Hinv_t).squaredNorm() / N;
    }

    const Matrix H = rotation_matrix(metric.ell, F0, L0, fd);
    switch (metric.kind) {
        case MetricKind::HEquivalence: return (H - H0).norm();
        case MetricKind::Lemma3i: return (F0.transpose() * (fd.F - F0 * H)).norm() / T;
        case MetricKind::Lemma3ii: {
            const Matrix Hinv_t = checked_inverse(H, "H").transpose();
            return (L0.transpose() * (fd.Lambda - L0 * Hinv_t)).norm() / N;
        }
        case MetricKind::Lemma3iii: return ((fd.F - F0 * H).transpose() * e.col(0)).norm() / T;
        case MetricKind::Lemma3iv: {
            const Matrix Hinv_t = checked_inverse(H, "H").transpose();
            return (e.row(0) * (fd.Lambda - L0 * Hinv_t)).norm() / N;
        }
        default: break;
    }
    throw Error(ErrorKind::InvalidParameter, "unhandled metric");
}

namespace {

/// Runs fn(0..reps-1) on `workers` threads; results are placed by index so the
/// output does not depend on scheduling.
template <typename R>
std::vector<R> run_replications(int reps, int workers, const std::function<R(int)>& fn) {
    std::vector<R> out(static_cast<std::size_t>(reps));
    const int nthreads = std::max(1, std::min(workers, reps));
    if (nthreads == 1) {
        for (int k = 0; k < reps; ++k) out[static_cast<std::size_t>(k)] = fn(k);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
    std::vector<std::thread> pool;
    for (int w = 0; w < nthreads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int k = w; k < reps; k += nthreads) out[static_cast<std::size_t>(k)] = fn(k);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
    return out;
}

SizeSummary summarize(Eigen::Index N, Eigen::Index T, const std::vector<double>& values, int reps) {
    std::vector<double> ok;
    for (double v : values)
        if (std::isfinite(v)) ok.push_back(v);
    SizeSummary s;
    s.N = N;
    s.T = T;
    s.nonfinite = static_cast<int>(values.size() - ok.size());
    require(static_cast<double>(s.nonfinite) <= 0.01 * reps, ErrorKind::UnstableDgp,
            "metric was non-finite in more than 1% of replications at N=" + std::to_string(N) +
                ", T=" + std::to_string(T));
    if (ok.empty()) return s;
    const double n = static_cast<double>(ok.size());
    s.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : ok) ss += (v - s.mean) * (v - s.mean);
    s.sd = ok.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::sort(ok.begin(), ok.end());
    const std::size_t mid = ok.size() / 2;
    s.median = ok.size() % 2 == 1 ? ok[mid] : 0.5 * (ok[mid - 1] + ok[mid]);
    return s;
}

void check_reps(const McOptions& opts, int min_reps) {
    require(opts.reps >= min_reps, ErrorKind::InvalidParameter,
            "need at least " + std::to_string(min_reps) + " replications, got " + std::to_string(opts.reps));
    require(opts.workers >= 1, ErrorKind::InvalidParameter, "need at least one worker");
}

}  // namespace

std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 3, ErrorKind::InvalidInput,
            "log-log fit needs at least three points");
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t k = 0; k < n; ++k) {
        require(x[k] > 0.0 && y[k] > 0.0, ErrorKind::Numerical, "log-log fit needs positive values");
        lx[k] = std::log(x[k]);
        ly[k] = std::log(y[k]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (lx[k] - mx) * (lx[k] - mx);
        sxy += (lx[k] - mx) * (ly[k] - my);
    }
    require(sxx > 0.0, ErrorKind::InvalidInput, "log-log fit needs distinct x values");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double sse = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double res = ly[k] - intercept - slope * lx[k];
        sse += res * res;
    }
    const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    return {slope, se};
}

McReport check_rate(const DgpConfig& base, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& sizes,
                    const Metric& metric, const McOptions& opts, SlopeStatistic stat) {
    check_reps(opts, kMinRateReps);
    require(sizes.size() >= 3, ErrorKind::InvalidParameter, "rate checks need at least three sizes");
    McReport report;
    report.replications = opts.reps;
    report.metric_name = metric_name(metric);
    report.slope_statistic = stat;

    std::vector<double> xs, ys;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        DgpConfig cfg = base;
        cfg.N = sizes[s].first;
        cfg.T = sizes[s].second;
        const std::uint64_t size_seed = derive_seed(opts.seed, 1000003ULL * (s + 1));
        auto values = run_replications<double>(opts.reps, opts.workers, [&](int k) {
            DgpConfig c = cfg;
            c.seed = derive_seed(size_seed, static_cast<std::uint64_t>(k));
            try {
                return evaluate_metric(metric, generate_panel(c), c.r);
            } catch (const Error& err) {
                if (err.kind() == ErrorKind::Degenerate || err.kind() == ErrorKind::Numerical)
                    return std::numeric_limits<double>::quiet_NaN();
                throw;
            }
        });
        report.per_size_results.push_back(summarize(cfg.N, cfg.T, values, opts.reps));
        xs.push_back(static_cast<double>(std::min(cfg.N, cfg.T)));
        const auto& sum = report.per_size_results.back();
        ys.push_back(stat == SlopeStatistic::Mean ? sum.mean : sum.median);
    }
    const auto [slope, se] = loglog_fit(xs, ys);
    report.loglog_slope = slope;
    report.slope_se = se;
    return report;
}

std::vector<CoverageCell> default_coverage_cells(Eigen::Index N, Eigen::Index T) {
    std::vector<CoverageCell> cells;
    for (Eigen::Index k = 0; k < 5; ++k) cells.push_back({k * N / 5, k * T / 5});
    return cells;
}

McReport check_coverage(const DgpConfig& base, double level, CiTarget target,
                        const McOptions& opts, std::vector<CoverageCell> cells) {
    check_reps(opts, kMinCoverageReps);
    require(level > 0.0 && level < 1.0, ErrorKind::InvalidParameter, "level must be in (0, 1)");
    if (cells.empty()) cells = default_coverage_cells(base.N, base.T);
    for (const auto& c : cells)
        require(c.i >= 0 && c.i < base.N && c.t >= 0 && c.t < base.T, ErrorKind::InvalidIndex,
                "coverage cell outside the panel");

    struct RepResult {
        int covered = 0;
        int total = 0;
        double width_sum = 0.0;
        bool ok = true;
    };
    const int r = base.r;
    auto results = run_replications<RepResult>(opts.reps, opts.workers, [&](int k) {
        DgpConfig c = base;
        c.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(k));
        const SimulatedPanel sim = generate_panel(c);
        const Matrix F0 = sim.F0.leftCols(r);
        const Matrix L0 = sim.Lambda0.leftCols(r);
        RepResult res;
        try {
            const FactorDecomposition fd = estimate_apc(sim.panel, r);
            const Matrix resid = residuals(sim.panel, fd);
            CovarianceRequest req;
            for (const auto& cell : cells) {
                req.times.push_back(cell.t);
                req.units.push_back(cell.i);
            }
            const CovarianceEstimates cov = estimate_covariances(fd, resid, req);
            Matrix H4, H3inv;
            if (target == CiTarget::Factor) H4 = rotation_matrix(4, F0, L0, fd);
            if (target == CiTarget::Loading) H3inv = q_empirical(F0, fd);
            for (const auto& cell : cells) {
                ConfidenceInterval ci;
                Vector truth;
                switch (target) {
                    case CiTarget::Factor:
                        ci = ci_factor(fd, cov, cell.t, level);
                        truth = H4.transpose() * F0.row(cell.t).transpose();
                        break;
                    case CiTarget::Loading:
                        ci = ci_loading(fd, cov, cell.i, level);
                        truth = H3inv * L0.row(cell.i).transpose();
                        break;
                    case CiTarget::Common:
                        ci = ci_common(fd, cov, cell.i, cell.t, level);
                        truth = Vector::Constant(1, L0.row(cell.i).dot(F0.row(cell.t)));
                        break;
                }
                for (Eigen::Index q = 0; q < truth.size(); ++q) {
                    res.covered += std::abs(truth(q) - ci.center(q)) <= ci.half_width(q) ? 1 : 0;
                    res.total += 1;
                    res.width_sum += ci.half_width(q);
                }
            }
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::Degenerate && err.kind() != ErrorKind::Numerical) throw;
            res.ok = false;
        }
        return res;
    });

    int covered = 0, total = 0, failed = 0;
    double width = 0.0;
    for (const auto& res : results) {
        if (!res.ok) {
            ++failed;
            continue;
        }
        covered += res.covered;
        total += res.total;
        width += res.width_sum;
    }
    require(static_cast<double>(failed) <= 0.01 * opts.reps && total > 0, ErrorKind::UnstableDgp,
            "coverage computation failed in more than 1% of replications");

    McReport report;
    report.replications = opts.reps;
    report.metric_name = std::string("coverage-") + to_string(target);
    report.coverage = static_cast<double>(covered) / static_cast<double>(total);
    report.mean_half_width = width / static_cast<double>(total);
    return report;
}

McReport check_selection(const DgpConfig& base, int rmax, const std::vector<Penalty>& penalties,
                         const std::vector<double>& gammas, const McOptions& opts) {
    check_reps(opts, 1);
    require(!penalties.empty() && !gammas.empty(), ErrorKind::InvalidParameter,
            "selection check needs at least one penalty and one gamma");
    require(base.r <= rmax, ErrorKind::InvalidParameter, "true r must not exceed rmax");

    auto per_rep = run_replications<std::vector<int>>(opts.reps, opts.workers, [&](int k) {
        DgpConfig c = base;
        c.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(k));
        const SimulatedPanel sim = generate_panel(c);
        const PanelData std_panel = PanelData::standardize(sim.panel.X);
        const Vector d2 = squared_singular_values(normalize_panel(std_panel.X));
        std::vector<int> picks;
        for (Penalty p : penalties)
            for (double g : gammas)
                picks.push_back(criterion_from_spectrum(d2, static_cast<double>(c.N),
                                                        static_cast<double>(c.T), rmax, p, g)
                                    .selected_r);
        return picks;
    });

    McReport report;
    report.replications = opts.reps;
    report.metric_name = "selection";
    std::size_t col = 0;
    for (Penalty p : penalties) {
        for (double g : gammas) {
            SelectionRow row;
            row.penalty = p;
            row.gamma = g;
            row.frequency.assign(static_cast<std::size_t>(rmax + 1), 0.0);
            for (const auto& picks : per_rep) row.frequency[static_cast<std::size_t>(picks[col])] += 1.0;
            for (double& f : row.frequency) f /= static_cast<double>(opts.reps);
            report.selection.push_back(std::move(row));
            ++col;
        }
    }
    report.selections = std::move(per_rep);
    return report;
}

}  // namespace afm
