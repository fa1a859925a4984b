#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "afm/factor_count.hpp"
#include "afm/inference.hpp"
#include "afm/panel.hpp"

namespace afm {

enum class FactorProcess { IidNormal, Ar1 };
enum class LoadingDist { Normal, LowerTriangularNormal };

/// Data-generating process X = F0 Lambda0' + e.
///
/// Factors are unit-variance (iid or stationary AR(1)). Loadings are
/// N(mu, sigma) times a per-column scale; redrawn until the smallest eigenvalue
/// of Lambda0'Lambda0/N is at least 0.1. Errors are a unit-variance AR(1) field
/// per unit, mixed across units with weights beta^|i-j| over a band of 10, then
/// multiplied by noise_scale.
struct DgpConfig {
    Eigen::Index N = 100;
    Eigen::Index T = 100;
    int r = 2;
    FactorProcess factor_process = FactorProcess::IidNormal;
    double factor_ar = 0.0;
    LoadingDist loading_dist = LoadingDist::Normal;
    double loading_mean = 0.0;
    double loading_sd = 1.0;
    std::vector<double> loading_scales;  // per strong factor; empty = all 1
    int weak_factors = 0;                // extra factors with loadings scaled by N^-weak_exponent
    double weak_exponent = 0.25;
    double error_cross_corr = 0.0;   // beta
    double error_serial_corr = 0.0;  // rho_e
    double noise_scale = 1.0;
    std::uint64_t seed = 1;
};

inline constexpr int kErrorBand = 10;

struct SimulatedPanel {
    PanelData panel;  // raw, not standardized
    Matrix F0;        // T x (r + weak_factors)
    Matrix Lambda0;   // N x (r + weak_factors)
    Matrix e;         // T x N
};

SimulatedPanel generate_panel(const DgpConfig& cfg);

/// Population (Sigma_F, Sigma_Lambda) for the strong factors of cfg.
std::pair<Matrix, Matrix> population_moments(const DgpConfig& cfg);

/// Seed for replication `index` derived from `base` with splitmix64.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

inline constexpr int kMinRateReps = 100;
inline constexpr int kMinCoverageReps = 500;

struct McOptions {
    int reps = 200;
    std::uint64_t seed = 12345;
    int workers = 1;
};

enum class MetricKind {
    FactorSpaceError,   // (1/T)||F~ - F0 H0||^2
    LoadingSpaceError,  // (1/N)||L~ - L0 H0'^-1||^2
    CommonError,        // (1/NT)||C~ - C0||^2
    EeNorm,             // ||ee'/NT||_F^2
    FeeF,               // ||F0'ee'F0 / (N T^2)||
    LeeL,               // ||L0'e'eL0 / (N^2 T)||
    HEquivalence,       // ||H_l - H_0||_F
    Lemma3i,            // ||(1/T) F0'(F~ - F0 H_l)||
    Lemma3ii,           // ||(1/N) L0'(L~ - L0 H_l'^-1)||
    Lemma3iii,          // ||(1/T) (F~ - F0 H_l)' e_i||, i = 0
    Lemma3iv,           // ||(1/N) e_t'(L~ - L0 H_l'^-1)||, t = 0
};

struct Metric {
    MetricKind kind = MetricKind::FactorSpaceError;
    int ell = 0;  // rotation index for HEquivalence / Lemma3*
};

std::string metric_name(const Metric& m);
Metric parse_metric(const std::string& name);

/// Value of a metric on one simulated panel, using an APC fit with cfg.r factors.
double evaluate_metric(const Metric& metric, const SimulatedPanel& sim, int r);

enum class SlopeStatistic { Mean, Median };

struct SizeSummary {
    Eigen::Index N = 0;
    Eigen::Index T = 0;
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0;
    int nonfinite = 0;
};

struct SelectionRow {
    Penalty penalty = Penalty::P1;
    double gamma = 0.0;
    std::vector<double> frequency;  // P(selected = k), k = 0..rmax
};

struct McReport {
    int replications = 0;
    std::string metric_name;
    std::vector<SizeSummary> per_size_results;
    std::optional<double> loglog_slope;
    std::optional<double> slope_se;
    SlopeStatistic slope_statistic = SlopeStatistic::Mean;
    std::optional<double> coverage;
    std::optional<double> mean_half_width;
    std::vector<SelectionRow> selection;
    /// selections[rep][row] for selection checks, indexed like `selection`.
    std::vector<std::vector<int>> selections;
};

/// OLS slope of log(y) on log(x) with its standard error.
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Rate check over a ladder of (N, T) sizes (at least three rungs). The slope is
/// that of log(statistic) against log(delta^2), delta^2 = min(N, T). Needs
/// at least kMinRateReps replications.
McReport check_rate(const DgpConfig& base, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& sizes,
                    const Metric& metric, const McOptions& opts,
                    SlopeStatistic stat = SlopeStatistic::Mean);

struct CoverageCell {
    Eigen::Index i;
    Eigen::Index t;
};

/// Five cells spread over the panel: (k N/5, k T/5), k = 0..4.
std::vector<CoverageCell> default_coverage_cells(Eigen::Index N, Eigen::Index T);

/// Fraction of (replication, cell, coordinate) triples whose interval covers the
/// truth: H4'F0_t for factors, H3^{-1} Lambda0_i for loadings, C0_it for the
/// common component. Needs at least kMinCoverageReps replications.
McReport check_coverage(const DgpConfig& base, double level, CiTarget target,
                        const McOptions& opts, std::vector<CoverageCell> cells = {});

/// Selection frequencies of select_r_regularized (gamma = 0 is plain IC) over
/// every (penalty, gamma) pair on standardized simulated panels.
McReport check_selection(const DgpConfig& base, int rmax, const std::vector<Penalty>& penalties,
                         const std::vector<double>& gammas, const McOptions& opts);

}  // namespace afm
