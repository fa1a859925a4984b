#pragma once

#include <string>
#include <vector>

#include "afm/panel.hpp"

namespace afm {

enum class Penalty { P1, P2, P3 };

const char* to_string(Penalty p) noexcept;
Penalty parse_penalty(const std::string& name);

/// Criterion table over k = 0..rmax. `selected_r` is the first argmin.
struct ICResult {
    std::vector<int> k_grid;
    std::vector<double> criterion_values;
    std::vector<double> ssr_values;  // regularized when gamma > 0
    Penalty penalty_name = Penalty::P1;
    double penalty_value = 0.0;  // g(N, T)
    double gamma = 0.0;
    int selected_r = 0;
    Vector singular_values;  // d_1..d_rmax of X/sqrt(NT)
    double total_ss = 1.0;   // ||X/sqrt(NT)||_F^2
};

/// Floor applied to ssr before taking logs.
inline constexpr double kSsrFloor = 1e-12;

/// Squared singular values of X/sqrt(NT), descending, first kmax of them.
Vector scree(const PanelData& panel, int kmax);

/// g(N,T) with delta^2 = min(N, T):
///   p1 = ((N+T)/NT) log(NT/(N+T)),  p2 = ((N+T)/NT) log(delta^2),
///   p3 = log(delta^2) / delta^2.
double penalty(Penalty name, double N, double T);

/// min(8, floor(min(N,T)/10) + 1).
int default_rmax(Eigen::Index N, Eigen::Index T);

/// IC(k) = log(max(ssr_k, floor)) + k g(N,T), ssr_k = S - sum_{j<=k} (d_j - gamma)_+^2
/// where S = sum of the full spectrum (1 for standardized data). Once ssr_k hits
/// the floor every larger k scores +inf.
ICResult criterion_from_spectrum(const Vector& d2_full, double N, double T, int rmax,
                                 Penalty name, double gamma);

ICResult select_r_ic(const PanelData& panel, int rmax, Penalty name);

ICResult select_r_regularized(const PanelData& panel, int rmax, double gamma, Penalty name);

/// Additive first-order gap between the regularized and plain criteria:
/// sum_{j<=k} [d_j^2 - (d_j - gamma)_+^2] / ssr_k(gamma). Equals
/// gamma sum (2 d_j - gamma) / ssr_k(gamma) whenever every d_j >= gamma.
std::vector<double> penalty_gap(const ICResult& ic_plain, const ICResult& ic_reg);

}  // namespace afm
