#include "afm/factor_count.hpp"

#include <cmath>
#include <limits>

#include "afm/error.hpp"

namespace afm {

const char* to_string(Penalty p) noexcept {
    switch (p) {
        case Penalty::P1: return "p1";
        case Penalty::P2: return "p2";
        case Penalty::P3: return "p3";
    }
    return "?";
}

Penalty parse_penalty(const std::string& name) {
    if (name == "p1") return Penalty::P1;
    if (name == "p2") return Penalty::P2;
    if (name == "p3") return Penalty::P3;
    throw Error(ErrorKind::InvalidParameter, "unknown penalty '" + name + "' (expected p1|p2|p3)");
}

Vector scree(const PanelData& panel, int kmax) {
    validate_panel(panel.X);
    const auto m = std::min(panel.T(), panel.N());
    require(kmax >= 1 && kmax <= m, ErrorKind::InvalidRank, "kmax must lie in [1, min(N,T)]");
    return squared_singular_values(normalize_panel(panel.X)).head(kmax);
}

double penalty(Penalty name, double N, double T) {
    require(N >= 2 && T >= 2, ErrorKind::InvalidParameter, "penalty needs N, T >= 2");
    const double delta2 = std::min(N, T);
    const double ratio = (N + T) / (N * T);
    switch (name) {
        case Penalty::P1: return ratio * std::log(N * T / (N + T));
        case Penalty::P2: return ratio * std::log(delta2);
        case Penalty::P3: return std::log(delta2) / delta2;
    }
    return 0.0;
}

int default_rmax(Eigen::Index N, Eigen::Index T) {
    return static_cast<int>(std::min<Eigen::Index>(8, std::min(N, T) / 10 + 1));
}

ICResult criterion_from_spectrum(const Vector& d2_full, double N, double T, int rmax,
                                 Penalty name, double gamma) {
    require(rmax >= 0 && rmax < d2_full.size(), ErrorKind::InvalidRank,
            "rmax must lie in [0, min(N,T) - 1]");
    require(gamma >= 0.0 && std::isfinite(gamma), ErrorKind::InvalidParameter,
            "gamma must be finite and >= 0");

    ICResult out;
    out.penalty_name = name;
    out.gamma = gamma;
    out.penalty_value = penalty(name, N, T);
    out.total_ss = d2_full.sum();
    out.singular_values = d2_full.head(rmax).cwiseMax(0.0).cwiseSqrt();
    require(out.total_ss > kSsrFloor, ErrorKind::Degenerate,
            "degenerate panel: total sum of squares below the floor");

    double explained = 0.0;
    bool floored = false;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= rmax; ++k) {
        if (k > 0) {
            const double d = std::sqrt(std::max(d2_full(k - 1), 0.0));
            const double kept = std::max(d - gamma, 0.0);
            explained += kept * kept;
        }
        const double s = out.total_ss - explained;
        double crit = std::numeric_limits<double>::infinity();
        if (!floored) {
            crit = std::log(std::max(s, kSsrFloor)) + k * out.penalty_value;
            floored = s <= kSsrFloor;
        }
        out.k_grid.push_back(k);
        out.ssr_values.push_back(s);
        out.criterion_values.push_back(crit);
        if (crit < best) {
            best = crit;
            out.selected_r = k;
        }
    }
    return out;
}

namespace {

ICResult select(const PanelData& panel, int rmax, double gamma, Penalty name) {
    validate_panel(panel.X);
    const Vector d2 = squared_singular_values(normalize_panel(panel.X));
    return criterion_from_spectrum(d2, static_cast<double>(panel.N()),
                                   static_cast<double>(panel.T()), rmax, name, gamma);
}

}  // namespace

ICResult select_r_ic(const PanelData& panel, int rmax, Penalty name) {
    return select(panel, rmax, 0.0, name);
}

ICResult select_r_regularized(const PanelData& panel, int rmax, double gamma, Penalty name) {
    return select(panel, rmax, gamma, name);
}

std::vector<double> penalty_gap(const ICResult& ic_plain, const ICResult& ic_reg) {
    require(ic_plain.k_grid == ic_reg.k_grid, ErrorKind::InvalidInput,
            "penalty_gap needs criteria over the same k grid");
    require(ic_plain.singular_values.size() == ic_reg.singular_values.size() &&
                (ic_plain.singular_values.size() == 0 ||
                 (ic_plain.singular_values - ic_reg.singular_values).cwiseAbs().maxCoeff() <= 1e-12),
            ErrorKind::InvalidInput, "penalty_gap needs criteria from the same panel");
    const double gamma = ic_reg.gamma;
    std::vector<double> gap;
    double removed = 0.0;
    for (std::size_t idx = 0; idx < ic_reg.k_grid.size(); ++idx) {
        const int k = ic_reg.k_grid[idx];
        if (k > 0) {
            const double d = ic_reg.singular_values(k - 1);
            const double kept = std::max(d - gamma, 0.0);
            removed += d * d - kept * kept;
        }
        gap.push_back(removed / std::max(ic_reg.ssr_values[idx], kSsrFloor));
    }
    return gap;
}

}  // namespace afm
