#include "afm/cli.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <optional>

#include <CLI11.hpp>

#include "afm/constrained.hpp"
#include "afm/error.hpp"
#include "afm/estimators.hpp"
#include "afm/factor_count.hpp"
#include "afm/inference.hpp"
#include "afm/io.hpp"
#include "afm/simulation.hpp"

namespace afm {

namespace {

struct CommonArgs {
    std::string input;
    std::string output;
    std::string format = "csv";
    bool no_standardize = false;
    bool transpose = false;
};

struct RunConfig {
    CommonArgs io;
    int r = 0;
    std::optional<int> rmax;
    std::optional<double> gamma;
    std::string tau = "inf";
    std::string penalty = "p2";
    std::string method = "apc";
    double level = 0.95;
    std::optional<int> bandwidth;
    std::uint64_t seed = 1;
    std::string restrictions;
    std::vector<int> times;
    std::vector<int> units;
    int max_iter = 500;
    double tol = 1e-8;
    // simulate
    long long sim_N = 100;
    long long sim_T = 100;
    double beta = 0.0;
    double rho = 0.0;
    double noise = 1.0;
    double factor_ar = 0.0;
    // mc-check
    std::string config;
    std::optional<int> workers;
    std::optional<int> reps;
    std::optional<std::uint64_t> mc_seed;
};

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter:
        case ErrorKind::InvalidRank: return kExitUsage;
        case ErrorKind::InvalidInput:
        case ErrorKind::InvalidIndex:
        case ErrorKind::Format:
        case ErrorKind::Io: return kExitData;
        default: return kExitNumerical;
    }
}

PanelData load(const CommonArgs& a) {
    return ingest_csv(a.input, IngestOptions{!a.no_standardize, a.transpose});
}

void add_io_options(CLI::App* sub, CommonArgs& a, bool needs_input) {
    auto* in = sub->add_option("--input", a.input, "panel CSV (rows = time periods)");
    if (needs_input) in->required()->check(CLI::ExistingFile);
    sub->add_option("--output", a.output, "output directory")->required();
    sub->add_option("--format", a.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    if (needs_input) {
        sub->add_flag("--no-standardize", a.no_standardize, "use the panel as given");
        sub->add_flag("--transpose", a.transpose, "file rows are units");
    }
}

void panel_meta(Report& rep, const PanelData& panel) {
    rep.meta.emplace_back("T", static_cast<long long>(panel.T()));
    rep.meta.emplace_back("N", static_cast<long long>(panel.N()));
    rep.meta.emplace_back("standardized", static_cast<long long>(panel.standardized ? 1 : 0));
}

void add_common_tables(Report& rep, const PanelData& panel, const Matrix& C) {
    rep.tables.push_back(common_table("common", C, panel.unit_names));
    if (panel.standardized)
        rep.tables.push_back(common_table("common_original", panel.to_original_units(C), panel.unit_names));
}

FactorDecomposition fit(const RunConfig& c, const PanelData& panel, Report& rep) {
    FactorDecomposition fd;
    if (c.method == "apc") {
        fd = estimate_apc(panel, c.r);
    } else if (c.method == "pc") {
        fd = estimate_pc(panel, c.r);
    } else if (c.method == "rpc") {
        require(c.gamma.has_value(), ErrorKind::InvalidParameter,
                "--method rpc needs --gamma (suggested: d_{r+1} = " +
                    std::to_string(suggest_gamma(panel, c.r)) + ")");
        fd = estimate_rpc(panel, c.r, *c.gamma);
    } else {
        AlsOptions opts;
        opts.seed = c.seed;
        opts.tol = c.tol;
        opts.max_iter = c.max_iter;
        const AlsResult res = als_solve(panel, c.r, opts);
        rep.meta.emplace_back("iterations", static_cast<long long>(res.iterations));
        fd = res.fit;
    }
    return fd;
}

Report cmd_estimate(const RunConfig& c) {
    const PanelData panel = load(c.io);
    Report rep;
    rep.command = "estimate";
    panel_meta(rep, panel);
    rep.meta.emplace_back("r", static_cast<long long>(c.r));
    rep.meta.emplace_back("method", c.method);
    const FactorDecomposition fd = fit(c, panel, rep);
    rep.meta.emplace_back("gamma", fd.gamma);
    rep.meta.emplace_back("ssr", ssr(panel, fd));
    rep.tables.push_back(estimates_factors(fd));
    rep.tables.push_back(estimates_loadings(fd, panel.unit_names));
    Table sv{"singular_values", {"k", "d", "d2"}, {}};
    for (Eigen::Index k = 0; k < fd.D2.size(); ++k)
        sv.rows.push_back({static_cast<long long>(k + 1), std::sqrt(std::max(fd.D2(k), 0.0)), fd.D2(k)});
    rep.tables.push_back(std::move(sv));
    add_common_tables(rep, panel, common_component(fd).C);
    return rep;
}

Report cmd_select_r(const RunConfig& c) {
    const PanelData panel = load(c.io);
    const int rmax = c.rmax ? *c.rmax : default_rmax(panel.N(), panel.T());
    const Penalty p = parse_penalty(c.penalty);
    const double gamma = c.gamma.value_or(0.0);
    const ICResult ic = gamma > 0.0 ? select_r_regularized(panel, rmax, gamma, p) : select_r_ic(panel, rmax, p);

    Report rep;
    rep.command = "select-r";
    panel_meta(rep, panel);
    rep.meta.emplace_back("rmax", static_cast<long long>(rmax));
    rep.meta.emplace_back("penalty", std::string(to_string(p)));
    rep.meta.emplace_back("gamma", gamma);
    rep.meta.emplace_back("selected_r", static_cast<long long>(ic.selected_r));
    rep.tables.push_back(ic_table(ic));
    rep.tables.push_back(scree_table(ic.singular_values.cwiseAbs2()));
    if (gamma > 0.0) {
        const auto gap = penalty_gap(select_r_ic(panel, rmax, p), ic);
        Table t{"penalty_gap", {"k", "gap"}, {}};
        for (std::size_t k = 0; k < gap.size(); ++k) t.rows.push_back({static_cast<long long>(k), gap[k]});
        rep.tables.push_back(std::move(t));
    }
    return rep;
}

std::vector<Eigen::Index> zero_based(const std::vector<int>& idx, Eigen::Index n, const char* what) {
    std::vector<Eigen::Index> out;
    if (idx.empty()) {
        for (Eigen::Index k = 0; k < n; ++k) out.push_back(k);
        return out;
    }
    for (int k : idx) {
        require(k >= 1 && k <= n, ErrorKind::InvalidIndex,
                std::string(what) + " index " + std::to_string(k) + " outside 1.." + std::to_string(n));
        out.push_back(k - 1);
    }
    return out;
}

Report cmd_infer(const RunConfig& c) {
    const PanelData panel = load(c.io);
    const FactorDecomposition fd = estimate_apc(panel, c.r);
    const Matrix resid = residuals(panel, fd);
    CovarianceRequest req;
    req.times = zero_based(c.times, panel.T(), "time");
    req.units = zero_based(c.units, panel.N(), "unit");
    req.hac_bandwidth = c.bandwidth;
    const CovarianceEstimates cov = estimate_covariances(fd, resid, req);

    std::vector<ConfidenceInterval> cis;
    for (Eigen::Index t : req.times) cis.push_back(ci_factor(fd, cov, t, c.level));
    for (Eigen::Index i : req.units) cis.push_back(ci_loading(fd, cov, i, c.level));
    for (Eigen::Index i : req.units)
        for (Eigen::Index t : req.times) cis.push_back(ci_common(fd, cov, i, t, c.level));

    Report rep;
    rep.command = "infer";
    panel_meta(rep, panel);
    rep.meta.emplace_back("r", static_cast<long long>(c.r));
    rep.meta.emplace_back("level", c.level);
    rep.meta.emplace_back("critical_value", normal_critical_value(c.level));
    rep.meta.emplace_back("gamma_method", std::string(to_string(cov.gamma_method)));
    rep.meta.emplace_back("hac_bandwidth", static_cast<long long>(cov.hac_bandwidth));
    rep.tables.push_back(ci_table(cis));
    return rep;
}

double parse_tau(const std::string& s) {
    if (s == "inf" || s == "infinity") return kTauInfinity;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size() && v >= 0.0) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::InvalidParameter, "--tau must be a number >= 0 or 'inf', got '" + s + "'");
}

Report cmd_constrain(const RunConfig& c) {
    const PanelData panel = load(c.io);
    const double tau = parse_tau(c.tau);
    const double gamma = c.gamma.value_or(0.0);
    ConstraintSystem cs = c.restrictions.empty()
                              ? empty_constraints(panel.N(), c.r)
                              : build_restrictions(panel.N(), c.r,
                                                   read_restrictions(c.restrictions, panel.N(), c.r));
    ConstrainedOptions opts;
    opts.tol = c.tol;
    opts.max_iter = c.max_iter;
    const ConstrainedFit res = constrained_solve(panel, c.r, gamma, cs, tau, opts);

    Report rep;
    rep.command = "constrain";
    panel_meta(rep, panel);
    rep.meta.emplace_back("r", static_cast<long long>(c.r));
    rep.meta.emplace_back("gamma", gamma);
    rep.meta.emplace_back("tau", tau);
    rep.meta.emplace_back("restrictions", static_cast<long long>(cs.m()));
    rep.meta.emplace_back("iterations", static_cast<long long>(res.iterations));
    rep.meta.emplace_back("constraint_violation", res.constraint_violation);
    rep.meta.emplace_back("objective", res.objective_trace.empty() ? 0.0 : res.objective_trace.back());
    rep.tables.push_back(matrix_table("factors", res.F, "t", "F"));
    rep.tables.push_back(matrix_table("loadings", res.Lambda, "i", "L"));
    Table trace{"objective_trace", {"iteration", "objective"}, {}};
    for (std::size_t k = 0; k < res.objective_trace.size(); ++k)
        trace.rows.push_back({static_cast<long long>(k + 1), res.objective_trace[k]});
    rep.tables.push_back(std::move(trace));
    add_common_tables(rep, panel, res.common_component(panel.N(), panel.T()));
    return rep;
}

Report cmd_simulate(const RunConfig& c) {
    DgpConfig cfg;
    cfg.N = c.sim_N;
    cfg.T = c.sim_T;
    cfg.r = c.r;
    cfg.seed = c.seed;
    cfg.error_cross_corr = c.beta;
    cfg.error_serial_corr = c.rho;
    cfg.noise_scale = c.noise;
    cfg.factor_ar = c.factor_ar;
    cfg.factor_process = c.factor_ar != 0.0 ? FactorProcess::Ar1 : FactorProcess::IidNormal;
    const SimulatedPanel sim = generate_panel(cfg);

    Report rep;
    rep.command = "simulate";
    rep.meta = {{"T", static_cast<long long>(cfg.T)},
                {"N", static_cast<long long>(cfg.N)},
                {"r", static_cast<long long>(cfg.r)},
                {"seed", std::to_string(cfg.seed)},
                {"error_cross_corr", cfg.error_cross_corr},
                {"error_serial_corr", cfg.error_serial_corr},
                {"noise_scale", cfg.noise_scale},
                {"factor_ar", cfg.factor_ar}};
    // Bare panel, loadable by ingest_csv.
    Table panel{"panel", {}, {}};
    for (Eigen::Index i = 0; i < cfg.N; ++i) panel.columns.push_back("u" + std::to_string(i + 1));
    for (Eigen::Index t = 0; t < cfg.T; ++t) {
        std::vector<Cell> row;
        for (Eigen::Index i = 0; i < cfg.N; ++i) row.emplace_back(sim.panel.X(t, i));
        panel.rows.push_back(std::move(row));
    }
    rep.tables.push_back(std::move(panel));
    rep.tables.push_back(matrix_table("true_factors", sim.F0, "t", "F"));
    rep.tables.push_back(matrix_table("true_loadings", sim.Lambda0, "i", "L"));
    return rep;
}

Report cmd_mc_check(const RunConfig& c) {
    McCheckConfig cfg = read_mc_config(c.config);
    if (c.workers) cfg.opts.workers = *c.workers;
    if (c.reps) cfg.opts.reps = *c.reps;
    if (c.mc_seed) cfg.opts.seed = *c.mc_seed;
    return mc_report(cfg, run_mc_check(cfg));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Approximate factor model estimation, inference and Monte-Carlo checks", "afm"};
    app.require_subcommand(1, 1);
    RunConfig c;

    auto* est = app.add_subcommand("estimate", "APC/PC/RPC/ALS factor estimates");
    add_io_options(est, c.io, true);
    est->add_option("--r", c.r, "number of factors")->required()->check(CLI::PositiveNumber);
    est->add_option("--method", c.method, "apc, pc, rpc or als")->check(CLI::IsMember({"apc", "pc", "rpc", "als"}));
    est->add_option("--gamma", c.gamma, "RPC threshold (required for rpc)")->check(CLI::NonNegativeNumber);
    est->add_option("--seed", c.seed, "ALS starting-point seed");
    est->add_option("--max-iter", c.max_iter, "ALS iteration cap");
    est->add_option("--tol", c.tol, "ALS tolerance");

    auto* sel = app.add_subcommand("select-r", "information-criterion choice of the number of factors");
    add_io_options(sel, c.io, true);
    sel->add_option("--rmax", c.rmax, "largest k considered")->check(CLI::NonNegativeNumber);
    sel->add_option("--penalty", c.penalty, "p1, p2 or p3")->check(CLI::IsMember({"p1", "p2", "p3"}));
    sel->add_option("--gamma", c.gamma, "singular-value threshold (0 = plain IC)")->check(CLI::NonNegativeNumber);

    auto* inf = app.add_subcommand("infer", "confidence intervals for factors, loadings and common components");
    add_io_options(inf, c.io, true);
    inf->add_option("--r", c.r, "number of factors")->required()->check(CLI::PositiveNumber);
    inf->add_option("--level", c.level, "coverage level")->check(CLI::Range(0.0, 1.0));
    inf->add_option("--bandwidth", c.bandwidth, "Bartlett bandwidth (default floor(4 (T/100)^(2/9)))")
        ->check(CLI::NonNegativeNumber);
    inf->add_option("--times", c.times, "1-based periods (default all)")->delimiter(',');
    inf->add_option("--units", c.units, "1-based units (default all)")->delimiter(',');

    auto* con = app.add_subcommand("constrain", "regularized estimation under linear loading restrictions");
    add_io_options(con, c.io, true);
    con->add_option("--r", c.r, "number of factors")->required()->check(CLI::PositiveNumber);
    con->add_option("--gamma", c.gamma, "ridge weight")->check(CLI::NonNegativeNumber);
    con->add_option("--tau", c.tau, "restriction penalty, number or 'inf'");
    con->add_option("--restrictions", c.restrictions, "restriction file")->check(CLI::ExistingFile);
    con->add_option("--max-iter", c.max_iter, "iteration cap");
    con->add_option("--tol", c.tol, "relative objective tolerance");

    auto* sim = app.add_subcommand("simulate", "draw a panel from the factor DGP");
    add_io_options(sim, c.io, false);
    sim->add_option("--N", c.sim_N, "units")->check(CLI::Range(2LL, 100000LL));
    sim->add_option("--T", c.sim_T, "periods")->check(CLI::Range(2LL, 100000LL));
    sim->add_option("--r", c.r, "number of factors")->required()->check(CLI::PositiveNumber);
    sim->add_option("--seed", c.seed, "random seed");
    sim->add_option("--beta", c.beta, "cross-sectional error correlation")->check(CLI::Range(0.0, 0.999999));
    sim->add_option("--rho", c.rho, "serial error correlation")->check(CLI::Range(0.0, 0.999999));
    sim->add_option("--noise", c.noise, "noise scale")->check(CLI::NonNegativeNumber);
    sim->add_option("--factor-ar", c.factor_ar, "factor AR(1) coefficient")->check(CLI::Range(-0.999999, 0.999999));

    auto* mc = app.add_subcommand("mc-check", "Monte-Carlo rate, coverage or selection check");
    add_io_options(mc, c.io, false);
    mc->add_option("--config", c.config, "key = value config file")->required()->check(CLI::ExistingFile);
    mc->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    mc->add_option("--reps", c.reps, "replications")->check(CLI::PositiveNumber);
    mc->add_option("--seed", c.mc_seed, "base seed");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        Report rep;
        if (*est) rep = cmd_estimate(c);
        else if (*sel) rep = cmd_select_r(c);
        else if (*inf) rep = cmd_infer(c);
        else if (*con) rep = cmd_constrain(c);
        else if (*sim) rep = cmd_simulate(c);
        else rep = cmd_mc_check(c);
        write_report(rep, c.io.output, parse_format(c.io.format));
    } catch (const Error& e) {
        err << "afm: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "afm: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace afm
