#include "afm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace afm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == sep && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    return ec == std::errc() && ptr == last;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
    return in;
}

struct RawCsv {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

RawCsv read_raw(std::istream& in, const std::string& source, bool header_required) {
    RawCsv out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (first) {
            first = false;
            width = cells.size();
            double tmp;
            bool numeric = true;
            for (const auto& c : cells) numeric = numeric && parse_double(c, tmp);
            if (!numeric || header_required) {
                out.header = std::move(cells);
                continue;
            }
        }
        if (cells.size() != width)
            throw Error(ErrorKind::Format, source + ": line " + std::to_string(lineno) + " has " +
                                               std::to_string(cells.size()) + " fields, expected " +
                                               std::to_string(width));
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c)
            if (!parse_double(cells[c], row[c]))
                throw Error(ErrorKind::Format, source + ": non-numeric cell '" + cells[c] + "' at row " +
                                                   std::to_string(lineno) + ", column " +
                                                   std::to_string(c + 1));
        out.rows.push_back(std::move(row));
    }
    return out;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t width) {
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t c = 0; c < width; ++c)
            M(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c];
    return M;
}

}  // namespace

PanelData parse_csv(std::istream& in, const IngestOptions& opts, const std::string& source) {
    RawCsv raw = read_raw(in, source, false);
    const std::size_t width = raw.header.empty() ? (raw.rows.empty() ? 0 : raw.rows[0].size())
                                                 : raw.header.size();
    Matrix X = to_matrix(raw.rows, width);
    if (opts.transpose) X.transposeInPlace();
    require(X.rows() >= 2 && X.cols() >= 2, ErrorKind::InvalidInput,
            source + ": panel must have T >= 2 and N >= 2, got T=" + std::to_string(X.rows()) +
                ", N=" + std::to_string(X.cols()));
    require(X.allFinite(), ErrorKind::InvalidInput, source + ": panel contains non-finite values");

    PanelData panel = opts.standardize ? PanelData::standardize(X) : PanelData::raw(X);
    if (!raw.header.empty() && !opts.transpose) panel.unit_names = raw.header;
    return panel;
}

PanelData ingest_csv(const std::string& path, const IngestOptions& opts) {
    auto in = open_input(path);
    return parse_csv(in, opts, path);
}

NumericTable read_numeric_table(const std::string& path) {
    auto in = open_input(path);
    RawCsv raw = read_raw(in, path, true);
    NumericTable t;
    t.values = to_matrix(raw.rows, raw.header.size());
    t.columns = std::move(raw.header);
    return t;
}

OutputFormat parse_format(const std::string& s) {
    if (s == "csv") return OutputFormat::Csv;
    if (s == "json") return OutputFormat::Json;
    throw Error(ErrorKind::InvalidParameter, "unknown format '" + s + "' (expected csv|json)");
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    if (std::string(buf) == "-0") return "0";
    return buf;
}

const Table& Report::table(const std::string& name) const {
    for (const auto& t : tables)
        if (t.name == name) return t;
    throw Error(ErrorKind::InvalidParameter, "report has no table '" + name + "'");
}

namespace {

using ojson = nlohmann::ordered_json;

ojson cell_json(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) {
        if (!std::isfinite(*d)) return format_number(*d);
        // Round through the 12-digit text so the dump carries at most 12 digits.
        return std::stod(format_number(*d));
    }
    if (const auto* i = std::get_if<long long>(&c)) return *i;
    return std::get<std::string>(c);
}

std::string cell_text(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
    if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
    const auto& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

}  // namespace

std::string report_json(const Report& report) {
    ojson j;
    j["command"] = report.command;
    j["schema_version"] = 1;
    ojson meta = ojson::object();
    for (const auto& [k, v] : report.meta) meta[k] = cell_json(v);
    j["meta"] = meta;
    ojson tables = ojson::object();
    for (const auto& t : report.tables) {
        ojson rows = ojson::array();
        for (const auto& row : t.rows) {
            ojson jr = ojson::array();
            for (const auto& c : row) jr.push_back(cell_json(c));
            rows.push_back(std::move(jr));
        }
        tables[t.name] = {{"columns", t.columns}, {"rows", std::move(rows)}};
    }
    j["tables"] = tables;
    return j.dump(2) + "\n";
}

std::string table_csv(const Table& table) {
    std::ostringstream os;
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        os << (c ? "," : "") << cell_text(table.columns[c]);
    os << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << cell_text(row[c]);
        os << "\n";
    }
    return os.str();
}

void write_report(const Report& report, const std::string& dir, OutputFormat format) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw Error(ErrorKind::Io, "cannot create output directory '" + dir + "'");
    if (format == OutputFormat::Json) {
        write_file(fs::path(dir) / (report.command + ".json"), report_json(report));
        return;
    }
    Table meta{"meta", {"key", "value"}, {}};
    for (const auto& [k, v] : report.meta) meta.rows.push_back({k, v});
    write_file(fs::path(dir) / "meta.csv", table_csv(meta));
    for (const auto& t : report.tables) write_file(fs::path(dir) / (t.name + ".csv"), table_csv(t));
}

Table matrix_table(const std::string& name, const Matrix& M, const std::string& index_column,
                   const std::string& column_prefix) {
    Table t{name, {index_column}, {}};
    for (Eigen::Index j = 0; j < M.cols(); ++j) t.columns.push_back(column_prefix + std::to_string(j + 1));
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        std::vector<Cell> row{static_cast<long long>(i + 1)};
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.emplace_back(M(i, j));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table estimates_factors(const FactorDecomposition& fd) { return matrix_table("factors", fd.F, "t", "F"); }

Table estimates_loadings(const FactorDecomposition& fd, const std::vector<std::string>& unit_names) {
    Table t = matrix_table("loadings", fd.Lambda, "i", "L");
    if (!unit_names.empty()) {
        t.columns.insert(t.columns.begin() + 1, "unit");
        for (std::size_t i = 0; i < t.rows.size(); ++i)
            t.rows[i].insert(t.rows[i].begin() + 1, unit_names[i]);
    }
    return t;
}

Table common_table(const std::string& name, const Matrix& C, const std::vector<std::string>& unit_names) {
    Table t = matrix_table(name, C, "t", "C");
    if (unit_names.size() == static_cast<std::size_t>(C.cols()))
        for (std::size_t j = 0; j < unit_names.size(); ++j) t.columns[j + 1] = unit_names[j];
    return t;
}

Table scree_table(const Vector& d2) {
    Table t{"scree", {"k", "d2", "share", "cumulative_share"}, {}};
    const double total = d2.sum();
    double cum = 0.0;
    for (Eigen::Index k = 0; k < d2.size(); ++k) {
        cum += d2(k);
        t.rows.push_back({static_cast<long long>(k + 1), d2(k), total > 0 ? d2(k) / total : 0.0,
                          total > 0 ? cum / total : 0.0});
    }
    return t;
}

Table ic_table(const ICResult& ic) {
    Table t{"ic", {"k", "ssr_k", "g", "criterion", "selected"}, {}};
    for (std::size_t idx = 0; idx < ic.k_grid.size(); ++idx)
        t.rows.push_back({static_cast<long long>(ic.k_grid[idx]), ic.ssr_values[idx], ic.penalty_value,
                          ic.criterion_values[idx],
                          static_cast<long long>(ic.k_grid[idx] == ic.selected_r ? 1 : 0)});
    return t;
}

Table ci_table(const std::vector<ConfidenceInterval>& cis) {
    Table t{"ci", {"target", "index", "center", "lower", "upper", "level", "component"}, {}};
    for (const auto& ci : cis) {
        std::string index;
        switch (ci.target) {
            case CiTarget::Factor: index = std::to_string(ci.t + 1); break;
            case CiTarget::Loading: index = std::to_string(ci.i + 1); break;
            case CiTarget::Common:
                index = std::to_string(ci.i + 1) + ":" + std::to_string(ci.t + 1);
                break;
        }
        const Vector lo = ci.lower();
        const Vector hi = ci.upper();
        for (Eigen::Index q = 0; q < ci.center.size(); ++q)
            t.rows.push_back({std::string(to_string(ci.target)), index, ci.center(q), lo(q), hi(q), ci.level,
                              static_cast<long long>(q + 1)});
    }
    return t;
}

Table mc_size_table(const McReport& rep) {
    Table t{"sizes", {"N", "T", "mean", "median", "sd", "nonfinite"}, {}};
    for (const auto& s : rep.per_size_results)
        t.rows.push_back({static_cast<long long>(s.N), static_cast<long long>(s.T), s.mean, s.median, s.sd,
                          static_cast<long long>(s.nonfinite)});
    return t;
}

Table mc_selection_table(const McReport& rep) {
    Table t{"selection", {"penalty", "gamma", "k", "frequency"}, {}};
    for (const auto& row : rep.selection)
        for (std::size_t k = 0; k < row.frequency.size(); ++k)
            t.rows.push_back({std::string(to_string(row.penalty)), row.gamma, static_cast<long long>(k),
                              row.frequency[k]});
    return t;
}

namespace {

std::vector<std::string> tokens(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

long long parse_int(const std::string& s, const std::string& where) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(ErrorKind::Format, where + ": expected an integer, got '" + s + "'");
    return v;
}

double parse_real(const std::string& s, const std::string& where) {
    double v;
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (!parse_double(s, v)) throw Error(ErrorKind::Format, where + ": expected a number, got '" + s + "'");
    return v;
}

}  // namespace

std::vector<Restriction> parse_restrictions(std::istream& in, Eigen::Index N, int r,
                                            const std::string& source) {
    std::vector<Restriction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto tok = tokens(line);
        if (tok.empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        auto unit = [&](const std::string& s) {
            const long long v = parse_int(s, where);
            require(v >= 1 && v <= N, ErrorKind::InvalidIndex,
                    where + ": unit index " + s + " outside 1.." + std::to_string(N));
            return static_cast<Eigen::Index>(v - 1);
        };
        auto factor = [&](const std::string& s) {
            const long long v = parse_int(s, where);
            require(v >= 1 && v <= r, ErrorKind::InvalidIndex,
                    where + ": factor index " + s + " outside 1.." + std::to_string(r));
            return static_cast<int>(v - 1);
        };
        auto arity = [&](std::size_t n) {
            if (tok.size() != n)
                throw Error(ErrorKind::Format, where + ": '" + tok[0] + "' takes " + std::to_string(n - 1) +
                                                   " arguments");
        };
        const std::string& kind = tok[0];
        if (kind == "fix") {
            arity(4);
            out.push_back(FixEntry{unit(tok[1]), factor(tok[2]), parse_real(tok[3], where)});
        } else if (kind == "eq") {
            arity(5);
            out.push_back(EqualEntries{unit(tok[1]), factor(tok[2]), unit(tok[3]), factor(tok[4])});
        } else if (kind == "zeroblock") {
            arity(5);
            ZeroBlock z{unit(tok[1]), unit(tok[2]), factor(tok[3]), factor(tok[4])};
            require(z.row_first <= z.row_last && z.col_first <= z.col_last, ErrorKind::Format,
                    where + ": zeroblock ranges must be increasing");
            out.push_back(z);
        } else if (kind == "homog") {
            if (tok.size() < 4) throw Error(ErrorKind::Format, where + ": 'homog' needs a factor and >= 2 units");
            HomogeneousGroup g{factor(tok[1]), {}};
            for (std::size_t k = 2; k < tok.size(); ++k) g.units.push_back(unit(tok[k]));
            out.push_back(std::move(g));
        } else if (kind == "lowertri") {
            arity(1);
            for (auto& res : lower_triangular(r)) out.push_back(std::move(res));
        } else {
            throw Error(ErrorKind::Format, where + ": unknown restriction '" + kind + "'");
        }
    }
    return out;
}

std::vector<Restriction> read_restrictions(const std::string& path, Eigen::Index N, int r) {
    auto in = open_input(path);
    return parse_restrictions(in, N, r, path);
}

namespace {

std::vector<std::string> list_items(const std::string& v) {
    std::vector<std::string> out;
    for (auto& s : split(v, ','))
        if (!s.empty()) out.push_back(s);
    return out;
}

}  // namespace

McCheckConfig parse_mc_config(std::istream& in, const std::string& source) {
    McCheckConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::Format, where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        auto integer = [&] { return parse_int(val, where); };
        auto real = [&] { return parse_real(val, where); };

        if (key == "mode") {
            if (val == "rate") cfg.mode = McMode::Rate;
            else if (val == "coverage") cfg.mode = McMode::Coverage;
            else if (val == "selection") cfg.mode = McMode::Selection;
            else throw Error(ErrorKind::Format, where + ": mode must be rate|coverage|selection");
        } else if (key == "N") cfg.dgp.N = integer();
        else if (key == "T") cfg.dgp.T = integer();
        else if (key == "r") cfg.dgp.r = static_cast<int>(integer());
        else if (key == "factor_process") {
            if (val == "iid-normal") cfg.dgp.factor_process = FactorProcess::IidNormal;
            else if (val == "ar1") cfg.dgp.factor_process = FactorProcess::Ar1;
            else throw Error(ErrorKind::Format, where + ": factor_process must be iid-normal|ar1");
        } else if (key == "factor_ar") cfg.dgp.factor_ar = real();
        else if (key == "loading_dist") {
            if (val == "normal") cfg.dgp.loading_dist = LoadingDist::Normal;
            else if (val == "lower-triangular-normal") cfg.dgp.loading_dist = LoadingDist::LowerTriangularNormal;
            else throw Error(ErrorKind::Format, where + ": loading_dist must be normal|lower-triangular-normal");
        } else if (key == "loading_mean") cfg.dgp.loading_mean = real();
        else if (key == "loading_sd") cfg.dgp.loading_sd = real();
        else if (key == "loading_scales") {
            cfg.dgp.loading_scales.clear();
            for (const auto& s : list_items(val)) cfg.dgp.loading_scales.push_back(parse_real(s, where));
        } else if (key == "weak_factors") cfg.dgp.weak_factors = static_cast<int>(integer());
        else if (key == "weak_exponent") cfg.dgp.weak_exponent = real();
        else if (key == "error_cross_corr") cfg.dgp.error_cross_corr = real();
        else if (key == "error_serial_corr") cfg.dgp.error_serial_corr = real();
        else if (key == "noise_scale") cfg.dgp.noise_scale = real();
        else if (key == "reps") cfg.opts.reps = static_cast<int>(integer());
        else if (key == "seed") cfg.opts.seed = static_cast<std::uint64_t>(integer());
        else if (key == "workers") cfg.opts.workers = static_cast<int>(integer());
        else if (key == "sizes") {
            // "50x50, 100x100, ..."
            cfg.sizes.clear();
            for (const auto& s : list_items(val)) {
                const auto x = s.find('x');
                if (x == std::string::npos) throw Error(ErrorKind::Format, where + ": size must look like NxT");
                cfg.sizes.emplace_back(parse_int(trim(s.substr(0, x)), where), parse_int(trim(s.substr(x + 1)), where));
            }
        } else if (key == "metric") cfg.metric = parse_metric(val);
        else if (key == "statistic") {
            if (val == "mean") cfg.statistic = SlopeStatistic::Mean;
            else if (val == "median") cfg.statistic = SlopeStatistic::Median;
            else throw Error(ErrorKind::Format, where + ": statistic must be mean|median");
        } else if (key == "level") cfg.level = real();
        else if (key == "target") {
            if (val == "factor") cfg.target = CiTarget::Factor;
            else if (val == "loading") cfg.target = CiTarget::Loading;
            else if (val == "common") cfg.target = CiTarget::Common;
            else throw Error(ErrorKind::Format, where + ": target must be factor|loading|common");
        } else if (key == "rmax") cfg.rmax = static_cast<int>(integer());
        else if (key == "penalties") {
            cfg.penalties.clear();
            for (const auto& s : list_items(val)) cfg.penalties.push_back(parse_penalty(s));
        } else if (key == "gammas") {
            cfg.gammas.clear();
            for (const auto& s : list_items(val)) cfg.gammas.push_back(parse_real(s, where));
        } else {
            throw Error(ErrorKind::Format, where + ": unknown key '" + key + "'");
        }
    }
    return cfg;
}

McCheckConfig read_mc_config(const std::string& path) {
    auto in = open_input(path);
    return parse_mc_config(in, path);
}

McReport run_mc_check(const McCheckConfig& cfg) {
    switch (cfg.mode) {
        case McMode::Rate: return check_rate(cfg.dgp, cfg.sizes, cfg.metric, cfg.opts, cfg.statistic);
        case McMode::Coverage: return check_coverage(cfg.dgp, cfg.level, cfg.target, cfg.opts);
        case McMode::Selection:
            return check_selection(cfg.dgp, cfg.rmax, cfg.penalties, cfg.gammas, cfg.opts);
    }
    throw Error(ErrorKind::InvalidParameter, "unknown Monte-Carlo mode");
}

Report mc_report(const McCheckConfig& cfg, const McReport& rep) {
    Report out;
    out.command = "mc-check";
    const char* mode = cfg.mode == McMode::Rate ? "rate" : cfg.mode == McMode::Coverage ? "coverage" : "selection";
    out.meta = {{"mode", std::string(mode)},
                {"metric", rep.metric_name},
                {"replications", static_cast<long long>(rep.replications)},
                {"seed", std::to_string(cfg.opts.seed)}};
    if (rep.loglog_slope) {
        out.meta.emplace_back("statistic",
                              std::string(rep.slope_statistic == SlopeStatistic::Mean ? "mean" : "median"));
        out.meta.emplace_back("loglog_slope", *rep.loglog_slope);
        out.meta.emplace_back("slope_se", rep.slope_se.value_or(0.0));
    }
    if (rep.coverage) {
        out.meta.emplace_back("level", cfg.level);
        out.meta.emplace_back("coverage", *rep.coverage);
        out.meta.emplace_back("mean_half_width", rep.mean_half_width.value_or(0.0));
    }
    if (!rep.per_size_results.empty()) out.tables.push_back(mc_size_table(rep));
    if (!rep.selection.empty()) out.tables.push_back(mc_selection_table(rep));
    return out;
}

}  // namespace afm
