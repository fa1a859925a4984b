#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "afm/constrained.hpp"
#include "afm/estimators.hpp"
#include "afm/factor_count.hpp"
#include "afm/inference.hpp"
#include "afm/panel.hpp"
#include "afm/simulation.hpp"

namespace afm {

struct IngestOptions {
    bool standardize = true;
    bool transpose = false;  // file rows are units instead of time periods
};

/// Rectangular numeric CSV, rows = time periods. The first row is taken as a
/// header of unit names when any of its cells is non-numeric.
PanelData ingest_csv(const std::string& path, const IngestOptions& opts = {});
PanelData parse_csv(std::istream& in, const IngestOptions& opts, const std::string& source = "<stream>");

/// Numeric table with a mandatory header row (as written by write_report).
struct NumericTable {
    std::vector<std::string> columns;
    Matrix values;
};
NumericTable read_numeric_table(const std::string& path);

enum class OutputFormat { Csv, Json };
OutputFormat parse_format(const std::string& s);

/// 12 significant digits; "inf", "-inf", "nan" for non-finite values.
std::string format_number(double v);

using Cell = std::variant<double, long long, std::string>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

/// A command's output: scalar metadata plus named tables.
struct Report {
    std::string command;
    std::vector<std::pair<std::string, Cell>> meta;
    std::vector<Table> tables;

    const Table& table(const std::string& name) const;
};

/// JSON: a single <dir>/<command>.json. CSV: one <dir>/<table>.csv per table
/// plus <dir>/meta.csv. Creates dir when missing; throws Io otherwise.
void write_report(const Report& report, const std::string& dir, OutputFormat format);
std::string report_json(const Report& report);
std::string table_csv(const Table& table);

// Table builders. Indices written to files are 1-based.
Table matrix_table(const std::string& name, const Matrix& M, const std::string& index_column,
                   const std::string& column_prefix);
Table estimates_factors(const FactorDecomposition& fd);
Table estimates_loadings(const FactorDecomposition& fd, const std::vector<std::string>& unit_names);
Table common_table(const std::string& name, const Matrix& C, const std::vector<std::string>& unit_names);
Table scree_table(const Vector& d2);
Table ic_table(const ICResult& ic);
Table ci_table(const std::vector<ConfidenceInterval>& cis);
Table mc_size_table(const McReport& rep);
Table mc_selection_table(const McReport& rep);

/// One primitive per line, 1-based indices, '#' starts a comment:
///   fix i j v | eq i1 j1 i2 j2 | zeroblock r1 r2 c1 c2 | homog j i1 i2 ...
///   lowertri
std::vector<Restriction> parse_restrictions(std::istream& in, Eigen::Index N, int r,
                                            const std::string& source = "<stream>");
std::vector<Restriction> read_restrictions(const std::string& path, Eigen::Index N, int r);

enum class McMode { Rate, Coverage, Selection };

/// Monte-Carlo check read from key=value lines.
struct McCheckConfig {
    McMode mode = McMode::Rate;
    DgpConfig dgp;
    McOptions opts;
    // rate
    std::vector<std::pair<Eigen::Index, Eigen::Index>> sizes = {{50, 50}, {100, 100}, {200, 200}};
    Metric metric;
    SlopeStatistic statistic = SlopeStatistic::Mean;
    // coverage
    double level = 0.95;
    CiTarget target = CiTarget::Common;
    // selection
    int rmax = 8;
    std::vector<Penalty> penalties = {Penalty::P1, Penalty::P2, Penalty::P3};
    std::vector<double> gammas = {0.0};
};

McCheckConfig parse_mc_config(std::istream& in, const std::string& source = "<stream>");
McCheckConfig read_mc_config(const std::string& path);
McReport run_mc_check(const McCheckConfig& cfg);
Report mc_report(const McCheckConfig& cfg, const McReport& rep);

}  // namespace afm
