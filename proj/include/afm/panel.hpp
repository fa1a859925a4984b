#pragma once

#include <string>
#include <vector>

#include "afm/linalg.hpp"

namespace afm {

/// T x N panel: rows are time periods, columns are cross-section units.
///
/// When `standardized` is set, every column has mean zero and unit variance
/// under the 1/T convention, so ||X||_F^2 = N T and the normalized panel
/// X / sqrt(NT) has unit Frobenius norm. `column_means`/`column_sds` hold the
/// original moments for back-transforming fitted values.
struct PanelData {
    Matrix X;
    bool standardized = false;
    Vector column_means;
    Vector column_sds;
    std::vector<std::string> unit_names;

    Eigen::Index T() const { return X.rows(); }
    Eigen::Index N() const { return X.cols(); }

    /// Wrap raw data untouched (means 0, sds 1 recorded as identity transform).
    static PanelData raw(Matrix X);

    /// Demean and scale each column to unit 1/T variance. Constant columns are
    /// rejected.
    static PanelData standardize(const Matrix& X);

    /// Map a T x N matrix on the standardized scale back to original units.
    Matrix to_original_units(const Matrix& C) const;
};

void validate_panel(const Matrix& X);

}  // namespace afm
