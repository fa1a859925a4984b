#include "afm/panel.hpp"

#include <cmath>
#include <string>

#include "afm/error.hpp"

namespace afm {

void validate_panel(const Matrix& X) {
    require(X.rows() >= 2 && X.cols() >= 2, ErrorKind::InvalidInput,
            "panel must have T >= 2 and N >= 2, got " + std::to_string(X.rows()) + "x" +
                std::to_string(X.cols()));
    require(X.allFinite(), ErrorKind::InvalidInput, "panel contains non-finite entries");
}

PanelData PanelData::raw(Matrix X) {
    validate_panel(X);
    PanelData p;
    p.column_means = Vector::Zero(X.cols());
    p.column_sds = Vector::Ones(X.cols());
    p.X = std::move(X);
    return p;
}

PanelData PanelData::standardize(const Matrix& X) {
    validate_panel(X);
    const double T = static_cast<double>(X.rows());
    PanelData p;
    p.standardized = true;
    p.column_means = X.colwise().mean().transpose();
    p.X = X.rowwise() - p.column_means.transpose();
    p.column_sds.resize(X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        const double sd = std::sqrt(p.X.col(i).squaredNorm() / T);
        require(sd > 0.0 && std::isfinite(sd), ErrorKind::InvalidInput,
                "column " + std::to_string(i) + " is constant and cannot be standardized");
        p.column_sds(i) = sd;
        p.X.col(i) /= sd;
    }
    return p;
}

Matrix PanelData::to_original_units(const Matrix& C) const {
    require(C.rows() == X.rows() && C.cols() == X.cols(), ErrorKind::InvalidInput,
            "shape mismatch in back-transform");
    Matrix out = C * column_sds.asDiagonal();
    out.rowwise() += column_means.transpose();
    return out;
}

}  // namespace afm
