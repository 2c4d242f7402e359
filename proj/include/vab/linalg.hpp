#pragma once

#include <Eigen/Dense>

namespace vab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Principal square root of a symmetric positive semi-definite matrix via a
/// symmetric eigendecomposition. Eigenvalues in [-1e-8·scale, 0) are clamped
/// to zero (scale = max(1, max|M|)). Throws std::invalid_argument when the
/// matrix is not square, asymmetric beyond that tolerance, or indefinite.
Matrix psd_sqrt(const Matrix& m);

// Sample mean (as a row) and unbiased covariance of the rows of x.
Vector column_mean(const Matrix& x);
Matrix covariance(const Matrix& x);

}  // namespace vab
