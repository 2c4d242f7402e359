#include "vab/linalg.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace vab {

Matrix psd_sqrt(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("psd_sqrt: matrix is not square");
  if (m.size() == 0) return m;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double tol = 1e-8 * scale;
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol) {
    throw std::invalid_argument("psd_sqrt: asymmetric matrix (max |M - M^T| = " + std::to_string(asym) + ")");
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  if (lambda.minCoeff() < -tol) {
    throw std::invalid_argument("psd_sqrt: indefinite matrix (min eigenvalue " + std::to_string(lambda.minCoeff()) + ")");
  }
  lambda = lambda.cwiseMax(0.0).cwiseSqrt();
  const auto& q = eig.eigenvectors();
  return q * lambda.asDiagonal() * q.transpose();
}

Vector column_mean(const Matrix& x) { return x.colwise().mean().transpose(); }

Matrix covariance(const Matrix& x) {
  if (x.rows() < 2) throw std::invalid_argument("covariance: need at least two rows");
  const Matrix centered = x.rowwise() - x.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

}  // namespace vab
