#pragma once

#include <Eigen/Core>

namespace ddcsp {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = DenseMatrix<double>;
using VectorXd = DenseVector<double>;

// Row-wise numerically stable softmax.
template <typename Scalar>
DenseMatrix<Scalar> softmax_rows(const DenseMatrix<Scalar>& logits) {
  DenseMatrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Row-wise log-softmax.
template <typename Scalar>
DenseMatrix<Scalar> log_softmax_rows(const DenseMatrix<Scalar>& logits) {
  DenseMatrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = (logits.row(r).array() - lse).matrix();
  }
  return out;
}

}  // namespace ddcsp
