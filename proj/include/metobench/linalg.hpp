#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace metobench {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Embeddings are stored in single precision; similarities are accumulated in
// double.
using Embedding = Vector<float>;

template <typename Derived>
typename Derived::PlainObject unit_normalized(const Eigen::MatrixBase<Derived>& v) {
  const auto norm = v.norm();
  if (!(norm > 0) || !std::isfinite(static_cast<double>(norm))) {
    throw std::domain_error("cannot normalise a zero or non-finite vector");
  }
  return v / norm;
}

template <typename DerivedA, typename DerivedB>
double dot(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  return a.template cast<double>().dot(b.template cast<double>());
}

template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  const double denom = ad.norm() * bd.norm();
  if (!(denom > 0)) return 0.0;
  return ad.dot(bd) / denom;
}

// Stacks equally sized vectors as the rows of a matrix.
template <typename Scalar>
Matrix<Scalar> stack_rows(const std::vector<Vector<Scalar>>& rows) {
  if (rows.empty()) return {};
  Matrix<Scalar> m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw std::invalid_argument("ragged embedding batch");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

// Cosine similarity between every row of `a` and every row of `b`.
template <typename Scalar>
Matrix<double> pairwise_cosine(const std::vector<Vector<Scalar>>& a,
                               const std::vector<Vector<Scalar>>& b) {
  if (a.empty() || b.empty()) {
    return Matrix<double>(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  }
  Matrix<double> ma = stack_rows(a).template cast<double>();
  Matrix<double> mb = stack_rows(b).template cast<double>();
  if (ma.cols() != mb.cols()) throw std::invalid_argument("dimension mismatch");
  ma.rowwise().normalize();
  mb.rowwise().normalize();
  return ma * mb.transpose();
}

}  // namespace metobench
