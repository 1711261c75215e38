#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "netcal/types.hpp"

namespace netcal {

/// Exponentiated-quadratic Gram matrix between row-point sets P (|P| x D)
/// and Q (|Q| x D):
///
///   K(i,j) = variance * exp(-1/2 * sum_d ((P(i,d) - Q(j,d)) / l_d)^2)
///
/// One lengthscale per column of P/Q. Works for any scalar type Eigen
/// supports; all call sites in this project use double.
template <typename DerivedP, typename DerivedQ>
Eigen::Matrix<typename DerivedP::Scalar, Eigen::Dynamic, Eigen::Dynamic>
eq_kernel(const Eigen::MatrixBase<DerivedP>& P,
          const Eigen::MatrixBase<DerivedQ>& Q, const KernelParams& params) {
  using Scalar = typename DerivedP::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  params.validate();
  if (P.cols() != Q.cols())
    throw std::invalid_argument("eq_kernel: point dimensionality mismatch");
  if (P.cols() != params.lengthscales.size())
    throw std::invalid_argument(
        "eq_kernel: need one lengthscale per point dimension");

  // Scale each dimension by its lengthscale, then use the expansion
  // |u - v|^2 = |u|^2 + |v|^2 - 2 u.v for the full distance matrix.
  Mat Ps = P;
  Mat Qs = Q;
  for (Eigen::Index d = 0; d < Ps.cols(); ++d) {
    const Scalar inv = Scalar(1) / static_cast<Scalar>(params.lengthscales[d]);
    Ps.col(d) *= inv;
    Qs.col(d) *= inv;
  }
  Mat sq = (-2 * Ps * Qs.transpose());
  sq.colwise() += Ps.rowwise().squaredNorm();
  sq.rowwise() += Qs.rowwise().squaredNorm().transpose();
  // Rounding in the expansion can leave slightly negative squared distances.
  return static_cast<Scalar>(params.variance) *
         (Scalar(-0.5) * sq.cwiseMax(Scalar(0))).array().exp().matrix();
}

inline MatrixXd eq_kernel(const std::vector<SpaceTimePoint>& P,
                          const std::vector<SpaceTimePoint>& Q,
                          const KernelParams& params) {
  return eq_kernel(pack_points(P), pack_points(Q), params);
}

/// Time-only Gram matrix, the 1-d case used by the weight process.
inline MatrixXd eq_kernel_time(const VectorXd& s, const VectorXd& t,
                               const KernelParams& params) {
  return eq_kernel(s.reshaped(s.size(), 1), t.reshaped(t.size(), 1), params);
}

/// Rank-1 coregionalization matrix B = a a^T.
inline MatrixXd coreg_matrix(const CoregWeights& weights) {
  weights.validate();
  return weights.a * weights.a.transpose();
}

/// Covariance of the multi-sensor model: the EQ Gram over space-time points
/// multiplied element-wise with the coregionalization matrix expanded by
/// each observation's sensor identity.
template <typename DerivedP>
Eigen::Matrix<typename DerivedP::Scalar, Eigen::Dynamic, Eigen::Dynamic>
combined_covariance(const Eigen::MatrixBase<DerivedP>& points,
                    const VectorXi& sensor_of, const KernelParams& params,
                    const CoregWeights& weights) {
  using Scalar = typename DerivedP::Scalar;

  weights.validate();
  if (points.rows() != sensor_of.size())
    throw std::invalid_argument(
        "combined_covariance: one sensor index per point required");
  for (Eigen::Index i = 0; i < sensor_of.size(); ++i)
    if (sensor_of[i] < 0 || sensor_of[i] >= weights.a.size())
      throw std::out_of_range("combined_covariance: sensor index out of range");

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    scale[i] = static_cast<Scalar>(weights.a[sensor_of[i]]);

  return scale.asDiagonal() * eq_kernel(points, points, params) *
         scale.asDiagonal();
}

inline MatrixXd combined_covariance(const std::vector<SpaceTimePoint>& points,
                                    const VectorXi& sensor_of,
                                    const KernelParams& params,
                                    const CoregWeights& weights) {
  return combined_covariance(pack_points(points), sensor_of, params, weights);
}

}  // namespace netcal
