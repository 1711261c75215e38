#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace netcal {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// A single location in space (km) and time (abstract time units / hours).
struct SpaceTimePoint {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;

  Eigen::Vector3d coords() const { return {x, y, t}; }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(t);
  }
};

/// Packs points into an N x 3 matrix (columns x, y, t), the layout all
/// kernel routines operate on.
inline MatrixXd pack_points(const std::vector<SpaceTimePoint>& pts) {
  MatrixXd out(static_cast<Eigen::Index>(pts.size()), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out(i, 0) = pts[static_cast<std::size_t>(i)].x;
    out(i, 1) = pts[static_cast<std::size_t>(i)].y;
    out(i, 2) = pts[static_cast<std::size_t>(i)].t;
  }
  return out;
}

/// EQ kernel hyperparameters: signal variance plus one positive
/// lengthscale per input dimension (ARD).
struct KernelParams {
  double variance = 1.0;
  VectorXd lengthscales;

  KernelParams() = default;
  KernelParams(double variance_, VectorXd lengthscales_)
      : variance(variance_), lengthscales(std::move(lengthscales_)) {}

  static KernelParams isotropic(double variance_, double lengthscale,
                                int dims) {
    return {variance_, VectorXd::Constant(dims, lengthscale)};
  }

  void validate() const {
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw std::invalid_argument("KernelParams: variance must be positive");
    if (lengthscales.size() == 0)
      throw std::invalid_argument("KernelParams: no lengthscales given");
    for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
      if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d]))
        throw std::invalid_argument(
            "KernelParams: lengthscales must be positive");
  }
};

/// Per-sensor output scalings of the rank-1 coregionalization model.
/// The reference sensor's entry is pinned to exactly 1.
struct CoregWeights {
  VectorXd a;
  int reference = 0;

  CoregWeights() = default;
  CoregWeights(VectorXd a_, int reference_ = 0)
      : a(std::move(a_)), reference(reference_) {}

  void validate() const {
    if (reference < 0 || reference >= a.size())
      throw std::invalid_argument("CoregWeights: reference index out of range");
    if (a[reference] != 1.0)
      throw std::invalid_argument("CoregWeights: reference weight must be 1");
    if (!a.allFinite())
      throw std::invalid_argument("CoregWeights: entries must be finite");
  }
};

/// Observation noise variance of the measurement model.
struct NoiseModel {
  double variance = 0.0;

  NoiseModel() = default;
  explicit NoiseModel(double variance_) : variance(variance_) {}
  static NoiseModel from_sigma(double sigma) { return NoiseModel(sigma * sigma); }

  void validate() const {
    if (!(variance >= 0.0) || !std::isfinite(variance))
      throw std::invalid_argument("NoiseModel: variance must be >= 0");
  }
};

/// Dense Gaussian posterior over function values at a set of points.
struct GpPosterior {
  VectorXd mean;
  MatrixXd cov;

  VectorXd variances() const { return cov.diagonal(); }
};

/// One sensor reading.
struct Observation {
  int sensor = 0;
  SpaceTimePoint where;
  double value = 0.0;
};

/// Observations plus sensor roles, with optional simulation ground truth.
/// Truth is kept in a separate structure so inference code never touches it.
struct Dataset {
  struct Truth {
    std::vector<double> field;   // true field value per observation
    std::vector<double> weight;  // true calibration weight per observation
  };

  std::vector<Observation> observations;
  int n_sensors = 0;
  std::set<int> reference_sensors;
  std::optional<Truth> truth;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(observations.size());
  }

  bool is_reference(int sensor) const {
    return reference_sensors.count(sensor) > 0;
  }

  MatrixXd points() const {
    MatrixXd out(size(), 3);
    for (Eigen::Index i = 0; i < size(); ++i) {
      const auto& p = observations[static_cast<std::size_t>(i)].where;
      out(i, 0) = p.x;
      out(i, 1) = p.y;
      out(i, 2) = p.t;
    }
    return out;
  }

  VectorXd values() const {
    VectorXd out(size());
    for (Eigen::Index i = 0; i < size(); ++i)
      out[i] = observations[static_cast<std::size_t>(i)].value;
    return out;
  }

  VectorXi sensor_index() const {
    VectorXi out(size());
    for (Eigen::Index i = 0; i < size(); ++i)
      out[i] = observations[static_cast<std::size_t>(i)].sensor;
    return out;
  }

  void validate() const {
    for (const auto& o : observations) {
      if (o.sensor < 0 || o.sensor >= n_sensors)
        throw std::invalid_argument("Dataset: observation sensor out of range");
      if (!std::isfinite(o.value) || !o.where.finite())
        throw std::invalid_argument("Dataset: non-finite observation");
    }
    for (int r : reference_sensors)
      if (r < 0 || r >= n_sensors)
        throw std::invalid_argument("Dataset: reference sensor out of range");
    if (truth && (truth->field.size() != observations.size() ||
                  truth->weight.size() != observations.size()))
      throw std::invalid_argument("Dataset: truth size mismatch");
  }
};

/// Thrown when a factorization fails even after jitter escalation.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double attempted_jitter)
      : std::runtime_error(what + " (last attempted jitter " +
                           std::to_string(attempted_jitter) + ")"),
        attempted_jitter_(attempted_jitter) {}

  double attempted_jitter() const { return attempted_jitter_; }

 private:
  double attempted_jitter_;
};

/// Thrown when an optimizer diverges; carries the last finite iterate.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, VectorXd last_finite_iterate)
      : std::runtime_error(what), last_iterate_(std::move(last_finite_iterate)) {}

  const VectorXd& last_finite_iterate() const { return last_iterate_; }

 private:
  VectorXd last_iterate_;
};

}  // namespace netcal
