#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "netcal/kernels.hpp"

using namespace netcal;

namespace {

MatrixXd random_points(std::mt19937_64& rng, int n, int dims, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  MatrixXd p(n, dims);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = u(rng);
  return p;
}

}  // namespace

TEST_CASE("eq_kernel at zero distance returns the signal variance") {
  std::vector<SpaceTimePoint> p{{0.3, -1.2, 4.0}};
  const KernelParams params{2.0, Eigen::Vector3d(1.0, 2.0, 0.5)};
  const MatrixXd K = eq_kernel(p, p, params);
  REQUIRE(K.rows() == 1);
  CHECK(K(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("eq_kernel at one lengthscale of separation") {
  MatrixXd p(1, 1), q(1, 1);
  p << 0.0;
  q << 1.7;
  const KernelParams params{1.0, VectorXd::Constant(1, 1.7)};
  const MatrixXd K = eq_kernel(p, q, params);
  CHECK(K(0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("eq_kernel Gram matrices are symmetric and PSD") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd p = random_points(rng, 5, 3, 3.0);
    const KernelParams params{1.5, Eigen::Vector3d(1.0, 0.7, 2.0)};
    const MatrixXd K = eq_kernel(p, p, params);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(K);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("eq_kernel rejects bad parameters") {
  MatrixXd p(1, 1);
  p << 0.0;
  CHECK_THROWS_AS(eq_kernel(p, p, KernelParams{0.0, VectorXd::Ones(1)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(eq_kernel(p, p, KernelParams{1.0, VectorXd::Zero(1)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(eq_kernel(p, p, KernelParams{1.0, -VectorXd::Ones(1)}),
                  std::invalid_argument);
  MatrixXd q(1, 2);
  q << 0.0, 0.0;
  CHECK_THROWS_AS(eq_kernel(p, q, KernelParams{1.0, VectorXd::Ones(1)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(eq_kernel(q, q, KernelParams{1.0, VectorXd::Ones(1)}),
                  std::invalid_argument);
}

TEST_CASE("rescaling lengthscales and distances together leaves the Gram "
          "matrix unchanged") {
  std::mt19937_64 rng(11);
  const MatrixXd p = random_points(rng, 6, 2, 2.0);
  const KernelParams params{1.2, (VectorXd(2) << 0.8, 1.4).finished()};
  const double c = 3.7;
  KernelParams scaled = params;
  scaled.lengthscales *= c;
  const MatrixXd K1 = eq_kernel(p, p, params);
  const MatrixXd K2 = eq_kernel((c * p).eval(), (c * p).eval(), scaled);
  CHECK((K1 - K2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("coreg_matrix is the outer product a a^T") {
  {
    const CoregWeights w{(VectorXd(2) << 1.0, 3.0).finished()};
    const MatrixXd B = coreg_matrix(w);
    MatrixXd expected(2, 2);
    expected << 1, 3, 3, 9;
    CHECK((B - expected).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    const CoregWeights w{VectorXd::Ones(1)};
    CHECK(coreg_matrix(w)(0, 0) == 1.0);
  }
  {
    const CoregWeights w{(VectorXd(3) << 1.0, 2.0, 0.5).finished()};
    CHECK(coreg_matrix(w)(1, 2) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("coreg weights pin the reference entry to one") {
  CHECK_THROWS_AS(
      coreg_matrix(CoregWeights{(VectorXd(2) << 2.0, 3.0).finished()}),
      std::invalid_argument);
  CHECK_NOTHROW(
      coreg_matrix(CoregWeights{(VectorXd(2) << 2.0, 1.0).finished(), 1}));
}

TEST_CASE("combined_covariance of co-located simultaneous points") {
  std::vector<SpaceTimePoint> pts{{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
  const KernelParams params{1.0, Eigen::Vector3d::Ones()};
  VectorXi sensors(2);

  sensors << 0, 0;
  CoregWeights ref_only{VectorXd::Ones(1)};
  MatrixXd K = combined_covariance(pts, sensors, params, ref_only);
  CHECK(K(0, 1) == doctest::Approx(params.variance).epsilon(1e-12));

  sensors << 0, 1;
  CoregWeights pair{(VectorXd(2) << 1.0, 3.0).finished()};
  K = combined_covariance(pts, sensors, params, pair);
  CHECK(K(0, 1) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("combined_covariance matches a scalar brute-force loop") {
  // A mobile sensor passing close to one static sensor and then another:
  // the cross blocks light up exactly where space-time distance is small.
  std::vector<SpaceTimePoint> pts;
  VectorXi sensors(9);
  int k = 0;
  for (double t : {0.0, 1.0, 2.0}) {
    pts.push_back({0.0, 0.0, t});  // sensor 0 (static)
    sensors[k++] = 0;
    pts.push_back({4.0, 0.0, t});  // sensor 2 (static)
    sensors[k++] = 2;
    pts.push_back({4.0 - 2.0 * t, 0.0, t});  // sensor 1 (mobile, 2 -> 0)
    sensors[k++] = 1;
  }
  const KernelParams params{2.0, Eigen::Vector3d(1.0, 1.0, 0.8)};
  const CoregWeights weights{(VectorXd(3) << 1.0, 1.7, 0.6).finished()};
  const MatrixXd K = combined_covariance(pts, sensors, params, weights);

  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      double d2 = 0.0;
      d2 += std::pow((pts[i].x - pts[j].x) / params.lengthscales[0], 2);
      d2 += std::pow((pts[i].y - pts[j].y) / params.lengthscales[1], 2);
      d2 += std::pow((pts[i].t - pts[j].t) / params.lengthscales[2], 2);
      const double expected = weights.a[sensors[static_cast<int>(i)]] *
                              weights.a[sensors[static_cast<int>(j)]] *
                              params.variance * std::exp(-0.5 * d2);
      CHECK(K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
            doctest::Approx(expected).epsilon(1e-10));
    }
  }

  // Mobile near sensor 2 at t=0 and near sensor 0 at t=2.
  CHECK(K(2, 1) > 0.5 * K(1, 1));  // co-located with sensor 2 at t=0
  CHECK(K(8, 6) > 0.5 * K(6, 6));  // co-located with sensor 0 at t=2
  CHECK(std::abs(K(2, 0)) < 0.01 * params.variance);  // far from sensor 0
}

TEST_CASE("combined_covariance equals the Hadamard product of its factors") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> sensor_dist(0, 2);
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd p = random_points(rng, 8, 3, 2.0);
    VectorXi sensors(8);
    for (Eigen::Index i = 0; i < 8; ++i) sensors[i] = sensor_dist(rng);
    const KernelParams params{0.9, Eigen::Vector3d(1.1, 0.6, 1.9)};
    const CoregWeights weights{(VectorXd(3) << 1.0, -0.4, 2.3).finished()};

    const MatrixXd combined = combined_covariance(p, sensors, params, weights);
    const MatrixXd E = eq_kernel(p, p, params);
    const MatrixXd B = coreg_matrix(weights);
    MatrixXd expanded(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i)
      for (Eigen::Index j = 0; j < 8; ++j)
        expanded(i, j) = B(sensors[i], sensors[j]);
    CHECK((combined - E.cwiseProduct(expanded)).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((combined - combined.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("combined_covariance rejects out-of-range sensor indices") {
  std::vector<SpaceTimePoint> pts{{0, 0, 0}, {0, 0, 1}};
  VectorXi sensors(2);
  sensors << 0, 5;
  CHECK_THROWS_AS(
      combined_covariance(pts, sensors, KernelParams{1.0, Eigen::Vector3d::Ones()},
                          CoregWeights{VectorXd::Ones(2)}),
      std::out_of_range);
}
