#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sparsevote/datagen.hpp"

using namespace sparsevote;

TEST(Ar1Cholesky, IdentityWhenUncorrelated) {
  const Matrix L = ar1_cholesky(2, 0.0);
  EXPECT_TRUE(L.isApprox(Matrix::Identity(2, 2)));
}

TEST(Ar1Cholesky, HandFactorOfTwoByTwo) {
  const Matrix L = ar1_cholesky(2, 0.5);
  EXPECT_NEAR(L(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(L(1, 1), std::sqrt(0.75), 1e-15);
  EXPECT_EQ(L(0, 1), 0.0);
}

TEST(Ar1Cholesky, ReconstructsCovariance) {
  for (int d : {1, 5, 40}) {
    const Matrix L = ar1_cholesky(d, 0.5);
    Matrix S(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) S(i, j) = std::pow(0.5, std::abs(i - j));
    EXPECT_LE((L * L.transpose() - S).cwiseAbs().maxCoeff(), 1e-12) << "d=" << d;
  }
}

TEST(SampleDesign, RecursionMatchesCholeskyProduct) {
  // The AR recursion and Z L^T must give the same rows from the same draws.
  const int n = 7, d = 9;
  GaussianStream a(42), b(42);
  const Matrix X1 = sample_design(n, d, 0.5, a);
  const Matrix X2 = sample_design(n, ar1_cholesky(d, 0.5), b);
  EXPECT_LE((X1 - X2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SampleDesign, PooledCovarianceConverges) {
  ProblemSpec spec;
  spec.d = 12;
  spec.K = 2;
  spec.n = 2000;
  spec.M = 60;
  const auto shards = sample_shards(spec);
  Matrix pooled = Matrix::Zero(spec.d, spec.d);
  double rows = 0;
  for (const auto& s : shards) {
    pooled += s.X.transpose() * s.X;
    rows += s.X.rows();
  }
  pooled /= rows;
  EXPECT_LE((pooled - ar1_covariance(spec.d, 0.5)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SampleShards, DeterministicAndMachineIndependent) {
  ProblemSpec spec;
  spec.d = 20;
  spec.K = 3;
  spec.n = 10;
  spec.M = 4;
  const auto a = sample_shards(spec);
  const auto b = sample_shards(spec);
  for (int m = 0; m < spec.M; ++m) EXPECT_EQ(a[m].X, b[m].X);
  EXPECT_NE(a[0].X, a[1].X);
  // Machine m's design does not depend on how many machines are drawn.
  const auto c = sample_shards(spec, std::nullopt, 2);
  EXPECT_EQ(a[1].X, c[1].X);
  // A different design round gives fresh matrices.
  const auto r = sample_shards(spec, std::nullopt, std::nullopt, 1);
  EXPECT_NE(a[0].X, r[0].X);
}

TEST(ThetaStar, SingleNonzeroForKOne) {
  ProblemSpec spec;
  spec.d = 30;
  spec.K = 1;
  const auto gt = make_theta_star(spec, 0.7, 3);
  ASSERT_EQ(gt.support.size(), 1u);
  EXPECT_DOUBLE_EQ(std::abs(gt.theta_star[gt.support[0]]), 0.7);
}

TEST(ThetaStar, EquallySpacedMagnitudes) {
  ProblemSpec spec;
  spec.d = 100;
  spec.K = 5;
  const auto gt = make_theta_star(spec, 0.2, 11);
  std::vector<double> mags;
  for (auto i : gt.support) mags.push_back(std::abs(gt.theta_star[i]));
  std::sort(mags.begin(), mags.end());
  const double expected[] = {0.20, 0.25, 0.30, 0.35, 0.40};
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(mags[j], expected[j], 1e-15);
}

TEST(ThetaStar, ConstructionInvariants) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ProblemSpec spec;
    spec.d = 40;
    spec.K = 1 + static_cast<int>(seed % 7);
    const auto gt = make_theta_star(spec, 0.3, seed);
    EXPECT_EQ(gt.support, support_of(gt.theta_star));
    EXPECT_EQ(static_cast<int>(gt.support.size()), spec.K);
    EXPECT_TRUE(std::is_sorted(gt.support.begin(), gt.support.end()));
    double mn = 1e9;
    for (auto i : gt.support) {
      const double a = std::abs(gt.theta_star[i]);
      mn = std::min(mn, a);
      EXPECT_GE(a, 0.3 - 1e-15);
      EXPECT_LE(a, 0.6 + 1e-15);
    }
    EXPECT_DOUBLE_EQ(mn, 0.3);
  }
}

TEST(ThetaStar, SignsAreMixed) {
  ProblemSpec spec;
  spec.d = 500;
  spec.K = 200;
  const auto gt = make_theta_star(spec, 1.0, 5);
  int pos = 0;
  for (auto i : gt.support) pos += gt.theta_star[i] > 0;
  EXPECT_GT(pos, 70);
  EXPECT_LT(pos, 130);
}

TEST(ThetaMinFromSnr, FormulaAndMonotonicity) {
  EXPECT_NEAR(theta_min_from_snr(std::exp(1.0), 1.0, 0.5, 100, 1.0), std::sqrt(2.0 * 0.01 * 0.5), 1e-15);
  const double base = theta_min_from_snr(1000, 1.0, 0.5, 200, 1.3);
  EXPECT_GT(theta_min_from_snr(1000, 1.1, 0.5, 200, 1.3), base);
  EXPECT_GT(theta_min_from_snr(1000, 1.0, 0.6, 200, 1.3), base);
  EXPECT_GT(theta_min_from_snr(1000, 1.0, 0.5, 200, 1.4), base);
  EXPECT_GT(theta_min_from_snr(2000, 1.0, 0.5, 200, 1.3), base);
  EXPECT_LT(theta_min_from_snr(1000, 1.0, 0.5, 300, 1.3), base);
}

TEST(SampleResponses, NoiselessLimit) {
  ProblemSpec spec;
  spec.d = 15;
  spec.K = 3;
  spec.n = 20;
  spec.M = 2;
  auto shards = sample_shards(spec);
  const auto gt = make_theta_star(spec, 1.0, 1);
  sample_responses(shards, gt.theta_star, 1e-12, 9);
  for (const auto& s : shards) EXPECT_LE((s.y - s.X * gt.theta_star).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SampleResponses, NoiseVarianceAndReproducibility) {
  DataShard s;
  s.X = Matrix::Zero(100000, 2);
  std::vector<DataShard> v{s};
  sample_responses(v, Vector::Zero(2), 1.7, 3);
  const double mean = v[0].y.mean();
  const double var = (v[0].y.array() - mean).square().sum() / (v[0].y.size() - 1);
  EXPECT_NEAR(var, 1.7 * 1.7, 0.05 * 1.7 * 1.7);

  std::vector<DataShard> w{s};
  sample_responses(w, Vector::Zero(2), 1.7, 3);
  EXPECT_EQ(v[0].y, w[0].y);
  sample_responses(w, Vector::Zero(2), 1.7, 3, 1);
  EXPECT_NE(v[0].y, w[0].y);
}

TEST(ComputeCOmega, MaxOverMachinesAndCoordinates) {
  std::vector<Vector> one{Vector::Ones(3)};
  EXPECT_DOUBLE_EQ(compute_c_omega(std::span<const Vector>(one)), 1.0);
  std::vector<Vector> two{Vector{{1.0, 1.3}}, Vector{{0.9, 1.1}}};
  EXPECT_DOUBLE_EQ(compute_c_omega(std::span<const Vector>(two)), 1.3);
  std::vector<Vector> none;
  EXPECT_THROW(compute_c_omega(std::span<const Vector>(none)), Error);
}

TEST(ProblemSpec, Validation) {
  ProblemSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.K = spec.d;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.r = 0.0;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.sigma = -1.0;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  EXPECT_DOUBLE_EQ(spec.noise_sigma(), 1.0 / std::sqrt(0.5));
  spec.sigma = 2.0;
  EXPECT_DOUBLE_EQ(spec.noise_sigma(), 2.0);
}
