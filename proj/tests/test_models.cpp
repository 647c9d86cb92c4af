#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stv/errors.hpp"
#include "stv/models.hpp"

using namespace stv;

namespace {

// Trapezoid rule for int g(x) phi(x) dx on [-12, 12].
template <class G>
double gauss_quadrature(G&& g, int points = 200001) {
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / (points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    acc += w * g(x) * std::exp(-0.5 * x * x);
  }
  return acc * h / std::sqrt(2.0 * std::numbers::pi);
}

VectorXd one(double x) { return VectorXd::Constant(1, x); }

}  // namespace

TEST(Models, LogPartitionMeanModel) {
  EXPECT_EQ(log_partition(KernelExpFamilyModel::gaussian_mean(VectorXd::Zero(3))), 0.0);
  VectorXd v(2);
  v << 1.2, std::sqrt(4.0 - 1.44);
  EXPECT_NEAR(log_partition(KernelExpFamilyModel::gaussian_mean(v)), 2.0, 1e-14);
  // 1-D quadrature of log int e^{2x} dmu = 2.
  EXPECT_NEAR(std::log(gauss_quadrature([](double x) { return std::exp(2.0 * x); })), 2.0, 1e-8);
}

TEST(Models, LogPartitionCovarianceModel) {
  EXPECT_NEAR(log_partition(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Identity(2, 2))), -std::log(2.0), 1e-14);
  // d = 1, F = 0.7: log int e^{-0.35 x^2} dmu by quadrature.
  const double q = std::log(gauss_quadrature([](double x) { return std::exp(-0.35 * x * x); }));
  EXPECT_NEAR(log_partition(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Constant(1, 1, 0.7))), q, 1e-10);
}

TEST(Models, CovarianceModelRejectsNonPd) {
  EXPECT_THROW(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Constant(1, 1, -1.0)), DomainError);
  EXPECT_THROW(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Constant(1, 1, -2.0)), DomainError);
}

TEST(Models, GeneralModelHasNoExactPartition) {
  const KernelExpFamilyModel m(BaseMeasure::std_normal(1),
                               RkhsFunction::representer(KernelSpec::rbf(1, 1.0), MatrixXd::Zero(1, 1), one(1.0)));
  EXPECT_THROW(log_partition(m), UnsupportedError);
  EXPECT_THROW(log_density(m, one(0.0)), StateError);
  EXPECT_THROW(sample_model(m, 5, 1), UnsupportedError);
}

TEST(Models, McLogPartitionExamples) {
  const KernelExpFamilyModel zero = KernelExpFamilyModel::gaussian_mean(VectorXd::Zero(2));
  EXPECT_EQ(mc_log_partition(zero, 1000, 1).estimate, 0.0);

  const McEstimate a = mc_log_partition(KernelExpFamilyModel::gaussian_mean(one(1.0)), 100000, 2);
  EXPECT_NEAR(a.estimate, 0.5, 3.0 * a.stderr_);
  EXPECT_GT(a.stderr_, 0.0);

  const McEstimate c = mc_log_partition(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Identity(1, 1)), 100000, 3);
  EXPECT_NEAR(c.estimate, -0.5 * std::log(2.0), 3.0 * c.stderr_);
}

TEST(Models, McLogPartitionWithOtherProposal) {
  const KernelExpFamilyModel m = KernelExpFamilyModel::gaussian_mean(one(1.0));
  const BaseMeasure q = BaseMeasure::gaussian(one(0.5), MatrixXd::Constant(1, 1, 2.0));
  const McEstimate e = mc_log_partition(m, q, 100000, 4);
  EXPECT_NEAR(e.estimate, 0.5, 3.0 * e.stderr_);
}

TEST(Models, McLogPartitionNeedsTwoDraws) {
  EXPECT_THROW(mc_log_partition(KernelExpFamilyModel::gaussian_mean(one(0.0)), 1, 1), InputError);
}

TEST(Models, LogDensityExamples) {
  EXPECT_EQ(log_density(KernelExpFamilyModel::gaussian_mean(VectorXd::Zero(2)), VectorXd::Constant(2, 3.0)), 0.0);
  EXPECT_NEAR(log_density(KernelExpFamilyModel::gaussian_mean(one(1.0)), one(0.0)), -0.5, 1e-15);
  EXPECT_NEAR(log_density(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Identity(1, 1)), one(0.0)),
              0.5 * std::log(2.0), 1e-15);
}

TEST(Models, AmbientLogDensityMatchesGaussian) {
  const KernelExpFamilyModel m = KernelExpFamilyModel::gaussian_mean(one(1.5));
  const double x = 0.3;
  const double expected = -0.5 * (x - 1.5) * (x - 1.5) - 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_density(m, one(x), true), expected, 1e-14);
}

TEST(Models, CachedLogPartitionIsUsedAndInvalidated) {
  KernelExpFamilyModel m(BaseMeasure::std_normal(1),
                         RkhsFunction::representer(KernelSpec::rbf(1, 1.0), MatrixXd::Zero(1, 1), one(1.0)));
  m.set_log_partition(0.25);
  EXPECT_NEAR(log_density(m, one(0.0)), 1.0 - 0.25, 1e-15);
  m.set_f(RkhsFunction::representer(KernelSpec::rbf(1, 1.0), MatrixXd::Zero(1, 1), one(2.0)));
  EXPECT_FALSE(m.cached_log_partition().has_value());
}

TEST(Models, SampleMeanModel) {
  const VectorXd mean = VectorXd::Constant(3, 5.0);
  const MatrixXd X = sample_model(KernelExpFamilyModel::gaussian_mean(mean), 10000, 11);
  ASSERT_EQ(X.rows(), 10000);
  const VectorXd m = X.colwise().mean().transpose();
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(m(j), 5.0, 4.0 / 100.0);
}

TEST(Models, SampleCovarianceModel) {
  const MatrixXd X = sample_model(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Zero(3, 3)), 10000, 12);
  const MatrixXd C = (X.rowwise() - X.colwise().mean()).transpose() * (X.rowwise() - X.colwise().mean()) / 9999.0;
  EXPECT_LT((C - MatrixXd::Identity(3, 3)).norm(), 0.1);

  MatrixXd F(2, 2);
  F << 1.0, 0.3, 0.3, 0.5;
  const MatrixXd Y = sample_model(KernelExpFamilyModel::gaussian_covariance(F), 50000, 13);
  const MatrixXd CY = Y.transpose() * Y / 50000.0;
  EXPECT_LT((CY - (MatrixXd::Identity(2, 2) + F).inverse()).norm(), 0.03);
}

TEST(Models, SampleZeroRows) {
  EXPECT_EQ(sample_model(KernelExpFamilyModel::gaussian_mean(VectorXd::Zero(2)), 0, 1).rows(), 0);
}

TEST(Models, SamplingIsReproducible) {
  const KernelExpFamilyModel m = KernelExpFamilyModel::gaussian_mean(VectorXd::Constant(2, 1.0));
  EXPECT_EQ(sample_model(m, 50, 99), sample_model(m, 50, 99));
  EXPECT_NE(sample_model(m, 50, 99), sample_model(m, 50, 100));
}

TEST(Models, ToGaussianExamples) {
  VectorXd f(2);
  f << 1, 2;
  const GaussianParams g = to_gaussian(KernelExpFamilyModel::gaussian_mean(f));
  EXPECT_EQ(g.mean, f);
  EXPECT_EQ(g.cov, MatrixXd::Identity(2, 2));
  const GaussianParams c0 = to_gaussian(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Zero(2, 2)));
  EXPECT_EQ(c0.mean, VectorXd::Zero(2));
  EXPECT_LT((c0.cov - MatrixXd::Identity(2, 2)).norm(), 1e-15);
  const GaussianParams c1 = to_gaussian(KernelExpFamilyModel::gaussian_covariance(MatrixXd::Identity(1, 1)));
  EXPECT_NEAR(c1.cov(0, 0), 0.5, 1e-15);
}

TEST(Models, CovarianceModelNormIsHalfFrobenius) {
  MatrixXd F(2, 2);
  F << 1.0, 0.2, 0.2, 3.0;
  EXPECT_NEAR(rkhs_norm(KernelExpFamilyModel::gaussian_covariance(F).f()), F.norm() / 2.0, 1e-14);
  EXPECT_LT((KernelExpFamilyModel::gaussian_covariance(F).precision_offset() - F).norm(), 1e-14);
}

TEST(Models, LogPartitionIsConvex) {
  RandomStream rng = make_stream(5, "convex");
  for (int i = 0; i < 20; ++i) {
    const VectorXd f = rng.normal_vector(3), g = rng.normal_vector(3);
    MatrixXd A = 0.3 * rng.normal_matrix(3, 3), B = 0.3 * rng.normal_matrix(3, 3);
    const MatrixXd F = A * A.transpose(), G = B * B.transpose() - 0.05 * MatrixXd::Identity(3, 3);
    for (double beta : {0.25, 0.5, 0.75}) {
      const double mix = log_partition(KernelExpFamilyModel::gaussian_mean(beta * f + (1 - beta) * g));
      EXPECT_LE(mix, beta * log_partition(KernelExpFamilyModel::gaussian_mean(f)) +
                         (1 - beta) * log_partition(KernelExpFamilyModel::gaussian_mean(g)) + 1e-10);
      const double cmix = log_partition(KernelExpFamilyModel::gaussian_covariance(beta * F + (1 - beta) * G));
      EXPECT_LE(cmix, beta * log_partition(KernelExpFamilyModel::gaussian_covariance(F)) +
                          (1 - beta) * log_partition(KernelExpFamilyModel::gaussian_covariance(G)) + 1e-10);
    }
  }
}

// |A(f) - A(g)| <= K ||f - g|| with K = 1 for the Gaussian kernel.
TEST(Models, LogPartitionLipschitzOnRbf) {
  RandomStream rng = make_stream(6, "lipschitz");
  const KernelSpec k = KernelSpec::rbf(2, 1.0);
  for (int i = 0; i < 10; ++i) {
    const MatrixXd anchors = rng.normal_matrix(4, 2);
    const RkhsFunction f = RkhsFunction::representer(k, anchors, 0.5 * rng.normal_vector(4));
    const RkhsFunction g = RkhsFunction::representer(k, anchors, 0.5 * rng.normal_vector(4));
    const McEstimate af = mc_log_partition({BaseMeasure::std_normal(2), f}, 50000, 100 + i);
    const McEstimate ag = mc_log_partition({BaseMeasure::std_normal(2), g}, 50000, 200 + i);
    const double se = std::hypot(af.stderr_, ag.stderr_);
    EXPECT_LE(std::abs(af.estimate - ag.estimate), rkhs_norm(f - g) + 3.0 * se);
  }
}

TEST(Models, DensityIntegratesToOneUnderBase) {
  // E_mu[exp(f - A)] = 1, by Monte Carlo over the base measure.
  const KernelExpFamilyModel m = KernelExpFamilyModel::gaussian_mean(VectorXd::Constant(2, 0.5));
  RandomStream rng = make_stream(7, "integrate");
  const MatrixXd X = m.base().sample(100000, rng);
  const Eigen::ArrayXd p = log_density_rows(m, X).array().exp();
  const double mean = p.mean();
  const double se = std::sqrt((p - mean).square().mean() / 100000.0);
  EXPECT_NEAR(mean, 1.0, 3.0 * se);
}

TEST(Models, UniformBoxBase) {
  VectorXd lo(2), hi(2);
  lo << -1, 0;
  hi << 1, 4;
  const BaseMeasure box = BaseMeasure::uniform_box(lo, hi);
  EXPECT_NEAR(box.log_density(VectorXd::Constant(2, 0.5)), -std::log(8.0), 1e-14);
  EXPECT_EQ(box.log_density(VectorXd::Constant(2, 2.0)), -std::numeric_limits<double>::infinity());
  RandomStream rng = make_stream(8, "box");
  const MatrixXd X = box.sample(1000, rng);
  EXPECT_TRUE((X.col(0).array() >= -1).all() && (X.col(0).array() <= 1).all());
  EXPECT_TRUE((X.col(1).array() >= 0).all() && (X.col(1).array() <= 4).all());
}
