#include <gtest/gtest.h>

#include <algorithm>

#include "stv/contamination.hpp"
#include "stv/errors.hpp"

using namespace stv;

namespace {
long count(const std::vector<bool>& v) { return std::count(v.begin(), v.end(), true); }
}  // namespace

TEST(Contamination, EpsZeroAndOne) {
  ContaminationSpec s = scenario_mean(3);
  s.eps = 0.0;
  EXPECT_EQ(count(sample_huber(s, 500, 1).outlier), 0);
  s.eps = 1.0;
  EXPECT_EQ(count(sample_huber(s, 500, 1).outlier), 500);
}

TEST(Contamination, BernoulliCountInBinomialBand) {
  const ContaminatedData cd = sample_huber(scenario_mean(2), 10000, 3);
  EXPECT_NEAR(static_cast<double>(count(cd.outlier)), 1000.0, 4.0 * std::sqrt(10000 * 0.1 * 0.9));
}

TEST(Contamination, ExactCountMixing) {
  ContaminationSpec s = scenario_mean(2);
  s.mixing = Mixing::ExactCount;
  for (Index n : {10, 333, 1000}) {
    const ContaminatedData cd = sample_huber(s, n, 4);
    EXPECT_EQ(count(cd.outlier), std::lround(0.1 * static_cast<double>(n)));
  }
}

TEST(Contamination, ScenarioMean) {
  const ContaminationSpec s2 = scenario_mean(2);
  EXPECT_EQ(s2.eps, 0.1);
  ASSERT_TRUE(std::holds_alternative<Gaussian>(s2.outlier));
  EXPECT_EQ(std::get<Gaussian>(s2.outlier).mean(), VectorXd::Constant(2, 5.0));
  EXPECT_EQ(s2.core.mean(), VectorXd::Zero(2));
  EXPECT_EQ(s2.core.cov(), MatrixXd::Identity(2, 2));
  EXPECT_EQ(std::get<Gaussian>(scenario_mean(1).outlier).mean()(0), 5.0);
}

TEST(Contamination, ScenarioCov) {
  const ContaminationSpec s2 = scenario_cov(2);
  EXPECT_EQ(s2.eps, 0.2);
  MatrixXd S(2, 2);
  S << 1, 0.5, 0.5, 1;
  EXPECT_EQ(s2.core.cov(), S);
  EXPECT_EQ(std::get<Gaussian>(s2.outlier).cov(), S);
  EXPECT_EQ(std::get<Gaussian>(s2.outlier).mean(), VectorXd::Constant(2, 6.0));
  EXPECT_EQ(scenario_cov(1).core.cov()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(geometric_covariance(4)(0, 3), 0.125);
}

TEST(Contamination, OutlierRowsFollowOutlierLaw) {
  const ContaminatedData cd = sample_huber(scenario_mean(2), 20000, 5);
  double out_mean = 0.0, in_mean = 0.0;
  long no = 0, ni = 0;
  for (Index i = 0; i < cd.data.rows(); ++i) {
    if (cd.outlier[static_cast<std::size_t>(i)]) {
      out_mean += cd.data(i, 0);
      ++no;
    } else {
      in_mean += cd.data(i, 0);
      ++ni;
    }
  }
  EXPECT_NEAR(out_mean / no, 5.0, 0.15);
  EXPECT_NEAR(in_mean / ni, 0.0, 0.05);
}

TEST(Contamination, PointMassOutliers) {
  ContaminationSpec s;
  s.core = Gaussian::standard(2);
  s.outlier = PointMass{VectorXd::Constant(2, 9.0)};
  s.eps = 0.3;
  const ContaminatedData cd = sample_huber(s, 200, 6);
  for (Index i = 0; i < 200; ++i)
    if (cd.outlier[static_cast<std::size_t>(i)]) {
      EXPECT_EQ(cd.data.row(i).transpose(), VectorXd::Constant(2, 9.0));
    }
}

TEST(Contamination, Reproducible) {
  const ContaminatedData a = sample_huber(scenario_cov(3), 100, 77), b = sample_huber(scenario_cov(3), 100, 77);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.outlier, b.outlier);
  EXPECT_NE(a.data, sample_huber(scenario_cov(3), 100, 78).data);
}

TEST(Contamination, CoreRowsSharedAcrossEps) {
  ContaminationSpec clean = scenario_mean(2);
  clean.eps = 0.0;
  const ContaminatedData c = sample_huber(clean, 300, 8), d = sample_huber(scenario_mean(2), 300, 8);
  for (Index i = 0; i < 300; ++i)
    if (!d.outlier[static_cast<std::size_t>(i)]) {
      EXPECT_EQ(c.data.row(i), d.data.row(i));
    }
}

TEST(Contamination, InvalidSpecs) {
  ContaminationSpec s = scenario_mean(2);
  s.eps = 1.5;
  EXPECT_THROW(sample_huber(s, 10, 1), InputError);
  s = scenario_mean(2);
  s.outlier = PointMass{VectorXd::Zero(3)};
  EXPECT_THROW(sample_huber(s, 10, 1), InputError);
}
