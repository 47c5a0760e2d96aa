#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ben/glm.hpp"
#include "ben/models.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ben;

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

// ---- build_design --------------------------------------------------------

TEST(BuildDesign, MinimalGeneModel) {
  auto d = fixture::dataset({{0.5, -1.0, 2.0, 3.5}}, {{"y", {0, 1, 0, 1}}});
  const auto spec = ModelSpec{"m", Family::logistic, {Term::main(kGene)}, {0}};
  const auto x = build_design(spec, d, 0);
  ASSERT_EQ(x.x.rows(), 4);
  ASSERT_EQ(x.x.cols(), 2);
  EXPECT_TRUE((x.x.col(0).array() == 1.0).all());
  EXPECT_EQ(x.x(2, 1), 2.0);
  EXPECT_EQ(x.target_columns, std::vector<std::size_t>{1});
}

TEST(BuildDesign, InteractionIsElementwiseProduct) {
  auto d = fixture::dataset({{1, 2, 3, 4}}, {{"y", {0, 1, 1, 0}}, {"a", {0, 1, 1, 0}}, {"b", {1, 1, 0, 0}}});
  const auto spec = ModelSpec{"m", Family::linear, {Term::main("a"), Term::main("b"), Term::interaction("a", "b")}, {0}};
  const auto x = build_design(spec, d, 0);
  EXPECT_EQ(to_vec(x.x.col(3)), (std::vector<double>{0, 1, 0, 0}));
  EXPECT_EQ(x.labels[3], "a:b");
}

TEST(BuildDesign, ConstantCovariateIsDegenerate) {
  auto d = fixture::dataset({{1, 2, 3, 4}}, {{"y", {0, 1, 0, 1}}, {"b", {1, 1, 1, 1}}});
  const auto spec = ModelSpec{"m", Family::linear, {Term::main("y"), Term::main("b")}, {0}};
  EXPECT_THROW(build_design(spec, d, 0), DegenerateDesignError);
}

TEST(BuildDesign, UnknownCovariateIsSpecError) {
  auto d = fixture::dataset({{1, 2, 3, 4}}, {{"y", {0, 1, 0, 1}}});
  const auto spec = ModelSpec{"m", Family::linear, {Term::main("nope")}, {0}};
  EXPECT_THROW(check_spec_against(spec, d), SpecError);
  EXPECT_THROW(build_design(spec, d, 0), SpecError);
}

TEST(BuildDesign, SplineAddsKMinusOneColumns) {
  Rng rng(3, 0, Purpose::test);
  std::vector<double> g(30), y(30);
  for (int i = 0; i < 30; ++i) g[i] = rng.normal(), y[i] = i % 2;
  auto d = fixture::dataset({g}, {{"y", y}});
  const auto spec = ModelSpec{"m", Family::logistic, {Term::spline(kGene, 3)}, {0}};
  const auto x = build_design(spec, d, 0);
  EXPECT_EQ(x.x.cols(), 3);
  EXPECT_EQ(x.target_columns, (std::vector<std::size_t>{1, 2}));
}

TEST(ModelSpec, ValidationRules) {
  EXPECT_THROW((ModelSpec{"m", Family::linear, {Term::main("a"), Term::main("a")}, {0}}.validate()), SpecError);
  EXPECT_THROW((ModelSpec{"m", Family::linear, {Term::spline("a", 2)}, {0}}.validate()), SpecError);
  EXPECT_THROW((ModelSpec{"m", Family::linear, {Term::main("a")}, {1}}.validate()), SpecError);
  EXPECT_THROW((ModelSpec{"m", Family::linear, {Term::interaction("a", "b"), Term::interaction("b", "a")}, {0}}.validate()),
               SpecError);
}

TEST(ModelSpec, ParseFormula) {
  const auto m = parse_model("m6 = logistic ~ rcs(gene,3) + sample + gender @ rcs(gene,3)");
  EXPECT_EQ(m.id, "m6");
  EXPECT_EQ(m.family, Family::logistic);
  ASSERT_EQ(m.terms.size(), 3u);
  EXPECT_EQ(m.terms[0].kind, Term::Kind::spline);
  EXPECT_EQ(m.terms[0].knots, 3);
  EXPECT_EQ(m.target, std::vector<std::size_t>{0});
  const auto l = parse_model("linear ~ leukemia + sample + leukemia:sample");
  EXPECT_EQ(l.terms[2].kind, Term::Kind::interaction);
  EXPECT_THROW(parse_model("poisson ~ x"), SpecError);
  EXPECT_THROW(parse_model("linear ~ a @ b"), SpecError);
}

TEST(ModelSets, Sizes) {
  EXPECT_EQ(linear_model_set().size(), 8u);
  EXPECT_EQ(logistic_model_set().size(), 6u);
  for (const auto& m : linear_model_set()) EXPECT_NO_THROW(m.validate());
  for (const auto& m : logistic_model_set()) EXPECT_NO_THROW(m.validate());
}

// ---- rcs_basis -----------------------------------------------------------

TEST(Rcs, TwoColumnsForThreeKnots) {
  const std::vector<double> x{-2, -1, 0, 1, 2}, knots{-1, 0, 1};
  EXPECT_EQ(rcs_basis(x, knots).cols(), 2);
}

TEST(Rcs, ZeroBelowFirstKnot) {
  const std::vector<double> x{-5, -3, -1.0000001, -1}, knots{-1, 0, 1, 2};
  const auto b = rcs_basis(x, knots);
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 1; c < b.cols(); ++c) EXPECT_EQ(b(r, c), 0.0);
}

TEST(Rcs, InvalidKnots) {
  const std::vector<double> x{0, 1};
  EXPECT_THROW(rcs_basis(x, std::vector<double>{0, 1}), SpecError);
  EXPECT_THROW(rcs_basis(x, std::vector<double>{0, 0, 1}), DegenerateDesignError);
  EXPECT_THROW(rcs_basis(x, std::vector<double>{0, 2, 1}), DegenerateDesignError);
}

TEST(Rcs, MatchesDirectFormula) {
  // Independent evaluation from the textbook definition with k = 3.
  const std::vector<double> knots{-1.0, 0.3, 1.7};
  auto pos3 = [](double v) { return v > 0 ? v * v * v : 0.0; };
  for (double v = -3.0; v <= 3.0; v += 0.37) {
    const double t1 = knots[0], t2 = knots[1], t3 = knots[2];
    const double expect =
        (pos3(v - t1) - pos3(v - t2) * (t3 - t1) / (t3 - t2) + pos3(v - t3) * (t2 - t1) / (t3 - t2)) / ((t3 - t1) * (t3 - t1));
    const std::vector<double> x{v};
    EXPECT_NEAR(rcs_basis(x, knots)(0, 1), expect, 1e-14);
  }
}

TEST(Rcs, LinearBeyondBoundaryKnots) {
  const std::vector<double> knots{-1.0, -0.2, 0.4, 1.5};
  const double h = 1e-3;
  for (double v : {1.6, 2.5, 4.0, -1.5, -3.0}) {
    const std::vector<double> x{v - h, v, v + h};
    const auto b = rcs_basis(x, knots);
    for (Eigen::Index c = 1; c < b.cols(); ++c) {
      const double second = (b(0, c) - 2.0 * b(1, c) + b(2, c)) / (h * h);
      EXPECT_NEAR(second, 0.0, 1e-6) << "v=" << v << " col " << c;
    }
  }
}

TEST(Rcs, SmoothAcrossKnots) {
  const std::vector<double> knots{-1.0, 0.0, 0.5, 2.0};
  const double e = 1e-5;
  for (double t : knots) {
    const std::vector<double> left{t - 2 * e, t - e, t}, right{t, t + e, t + 2 * e};
    const auto l = rcs_basis(left, knots), r = rcs_basis(right, knots);
    for (Eigen::Index c = 0; c < l.cols(); ++c) {
      EXPECT_NEAR(l(2, c), r(0, c), 1e-15);
      const double dl = (l(2, c) - l(1, c)) / e, dr = (r(1, c) - r(0, c)) / e;
      EXPECT_NEAR(dl, dr, 1e-3);
      const double sl = (l(2, c) - 2 * l(1, c) + l(0, c)) / (e * e), sr = (r(2, c) - 2 * r(1, c) + r(0, c)) / (e * e);
      EXPECT_NEAR(sl, sr, 1e-2);
    }
  }
}

// ---- fit_linear ----------------------------------------------------------

TEST(FitLinear, ExactLine) {
  Eigen::MatrixXd x(5, 2);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) x(i, 0) = 1, x(i, 1) = i, y(i) = 2 + 3 * i;
  const auto f = fit_linear(design_from_matrix(x, {1}), y);
  EXPECT_NEAR(f.coefficients(1), 3.0, 1e-12);
  EXPECT_NEAR(f.coefficients(0), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(f.fit_stat, 1.0);
}

TEST(FitLinear, OrthogonalResponse) {
  Eigen::MatrixXd x(4, 2);
  x << 1, -1, 1, 1, 1, -1, 1, 1;
  Eigen::VectorXd y(4);
  y << 1, 1, -1, -1;  // uncorrelated with x
  const auto f = fit_linear(design_from_matrix(x, {1}), y);
  EXPECT_NEAR(*f.target_z, 0.0, 1e-12);
  EXPECT_NEAR(*f.target_p, 1.0, 1e-12);
}

TEST(FitLinear, MatchesNormalEquations) {
  Rng rng(11, 0, Purpose::test);
  for (int rep = 0; rep < 25; ++rep) {
    const auto x = fixture::random_design(rng, 20, 3);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) y(i) = 0.5 - x(i, 1) + 2.0 * x(i, 2) + rng.normal();
    const auto f = fit_linear(design_from_matrix(x, {1}), y);
    const auto b = oracle::normal_equations(x, y);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(f.coefficients(j), b(j), 1e-8);
  }
}

TEST(FitLinear, RankDeficientIsDegenerate) {
  Eigen::MatrixXd x(6, 3);
  for (int i = 0; i < 6; ++i) x(i, 0) = 1, x(i, 1) = i, x(i, 2) = 2 * i;
  EXPECT_THROW(fit_linear(design_from_matrix(x, {1}), Eigen::VectorXd::LinSpaced(6, 0, 1)), DegenerateDesignError);
}

TEST(FitLinear, ResidualsOrthogonalToDesign) {
  Rng rng(12, 0, Purpose::test);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = fixture::random_design(rng, 30, 4);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) y(i) = rng.normal(1.0, 2.0);
    const auto f = fit_linear(design_from_matrix(x, {1}), y);
    const Eigen::VectorXd r = y - x * f.coefficients;
    EXPECT_LT((x.transpose() * r).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(FitLinear, AffineInvariance) {
  Rng rng(13, 0, Purpose::test);
  auto x = fixture::random_design(rng, 25, 2);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) y(i) = 0.4 * x(i, 1) + rng.normal();
  const auto f = fit_linear(design_from_matrix(x, {1}), y);
  Eigen::MatrixXd x2 = x;
  x2.col(1) = 3.5 * x.col(1).array() - 7.0;
  const auto f2 = fit_linear(design_from_matrix(x2, {1}), y);
  EXPECT_NEAR(*f.target_z, *f2.target_z, 1e-8);
  const Eigen::VectorXd y2 = 10.0 * y.array() + 4.0;
  const auto f3 = fit_linear(design_from_matrix(x, {1}), y2);
  EXPECT_NEAR(f.fit_stat, f3.fit_stat, 1e-12);
}

// ---- fit_logistic --------------------------------------------------------

TEST(FitLogistic, SingleClassThrows) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(6, 1);
  EXPECT_THROW(fit_logistic(design_from_matrix(x, {0}), Eigen::VectorXd::Zero(6)), SingleClassError);
}

TEST(FitLogistic, InterceptOnlyIsLogitOfMean) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(10);
  y(0) = y(4) = y(7) = 1;
  const auto f = fit_logistic(design_from_matrix(x, {0}), y);
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.coefficients(0), std::log(0.3 / 0.7), 1e-10);
}

TEST(FitLogistic, ScoreAndNewtonOracle) {
  Rng rng(21, 0, Purpose::test);
  Eigen::VectorXd beta(2);
  beta << -0.3, 0.9;
  for (int rep = 0; rep < 25; ++rep) {
    const auto x = fixture::random_design(rng, 40, 2);
    const auto y = fixture::logistic_response(rng, x, beta);
    const auto f = fit_logistic(design_from_matrix(x, {1}), y);
    if (!f.converged) continue;  // separation on a tiny sample
    Eigen::VectorXd mu(40);
    for (int i = 0; i < 40; ++i) mu(i) = 1.0 / (1.0 + std::exp(-x.row(i).dot(f.coefficients)));
    EXPECT_LT((x.transpose() * (y - mu)).cwiseAbs().maxCoeff(), 1e-6);
    const auto b = oracle::newton_logistic(x, y);
    EXPECT_NEAR(f.loglik, oracle::logistic_loglik(x, y, b), 1e-6);
  }
}

TEST(FitLogistic, SeparationIsNotConverged) {
  Eigen::MatrixXd x(8, 2);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) x(i, 0) = 1, x(i, 1) = i, y(i) = i >= 4;
  const auto f = fit_logistic(design_from_matrix(x, {1}), y);
  EXPECT_FALSE(f.converged);
  EXPECT_FALSE(f.target_z.has_value());
}

TEST(FitLogistic, AffineInvarianceOfSlopeZ) {
  Rng rng(22, 0, Purpose::test);
  Eigen::VectorXd beta(2);
  beta << 0.2, 0.7;
  const auto x = fixture::random_design(rng, 60, 2);
  const auto y = fixture::logistic_response(rng, x, beta);
  Eigen::MatrixXd x2 = x;
  x2.col(1) = 0.25 * x.col(1).array() + 3.0;
  const auto f = fit_logistic(design_from_matrix(x, {1}), y);
  const auto f2 = fit_logistic(design_from_matrix(x2, {1}), y);
  ASSERT_TRUE(f.converged && f2.converged);
  EXPECT_NEAR(*f.target_z, *f2.target_z, 1e-8);
}

TEST(FitModel, NonConvergedHasNoStatistics) {
  auto d = fixture::dataset({{1, 2, 3, 4, 5, 6}}, {{"y", {0, 0, 0, 1, 1, 1}}});
  const auto f = fit_model(univariate_logistic({"y", "s", "g"}), d, 0);
  EXPECT_FALSE(f.converged);
  EXPECT_FALSE(f.target_p.has_value());
  EXPECT_FALSE(f.aic.has_value());
}

// ---- AUC -------------------------------------------------------------------

TEST(Auc, Examples) {
  const std::vector<double> l{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.2, 0.3, 0.4}, l), 0.75);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.9, 0.2, 0.8}, l), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{1, 1, 1, 1}, l), 0.5);
  EXPECT_THROW(auc(std::vector<double>{1, 2}, std::vector<double>{1, 1}), SingleClassError);
}

TEST(Auc, MatchesPairEnumerationAndComplement) {
  Rng rng(31, 0, Purpose::test);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.below(29);
    std::vector<double> s(n), l(n), neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(6));  // many ties
      l[i] = static_cast<double>(rng.below(2));
      neg[i] = -s[i];
    }
    l[0] = 0, l[1] = 1;
    const double a = auc(s, l);
    EXPECT_EQ(a, oracle::pair_auc(s, l));
    EXPECT_EQ(a + auc(neg, l), 1.0);
  }
}

// ---- AIC, chunk test -----------------------------------------------------

TEST(Aic, Formula) {
  EXPECT_EQ(aic(0.0, 1), 2.0);
  EXPECT_EQ(aic(-10.0, 3), 26.0);
}

TEST(Aic, NestedModels) {
  Rng rng(41, 0, Purpose::test);
  const auto x = fixture::random_design(rng, 50, 3);
  Eigen::VectorXd y(50);
  for (int i = 0; i < 50; ++i) y(i) = x(i, 1) + rng.normal();
  const auto big = fit_linear(design_from_matrix(x, {1}), y);
  const auto small = fit_linear(design_from_matrix(x.leftCols(2), {1}), y);
  EXPECT_GE(big.loglik, small.loglik - 1e-12);
  EXPECT_LE(*big.aic, *small.aic + 2.0 + 1e-9);
}

TEST(ChunkTest, SingleColumnEqualsWald) {
  Rng rng(51, 0, Purpose::test);
  const auto x = fixture::random_design(rng, 40, 3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y(i) = 0.3 * x(i, 2) + rng.normal();
  const auto f = fit_linear(design_from_matrix(x, {2}), y);
  const std::vector<std::size_t> col{2};
  EXPECT_NEAR(chunk_test(f, col), 2.0 * (1.0 - normal_cdf(std::abs(*f.target_z))), 1e-10);
}

TEST(ChunkTest, ZeroCoefficientsGiveOne) {
  FitResult f;
  f.coefficients = Eigen::VectorXd::Zero(3);
  f.covariance = Eigen::MatrixXd::Identity(3, 3);
  const std::vector<std::size_t> cols{1, 2};
  EXPECT_DOUBLE_EQ(chunk_test(f, cols), 1.0);
  const std::vector<std::size_t> none;
  EXPECT_THROW(chunk_test(f, none), DomainError);
  f.covariance(1, 1) = f.covariance(2, 2) = 0.0;
  EXPECT_THROW(chunk_test(f, cols), DomainError);
}

TEST(ChunkTest, CloseToLikelihoodRatio) {
  Rng rng(52, 0, Purpose::test);
  const auto x = fixture::random_design(rng, 200, 3);
  Eigen::VectorXd beta(3);
  beta << 0.1, 0.15, -0.1;
  const auto y = fixture::logistic_response(rng, x, beta);
  const auto full = fit_logistic(design_from_matrix(x, {1, 2}), y);
  const auto reduced = fit_logistic(design_from_matrix(x.leftCols(1), {0}), y);
  ASSERT_TRUE(full.converged && reduced.converged);
  const double lrt_p = chisq_sf(2.0 * (full.loglik - reduced.loglik), 2.0);
  EXPECT_NEAR(*full.target_p, lrt_p, 0.02);
  EXPECT_NEAR(*full.target_z, p_to_z(*full.target_p), 1e-12);
}
