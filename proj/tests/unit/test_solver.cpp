#include <blasso/fourier.hpp>
#include <blasso/relu.hpp>
#include <blasso/solver.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace blasso;

namespace {

Point pt(double x) { return Point::Constant(1, x); }

DiscreteMeasure reference_measure() { return DiscreteMeasure::on_line({0.1, 0.6, 0.9}, {2.0, -4.5, 4.0}); }

Vector noise(int n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Vector e(n);
  for (auto& v : e) v = g(rng);
  return e;
}

double wrapped(double a, double b) {
  double t = std::abs(a - b);
  return std::min(t, 1.0 - t);
}

}  // namespace

TEST(SolveBlasso, RejectsNonpositiveLambda) {
  const auto f = build_fourier_model(3);
  EXPECT_THROW(solve_blasso(f, Vector::Ones(7), 0.0), ArgumentError);
  EXPECT_THROW(solve_blasso(f, Vector::Ones(7), -1.0), ArgumentError);
}

TEST(SolveBlasso, LargeLambdaGivesZeroMeasure) {
  const auto f = build_fourier_model(10);
  const Vector y = apply_forward(*f, reference_measure());
  SolverOptions opts;
  CertificateScanner sc(f, opts.scan_options());
  const double lmax = std::abs(sc.best(y, ScanSense::Absolute).value);
  const auto res = solve_blasso(f, y, 1.01 * lmax);
  EXPECT_TRUE(res.converged);
  EXPECT_TRUE(res.measure.empty());
  EXPECT_NEAR(res.duality_gap, 0.0, 1e-12);
}

TEST(SolveBlasso, NoiselessRecovery) {
  const auto f = build_fourier_model(10);
  const auto truth = reference_measure();
  const auto res = solve_blasso(f, apply_forward(*f, truth), 1e-4);
  ASSERT_TRUE(res.converged);
  ASSERT_EQ(res.measure.size(), 3);
  for (int i = 0; i < 3; ++i) {
    int best = 0;
    for (int j = 1; j < 3; ++j)
      if (wrapped(res.measure.positions[j][0], truth.positions[i][0]) <
          wrapped(res.measure.positions[best][0], truth.positions[i][0]))
        best = j;
    EXPECT_LE(wrapped(res.measure.positions[best][0], truth.positions[i][0]), 1e-3);
    EXPECT_NEAR(res.measure.amplitudes[best], truth.amplitudes[i], 1e-2);
  }
}

TEST(SolveBlasso, ConvergedSolutionSatisfiesOptimality) {
  const auto f = build_fourier_model(10);
  const Vector y = apply_forward(*f, reference_measure()) + noise(21, 0.01, 1);
  const double lambda = 0.05;
  SolverOptions opts;
  const auto res = solve_blasso(f, y, lambda, opts);
  ASSERT_TRUE(res.converged);
  EXPECT_LE(res.duality_gap, opts.duality_gap_tolerance * y.squaredNorm());
  EXPECT_GE(res.duality_gap, -1e-10);
  EXPECT_LE(res.measure.size(), 10);
  for (int j = 0; j < res.measure.size(); ++j) {
    const auto v = certificate_eval(res.certificate, res.measure.positions[j]);
    EXPECT_NEAR(v.value, sign_of(res.measure.amplitudes[j]), 1e-6);
    EXPECT_LE(v.gradient.norm(), 1e-6);
  }
  EXPECT_LE(res.certificate_extreme, 1.0 + 1e-6);
}

TEST(SolveBlasso, Nonexpansive) {
  const auto f = build_fourier_model(10);
  const Vector y0 = apply_forward(*f, reference_measure());
  const double lambda = 0.05;
  for (int t = 0; t < 10; ++t) {
    const Vector y1 = y0 + noise(21, 0.05, 100 + t);
    const Vector y2 = y0 + noise(21, 0.05, 200 + t);
    const auto a = solve_blasso(f, y1, lambda);
    const auto b = solve_blasso(f, y2, lambda);
    ASSERT_TRUE(a.converged && b.converged);
    const double lhs = (apply_forward(*f, a.measure) - apply_forward(*f, b.measure)).norm();
    EXPECT_LE(lhs, (1 + 1e-6) * (y1 - y2).norm());
  }
}

TEST(LassoOnSupport, EmptySupport) {
  const auto f = build_fourier_model(3);
  EXPECT_EQ(lasso_on_support(*f, {}, Vector::Ones(7), 0.1).size(), 0);
}

TEST(LassoOnSupport, SingleColumnClosedForm) {
  const auto f = build_fourier_model(5);
  const Vector y = noise(11, 1.0, 3);
  const Vector phi = f->feature(pt(0.3));
  const double c = phi.dot(y);
  for (double lambda : {0.01, 0.5, std::abs(c) * 0.9, std::abs(c) * 1.1}) {
    const Vector b = lasso_on_support(*f, {pt(0.3)}, y, lambda);
    EXPECT_NEAR(b[0], soft_threshold(c, lambda) / phi.squaredNorm(), 1e-12);
  }
}

TEST(LassoOnSupport, MatchesPseudoInverseOnExtendedSupport) {
  const auto f = build_fourier_model(10);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    const auto m = DiscreteMeasure::on_line({0.1 + 0.05 * u(rng), 0.45 + 0.1 * u(rng), 0.8 + 0.1 * u(rng)},
                                            {1 + u(rng), -(1 + u(rng)), 1 + u(rng)});
    const Vector y = apply_forward(*f, m) + noise(21, 0.01, 10 + t);
    const auto res = solve_blasso(f, y, 0.05);
    ASSERT_TRUE(res.converged);
    const Vector iter = lasso_on_support(*f, res.measure.positions, y, 0.05);
    const Vector s = res.measure.amplitudes.unaryExpr([](double v) { return sign_of(v); });
    const Vector closed = closed_form_on_extended_support(*f, res.measure.positions, y, 0.05, s);
    EXPECT_LE((iter - closed).lpNorm<Eigen::Infinity>(), 1e-8);
    for (int j = 0; j < s.size(); ++j) EXPECT_EQ(sign_of(closed[j]), s[j]);
  }
}

TEST(ClosedForm, ZeroLambdaIsLeastSquares) {
  const auto f = build_fourier_model(6);
  const std::vector<Point> xs{pt(0.2), pt(0.5)};
  const Vector y = noise(13, 1.0, 5);
  const Matrix a = f->feature_matrix(xs);
  const Vector ls = a.colPivHouseholderQr().solve(y);
  const Vector cf = closed_form_on_extended_support(*f, xs, y, 0.0, Vector::Ones(2));
  EXPECT_LE((ls - cf).norm(), 1e-12);
  EXPECT_EQ(closed_form_on_extended_support(*f, {}, y, 0.1, Vector(0)).size(), 0);
}

TEST(SlideLocal, StationaryMeasureUnchanged) {
  const auto f = build_fourier_model(10);
  const Vector y = apply_forward(*f, reference_measure()) + noise(21, 0.01, 6);
  const auto res = solve_blasso(f, y, 0.05);
  ASSERT_TRUE(res.converged);
  const auto again = slide_local(*f, res.measure, y, 0.05);
  ASSERT_EQ(again.size(), res.measure.size());
  for (int j = 0; j < again.size(); ++j) {
    EXPECT_NEAR(again.amplitudes[j], res.measure.amplitudes[j], 1e-12);
    EXPECT_NEAR(again.positions[j][0], res.measure.positions[j][0], 1e-12);
  }
}

TEST(SlideLocal, ObjectiveNeverIncreases) {
  const auto f = build_fourier_model(10);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    const Vector y = apply_forward(*f, reference_measure()) + noise(21, 0.1, 300 + t);
    DiscreteMeasure m;
    const int k = 1 + t % 4;
    for (int j = 0; j < k; ++j) m.push_back(pt(u(rng)), g(rng));
    const double lambda = 0.01 + 0.5 * u(rng);
    const double before = blasso_objective(*f, m, y, lambda);
    const auto out = slide_local(*f, m, y, lambda);
    EXPECT_LE(blasso_objective(*f, out, y, lambda), before + 1e-12 * std::abs(before));
  }
}

TEST(SlideLocal, GradientMatchesFiniteDifferences) {
  const auto f = build_fourier_model(10);
  const Vector y = apply_forward(*f, reference_measure()) + noise(21, 0.1, 8);
  auto m = DiscreteMeasure::on_line({0.12, 0.55, 0.93}, {1.5, -3.0, 2.5});
  const double lambda = 0.3;
  m = slide_local(*f, m, y, lambda, LocalDescentOptions{3, 1e-13});
  const Vector g = blasso_slide_gradient(*f, m, y, lambda);
  const double h = 1e-6;
  for (int i = 0; i < g.size(); ++i) {
    auto mp = m, mm = m;
    if (i < 3) {
      mp.amplitudes[i] += h;
      mm.amplitudes[i] -= h;
    } else {
      mp.positions[i - 3][0] += h;
      mm.positions[i - 3][0] -= h;
    }
    const double fd = (blasso_objective(*f, mp, y, lambda) - blasso_objective(*f, mm, y, lambda)) / (2 * h);
    EXPECT_LE(std::abs(fd - g[i]), 1e-4 * std::max(std::abs(g[i]), 1e-3)) << i;
  }
}

TEST(PrimalDualGap, Properties) {
  const auto f = build_fourier_model(10);
  const Vector y = apply_forward(*f, reference_measure()) + noise(21, 0.01, 9);
  SolverOptions tight;
  tight.duality_gap_tolerance = 1e-12;
  const auto res = solve_blasso(f, y, 0.05, tight);
  const double gap = primal_dual_gap(f, res.measure, y, 0.05);
  EXPECT_LE(gap, 1e-10 * (1 + y.squaredNorm()));
  EXPECT_GE(gap, -1e-10);

  CertificateScanner sc(f, SolverOptions{}.scan_options());
  const double lmax = std::abs(sc.best(y, ScanSense::Absolute).value);
  EXPECT_NEAR(primal_dual_gap(f, DiscreteMeasure{}, y, 1.5 * lmax), 0.0, 1e-12);

  auto off = res.measure;
  off.amplitudes *= 0.9;
  EXPECT_GT(primal_dual_gap(f, off, y, 0.05), 0.0);
}

TEST(PruneToInjective, InjectiveUnchanged) {
  const auto f = build_fourier_model(10);
  const auto m = reference_measure();
  const auto out = prune_to_injective(*f, m);
  ASSERT_EQ(out.size(), 3);
  EXPECT_EQ(out.amplitudes, m.amplitudes);
}

TEST(PruneToInjective, DuplicateFeatureColumnsCollapse) {
  Matrix a(4, 2);
  a << 1, 0.5, -0.3, 1, 0.7, 0.2, 0.4, -1;
  const auto r = build_relu_model(a, true);
  Point x(2);
  x << 0.6, 0.3;
  DiscreteMeasure m;
  m.push_back(x, 1.0);
  m.push_back(2.0 * x, 2.0);
  const auto out = prune_to_injective(*r, m);
  ASSERT_EQ(out.size(), 1);
  EXPECT_NEAR(out.amplitudes[0], 3.0, 1e-10);
  EXPECT_LE((apply_forward(*r, out) - apply_forward(*r, m)).norm(), 1e-10);
}

TEST(PruneToInjective, MoreSpikesThanMeasurements) {
  const auto f = build_fourier_model(2);
  DiscreteMeasure m;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < 9; ++j) m.push_back(pt(u(rng)), 1.0 + u(rng));
  const auto out = prune_to_injective(*f, m);
  EXPECT_LE(out.size(), 5);
  EXPECT_LE((apply_forward(*f, out) - apply_forward(*f, m)).norm(), 1e-10);
  EXPECT_LE(out.tv_norm(), m.tv_norm() + 1e-10);
}

TEST(PositiveBlasso, ZeroMeasureWhenCorrelationsNonpositive) {
  const auto f = build_fourier_model(0);
  const auto res = solve_positive_blasso(f, Vector::Constant(1, -2.0));
  EXPECT_TRUE(res.converged);
  EXPECT_TRUE(res.measure.empty());
}

TEST(PositiveBlasso, NoiselessRecovery) {
  const auto f = build_fourier_model(10);
  const auto truth = DiscreteMeasure::on_line({0.15, 0.5, 0.8}, {1.0, 2.0, 1.5});
  const auto res = solve_positive_blasso(f, apply_forward(*f, truth));
  ASSERT_TRUE(res.converged);
  ASSERT_EQ(res.measure.size(), 3);
  for (int i = 0; i < 3; ++i) {
    double best = 1.0;
    for (int j = 0; j < 3; ++j) best = std::min(best, wrapped(res.measure.positions[j][0], truth.positions[i][0]));
    EXPECT_LE(best, 1e-3);
  }
  for (int j = 0; j < res.measure.size(); ++j) {
    EXPECT_GE(res.measure.amplitudes[j], 0.0);
    EXPECT_LE(std::abs(certificate_value(*f, res.certificate.dual, res.measure.positions[j])), 1e-6);
  }
}
