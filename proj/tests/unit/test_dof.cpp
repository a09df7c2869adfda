#include <blasso/dof.hpp>
#include <blasso/relu.hpp>

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

struct Solved {
  ModelPtr model;
  Vector y;
  double lambda;
  DiscreteMeasure m;
};

Solved solved_instance(std::uint64_t seed, double lambda = 0.05) {
  Solved s{build_fourier_model(10), Vector(), lambda, {}};
  s.y = apply_forward(*s.model, reference_measure()) + noise(21, 0.01, seed);
  const auto res = solve_blasso(s.model, s.y, lambda);
  EXPECT_TRUE(res.converged);
  s.m = res.measure;
  return s;
}

}  // namespace

TEST(BuildGamma, Shapes) {
  const auto f = build_fourier_model(10);
  const auto g = build_gamma(*f, {pt(0.3)});
  EXPECT_EQ(g.matrix.rows(), 21);
  EXPECT_EQ(g.matrix.cols(), 2);
  EXPECT_LE((g.matrix.col(0) - f->feature(pt(0.3))).norm(), 0.0);
  EXPECT_LE((g.matrix.col(1) - f->jacobian(pt(0.3)).col(0)).norm(), 0.0);

  Matrix a(6, 2);
  a << 1, 0, 0, 1, 1, 1, -1, 2, 0.5, -0.3, 2, 1;
  const auto r = build_relu_model(a, false);
  Point x1(2), x2(2);
  x1 << 0.4, 0.7;
  x2 << 0.9, -0.1;
  EXPECT_EQ(build_gamma(*r, {x1, x2}).matrix.cols(), 6);
}

TEST(BuildGamma, FourierFullRank) {
  const auto f = build_fourier_model(10);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto g = build_gamma(*f, {pt(u(rng)), pt(u(rng)), pt(u(rng))});
  EXPECT_EQ(g.rank, 6);
  EXPECT_GT(g.sigma_min, 0.0);
}

TEST(BuildM, EmptyAndFlat) {
  const auto f = build_fourier_model(4);
  const auto m0 = build_m(*f, DiscreteMeasure{}, Vector::Ones(9), 0.1);
  EXPECT_EQ(m0.matrix.rows(), 0);
  const Matrix a = Matrix::Random(5, 2);
  const auto raw = build_relu_model(a.cwiseAbs() + Matrix::Constant(5, 2, 0.1), false);
  DiscreteMeasure m;
  m.push_back(Point::Constant(2, 0.5), 1.0);
  const Vector y = Vector::Ones(5);
  const auto g = build_gamma(*raw, m.positions);
  const auto mm = build_m(*raw, m, y, 0.2, g);
  EXPECT_LE((mm.matrix - g.matrix.transpose() * g.matrix).norm(), 1e-14);
}

TEST(BuildM, PositiveSemidefiniteAtSolution) {
  const auto s = solved_instance(2);
  const auto mm = build_m(*s.model, s.m, s.y, s.lambda);
  EXPECT_GE(mm.min_eigenvalue, -1e-9);
  EXPECT_TRUE(mm.psd);
  EXPECT_LE((mm.matrix - mm.matrix.transpose()).norm(), 1e-12 * mm.matrix.norm());
}

TEST(DivergenceClosedForm, EmptyIsZero) {
  const auto f = build_fourier_model(4);
  const auto g = build_gamma(*f, {});
  EXPECT_EQ(divergence_closed_form(g, build_m(*f, DiscreteMeasure{}, Vector::Ones(9), 0.1, g)), 0.0);
}

TEST(DivergenceClosedForm, ProjectionTraceWithoutCurvature) {
  const auto f = build_fourier_model(10);
  const auto g = build_gamma(*f, {pt(0.2), pt(0.5), pt(0.71)});
  MMatrix m;
  m.matrix = g.matrix.transpose() * g.matrix;
  EXPECT_NEAR(divergence_closed_form(g, m), 6.0, 1e-10);
}

TEST(DivergenceClosedForm, SingularMThrows) {
  const auto f = build_fourier_model(10);
  const auto g = build_gamma(*f, {pt(0.2), pt(0.2 + 1e-9)});
  MMatrix m;
  m.matrix = g.matrix.transpose() * g.matrix;
  try {
    divergence_closed_form(g, m);
    FAIL() << "expected SingularMError";
  } catch (const SingularMError& e) {
    EXPECT_GT(e.condition(), kMaxConditionM);
  }
}

TEST(FourierDof, MatchesGeneralFormulaAndIsBelowTwoK) {
  for (std::uint64_t seed = 3; seed < 8; ++seed) {
    const auto s = solved_instance(seed);
    const auto g = build_gamma(*s.model, s.m.positions);
    const auto mm = build_m(*s.model, s.m, s.y, s.lambda, g);
    const double div = divergence_closed_form(g, mm);
    const auto fd = fourier_dof(s.m, mm);
    EXPECT_NEAR(fd.divergence, div, 1e-10);
    EXPECT_GE(fd.nu, -1e-10);
    EXPECT_LT(div, 2.0 * s.m.size() - 1e-12);
    EXPECT_GE(div, 0.0);
    EXPECT_LE(div, g.rank + 1e-10);
  }
}

TEST(TraceDecomposition, MatchesDivergence) {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    const auto s = solved_instance(seed, 0.1);
    const auto g = build_gamma(*s.model, s.m.positions);
    const auto mm = build_m(*s.model, s.m, s.y, s.lambda, g);
    const auto td = trace_decomposition(g, mm);
    EXPECT_NEAR(td.divergence(), divergence_closed_form(g, mm), 1e-9);
    EXPECT_GE(td.subtracted, -1e-10);
  }
}

TEST(ExtendedSupport, EmptyForLargeLambda) {
  const auto f = build_fourier_model(10);
  const Vector y = apply_forward(*f, reference_measure());
  CertificateScanner sc(f, ScanOptions{});
  const double lmax = std::abs(sc.best(y, ScanSense::Absolute).value);
  const auto ext = classify_extended_support(*f, y / (1.1 * lmax));
  EXPECT_EQ(ext.kind, SupportClass::Empty);
  const auto rep = compute_dof_report(*f, DiscreteMeasure{}, y, 1.1 * lmax);
  EXPECT_EQ(rep.support_class, SupportClass::Empty);
  EXPECT_EQ(rep.divergence, 0.0);
  ASSERT_TRUE(rep.nu.has_value());
  EXPECT_EQ(*rep.nu, 0.0);
}

TEST(ExtendedSupport, FullDomainForConstantCertificate) {
  const auto f = build_fourier_model(10);
  const double lambda = 0.3;
  Vector y = Vector::Zero(21);
  y[0] = lambda;
  EXPECT_EQ(classify_extended_support(*f, y / lambda).kind, SupportClass::FullDomain);
  const auto rep = compute_dof_report(*f, DiscreteMeasure{}, y, lambda);
  EXPECT_EQ(rep.support_class, SupportClass::FullDomain);
  EXPECT_EQ(rep.divergence, 21.0);
}

TEST(ExtendedSupport, DiscreteWithQuadraticContacts) {
  const auto s = solved_instance(20, 0.5);
  ASSERT_EQ(s.m.size(), 3);
  const auto rep = compute_dof_report(*s.model, s.m, s.y, s.lambda);
  EXPECT_EQ(rep.support_class, SupportClass::Discrete);
  ASSERT_EQ(rep.flatness.size(), 3u);
  for (int l : rep.flatness) EXPECT_EQ(l, 1);
  EXPECT_EQ(rep.k, 3);
  EXPECT_EQ(rep.P, 6);
  EXPECT_EQ(rep.rank_gamma, 6);
  EXPECT_LT(rep.divergence, 6.0);
  EXPECT_GT(rep.divergence, 0.0);
}

TEST(DofReport, GaugeReducedReluModel) {
  std::mt19937_64 rng(30);
  std::normal_distribution<double> g;
  Matrix a(60, 4);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = g(rng);
  const auto r = build_relu_model(a, true);
  DiscreteMeasure truth;
  for (int j = 0; j < 2; ++j) {
    Point x(4);
    for (auto& v : x) v = g(rng);
    truth.push_back(x.normalized(), j == 0 ? 1.0 : -1.0);
  }
  const Vector y = apply_forward(*r, truth) + noise(60, 0.01, 31);
  SolverOptions opts;
  opts.seed = 5;
  const auto res = solve_blasso(r, y, 0.02, opts);
  ASSERT_TRUE(res.converged);
  const auto rep = compute_dof_report(*r, res.measure, y, 0.02);
  EXPECT_EQ(rep.P, 5 * rep.k);
  EXPECT_GE(rep.divergence, -1e-10);
  EXPECT_LE(rep.divergence, rep.rank_gamma + 1e-8);
  EXPECT_LE(rep.rank_gamma, 4 * rep.k);
  EXPECT_FALSE(rep.nu.has_value());
}
