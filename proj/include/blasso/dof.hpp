#pragma once

#include <blasso/fourier.hpp>
#include <blasso/model.hpp>
#include <blasso/scan.hpp>
#include <blasso/solver.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <optional>

namespace blasso {

/// Per-spike bases of the position directions that actually move phi: the
/// identity, or the orthogonal complement of the model's gauge directions.
inline std::vector<Matrix> tangent_bases(const ForwardModel& model, const std::vector<Point>& xs) {
  std::vector<Matrix> out;
  out.reserve(xs.size());
  const int d = model.dim();
  for (const auto& x : xs) {
    const Matrix g = model.gauge_basis(x);
    if (g.cols() == 0) {
      out.push_back(Matrix::Identity(d, d));
      continue;
    }
    Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullU);
    out.push_back(svd.matrixU().rightCols(d - g.cols()));
  }
  return out;
}

/// Gamma_X = [Phi_X, Phi_X^(1)] (n x k(d+1)), feature columns first, then the
/// derivative columns grouped per spike.
struct GammaMatrix {
  Matrix matrix;
  int k = 0;
  int rank = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  /// Derivative columns per spike (d, or fewer after gauge reduction).
  std::vector<int> tangent_dims;
};

inline constexpr double kRankCutoff = 1e-10;

inline GammaMatrix build_gamma(const ForwardModel& model, const std::vector<Point>& xs,
                               const std::vector<Matrix>* bases = nullptr) {
  GammaMatrix g;
  g.k = static_cast<int>(xs.size());
  int cols = g.k;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const int tj = bases ? static_cast<int>((*bases)[j].cols()) : model.dim();
    g.tangent_dims.push_back(tj);
    cols += tj;
  }
  g.matrix = Matrix(model.n(), cols);
  int c = g.k;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    g.matrix.col(static_cast<Eigen::Index>(j)) = model.feature(xs[j]);
    Matrix jac = model.jacobian(xs[j]);
    if (bases) jac = jac * (*bases)[j];
    g.matrix.middleCols(c, jac.cols()) = jac;
    c += static_cast<int>(jac.cols());
  }
  if (cols > 0) {
    Eigen::JacobiSVD<Matrix> svd(g.matrix);
    const Vector sv = svd.singularValues();
    g.sigma_max = sv[0];
    g.sigma_min = cols > model.n() ? 0.0 : sv[sv.size() - 1];
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv[i] > kRankCutoff * g.sigma_max) ++g.rank;
  }
  return g;
}

/// M = Gamma^T Gamma + blockdiag(0_k, Q_1, ..., Q_k) with
/// Q_j = -(lambda / beta_j) Hessian(eta)(x_j).
struct MMatrix {
  Matrix matrix;
  std::vector<Matrix> q_blocks;
  double min_eigenvalue = 0.0;
  /// False when M has an eigenvalue below -1e-9 (input is not a solution).
  bool psd = true;
};

inline MMatrix build_m(const ForwardModel& model, const DiscreteMeasure& m, const Vector& y, double lambda,
                       const GammaMatrix& gamma, const std::vector<Matrix>* bases = nullptr) {
  MMatrix out;
  const int k = m.size();
  out.matrix = gamma.matrix.transpose() * gamma.matrix;
  const Vector p = (y - apply_forward(model, m)) / lambda;
  int c = k;
  for (int j = 0; j < k; ++j) {
    Matrix q = -(lambda / m.amplitudes[j]) * model.hessian_contract(m.positions[static_cast<std::size_t>(j)], p);
    if (bases) q = (*bases)[static_cast<std::size_t>(j)].transpose() * q * (*bases)[static_cast<std::size_t>(j)];
    out.matrix.block(c, c, q.rows(), q.cols()) += q;
    c += static_cast<int>(q.rows());
    out.q_blocks.push_back(std::move(q));
  }
  if (out.matrix.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(out.matrix, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    out.psd = out.min_eigenvalue >= -1e-9;
  }
  return out;
}

inline MMatrix build_m(const ForwardModel& model, const DiscreteMeasure& m, const Vector& y, double lambda) {
  return build_m(model, m, y, lambda, build_gamma(model, m.positions));
}

inline constexpr double kMaxConditionM = 1e12;

inline double condition_number(const Matrix& sym) {
  if (sym.rows() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

/// tr(Gamma M^{-1} Gamma^T), from M S = Gamma^T. Throws SingularMError when
/// cond(M) exceeds 1e12.
inline double divergence_closed_form(const GammaMatrix& gamma, const MMatrix& m) {
  if (m.matrix.rows() == 0) return 0.0;
  const double cond = condition_number(m.matrix);
  if (!(cond <= kMaxConditionM)) {
    throw SingularMError("M is numerically singular (condition " + std::to_string(cond) +
                             "); the observation is near the degenerate set",
                         cond);
  }
  const Matrix s = m.matrix.partialPivLu().solve(gamma.matrix.transpose());
  return (gamma.matrix * s).trace();
}

struct FourierDof {
  double divergence = 0.0;
  double nu = 0.0;
};

namespace detail {

inline FourierDof fourier_dof_impl(int k, const MMatrix& m, double nu_sign) {
  FourierDof out;
  if (k == 0) return out;
  const double cond = condition_number(m.matrix);
  if (!(cond <= kMaxConditionM)) throw SingularMError("M is numerically singular", cond);
  const Matrix inv = m.matrix.inverse();
  for (int j = 0; j < k; ++j) out.nu += m.q_blocks[static_cast<std::size_t>(j)](0, 0) * inv(k + j, k + j);
  out.nu *= nu_sign;
  out.divergence = 2.0 * k - out.nu;
  return out;
}

}  // namespace detail

/// Fourier case: nu = sum_j Q_j (M^{-1})_{k+j,k+j} and divergence 2k - nu.
inline FourierDof fourier_dof(const DiscreteMeasure& measure, const MMatrix& m) {
  for (const auto& q : m.q_blocks)
    if (q.rows() != 1) throw ArgumentError("fourier_dof requires a one-dimensional model");
  return detail::fourier_dof_impl(measure.size(), m, 1.0);
}

/// divergence = rank(Gamma) - T with T = tr(Pi D M^{-1}) >= 0, where Pi
/// projects onto the row space of Gamma and D = blockdiag(0, Q).
struct TraceDecomposition {
  int rank = 0;
  double subtracted = 0.0;
  double divergence() const { return rank - subtracted; }
};

inline TraceDecomposition trace_decomposition(const GammaMatrix& gamma, const MMatrix& m) {
  TraceDecomposition out;
  const auto P = m.matrix.rows();
  if (P == 0) return out;
  Eigen::JacobiSVD<Matrix> svd(gamma.matrix, Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  Matrix proj = Matrix::Zero(P, P);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > kRankCutoff * sv[0]) {
      proj += svd.matrixV().col(i) * svd.matrixV().col(i).transpose();
      ++out.rank;
    }
  }
  Matrix dq = Matrix::Zero(P, P);
  const auto k = gamma.k;
  Eigen::Index c = k;
  for (const auto& q : m.q_blocks) {
    dq.block(c, c, q.rows(), q.cols()) = q;
    c += q.rows();
  }
  out.subtracted = (proj * dq * m.matrix.inverse()).trace();
  return out;
}

enum class SupportClass { Empty, FullDomain, Discrete };

inline const char* to_string(SupportClass c) {
  switch (c) {
    case SupportClass::Empty: return "Empty";
    case SupportClass::FullDomain: return "FullDomain";
    case SupportClass::Discrete: return "Discrete";
  }
  return "?";
}

struct ExtendedSupport {
  SupportClass kind = SupportClass::Empty;
  std::vector<Point> points;
  std::vector<double> values;
  /// Smallest l with |eta^{(2l)}(x_i)| above the flatness threshold (0 when
  /// no such order was found).
  std::vector<int> flatness;
  double sup = 0.0;
};

inline constexpr double kFlatnessThreshold = 1e-6;

namespace detail {

inline int flatness_order(const ForwardModel& model, const Vector& p, const Point& x) {
  if (const auto* f = dynamic_cast<const FourierModel*>(&model)) {
    for (int l = 1; 2 * l <= std::max(2, model.n()); ++l) {
      const double v = std::abs(f->derivative(x[0], 2 * l).dot(p));
      if (v > kFlatnessThreshold * f->derivative_bound(p, 2 * l)) return l;
    }
    return 0;
  }
  const Matrix h = model.hessian_contract(x, p);
  const double scale = model.jacobian(x).norm() * p.norm() + h.norm();
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().minCoeff() > kFlatnessThreshold * scale ? 1 : 0;
}

}  // namespace detail

/// Classifies {x : |eta(x)| = 1} as empty, the whole domain (d = 1 only) or
/// a finite set of contact points with their flatness orders.
inline ExtendedSupport classify_extended_support(const ForwardModel& model, const Vector& p, double tol = 1e-6,
                                                 const std::vector<Point>& hints = {}, std::uint64_t seed = 0) {
  ExtendedSupport out;
  ScanOptions so;
  so.grid_size = 8192;
  so.polished_candidates = 64;
  so.seed = seed;
  std::shared_ptr<const ForwardModel> alias(std::shared_ptr<const ForwardModel>{}, &model);
  CertificateScanner scanner(alias, so);
  const auto peaks = scanner.peaks(p, ScanSense::Absolute, hints);
  out.sup = peaks.empty() ? 0.0 : std::abs(peaks.front().value);
  if (out.sup <= 1.0 - tol) return out;
  if (model.dim() == 1 && scanner.uses_grid()) {
    const Vector vals = scanner.grid_values(p).cwiseAbs();
    if (vals.minCoeff() >= 1.0 - tol) {
      out.kind = SupportClass::FullDomain;
      return out;
    }
    const auto near = (vals.array() >= 1.0 - tol).count();
    if (near > vals.size() / 4)
      throw DegenerateCertificateError("certificate is within tolerance of 1 on a large set without isolated contacts");
  }
  out.kind = SupportClass::Discrete;
  for (const auto& pk : peaks) {
    if (std::abs(pk.value) < 1.0 - tol) continue;
    out.points.push_back(pk.x);
    out.values.push_back(pk.value);
    out.flatness.push_back(detail::flatness_order(model, p, pk.x));
  }
  return out;
}

struct DofReport {
  int k = 0;
  int d = 1;
  int P = 0;
  int rank_gamma = 0;
  double sigma_min_gamma = 0.0;
  double divergence = 0.0;
  std::optional<double> nu;
  SupportClass support_class = SupportClass::Empty;
  std::vector<int> flatness;
  double m_condition = 1.0;
  double m_min_eigenvalue = 0.0;
  /// Spikes of the injective-support solution the report was computed on.
  DiscreteMeasure support;
};

/// Prunes to an injective support, then evaluates Gamma, M and the closed
/// form divergence (plus nu and the extended-support class for Fourier
/// models). Throws SingularMError when M is too ill-conditioned.
inline DofReport compute_dof_report(const ForwardModel& model, const DiscreteMeasure& measure, const Vector& y,
                                    double lambda, double support_tol = 1e-6) {
  DofReport r;
  r.d = model.dim();
  r.support = prune_to_injective(model, measure);
  const auto& m = r.support;
  r.k = m.size();
  r.P = (r.d + 1) * r.k;
  const Vector p = (y - apply_forward(model, m)) / lambda;
  const auto* fourier = dynamic_cast<const FourierModel*>(&model);
  if (fourier) {
    const auto ext = classify_extended_support(model, p, support_tol, m.positions);
    r.support_class = ext.kind;
    r.flatness = ext.flatness;
    if (ext.kind == SupportClass::FullDomain) {
      r.divergence = model.n();
      return r;
    }
  }
  if (r.k == 0) {
    r.support_class = SupportClass::Empty;
    if (fourier) r.nu = 0.0;
    return r;
  }
  if (!fourier) r.support_class = SupportClass::Discrete;
  const auto bases = tangent_bases(model, m.positions);
  const GammaMatrix gamma = build_gamma(model, m.positions, &bases);
  r.rank_gamma = gamma.rank;
  r.sigma_min_gamma = gamma.sigma_min;
  const MMatrix mm = build_m(model, m, y, lambda, gamma, &bases);
  r.m_min_eigenvalue = mm.min_eigenvalue;
  r.m_condition = condition_number(mm.matrix);
  r.divergence = divergence_closed_form(gamma, mm);
  if (fourier) r.nu = fourier_dof(m, mm).nu;
  return r;
}

}  // namespace blasso
