#pragma once

#include <blasso/model.hpp>
#include <blasso/scan.hpp>

#include <Eigen/SVD>

#include <optional>

namespace blasso {

struct LocalDescentOptions {
  int max_steps = 200;
  /// Stop once the gradient norm falls below this times (1 + ||Phi^T y||_inf).
  double gradient_tolerance = 1e-13;
};

struct SolverOptions {
  int max_outer_iterations = 100;
  int certificate_grid_size = 4096;
  int grid_per_axis = 32;
  int multistart_points = 64;
  int newton_steps = 20;
  LocalDescentOptions local_descent;
  /// Converged when the duality gap is at most this times ||y||^2.
  double duality_gap_tolerance = 1e-8;
  double amplitude_prune_tolerance = 1e-10;
  double merge_tolerance = kDefaultMergeTolerance;
  /// Positivity-constrained variant: accepted violation of Phi^*(Phi m - y) >= 0,
  /// relative to max(1, ||y||).
  double positivity_tolerance = 1e-9;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_outer_iterations < 1) throw ArgumentError("max_outer_iterations must be >= 1");
    if (certificate_grid_size < 2 || grid_per_axis < 2) throw ArgumentError("certificate grid size must be >= 2");
    if (!(duality_gap_tolerance > 0) || !(amplitude_prune_tolerance > 0) || !(merge_tolerance > 0) ||
        !(positivity_tolerance > 0) || !(local_descent.gradient_tolerance > 0))
      throw ArgumentError("solver tolerances must be positive");
    if (local_descent.max_steps < 1) throw ArgumentError("local descent needs at least one step");
  }

  ScanOptions scan_options() const {
    ScanOptions s;
    s.grid_size = certificate_grid_size;
    s.grid_per_axis = grid_per_axis;
    s.multistart_points = multistart_points;
    s.newton_steps = newton_steps;
    s.seed = seed;
    return s;
  }
};

struct SolveResult {
  DiscreteMeasure measure;
  Certificate certificate;
  double duality_gap = 0.0;
  int outer_iterations = 0;
  bool converged = false;
  double objective_value = 0.0;
  /// Largest |eta| (Blasso) or largest violation -min(eta) (positive variant) found.
  double certificate_extreme = 0.0;
};

/// 1/2 ||Phi m - y||^2 + lambda |m|_TV.
inline double blasso_objective(const ForwardModel& model, const DiscreteMeasure& m, const Vector& y, double lambda) {
  return 0.5 * (apply_forward(model, m) - y).squaredNorm() + lambda * m.tv_norm();
}

/// KKT residual of min 1/2||A b - y||^2 + lambda ||b||_1 at b.
inline double lasso_kkt_residual(const Matrix& a, const Vector& y, double lambda, const Vector& b) {
  const Vector g = a.transpose() * (a * b - y);
  double res = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double r = b[i] != 0.0 ? std::abs(g[i] + lambda * sign_of(b[i])) : std::max(0.0, std::abs(g[i]) - lambda);
    res = std::max(res, r);
  }
  return res;
}

namespace detail {

/// Solves the lasso exactly on the current nonzero pattern of b (signs held
/// fixed) and returns the candidate if it is sign-consistent.
inline std::optional<Vector> lasso_support_polish(const Matrix& a, const Vector& y, double lambda, const Vector& b) {
  std::vector<Eigen::Index> act;
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (b[i] != 0.0) act.push_back(i);
  Vector out = Vector::Zero(b.size());
  if (act.empty()) return out;
  Matrix aa(a.rows(), static_cast<Eigen::Index>(act.size()));
  Vector s(static_cast<Eigen::Index>(act.size()));
  for (std::size_t j = 0; j < act.size(); ++j) {
    aa.col(static_cast<Eigen::Index>(j)) = a.col(act[j]);
    s[static_cast<Eigen::Index>(j)] = sign_of(b[act[j]]);
  }
  Eigen::LDLT<Matrix> ldlt(aa.transpose() * aa);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  const Vector d = ldlt.vectorD();
  if (d.minCoeff() <= 1e-13 * d.maxCoeff()) return std::nullopt;
  const Vector ba = ldlt.solve(aa.transpose() * y - lambda * s);
  for (std::size_t j = 0; j < act.size(); ++j) {
    const double v = ba[static_cast<Eigen::Index>(j)];
    if (sign_of(v) != s[static_cast<Eigen::Index>(j)]) return std::nullopt;
    out[act[j]] = v;
  }
  return out;
}

inline double largest_eigenvalue(const Matrix& gram) {
  if (gram.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace detail

/// Minimizes 1/2||A b - y||^2 + lambda ||b||_1 by accelerated proximal
/// gradient (step 1/L) with adaptive restart, polishing on the active set
/// whenever the sign pattern settles. Stops at KKT residual <= tol.
inline Vector lasso_proximal(const Matrix& a, const Vector& y, double lambda, double tol,
                             const Vector* warm = nullptr, int max_iterations = 200000) {
  const Eigen::Index p = a.cols();
  if (p == 0) return Vector(0);
  // Wide designs work with A directly instead of the p x p Gram matrix.
  const bool wide = p > a.rows();
  const Matrix gram = wide ? Matrix() : Matrix(a.transpose() * a);
  const Vector aty = a.transpose() * y;
  auto grad_of = [&](const Vector& v) -> Vector {
    if (wide) return a.transpose() * (a * v - y);
    return gram * v - aty;
  };
  const double lip = detail::largest_eigenvalue(wide ? Matrix(a * a.transpose()) : gram);
  if (!(lip > 0.0)) return Vector::Zero(p);
  Vector b = warm && warm->size() == p ? *warm : Vector::Zero(p);
  Vector z = b;
  double t = 1.0;
  auto kkt = [&](const Vector& v) {
    const Vector g = grad_of(v);
    double res = 0.0;
    for (Eigen::Index i = 0; i < p; ++i)
      res = std::max(res, v[i] != 0.0 ? std::abs(g[i] + lambda * sign_of(v[i]))
                                      : std::max(0.0, std::abs(g[i]) - lambda));
    return res;
  };
  if (auto pol = detail::lasso_support_polish(a, y, lambda, b); pol && kkt(*pol) <= tol) return *pol;
  if (kkt(b) <= tol) return b;
  for (int it = 1; it <= max_iterations; ++it) {
    Vector next = z - grad_of(z) / lip;
    for (Eigen::Index i = 0; i < p; ++i) next[i] = soft_threshold(next[i], lambda / lip);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if ((z - next).dot(next - b) > 0.0) {  // restart momentum
      z = next;
      t = 1.0;
    } else {
      z = next + ((t - 1.0) / tn) * (next - b);
      t = tn;
    }
    b = next;
    if (it % 10 == 0) {
      if (kkt(b) <= tol) return b;
      if (auto pol = detail::lasso_support_polish(a, y, lambda, b); pol && kkt(*pol) <= tol) return *pol;
    }
  }
  return b;
}

inline double default_kkt_tolerance(const Matrix& a, const Vector& y) {
  return 1e-10 * std::max(1.0, (a.transpose() * y).lpNorm<Eigen::Infinity>());
}

/// Amplitudes of the finite Lasso with the positions held fixed.
inline Vector lasso_on_support(const ForwardModel& model, const std::vector<Point>& positions, const Vector& y,
                               double lambda, const Vector* warm = nullptr) {
  if (positions.empty()) return Vector(0);
  const Matrix a = model.feature_matrix(positions);
  return lasso_proximal(a, y, lambda, default_kkt_tolerance(a, y), warm);
}

/// Nonnegative least squares on fixed positions by accelerated projected
/// gradient with active-set polishing.
inline Vector nnls_on_support(const ForwardModel& model, const std::vector<Point>& positions, const Vector& y,
                              const Vector* warm = nullptr, int max_iterations = 200000) {
  const auto k = static_cast<Eigen::Index>(positions.size());
  if (k == 0) return Vector(0);
  const Matrix a = model.feature_matrix(positions);
  const Matrix gram = a.transpose() * a;
  const Vector aty = a.transpose() * y;
  const double tol = default_kkt_tolerance(a, y);
  const double lip = detail::largest_eigenvalue(gram);
  auto kkt = [&](const Vector& v) {
    const Vector g = gram * v - aty;
    double res = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) res = std::max(res, v[i] > 0.0 ? std::abs(g[i]) : std::max(0.0, -g[i]));
    return res;
  };
  auto polish = [&](const Vector& v) -> std::optional<Vector> {
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < k; ++i)
      if (v[i] > 0.0) act.push_back(i);
    Vector out = Vector::Zero(k);
    if (act.empty()) return out;
    Matrix g(static_cast<Eigen::Index>(act.size()), static_cast<Eigen::Index>(act.size()));
    Vector rhs(static_cast<Eigen::Index>(act.size()));
    for (std::size_t i = 0; i < act.size(); ++i) {
      rhs[static_cast<Eigen::Index>(i)] = aty[act[i]];
      for (std::size_t j = 0; j < act.size(); ++j)
        g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gram(act[i], act[j]);
    }
    Eigen::LDLT<Matrix> ldlt(g);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
    const Vector sol = ldlt.solve(rhs);
    for (std::size_t i = 0; i < act.size(); ++i) {
      if (!(sol[static_cast<Eigen::Index>(i)] > 0.0)) return std::nullopt;
      out[act[i]] = sol[static_cast<Eigen::Index>(i)];
    }
    return out;
  };
  Vector b = warm && warm->size() == k ? Vector(warm->cwiseMax(0.0)) : Vector(Vector::Zero(k));
  if (!(lip > 0.0)) return b;
  if (auto pol = polish(b); pol && kkt(*pol) <= tol) return *pol;
  Vector z = b;
  double t = 1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Vector next = (z - (gram * z - aty) / lip).cwiseMax(0.0);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if ((z - next).dot(next - b) > 0.0) {
      z = next;
      t = 1.0;
    } else {
      z = next + ((t - 1.0) / tn) * (next - b);
      t = tn;
    }
    b = next;
    if (it % 10 == 0) {
      if (kkt(b) <= tol) return b;
      if (auto pol = polish(b); pol && kkt(*pol) <= tol) return *pol;
    }
  }
  return b;
}

/// Smooth surrogate of the Blasso objective on a fixed sign orthant:
/// F(beta, X) = 1/2 ||Phi_X beta - y||^2 + lambda <s, beta>.
/// Variables are stacked as [beta_1..beta_k, x_1 (d), ..., x_k (d)].
struct SlideProblem {
  const ForwardModel& model;
  const Vector& y;
  double lambda;
  Vector signs;

  double value(const DiscreteMeasure& m) const {
    return 0.5 * (apply_forward(model, m) - y).squaredNorm() + lambda * signs.dot(m.amplitudes);
  }

  Vector gradient(const DiscreteMeasure& m) const {
    const int k = m.size(), d = model.dim();
    const Vector r = apply_forward(model, m) - y;
    Vector g(k * (d + 1));
    for (int j = 0; j < k; ++j) {
      g[j] = model.feature(m.positions[j]).dot(r) + lambda * signs[j];
      g.segment(k + j * d, d) = m.amplitudes[j] * (model.jacobian(m.positions[j]).transpose() * r);
    }
    return g;
  }

  Matrix hessian(const DiscreteMeasure& m) const {
    const int k = m.size(), d = model.dim();
    const Vector r = apply_forward(model, m) - y;
    const int P = k * (d + 1);
    std::vector<Vector> phi;
    std::vector<Matrix> jac;
    for (int j = 0; j < k; ++j) {
      phi.push_back(model.feature(m.positions[j]));
      jac.push_back(model.jacobian(m.positions[j]));
    }
    Matrix h = Matrix::Zero(P, P);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
        h(i, j) = phi[ii].dot(phi[jj]);
        Eigen::RowVectorXd bx = m.amplitudes[j] * (phi[ii].transpose() * jac[jj]);
        if (i == j) bx += (jac[ii].transpose() * r).transpose();
        h.block(i, k + j * d, 1, d) = bx;
        h.block(k + j * d, i, d, 1) = bx.transpose();
        Matrix xx = m.amplitudes[i] * m.amplitudes[j] * (jac[ii].transpose() * jac[jj]);
        if (i == j) xx += m.amplitudes[i] * model.hessian_contract(m.positions[ii], r);
        h.block(k + i * d, k + j * d, d, d) = xx;
      }
    }
    return h;
  }

  DiscreteMeasure step(const DiscreteMeasure& m, const Vector& dir, double t) const {
    const int k = m.size(), d = model.dim();
    DiscreteMeasure out = m;
    for (int j = 0; j < k; ++j) {
      out.amplitudes[j] += t * dir[j];
      out.positions[static_cast<std::size_t>(j)] =
          model.canonicalize(m.positions[static_cast<std::size_t>(j)] + t * dir.segment(k + j * d, d));
    }
    return out;
  }
};

/// Gradient of the Blasso objective on the current sign orthant.
inline Vector blasso_slide_gradient(const ForwardModel& model, const DiscreteMeasure& m, const Vector& y,
                                    double lambda) {
  Vector s = m.amplitudes.unaryExpr([](double v) { return sign_of(v); });
  return SlideProblem{model, y, lambda, s}.gradient(m);
}

namespace detail {

/// Joint descent on amplitudes and positions with the sign pattern `signs`
/// held fixed. Directions are damped Newton steps (falling back to the
/// gradient), accepted by Armijo backtracking, so F never increases. A step
/// that would flip an amplitude's sign is truncated at zero and the descent
/// returns there.
inline DiscreteMeasure slide(const ForwardModel& model, DiscreteMeasure m, const Vector& y, double lambda,
                             const Vector& signs, const LocalDescentOptions& opts) {
  const int k = m.size(), d = model.dim();
  if (k == 0) return m;
  SlideProblem prob{model, y, lambda, signs};
  const double scale = 1.0 + (model.feature_matrix(m.positions).transpose() * y).lpNorm<Eigen::Infinity>();
  double f = prob.value(m);
  double mu_prev = 0.0;
  for (int it = 0; it < opts.max_steps; ++it) {
    Vector g = prob.gradient(m);
    std::vector<Matrix> gauge(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      gauge[static_cast<std::size_t>(j)] = model.gauge_basis(m.positions[static_cast<std::size_t>(j)]);
      const Matrix& gb = gauge[static_cast<std::size_t>(j)];
      if (gb.cols() > 0) g.segment(k + j * d, d) -= gb * (gb.transpose() * g.segment(k + j * d, d));
    }
    if (g.norm() <= opts.gradient_tolerance * scale) break;
    Matrix h = prob.hessian(m);
    const double hscale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
    for (int j = 0; j < k; ++j) {
      const Matrix& gb = gauge[static_cast<std::size_t>(j)];
      if (gb.cols() > 0) h.block(k + j * d, k + j * d, d, d) += hscale * gb * gb.transpose();
    }
    Vector dir;
    double mu = mu_prev > 1e-10 * hscale ? 0.1 * mu_prev : 0.0;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Eigen::LLT<Matrix> llt(h + mu * Matrix::Identity(h.rows(), h.cols()));
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(g);
        if (dir.allFinite() && g.dot(dir) < 0.0) break;
      }
      dir.resize(0);
      mu = mu == 0.0 ? 1e-10 * hscale : mu * 10.0;
    }
    mu_prev = mu;
    if (dir.size() == 0) dir = -g;
    for (int j = 0; j < k; ++j) {
      const Matrix& gb = gauge[static_cast<std::size_t>(j)];
      if (gb.cols() > 0) dir.segment(k + j * d, d) -= gb * (gb.transpose() * dir.segment(k + j * d, d));
    }
    // Orthant boundary.
    double t_bound = std::numeric_limits<double>::infinity();
    int hit = -1;
    for (int j = 0; j < k; ++j) {
      if (m.amplitudes[j] * dir[j] < 0.0) {
        const double tj = -m.amplitudes[j] / dir[j];
        if (tj < t_bound) {
          t_bound = tj;
          hit = j;
        }
      }
    }
    double t = std::min(1.0, t_bound);
    const double slope = g.dot(dir);
    bool accepted = false;
    DiscreteMeasure next;
    double fn = f;
    for (int bt = 0; bt < 60; ++bt) {
      next = prob.step(m, dir, t);
      if (t == t_bound && hit >= 0) next.amplitudes[hit] = 0.0;
      try {
        fn = prob.value(next);
      } catch (const DegenerateFeatureError&) {
        t *= 0.5;
        continue;
      }
      if (fn <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const bool at_boundary = t == t_bound && hit >= 0;
    const double decrease = f - fn;
    m = std::move(next);
    f = fn;
    if (at_boundary) break;
    if (decrease <= 1e-16 * std::max(1.0, std::abs(f)) && t * dir.norm() <= 1e-14) break;
  }
  return m;
}

inline void merge_close(const ForwardModel& model, DiscreteMeasure& m, double tol) {
  for (int i = 0; i < m.size(); ++i) {
    for (int j = i + 1; j < m.size();) {
      if (model.domain().distance(m.positions[static_cast<std::size_t>(i)],
                                  m.positions[static_cast<std::size_t>(j)]) < tol) {
        m.amplitudes[i] += m.amplitudes[j];
        const int drop = j;
        m.filter([drop](int q) { return q != drop; });
      } else {
        ++j;
      }
    }
  }
}

}  // namespace detail

/// Locally refines amplitudes and positions of a measure whose amplitudes are
/// all nonzero; see detail::slide. The returned measure has objective no
/// larger than the input.
inline DiscreteMeasure slide_local(const ForwardModel& model, const DiscreteMeasure& m, const Vector& y,
                                   double lambda, const LocalDescentOptions& opts = {}) {
  const Vector s = m.amplitudes.unaryExpr([](double v) { return sign_of(v); });
  return detail::slide(model, m, y, lambda, s, opts);
}

namespace detail {

inline double gap_given_sup(const Vector& fit, const DiscreteMeasure& m, const Vector& y, double lambda, double sup) {
  const Vector p = (y - fit) / lambda;
  const Vector pt = p / std::max(1.0, sup);
  const double primal = 0.5 * (fit - y).squaredNorm() + lambda * m.tv_norm();
  const double dual = 0.5 * (y.squaredNorm() - (lambda * pt - y).squaredNorm());
  return primal - dual;
}

}  // namespace detail

/// Primal value minus the dual value at the feasible rescaling of
/// p = (y - Phi m)/lambda, where sup|Phi^* p| is supplied by `scanner`.
inline double primal_dual_gap(const CertificateScanner& scanner, const DiscreteMeasure& m, const Vector& y,
                              double lambda, double* sup_out = nullptr) {
  const auto& model = scanner.model();
  const Vector fit = apply_forward(model, m);
  const Vector p = (y - fit) / lambda;
  double sup = std::abs(scanner.best(p, ScanSense::Absolute, m.positions).value);
  for (const auto& x : m.positions) sup = std::max(sup, std::abs(certificate_value(model, p, x)));
  if (sup_out) *sup_out = sup;
  return detail::gap_given_sup(fit, m, y, lambda, sup);
}

inline double primal_dual_gap(ModelPtr model, const DiscreteMeasure& m, const Vector& y, double lambda,
                              const SolverOptions& opts = {}) {
  CertificateScanner scanner(std::move(model), opts.scan_options());
  return primal_dual_gap(scanner, m, y, lambda);
}

/// Removes kernel directions of Phi_A by moving along them until an
/// amplitude vanishes, keeping Phi m fixed and not increasing |m|_TV.
/// The result has an injective Phi_A and at most n spikes.
inline DiscreteMeasure prune_to_injective(const ForwardModel& model, DiscreteMeasure m, double rank_tol = 1e-10) {
  m.prune(0.0);
  while (m.size() > 0) {
    const Matrix a = model.feature_matrix(m.positions);
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
    const Vector sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    Vector b;
    if (m.size() > a.rows()) {
      b = svd.matrixV().col(m.size() - 1);
    } else if (sv[sv.size() - 1] <= rank_tol * smax) {
      b = svd.matrixV().col(sv.size() - 1);
    } else {
      break;
    }
    const Vector s = m.amplitudes.unaryExpr([](double v) { return sign_of(v); });
    double slope = s.dot(b);
    if (slope > 0.0 || (slope == 0.0 && !((b.array() * s.array()) < 0.0).any())) b = -b;
    double t = std::numeric_limits<double>::infinity();
    int hit = -1;
    for (int j = 0; j < m.size(); ++j) {
      if (b[j] * s[j] < 0.0) {
        const double tj = std::abs(m.amplitudes[j]) / std::abs(b[j]);
        if (tj < t) {
          t = tj;
          hit = j;
        }
      }
    }
    if (hit < 0) break;
    m.amplitudes += t * b;
    m.amplitudes[hit] = 0.0;
    for (int j = 0; j < m.size(); ++j)
      if (sign_of(m.amplitudes[j]) != s[j]) m.amplitudes[j] = 0.0;
    m.prune(0.0);
  }
  return m;
}

/// beta = Phi_E^+ (y - (Phi_E^*)^+ lambda s), pseudo-inverses cut at
/// 1e-10 sigma_max.
inline Vector closed_form_on_extended_support(const ForwardModel& model, const std::vector<Point>& positions,
                                              const Vector& y, double lambda, const Vector& signs) {
  if (positions.empty()) return Vector(0);
  if (signs.size() != static_cast<Eigen::Index>(positions.size()))
    throw ArgumentError("one sign per extended-support point is required");
  const Matrix a = model.feature_matrix(positions);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double cut = 1e-10 * (sv.size() ? sv[0] : 0.0);
  Vector inv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) inv[i] = 1.0 / sv[i];
  const Matrix& u = svd.matrixU();
  const Matrix& v = svd.matrixV();
  // (Phi^*)^+ s = U S^+ V^T s ; Phi^+ z = V S^+ U^T z.
  const Vector adj = u * inv.asDiagonal() * (v.transpose() * signs);
  const Vector rhs = y - lambda * adj;
  return v * inv.asDiagonal() * (u.transpose() * rhs);
}

/// Sliding Frank-Wolfe for min_m 1/2||Phi m - y||^2 + lambda |m|_TV.
///
/// Each outer iteration re-solves the amplitudes on the current support,
/// slides amplitudes and positions jointly, prunes and merges, then inserts
/// the point where |eta| is largest. Stops once the duality gap is below
/// tolerance; a warm start is refined before anything is inserted.
inline SolveResult solve_blasso(ModelPtr model, const Vector& y, double lambda, const SolverOptions& opts = {},
                                const DiscreteMeasure* warm_start = nullptr,
                                const CertificateScanner* shared_scanner = nullptr) {
  if (!(lambda > 0.0)) throw ArgumentError("lambda must be positive");
  if (y.size() != model->n()) throw ArgumentError("observation has the wrong dimension");
  opts.validate();
  std::optional<CertificateScanner> own;
  if (!shared_scanner) own.emplace(model, opts.scan_options());
  const CertificateScanner& scanner = shared_scanner ? *shared_scanner : *own;

  DiscreteMeasure m;
  if (warm_start) {
    m = *warm_start;
    for (auto& x : m.positions) x = model->canonicalize(x);
    m.prune(opts.amplitude_prune_tolerance);
  }
  const double gap_tol = opts.duality_gap_tolerance * std::max(y.squaredNorm(), 1e-300);
  SolveResult res;
  int stalls = 0;
  for (int it = 1; it <= opts.max_outer_iterations; ++it) {
    res.outer_iterations = it;
    if (!m.empty()) {
      const Vector warm = m.amplitudes;
      m.amplitudes = lasso_on_support(*model, m.positions, y, lambda, &warm);
      m.prune(opts.amplitude_prune_tolerance);
      if (!m.empty()) {
        m = slide_local(*model, m, y, lambda, opts.local_descent);
        m.prune(opts.amplitude_prune_tolerance);
        detail::merge_close(*model, m, opts.merge_tolerance);
        m.prune(opts.amplitude_prune_tolerance);
      }
    }
    const Vector fit = apply_forward(*model, m);
    const Vector p = (y - fit) / lambda;
    const Peak peak = scanner.best(p, ScanSense::Absolute, m.positions, static_cast<std::uint64_t>(it));
    double sup = std::abs(peak.value);
    for (const auto& x : m.positions) sup = std::max(sup, std::abs(certificate_value(*model, p, x)));
    res.duality_gap = detail::gap_given_sup(fit, m, y, lambda, sup);
    res.certificate_extreme = sup;
    if (res.duality_gap <= gap_tol) {
      res.converged = true;
      break;
    }
    bool near_support = false;
    for (const auto& x : m.positions)
      if (model->domain().distance(x, peak.x) < opts.merge_tolerance) near_support = true;
    if (std::abs(peak.value) > 1.0 && !near_support) {
      m.push_back(peak.x, 0.0);
      stalls = 0;
    } else if (++stalls >= 3) {
      break;
    }
  }
  if (m.size() > model->n()) m = prune_to_injective(*model, m);
  res.measure = m;
  res.certificate = Certificate::from_residual(model, m, y, lambda);
  res.objective_value = blasso_objective(*model, m, y, lambda);
  return res;
}

/// Frank-Wolfe variant for min_{m >= 0} 1/2||Phi m - y||^2. The returned
/// certificate holds p = Phi m - y; at convergence Phi^* p >= -tol and it
/// vanishes on the support.
inline SolveResult solve_positive_blasso(ModelPtr model, const Vector& y, const SolverOptions& opts = {},
                                         const DiscreteMeasure* warm_start = nullptr) {
  if (y.size() != model->n()) throw ArgumentError("observation has the wrong dimension");
  opts.validate();
  CertificateScanner scanner(model, opts.scan_options());
  DiscreteMeasure m;
  if (warm_start) {
    m = *warm_start;
    m.prune(opts.amplitude_prune_tolerance);
  }
  const double tol = opts.positivity_tolerance * std::max(1.0, y.norm());
  SolveResult res;
  int stalls = 0;
  for (int it = 1; it <= opts.max_outer_iterations; ++it) {
    res.outer_iterations = it;
    if (!m.empty()) {
      const Vector warm = m.amplitudes;
      m.amplitudes = nnls_on_support(*model, m.positions, y, &warm);
      m.prune(opts.amplitude_prune_tolerance);
      if (!m.empty()) {
        m = detail::slide(*model, m, y, 0.0, Vector::Ones(m.size()), opts.local_descent);
        m.prune(opts.amplitude_prune_tolerance);
        detail::merge_close(*model, m, opts.merge_tolerance);
        m.prune(opts.amplitude_prune_tolerance);
        const Vector warm2 = m.amplitudes;
        m.amplitudes = nnls_on_support(*model, m.positions, y, &warm2);
        m.prune(opts.amplitude_prune_tolerance);
      }
    }
    const Vector p = apply_forward(*model, m) - y;
    const Peak low = scanner.best(p, ScanSense::Lowest, m.positions, static_cast<std::uint64_t>(it));
    double on_support = 0.0;
    for (const auto& x : m.positions) on_support = std::max(on_support, std::abs(certificate_value(*model, p, x)));
    res.certificate_extreme = std::max(0.0, -low.value);
    res.duality_gap = m.amplitudes.dot(m.amplitudes.size() ? model->feature_matrix(m.positions).transpose() * p
                                                           : Vector(0));
    if (low.value >= -tol && on_support <= tol) {
      res.converged = true;
      break;
    }
    bool near_support = false;
    for (const auto& x : m.positions)
      if (model->domain().distance(x, low.x) < opts.merge_tolerance) near_support = true;
    if (low.value < -tol && !near_support) {
      m.push_back(low.x, 0.0);
      stalls = 0;
    } else if (++stalls >= 3) {
      break;
    }
  }
  res.measure = m;
  res.certificate.dual = apply_forward(*model, m) - y;
  res.certificate.lambda = 1.0;
  res.certificate.model = model;
  res.objective_value = 0.5 * res.certificate.dual.squaredNorm();
  return res;
}

}  // namespace blasso
