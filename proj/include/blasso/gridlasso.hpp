#pragma once

#include <blasso/risk.hpp>

namespace blasso {

/// Uniform grid of p nodes on a one-dimensional domain.
struct GridSpec {
  std::vector<Point> nodes;

  int size() const { return static_cast<int>(nodes.size()); }

  static GridSpec uniform(const DomainSpec& dom, int p) {
    if (p < 1) throw ArgumentError("grid size must be >= 1");
    if (dom.dim != 1) throw ArgumentError("uniform grids are one-dimensional");
    GridSpec g;
    for (int i = 0; i < p; ++i) {
      const double t = dom.geometry == Geometry::Torus
                           ? static_cast<double>(i) / p
                           : dom.lower[0] + (dom.upper[0] - dom.lower[0]) * (i + 0.5) / p;
      g.nodes.push_back(Point::Constant(1, t));
    }
    return g;
  }
};

inline constexpr double kGridKktTolerance = 1e-10;

/// Exact Lasso path (LARS with the Lasso drop rule) followed from
/// lambda_max = ||X^T y||_inf down to `lambda`.
inline Vector lasso_homotopy(const Matrix& x, const Vector& y, double lambda, int max_steps = 10000) {
  const Eigen::Index p = x.cols();
  Vector beta = Vector::Zero(p);
  Vector c = x.transpose() * y;
  if (p == 0) return beta;
  Eigen::Index first;
  double lam = c.cwiseAbs().maxCoeff(&first);
  if (lam <= lambda) return beta;
  std::vector<Eigen::Index> act{first};
  std::vector<char> in(static_cast<std::size_t>(p), 0);
  in[static_cast<std::size_t>(first)] = 1;
  Eigen::Index dropped = -1, joined = first;
  for (int step = 0; step < max_steps; ++step) {
    const auto na = static_cast<Eigen::Index>(act.size());
    Matrix xa(x.rows(), na);
    Vector s(na);
    for (Eigen::Index j = 0; j < na; ++j) {
      const Eigen::Index idx = act[static_cast<std::size_t>(j)];
      xa.col(j) = x.col(idx);
      s[j] = idx == joined || beta[idx] == 0.0 ? sign_of(c[idx]) : sign_of(beta[idx]);
    }
    Eigen::LDLT<Matrix> ldlt(xa.transpose() * xa);
    if (ldlt.info() != Eigen::Success) break;
    // Re-anchor the active amplitudes on the exact path at the current lambda.
    const Vector ba = ldlt.solve(xa.transpose() * y - lam * s);
    const Vector da = ldlt.solve(s);
    const Vector a = x.transpose() * (xa * da);
    c = x.transpose() * (y - xa * ba);
    double gamma = lam - lambda;
    Eigen::Index join = -1, leave = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (in[static_cast<std::size_t>(j)] || j == dropped) continue;
      for (double sgn : {1.0, -1.0}) {
        const double den = 1.0 - sgn * a[j];
        if (den <= 1e-14) continue;
        const double g = std::max(0.0, (lam - sgn * c[j]) / den);
        if (g < gamma) {
          gamma = g;
          join = j;
          leave = -1;
        }
      }
    }
    for (Eigen::Index j = 0; j < na; ++j) {
      if (act[static_cast<std::size_t>(j)] == joined || s[j] * da[j] >= 0.0) continue;
      const double g = std::max(0.0, s[j] * ba[j]) / std::abs(da[j]);
      if (g < gamma) {
        gamma = g;
        leave = j;
        join = -1;
      }
    }
    for (Eigen::Index j = 0; j < na; ++j) beta[act[static_cast<std::size_t>(j)]] = ba[j] + gamma * da[j];
    lam -= gamma;
    dropped = joined = -1;
    if (join >= 0) {
      act.push_back(join);
      in[static_cast<std::size_t>(join)] = 1;
      joined = join;
    } else if (leave >= 0) {
      const Eigen::Index idx = act[static_cast<std::size_t>(leave)];
      beta[idx] = 0.0;
      in[static_cast<std::size_t>(idx)] = 0;
      act.erase(act.begin() + leave);
      dropped = idx;
    } else {
      break;  // reached the target lambda
    }
    c = x.transpose() * (y - x * beta);
    if (act.empty()) break;
  }
  return beta;
}

/// Lasso on the grid design X = [phi(x_1) ... phi(x_p)], accurate to a KKT
/// residual of tol * max(1, ||X^T y||_inf). The exact path supplies the
/// answer; proximal gradient takes over if its KKT check fails.
inline Vector solve_grid_lasso(const ForwardModel& model, const GridSpec& grid, const Vector& y, double lambda,
                               double tol = kGridKktTolerance) {
  if (!(lambda > 0.0)) throw ArgumentError("lambda must be positive");
  const Matrix x = model.feature_matrix(grid.nodes);
  const double kkt_tol = tol * std::max(1.0, (x.transpose() * y).lpNorm<Eigen::Infinity>());
  const Vector path = lasso_homotopy(x, y, lambda);
  if (lasso_kkt_residual(x, y, lambda, path) <= kkt_tol) return path;
  return lasso_proximal(x, y, lambda, kkt_tol, &path);
}

/// Support size ||beta||_0 with |beta_i| > tol; tol < 0 selects
/// 1e-8 ||beta||_inf.
inline int grid_lasso_dof(const Vector& beta, double tol = -1.0) {
  if (beta.size() == 0) return 0;
  const double amax = beta.lpNorm<Eigen::Infinity>();
  if (amax == 0.0) return 0;
  if (tol < 0.0) tol = 1e-8 * amax;
  return static_cast<int>((beta.array().abs() > tol).count());
}

struct GridComparisonRow {
  int p = 0;
  double lambda = 0.0;
  int grid_dof = 0;
  double grid_sure = 0.0;
  double grid_mse = 0.0;
  double blasso_divergence = 0.0;
  double blasso_sure = 0.0;
  double blasso_mse = 0.0;
  int blasso_k = 0;
  bool converged = false;
};

/// For every (grid size, lambda): grid-Lasso support size and SURE next to
/// the Blasso divergence and SURE, all on the single observation y.
inline std::vector<GridComparisonRow> compare_grid_vs_continuous(ModelPtr model, const Vector& mu, const Vector& y,
                                                                 double sigma, const std::vector<int>& grid_sizes,
                                                                 const std::vector<double>& lambdas,
                                                                 const SolverOptions& opts = {}) {
  if (model->dim() != 1) throw ArgumentError("grid comparison needs a one-dimensional model");
  struct Continuous {
    double div = 0.0, sure = 0.0, mse = 0.0;
    int k = 0;
    bool ok = false;
  };
  std::vector<Continuous> cont;
  const CertificateScanner scanner(model, opts.scan_options());
  for (double lambda : lambdas) {
    Continuous c;
    const auto res = solve_blasso(model, y, lambda, opts, nullptr, &scanner);
    if (res.converged) {
      try {
        const auto rep = compute_dof_report(*model, res.measure, y, lambda);
        const Vector fit = apply_forward(*model, rep.support);
        c = {rep.divergence, sure_value(y, fit, rep.divergence, sigma), (mu - fit).squaredNorm(), rep.k, true};
      } catch (const Error& e) {
        log_warning(std::string("continuous dof unavailable: ") + e.what());
      }
    }
    cont.push_back(c);
  }
  std::vector<GridComparisonRow> rows;
  for (int p : grid_sizes) {
    const GridSpec grid = GridSpec::uniform(model->domain(), p);
    const Matrix x = model->feature_matrix(grid.nodes);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      GridComparisonRow row;
      row.p = p;
      row.lambda = lambdas[li];
      const Vector beta = solve_grid_lasso(*model, grid, y, lambdas[li]);
      const Vector fit = x * beta;
      row.grid_dof = grid_lasso_dof(beta);
      row.grid_sure = sure_value(y, fit, row.grid_dof, sigma);
      row.grid_mse = (mu - fit).squaredNorm();
      row.blasso_divergence = cont[li].div;
      row.blasso_sure = cont[li].sure;
      row.blasso_mse = cont[li].mse;
      row.blasso_k = cont[li].k;
      row.converged = cont[li].ok;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace blasso
