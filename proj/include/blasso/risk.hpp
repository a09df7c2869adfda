#pragma once

#include <blasso/dof.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <random>
#include <thread>

namespace blasso {

/// -n sigma^2 + ||y - mu_hat||^2 + 2 sigma^2 div.
inline double sure_value(const Vector& y, const Vector& mu_hat, double divergence, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("sigma must be positive");
  if (y.size() != mu_hat.size()) throw ArgumentError("y and mu_hat differ in length");
  const double s2 = sigma * sigma;
  return -static_cast<double>(y.size()) * s2 + (y - mu_hat).squaredNorm() + 2.0 * s2 * divergence;
}

/// SURE with the divergence replaced by the parameter count k(d+1).
inline double sure_param_value(const Vector& y, const Vector& mu_hat, int k, int d, double sigma) {
  return sure_value(y, mu_hat, static_cast<double>(k) * (d + 1), sigma);
}

using Estimator = std::function<Vector(const Vector&)>;

/// sum_i (mu_i(y + h e_i) - mu_i(y - h e_i)) / 2h.
inline double finite_difference_divergence(const Estimator& mu_hat, const Vector& y, double h) {
  if (!(h > 0.0)) throw ArgumentError("finite-difference step must be positive");
  double acc = 0.0;
  Vector yp = y;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    yp[i] = y[i] + h;
    const double up = mu_hat(yp)[i];
    yp[i] = y[i] - h;
    const double down = mu_hat(yp)[i];
    yp[i] = y[i];
    acc += (up - down) / (2.0 * h);
  }
  return acc;
}

struct DivergenceEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Randomized probing: mean over probes of <delta, mu(y + h delta) - mu(y)>/h
/// with delta standard normal.
inline DivergenceEstimate monte_carlo_divergence(const Estimator& mu_hat, const Vector& y, double h, int probes,
                                                 std::uint64_t seed) {
  if (!(h > 0.0)) throw ArgumentError("probe step must be positive");
  if (probes < 1) throw ArgumentError("at least one probe is required");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const Vector base = mu_hat(y);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(probes));
  Vector delta(y.size());
  for (int s = 0; s < probes; ++s) {
    for (auto& v : delta) v = g(rng);
    samples.push_back(delta.dot(mu_hat(y + h * delta) - base) / h);
  }
  DivergenceEstimate out;
  for (double v : samples) out.estimate += v;
  out.estimate /= probes;
  if (probes > 1) {
    double var = 0.0;
    for (double v : samples) var += (v - out.estimate) * (v - out.estimate);
    var /= probes - 1;
    out.standard_error = std::sqrt(var / probes);
  }
  return out;
}

/// Solver settings for oracle solves: a much tighter duality gap.
inline SolverOptions oracle_options(SolverOptions opts) {
  opts.duality_gap_tolerance = std::min(opts.duality_gap_tolerance, 1e-14);
  return opts;
}

/// Fitted value Phi m_hat(y') of the Blasso, warm-started from `base`.
/// Inner solves that do not converge raise OracleFailure.
inline Estimator blasso_estimator(ModelPtr model, double lambda, const SolverOptions& opts,
                                  DiscreteMeasure base) {
  auto scanner = std::make_shared<CertificateScanner>(model, opts.scan_options());
  return [model, lambda, opts, base = std::move(base), scanner](const Vector& yp) -> Vector {
    const auto res = solve_blasso(model, yp, lambda, opts, &base, scanner.get());
    if (!res.converged) throw OracleFailure("inner Blasso solve did not converge");
    return apply_forward(*model, res.measure);
  };
}

/// 1e-4 min(1, lambda) (1 + ||y||). The fitted value bends on a scale
/// proportional to lambda, so larger steps leave the smooth branch.
inline double default_fd_step(const Vector& y, double lambda) {
  return 1e-4 * std::min(1.0, lambda) * (1.0 + y.norm());
}

/// Finite-difference divergence of y -> Phi m_hat(y) at (y, lambda); 2n
/// warm-started tight solves around the base solution. h <= 0 selects
/// default_fd_step.
inline double finite_difference_divergence(ModelPtr model, const Vector& y, double lambda, double h = 0.0,
                                           const SolverOptions& opts = {}) {
  if (h <= 0.0) h = default_fd_step(y, lambda);
  const SolverOptions tight = oracle_options(opts);
  const auto base = solve_blasso(model, y, lambda, tight);
  if (!base.converged) throw OracleFailure("base Blasso solve did not converge");
  return finite_difference_divergence(blasso_estimator(model, lambda, tight, base.measure), y, h);
}

inline DivergenceEstimate monte_carlo_divergence(ModelPtr model, const Vector& y, double lambda, double h,
                                                 int probes, std::uint64_t seed, const SolverOptions& opts = {}) {
  if (h <= 0.0) h = default_fd_step(y, lambda);
  const SolverOptions tight = oracle_options(opts);
  const auto base = solve_blasso(model, y, lambda, tight);
  if (!base.converged) throw OracleFailure("base Blasso solve did not converge");
  return monte_carlo_divergence(blasso_estimator(model, lambda, tight, base.measure), y, h, probes, seed);
}

struct SweepConfig {
  ModelPtr model;
  /// Mean of the observations; usually Phi applied to a planted measure.
  Vector mu;
  double sigma = 0.0;
  std::vector<double> lambda_grid;
  int replicates = 1;
  std::uint64_t seed = 0;
  SolverOptions solver;
  int workers = 1;
  /// Also evaluate the finite-difference divergence on every record.
  bool fd_oracle = false;
  double fd_step = 0.0;  // <= 0 selects default_fd_step

  void validate() const {
    if (!model) throw ArgumentError("sweep needs a model");
    if (mu.size() != model->n()) throw ArgumentError("true mean has the wrong dimension");
    if (!(sigma > 0.0)) throw ArgumentError("sigma must be positive");
    if (replicates < 1) throw ArgumentError("replicates must be >= 1");
    if (lambda_grid.empty()) throw ArgumentError("lambda grid is empty");
    for (double l : lambda_grid)
      if (!(l > 0.0)) throw ArgumentError("lambda grid entries must be positive");
    if (workers < 1) throw ArgumentError("workers must be >= 1");
    solver.validate();
  }
};

struct SweepRecord {
  int lambda_index = 0;
  double lambda = 0.0;
  int replicate = 0;
  double mse = 0.0;
  double sure = 0.0;
  double sure_param = 0.0;
  int k = 0;
  double divergence = 0.0;
  int P = 0;
  bool converged = false;
  double fd_divergence = std::numeric_limits<double>::quiet_NaN();
  std::string failure;
};

struct ColumnSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double se = 0.0;   // std / sqrt(count)
};

struct SweepAggregate {
  double lambda = 0.0;
  int count = 0;
  int failed = 0;
  ColumnSummary mse, sure, sure_param, k, divergence, P;
  /// sqrt(var(SURE)/K + var(MSE)/K), and the same with SURE_param.
  double combined_se = 0.0;
  double combined_se_param = 0.0;
};

struct SweepResult {
  std::vector<SweepRecord> records;  // ordered by (lambda index, replicate)
  std::vector<SweepAggregate> aggregates;
};

/// Observation noise of replicate r: its own generator stream, shared by every
/// lambda of the grid.
inline Vector replicate_noise(std::uint64_t seed, int replicate, int n, double sigma) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> g(0.0, sigma);
  Vector e(n);
  for (auto& v : e) v = g(rng);
  return e;
}

inline ColumnSummary summarize(const std::vector<double>& v) {
  ColumnSummary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
    s.se = s.std / std::sqrt(static_cast<double>(v.size()));
  }
  return s;
}

inline std::vector<SweepAggregate> aggregate(const std::vector<SweepRecord>& records,
                                             const std::vector<double>& lambda_grid) {
  std::vector<SweepAggregate> out;
  for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
    SweepAggregate a;
    a.lambda = lambda_grid[li];
    std::vector<double> mse, sure, sp, k, div, P;
    for (const auto& r : records) {
      if (r.lambda_index != static_cast<int>(li)) continue;
      if (!r.converged) {
        ++a.failed;
        continue;
      }
      mse.push_back(r.mse);
      sure.push_back(r.sure);
      sp.push_back(r.sure_param);
      k.push_back(r.k);
      div.push_back(r.divergence);
      P.push_back(r.P);
    }
    a.count = static_cast<int>(mse.size());
    a.mse = summarize(mse);
    a.sure = summarize(sure);
    a.sure_param = summarize(sp);
    a.k = summarize(k);
    a.divergence = summarize(div);
    a.P = summarize(P);
    a.combined_se = std::hypot(a.sure.se, a.mse.se);
    a.combined_se_param = std::hypot(a.sure_param.se, a.mse.se);
    out.push_back(a);
  }
  return out;
}

/// One replicate across the whole lambda grid (largest lambda first, each
/// solve warm-started from the previous one).
inline std::vector<SweepRecord> run_replicate(const SweepConfig& cfg, int replicate,
                                              const CertificateScanner& scanner) {
  const auto& model = *cfg.model;
  const Vector y = cfg.mu + replicate_noise(cfg.seed, replicate, model.n(), cfg.sigma);
  std::vector<std::size_t> order(cfg.lambda_grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cfg.lambda_grid[a] > cfg.lambda_grid[b]; });
  std::vector<SweepRecord> out(cfg.lambda_grid.size());
  DiscreteMeasure warm;
  for (std::size_t li : order) {
    SweepRecord& r = out[li];
    r.lambda_index = static_cast<int>(li);
    r.lambda = cfg.lambda_grid[li];
    r.replicate = replicate;
    try {
      const auto res = solve_blasso(cfg.model, y, r.lambda, cfg.solver, &warm, &scanner);
      warm = res.measure;
      if (!res.converged) {
        r.failure = "solver did not converge";
        continue;
      }
      const auto rep = compute_dof_report(model, res.measure, y, r.lambda);
      const Vector mu_hat = apply_forward(model, rep.support);
      r.k = rep.k;
      r.P = rep.P;
      r.divergence = rep.divergence;
      r.mse = (cfg.mu - mu_hat).squaredNorm();
      r.sure = sure_value(y, mu_hat, rep.divergence, cfg.sigma);
      r.sure_param = sure_param_value(y, mu_hat, rep.k, model.dim(), cfg.sigma);
      if (cfg.fd_oracle) {
        r.fd_divergence = finite_difference_divergence(cfg.model, y, r.lambda, cfg.fd_step, cfg.solver);
      }
      r.converged = true;
    } catch (const Error& e) {
      r.failure = e.what();
      r.converged = false;
    }
  }
  return out;
}

/// Monte-Carlo risk sweep. Replicates are distributed over `workers`
/// threads; records come back ordered by (lambda index, replicate) whatever
/// the scheduling.
inline SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const CertificateScanner scanner(cfg.model, cfg.solver.scan_options());
  std::vector<std::vector<SweepRecord>> per_rep(static_cast<std::size_t>(cfg.replicates));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r = next++; r < cfg.replicates; r = next++) per_rep[static_cast<std::size_t>(r)] = run_replicate(cfg, r, scanner);
  };
  const int nthreads = std::min(cfg.workers, cfg.replicates);
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  SweepResult out;
  for (std::size_t li = 0; li < cfg.lambda_grid.size(); ++li)
    for (const auto& rep : per_rep) out.records.push_back(rep[li]);
  out.aggregates = aggregate(out.records, cfg.lambda_grid);
  return out;
}

}  // namespace blasso
