#pragma once

#include <blasso/dof.hpp>
#include <blasso/gridlasso.hpp>
#include <blasso/io/config.hpp>
#include <blasso/io/csv.hpp>
#include <blasso/io/svg.hpp>
#include <blasso/risk.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <thread>

namespace blasso::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitNonConvergence = 2,
  kExitSingularM = 3,
  kExitSelftestFailed = 4,
};

struct CommandOptions {
  std::string config;
  std::string out;            // empty: config `output`
  std::string y_path;         // observation CSV (one value per row)
  std::string measure_path;   // dof: evaluate at this measure instead of solving
  std::string mutate;         // selftest: "nu-sign" flips the sign of nu
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<double> lambda;
};

/// Streams for user-facing output; tests may redirect them.
struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

namespace detail {

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

inline io::RunConfig load(const CommandOptions& o) {
  if (o.config.empty()) throw io::ConfigError("--config is required");
  io::RunConfig cfg = io::load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.solver.seed = *o.seed;
  }
  if (o.workers) {
    if (*o.workers < 0) throw io::ConfigError("--workers must be >= 0");
    cfg.workers = *o.workers;
  }
  if (!o.out.empty()) cfg.output = o.out;
  return cfg;
}

inline std::filesystem::path out_dir(const io::RunConfig& cfg) {
  std::filesystem::path dir(cfg.output);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io::ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline Vector observation(const CommandOptions& o, const io::RunConfig& cfg, const ForwardModel& model,
                          const Vector& mu) {
  if (!o.y_path.empty()) {
    Vector y;
    try {
      y = io::read_vector_csv(o.y_path);
    } catch (const Error& e) {
      throw io::ConfigError(std::string("--y: ") + e.what());
    }
    if (y.size() != model.n())
      throw io::ConfigError("--y: expected " + std::to_string(model.n()) + " values, got " + std::to_string(y.size()));
    return y;
  }
  if (cfg.noiseless || cfg.sigma == 0.0) return mu;
  return mu + replicate_noise(cfg.seed, 0, model.n(), cfg.sigma);
}

inline double solve_lambda(const CommandOptions& o, const io::RunConfig& cfg) {
  if (o.lambda) {
    if (!(*o.lambda > 0.0)) throw io::ConfigError("--lambda must be positive");
    return *o.lambda;
  }
  if (cfg.solve_lambda) return *cfg.solve_lambda;
  throw io::ConfigError("missing required key 'solve.lambda' (or pass --lambda)");
}

inline std::vector<std::string> coord_names(int d) {
  if (d == 1) return {"x"};
  std::vector<std::string> out;
  for (int a = 1; a <= d; ++a) out.push_back("x" + std::to_string(a));
  return out;
}

inline io::CsvTable measure_table(const DiscreteMeasure& m, int d) {
  io::CsvTable t;
  t.header.push_back("index");
  for (auto& c : coord_names(d)) t.header.push_back(c);
  t.header.push_back("amplitude");
  for (int j = 0; j < m.size(); ++j) {
    std::vector<std::string> row{std::to_string(j)};
    for (int a = 0; a < d; ++a) row.push_back(io::format_double(m.positions[static_cast<std::size_t>(j)][a]));
    row.push_back(io::format_double(m.amplitudes[j]));
    t.add_row(std::move(row));
  }
  return t;
}

inline DiscreteMeasure read_measure(const std::string& path, const ForwardModel& model) {
  io::CsvTable t;
  try {
    t = io::read_csv(path);
  } catch (const Error& e) {
    throw io::ConfigError(std::string("--measure: ") + e.what());
  }
  const int d = model.dim();
  DiscreteMeasure m;
  try {
    std::vector<std::size_t> cols;
    for (const auto& c : coord_names(d)) cols.push_back(t.column(c));
    const std::size_t amp = t.column("amplitude");
    for (const auto& row : t.rows) {
      Point x(d);
      for (int a = 0; a < d; ++a) x[a] = io::parse_double(row[cols[static_cast<std::size_t>(a)]]);
      if (!model.domain().contains(x)) throw io::ConfigError("--measure: position outside the domain");
      m.push_back(x, io::parse_double(row[amp]));
    }
  } catch (const io::ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw io::ConfigError(std::string("--measure: ") + e.what());
  }
  return m;
}

/// eta on 1024 uniform points (d = 1) or 1024 seeded points of the domain.
inline io::CsvTable certificate_table(const ForwardModel& model, const Vector& p, std::uint64_t seed) {
  const int d = model.dim();
  const int count = 1024;
  io::CsvTable t;
  for (auto& c : coord_names(d)) t.header.push_back(c);
  t.header.push_back("eta");
  std::vector<Point> pts;
  if (d == 1) {
    pts = GridSpec::uniform(model.domain(), count).nodes;
  } else {
    std::mt19937_64 rng(io::stream_seed(seed, 3));
    std::normal_distribution<double> g;
    const auto& dom = model.domain();
    while (static_cast<int>(pts.size()) < count) {
      Point x(d);
      for (auto& v : x) v = g(rng);
      if (dom.geometry == Geometry::Torus) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& v : x) v = u(rng);
      }
      x = model.canonicalize(x);
      try {
        model.feature(x);
      } catch (const DegenerateFeatureError&) {
        continue;
      }
      pts.push_back(x);
    }
  }
  for (const auto& x : pts) {
    std::vector<std::string> row;
    for (int a = 0; a < d; ++a) row.push_back(io::format_double(x[a]));
    row.push_back(io::format_double(certificate_value(model, p, x)));
    t.add_row(std::move(row));
  }
  return t;
}

inline std::string path_str(const std::filesystem::path& dir, const char* name) { return (dir / name).string(); }

struct Prepared {
  io::RunConfig cfg;
  ModelPtr model;
  Vector mu;
  Vector y;
};

inline Prepared prepare(const CommandOptions& o) {
  Prepared p;
  p.cfg = load(o);
  p.model = io::build_model(p.cfg);
  p.mu = io::build_mu(p.cfg, *p.model);
  p.y = observation(o, p.cfg, *p.model, p.mu);
  return p;
}

}  // namespace detail

/// Runs `body`, mapping library errors onto exit codes.
inline int guarded(Streams s, const std::function<int()>& body) {
  try {
    return body();
  } catch (const io::ConfigError& e) {
    s.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SingularMError& e) {
    s.err << "degenerate observation: " << e.what() << '\n';
    return kExitSingularM;
  } catch (const DegenerateCertificateError& e) {
    s.err << "degenerate observation: " << e.what() << '\n';
    return kExitSingularM;
  } catch (const DomainError& e) {
    s.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    s.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    s.err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

/// solve: writes solution.csv and certificate.csv, prints "k gap objective".
inline int cmd_solve(const CommandOptions& o, Streams s = {}) {
  return guarded(s, [&] {
    auto prep = detail::prepare(o);
    const double lambda = detail::solve_lambda(o, prep.cfg);
    const auto dir = detail::out_dir(prep.cfg);
    const auto res = solve_blasso(prep.model, prep.y, lambda, prep.cfg.solver);
    io::write_csv(detail::path_str(dir, "solution.csv"), detail::measure_table(res.measure, prep.model->dim()));
    io::write_csv(detail::path_str(dir, "certificate.csv"),
                  detail::certificate_table(*prep.model, res.certificate.dual, prep.cfg.seed));
    s.out << "k=" << res.measure.size() << " gap=" << io::format_double(res.duality_gap)
          << " objective=" << io::format_double(res.objective_value)
          << " converged=" << (res.converged ? "true" : "false") << '\n';
    if (!res.converged) {
      s.err << "solver did not converge after " << res.outer_iterations << " iterations\n";
      return static_cast<int>(kExitNonConvergence);
    }
    return static_cast<int>(kExitOk);
  });
}

inline io::CsvTable dof_table(const DofReport& r) {
  io::CsvTable t{{"k", "P", "rank_gamma", "sigma_min_gamma", "divergence", "nu", "support_class"}, {}};
  t.add_row({std::to_string(r.k), std::to_string(r.P), std::to_string(r.rank_gamma),
             io::format_double(r.sigma_min_gamma), io::format_double(r.divergence),
             r.nu ? io::format_double(*r.nu) : std::string("nan"), to_string(r.support_class)});
  return t;
}

/// dof: solves (or reads --measure) and writes dof_report.csv.
inline int cmd_dof(const CommandOptions& o, Streams s = {}) {
  return guarded(s, [&] {
    auto prep = detail::prepare(o);
    const double lambda = detail::solve_lambda(o, prep.cfg);
    const auto dir = detail::out_dir(prep.cfg);
    DiscreteMeasure m;
    if (!o.measure_path.empty()) {
      m = detail::read_measure(o.measure_path, *prep.model);
    } else {
      const auto res = solve_blasso(prep.model, prep.y, lambda, prep.cfg.solver);
      if (!res.converged) {
        s.err << "solver did not converge after " << res.outer_iterations << " iterations\n";
        return static_cast<int>(kExitNonConvergence);
      }
      m = res.measure;
    }
    const DofReport r = compute_dof_report(*prep.model, m, prep.y, lambda);
    io::write_csv(detail::path_str(dir, "dof_report.csv"), dof_table(r));
    s.out << "k=" << r.k << " P=" << r.P << " divergence=" << io::format_double(r.divergence)
          << " support=" << to_string(r.support_class) << '\n';
    return static_cast<int>(kExitOk);
  });
}

inline io::CsvTable sweep_table(const std::vector<SweepRecord>& records) {
  io::CsvTable t{{"lambda_index", "lambda", "replicate", "mse", "sure", "sure_param", "k", "divergence", "P",
                  "converged", "fd_divergence", "failure"},
                 {}};
  for (const auto& r : records)
    t.add_row({std::to_string(r.lambda_index), io::format_double(r.lambda), std::to_string(r.replicate),
               io::format_double(r.mse), io::format_double(r.sure), io::format_double(r.sure_param),
               std::to_string(r.k), io::format_double(r.divergence), std::to_string(r.P),
               r.converged ? "1" : "0", io::format_double(r.fd_divergence), detail::csv_safe(r.failure)});
  return t;
}

inline io::CsvTable aggregates_table(const std::vector<SweepAggregate>& aggs) {
  io::CsvTable t;
  t.header = {"lambda", "count", "failed"};
  for (const char* c : {"mse", "sure", "sure_param", "divergence", "k", "P"})
    for (const char* s : {"_mean", "_std", "_se"}) t.header.push_back(std::string(c) + s);
  t.header.push_back("combined_se");
  t.header.push_back("combined_se_param");
  for (const auto& a : aggs) {
    std::vector<std::string> row{io::format_double(a.lambda), std::to_string(a.count), std::to_string(a.failed)};
    for (const ColumnSummary* c : {&a.mse, &a.sure, &a.sure_param, &a.divergence, &a.k, &a.P}) {
      row.push_back(io::format_double(c->mean));
      row.push_back(io::format_double(c->std));
      row.push_back(io::format_double(c->se));
    }
    row.push_back(io::format_double(a.combined_se));
    row.push_back(io::format_double(a.combined_se_param));
    t.add_row(std::move(row));
  }
  return t;
}

namespace detail {

inline io::Series summary_series(const std::vector<SweepAggregate>& aggs, const std::string& label,
                                 const std::string& color, ColumnSummary SweepAggregate::*col, bool dashed = false) {
  io::Series s;
  s.label = label;
  s.color = color;
  s.dashed = dashed;
  for (const auto& a : aggs) {
    if (a.count == 0) continue;
    s.x.push_back(a.lambda);
    s.y.push_back((a.*col).mean);
    s.err.push_back((a.*col).std);
  }
  return s;
}

}  // namespace detail

/// sweep: SURE Monte-Carlo experiment; writes sweep.csv, aggregates.csv,
/// sure.svg and dof.svg. Exit 2 (or 3) when some records failed; the
/// outputs are written either way.
inline int cmd_sweep(const CommandOptions& o, Streams s = {}) {
  return guarded(s, [&] {
    const io::RunConfig cfg = detail::load(o);
    if (cfg.lambdas.empty()) throw io::ConfigError("missing required key 'sweep.lambda' (or lambda_min/max/count)");
    if (!(cfg.sigma > 0.0)) throw io::ConfigError("'noise.sigma' must be positive for a sweep");
    SweepConfig sc;
    sc.model = io::build_model(cfg);
    sc.mu = io::build_mu(cfg, *sc.model);
    sc.sigma = cfg.sigma;
    sc.lambda_grid = cfg.lambdas;
    sc.replicates = cfg.replicates;
    sc.seed = cfg.seed;
    sc.solver = cfg.solver;
    sc.fd_oracle = cfg.fd_oracle;
    sc.workers = cfg.workers > 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    const auto dir = detail::out_dir(cfg);
    const SweepResult res = run_sweep(sc);
    io::write_csv(detail::path_str(dir, "sweep.csv"), sweep_table(res.records));
    io::write_csv(detail::path_str(dir, "aggregates.csv"), aggregates_table(res.aggregates));

    io::PlotSpec risk;
    risk.title = "Risk estimates";
    risk.xlabel = "lambda";
    risk.ylabel = "mean over replicates";
    risk.log_x = true;
    risk.series = {detail::summary_series(res.aggregates, "MSE", "#1f77b4", &SweepAggregate::mse),
                   detail::summary_series(res.aggregates, "SURE", "#d62728", &SweepAggregate::sure),
                   detail::summary_series(res.aggregates, "SURE_param", "#2ca02c", &SweepAggregate::sure_param, true)};
    io::write_text(detail::path_str(dir, "sure.svg"), io::render_svg(risk));
    io::PlotSpec dof;
    dof.title = "Degrees of freedom";
    dof.xlabel = "lambda";
    dof.ylabel = "mean over replicates";
    dof.log_x = true;
    dof.series = {detail::summary_series(res.aggregates, "divergence", "#d62728", &SweepAggregate::divergence),
                  detail::summary_series(res.aggregates, "P", "#2ca02c", &SweepAggregate::P, true)};
    io::write_text(detail::path_str(dir, "dof.svg"), io::render_svg(dof));

    int failed = 0, nonconv = 0;
    for (const auto& r : res.records) {
      if (r.converged) continue;
      ++failed;
      if (r.failure == "solver did not converge") ++nonconv;
    }
    s.out << "records=" << res.records.size() << " failed=" << failed << '\n';
    if (failed == 0) return static_cast<int>(kExitOk);
    s.err << failed << " records failed (" << nonconv << " non-converged)\n";
    return static_cast<int>(nonconv > 0 ? kExitNonConvergence : kExitSingularM);
  });
}

inline io::CsvTable grid_compare_table(const std::vector<GridComparisonRow>& rows) {
  io::CsvTable t{{"p", "lambda", "grid_dof", "grid_sure", "grid_mse", "blasso_divergence", "blasso_sure",
                  "blasso_mse", "blasso_k", "converged"},
                 {}};
  for (const auto& r : rows)
    t.add_row({std::to_string(r.p), io::format_double(r.lambda), std::to_string(r.grid_dof),
               io::format_double(r.grid_sure), io::format_double(r.grid_mse), io::format_double(r.blasso_divergence),
               io::format_double(r.blasso_sure), io::format_double(r.blasso_mse), std::to_string(r.blasso_k),
               r.converged ? "1" : "0"});
  return t;
}

/// grid-compare: grid-Lasso support size against the Blasso divergence;
/// writes grid_compare.csv and grid_compare.svg.
inline int cmd_grid_compare(const CommandOptions& o, Streams s = {}) {
  return guarded(s, [&] {
    auto prep = detail::prepare(o);
    if (prep.model->dim() != 1) throw io::ConfigError("grid-compare needs a one-dimensional model");
    if (prep.cfg.grid_sizes.empty()) throw io::ConfigError("missing required key 'grid.sizes'");
    std::vector<double> lambdas = prep.cfg.grid_lambdas.empty() ? prep.cfg.lambdas : prep.cfg.grid_lambdas;
    if (o.lambda) lambdas = {*o.lambda};
    if (lambdas.empty()) throw io::ConfigError("missing required key 'grid.lambda' (or 'sweep.lambda')");
    const double sigma = prep.cfg.sigma > 0.0 ? prep.cfg.sigma : 1.0;
    const auto dir = detail::out_dir(prep.cfg);
    const auto rows =
        compare_grid_vs_continuous(prep.model, prep.mu, prep.y, sigma, prep.cfg.grid_sizes, lambdas, prep.cfg.solver);
    io::write_csv(detail::path_str(dir, "grid_compare.csv"), grid_compare_table(rows));

    io::PlotSpec plot;
    plot.title = "Grid Lasso dof vs continuous divergence";
    plot.xlabel = "lambda";
    plot.ylabel = "degrees of freedom";
    plot.log_x = true;
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::size_t ci = 0;
    for (int p : prep.cfg.grid_sizes) {
      io::Series g;
      g.label = "grid p=" + std::to_string(p);
      g.color = palette[ci++ % 6];
      for (const auto& r : rows)
        if (r.p == p) {
          g.x.push_back(r.lambda);
          g.y.push_back(r.grid_dof);
        }
      plot.series.push_back(std::move(g));
    }
    io::Series b;
    b.label = "Blasso divergence";
    b.color = "#d62728";
    b.dashed = true;
    for (const auto& r : rows)
      if (r.p == prep.cfg.grid_sizes.front() && r.converged) {
        b.x.push_back(r.lambda);
        b.y.push_back(r.blasso_divergence);
      }
    plot.series.push_back(std::move(b));
    io::write_text(detail::path_str(dir, "grid_compare.svg"), io::render_svg(plot));
    s.out << "rows=" << rows.size() << '\n';
    bool all = true;
    for (const auto& r : rows) all = all && r.converged;
    return static_cast<int>(all ? kExitOk : kExitNonConvergence);
  });
}

namespace detail {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline double max_rel_jacobian_error(const ForwardModel& model, const Point& x) {
  const Matrix j = model.jacobian(x);
  double worst = 0.0;
  for (int a = 0; a < model.dim(); ++a) {
    const double h = 1e-6;
    Point xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    const Vector fd = (model.feature(xp) - model.feature(xm)) / (2 * h);
    worst = std::max(worst, (fd - j.col(a)).norm() / std::max(1.0, j.col(a).norm()));
  }
  return worst;
}

inline double max_rel_hessian_error(const ForwardModel& model, const Point& x, const Vector& p) {
  const Matrix h = model.hessian_contract(x, p);
  double worst = 0.0;
  for (int a = 0; a < model.dim(); ++a) {
    const double step = 1e-6;
    Point xp = x, xm = x;
    xp[a] += step;
    xm[a] -= step;
    const Vector fd = (model.jacobian(xp).transpose() * p - model.jacobian(xm).transpose() * p) / (2 * step);
    worst = std::max(worst, (fd - h.col(a)).norm() / std::max(1.0, h.norm()));
  }
  return worst;
}

}  // namespace detail

/// selftest: fast invariant suite; prints one PASS/FAIL line per check.
inline int cmd_selftest(const CommandOptions& o, Streams s = {}) {
  if (!o.mutate.empty() && o.mutate != "nu-sign") {
    s.err << "config error: unknown mutation '" << o.mutate << "'\n";
    return kExitConfig;
  }
  const double nu_sign = o.mutate == "nu-sign" ? -1.0 : 1.0;
  std::vector<detail::Check> checks;
  auto run = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
    detail::Check c{name, false, ""};
    try {
      auto [ok, info] = f();
      c.pass = ok;
      c.detail = info;
    } catch (const std::exception& e) {
      c.detail = std::string("exception: ") + e.what();
    }
    checks.push_back(c);
  };

  const auto fourier = build_fourier_model(10);
  std::mt19937_64 rng(o.seed.value_or(7));
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);

  run("fourier_derivatives", [&] {
    double worst = 0.0;
    Vector p(fourier->n());
    for (auto& v : p) v = g(rng);
    for (int t = 0; t < 10; ++t) {
      const Point x = Point::Constant(1, u(rng));
      worst = std::max({worst, detail::max_rel_jacobian_error(*fourier, x), detail::max_rel_hessian_error(*fourier, x, p)});
    }
    return std::pair{worst < 1e-6, "max relative error " + io::format_double(worst)};
  });

  run("relu_derivatives", [&] {
    Matrix a(30, 4);
    for (auto& v : a.reshaped()) v = g(rng);
    const auto relu = build_relu_model(a, true);
    Vector p(relu->n());
    for (auto& v : p) v = g(rng);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      Point x(4);
      for (auto& v : x) v = g(rng);
      worst = std::max({worst, detail::max_rel_jacobian_error(*relu, x), detail::max_rel_hessian_error(*relu, x, p)});
    }
    return std::pair{worst < 1e-5, "max relative error " + io::format_double(worst)};
  });

  run("unitarity", [&] {
    const int fc = 10;
    DiscreteMeasure m = DiscreteMeasure::on_line({0.1, 0.6, 0.9}, {2.0, -4.5, 4.0});
    const ComplexVector c = fourier_coefficients(fc, m);
    const ComplexVector real = complex_real_map(fc, c, MapDirection::ComplexToReal);
    const ComplexVector back = complex_real_map(fc, real, MapDirection::RealToComplex);
    const Vector direct = apply_forward(*fourier, m);
    const double e1 = (back - c).norm();
    const double e2 = std::abs(real.norm() - c.norm());
    const double e3 = (real.real() - direct).norm() + real.imag().norm();
    const double worst = std::max({e1, e2, e3});
    return std::pair{worst < 1e-10, "max error " + io::format_double(worst)};
  });

  // One solved noisy Fourier instance shared by the remaining checks.
  const Vector mu = apply_forward(*fourier, DiscreteMeasure::on_line({0.1, 0.6, 0.9}, {2.0, -4.5, 4.0}));
  const Vector y = mu + replicate_noise(o.seed.value_or(7), 0, fourier->n(), 0.01);
  const double lambda = 0.5;
  SolverOptions opts;
  opts.duality_gap_tolerance = 1e-12;
  const SolveResult sol = solve_blasso(fourier, y, lambda, opts);
  const DiscreteMeasure m = prune_to_injective(*fourier, sol.measure);

  run("solver_converged", [&] {
    return std::pair{sol.converged && m.size() > 0,
                     "k=" + std::to_string(m.size()) + " gap=" + io::format_double(sol.duality_gap)};
  });

  run("bound_chain", [&] {
    const GammaMatrix gamma = build_gamma(*fourier, m.positions);
    const MMatrix mm = build_m(*fourier, m, y, lambda);
    const double div = divergence_closed_form(gamma, mm);
    const int P = 2 * m.size();
    const bool ok = div >= -1e-10 && div <= gamma.rank + 1e-10 && gamma.rank <= std::min(fourier->n(), P);
    return std::pair{ok, "0 <= " + io::format_double(div) + " <= rank " + std::to_string(gamma.rank) + " <= " +
                             std::to_string(std::min(fourier->n(), P))};
  });

  run("trace_identity", [&] {
    const GammaMatrix gamma = build_gamma(*fourier, m.positions);
    const MMatrix mm = build_m(*fourier, m, y, lambda);
    const double tr = divergence_closed_form(gamma, mm);
    const FourierDof fd = blasso::detail::fourier_dof_impl(m.size(), mm, nu_sign);
    const TraceDecomposition dec = trace_decomposition(gamma, mm);
    const double e1 = std::abs(fd.divergence - tr);
    const double e2 = std::abs(dec.divergence() - tr);
    const bool ok = e1 <= 1e-10 && e2 <= 1e-10 && fd.nu >= -1e-10;
    return std::pair{ok, "|2k-nu-tr|=" + io::format_double(e1) + " |rank-T-tr|=" + io::format_double(e2) +
                             " nu=" + io::format_double(fd.nu)};
  });

  run("lasso_on_extended_support", [&] {
    const Vector p = (y - apply_forward(*fourier, m)) / lambda;
    Vector signs(m.size());
    for (int j = 0; j < m.size(); ++j) signs[j] = sign_of(certificate_value(*fourier, p, m.positions[static_cast<std::size_t>(j)]));
    const Vector closed = closed_form_on_extended_support(*fourier, m.positions, y, lambda, signs);
    const Matrix a = fourier->feature_matrix(m.positions);
    const Vector iter = lasso_proximal(a, y, lambda, 1e-14);
    const double err = (closed - iter).lpNorm<Eigen::Infinity>();
    return std::pair{err <= 1e-8, "max |closed - iterative| " + io::format_double(err)};
  });

  bool all = true;
  for (const auto& c : checks) {
    s.out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    all = all && c.pass;
  }
  return all ? kExitOk : kExitSelftestFailed;
}

}  // namespace blasso::cli
