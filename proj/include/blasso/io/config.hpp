#pragma once

#include <blasso/io/csv.hpp>
#include <blasso/fourier.hpp>
#include <blasso/relu.hpp>
#include <blasso/solver.hpp>

#include <toml.hpp>

#include <filesystem>
#include <optional>
#include <random>
#include <set>

namespace blasso::io {

/// Invalid or unreadable run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ModelConfig {
  std::string kind;  // "fourier" or "relu"
  int cutoff = 0;
  int n = 0;
  int d = 0;
  bool normalize = true;
  double box_radius = -1.0;
  std::optional<std::uint64_t> feature_seed;
  std::string features_csv;
};

struct TruthConfig {
  std::vector<double> amplitudes;
  std::vector<Point> positions;
  std::optional<Vector> mu;
  int random_spikes = 0;
  double amplitude_std = 1.0;
  double position_std = 1.0;
};

struct RunConfig {
  ModelConfig model;
  TruthConfig truth;
  double sigma = 0.0;
  std::vector<double> lambdas;
  int replicates = 1;
  bool fd_oracle = false;
  int workers = 0;  // 0: hardware concurrency
  std::uint64_t seed = 0;
  SolverOptions solver;
  std::string output = "out";
  std::optional<double> solve_lambda;
  bool noiseless = false;
  std::vector<int> grid_sizes;
  std::vector<double> grid_lambdas;
  std::filesystem::path base_dir;
};

namespace detail {

using Keys = std::set<std::string>;

inline void check_keys(const toml::table& t, const std::string& where, const Keys& allowed) {
  for (auto&& [k, v] : t) {
    if (!allowed.count(std::string(k.str()))) {
      const std::string name = where.empty() ? std::string(k.str()) : where + "." + std::string(k.str());
      throw ConfigError("unknown configuration key '" + name + "'");
    }
  }
}

inline std::string qualified(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

inline const toml::table* section(const toml::table& t, const std::string& key) {
  const auto* node = t.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError("'" + key + "' must be a table");
  return node->as_table();
}

inline std::optional<double> get_double(const toml::table* t, const std::string& where, const std::string& key) {
  if (!t) return std::nullopt;
  const auto* node = t->get(key);
  if (!node) return std::nullopt;
  if (auto v = node->value<double>(); v && (node->is_floating_point() || node->is_integer())) return *v;
  throw ConfigError("'" + qualified(where, key) + "' must be a number");
}

inline std::optional<std::int64_t> get_int(const toml::table* t, const std::string& where, const std::string& key) {
  if (!t) return std::nullopt;
  const auto* node = t->get(key);
  if (!node) return std::nullopt;
  if (node->is_integer()) return *node->value<std::int64_t>();
  throw ConfigError("'" + qualified(where, key) + "' must be an integer");
}

inline std::optional<bool> get_bool(const toml::table* t, const std::string& where, const std::string& key) {
  if (!t) return std::nullopt;
  const auto* node = t->get(key);
  if (!node) return std::nullopt;
  if (node->is_boolean()) return *node->value<bool>();
  throw ConfigError("'" + qualified(where, key) + "' must be true or false");
}

inline std::optional<std::string> get_string(const toml::table* t, const std::string& where,
                                             const std::string& key) {
  if (!t) return std::nullopt;
  const auto* node = t->get(key);
  if (!node) return std::nullopt;
  if (node->is_string()) return *node->value<std::string>();
  throw ConfigError("'" + qualified(where, key) + "' must be a string");
}

inline std::optional<std::vector<double>> get_numbers(const toml::table* t, const std::string& where,
                                                      const std::string& key) {
  if (!t) return std::nullopt;
  const auto* node = t->get(key);
  if (!node) return std::nullopt;
  const auto* arr = node->as_array();
  if (!arr) throw ConfigError("'" + qualified(where, key) + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& el : *arr) {
    if (!(el.is_floating_point() || el.is_integer()))
      throw ConfigError("'" + qualified(where, key) + "' must be an array of numbers");
    out.push_back(*el.value<double>());
  }
  return out;
}

inline std::vector<Point> get_points(const toml::table& t, const std::string& where, const std::string& key) {
  const auto* arr = t.get(key)->as_array();
  if (!arr) throw ConfigError("'" + qualified(where, key) + "' must be an array");
  std::vector<Point> out;
  for (const auto& el : *arr) {
    if (el.is_floating_point() || el.is_integer()) {
      out.push_back(Point::Constant(1, *el.value<double>()));
    } else if (const auto* inner = el.as_array()) {
      Point p(static_cast<Eigen::Index>(inner->size()));
      Eigen::Index i = 0;
      for (const auto& c : *inner) {
        if (!(c.is_floating_point() || c.is_integer()))
          throw ConfigError("'" + qualified(where, key) + "' entries must be numbers");
        p[i++] = *c.value<double>();
      }
      out.push_back(p);
    } else {
      throw ConfigError("'" + qualified(where, key) + "' entries must be numbers or arrays of numbers");
    }
  }
  return out;
}

}  // namespace detail

/// Parses and validates a TOML run configuration. Unknown keys and type
/// mismatches raise ConfigError naming the offending key.
inline RunConfig parse_config(const toml::table& root, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  RunConfig cfg;
  cfg.base_dir = base_dir;
  check_keys(root, "", {"seed", "output", "model", "truth", "noise", "sweep", "solve", "grid", "solver"});
  if (auto v = get_int(&root, "", "seed")) {
    if (*v < 0) throw ConfigError("'seed' must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = get_string(&root, "", "output")) cfg.output = *v;

  const auto* model = section(root, "model");
  if (!model) throw ConfigError("missing required table 'model'");
  check_keys(*model, "model", {"kind", "cutoff", "n", "d", "normalize", "box_radius", "feature_seed", "features_csv"});
  cfg.model.kind = get_string(model, "model", "kind").value_or("");
  if (cfg.model.kind == "fourier") {
    auto fc = get_int(model, "model", "cutoff");
    if (!fc) throw ConfigError("missing required key 'model.cutoff'");
    if (*fc < 0) throw ConfigError("'model.cutoff' must be >= 0");
    cfg.model.cutoff = static_cast<int>(*fc);
  } else if (cfg.model.kind == "relu") {
    cfg.model.features_csv = get_string(model, "model", "features_csv").value_or("");
    auto n = get_int(model, "model", "n");
    auto d = get_int(model, "model", "d");
    if (cfg.model.features_csv.empty() && (!n || !d))
      throw ConfigError("relu model needs 'model.n' and 'model.d' (or 'model.features_csv')");
    if (n && *n < 1) throw ConfigError("'model.n' must be >= 1");
    if (d && *d < 1) throw ConfigError("'model.d' must be >= 1");
    cfg.model.n = static_cast<int>(n.value_or(0));
    cfg.model.d = static_cast<int>(d.value_or(0));
    cfg.model.normalize = get_bool(model, "model", "normalize").value_or(true);
    cfg.model.box_radius = get_double(model, "model", "box_radius").value_or(-1.0);
    if (auto s = get_int(model, "model", "feature_seed")) cfg.model.feature_seed = static_cast<std::uint64_t>(*s);
  } else {
    throw ConfigError("'model.kind' must be \"fourier\" or \"relu\"");
  }

  const auto* noise = section(root, "noise");
  if (noise) check_keys(*noise, "noise", {"sigma"});
  auto sigma = get_double(noise, "noise", "sigma");
  if (!sigma) throw ConfigError("missing required key 'noise.sigma'");
  if (!(*sigma >= 0.0)) throw ConfigError("'noise.sigma' must be nonnegative");
  cfg.sigma = *sigma;

  if (const auto* truth = section(root, "truth")) {
    check_keys(*truth, "truth", {"amplitudes", "positions", "mu", "random_spikes", "amplitude_std", "position_std"});
    if (auto mu = get_numbers(truth, "truth", "mu")) {
      cfg.truth.mu = Eigen::Map<const Vector>(mu->data(), static_cast<Eigen::Index>(mu->size()));
    }
    if (auto a = get_numbers(truth, "truth", "amplitudes")) cfg.truth.amplitudes = *a;
    if (truth->get("positions")) cfg.truth.positions = get_points(*truth, "truth", "positions");
    if (cfg.truth.amplitudes.size() != cfg.truth.positions.size())
      throw ConfigError("'truth.amplitudes' and 'truth.positions' must have the same length");
    if (auto r = get_int(truth, "truth", "random_spikes")) {
      if (*r < 0) throw ConfigError("'truth.random_spikes' must be >= 0");
      cfg.truth.random_spikes = static_cast<int>(*r);
    }
    cfg.truth.amplitude_std = get_double(truth, "truth", "amplitude_std").value_or(1.0);
    cfg.truth.position_std = get_double(truth, "truth", "position_std").value_or(1.0);
    const int sources = (cfg.truth.mu ? 1 : 0) + (!cfg.truth.amplitudes.empty() ? 1 : 0) +
                        (cfg.truth.random_spikes > 0 ? 1 : 0);
    if (sources > 1) throw ConfigError("'truth' must give only one of mu, amplitudes/positions, random_spikes");
  }

  if (const auto* sweep = section(root, "sweep")) {
    check_keys(*sweep, "sweep",
               {"lambda", "lambda_min", "lambda_max", "lambda_count", "replicates", "fd_oracle", "workers"});
    if (auto l = get_numbers(sweep, "sweep", "lambda")) {
      cfg.lambdas = *l;
    } else {
      auto lo = get_double(sweep, "sweep", "lambda_min");
      auto hi = get_double(sweep, "sweep", "lambda_max");
      auto count = get_int(sweep, "sweep", "lambda_count");
      if (lo || hi || count) {
        if (!lo || !hi || !count)
          throw ConfigError("'sweep.lambda_min', 'sweep.lambda_max' and 'sweep.lambda_count' go together");
        if (!(*lo > 0.0) || !(*hi >= *lo) || *count < 1)
          throw ConfigError("'sweep.lambda_min/max/count' must describe a positive range");
        for (std::int64_t i = 0; i < *count; ++i) {
          const double t = *count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(*count - 1);
          cfg.lambdas.push_back(std::pow(10.0, std::log10(*lo) + t * (std::log10(*hi) - std::log10(*lo))));
        }
      }
    }
    for (double l : cfg.lambdas)
      if (!(l > 0.0)) throw ConfigError("'sweep.lambda' entries must be positive");
    if (auto k = get_int(sweep, "sweep", "replicates")) {
      if (*k < 1) throw ConfigError("'sweep.replicates' must be >= 1");
      cfg.replicates = static_cast<int>(*k);
    }
    cfg.fd_oracle = get_bool(sweep, "sweep", "fd_oracle").value_or(false);
    if (auto w = get_int(sweep, "sweep", "workers")) {
      if (*w < 0) throw ConfigError("'sweep.workers' must be >= 0");
      cfg.workers = static_cast<int>(*w);
    }
  }

  if (const auto* solve = section(root, "solve")) {
    check_keys(*solve, "solve", {"lambda", "noiseless"});
    cfg.solve_lambda = get_double(solve, "solve", "lambda");
    if (cfg.solve_lambda && !(*cfg.solve_lambda > 0.0)) throw ConfigError("'solve.lambda' must be positive");
    cfg.noiseless = get_bool(solve, "solve", "noiseless").value_or(false);
  }

  if (const auto* grid = section(root, "grid")) {
    check_keys(*grid, "grid", {"sizes", "lambda"});
    if (auto s = get_numbers(grid, "grid", "sizes")) {
      for (double v : *s) {
        if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("'grid.sizes' must hold positive integers");
        cfg.grid_sizes.push_back(static_cast<int>(v));
      }
    }
    if (auto l = get_numbers(grid, "grid", "lambda")) cfg.grid_lambdas = *l;
    for (double l : cfg.grid_lambdas)
      if (!(l > 0.0)) throw ConfigError("'grid.lambda' entries must be positive");
  }

  if (const auto* solver = section(root, "solver")) {
    check_keys(*solver, "solver",
               {"max_outer_iterations", "certificate_grid_size", "grid_per_axis", "multistart_points",
                "newton_steps", "local_descent_steps", "gradient_tolerance", "duality_gap_tolerance",
                "amplitude_prune_tolerance", "merge_tolerance", "positivity_tolerance"});
    auto& o = cfg.solver;
    auto as_int = [&](const char* key, int& dst) {
      if (auto v = get_int(solver, "solver", key)) dst = static_cast<int>(*v);
    };
    auto as_dbl = [&](const char* key, double& dst) {
      if (auto v = get_double(solver, "solver", key)) dst = *v;
    };
    as_int("max_outer_iterations", o.max_outer_iterations);
    as_int("certificate_grid_size", o.certificate_grid_size);
    as_int("grid_per_axis", o.grid_per_axis);
    as_int("multistart_points", o.multistart_points);
    as_int("newton_steps", o.newton_steps);
    as_int("local_descent_steps", o.local_descent.max_steps);
    as_dbl("gradient_tolerance", o.local_descent.gradient_tolerance);
    as_dbl("duality_gap_tolerance", o.duality_gap_tolerance);
    as_dbl("amplitude_prune_tolerance", o.amplitude_prune_tolerance);
    as_dbl("merge_tolerance", o.merge_tolerance);
    as_dbl("positivity_tolerance", o.positivity_tolerance);
    try {
      o.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("solver: ") + e.what());
    }
  }
  cfg.solver.seed = cfg.seed;
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
  try {
    return parse_config(toml::parse(text), base_dir);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("config is not valid TOML: ") + std::string(e.description()));
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

inline ModelPtr build_model(const RunConfig& cfg) {
  if (cfg.model.kind == "fourier") return build_fourier_model(cfg.model.cutoff);
  Matrix a;
  if (!cfg.model.features_csv.empty()) {
    const auto path = cfg.base_dir / cfg.model.features_csv;
    const CsvTable t = read_csv(path.string());
    a = Matrix(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      for (std::size_t j = 0; j < t.header.size(); ++j)
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(t.rows[i][j]);
  } else {
    std::mt19937_64 rng(stream_seed(cfg.model.feature_seed.value_or(cfg.seed), 1));
    std::normal_distribution<double> g;
    a = Matrix(cfg.model.n, cfg.model.d);
    for (int i = 0; i < cfg.model.n; ++i)
      for (int j = 0; j < cfg.model.d; ++j) a(i, j) = g(rng);
  }
  try {
    return build_relu_model(std::move(a), cfg.model.normalize, cfg.model.box_radius);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

/// Planted measure (empty when the config gives mu directly).
inline DiscreteMeasure build_truth(const RunConfig& cfg, const ForwardModel& model) {
  DiscreteMeasure m;
  if (cfg.truth.random_spikes > 0) {
    std::mt19937_64 rng(stream_seed(cfg.seed, 2));
    std::normal_distribution<double> g;
    for (int j = 0; j < cfg.truth.random_spikes; ++j) {
      const double a = cfg.truth.amplitude_std * g(rng);
      Point x(model.dim());
      if (model.domain().geometry == Geometry::Torus) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& v : x) v = u(rng);
      } else {
        for (auto& v : x) v = cfg.truth.position_std * g(rng);
      }
      m.push_back(model.canonicalize(x), a);
    }
    return m;
  }
  for (std::size_t j = 0; j < cfg.truth.positions.size(); ++j) {
    if (cfg.truth.positions[j].size() != model.dim())
      throw ConfigError("'truth.positions' entries must have " + std::to_string(model.dim()) + " coordinates");
    if (!model.domain().contains(cfg.truth.positions[j]))
      throw ConfigError("'truth.positions' entry " + std::to_string(j) + " lies outside the domain");
    m.push_back(cfg.truth.positions[j], cfg.truth.amplitudes[j]);
  }
  return m;
}

inline Vector build_mu(const RunConfig& cfg, const ForwardModel& model) {
  if (cfg.truth.mu) {
    if (cfg.truth.mu->size() != model.n())
      throw ConfigError("'truth.mu' must have " + std::to_string(model.n()) + " entries");
    return *cfg.truth.mu;
  }
  return apply_forward(model, build_truth(cfg, model));
}

}  // namespace blasso::io
