#include <blasso/cli/commands.hpp>

#include <CLI11.hpp>

int main(int argc, char** argv) {
  using namespace blasso::cli;
  CLI::App app{"Beurling Lasso solver, degrees of freedom and SURE experiments"};
  app.require_subcommand(1);
  CommandOptions opts;
  std::uint64_t seed = 0;
  int workers = 0;
  double lambda = 0.0;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opts.config, "TOML run configuration");
    if (needs_config) c->required();
    sub->add_option("--out", opts.out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--workers", workers, "worker threads (0: all cores)");
    sub->add_option("--y", opts.y_path, "observation vector CSV, one value per row");
    sub->add_option("--lambda", lambda, "regularization parameter (overrides the config)");
  };
  auto* solve = app.add_subcommand("solve", "solve one Blasso instance");
  common(solve, true);
  auto* dof = app.add_subcommand("dof", "degrees-of-freedom report for one instance");
  common(dof, true);
  dof->add_option("--measure", opts.measure_path, "evaluate at this measure CSV instead of solving");
  auto* sweep = app.add_subcommand("sweep", "SURE Monte-Carlo sweep over a lambda grid");
  common(sweep, true);
  auto* grid = app.add_subcommand("grid-compare", "grid Lasso dof against the Blasso divergence");
  common(grid, true);
  auto* self = app.add_subcommand("selftest", "fast invariant suite");
  self->add_option("--seed", seed, "random seed");
  self->add_option("--mutate", opts.mutate, "inject a known defect (nu-sign)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->get_option_no_throw("--workers") && sub->count("--workers")) opts.workers = workers;
    if (sub->get_option_no_throw("--lambda") && sub->count("--lambda")) opts.lambda = lambda;
  }
  if (*solve) return cmd_solve(opts);
  if (*dof) return cmd_dof(opts);
  if (*sweep) return cmd_sweep(opts);
  if (*grid) return cmd_grid_compare(opts);
  return cmd_selftest(opts);
}
