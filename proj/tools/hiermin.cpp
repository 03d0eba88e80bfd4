// Command-line driver: run experiments, check schedule conditions, dump configs.

#include "hiermin/hiermin.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <future>
#include <iostream>

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
  std::string out;
  std::optional<double> horizon;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
};

std::string brief(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", d);
  return buf;
}

hiermin::ExperimentConfig apply(hiermin::ExperimentConfig c, const Overrides& o) {
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.horizon) c.horizon = *o.horizon;
  if (o.seed) c.seed = *o.seed;
  if (o.alpha) {
    const auto* pl = c.schedule ? std::get_if<hiermin::EpsilonSchedule::PowerLaw>(&c.schedule->kind()) : nullptr;
    if (!pl) throw hiermin::ConfigError("--alpha needs a power-law schedule");
    c.schedule = hiermin::EpsilonSchedule::power_law(*o.alpha, pl->scale);
  }
  return c;
}

void print(const hiermin::RunSummary& s) {
  std::cout << s.name << ": " << (s.passed() ? "PASS" : "FAIL") << "  (" << brief(s.runtime_s)
            << " s)\n";
  for (const auto& c : s.checks) {
    std::cout << "  " << (c.passed ? "ok   " : "FAIL ") << c.name << "  " << brief(c.value) << ' '
              << c.relation << ' ' << brief(c.tolerance) << '\n';
  }
}

void print(const hiermin::ConditionReport& r) {
  auto yn = [](bool b) { return b ? "holds" : "fails"; };
  std::cout << "H1 " << yn(r.h1.holds) << (r.h1.analytic ? " (closed form)" : "")
            << "  tail exponent " << brief(r.h1.tail_exponent) << '\n';
  std::cout << "H2 " << yn(r.h2.holds) << (r.h2.trivial ? " (psi constant on C)" : "")
            << (r.h2.analytic ? " (closed form)" : "") << '\n';
  for (const auto& ray : r.h2.per_ray) {
    std::cout << "   ray |p| = " << brief(ray.ray.direction.norm()) << "  integral "
              << (ray.integral.is_finite() ? brief(ray.integral.value()) : std::string("inf")) << '\n';
  }
  std::cout << "H3 " << yn(r.h3.holds) << (r.h3.analytic ? " (closed form)" : "") << "  k "
            << brief(r.h3.k_estimate) << '\n';
  for (const auto& n : r.notes) std::cout << "note: " << n << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical minimization by a damped inertial dynamic"};
  app.require_subcommand(1);

  Overrides ov;
  std::string experiment, config_path;
  bool all = false;
  auto* run = app.add_subcommand("run", "run one or all experiments");
  auto* exp_opt = run->add_option("--experiment", experiment, "built-in experiment name");
  auto* cfg_opt = run->add_option("--config", config_path, "experiment config file")->check(CLI::ExistingFile);
  auto* all_opt = run->add_flag("--all", all, "run every built-in experiment");
  exp_opt->excludes(cfg_opt)->excludes(all_opt);
  cfg_opt->excludes(all_opt);
  run->add_option("--out", ov.out, "output directory");
  run->add_option("--horizon", ov.horizon, "override the horizon T");
  run->add_option("--alpha", ov.alpha, "override the power-law exponent");
  run->add_option("--seed", ov.seed, "override the seed");

  std::string cond_path;
  double cond_horizon = 0.0;
  bool numeric = false;
  auto* cond = app.add_subcommand("check-conditions", "evaluate H1-H3 for a config");
  cond->add_option("--config", cond_path, "experiment config file")->required()->check(CLI::ExistingFile);
  cond->add_option("--horizon", cond_horizon, "integration horizon of the numeric checks");
  cond->add_flag("--numeric", numeric, "skip closed forms");

  auto* list = app.add_subcommand("list", "list built-in experiments");

  std::string show_name;
  auto* show = app.add_subcommand("show-config", "print the config of a built-in experiment");
  show->add_option("name", show_name, "experiment name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*list) {
      for (const auto& c : hiermin::registry()) std::cout << c.name << "  " << c.description << '\n';
      return 0;
    }
    if (*show) {
      std::cout << hiermin::serialize_config(hiermin::find_experiment(show_name));
      return 0;
    }
    if (*cond) {
      auto c = hiermin::load_config(cond_path);
      if (!c.phi || !c.psi || !c.schedule) throw hiermin::ConfigError("config needs [phi], [psi] and [schedule]");
      hiermin::OracleOptions o;
      o.reference = c.x0.size() ? c.x0 : hiermin::Vector::Zero(c.phi->dim());
      const auto sol = hiermin::solve_hierarchical(*c.phi, *c.psi, o);
      hiermin::ConditionOptions co;
      co.horizon = cond_horizon > 0.0 ? cond_horizon : c.condition_horizon;
      co.analytic = !numeric;
      print(hiermin::check_conditions(*c.schedule, *c.phi, hiermin::cone_rays(*c.phi, *c.psi, sol.z_star), co));
      return 0;
    }
    std::vector<hiermin::ExperimentConfig> configs;
    if (all) {
      for (auto& c : hiermin::registry()) configs.push_back(apply(c, ov));
    } else if (!experiment.empty()) {
      configs.push_back(apply(hiermin::find_experiment(experiment), ov));
    } else if (!config_path.empty()) {
      configs.push_back(apply(hiermin::load_config(config_path), ov));
    } else {
      std::cerr << "run: give --experiment, --config or --all\n";
      return kExitConfig;
    }
    std::vector<std::future<hiermin::RunSummary>> jobs;
    for (const auto& c : configs) jobs.push_back(std::async(std::launch::async, [c] { return hiermin::run(c); }));
    bool ok = true;
    for (auto& j : jobs) {
      const auto s = j.get();
      print(s);
      ok = ok && s.passed();
    }
    return ok ? 0 : kExitFail;
  } catch (const hiermin::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const hiermin::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const hiermin::NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const hiermin::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
