// lobsim: theory | simulate | compare | freeze | sweep
//
// Exit codes: 0 success, 2 config or validation error, 3 assumption violation,
// 4 compare outside tolerance.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lobsim/config.hpp"
#include "lobsim/experiments.hpp"
#include "lobsim/io.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAssumption = 3;
constexpr int kExitTolerance = 4;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> events;
  std::optional<std::size_t> replicas;
  std::optional<std::size_t> threads;
  std::optional<double> rho;
  std::optional<double> burn_in;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool seed_required) {
  cmd->add_option("-c,--config", o.config_path, "experiment config (JSON)")->required();
  auto* seed = cmd->add_option("--seed", o.seed, "master seed");
  if (seed_required) seed->required();
  cmd->add_option("-n,--events", o.events, "events per replica");
  cmd->add_option("-r,--replicas", o.replicas, "number of replicas");
  cmd->add_option("-j,--threads", o.threads, "worker threads (0: all cores)");
  cmd->add_option("--rho", o.rho, "market maker rate");
  cmd->add_option("--burn-in", o.burn_in, "burn-in fraction");
  cmd->add_option("-o,--out", o.out, "output directory");
}

lobsim::ExperimentConfig load(const Overrides& o) {
  lobsim::ExperimentConfig c = lobsim::load_config(o.config_path);
  if (o.seed) c.run.seed = *o.seed;
  if (o.events) c.run.events = *o.events;
  if (o.replicas) {
    if (*o.replicas == 0) throw lobsim::config_error("--replicas must be >= 1");
    c.run.replicas = *o.replicas;
  }
  if (o.threads) c.run.threads = *o.threads;
  if (o.rho) {
    if (!(*o.rho >= 0.0)) throw lobsim::config_error("--rho must be >= 0");
    c.model.rho = *o.rho;
  }
  if (o.burn_in) {
    if (!(*o.burn_in >= 0.0 && *o.burn_in < 1.0)) throw lobsim::config_error("--burn-in must lie in [0, 1)");
    c.run.burn_in = *o.burn_in;
  }
  if (o.out) c.output.directory = *o.out;
  return c;
}

void emit(const lobsim::ExperimentConfig& c, const lobsim::io::Artifacts& art) {
  lobsim::io::write_artifacts(c.output.directory, art);
  for (const auto& [name, _] : art.files) std::cout << c.output.directory << "/" << name << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limit order book simulator with market makers"};
  app.require_subcommand(1);
  Overrides o;
  auto* theory = app.add_subcommand("theory", "Walras point, volume of trade, window, f±");
  auto* simulate = app.add_subcommand("simulate", "simulate and export trajectories");
  auto* compare = app.add_subcommand("compare", "restricted simulation against the Luckock solution");
  auto* freeze = app.add_subcommand("freeze", "ensemble freeze study");
  auto* sweep = app.add_subcommand("sweep", "window over a list of rho or V values");
  add_common(theory, o, false);
  add_common(simulate, o, true);
  add_common(compare, o, false);
  add_common(freeze, o, true);
  add_common(sweep, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const lobsim::ExperimentConfig c = load(o);
    if (theory->parsed()) {
      const auto res = lobsim::cmd_theory(c);
      emit(c, res.artifacts);
      const auto& w = res.window;
      std::printf("V_W=%.10g x_W=%.10g V_L=%.10g window=(%.10g, %.10g)%s%s\n", w.v_w, w.x_w, w.v_l,
                  w.x_minus, w.x_plus, w.boundary ? " boundary" : "",
                  w.degenerate ? " degenerate" : "");
    } else if (simulate->parsed()) {
      const auto res = lobsim::cmd_simulate(c);
      emit(c, res.artifacts);
    } else if (compare->parsed()) {
      const auto res = lobsim::cmd_compare(c);
      emit(c, res.artifacts);
      const auto& r = res.report;
      std::printf("sup_bid=%.4f sup_ask=%.4f empty_buy=%.4f (theory %.4f) %s\n", r.sup_bid,
                  r.sup_ask, r.empty_buy_empirical, r.empty_buy_theory, r.pass ? "PASS" : "FAIL");
      if (!r.pass) return kExitTolerance;
    } else if (freeze->parsed()) {
      const auto res = lobsim::cmd_freeze(c);
      emit(c, res.artifacts);
      const auto& r = res.report;
      std::printf("frozen %zu/%zu mean=%.4f sd=%.4f\n", r.frozen, r.replicas.size(), r.mean,
                  r.stddev);
      if (r.gambler) {
        std::printf("gambler y=%g never dropped %.4f (bound %.4f)\n", r.gambler->y,
                    r.gambler->fraction(), r.gambler->bound);
      }
    } else if (sweep->parsed()) {
      const auto res = lobsim::cmd_sweep(c);
      emit(c, res.artifacts);
    }
  } catch (const lobsim::assumption_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const lobsim::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
