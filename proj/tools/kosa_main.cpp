// kosa command line: run experiments, print oracle reports, validate
// configs, and check (sigma, mu) feasibility.
#include <cstdint>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kosa/dictionary.hpp"
#include "kosa/harness.hpp"

namespace {

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out, int threads) {
  kosa::ExperimentConfig config = kosa::ExperimentConfig::load(config_path);
  if (seed) config.seed = *seed;
  if (out) config.out_dir = *out;

  const auto result = kosa::run_experiment(config, threads, true);
  for (const auto& [label, agent] : result.agents) {
    const auto& last = agent.summary.points.back();
    std::cout << label << ": final online " << last.mean_online
              << " bps, final offline " << last.mean_offline << " bps over "
              << agent.summary.trials << " trials\n";
  }
  for (const auto& f : result.files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

int cmd_oracle(const std::string& scenario_path, std::optional<std::string> out) {
  const kosa::Scenario sc = kosa::Scenario::load(scenario_path);
  if (sc.kind != kosa::ScenarioKind::markov) {
    std::cerr << "oracle: requires explicit transition matrices (markov kind)\n";
    return 1;
  }
  const double slot = sc.reward.slot_duration;
  nlohmann::json report;
  report["scenario"] = sc.name;

  if (!sc.model.action_dependent) {
    const auto opt = kosa::optimal_policy_throughput(sc.model);
    report["stationary_distribution"] =
        std::vector<double>(opt.stationary.begin(), opt.stationary.end());
    report["thr_opt_bps"] = opt.throughput / slot;
    nlohmann::json policy = nlohmann::json::array();
    for (std::size_t s = 0; s < opt.policy.size(); ++s) {
      int a = 0;
      opt.policy[s].maxCoeff(&a);
      policy.push_back(a);
    }
    report["optimal_policy"] = policy;
    report["thr_ml_maxcap_bps"] =
        kosa::ml_policy_throughput(sc.model, kosa::MlChannelChoice::max_capacity)
            .throughput /
        slot;
    report["thr_ml_uniform_bps"] =
        kosa::ml_policy_throughput(sc.model, kosa::MlChannelChoice::uniform)
            .throughput /
        slot;
    bool equal_caps = true;
    for (int c = 1; c < sc.channels; ++c)
      equal_caps &= sc.model.capacities(c) == sc.model.capacities(0);
    if (equal_caps) {
      const auto eq = kosa::check_ml_optimal_equivalence(sc.model);
      report["ml_equals_optimal"] = eq.equivalent;
      report["violating_states"] = eq.violating_states;
    }
  }

  const auto subsets = kosa::enumerate_channel_subsets(sc.channels, sc.max_access);
  const auto rvi = kosa::average_reward_value_iteration(
      sc.model, subsets, sc.reward.collision_cost);
  report["rho_star_bps"] = rvi.rho / slot;
  report["rho_star_policy"] = rvi.policy;

  std::cout << report.dump(2) << "\n";
  if (out) {
    std::ofstream f(*out);
    if (!f) {
      std::cerr << "cannot write " << *out << "\n";
      return 1;
    }
    f << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_validate(const std::string& config_path) {
  kosa::ExperimentConfig::load(config_path);
  std::cout << "OK: " << config_path << "\n";
  return 0;
}

int cmd_check_params(double sigma, double mu, double sigma_n2, int channels,
                     double delta, double dmin_state, double dmin_action) {
  const double theta =
      2.0 * sigma * sigma * std::log(1.0 / (1.0 - mu / 2.0));
  std::cout << "theta = 2 sigma^2 log(1/(1-mu/2)) = " << theta << "\n";
  const bool sep =
      kosa::check_noiseless_separation(sigma, mu, dmin_state, dmin_action);
  std::cout << "noiseless separation (needs min(dmin^2) > theta): "
            << (sep ? "PASS" : "FAIL") << "\n";
  const bool robust =
      kosa::check_noise_robustness(sigma, mu, sigma_n2, channels, delta);
  std::cout << "noise robustness at delta " << delta << ": "
            << (robust ? "PASS" : "FAIL") << "\n";
  return sep && robust ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-based RL agents for opportunistic spectrum access"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 1;

  auto* run = app.add_subcommand("run", "run a Monte-Carlo experiment");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--seed", seed, "override the base seed");
  run->add_option("--out", out, "override the output directory");
  run->add_option("--threads", threads, "worker pool size");

  std::string scenario_path;
  auto* oracle = app.add_subcommand("oracle", "closed-form report for a scenario");
  oracle->add_option("--config", scenario_path, "scenario file")->required();
  oracle->add_option("--out", out, "also write the report to this file");

  auto* validate = app.add_subcommand("validate", "validate an experiment config");
  validate->add_option("--config", config_path, "experiment config file")
      ->required();

  double sigma = 0.3, mu = 0.3, sigma_n2 = 0.0, delta = 0.05;
  double dmin_state = 1.0, dmin_action = 1.0;
  int channels = 5;
  auto* check = app.add_subcommand("check-params",
                                   "evaluate the (sigma, mu) selection rules");
  check->add_option("--sigma", sigma, "kernel bandwidth")->required();
  check->add_option("--mu", mu, "ALD threshold")->required();
  check->add_option("--sigma-n2", sigma_n2, "noise power per subband");
  check->add_option("--channels", channels, "number of channels K");
  check->add_option("--delta", delta, "target spurious-addition probability");
  check->add_option("--dmin-state", dmin_state, "minimum state distance");
  check->add_option("--dmin-action", dmin_action, "minimum action distance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out, threads);
    if (oracle->parsed()) return cmd_oracle(scenario_path, out);
    if (validate->parsed()) return cmd_validate(config_path);
    if (check->parsed())
      return cmd_check_params(sigma, mu, sigma_n2, channels, delta, dmin_state,
                              dmin_action);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
