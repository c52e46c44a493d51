// Acceptance suite: one test case per performance criterion, each printing a
// single PASS/FAIL line with the measured numbers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "kosa/harness.hpp"

using namespace kosa;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarioDir = KOSA_SCENARIO_DIR;
constexpr int kThreads = 2;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("ACCEPTANCE %s: %s (%s)\n", id, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(pass, id, " ", detail);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Long-run average of a fixed per-state channel policy (bits per slot).
double simulate_channel_policy(const TransitionModel& model,
                               const std::vector<int>& policy, long steps,
                               std::uint64_t seed) {
  Rng rng(seed);
  int s = 0;
  double total = 0.0;
  for (long t = 0; t < steps; ++t) {
    const int a = policy[s];
    const int j = step_markov(model, s, 0, rng);
    total += model.A(j, a) == 1 ? model.capacities(a) : 0.0;
    s = j;
  }
  return total / static_cast<double>(steps);
}

std::vector<int> deterministic_policy(const ThroughputReport& report) {
  std::vector<int> policy;
  for (const auto& q : report.policy) {
    int a = 0;
    q.maxCoeff(&a);
    policy.push_back(a);
  }
  return policy;
}

// Shared fixture for criteria 1 and 7: CBL trained on the stationary
// scenario for 50k noiseless steps.
struct StationaryCblRun {
  Scenario scenario;
  std::optional<KernelAgent> agent;
  double offline_bps = 0.0;
  double thr_opt_bps = 0.0;
  double train_seconds = 0.0;
};

const StationaryCblRun& stationary_cbl_run() {
  static StationaryCblRun run = [] {
    StationaryCblRun r;
    r.scenario = Scenario::load(kScenarioDir / "stationary_10x5.json");
    const auto t0 = std::chrono::steady_clock::now();

    LearningParams lp;  // eta 0.1, epsilon 0.1 defaults
    r.agent.emplace(AgentKind::cbl, ActionSpace(5, 1, ActionEmbedding::index),
                    KernelParams{0.25}, 0.3, lp, r.scenario.capacities(), 0.0,
                    false);
    Rng rng(2024);
    Environment env(r.scenario);
    StateVector obs = env.observe(rng);
    for (long t = 0; t < 50000; ++t) {
      const int a = r.agent->act(obs, rng);
      const double reward = env.step(a, rng);
      StateVector next = env.observe(rng);
      r.agent->learn(obs, a, reward, next,
                     estimate_idle(next, r.scenario.idle_threshold));
      obs = next;
    }
    Rng rollout_rng(derive_seed(2024, 1));
    r.offline_bps = offline_rollout(*r.agent, env, 50000, rollout_rng);
    r.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    r.thr_opt_bps = optimal_policy_throughput(r.scenario.model).throughput /
                    r.scenario.reward.slot_duration;
    return r;
  }();
  return run;
}

ExperimentConfig reactive_config(long horizon, long eval_interval,
                                 long rollout, int trials,
                                 std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::load(kScenarioDir / "reactive_two_stage.json");
  cfg.kernel = KernelConfig{0.08, 0.3, 1.0, "auto"};
  LearningParams lp;  // eta 0.1, beta 0.01, gamma 0.99, epsilon 0.1
  cfg.agents = {{AgentKind::cbl, lp, "cbl"},
                {AgentKind::kql, lp, "kql"},
                {AgentKind::krl, lp, "krl"},
                {AgentKind::gkrl, lp, "gkrl"}};
  cfg.trials = trials;
  cfg.horizon = horizon;
  cfg.eval_interval = eval_interval;
  cfg.offline_rollout_steps = rollout;
  cfg.eval_mode = EvalMode::both;
  cfg.seed = seed;
  return cfg;
}

double reactive_rho_star_bps(const Scenario& sc) {
  const auto subsets = enumerate_channel_subsets(sc.channels, sc.max_access);
  return average_reward_value_iteration(sc.model, subsets,
                                        sc.reward.collision_cost)
             .rho /
         sc.reward.slot_duration;
}

std::vector<double> final_offline(const AgentResult& result) {
  std::vector<double> values;
  for (const auto& t : result.trials)
    values.push_back(t.curve.back().offline_bps);
  return values;
}

}  // namespace

TEST_CASE("C01 stationary optimality") {
  const auto& run = stationary_cbl_run();
  const double rel =
      std::abs(run.offline_bps - run.thr_opt_bps) / run.thr_opt_bps;
  const bool pass = rel <= 0.03 && run.train_seconds <= 60.0;
  report("C01 stationary-optimality", pass,
         "cbl offline " + fmt(run.offline_bps) + " bps vs optimal " +
             fmt(run.thr_opt_bps) + " bps, rel err " + fmt(rel) + ", " +
             fmt(run.train_seconds) + " s single-threaded");
}

TEST_CASE("C02 ML suboptimality") {
  const Scenario sc = Scenario::load(kScenarioDir / "ml_suboptimal_3x3.json");
  const auto eq = check_ml_optimal_equivalence(sc.model);
  REQUIRE_FALSE(eq.equivalent);

  const auto opt = optimal_policy_throughput(sc.model);
  const auto ml = ml_policy_throughput(sc.model, MlChannelChoice::max_capacity);
  const double sim =
      simulate_channel_policy(sc.model, deterministic_policy(ml), 1000000, 77);

  const double rel_match = std::abs(sim - ml.throughput) / ml.throughput;
  const double gap = opt.throughput - ml.throughput;
  const bool below =
      (opt.throughput - sim) >= gap - 0.02 * opt.throughput;
  const bool pass = rel_match <= 0.02 && below && sim < opt.throughput;
  report("C02 ml-suboptimality", pass,
         "sim " + fmt(sim) + " vs closed form " + fmt(ml.throughput) +
             " bits/slot (rel " + fmt(rel_match) + "), optimal " +
             fmt(opt.throughput) + ", gap " + fmt(gap));
}

TEST_CASE("C03 ML equivalence") {
  const Scenario sc = Scenario::load(kScenarioDir / "ml_equivalent_3x3.json");
  const auto eq = check_ml_optimal_equivalence(sc.model);
  REQUIRE(eq.equivalent);

  const auto opt = optimal_policy_throughput(sc.model);
  const auto ml = ml_policy_throughput(sc.model, MlChannelChoice::max_capacity);
  const auto opt_policy = deterministic_policy(opt);
  const auto ml_policy = deterministic_policy(ml);
  const bool same_actions = opt_policy == ml_policy;

  const double sim_opt =
      simulate_channel_policy(sc.model, opt_policy, 1000000, 101);
  const double sim_ml =
      simulate_channel_policy(sc.model, ml_policy, 1000000, 102);
  const double rel = std::abs(sim_opt - sim_ml) / sim_opt;
  const bool pass = same_actions && rel <= 0.01;
  report("C03 ml-equivalence", pass,
         std::string("identical actions: ") + (same_actions ? "yes" : "no") +
             ", sim optimal " + fmt(sim_opt) + " vs sim ml " + fmt(sim_ml) +
             " (rel " + fmt(rel) + ")");
}

TEST_CASE("C04 recursive inverse") {
  ActionSpace actions(5, 1, ActionEmbedding::index);
  KernelParams params{0.45};
  Dictionary dict(params, 0.1);
  Rng rng(404);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (dict.size() < 200) {
    StateActionPair x;
    x.state = Vec(5);
    for (int i = 0; i < 5; ++i) x.state(i) = unif(rng);
    x.action = actions[static_cast<int>(rng() % 5)];
    dict.test_and_insert(x);
  }
  Mat gram(200, 200);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j)
      gram(i, j) =
          kernel_eval(dict.entries()[i], dict.entries()[j], params);
  const double residual =
      (dict.inv_gram() * gram - Mat::Identity(200, 200)).cwiseAbs().maxCoeff();
  report("C04 recursive-inverse", residual <= 1e-8,
         "max |K^-1 K - I| = " + fmt(residual) + " after 200 insertions");
}

TEST_CASE("C05 dictionary finiteness") {
  const double sigma = 0.25, mu = 0.3;
  REQUIRE(check_noiseless_separation(sigma, mu, 1.0, 1.0));
  const Scenario sc = Scenario::load(kScenarioDir / "stationary_10x5.json");
  ActionSpace actions(5, 1, ActionEmbedding::index);
  Dictionary dict(KernelParams{sigma}, mu);

  Rng rng(505);
  std::set<std::pair<int, int>> distinct;
  for (long t = 0; t < 100000; ++t) {
    const int s = static_cast<int>(rng() % 10);
    const int a = static_cast<int>(rng() % 5);
    dict.test_and_insert(
        {sc.model.state_powers.row(s).transpose(), actions[a]});
    distinct.insert({s, a});
  }
  const bool pass = dict.size() == static_cast<int>(distinct.size()) &&
                    dict.size() <= 50;
  report("C05 dictionary-finiteness", pass,
         "dictionary " + std::to_string(dict.size()) + " entries vs " +
             std::to_string(distinct.size()) +
             " distinct observed pairs over 100000 steps");
}

TEST_CASE("C06 noise robustness") {
  const double sigma = 0.95, mu = 0.3, sigma_n2 = 0.05, delta = 0.05;
  const int K = 5;
  REQUIRE(check_noise_robustness(sigma, mu, sigma_n2, K, delta));

  ActionSpace actions(K, 1, ActionEmbedding::index);
  Dictionary dict(KernelParams{sigma}, mu);
  std::vector<Vec> states;
  for (int i = 0; i < 10; ++i) {
    Vec s = Vec::Zero(K);
    for (int b = 0; b < K; ++b) s(b) = ((i * 7 + b) % 3 == 0) ? 2.0 : 0.0;
    s(i % K) += 2.0 + 0.5 * i;
    states.push_back(s);
    dict.test_and_insert({s, actions[i % K]});
  }
  REQUIRE(dict.size() == 10);

  Rng rng(606);
  std::exponential_distribution<double> noise(1.0 / sigma_n2);
  const int trials = 10000;
  int added = 0;
  for (int t = 0; t < trials; ++t) {
    const int i = t % 10;
    Vec noisy = states[i];
    for (int c = 0; c < K; ++c) noisy(c) += noise(rng);
    if (dict.ald_test({noisy, actions[i % K]}).added) ++added;
  }
  const double rate = static_cast<double>(added) / trials;
  const double bound = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / trials);
  report("C06 noise-robustness", rate <= bound,
         "spurious addition rate " + fmt(rate) + " <= bound " + fmt(bound));
}

TEST_CASE("C07 asymptotic CBL policy") {
  const auto& run = stationary_cbl_run();
  const Scenario& sc = run.scenario;
  // sigma^2 = 0.0625 <= dmin^2 / (2 ln((N-1)/delta)) = 1/13.61 at delta 0.01
  REQUIRE(0.25 * 0.25 <= 1.0 / (2.0 * std::log(9.0 / 0.01)));

  const auto opt_policy =
      deterministic_policy(optimal_policy_throughput(sc.model));
  int matches = 0;
  const int n = sc.model.num_states();
  for (int s = 0; s < n; ++s) {
    const StateVector obs = sc.model.state_powers.row(s).transpose();
    if (run.agent->greedy_action(obs) == opt_policy[s]) ++matches;
  }
  report("C07 cbl-asymptotic-policy", matches == n,
         std::to_string(matches) + "/" + std::to_string(n) +
             " dictionary states follow argmax_a C_a <P_s, A_a>");
}

TEST_CASE("C08 reactive two-stage learning") {
  ExperimentConfig cfg = reactive_config(50000, 500, 5000, 20, 8001);
  const Scenario& sc = cfg.scenario;

  // Verified gap between the average-reward optimum and the best myopic
  // policy.
  const double rho_star_bps = reactive_rho_star_bps(sc);
  std::vector<int> myopic;
  for (int s = 0; s < sc.model.num_states(); ++s) {
    double best = -1e300;
    int best_a = 0;
    for (int a = 0; a < sc.channels; ++a) {
      double inner = 0.0;
      for (int j = 0; j < sc.model.num_states(); ++j)
        inner += sc.model.P_for(a)(s, j) * sc.model.A(j, a);
      const double v = sc.model.capacities(a) * inner;
      if (v > best) {
        best = v;
        best_a = a;
      }
    }
    myopic.push_back(best_a);
  }
  Mat chain(sc.model.num_states(), sc.model.num_states());
  for (int s = 0; s < sc.model.num_states(); ++s)
    chain.row(s) = sc.model.P_for(myopic[s]).row(s);
  const Vec pi = stationary_distribution(chain);
  double rho_myopic = 0.0;
  for (int s = 0; s < sc.model.num_states(); ++s) {
    double inner = 0.0;
    for (int j = 0; j < sc.model.num_states(); ++j)
      inner += chain(s, j) * sc.model.A(j, myopic[s]);
    rho_myopic += pi(s) * sc.model.capacities(myopic[s]) * inner;
  }
  const double rho_myopic_bps = rho_myopic / sc.reward.slot_duration;
  REQUIRE(rho_star_bps >= 1.15 * rho_myopic_bps);

  const auto result = run_experiment(cfg, kThreads, false);
  const double med_krl = median(final_offline(result.agents.at("krl")));
  const double med_gkrl = median(final_offline(result.agents.at("gkrl")));
  const double med_kql = median(final_offline(result.agents.at("kql")));
  const double med_cbl = median(final_offline(result.agents.at("cbl")));

  const bool pass = med_krl >= 0.95 * rho_star_bps &&
                    med_gkrl >= 0.95 * rho_star_bps &&
                    med_kql < 0.90 * rho_star_bps &&
                    med_cbl < 0.90 * rho_star_bps;
  report("C08 reactive-two-stage", pass,
         "rho* " + fmt(rho_star_bps) + " bps (myopic " + fmt(rho_myopic_bps) +
             "); medians krl " + fmt(med_krl) + ", gkrl " + fmt(med_gkrl) +
             ", kql " + fmt(med_kql) + ", cbl " + fmt(med_cbl));
}

TEST_CASE("C09 GKRL acceleration") {
  ExperimentConfig cfg = reactive_config(8000, 250, 4000, 20, 9001);
  const double rho_star_bps = reactive_rho_star_bps(cfg.scenario);
  const double target = 0.95 * rho_star_bps;

  const auto result = run_experiment(cfg, kThreads, false);
  auto first_reach = [&](const TrialRecord& t) {
    for (const auto& p : t.curve)
      if (p.offline_bps >= target) return static_cast<double>(p.step);
    return static_cast<double>(cfg.horizon) * 10.0;  // never reached
  };
  std::vector<double> steps_krl, steps_gkrl;
  for (const auto& t : result.agents.at("krl").trials)
    steps_krl.push_back(first_reach(t));
  for (const auto& t : result.agents.at("gkrl").trials)
    steps_gkrl.push_back(first_reach(t));

  const double med_krl = median(steps_krl);
  const double med_gkrl = median(steps_gkrl);
  const double std_krl =
      result.agents.at("krl").summary.points.back().std_offline;
  const double std_gkrl =
      result.agents.at("gkrl").summary.points.back().std_offline;

  const bool pass = med_gkrl <= med_krl && std_gkrl <= std_krl;
  report("C09 gkrl-acceleration", pass,
         "median steps to 95% of rho*: gkrl " + fmt(med_gkrl) + " vs krl " +
             fmt(med_krl) + "; final offline std: gkrl " + fmt(std_gkrl) +
             " vs krl " + fmt(std_krl));
}

TEST_CASE("C10 reactive MAC") {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::load(kScenarioDir / "mac_reactive.json");
  cfg.kernel = KernelConfig{0.4, 0.3, 1.5, "auto"};
  LearningParams lp;
  lp.cluster_delta = 0.3;
  cfg.agents = {{AgentKind::gkrl, lp, "gkrl"},
                {AgentKind::kql, lp, "kql"},
                {AgentKind::cbl, lp, "cbl"},
                {AgentKind::ca, lp, "ca"}};
  cfg.trials = 100;
  cfg.horizon = 30000;
  cfg.eval_interval = 3000;
  cfg.offline_rollout_steps = 4000;
  cfg.eval_mode = EvalMode::both;
  cfg.seed = 10001;

  const auto result = run_experiment(cfg, kThreads, false);
  const auto& gkrl = result.agents.at("gkrl").summary.points.back();
  const auto& kql = result.agents.at("kql").summary.points.back();
  const auto& cbl = result.agents.at("cbl").summary.points.back();
  // CA does not learn: its online throughput is its converged baseline.
  const auto& ca = result.agents.at("ca").summary.points.back();

  const bool pass = gkrl.mean_offline >= 1.5 * ca.mean_online &&
                    gkrl.mean_offline >= kql.mean_offline &&
                    gkrl.mean_offline >= cbl.mean_offline;
  report("C10 reactive-mac", pass,
         "gkrl " + fmt(gkrl.mean_offline) + " bps vs ca " +
             fmt(ca.mean_online) + " (x" +
             fmt(gkrl.mean_offline / ca.mean_online) + "), kql " +
             fmt(kql.mean_offline) + ", cbl " + fmt(cbl.mean_offline));
}

TEST_CASE("C11 determinism") {
  ExperimentConfig cfg = reactive_config(3000, 500, 500, 4, 11001);
  const auto dir1 = fs::temp_directory_path() / "kosa_acc_det1";
  const auto dir2 = fs::temp_directory_path() / "kosa_acc_det2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  cfg.out_dir = dir1.string();
  auto r1 = run_experiment(cfg, 1, true);
  cfg.out_dir = dir2.string();
  auto r2 = run_experiment(cfg, kThreads, true);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool identical = r1.files.size() == r2.files.size();
  for (std::size_t i = 0; identical && i < r1.files.size(); ++i)
    identical = slurp(r1.files[i]) == slurp(r2.files[i]);
  report("C11 determinism", identical,
         std::to_string(r1.files.size()) +
             " CSV files byte-identical across reruns and thread counts");
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
