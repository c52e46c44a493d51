#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kosa/harness.hpp"

using namespace kosa;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarioDir = KOSA_SCENARIO_DIR;

Scenario static_idle_scenario() {
  // One channel, never occupied by the green network.
  Scenario sc;
  sc.name = "static-idle";
  sc.kind = ScenarioKind::mac;
  sc.channels = 1;
  sc.max_access = 1;
  sc.mac = MacParams{0.0, 0.0, 0.0, 0.0, 1.0};
  sc.capacities_mac = Vec::Constant(1, 900.0);
  sc.initial_occupancy = {0};
  sc.reward.slot_duration = 1.5e-3;
  return sc;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::load(kScenarioDir / "reactive_two_stage.json");
  cfg.kernel = KernelConfig{0.08, 0.3, 1.0, "auto"};
  cfg.agents = {{AgentKind::krl, LearningParams{}, "krl"},
                {AgentKind::cbl, LearningParams{}, "cbl"}};
  cfg.trials = 4;
  cfg.horizon = 1500;
  cfg.eval_interval = 500;
  cfg.offline_rollout_steps = 400;
  cfg.eval_mode = EvalMode::both;
  cfg.seed = 7;
  cfg.out_dir = (fs::temp_directory_path() / "kosa_out").string();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config validation rejects bad shapes") {
  ExperimentConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.horizon = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.trials = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.eval_interval = cfg.horizon + 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.agents[1].label = "krl";  // duplicate
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("unknown config keys fail fast") {
  const auto path = fs::temp_directory_path() / "kosa_bad_config.json";
  {
    std::ofstream out(path);
    out << R"({"schema_version":1,"scenario":")"
        << (kScenarioDir / "ml_equivalent_3x3.json").string()
        << R"(","agents":[{"kind":"cbl"}],"trials":1,"horizon":10,"typo_key":1})";
  }
  CHECK_THROWS_AS(ExperimentConfig::load(path), std::invalid_argument);
  fs::remove(path);
}

TEST_CASE("identical seeds give identical trial records") {
  ExperimentConfig cfg = small_config();
  cfg.record_steps = true;
  const auto a = run_trial(cfg, cfg.agents[0], 42);
  const auto b = run_trial(cfg, cfg.agents[0], 42);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].action == b.steps[i].action);
    CHECK(a.steps[i].reward == b.steps[i].reward);
  }
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].online_bps == b.curve[i].online_bps);
    CHECK(a.curve[i].offline_bps == b.curve[i].offline_bps);
  }
}

TEST_CASE("collision avoidance on an always-idle channel hits the line rate") {
  ExperimentConfig cfg;
  cfg.scenario = static_idle_scenario();
  cfg.agents = {{AgentKind::ca, LearningParams{}, "ca"}};
  cfg.trials = 1;
  cfg.horizon = 2000;
  cfg.eval_interval = 2000;
  cfg.eval_mode = EvalMode::online;
  cfg.seed = 5;
  const auto rec = run_trial(cfg, cfg.agents[0], 5);
  REQUIRE(rec.curve.size() == 1);
  // 900 bits per 1.5 ms slot = 600 kbit/s
  CHECK(rec.curve[0].online_bps == doctest::Approx(600000.0).epsilon(1e-12));
}

TEST_CASE("reported throughput conserves the summed rewards") {
  ExperimentConfig cfg = small_config();
  cfg.record_steps = true;
  const auto rec = run_trial(cfg, cfg.agents[0], 11);
  double cum = 0.0;
  std::size_t next_eval = 0;
  for (const auto& s : rec.steps) {
    cum += s.reward;
    if (next_eval < rec.curve.size() && s.t == rec.curve[next_eval].step) {
      const double reported = rec.curve[next_eval].online_bps *
                              (s.t * cfg.scenario.reward.slot_duration);
      CHECK(reported == doctest::Approx(cum).epsilon(1e-9));
      ++next_eval;
    }
  }
  CHECK(next_eval == rec.curve.size());
  CHECK(rec.total_reward == doctest::Approx(cum).epsilon(1e-12));
}

TEST_CASE("timestamps strictly increase and curves align") {
  ExperimentConfig cfg = small_config();
  cfg.record_steps = true;
  const auto rec = run_trial(cfg, cfg.agents[1], 3);
  for (std::size_t i = 1; i < rec.steps.size(); ++i)
    CHECK(rec.steps[i].t == rec.steps[i - 1].t + 1);
  for (std::size_t i = 1; i < rec.curve.size(); ++i)
    CHECK(rec.curve[i].step > rec.curve[i - 1].step);
}

TEST_CASE("aggregate: basic statistics and misalignment") {
  TrialRecord a, b;
  a.curve = {{500, 100.0, 100.0}};
  CHECK(aggregate({a}).points[0].std_online == 0.0);

  b.curve = {{500, 200.0, 200.0}};
  const auto s = aggregate({a, b});
  CHECK(s.points[0].mean_online == doctest::Approx(150.0));
  CHECK(s.points[0].std_online == doctest::Approx(70.7106781).epsilon(1e-6));

  TrialRecord c;
  c.curve = {{999, 1.0, 1.0}};
  CHECK_THROWS_AS(aggregate({a, c}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("mean over n trials is a CLT-consistent estimate of a larger run") {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::load(kScenarioDir / "ml_equivalent_3x3.json");
  cfg.agents = {{AgentKind::ca, LearningParams{}, "ca"}};
  cfg.trials = 60;
  cfg.horizon = 300;
  cfg.eval_interval = 300;
  cfg.eval_mode = EvalMode::online;
  cfg.seed = 13;
  auto small = run_experiment(cfg, 2, false);
  cfg.trials = 360;
  cfg.seed = 14;
  auto large = run_experiment(cfg, 2, false);
  const auto& sp = small.agents.at("ca").summary.points.back();
  const auto& lp = large.agents.at("ca").summary.points.back();
  CHECK(std::abs(sp.mean_online - lp.mean_online) <=
        3.0 * sp.std_online / std::sqrt(60.0) +
            3.0 * lp.std_online / std::sqrt(360.0));
}

TEST_CASE("csv emission: shapes, parse-back, and determinism across threads") {
  ExperimentConfig cfg = small_config();
  const auto dir1 = fs::temp_directory_path() / "kosa_csv_1";
  const auto dir2 = fs::temp_directory_path() / "kosa_csv_2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  cfg.out_dir = dir1.string();
  auto r1 = run_experiment(cfg, 1, true);
  cfg.out_dir = dir2.string();
  auto r2 = run_experiment(cfg, 2, true);  // different thread count

  REQUIRE(r1.files.size() == 3);  // two curves + summary
  for (std::size_t i = 0; i < r1.files.size(); ++i) {
    CHECK(slurp(r1.files[i]) == slurp(r2.files[i]));
  }

  // header + one line per eval point
  const std::string body = slurp(dir1 / "curve_krl.csv");
  const long lines = std::count(body.begin(), body.end(), '\n');
  CHECK(lines == 1 + static_cast<long>(cfg.horizon / cfg.eval_interval));
  CHECK(body.rfind("step,mean_online_bps,std_online_bps,mean_offline_bps,"
                   "std_offline_bps\n", 0) == 0);

  // parse-back reproduces the in-memory summary exactly
  std::istringstream in(body);
  std::string line;
  std::getline(in, line);  // header
  const auto& points = r1.agents.at("krl").summary.points;
  for (const auto& p : points) {
    REQUIRE(std::getline(in, line));
    std::stringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');
    CHECK(std::stol(field) == p.step);
    std::getline(ls, field, ',');
    CHECK(std::stod(field) == p.mean_online);
    std::getline(ls, field, ',');
    CHECK(std::stod(field) == p.std_online);
    std::getline(ls, field, ',');
    CHECK(std::stod(field) == p.mean_offline);
    std::getline(ls, field, ',');
    CHECK(std::stod(field) == p.std_offline);
  }

  // empty-curve agents still produce a header-only file
  const auto dir3 = fs::temp_directory_path() / "kosa_csv_3";
  fs::remove_all(dir3);
  std::map<std::string, AgentResult> empty;
  AgentResult ar;
  ar.config = cfg.agents[0];
  ar.summary = Summary{};
  empty.emplace("krl", std::move(ar));
  auto files = emit_csv(empty, OracleValues{}, EvalMode::both, dir3);
  const std::string only = slurp(dir3 / "curve_krl.csv");
  CHECK(only ==
        "step,mean_online_bps,std_online_bps,mean_offline_bps,std_offline_bps\n");

  fs::remove_all(dir1);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
}

TEST_CASE("offline evaluation mutates neither agent nor environment") {
  const Scenario sc = Scenario::load(kScenarioDir / "reactive_two_stage.json");
  Rng rng(21);
  Environment env(sc);
  KernelAgent agent(AgentKind::krl, ActionSpace(2, 1, ActionEmbedding::index),
                    KernelParams{0.08}, 0.3, LearningParams{}, sc.capacities(),
                    0.0, false);
  StateVector obs = env.observe(rng);
  for (int t = 0; t < 500; ++t) {
    const int a = agent.act(obs, rng);
    const double r = env.step(a, rng);
    StateVector next = env.observe(rng);
    agent.learn(obs, a, r, next, estimate_idle(next, sc.idle_threshold));
    obs = next;
  }

  const auto before = fs::temp_directory_path() / "kosa_before.json";
  const auto after = fs::temp_directory_path() / "kosa_after.json";
  agent.save_checkpoint(before);
  const int env_state = env.state_index();

  Rng rollout_rng(99);
  offline_rollout(agent, env, 1000, rollout_rng);

  agent.save_checkpoint(after);
  CHECK(slurp(before) == slurp(after));
  CHECK(env.state_index() == env_state);
  fs::remove(before);
  fs::remove(after);
}

TEST_CASE("oracle values for a markov scenario") {
  const Scenario sc = Scenario::load(kScenarioDir / "ml_suboptimal_3x3.json");
  const auto values = compute_oracle_values(sc);
  REQUIRE(values.thr_opt_bps.has_value());
  REQUIRE(values.thr_ml_maxcap_bps.has_value());
  // 600 bits per 1.5 ms slot and 540 bits per slot respectively
  CHECK(*values.thr_opt_bps == doctest::Approx(400000.0).epsilon(1e-9));
  CHECK(*values.thr_ml_maxcap_bps == doctest::Approx(360000.0).epsilon(1e-9));
  REQUIRE(values.rho_star_bps.has_value());
  CHECK(*values.rho_star_bps == doctest::Approx(400000.0).epsilon(1e-6));
}
