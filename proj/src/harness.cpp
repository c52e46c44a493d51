#include "kosa/harness.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace kosa {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ActionSpace KernelConfig::make_action_space(int channels, int max_access) const {
  ActionEmbedding kind;
  if (embedding == "auto") kind = ActionSpace::auto_embedding(max_access);
  else if (embedding == "index") kind = ActionEmbedding::index;
  else if (embedding == "indicator") kind = ActionEmbedding::indicator;
  else throw std::invalid_argument("embedding must be auto, index or indicator");
  return ActionSpace(channels, max_access, kind, action_scale);
}

void ExperimentConfig::validate() const {
  if (schema_version != 1) throw std::invalid_argument("unsupported schema_version");
  scenario.validate();
  if (kernel.sigma <= 0.0) throw std::invalid_argument("kernel sigma must be > 0");
  if (kernel.mu <= 0.0 || kernel.mu >= 1.0)
    throw std::invalid_argument("kernel mu must lie in (0, 1)");
  if (agents.empty()) throw std::invalid_argument("at least one agent is required");
  std::set<std::string> labels;
  for (const auto& a : agents) {
    a.params.validate();
    if (a.label.empty()) throw std::invalid_argument("agent label must be nonempty");
    if (!labels.insert(a.label).second)
      throw std::invalid_argument("duplicate agent label '" + a.label + "'");
  }
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (eval_interval < 1 || eval_interval > horizon)
    throw std::invalid_argument("eval_interval must lie in [1, horizon]");
  if (eval_mode != EvalMode::online && offline_rollout_steps < 1)
    throw std::invalid_argument("offline_rollout_steps must be >= 1");
  kernel.make_action_space(scenario.channels, scenario.max_access);  // validates
}

namespace {

void require_keys(const json& j, const std::set<std::string>& required,
                  const std::set<std::string>& optional,
                  const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!required.count(key) && !optional.count(key))
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
  for (const auto& key : required)
    if (!j.contains(key))
      throw std::invalid_argument(where + ": missing key '" + key + "'");
}

LearningParams parse_learning_params(const json& j) {
  LearningParams p;
  p.eta = j.value("eta", p.eta);
  p.beta = j.value("beta", p.beta);
  p.gamma = j.value("gamma", p.gamma);
  p.epsilon = j.value("epsilon", p.epsilon);
  p.zeta = j.value("zeta", p.zeta);
  p.cluster_delta = j.value("cluster_delta", p.cluster_delta);
  return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read config file " + file.string());
  json j = json::parse(in);

  require_keys(j, {"schema_version", "scenario", "agents", "trials", "horizon"},
               {"kernel", "eval_interval", "offline_rollout_steps", "eval_mode",
                "seed", "out_dir", "record_steps", "cluster_delta"},
               "experiment");

  ExperimentConfig cfg;
  cfg.schema_version = j.at("schema_version").get<int>();
  if (j.at("scenario").is_string()) {
    // Relative scenario paths resolve against the config file location.
    std::filesystem::path p = j.at("scenario").get<std::string>();
    if (p.is_relative()) p = file.parent_path() / p;
    cfg.scenario = Scenario::load(p);
  } else {
    throw std::invalid_argument("experiment: 'scenario' must be a file path");
  }

  if (j.contains("kernel")) {
    const json& kj = j.at("kernel");
    require_keys(kj, {}, {"sigma", "mu", "action_scale", "embedding"}, "kernel");
    cfg.kernel.sigma = kj.value("sigma", cfg.kernel.sigma);
    cfg.kernel.mu = kj.value("mu", cfg.kernel.mu);
    cfg.kernel.action_scale = kj.value("action_scale", cfg.kernel.action_scale);
    cfg.kernel.embedding = kj.value("embedding", cfg.kernel.embedding);
  }

  const double global_cluster = j.value("cluster_delta", -1.0);
  for (const json& aj : j.at("agents")) {
    require_keys(aj, {"kind"},
                 {"label", "eta", "beta", "gamma", "epsilon", "zeta",
                  "cluster_delta"},
                 "agent");
    AgentConfig ac;
    ac.kind = agent_kind_from_string(aj.at("kind").get<std::string>());
    ac.params = parse_learning_params(aj);
    if (!aj.contains("cluster_delta") && global_cluster >= 0.0)
      ac.params.cluster_delta = global_cluster;
    ac.label = aj.value("label", to_string(ac.kind));
    cfg.agents.push_back(std::move(ac));
  }

  cfg.trials = j.at("trials").get<int>();
  cfg.horizon = j.at("horizon").get<long>();
  cfg.eval_interval = j.value("eval_interval", cfg.eval_interval);
  cfg.offline_rollout_steps =
      j.value("offline_rollout_steps", cfg.offline_rollout_steps);
  if (j.contains("eval_mode")) {
    const std::string m = j.at("eval_mode").get<std::string>();
    if (m == "online") cfg.eval_mode = EvalMode::online;
    else if (m == "offline") cfg.eval_mode = EvalMode::offline;
    else if (m == "both") cfg.eval_mode = EvalMode::both;
    else throw std::invalid_argument("eval_mode must be online, offline or both");
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.record_steps = j.value("record_steps", cfg.record_steps);

  cfg.validate();
  return cfg;
}

namespace {

template <class Agent>
double rollout_impl(const Agent& agent, const Environment& env, long steps,
                    Rng& rng) {
  Environment sim = env;  // the training environment is never touched
  double total = 0.0;
  StateVector obs = sim.observe(rng);
  for (long t = 0; t < steps; ++t) {
    const int a = agent.greedy_action(obs);
    total += sim.step(a, rng);
    obs = sim.observe(rng);
  }
  return (total / static_cast<double>(steps)) /
         env.scenario().reward.slot_duration;
}

}  // namespace

double offline_rollout(const KernelAgent& agent, const Environment& env,
                       long steps, Rng& rng) {
  return rollout_impl(agent, env, steps, rng);
}
double offline_rollout(const MlAgent& agent, const Environment& env,
                       long steps, Rng& rng) {
  return rollout_impl(agent, env, steps, rng);
}
double offline_rollout(const CaAgent& agent, const Environment& env,
                       long steps, Rng& rng) {
  return rollout_impl(agent, env, steps, rng);
}

namespace {

struct AnyAgent {
  std::optional<KernelAgent> kernel;
  std::optional<MlAgent> ml;
  std::optional<CaAgent> ca;

  int act(const StateVector& s, Rng& rng) {
    if (kernel) return kernel->act(s, rng);
    if (ml) return ml->act(s, rng);
    return ca->act(s, rng);
  }
  void learn(const StateVector& s, int a, double r, const StateVector& s_next,
             const std::vector<std::uint8_t>& idle_next) {
    if (kernel) kernel->learn(s, a, r, s_next, idle_next);
  }
  double rollout(const Environment& env, long steps, Rng& rng) const {
    if (kernel) return offline_rollout(*kernel, env, steps, rng);
    if (ml) return offline_rollout(*ml, env, steps, rng);
    return offline_rollout(*ca, env, steps, rng);
  }
};

AnyAgent make_agent(const ExperimentConfig& config, const AgentConfig& ac) {
  AnyAgent agent;
  const Scenario& sc = config.scenario;
  switch (ac.kind) {
    case AgentKind::ml:
      agent.ml.emplace(sc.channels, sc.capacities(), sc.idle_threshold,
                       ac.params.cluster_delta);
      break;
    case AgentKind::ca:
      agent.ca.emplace(sc.channels, sc.idle_threshold);
      break;
    default:
      agent.kernel.emplace(
          ac.kind, config.kernel.make_action_space(sc.channels, sc.max_access),
          KernelParams{config.kernel.sigma}, config.kernel.mu, ac.params,
          sc.capacities(), sc.reward.collision_cost, sc.noise.sigma_n2 > 0.0);
      break;
  }
  return agent;
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& config, const AgentConfig& ac,
                      std::uint64_t trial_seed) {
  const Scenario& sc = config.scenario;
  Rng rng(trial_seed);
  Environment env(sc);
  AnyAgent agent = make_agent(config, ac);

  TrialRecord record;
  if (config.record_steps) record.steps.reserve(config.horizon);

  StateVector obs = env.observe(rng);
  double total = 0.0;
  long eval_index = 0;
  for (long t = 1; t <= config.horizon; ++t) {
    const int a = agent.act(obs, rng);
    const double r = env.step(a, rng);
    const StateVector next_obs = env.observe(rng);
    agent.learn(obs, a, r, next_obs, estimate_idle(next_obs, sc.idle_threshold));
    total += r;
    if (config.record_steps)
      record.steps.push_back(
          {t, sc.kind == ScenarioKind::markov ? env.state_index() : -1, a, r});

    if (t % config.eval_interval == 0) {
      EvalPoint point;
      point.step = t;
      point.online_bps =
          (total / static_cast<double>(t)) / sc.reward.slot_duration;
      point.offline_bps = std::numeric_limits<double>::quiet_NaN();
      if (config.eval_mode != EvalMode::online) {
        Rng rollout_rng(derive_seed(trial_seed, 0xabcd0000ULL + eval_index));
        point.offline_bps =
            agent.rollout(env, config.offline_rollout_steps, rollout_rng);
      }
      record.curve.push_back(point);
      ++eval_index;
    }
    obs = next_obs;
  }
  record.total_reward = total;
  record.steps_run = config.horizon;
  return record;
}

Summary aggregate(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate needs >= 1 record");
  const std::size_t points = records.front().curve.size();
  for (const auto& r : records) {
    if (r.curve.size() != points)
      throw std::invalid_argument("aggregate: misaligned eval grids");
    for (std::size_t i = 0; i < points; ++i)
      if (r.curve[i].step != records.front().curve[i].step)
        throw std::invalid_argument("aggregate: misaligned eval grids");
  }

  Summary summary;
  summary.trials = static_cast<int>(records.size());
  const double n = static_cast<double>(records.size());
  summary.points.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    SummaryPoint& p = summary.points[i];
    p.step = records.front().curve[i].step;
    double sum_on = 0.0, sum_off = 0.0;
    for (const auto& r : records) {
      sum_on += r.curve[i].online_bps;
      sum_off += r.curve[i].offline_bps;
    }
    p.mean_online = sum_on / n;
    p.mean_offline = sum_off / n;
    double ss_on = 0.0, ss_off = 0.0;
    for (const auto& r : records) {
      ss_on += (r.curve[i].online_bps - p.mean_online) *
               (r.curve[i].online_bps - p.mean_online);
      ss_off += (r.curve[i].offline_bps - p.mean_offline) *
                (r.curve[i].offline_bps - p.mean_offline);
    }
    p.std_online = n > 1 ? std::sqrt(ss_on / (n - 1.0)) : 0.0;
    p.std_offline = n > 1 ? std::sqrt(ss_off / (n - 1.0)) : 0.0;
  }
  return summary;
}

OracleValues compute_oracle_values(const Scenario& scenario) {
  OracleValues values;
  if (scenario.kind != ScenarioKind::markov) return values;
  const double slot = scenario.reward.slot_duration;
  const TransitionModel& model = scenario.model;
  try {
    if (!model.action_dependent) {
      values.thr_opt_bps = optimal_policy_throughput(model).throughput / slot;
      values.thr_ml_maxcap_bps =
          ml_policy_throughput(model, MlChannelChoice::max_capacity).throughput /
          slot;
      values.thr_ml_uniform_bps =
          ml_policy_throughput(model, MlChannelChoice::uniform).throughput / slot;
    }
    const auto subsets =
        enumerate_channel_subsets(scenario.channels, scenario.max_access);
    values.rho_star_bps =
        average_reward_value_iteration(model, subsets,
                                       scenario.reward.collision_cost)
            .rho /
        slot;
  } catch (const std::exception&) {
    // Reference values are best-effort; reducible or empty-idle models
    // simply skip the corresponding row.
  }
  return values;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_csv(
    const std::map<std::string, AgentResult>& agents, const OracleValues& oracle,
    EvalMode mode, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;

  for (const auto& [label, result] : agents) {
    std::string body =
        "step,mean_online_bps,std_online_bps,mean_offline_bps,std_offline_bps\n";
    for (const auto& p : result.summary.points) {
      const bool online = mode != EvalMode::offline;
      const bool offline = mode != EvalMode::online;
      body += std::to_string(p.step);
      body += ',';
      body += online ? format_double(p.mean_online) : "";
      body += ',';
      body += online ? format_double(p.std_online) : "";
      body += ',';
      body += offline ? format_double(p.mean_offline) : "";
      body += ',';
      body += offline ? format_double(p.std_offline) : "";
      body += '\n';
    }
    const auto path = out_dir / ("curve_" + label + ".csv");
    write_file(path, body);
    files.push_back(path);
  }

  std::string summary = "name,value\n";
  for (const auto& [label, result] : agents) {
    if (result.summary.points.empty()) continue;
    const auto& last = result.summary.points.back();
    if (mode != EvalMode::offline) {
      summary += "final_online_mean_bps_" + label + "," +
                 format_double(last.mean_online) + "\n";
      summary += "final_online_std_bps_" + label + "," +
                 format_double(last.std_online) + "\n";
    }
    if (mode != EvalMode::online) {
      summary += "final_offline_mean_bps_" + label + "," +
                 format_double(last.mean_offline) + "\n";
      summary += "final_offline_std_bps_" + label + "," +
                 format_double(last.std_offline) + "\n";
    }
  }
  if (oracle.thr_opt_bps)
    summary += "oracle_thr_opt_bps," + format_double(*oracle.thr_opt_bps) + "\n";
  if (oracle.thr_ml_maxcap_bps)
    summary += "oracle_thr_ml_maxcap_bps," +
               format_double(*oracle.thr_ml_maxcap_bps) + "\n";
  if (oracle.thr_ml_uniform_bps)
    summary += "oracle_thr_ml_uniform_bps," +
               format_double(*oracle.thr_ml_uniform_bps) + "\n";
  if (oracle.rho_star_bps)
    summary += "oracle_rho_star_bps," + format_double(*oracle.rho_star_bps) + "\n";
  const auto summary_path = out_dir / "summary.csv";
  write_file(summary_path, summary);
  files.push_back(summary_path);
  return files;
}

ExperimentResult run_experiment(const ExperimentConfig& config, int threads,
                                bool write_csv) {
  config.validate();
  ExperimentResult result;
  result.oracle = compute_oracle_values(config.scenario);

  for (const auto& ac : config.agents) {
    AgentResult ar;
    ar.config = ac;
    ar.trials.resize(config.trials);

    std::atomic<int> next{0};
    auto worker = [&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= config.trials) break;
        ar.trials[i] =
            run_trial(config, ac, config.seed ^ static_cast<std::uint64_t>(i));
      }
    };
    const int pool = std::max(1, std::min<int>(threads, config.trials));
    if (pool == 1) {
      worker();
    } else {
      std::vector<std::thread> team;
      team.reserve(pool);
      for (int i = 0; i < pool; ++i) team.emplace_back(worker);
      for (auto& t : team) t.join();
    }

    ar.summary = aggregate(ar.trials);
    result.agents.emplace(ac.label, std::move(ar));
  }

  if (write_csv)
    result.files =
        emit_csv(result.agents, result.oracle, config.eval_mode, config.out_dir);
  return result;
}

}  // namespace kosa
