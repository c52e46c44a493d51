// Monte-Carlo experiment runner: seeded trials, online/offline throughput
// curves, aggregation, and deterministic CSV output.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kosa/agents.hpp"
#include "kosa/oracle.hpp"
#include "kosa/scenario.hpp"

namespace kosa {

enum class EvalMode { online, offline, both };

struct KernelConfig {
  double sigma = 0.3;
  double mu = 0.3;
  double action_scale = 1.0;
  std::string embedding = "auto";  // "auto" | "index" | "indicator"

  ActionSpace make_action_space(int channels, int max_access) const;
};

struct AgentConfig {
  AgentKind kind = AgentKind::cbl;
  LearningParams params;
  std::string label;  // defaults to the kind name; must be unique
};

struct ExperimentConfig {
  int schema_version = 1;
  Scenario scenario;
  KernelConfig kernel;
  std::vector<AgentConfig> agents;
  int trials = 100;
  long horizon = 50000;
  long eval_interval = 500;
  long offline_rollout_steps = 5000;
  EvalMode eval_mode = EvalMode::both;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool record_steps = false;

  void validate() const;
  static ExperimentConfig load(const std::filesystem::path& file);
};

struct StepLogEntry {
  long t = 0;
  int state = -1;  // markov state index, or -1 when unobservable (mac kind)
  int action = 0;
  double reward = 0.0;
};

struct EvalPoint {
  long step = 0;
  double online_bps = 0.0;
  double offline_bps = 0.0;  // NaN when offline evaluation is disabled
};

struct TrialRecord {
  std::vector<EvalPoint> curve;
  std::vector<StepLogEntry> steps;  // filled only when record_steps is set
  double total_reward = 0.0;
  long steps_run = 0;
};

struct SummaryPoint {
  long step = 0;
  double mean_online = 0.0, std_online = 0.0;
  double mean_offline = 0.0, std_offline = 0.0;
};

struct Summary {
  std::vector<SummaryPoint> points;
  int trials = 0;
};

/// Deterministic per-purpose seed derivation (splitmix64 over the mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

/// Runs one trial of `agent` on the configured scenario. The trial owns a
/// single RNG shared by environment and exploration, seeded with
/// config.seed ^ trial_index.
TrialRecord run_trial(const ExperimentConfig& config, const AgentConfig& agent,
                      std::uint64_t trial_seed);

/// Frozen-greedy rollout on a copy of the environment; the agent is const
/// and no learning happens. Returns throughput in bits/s.
double offline_rollout(const KernelAgent& agent, const Environment& env,
                       long steps, Rng& rng);
double offline_rollout(const MlAgent& agent, const Environment& env,
                       long steps, Rng& rng);
double offline_rollout(const CaAgent& agent, const Environment& env,
                       long steps, Rng& rng);

/// Pointwise sample mean and (n-1)-denominator standard deviation; curves
/// must share the eval grid.
Summary aggregate(const std::vector<TrialRecord>& records);

struct OracleValues {
  std::optional<double> thr_opt_bps;
  std::optional<double> thr_ml_maxcap_bps;
  std::optional<double> thr_ml_uniform_bps;
  std::optional<double> rho_star_bps;
};

/// Closed-form reference values for a scenario (markov kind only; a mac
/// scenario yields an empty set).
OracleValues compute_oracle_values(const Scenario& scenario);

struct AgentResult {
  AgentConfig config;
  std::vector<TrialRecord> trials;
  Summary summary;
};

struct ExperimentResult {
  std::map<std::string, AgentResult> agents;  // keyed by label
  OracleValues oracle;
  std::vector<std::filesystem::path> files;
};

/// Writes curve_<label>.csv per agent plus summary.csv; returns the paths.
/// Output is byte-deterministic for a given config and seed.
std::vector<std::filesystem::path> emit_csv(
    const std::map<std::string, AgentResult>& agents, const OracleValues& oracle,
    EvalMode mode, const std::filesystem::path& out_dir);

/// Runs every agent for `trials` trials on a bounded worker pool and merges
/// results in trial order; identical config and seed give byte-identical
/// CSVs regardless of thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 1,
                                bool write_csv = true);

}  // namespace kosa
