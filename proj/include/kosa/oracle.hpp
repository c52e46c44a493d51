// Closed-form throughput oracles for stationary Markov models and an
// average-reward relative value iteration solver for reactive ones.
#pragma once

#include <stdexcept>
#include <vector>

#include "kosa/environment.hpp"

namespace kosa {

struct NotIrreducible : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A policy evaluated in closed form: per-state action distribution over
/// channels, its limiting throughput (bits per slot), and the chain's
/// stationary distribution.
struct ThroughputReport {
  std::vector<Vec> policy;  // q_a(s): one length-K probability vector per state
  double throughput = 0.0;  // bits per slot
  Vec stationary;
};

/// Unique pi with pi = pi P and sum(pi) = 1, solved as a linear system.
/// Irreducibility is checked structurally on the positive-entry digraph;
/// throws NotIrreducible otherwise.
Vec stationary_distribution(const Mat& P);

/// Deterministic policy pi*(s) = argmax_a C_a <P_{s,.}, A_{.,a}> (ties to the
/// lowest channel) and its limiting throughput
/// sum_s pi_s max_a { C_a <P_{s,.}, A_{.,a}> }. Stationary models only.
ThroughputReport optimal_policy_throughput(const TransitionModel& model);

/// Index of the most likely next state from s (ties to the lowest index).
int ml_predicted_state(const Mat& P, int state);

/// Preset within-set distributions for the ML prediction-and-access rule.
enum class MlChannelChoice {
  max_capacity,  // deterministic: highest C_a in T_{m_s}, ties to lowest index
  uniform        // uniform over T_{m_s}
};

/// Limiting throughput of the two-stage ML rule that predicts m_s and picks
/// a channel of T_{m_s} according to q_{m_s}. `within_set` maps each
/// predicted state m to its distribution over the K channels; support
/// outside T_m is rejected.
ThroughputReport ml_policy_throughput(const TransitionModel& model,
                                      const std::vector<Vec>& within_set);
ThroughputReport ml_policy_throughput(const TransitionModel& model,
                                      MlChannelChoice choice);

/// Builds the per-predicted-state distribution for a preset choice.
std::vector<Vec> ml_within_set_distribution(const TransitionModel& model,
                                            MlChannelChoice choice);

struct EquivalenceResult {
  bool equivalent = false;
  std::vector<int> violating_states;
};

/// Checks, for every state s,
///   max_{a in T_{m_s}} { P_{s,m_s} + sum_{j != m_s} P_{s,j} A_{j,a} }
///     > max_{a not in T_{m_s}} { sum_{j != m_s} P_{s,j} A_{j,a} }
/// (an empty right-hand set satisfies the condition; an empty T_{m_s}
/// violates it). Requires equal capacities; throws otherwise.
EquivalenceResult check_ml_optimal_equivalence(const TransitionModel& model);

struct RviResult {
  double rho = 0.0;          // optimal average reward, bits per slot
  std::vector<int> policy;   // greedy action index per state
  Vec bias;                  // relative value function h
  long iterations = 0;
};

/// Relative value iteration for the average-reward Bellman equation
///   Q*(s,a) + rho* = r(s,a) + sum_{s'} P_{s,s'}(a) max_{a'} Q*(s',a'),
/// with r(s,a) the expected reward of taking the channel subset of action a
/// (idle channels pay C_c, occupied ones -C_s, judged at the next state).
/// Stops when the span of the Bellman residual is <= tol; throws
/// ConvergenceFailure at the iteration cap. Assumes a unichain MDP.
RviResult average_reward_value_iteration(
    const TransitionModel& model,
    const std::vector<std::vector<int>>& action_subsets, double collision_cost,
    double tol = 1e-9, long max_iterations = 1000000);

}  // namespace kosa
