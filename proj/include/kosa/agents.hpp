// Learning agents and baselines: count-based learning (CBL), kernel
// Q-learning (KQL), kernel R-learning (KRL), generalized kernel R-learning
// (GKRL), ML prediction-and-access, and collision avoidance.
#pragma once

#include <filesystem>
#include <string>

#include "kosa/dictionary.hpp"
#include "kosa/scenario.hpp"

namespace kosa {

enum class AgentKind { cbl, kql, krl, gkrl, ml, ca };

AgentKind agent_kind_from_string(const std::string& name);
std::string to_string(AgentKind kind);

struct LearningParams {
  double eta = 0.1;           // coefficient step size
  double beta = 0.01;         // rho step size (KRL/GKRL)
  double gamma = 0.99;        // discount (KQL)
  double epsilon = 0.1;       // exploration probability
  double zeta = 0.0;          // GKRL damping exponent
  double cluster_delta = 0.0; // state-clustering radius; 0 = exact matching

  void validate() const;
};

/// One kernel-expansion learner. All four algorithms share the dictionary,
/// the Q expansion Q(s,a) = alpha^T k((s,a)), and epsilon-greedy selection;
/// they differ in the coefficient update and, for GKRL, in a count-damped
/// myopic penalty during action selection.
///
/// Single-writer: one agent per trial, mutation single-threaded.
class KernelAgent {
 public:
  KernelAgent(AgentKind kind, ActionSpace actions, KernelParams kernel,
              double mu, LearningParams params, Vec capacities,
              double collision_cost, bool noisy);

  AgentKind kind() const { return kind_; }
  bool noisy() const { return noisy_; }
  const ActionSpace& actions() const { return actions_; }
  const Dictionary& dictionary() const { return dict_; }
  const Vec& alpha() const { return alpha_; }
  const Vec& alpha_myopic() const { return alpha_myopic_; }
  const Vec& counts() const { return counts_; }
  Vec& counts() { return counts_; }
  double rho() const { return rho_; }
  std::vector<long> visit_counts() const;
  long exploration_count() const { return exploration_count_; }
  long steps() const { return steps_; }

  /// Q over the current expansion; empty dictionary gives 0.
  double q_value(const StateActionPair& x) const;
  double q_value(const StateVector& s, int action_index) const;
  Vec q_values(const StateVector& s) const;

  /// Pure argmax of Q (lowest index on ties); no exploration, no penalty.
  int greedy_action(const StateVector& s) const;

  /// Epsilon-greedy choice. The greedy branch maximizes Q + H where H = 0
  /// except for GKRL, whose H(s,a) = -myopic(s,a) / N_t(s,a)^{1+zeta} while
  /// max_a (Q - myopic) >= 0.
  int select_action(const StateVector& s, Rng& rng);

  /// ALD bookkeeping for an observed state. CBL/GKRL insert the whole
  /// action fan of a new state so per-(state, action) coefficients exist;
  /// KQL/KRL insert taken pairs only.
  int ensure_state(const StateVector& s);
  void ensure_pair(const StateVector& s, int action_index);

  /// select_action plus the kind-appropriate dictionary bookkeeping.
  int act(const StateVector& s, Rng& rng);

  /// One transition worth of learning; idle_next is the estimated idle set
  /// of the next state (thresholded observation).
  void learn(const StateVector& s, int action_index, double reward,
             const StateVector& s_next,
             const std::vector<std::uint8_t>& idle_next);

  // Update rules, exposed individually. `learn` dispatches to these.
  void update_cbl(const StateVector& s_prev,
                  const std::vector<std::uint8_t>& idle_next, double reward,
                  int action_index);
  void update_kql(const StateVector& s, int action_index, double reward,
                  const StateVector& s_next);
  void update_krl(const StateVector& s, int action_index, double reward,
                  const StateVector& s_next);
  /// counts[l] += k(x_t, entry_l) for every entry (cnts_t maintenance).
  void update_counts(const StateVector& s, int action_index);

  /// N_t(s,a): sum of counts over entries with action a whose state lies
  /// within the clustering radius of s.
  double n_count(const StateVector& s, int action_index) const;

  void save_checkpoint(const std::filesystem::path& file) const;
  static KernelAgent load_checkpoint(const std::filesystem::path& file);

 private:
  AgentKind kind_;
  ActionSpace actions_;
  KernelParams kernel_;
  LearningParams params_;
  Vec capacities_;
  double collision_cost_;
  bool noisy_;

  Dictionary dict_;
  Vec alpha_;         // Q-expansion coefficients
  Vec alpha_myopic_;  // GKRL's myopic coefficients (CBL-style update)
  Vec counts_;        // kernel-smoothed visit counts per entry
  double rho_ = 0.0;  // average-reward estimate (KRL/GKRL)

  Mat entry_states_;     // L x K
  Mat entry_action_d2_;  // L x |A|, scaled embedding squared distances
  std::vector<int> entry_actions_;
  std::vector<int> entry_groups_;

  struct Group {
    StateVector rep;
    long visits = 0;
    std::vector<int> entry_by_action;  // -1 where absent
  };
  std::vector<Group> groups_;

  Mat action_d2_;  // |A| x |A| embedding squared distances
  long exploration_count_ = 0;
  long steps_ = 0;

  bool fan_kind() const {
    return kind_ == AgentKind::cbl || kind_ == AgentKind::gkrl;
  }
  double cluster_eps() const;
  StateActionPair make_pair(const StateVector& s, int action_index) const;
  std::pair<int, double> nearest_group(const StateVector& s) const;
  int group_of(const StateVector& s) const;  // throws if unrepresented
  void register_entry(int action_index, int group);
  Vec state_sqdist(const StateVector& s) const;
  Vec pair_kernel(const StateVector& s, int action_index) const;
  Mat kernel_matrix(const StateVector& s) const;  // L x |A|
  void update_myopic(const StateVector& s, int action_index, double reward);
};

/// Two-stage rule: predict m_s = argmax_j P_hat(s, j), then access an idle
/// channel of m_s (highest capacity, ties to the lowest index). Returns -1
/// when T_{m_s} is empty; throws when row s of P_hat has no observations.
int ml_predict_access(const TransitionModel& empirical, int state);

/// Thresholds the observation and picks a uniformly random estimated-idle
/// channel; falls back to a uniformly random channel when none looks idle.
int collision_avoidance(const StateVector& observation, double threshold,
                        Rng& rng);

/// ML prediction-and-access baseline: identifies states by nearest known
/// representative (within cluster_delta, else a new state), accumulates
/// empirical transition counts, and follows ml_predict_access with a
/// collision-avoidance fallback. Single-channel access.
class MlAgent {
 public:
  MlAgent(int channels, Vec capacities, double idle_threshold,
          double cluster_delta);

  int act(const StateVector& observation, Rng& rng);
  /// Deterministic variant for frozen evaluation: no identification of new
  /// states, no counting; fallback is the lowest estimated-idle channel.
  int greedy_action(const StateVector& observation) const;

  int known_states() const { return static_cast<int>(reps_.size()); }
  const Mat& transition_counts() const { return counts_; }
  /// Snapshot of the learned model: P_hat rows normalized (uniform where
  /// unobserved), A thresholded from mean observed powers.
  TransitionModel empirical_model() const;

 private:
  int channels_;
  Vec capacities_;
  double idle_threshold_;
  double cluster_delta_;

  std::vector<StateVector> reps_;
  std::vector<StateVector> power_sums_;
  std::vector<long> seen_;
  Mat counts_;
  int prev_ = -1;

  int identify(const StateVector& s) const;  // -1 when nothing is close
  std::vector<std::uint8_t> idle_estimate(int state) const;
};

/// Sense-and-access baseline.
class CaAgent {
 public:
  CaAgent(int channels, double idle_threshold)
      : channels_(channels), idle_threshold_(idle_threshold) {}

  int act(const StateVector& observation, Rng& rng) const {
    return collision_avoidance(observation, idle_threshold_, rng);
  }
  int greedy_action(const StateVector& observation) const;

 private:
  int channels_;
  double idle_threshold_;
};

}  // namespace kosa
