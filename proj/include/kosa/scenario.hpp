// Scenario files: the channel model, noise, rewards and kernel settings a
// simulation runs against, loaded from strict versioned JSON.
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "kosa/environment.hpp"

namespace kosa {

enum class ScenarioKind { markov, mac };

struct Scenario {
  int schema_version = 1;
  std::string name;
  ScenarioKind kind = ScenarioKind::markov;
  int channels = 0;
  int max_access = 1;

  // markov kind
  TransitionModel model;
  int initial_state = 0;

  // mac kind
  MacParams mac;
  std::vector<std::uint8_t> initial_occupancy;
  Vec capacities_mac;  // per channel (markov kind keeps them in the model)

  NoiseModel noise;
  RewardParams reward;
  double max_power = 1.0;       // normalization divisor
  double idle_threshold = 0.5;  // on normalized powers, for A derivation
                                // and for agents estimating idle channels

  int num_actions() const;
  const Vec& capacities() const {
    return kind == ScenarioKind::markov ? model.capacities : capacities_mac;
  }

  void validate() const;
  static Scenario load(const std::filesystem::path& file);
};

/// One simulated channel environment: owns the current true state and
/// produces observations and rewards. Copyable; copies evolve independently.
/// Randomness comes from the caller's Rng so a trial can share one stream
/// between environment and agent.
class Environment {
 public:
  explicit Environment(const Scenario& scenario);

  const Scenario& scenario() const { return *scenario_; }

  /// True (raw) power vector of the current state.
  StateVector true_powers() const;

  /// Noisy, normalized power observation of the current state.
  StateVector observe(Rng& rng) const;

  /// Takes the action with the given canonical index, advances the true
  /// state, and returns the reward earned at the next state (bits).
  double step(int action_index, Rng& rng);

  /// Idle indicator per channel of the current true state.
  std::vector<std::uint8_t> true_idle() const;

  const std::vector<int>& action_channels(int action_index) const {
    return subsets_.at(action_index);
  }
  int num_actions() const { return static_cast<int>(subsets_.size()); }

  int state_index() const { return state_; }  // markov kind
  const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }

 private:
  std::shared_ptr<const Scenario> scenario_;
  std::vector<std::vector<int>> subsets_;
  int state_ = 0;
  std::vector<std::uint8_t> occupancy_;
};

/// Estimated idle channels from a normalized observation: channel c is
/// called idle iff obs(c) < threshold.
std::vector<std::uint8_t> estimate_idle(const StateVector& observation,
                                        double threshold);

}  // namespace kosa
