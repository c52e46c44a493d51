// Channel simulator: stationary/reactive Markov chains, the probabilistic
// reactive MAC, exponential receiver noise, and reward generation.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "kosa/kernel.hpp"

namespace kosa {

using Rng = std::mt19937_64;

/// Action-indexed transition matrices plus the state/idle-channel
/// connectivity matrix A (A(j,c) = 1 iff channel c is idle in state j).
struct TransitionModel {
  std::vector<Mat> P;        // one matrix if !action_dependent, else |A| of them
  bool action_dependent = false;
  Eigen::MatrixXi A;         // N x K, entries in {0,1}
  Vec capacities;            // K, bits per slot per channel
  Mat state_powers;          // N x K raw received powers per state

  int num_states() const { return static_cast<int>(A.rows()); }
  int num_channels() const { return static_cast<int>(A.cols()); }
  const Mat& P_for(int action_index) const {
    return action_dependent ? P.at(action_index) : P.front();
  }
  std::vector<int> idle_set(int state) const;

  /// Rejects non-row-stochastic matrices, invalid A entries, and
  /// nonpositive capacities. `num_actions` <= 0 skips the P-count check.
  void validate(int num_actions = 0) const;
};

/// Green-network MAC reaction probabilities. On a collided channel the green
/// network vacates w.p. q; p is its persistence weight inside the remaining
/// stay-occupied mass and does not change the occupancy distribution. z is
/// the probability of occupying an idle, un-accessed channel, w of
/// spontaneously vacating an occupied, un-collided one.
struct MacParams {
  double p = 0.2;
  double q = 0.9;
  double z = 0.5;
  double w = 0.2;
  double occupied_power = 1.0;  // raw received power on a busy channel

  void validate() const;
};

struct NoiseModel {
  double sigma_n2 = 0.0;  // per-subband noise power (exponential mean)
};

struct RewardParams {
  double collision_cost = 0.0;   // C_s, bits
  double slot_duration = 1.5e-3; // seconds
};

/// Draws the next state index from row `state` of P(action).
int step_markov(const TransitionModel& model, int state, int action_index,
                Rng& rng);

/// Advances the per-channel occupancy one slot. Each channel evolves
/// independently: occupied+accessed vacates w.p. q; occupied+unaccessed
/// vacates w.p. w; idle+unaccessed becomes occupied w.p. z; idle+accessed
/// stays idle (the green network defers to observed use). Exactly one
/// uniform draw is consumed per channel.
std::vector<std::uint8_t> step_mac(const std::vector<std::uint8_t>& occupancy,
                                   const ActionEncoding& action,
                                   const MacParams& params, Rng& rng);

/// Adds i.i.d. Exponential(mean sigma_n2) noise per channel;
/// sigma_n2 == 0 returns the input unchanged without consuming draws.
StateVector emit_observation(const StateVector& true_powers,
                             const NoiseModel& noise, Rng& rng);

/// Divides by max_power and clamps to [0, 1].
StateVector normalize(const StateVector& powers, double max_power);

/// Sum over accessed channels of C_c for idle channels and -C_s for
/// occupied ones, judged at the next state (idle_next(c) = 1 iff idle).
double compute_reward(const std::vector<std::uint8_t>& idle_next,
                      const ActionEncoding& action, const Vec& capacities,
                      const RewardParams& params);

}  // namespace kosa
