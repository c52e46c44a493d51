#include "kosa/environment.hpp"

#include <stdexcept>

namespace kosa {

std::vector<int> TransitionModel::idle_set(int state) const {
  std::vector<int> idle;
  for (int c = 0; c < num_channels(); ++c)
    if (A(state, c) == 1) idle.push_back(c);
  return idle;
}

void TransitionModel::validate(int num_actions) const {
  const int n = num_states();
  if (n < 1) throw std::invalid_argument("transition model has no states");
  if (P.empty()) throw std::invalid_argument("transition model has no P matrix");
  if (action_dependent && num_actions > 0 &&
      static_cast<int>(P.size()) != num_actions)
    throw std::invalid_argument("reactive model needs one P matrix per action");
  for (const Mat& m : P) {
    if (m.rows() != n || m.cols() != n)
      throw std::invalid_argument("P matrix must be N x N");
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) {
        if (m(i, j) < 0.0 || m(i, j) > 1.0)
          throw std::invalid_argument("P entries must lie in [0, 1]");
        row += m(i, j);
      }
      if (std::abs(row - 1.0) > 1e-12)
        throw std::invalid_argument("P rows must sum to 1");
    }
  }
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < num_channels(); ++c)
      if (A(j, c) != 0 && A(j, c) != 1)
        throw std::invalid_argument("A entries must be 0 or 1");
  if (capacities.size() != num_channels())
    throw std::invalid_argument("capacities must have one entry per channel");
  if ((capacities.array() <= 0.0).any())
    throw std::invalid_argument("capacities must be > 0");
  if (state_powers.rows() != 0 &&
      (state_powers.rows() != n || state_powers.cols() != num_channels()))
    throw std::invalid_argument("state power table must be N x K");
}

void MacParams::validate() const {
  for (double v : {p, q, z, w})
    if (v < 0.0 || v > 1.0)
      throw std::invalid_argument("MAC probabilities must lie in [0, 1]");
  if (occupied_power <= 0.0)
    throw std::invalid_argument("occupied_power must be > 0");
}

int step_markov(const TransitionModel& model, int state, int action_index,
                Rng& rng) {
  const Mat& P = model.P_for(action_index);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  const int n = model.num_states();
  for (int j = 0; j < n; ++j) {
    cum += P(state, j);
    if (u < cum) return j;
  }
  return n - 1;  // guard against rounding in the final bucket
}

std::vector<std::uint8_t> step_mac(const std::vector<std::uint8_t>& occupancy,
                                   const ActionEncoding& action,
                                   const MacParams& params, Rng& rng) {
  std::vector<std::uint8_t> accessed(occupancy.size(), 0);
  for (int c : action.channels) accessed.at(c) = 1;

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint8_t> next(occupancy.size());
  for (std::size_t c = 0; c < occupancy.size(); ++c) {
    const double u = unif(rng);
    if (occupancy[c]) {
      const double vacate = accessed[c] ? params.q : params.w;
      next[c] = u < vacate ? 0 : 1;
    } else {
      next[c] = (!accessed[c] && u < params.z) ? 1 : 0;
    }
  }
  return next;
}

StateVector emit_observation(const StateVector& true_powers,
                             const NoiseModel& noise, Rng& rng) {
  if (noise.sigma_n2 == 0.0) return true_powers;
  std::exponential_distribution<double> exp_noise(1.0 / noise.sigma_n2);
  StateVector out = true_powers;
  for (Eigen::Index k = 0; k < out.size(); ++k) out(k) += exp_noise(rng);
  return out;
}

StateVector normalize(const StateVector& powers, double max_power) {
  if (max_power <= 0.0) throw std::invalid_argument("max_power must be > 0");
  return (powers / max_power).cwiseMax(0.0).cwiseMin(1.0);
}

double compute_reward(const std::vector<std::uint8_t>& idle_next,
                      const ActionEncoding& action, const Vec& capacities,
                      const RewardParams& params) {
  double r = 0.0;
  for (int c : action.channels)
    r += idle_next.at(c) ? capacities(c) : -params.collision_cost;
  return r;
}

}  // namespace kosa
