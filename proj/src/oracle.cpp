#include "kosa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace kosa {

namespace {

// Both directions reachable from node 0 in the positive-entry digraph.
bool strongly_connected(const Mat& P) {
  const int n = static_cast<int>(P.rows());
  auto reachable = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
      const int i = q.front();
      q.pop();
      for (int j = 0; j < n; ++j) {
        const double w = transpose ? P(j, i) : P(i, j);
        if (w > 0.0 && !seen[j]) {
          seen[j] = 1;
          ++count;
          q.push(j);
        }
      }
    }
    return count == n;
  };
  return reachable(false) && reachable(true);
}

double inner_product_PA(const Mat& P, const Eigen::MatrixXi& A, int s, int a) {
  double v = 0.0;
  for (int j = 0; j < P.cols(); ++j) v += P(s, j) * A(j, a);
  return v;
}

}  // namespace

Vec stationary_distribution(const Mat& P) {
  const int n = static_cast<int>(P.rows());
  if (P.cols() != n) throw std::invalid_argument("P must be square");
  if (!strongly_connected(P))
    throw NotIrreducible("transition matrix is not irreducible");

  // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  Mat A = P.transpose() - Mat::Identity(n, n);
  A.row(n - 1).setOnes();
  Vec b = Vec::Zero(n);
  b(n - 1) = 1.0;
  Vec pi = A.partialPivLu().solve(b);
  return pi;
}

ThroughputReport optimal_policy_throughput(const TransitionModel& model) {
  if (model.action_dependent)
    throw std::invalid_argument("optimal_policy_throughput needs a stationary model");
  const Mat& P = model.P.front();
  const int n = model.num_states();
  const int K = model.num_channels();

  ThroughputReport report;
  report.stationary = stationary_distribution(P);
  report.policy.resize(n);
  report.throughput = 0.0;
  for (int s = 0; s < n; ++s) {
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < K; ++a) {
      const double v = model.capacities(a) * inner_product_PA(P, model.A, s, a);
      if (v > best_value) {
        best_value = v;
        best = a;
      }
    }
    report.policy[s] = Vec::Zero(K);
    report.policy[s](best) = 1.0;
    report.throughput += report.stationary(s) * best_value;
  }
  return report;
}

int ml_predicted_state(const Mat& P, int state) {
  int m = 0;
  for (int j = 1; j < P.cols(); ++j)
    if (P(state, j) > P(state, m)) m = j;
  return m;
}

std::vector<Vec> ml_within_set_distribution(const TransitionModel& model,
                                            MlChannelChoice choice) {
  const int n = model.num_states();
  const int K = model.num_channels();
  std::vector<Vec> q(n, Vec::Zero(K));
  for (int m = 0; m < n; ++m) {
    const auto idle = model.idle_set(m);
    if (idle.empty()) continue;  // rejected later if m is ever predicted
    if (choice == MlChannelChoice::uniform) {
      for (int a : idle) q[m](a) = 1.0 / static_cast<double>(idle.size());
    } else {
      int best = idle.front();
      for (int a : idle)
        if (model.capacities(a) > model.capacities(best)) best = a;
      q[m](best) = 1.0;
    }
  }
  return q;
}

ThroughputReport ml_policy_throughput(const TransitionModel& model,
                                      const std::vector<Vec>& within_set) {
  if (model.action_dependent)
    throw std::invalid_argument("ml_policy_throughput needs a stationary model");
  const Mat& P = model.P.front();
  const int n = model.num_states();
  const int K = model.num_channels();
  if (static_cast<int>(within_set.size()) != n)
    throw std::invalid_argument("within_set needs one distribution per state");

  ThroughputReport report;
  report.stationary = stationary_distribution(P);
  report.policy.resize(n);
  report.throughput = 0.0;
  for (int s = 0; s < n; ++s) {
    const int m = ml_predicted_state(P, s);
    const Vec& q = within_set[m];
    if (q.size() != K || (q.array() < 0.0).any() ||
        std::abs(q.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("within_set entries must be probability vectors");
    for (int a = 0; a < K; ++a)
      if (q(a) > 0.0 && model.A(m, a) != 1)
        throw std::invalid_argument(
            "within_set distribution has support outside T_{m_s}");
    report.policy[s] = q;

    // Thr contribution: pi_s ( P_{s,m} sum_{a in T_m} q_a C_a
    //                        + sum_{j != m} P_{s,j} sum_{a in T_j cap T_m} q_a C_a )
    double inner = 0.0;
    for (int a = 0; a < K; ++a)
      if (q(a) > 0.0) inner += q(a) * model.capacities(a);
    inner *= P(s, m);
    for (int j = 0; j < n; ++j) {
      if (j == m) continue;
      double both = 0.0;
      for (int a = 0; a < K; ++a)
        if (q(a) > 0.0 && model.A(j, a) == 1) both += q(a) * model.capacities(a);
      inner += P(s, j) * both;
    }
    report.throughput += report.stationary(s) * inner;
  }
  return report;
}

ThroughputReport ml_policy_throughput(const TransitionModel& model,
                                      MlChannelChoice choice) {
  return ml_policy_throughput(model, ml_within_set_distribution(model, choice));
}

EquivalenceResult check_ml_optimal_equivalence(const TransitionModel& model) {
  if (model.action_dependent)
    throw std::invalid_argument("equivalence check needs a stationary model");
  const double c0 = model.capacities(0);
  for (int a = 1; a < model.num_channels(); ++a)
    if (std::abs(model.capacities(a) - c0) > 1e-12)
      throw std::invalid_argument("equivalence check assumes equal capacities");

  const Mat& P = model.P.front();
  const int n = model.num_states();
  const int K = model.num_channels();
  EquivalenceResult result;
  for (int s = 0; s < n; ++s) {
    const int m = ml_predicted_state(P, s);
    double lhs = -std::numeric_limits<double>::infinity();
    double rhs = -std::numeric_limits<double>::infinity();
    bool lhs_empty = true, rhs_empty = true;
    for (int a = 0; a < K; ++a) {
      double tail = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != m) tail += P(s, j) * model.A(j, a);
      if (model.A(m, a) == 1) {
        lhs = std::max(lhs, P(s, m) + tail);
        lhs_empty = false;
      } else {
        rhs = std::max(rhs, tail);
        rhs_empty = false;
      }
    }
    const bool holds = !lhs_empty && (rhs_empty || lhs > rhs);
    if (!holds) result.violating_states.push_back(s);
  }
  result.equivalent = result.violating_states.empty();
  return result;
}

RviResult average_reward_value_iteration(
    const TransitionModel& model,
    const std::vector<std::vector<int>>& action_subsets, double collision_cost,
    double tol, long max_iterations) {
  if (tol <= 0.0) throw std::invalid_argument("tol must be > 0");
  const int n = model.num_states();
  const int num_actions = static_cast<int>(action_subsets.size());

  // Expected one-step reward r(s,a) = sum_j P_{s,j}(a) R(a, T_j).
  Mat reward(n, num_actions);
  for (int a = 0; a < num_actions; ++a) {
    const Mat& P = model.P_for(a);
    for (int s = 0; s < n; ++s) {
      double r = 0.0;
      for (int j = 0; j < n; ++j) {
        double rj = 0.0;
        for (int c : action_subsets[a])
          rj += model.A(j, c) == 1 ? model.capacities(c) : -collision_cost;
        r += P(s, j) * rj;
      }
      reward(s, a) = r;
    }
  }

  Vec h = Vec::Zero(n);
  Vec w(n);
  RviResult result;
  result.policy.assign(n, 0);
  for (long it = 1; it <= max_iterations; ++it) {
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < num_actions; ++a) {
        const double v = reward(s, a) + model.P_for(a).row(s).dot(h);
        if (v > best) {
          best = v;
          best_a = a;
        }
      }
      w(s) = best;
      result.policy[s] = best_a;
    }
    const Vec diff = w - h;
    const double span = diff.maxCoeff() - diff.minCoeff();
    result.rho = 0.5 * (diff.maxCoeff() + diff.minCoeff());
    result.iterations = it;
    h = w.array() - w(0);  // subtract the reference state to keep h bounded
    if (span <= tol) {
      result.bias = h;
      return result;
    }
  }
  throw ConvergenceFailure("relative value iteration hit the iteration cap");
}

}  // namespace kosa
