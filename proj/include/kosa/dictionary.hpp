// Online ALD sparsification with recursive maintenance of the inverse
// kernel matrix, plus the closed-form (sigma, mu) feasibility checks.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "kosa/kernel.hpp"

namespace kosa {

/// Thrown by Dictionary::insert when delta is at or below the numerical
/// floor (1e-12); the caller should skip the insertion.
struct IllConditionedUpdate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Outcome of the ALD test for one candidate pair.
struct AldResult {
  double delta = 0.0;   // squared approximation residual, clamped at 0
  Vec coefficients;     // c = K^{-1} k(x), length = dictionary size
  bool added = false;   // delta > mu
};

/// Ordered set of state-action pairs retained by the ALD test, together
/// with the inverse of their kernel Gram matrix. Single-writer: mutation is
/// single-threaded, const queries may run concurrently between mutations.
class Dictionary {
 public:
  Dictionary(KernelParams params, double mu);

  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  const std::vector<StateActionPair>& entries() const { return entries_; }
  const Mat& inv_gram() const { return inv_gram_; }
  double mu() const { return mu_; }
  const KernelParams& params() const { return params_; }

  /// Kernel vector of x against all entries (vectorized).
  Vec kernel_vector(const StateActionPair& x) const;

  /// delta = k(x,x) - k^T K^{-1} k; on an empty dictionary delta = k(x,x).
  AldResult ald_test(const StateActionPair& x) const;

  /// Appends x and updates the inverse via the rank-structured block formula
  ///   K_t^{-1} = (1/delta) [[delta K^{-1} + c c^T, -c], [-c^T, 1]]
  /// in O(L^2). `result` must come from ald_test on this dictionary with
  /// result.added == true. Throws IllConditionedUpdate if delta <= 1e-12.
  void insert(const StateActionPair& x, const AldResult& result);

  /// ald_test followed by insert when the test admits x.
  AldResult test_and_insert(const StateActionPair& x);

  /// Snapshot holding entries + mu + sigma; the inverse Gram matrix is
  /// recomputed on load.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& file) const;
  static Dictionary load(std::istream& in);
  static Dictionary load(const std::filesystem::path& file);

 private:
  KernelParams params_;
  double mu_;
  std::vector<StateActionPair> entries_;
  Mat features_;  // row l = [state_l, embedding_l]
  Mat inv_gram_;

  Vec feature_of(const StateActionPair& x) const;
};

/// Eq.-style noiseless separation test: distinct pairs always enter the
/// dictionary iff min(dmin_state^2, dmin_action^2) > 2 sigma^2 log(1/(1-mu/2)).
/// Throws std::invalid_argument when mu >= 2 (log argument undefined).
bool check_noiseless_separation(double sigma, double mu, double dmin_state,
                                double dmin_action);

/// Noise-robustness test at confidence delta: keeps the probability of a
/// noisy replica spawning a dictionary entry below delta when
/// 2 sigma^2 log(1/(1-mu/2)) > K (sigma_n^2 log(1/(1-(1-delta)^{1/K})))^2.
bool check_noise_robustness(double sigma, double mu, double sigma_n2,
                            int channels, double delta);

}  // namespace kosa
