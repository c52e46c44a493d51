// Exponential kernel over state-action pairs and the action-space encoding.
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kosa {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Channel power vector as observed by the receiver (one entry per channel,
/// nonnegative, in [0,1] once normalized).
using StateVector = Vec;

/// Bandwidth parameter of the exponential kernel
/// k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)).
struct KernelParams {
  double sigma = 0.3;
};

/// How channel-access actions are embedded for the kernel distance.
/// `index` embeds a single-channel action as its scalar channel index,
/// `indicator` as a binary per-channel vector. Multi-channel actions
/// require `indicator`.
enum class ActionEmbedding { index, indicator };

/// A channel-access action: the set of accessed channels plus the real
/// vector used inside the kernel distance. The embedding is deterministic
/// given the channel set, the embedding kind, and the action scale.
struct ActionEncoding {
  std::vector<int> channels;  // sorted, 0-based, size in [1, max_access]
  Vec embedding;
};

struct StateActionPair {
  StateVector state;
  ActionEncoding action;
};

/// All channel subsets of size 1..max_access in canonical order: singletons
/// by channel index, then pairs lexicographically, and so on. Every action
/// index in the project refers to a position in this enumeration.
std::vector<std::vector<int>> enumerate_channel_subsets(int channels,
                                                        int max_access);

/// The action set over enumerate_channel_subsets plus kernel embeddings.
/// Argmax tie-breaks everywhere pick the lowest action index.
class ActionSpace {
 public:
  /// `scale` multiplies the action part of the kernel distance; embeddings
  /// are stored pre-scaled so kernel evaluation needs no special casing.
  ActionSpace(int channels, int max_access, ActionEmbedding embedding,
              double scale = 1.0);

  int size() const { return static_cast<int>(actions_.size()); }
  int channels() const { return channels_; }
  int max_access() const { return max_access_; }
  ActionEmbedding embedding_kind() const { return embedding_; }
  double scale() const { return scale_; }

  const ActionEncoding& operator[](int index) const { return actions_.at(index); }
  const std::vector<ActionEncoding>& actions() const { return actions_; }

  /// Index of the action accessing exactly `channels` (sorted); -1 if absent.
  int index_of(const std::vector<int>& channels) const;

  /// Smallest embedding distance between two distinct actions
  /// (d_min(A) in the separation checks).
  double min_embedding_distance() const;

  /// `index` for single-channel access, `indicator` otherwise.
  static ActionEmbedding auto_embedding(int max_access) {
    return max_access == 1 ? ActionEmbedding::index : ActionEmbedding::indicator;
  }

 private:
  int channels_;
  int max_access_;
  ActionEmbedding embedding_;
  double scale_;
  std::vector<ActionEncoding> actions_;
};

/// k(x1, x2) = exp(-(||s1-s2||^2 + ||e(a1)-e(a2)||^2) / (2 sigma^2)).
/// Symmetric, in (0, 1], equal to 1 iff the encodings coincide.
/// Throws std::invalid_argument on dimension mismatch.
double kernel_eval(const StateActionPair& x1, const StateActionPair& x2,
                   const KernelParams& params);

/// Element l is kernel_eval(x, entries[l]); empty input yields an empty vector.
Vec kernel_vector(const StateActionPair& x,
                  const std::vector<StateActionPair>& entries,
                  const KernelParams& params);

}  // namespace kosa
