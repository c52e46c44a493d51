#include "kosa/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kosa {

namespace {

Vec make_embedding(const std::vector<int>& channels, int K,
                   ActionEmbedding kind, double scale) {
  if (kind == ActionEmbedding::index) {
    if (channels.size() != 1)
      throw std::invalid_argument(
          "index embedding is only defined for single-channel actions");
    Vec e(1);
    e(0) = scale * static_cast<double>(channels.front());
    return e;
  }
  Vec e = Vec::Zero(K);
  for (int c : channels) e(c) = scale;
  return e;
}

}  // namespace

std::vector<std::vector<int>> enumerate_channel_subsets(int channels,
                                                        int max_access) {
  if (channels < 1) throw std::invalid_argument("channel count must be >= 1");
  if (max_access < 1 || max_access > channels)
    throw std::invalid_argument("max_access must be in [1, channels]");
  std::vector<std::vector<int>> subsets;
  std::vector<int> subset;
  for (int size = 1; size <= max_access; ++size) {
    subset.resize(size);
    for (int i = 0; i < size; ++i) subset[i] = i;
    while (true) {
      subsets.push_back(subset);
      int i = size - 1;
      while (i >= 0 && subset[i] == channels - size + i) --i;
      if (i < 0) break;
      ++subset[i];
      for (int j = i + 1; j < size; ++j) subset[j] = subset[j - 1] + 1;
    }
  }
  return subsets;
}

ActionSpace::ActionSpace(int channels, int max_access, ActionEmbedding embedding,
                         double scale)
    : channels_(channels), max_access_(max_access), embedding_(embedding),
      scale_(scale) {
  if (scale <= 0.0) throw std::invalid_argument("action scale must be > 0");
  if (embedding == ActionEmbedding::index && max_access > 1)
    throw std::invalid_argument("index embedding requires max_access == 1");
  for (auto& subset : enumerate_channel_subsets(channels, max_access))
    actions_.push_back(
        {subset, make_embedding(subset, channels, embedding, scale)});
}

int ActionSpace::index_of(const std::vector<int>& channels) const {
  for (int i = 0; i < size(); ++i)
    if (actions_[i].channels == channels) return i;
  return -1;
}

double ActionSpace::min_embedding_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size(); ++i)
    for (int j = i + 1; j < size(); ++j)
      best = std::min(best, (actions_[i].embedding - actions_[j].embedding).norm());
  return best;
}

double kernel_eval(const StateActionPair& x1, const StateActionPair& x2,
                   const KernelParams& params) {
  if (x1.state.size() != x2.state.size())
    throw std::invalid_argument("kernel_eval: state dimension mismatch");
  if (x1.action.embedding.size() != x2.action.embedding.size())
    throw std::invalid_argument("kernel_eval: action embedding mismatch");
  const double d2 = (x1.state - x2.state).squaredNorm() +
                    (x1.action.embedding - x2.action.embedding).squaredNorm();
  return std::exp(-d2 / (2.0 * params.sigma * params.sigma));
}

Vec kernel_vector(const StateActionPair& x,
                  const std::vector<StateActionPair>& entries,
                  const KernelParams& params) {
  Vec k(entries.size());
  for (std::size_t l = 0; l < entries.size(); ++l)
    k(static_cast<Eigen::Index>(l)) = kernel_eval(x, entries[l], params);
  return k;
}

}  // namespace kosa
