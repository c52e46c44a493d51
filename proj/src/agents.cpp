#include "kosa/agents.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kosa/oracle.hpp"

namespace kosa {

AgentKind agent_kind_from_string(const std::string& name) {
  if (name == "cbl") return AgentKind::cbl;
  if (name == "kql") return AgentKind::kql;
  if (name == "krl") return AgentKind::krl;
  if (name == "gkrl") return AgentKind::gkrl;
  if (name == "ml") return AgentKind::ml;
  if (name == "ca") return AgentKind::ca;
  throw std::invalid_argument("unknown agent kind '" + name + "'");
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::cbl: return "cbl";
    case AgentKind::kql: return "kql";
    case AgentKind::krl: return "krl";
    case AgentKind::gkrl: return "gkrl";
    case AgentKind::ml: return "ml";
    case AgentKind::ca: return "ca";
  }
  return "?";
}

void LearningParams::validate() const {
  if (eta < 0.0) throw std::invalid_argument("eta must be >= 0");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("gamma must lie in [0, 1)");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (zeta < 0.0) throw std::invalid_argument("zeta must be >= 0");
  if (cluster_delta < 0.0)
    throw std::invalid_argument("cluster_delta must be >= 0");
}

namespace {

constexpr double kGreedyTol = 1e-12;  // float-equality tolerance, Alg. step (d)

int argmax_lowest(const Vec& values) {
  int best = 0;
  for (int i = 1; i < values.size(); ++i)
    if (values(i) > values(best)) best = i;
  return best;
}

}  // namespace

KernelAgent::KernelAgent(AgentKind kind, ActionSpace actions,
                         KernelParams kernel, double mu, LearningParams params,
                         Vec capacities, double collision_cost, bool noisy)
    : kind_(kind), actions_(std::move(actions)), kernel_(kernel),
      params_(params), capacities_(std::move(capacities)),
      collision_cost_(collision_cost), noisy_(noisy), dict_(kernel, mu) {
  if (kind_ == AgentKind::ml || kind_ == AgentKind::ca)
    throw std::invalid_argument("KernelAgent handles cbl/kql/krl/gkrl only");
  params_.validate();
  if (mu >= 1.0)
    throw std::invalid_argument("mu must be < 1 so the first sample enters");
  if (capacities_.size() != actions_.channels())
    throw std::invalid_argument("capacities must have one entry per channel");

  const int n = actions_.size();
  action_d2_.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      action_d2_(i, j) =
          (actions_[i].embedding - actions_[j].embedding).squaredNorm();

  if (fan_kind()) {
    // The per-(state, action) table only materializes if every action of a
    // fresh state passes the ALD test against its own siblings.
    const double dmin = actions_.min_embedding_distance();
    if (n > 1 &&
        1.0 - std::exp(-dmin * dmin / (kernel_.sigma * kernel_.sigma)) <= mu)
      throw std::invalid_argument(
          "kernel bandwidth cannot separate actions at this mu; "
          "decrease sigma or mu or increase the action scale");
  }
}

double KernelAgent::cluster_eps() const {
  // A zero radius still has to match bit-identical noiseless revisits.
  return std::max(params_.cluster_delta, 1e-9);
}

StateActionPair KernelAgent::make_pair(const StateVector& s,
                                       int action_index) const {
  return {s, actions_[action_index]};
}

std::pair<int, double> KernelAgent::nearest_group(const StateVector& s) const {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const double d = (groups_[g].rep - s).norm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(g);
    }
  }
  return {best, best_d};
}

int KernelAgent::group_of(const StateVector& s) const {
  const auto [g, d] = nearest_group(s);
  if (g < 0 || d > cluster_eps())
    throw std::logic_error("state has no dictionary group; act() must run first");
  return g;
}

void KernelAgent::register_entry(int action_index, int group) {
  const int L = dict_.size();  // entry already inserted
  const auto& x = dict_.entries().back();

  entry_states_.conservativeResize(L, x.state.size());
  entry_states_.row(L - 1) = x.state.transpose();
  entry_action_d2_.conservativeResize(L, actions_.size());
  entry_action_d2_.row(L - 1) = action_d2_.row(action_index);
  entry_actions_.push_back(action_index);
  entry_groups_.push_back(group);

  alpha_.conservativeResize(L);
  alpha_(L - 1) = 0.0;
  alpha_myopic_.conservativeResize(L);
  alpha_myopic_(L - 1) = 0.0;
  counts_.conservativeResize(L);
  counts_(L - 1) = 0.0;
}

int KernelAgent::ensure_state(const StateVector& s) {
  const auto [g, d] = nearest_group(s);
  if (g >= 0 && d <= cluster_eps()) return g;

  const int gid = static_cast<int>(groups_.size());
  Group grp{s, 0, std::vector<int>(actions_.size(), -1)};
  bool any = false;
  for (int a = 0; a < actions_.size(); ++a) {
    AldResult res = dict_.ald_test(make_pair(s, a));
    if (!res.added) continue;
    dict_.insert(make_pair(s, a), res);
    register_entry(a, gid);
    grp.entry_by_action[a] = dict_.size() - 1;
    any = true;
  }
  if (!any) return g;  // already representable; fall back to the nearest group
  groups_.push_back(std::move(grp));
  return gid;
}

void KernelAgent::ensure_pair(const StateVector& s, int action_index) {
  auto [g, d] = nearest_group(s);
  const bool matched = g >= 0 && d <= cluster_eps();
  if (matched && groups_[g].entry_by_action[action_index] >= 0) return;

  AldResult res = dict_.ald_test(make_pair(s, action_index));
  if (!res.added) return;
  if (!matched) {
    g = static_cast<int>(groups_.size());
    groups_.push_back({s, 0, std::vector<int>(actions_.size(), -1)});
  }
  dict_.insert(make_pair(s, action_index), res);
  register_entry(action_index, g);
  groups_[g].entry_by_action[action_index] = dict_.size() - 1;
}

Vec KernelAgent::state_sqdist(const StateVector& s) const {
  if (dict_.empty()) return Vec(0);
  return (entry_states_.rowwise() - s.transpose()).rowwise().squaredNorm();
}

Vec KernelAgent::pair_kernel(const StateVector& s, int action_index) const {
  if (dict_.empty()) return Vec(0);
  const double inv = -1.0 / (2.0 * kernel_.sigma * kernel_.sigma);
  return ((state_sqdist(s) + entry_action_d2_.col(action_index)) * inv)
      .array()
      .exp();
}

Mat KernelAgent::kernel_matrix(const StateVector& s) const {
  const double inv = -1.0 / (2.0 * kernel_.sigma * kernel_.sigma);
  Mat d2 = entry_action_d2_;
  d2.colwise() += state_sqdist(s);
  return (d2 * inv).array().exp();
}

double KernelAgent::q_value(const StateActionPair& x) const {
  if (dict_.empty()) return 0.0;
  return dict_.kernel_vector(x).dot(alpha_);
}

double KernelAgent::q_value(const StateVector& s, int action_index) const {
  if (dict_.empty()) return 0.0;
  return pair_kernel(s, action_index).dot(alpha_);
}

Vec KernelAgent::q_values(const StateVector& s) const {
  if (dict_.empty()) return Vec::Zero(actions_.size());
  return kernel_matrix(s).transpose() * alpha_;
}

int KernelAgent::greedy_action(const StateVector& s) const {
  return argmax_lowest(q_values(s));
}

double KernelAgent::n_count(const StateVector& s, int action_index) const {
  if (dict_.empty()) return 0.0;
  const double r2 = cluster_eps() * cluster_eps();
  const Vec sd = state_sqdist(s);
  double n = 0.0;
  for (int l = 0; l < dict_.size(); ++l)
    if (entry_actions_[l] == action_index && sd(l) < r2) n += counts_(l);
  return n;
}

int KernelAgent::select_action(const StateVector& s, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < params_.epsilon) {
    ++exploration_count_;
    return std::uniform_int_distribution<int>(0, actions_.size() - 1)(rng);
  }
  if (dict_.empty()) return 0;

  const Mat km = kernel_matrix(s);
  Vec score = km.transpose() * alpha_;
  if (kind_ == AgentKind::gkrl) {
    const Vec myopic = km.transpose() * alpha_myopic_;
    if ((score - myopic).maxCoeff() >= -kGreedyTol) {
      const double r2 = cluster_eps() * cluster_eps();
      const Vec sd = state_sqdist(s);
      for (int a = 0; a < actions_.size(); ++a) {
        double n = 0.0;
        for (int l = 0; l < dict_.size(); ++l)
          if (entry_actions_[l] == a && sd(l) < r2) n += counts_(l);
        // No count mass in the ball means no myopic evidence to damp.
        if (n > 0.0)
          score(a) -= myopic(a) / std::pow(n, 1.0 + params_.zeta);
      }
    }
  }
  return argmax_lowest(score);
}

int KernelAgent::act(const StateVector& s, Rng& rng) {
  if (fan_kind()) ensure_state(s);
  return select_action(s, rng);
}

void KernelAgent::update_cbl(const StateVector& s_prev,
                             const std::vector<std::uint8_t>& idle_next,
                             double reward, int action_index) {
  if (noisy_) {
    // Small-step kernelized form for noisy observations.
    const Vec kx = pair_kernel(s_prev, action_index);
    alpha_ += params_.eta * (reward - alpha_.dot(kx)) * kx;
    return;
  }
  // Exact per-state running averages: every action's coefficient moves
  // toward the reward it would have earned at the observed next state.
  const int gid = group_of(s_prev);
  Group& grp = groups_[gid];
  grp.visits += 1;
  const double n = static_cast<double>(grp.visits);
  const RewardParams rp{collision_cost_, 1.0};
  for (int a = 0; a < actions_.size(); ++a) {
    const int idx = grp.entry_by_action[a];
    if (idx < 0)
      throw std::logic_error("dictionary entry missing for state group");
    const double cf = compute_reward(idle_next, actions_[a], capacities_, rp);
    alpha_(idx) += (cf - alpha_(idx)) / n;
  }
}

void KernelAgent::update_kql(const StateVector& s, int action_index,
                             double reward, const StateVector& s_next) {
  if (dict_.empty()) return;
  const Vec kx = pair_kernel(s, action_index);
  const double q_next = q_values(s_next).maxCoeff();
  alpha_ +=
      params_.eta * (reward + params_.gamma * q_next - alpha_.dot(kx)) * kx;
}

void KernelAgent::update_krl(const StateVector& s, int action_index,
                             double reward, const StateVector& s_next) {
  if (dict_.empty()) return;
  const Vec kx = pair_kernel(s, action_index);
  const double q_taken = alpha_.dot(kx);
  const double q_cur_max = q_values(s).maxCoeff();
  const double q_next_max = q_values(s_next).maxCoeff();

  alpha_ += params_.eta * (reward - rho_ + q_next_max - q_taken) * kx;

  // rho moves only when the taken action was greedy.
  if (std::abs(q_taken - q_cur_max) <= kGreedyTol)
    rho_ += params_.beta * (reward - rho_ + q_next_max - q_cur_max);
}

void KernelAgent::update_counts(const StateVector& s, int action_index) {
  if (dict_.empty()) return;
  counts_ += pair_kernel(s, action_index);
}

void KernelAgent::update_myopic(const StateVector& s, int action_index,
                                double reward) {
  if (dict_.empty()) return;
  const Vec kx = pair_kernel(s, action_index);
  const double err = reward - alpha_myopic_.dot(kx);
  if (noisy_) {
    alpha_myopic_ += params_.eta * err * kx;
  } else {
    alpha_myopic_ +=
        err * (kx.array() / counts_.array().max(1.0)).matrix();
  }
}

void KernelAgent::learn(const StateVector& s, int action_index, double reward,
                        const StateVector& s_next,
                        const std::vector<std::uint8_t>& idle_next) {
  ++steps_;
  switch (kind_) {
    case AgentKind::cbl:
      update_cbl(s, idle_next, reward, action_index);
      update_counts(s, action_index);
      break;
    case AgentKind::kql:
      ensure_pair(s, action_index);
      update_kql(s, action_index, reward, s_next);
      update_counts(s, action_index);
      break;
    case AgentKind::krl:
      ensure_pair(s, action_index);
      update_krl(s, action_index, reward, s_next);
      update_counts(s, action_index);
      break;
    case AgentKind::gkrl:
      // Counts first: the count-normalized myopic step divides by the
      // tally that includes this visit.
      update_counts(s, action_index);
      update_myopic(s, action_index, reward);
      update_krl(s, action_index, reward, s_next);
      break;
    default:
      break;
  }
}

std::vector<long> KernelAgent::visit_counts() const {
  std::vector<long> v;
  v.reserve(groups_.size());
  for (const auto& g : groups_) v.push_back(g.visits);
  return v;
}

void KernelAgent::save_checkpoint(const std::filesystem::path& file) const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = to_string(kind_);
  j["noisy"] = noisy_;
  j["params"] = {{"eta", params_.eta},       {"beta", params_.beta},
                 {"gamma", params_.gamma},   {"epsilon", params_.epsilon},
                 {"zeta", params_.zeta},     {"cluster_delta", params_.cluster_delta}};
  j["action_space"] = {
      {"channels", actions_.channels()},
      {"max_access", actions_.max_access()},
      {"embedding",
       actions_.embedding_kind() == ActionEmbedding::index ? "index" : "indicator"},
      {"scale", actions_.scale()}};
  j["capacities"] = std::vector<double>(capacities_.begin(), capacities_.end());
  j["collision_cost"] = collision_cost_;
  std::ostringstream dict_json;
  dict_.save(dict_json);
  j["dictionary"] = nlohmann::json::parse(dict_json.str());
  j["alpha"] = std::vector<double>(alpha_.begin(), alpha_.end());
  j["alpha_myopic"] =
      std::vector<double>(alpha_myopic_.begin(), alpha_myopic_.end());
  j["counts"] = std::vector<double>(counts_.begin(), counts_.end());
  j["rho"] = rho_;
  j["entry_actions"] = entry_actions_;
  j["entry_groups"] = entry_groups_;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : groups_) {
    j["groups"].push_back(
        {{"rep", std::vector<double>(g.rep.begin(), g.rep.end())},
         {"visits", g.visits},
         {"entry_by_action", g.entry_by_action}});
  }
  j["exploration_count"] = exploration_count_;
  j["steps"] = steps_;

  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

KernelAgent KernelAgent::load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("schema_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version");

  const auto& as = j.at("action_space");
  ActionSpace actions(as.at("channels").get<int>(), as.at("max_access").get<int>(),
                      as.at("embedding").get<std::string>() == "index"
                          ? ActionEmbedding::index
                          : ActionEmbedding::indicator,
                      as.at("scale").get<double>());
  const auto& pj = j.at("params");
  LearningParams params{pj.at("eta").get<double>(),
                        pj.at("beta").get<double>(),
                        pj.at("gamma").get<double>(),
                        pj.at("epsilon").get<double>(),
                        pj.at("zeta").get<double>(),
                        pj.at("cluster_delta").get<double>()};
  auto caps = j.at("capacities").get<std::vector<double>>();

  std::istringstream dict_json(j.at("dictionary").dump());
  Dictionary dict = Dictionary::load(dict_json);

  KernelAgent agent(agent_kind_from_string(j.at("kind").get<std::string>()),
                    std::move(actions), dict.params(), dict.mu(), params,
                    Eigen::Map<const Vec>(caps.data(), caps.size()),
                    j.at("collision_cost").get<double>(),
                    j.at("noisy").get<bool>());

  agent.dict_ = std::move(dict);
  auto alpha = j.at("alpha").get<std::vector<double>>();
  auto alpham = j.at("alpha_myopic").get<std::vector<double>>();
  auto counts = j.at("counts").get<std::vector<double>>();
  agent.alpha_ = Eigen::Map<const Vec>(alpha.data(), alpha.size());
  agent.alpha_myopic_ = Eigen::Map<const Vec>(alpham.data(), alpham.size());
  agent.counts_ = Eigen::Map<const Vec>(counts.data(), counts.size());
  agent.rho_ = j.at("rho").get<double>();
  agent.entry_actions_ = j.at("entry_actions").get<std::vector<int>>();
  agent.entry_groups_ = j.at("entry_groups").get<std::vector<int>>();
  for (const auto& gj : j.at("groups")) {
    Group g;
    auto rep = gj.at("rep").get<std::vector<double>>();
    g.rep = Eigen::Map<const Vec>(rep.data(), rep.size());
    g.visits = gj.at("visits").get<long>();
    g.entry_by_action = gj.at("entry_by_action").get<std::vector<int>>();
    agent.groups_.push_back(std::move(g));
  }
  agent.exploration_count_ = j.at("exploration_count").get<long>();
  agent.steps_ = j.at("steps").get<long>();

  const int L = agent.dict_.size();
  if (static_cast<int>(agent.entry_actions_.size()) != L ||
      agent.alpha_.size() != L || agent.counts_.size() != L)
    throw std::runtime_error("checkpoint is internally inconsistent");
  if (L > 0) {
    const auto& entries = agent.dict_.entries();
    agent.entry_states_.resize(L, entries.front().state.size());
    agent.entry_action_d2_.resize(L, agent.actions_.size());
    for (int l = 0; l < L; ++l) {
      agent.entry_states_.row(l) = entries[l].state.transpose();
      agent.entry_action_d2_.row(l) =
          agent.action_d2_.row(agent.entry_actions_[l]);
    }
  }
  return agent;
}

int ml_predict_access(const TransitionModel& empirical, int state) {
  const Mat& P = empirical.P.front();
  if (P.row(state).sum() <= 0.0)
    throw std::invalid_argument("no observations for this state row");
  const int m = ml_predicted_state(P, state);
  int best = -1;
  for (int c = 0; c < empirical.num_channels(); ++c) {
    if (empirical.A(m, c) != 1) continue;
    if (best < 0 || empirical.capacities(c) > empirical.capacities(best))
      best = c;
  }
  return best;
}

int collision_avoidance(const StateVector& observation, double threshold,
                        Rng& rng) {
  std::vector<int> idle;
  for (Eigen::Index c = 0; c < observation.size(); ++c)
    if (observation(c) < threshold) idle.push_back(static_cast<int>(c));
  if (idle.empty())
    return std::uniform_int_distribution<int>(
        0, static_cast<int>(observation.size()) - 1)(rng);
  return idle[std::uniform_int_distribution<int>(
      0, static_cast<int>(idle.size()) - 1)(rng)];
}

MlAgent::MlAgent(int channels, Vec capacities, double idle_threshold,
                 double cluster_delta)
    : channels_(channels), capacities_(std::move(capacities)),
      idle_threshold_(idle_threshold), cluster_delta_(cluster_delta),
      counts_(0, 0) {}

int MlAgent::identify(const StateVector& s) const {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reps_.size(); ++i) {
    const double d = (reps_[i] - s).norm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  if (best >= 0 && best_d <= std::max(cluster_delta_, 1e-9)) return best;
  return -1;
}

std::vector<std::uint8_t> MlAgent::idle_estimate(int state) const {
  std::vector<std::uint8_t> idle(channels_, 0);
  for (int c = 0; c < channels_; ++c) {
    const double mean = power_sums_[state](c) / static_cast<double>(seen_[state]);
    idle[c] = mean < idle_threshold_ ? 1 : 0;
  }
  return idle;
}

int MlAgent::act(const StateVector& observation, Rng& rng) {
  int sid = identify(observation);
  if (sid < 0) {
    sid = static_cast<int>(reps_.size());
    reps_.push_back(observation);
    power_sums_.push_back(StateVector::Zero(channels_));
    seen_.push_back(0);
    Mat grown = Mat::Zero(sid + 1, sid + 1);
    grown.topLeftCorner(sid, sid) = counts_;
    counts_ = std::move(grown);
  }
  power_sums_[sid] += observation;
  seen_[sid] += 1;
  if (prev_ >= 0) counts_(prev_, sid) += 1.0;
  prev_ = sid;

  const Vec row = counts_.row(sid);
  if (row.sum() > 0.0) {
    int m = 0;
    for (int j = 1; j < row.size(); ++j)
      if (row(j) > row(m)) m = j;
    const auto idle = idle_estimate(m);
    int best = -1;
    for (int c = 0; c < channels_; ++c) {
      if (!idle[c]) continue;
      if (best < 0 || capacities_(c) > capacities_(best)) best = c;
    }
    if (best >= 0) return best;
  }
  return collision_avoidance(observation, idle_threshold_, rng);
}

int MlAgent::greedy_action(const StateVector& observation) const {
  const int sid = identify(observation);
  if (sid >= 0 && counts_.row(sid).sum() > 0.0) {
    const Vec row = counts_.row(sid);
    int m = 0;
    for (int j = 1; j < row.size(); ++j)
      if (row(j) > row(m)) m = j;
    const auto idle = idle_estimate(m);
    int best = -1;
    for (int c = 0; c < channels_; ++c) {
      if (!idle[c]) continue;
      if (best < 0 || capacities_(c) > capacities_(best)) best = c;
    }
    if (best >= 0) return best;
  }
  for (Eigen::Index c = 0; c < observation.size(); ++c)
    if (observation(c) < idle_threshold_) return static_cast<int>(c);
  return 0;
}

TransitionModel MlAgent::empirical_model() const {
  const int n = known_states();
  TransitionModel model;
  model.action_dependent = false;
  Mat P = Mat::Zero(n, n);
  for (int s = 0; s < n; ++s) {
    const double total = counts_.row(s).sum();
    if (total > 0.0)
      P.row(s) = counts_.row(s) / total;
    else
      P.row(s).setConstant(1.0 / n);
  }
  model.P.push_back(std::move(P));
  model.A.resize(n, channels_);
  for (int s = 0; s < n; ++s) {
    const auto idle = idle_estimate(s);
    for (int c = 0; c < channels_; ++c) model.A(s, c) = idle[c];
  }
  model.capacities = capacities_;
  model.state_powers.resize(0, 0);
  return model;
}

int CaAgent::greedy_action(const StateVector& observation) const {
  for (Eigen::Index c = 0; c < observation.size(); ++c)
    if (observation(c) < idle_threshold_) return static_cast<int>(c);
  return 0;
}

}  // namespace kosa
