#include "kosa/scenario.hpp"

#include <fstream>
#include <memory>
#include <set>

#include <json.hpp>

namespace kosa {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& required,
                  const std::set<std::string>& optional,
                  const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!required.count(key) && !optional.count(key))
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
  for (const auto& key : required)
    if (!j.contains(key))
      throw std::invalid_argument(where + ": missing key '" + key + "'");
}

Mat parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument(where + ": expected a nonempty array of rows");
  const std::size_t cols = j.front().size();
  Mat m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != cols)
      throw std::invalid_argument(where + ": ragged rows");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vec parse_vector(const json& j, const std::string& where) {
  if (!j.is_array())
    throw std::invalid_argument(where + ": expected an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

int Scenario::num_actions() const {
  long n = 0, comb = 1;
  for (int k = 1; k <= max_access; ++k) {
    comb = comb * (channels - k + 1) / k;
    n += comb;
  }
  return static_cast<int>(n);
}

void Scenario::validate() const {
  if (schema_version != 1) throw std::invalid_argument("unsupported schema_version");
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
  if (max_access < 1 || max_access > channels)
    throw std::invalid_argument("max_access must be in [1, channels]");
  if (max_power <= 0.0) throw std::invalid_argument("max_power must be > 0");
  if (noise.sigma_n2 < 0.0) throw std::invalid_argument("noise_sigma_n2 must be >= 0");
  if (reward.collision_cost < 0.0)
    throw std::invalid_argument("collision_cost_bits must be >= 0");
  if (reward.slot_duration <= 0.0)
    throw std::invalid_argument("slot_duration_s must be > 0");
  if (idle_threshold <= 0.0 || idle_threshold > 1.0)
    throw std::invalid_argument("idle_threshold must lie in (0, 1]");

  if (kind == ScenarioKind::markov) {
    model.validate(model.action_dependent ? num_actions() : 0);
    if (model.num_channels() != channels)
      throw std::invalid_argument("model channel count mismatch");
    if (model.state_powers.rows() != model.num_states())
      throw std::invalid_argument("markov scenario needs a state power table");
    if ((model.state_powers.array() < 0.0).any())
      throw std::invalid_argument("state powers must be >= 0");
    if (initial_state < 0 || initial_state >= model.num_states())
      throw std::invalid_argument("initial_state out of range");
  } else {
    mac.validate();
    if (capacities_mac.size() != channels)
      throw std::invalid_argument("capacities must have one entry per channel");
    if ((capacities_mac.array() <= 0.0).any())
      throw std::invalid_argument("capacities must be > 0");
    if (static_cast<int>(initial_occupancy.size()) != channels)
      throw std::invalid_argument("initial_occupancy must have one bit per channel");
    for (auto b : initial_occupancy)
      if (b != 0 && b != 1)
        throw std::invalid_argument("initial_occupancy entries must be 0 or 1");
  }
}

Scenario Scenario::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read scenario file " + file.string());
  json j = json::parse(in);

  require_keys(j,
               {"schema_version", "name", "kind", "channels", "max_access",
                "capacities_bits", "slot_duration_s"},
               {"states", "P", "P_by_action", "connectivity", "mac",
                "initial_state", "initial_occupancy", "noise_sigma_n2",
                "max_power", "idle_threshold", "collision_cost_bits"},
               "scenario");

  Scenario sc;
  sc.schema_version = j.at("schema_version").get<int>();
  sc.name = j.at("name").get<std::string>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "markov") sc.kind = ScenarioKind::markov;
  else if (kind == "mac") sc.kind = ScenarioKind::mac;
  else throw std::invalid_argument("scenario kind must be 'markov' or 'mac'");

  sc.channels = j.at("channels").get<int>();
  sc.max_access = j.at("max_access").get<int>();
  sc.noise.sigma_n2 = j.value("noise_sigma_n2", 0.0);
  sc.max_power = j.value("max_power", 1.0);
  sc.idle_threshold = j.value("idle_threshold", 0.5);
  sc.reward.collision_cost = j.value("collision_cost_bits", 0.0);
  sc.reward.slot_duration = j.at("slot_duration_s").get<double>();
  const Vec caps = parse_vector(j.at("capacities_bits"), "capacities_bits");

  if (sc.kind == ScenarioKind::markov) {
    if (!j.contains("states"))
      throw std::invalid_argument("markov scenario requires 'states'");
    sc.model.state_powers = parse_matrix(j.at("states"), "states");
    if (j.contains("P") == j.contains("P_by_action"))
      throw std::invalid_argument("specify exactly one of 'P' or 'P_by_action'");
    if (j.contains("P")) {
      sc.model.action_dependent = false;
      sc.model.P.push_back(parse_matrix(j.at("P"), "P"));
    } else {
      sc.model.action_dependent = true;
      for (const auto& pj : j.at("P_by_action"))
        sc.model.P.push_back(parse_matrix(pj, "P_by_action"));
    }
    const int n = static_cast<int>(sc.model.state_powers.rows());
    if (j.contains("connectivity")) {
      Mat a = parse_matrix(j.at("connectivity"), "connectivity");
      sc.model.A = a.cast<int>();
    } else {
      // Derive A by thresholding normalized state powers.
      sc.model.A.resize(n, sc.channels);
      for (int s = 0; s < n; ++s)
        for (int c = 0; c < sc.channels; ++c)
          sc.model.A(s, c) =
              sc.model.state_powers(s, c) / sc.max_power < sc.idle_threshold ? 1 : 0;
    }
    sc.model.capacities = caps;
    sc.initial_state = j.value("initial_state", 0);
  } else {
    if (!j.contains("mac"))
      throw std::invalid_argument("mac scenario requires 'mac'");
    const json& mj = j.at("mac");
    require_keys(mj, {"p", "q", "z"}, {"w", "occupied_power"}, "mac");
    sc.mac.p = mj.at("p").get<double>();
    sc.mac.q = mj.at("q").get<double>();
    sc.mac.z = mj.at("z").get<double>();
    sc.mac.w = mj.value("w", 0.2);
    sc.mac.occupied_power = mj.value("occupied_power", 1.0);
    sc.capacities_mac = caps;
    if (j.contains("initial_occupancy")) {
      for (const auto& b : j.at("initial_occupancy"))
        sc.initial_occupancy.push_back(b.get<int>() ? 1 : 0);
    } else {
      sc.initial_occupancy.assign(sc.channels, 0);
    }
  }

  sc.validate();
  return sc;
}

Environment::Environment(const Scenario& scenario)
    : scenario_(std::make_shared<Scenario>(scenario)),
      subsets_(enumerate_channel_subsets(scenario.channels, scenario.max_access)) {
  scenario_->validate();
  if (scenario_->kind == ScenarioKind::markov) {
    state_ = scenario_->initial_state;
  } else {
    occupancy_ = scenario_->initial_occupancy;
  }
}

StateVector Environment::true_powers() const {
  if (scenario_->kind == ScenarioKind::markov)
    return scenario_->model.state_powers.row(state_).transpose();
  StateVector p = StateVector::Zero(scenario_->channels);
  for (int c = 0; c < scenario_->channels; ++c)
    if (occupancy_[c]) p(c) = scenario_->mac.occupied_power;
  return p;
}

StateVector Environment::observe(Rng& rng) const {
  return normalize(emit_observation(true_powers(), scenario_->noise, rng),
                   scenario_->max_power);
}

std::vector<std::uint8_t> Environment::true_idle() const {
  std::vector<std::uint8_t> idle(scenario_->channels);
  if (scenario_->kind == ScenarioKind::markov) {
    for (int c = 0; c < scenario_->channels; ++c)
      idle[c] = scenario_->model.A(state_, c) == 1 ? 1 : 0;
  } else {
    for (int c = 0; c < scenario_->channels; ++c) idle[c] = occupancy_[c] ? 0 : 1;
  }
  return idle;
}

double Environment::step(int action_index, Rng& rng) {
  const ActionEncoding action{subsets_.at(action_index), Vec()};
  if (scenario_->kind == ScenarioKind::markov) {
    state_ = step_markov(scenario_->model, state_, action_index, rng);
  } else {
    occupancy_ = step_mac(occupancy_, action, scenario_->mac, rng);
  }
  return compute_reward(true_idle(), action, scenario_->capacities(),
                        scenario_->reward);
}

std::vector<std::uint8_t> estimate_idle(const StateVector& observation,
                                        double threshold) {
  std::vector<std::uint8_t> idle(observation.size());
  for (Eigen::Index c = 0; c < observation.size(); ++c)
    idle[c] = observation(c) < threshold ? 1 : 0;
  return idle;
}

}  // namespace kosa
