#include "kosa/dictionary.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace kosa {

Dictionary::Dictionary(KernelParams params, double mu)
    : params_(params), mu_(mu) {
  if (params.sigma <= 0.0) throw std::invalid_argument("sigma must be > 0");
  if (mu <= 0.0) throw std::invalid_argument("mu must be > 0");
}

Vec Dictionary::feature_of(const StateActionPair& x) const {
  Vec f(x.state.size() + x.action.embedding.size());
  f << x.state, x.action.embedding;
  return f;
}

Vec Dictionary::kernel_vector(const StateActionPair& x) const {
  if (empty()) return Vec(0);
  const Vec f = feature_of(x);
  if (f.size() != features_.cols())
    throw std::invalid_argument("kernel_vector: dimension mismatch");
  Vec d2 = (features_.rowwise() - f.transpose()).rowwise().squaredNorm();
  return (-d2 / (2.0 * params_.sigma * params_.sigma)).array().exp();
}

AldResult Dictionary::ald_test(const StateActionPair& x) const {
  AldResult res;
  const double ktt = kernel_eval(x, x, params_);
  if (empty()) {
    res.delta = ktt;
    res.coefficients = Vec(0);
    res.added = res.delta > mu_;
    return res;
  }
  const Vec k = kernel_vector(x);
  res.coefficients = inv_gram_ * k;
  res.delta = std::max(0.0, ktt - k.dot(res.coefficients));
  res.added = res.delta > mu_;
  return res;
}

void Dictionary::insert(const StateActionPair& x, const AldResult& result) {
  constexpr double kDeltaFloor = 1e-12;
  if (result.delta <= kDeltaFloor)
    throw IllConditionedUpdate("ALD insert: delta at or below numerical floor");

  const Vec f = feature_of(x);
  const int L = size();
  if (L == 0) {
    entries_.push_back(x);
    features_ = f.transpose();
    inv_gram_ = Mat::Constant(1, 1, 1.0 / kernel_eval(x, x, params_));
    return;
  }

  const Vec& c = result.coefficients;
  Mat next(L + 1, L + 1);
  next.topLeftCorner(L, L) = inv_gram_ + c * c.transpose() / result.delta;
  next.topRightCorner(L, 1) = -c / result.delta;
  next.bottomLeftCorner(1, L) = next.topRightCorner(L, 1).transpose();
  next(L, L) = 1.0 / result.delta;
  inv_gram_ = std::move(next);

  entries_.push_back(x);
  features_.conservativeResize(L + 1, Eigen::NoChange);
  features_.row(L) = f.transpose();
}

AldResult Dictionary::test_and_insert(const StateActionPair& x) {
  AldResult res = ald_test(x);
  if (res.added) insert(x, res);
  return res;
}

void Dictionary::save(std::ostream& out) const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["sigma"] = params_.sigma;
  j["mu"] = mu_;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json je;
    je["state"] = std::vector<double>(e.state.begin(), e.state.end());
    je["channels"] = e.action.channels;
    je["embedding"] =
        std::vector<double>(e.action.embedding.begin(), e.action.embedding.end());
    j["entries"].push_back(std::move(je));
  }
  out << j.dump(2) << '\n';
}

void Dictionary::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  save(out);
}

Dictionary Dictionary::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  return load(in);
}

Dictionary Dictionary::load(std::istream& in) {
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("schema_version").get<int>() != 1)
    throw std::runtime_error("unsupported dictionary snapshot version");

  Dictionary dict(KernelParams{j.at("sigma").get<double>()},
                  j.at("mu").get<double>());
  std::vector<StateActionPair> entries;
  for (const auto& je : j.at("entries")) {
    StateActionPair x;
    auto state = je.at("state").get<std::vector<double>>();
    x.state = Eigen::Map<const Vec>(state.data(), state.size());
    x.action.channels = je.at("channels").get<std::vector<int>>();
    auto emb = je.at("embedding").get<std::vector<double>>();
    x.action.embedding = Eigen::Map<const Vec>(emb.data(), emb.size());
    entries.push_back(std::move(x));
  }
  if (entries.empty()) return dict;

  // Rebuild the Gram matrix and invert it directly; the recursive updates
  // then continue from the recomputed inverse.
  const int L = static_cast<int>(entries.size());
  dict.entries_ = std::move(entries);
  dict.features_.resize(L, dict.feature_of(dict.entries_.front()).size());
  for (int l = 0; l < L; ++l)
    dict.features_.row(l) = dict.feature_of(dict.entries_[l]).transpose();
  Mat gram(L, L);
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < L; ++k)
      gram(i, k) = kernel_eval(dict.entries_[i], dict.entries_[k], dict.params_);
  dict.inv_gram_ = gram.ldlt().solve(Mat::Identity(L, L));
  return dict;
}

namespace {

double separation_threshold(double sigma, double mu) {
  if (sigma <= 0.0) throw std::invalid_argument("sigma must be > 0");
  if (mu <= 0.0 || mu >= 2.0)
    throw std::invalid_argument("mu must lie in (0, 2)");
  return 2.0 * sigma * sigma * std::log(1.0 / (1.0 - mu / 2.0));
}

}  // namespace

bool check_noiseless_separation(double sigma, double mu, double dmin_state,
                                double dmin_action) {
  if (dmin_state <= 0.0 || dmin_action <= 0.0)
    throw std::invalid_argument("minimum distances must be > 0");
  const double theta = separation_threshold(sigma, mu);
  return std::min(dmin_state * dmin_state, dmin_action * dmin_action) > theta;
}

bool check_noise_robustness(double sigma, double mu, double sigma_n2,
                            int channels, double delta) {
  if (sigma_n2 < 0.0) throw std::invalid_argument("sigma_n2 must be >= 0");
  if (channels < 1) throw std::invalid_argument("channel count must be >= 1");
  if (delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("delta must lie in (0, 1)");
  const double theta = separation_threshold(sigma, mu);
  const double tail =
      sigma_n2 * std::log(1.0 / (1.0 - std::pow(1.0 - delta, 1.0 / channels)));
  return theta > channels * tail * tail;
}

}  // namespace kosa
