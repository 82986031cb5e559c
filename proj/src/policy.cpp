#include "bilevel_rl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/io.hpp"

namespace bilevel_rl {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(z);
    case Activation::ReLU6:
      return std::min(std::max(z, 0.0), 6.0);
    case Activation::LeakyReLU:
      return z > 0.0 ? z : kLeakySlope * z;
    case Activation::Linear:
      return z;
  }
  return z;
}

// Derivative with the tie-breaks fixed: 0 at both ReLU6 corners, the leak
// slope at the leaky-ReLU corner.
double activate_grad(Activation a, double z, double post) {
  switch (a) {
    case Activation::Tanh:
      return 1.0 - post * post;
    case Activation::ReLU6:
      return (z > 0.0 && z < 6.0) ? 1.0 : 0.0;
    case Activation::LeakyReLU:
      return z > 0.0 ? 1.0 : kLeakySlope;
    case Activation::Linear:
      return 1.0;
  }
  return 0.0;
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::ReLU6:
      return "relu6";
    case Activation::LeakyReLU:
      return "leaky_relu";
    case Activation::Linear:
      return "linear";
  }
  return "tanh";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu6") return Activation::ReLU6;
  if (name == "leaky_relu") return Activation::LeakyReLU;
  if (name == "linear") return Activation::Linear;
  throw ParseError("unknown activation name: \"" + name + "\"");
}

double log_prob(const ControlDistribution& dist, std::span<const double> u) {
  if (u.size() != dist.mean.size())
    throw ContractError("log_prob: control length does not match distribution");
  double lp = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double z = (u[i] - dist.mean[i]) / dist.std[i];
    lp += -0.5 * kLogTwoPi - std::log(dist.std[i]) - 0.5 * z * z;
  }
  return lp;
}

std::vector<double> ObsStats::normalize(std::span<const double> obs) const {
  if (obs.size() != mean.size()) throw ContractError("normalize: obs dimension mismatch");
  std::vector<double> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out[i] = (obs[i] - mean[i]) / std[i];
  return out;
}

std::vector<double> ObsStats::denormalize(std::span<const double> normed) const {
  if (normed.size() != mean.size()) throw ContractError("denormalize: dimension mismatch");
  std::vector<double> out(normed.size());
  for (std::size_t i = 0; i < normed.size(); ++i) out[i] = normed[i] * std[i] + mean[i];
  return out;
}

ObsStats ObsStats::identity(int dim) {
  ObsStats s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 1.0);
  return s;
}

ObsStats ObsStats::from_samples(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw ContractError("ObsStats: no samples");
  const std::size_t dim = samples.front().size();
  ObsStats s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 0.0);
  for (const auto& x : samples) {
    if (x.size() != dim) throw ContractError("ObsStats: ragged samples");
    for (std::size_t i = 0; i < dim; ++i) s.mean[i] += x[i];
  }
  const double n = static_cast<double>(samples.size());
  for (auto& m : s.mean) m /= n;
  for (const auto& x : samples)
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = x[i] - s.mean[i];
      s.std[i] += d * d;
    }
  for (auto& v : s.std) v = std::max(std::sqrt(v / n), 1e-8);
  return s;
}

PolicyNetwork::PolicyNetwork(int input_dim, const std::vector<LayerSpec>& hidden,
                             int n_controls, std::vector<double> action_low,
                             std::vector<double> action_high, double std_floor_frac)
    : input_dim_(input_dim),
      n_controls_(n_controls),
      action_low_(std::move(action_low)),
      action_high_(std::move(action_high)),
      std_floor_frac_(std_floor_frac) {
  if (input_dim_ < 1) throw ContractError("PolicyNetwork: input_dim must be >= 1");
  if (n_controls_ < 1) throw ContractError("PolicyNetwork: n_controls must be >= 1");
  if (action_low_.size() != static_cast<std::size_t>(n_controls_) ||
      action_high_.size() != static_cast<std::size_t>(n_controls_))
    throw ContractError("PolicyNetwork: action bounds must have n_controls entries");
  for (int i = 0; i < n_controls_; ++i)
    if (!(action_low_[i] < action_high_[i]))
      throw ContractError("PolicyNetwork: action_low must be < action_high");
  if (!(std_floor_frac_ > 0.0))
    throw ContractError("PolicyNetwork: std_floor_frac must be positive");

  layers_ = hidden;
  for (const auto& spec : layers_)
    if (spec.width < 1) throw ContractError("PolicyNetwork: layer width must be >= 1");
  layers_.push_back({n_controls_, Activation::ReLU6});
  layers_.push_back({n_controls_, Activation::LeakyReLU});

  // Mean and std heads both read the last hidden activation.
  const int n_hidden = static_cast<int>(hidden.size());
  std::size_t off = 0;
  int prev = input_dim_;
  views_.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const bool is_head = static_cast<int>(l) >= n_hidden;
    const int in = is_head ? (n_hidden > 0 ? layers_[n_hidden - 1].width : input_dim_) : prev;
    LayerView& v = views_[l];
    v.in = in;
    v.out = layers_[l].width;
    v.act = layers_[l].activation;
    v.w_off = off;
    off += static_cast<std::size_t>(v.in) * v.out;
    v.b_off = off;
    off += v.out;
    prev = v.out;
  }
  theta_.assign(off, 0.0);
}

void PolicyNetwork::init_params(std::uint64_t seed) {
  RngStream rng(seed, rng_domain::kInit);
  for (const auto& v : views_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(v.in));
    for (int r = 0; r < v.out; ++r) {
      for (int c = 0; c < v.in; ++c)
        theta_[v.w_off + static_cast<std::size_t>(r) * v.in + c] = rng.uniform(-bound, bound);
      theta_[v.b_off + r] = rng.uniform(-bound, bound);
    }
  }
  // Start the ReLU6 mean head mid-range. A head whose pre-activation is
  // negative for every input sits in the flat region with zero gradient and
  // can never recover during training.
  if (views_.size() >= 2) {
    const LayerView& mean_head = views_[views_.size() - 2];
    if (mean_head.act == Activation::ReLU6)
      for (int r = 0; r < mean_head.out; ++r) theta_[mean_head.b_off + r] += 3.0;
  }
}

void PolicyNetwork::set_params(std::span<const double> p) {
  if (p.size() != theta_.size()) throw ContractError("set_params: size mismatch");
  theta_.assign(p.begin(), p.end());
}

double PolicyNetwork::std_floor(int control) const {
  return std_floor_frac_ * (action_high_[control] - action_low_[control]);
}

ControlDistribution PolicyNetwork::run_forward(std::span<const double> obs,
                                               ForwardCache* cache) const {
  if (obs.size() != static_cast<std::size_t>(input_dim_))
    throw ContractError("forward: obs length does not match input_dim");
  for (double x : obs)
    if (!std::isfinite(x)) throw ContractError("forward: non-finite observation entry");

  if (cache) {
    cache->pre.resize(views_.size());
    cache->post.resize(views_.size());
  }

  const std::size_t n_hidden = views_.size() - 2;
  std::vector<double> a(obs.begin(), obs.end());
  auto apply = [&](std::size_t l, std::span<const double> in) {
    const LayerView& v = views_[l];
    std::vector<double> z(v.out, 0.0);
    for (int r = 0; r < v.out; ++r) {
      double acc = theta_[v.b_off + r];
      const double* w = &theta_[v.w_off + static_cast<std::size_t>(r) * v.in];
      for (int c = 0; c < v.in; ++c) acc += w[c] * in[c];
      z[r] = acc;
    }
    std::vector<double> post(v.out);
    for (int r = 0; r < v.out; ++r) post[r] = activate(v.act, z[r]);
    if (cache) {
      cache->pre[l] = z;
      cache->post[l] = post;
    }
    return post;
  };

  for (std::size_t l = 0; l < n_hidden; ++l) a = apply(l, a);
  const std::vector<double> mean_post = apply(n_hidden, a);
  const std::vector<double> std_post = apply(n_hidden + 1, a);

  ControlDistribution dist;
  dist.mean.resize(n_controls_);
  dist.std.resize(n_controls_);
  for (int i = 0; i < n_controls_; ++i) {
    const double lo = action_low_[i], hi = action_high_[i];
    if (views_[n_hidden].act == Activation::ReLU6) {
      dist.mean[i] = lo + (hi - lo) * mean_post[i] / 6.0;
    } else {
      dist.mean[i] = std::min(std::max(mean_post[i], lo), hi);
    }
    dist.std[i] = std::max(std::abs(std_post[i]), std_floor(i));
  }
  return dist;
}

ControlDistribution PolicyNetwork::forward(std::span<const double> obs) const {
  return run_forward(obs, nullptr);
}

std::vector<double> PolicyNetwork::sample(const ControlDistribution& dist, RngStream& rng,
                                          std::vector<double>* raw_out) const {
  std::vector<double> raw(n_controls_);
  for (int i = 0; i < n_controls_; ++i) raw[i] = rng.normal(dist.mean[i], dist.std[i]);
  if (raw_out) *raw_out = raw;
  return clip(raw);
}

std::vector<double> PolicyNetwork::clip(std::span<const double> u) const {
  std::vector<double> out(u.begin(), u.end());
  for (int i = 0; i < n_controls_; ++i)
    out[i] = std::min(std::max(out[i], action_low_[i]), action_high_[i]);
  return out;
}

std::vector<double> PolicyNetwork::backprop(std::span<const double> obs,
                                            std::span<const double> d_mean,
                                            std::span<const double> d_std) const {
  ForwardCache cache;
  const ControlDistribution dist = run_forward(obs, &cache);
  (void)dist;
  const std::size_t n_hidden = views_.size() - 2;
  const std::size_t mean_l = n_hidden, std_l = n_hidden + 1;

  std::vector<double> grad(theta_.size(), 0.0);

  // Gradients through the output post-processing, landing on the head
  // pre-activations.
  std::vector<double> d_mean_z(n_controls_, 0.0), d_std_z(n_controls_, 0.0);
  for (int i = 0; i < n_controls_; ++i) {
    const double lo = action_low_[i], hi = action_high_[i];
    if (!d_mean.empty()) {
      const double z = cache.pre[mean_l][i];
      double chain;
      if (views_[mean_l].act == Activation::ReLU6) {
        chain = (hi - lo) / 6.0 * activate_grad(Activation::ReLU6, z, cache.post[mean_l][i]);
      } else {
        const double post = cache.post[mean_l][i];
        const bool clamped = post <= lo || post >= hi;
        chain = clamped ? 0.0 : activate_grad(views_[mean_l].act, z, post);
      }
      d_mean_z[i] = d_mean[i] * chain;
    }
    if (!d_std.empty()) {
      const double z = cache.pre[std_l][i];
      const double post = cache.post[std_l][i];
      // sigma = max(|post|, floor): flat where the floor is active.
      double chain = 0.0;
      if (std::abs(post) > std_floor(i))
        chain = (post > 0.0 ? 1.0 : -1.0) * activate_grad(views_[std_l].act, z, post);
      d_std_z[i] = d_std[i] * chain;
    }
  }

  const std::vector<double> input(obs.begin(), obs.end());
  auto layer_input = [&](std::size_t l) -> const std::vector<double>& {
    if (l >= n_hidden) return n_hidden > 0 ? cache.post[n_hidden - 1] : input;
    return l == 0 ? input : cache.post[l - 1];
  };

  // Heads: accumulate weight/bias grads and the shared hidden gradient.
  std::vector<double> d_hidden(n_hidden > 0 ? views_[n_hidden - 1].out : 0, 0.0);
  for (std::size_t l : {mean_l, std_l}) {
    const LayerView& v = views_[l];
    const std::vector<double>& in = layer_input(l);
    const std::vector<double>& dz = (l == mean_l) ? d_mean_z : d_std_z;
    for (int r = 0; r < v.out; ++r) {
      if (dz[r] == 0.0) continue;
      grad[v.b_off + r] += dz[r];
      const double* w = &theta_[v.w_off + static_cast<std::size_t>(r) * v.in];
      double* gw = &grad[v.w_off + static_cast<std::size_t>(r) * v.in];
      for (int c = 0; c < v.in; ++c) {
        gw[c] += dz[r] * in[c];
        if (n_hidden > 0) d_hidden[c] += dz[r] * w[c];
      }
    }
  }

  // Hidden layers, last to first.
  std::vector<double> d_post = std::move(d_hidden);
  for (std::size_t li = n_hidden; li-- > 0;) {
    const LayerView& v = views_[li];
    const std::vector<double>& in = layer_input(li);
    std::vector<double> d_in(v.in, 0.0);
    for (int r = 0; r < v.out; ++r) {
      const double dz = d_post[r] * activate_grad(v.act, cache.pre[li][r], cache.post[li][r]);
      if (dz == 0.0) continue;
      grad[v.b_off + r] += dz;
      const double* w = &theta_[v.w_off + static_cast<std::size_t>(r) * v.in];
      double* gw = &grad[v.w_off + static_cast<std::size_t>(r) * v.in];
      for (int c = 0; c < v.in; ++c) {
        gw[c] += dz * in[c];
        d_in[c] += dz * w[c];
      }
    }
    d_post = std::move(d_in);
  }
  return grad;
}

std::vector<double> PolicyNetwork::grad_log_prob(std::span<const double> obs,
                                                 std::span<const double> u) const {
  const ControlDistribution dist = run_forward(obs, nullptr);
  if (u.size() != static_cast<std::size_t>(n_controls_))
    throw ContractError("grad_log_prob: control length mismatch");
  std::vector<double> d_mean(n_controls_), d_std(n_controls_);
  for (int i = 0; i < n_controls_; ++i) {
    const double s = dist.std[i];
    const double diff = u[i] - dist.mean[i];
    d_mean[i] = diff / (s * s);
    d_std[i] = diff * diff / (s * s * s) - 1.0 / s;
  }
  return backprop(obs, d_mean, d_std);
}

nlohmann::json PolicyNetwork::to_json() const {
  nlohmann::json j;
  j["input_dim"] = input_dim_;
  nlohmann::json layers = nlohmann::json::array();
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers.push_back({{"width", layers_[l].width},
                      {"activation", activation_name(layers_[l].activation)}});
    const LayerView& v = views_[l];
    weights.push_back(std::vector<double>(
        theta_.begin() + v.w_off,
        theta_.begin() + v.w_off + static_cast<std::size_t>(v.in) * v.out));
    biases.push_back(std::vector<double>(theta_.begin() + v.b_off,
                                         theta_.begin() + v.b_off + v.out));
  }
  j["layers"] = layers;
  j["weights"] = weights;
  j["biases"] = biases;
  j["action_low"] = action_low_;
  j["action_high"] = action_high_;
  j["std_floor"] = std_floor_frac_;
  return j;
}

namespace {

const nlohmann::json& require_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError(std::string("policy file: missing field \"") + key + "\"");
  return *it;
}

}  // namespace

PolicyNetwork PolicyNetwork::from_json(const nlohmann::json& j) {
  try {
    const int input_dim = require_field(j, "input_dim").get<int>();
    const auto& jlayers = require_field(j, "layers");
    if (!jlayers.is_array() || jlayers.size() < 2)
      throw ParseError("policy file: \"layers\" must list the hidden layers and both heads");
    std::vector<LayerSpec> hidden;
    for (std::size_t l = 0; l + 2 < jlayers.size(); ++l) {
      hidden.push_back({require_field(jlayers[l], "width").get<int>(),
                        activation_from_name(
                            require_field(jlayers[l], "activation").get<std::string>())});
    }
    const int n_controls = require_field(jlayers[jlayers.size() - 2], "width").get<int>();
    PolicyNetwork net(input_dim, hidden, n_controls,
                      require_field(j, "action_low").get<std::vector<double>>(),
                      require_field(j, "action_high").get<std::vector<double>>(),
                      require_field(j, "std_floor").get<double>());
    // Head activations are part of the file; honor non-default choices.
    net.layers_[net.layers_.size() - 2].activation = activation_from_name(
        require_field(jlayers[jlayers.size() - 2], "activation").get<std::string>());
    net.layers_[net.layers_.size() - 1].activation = activation_from_name(
        require_field(jlayers[jlayers.size() - 1], "activation").get<std::string>());
    net.views_[net.views_.size() - 2].act = net.layers_[net.layers_.size() - 2].activation;
    net.views_[net.views_.size() - 1].act = net.layers_[net.layers_.size() - 1].activation;

    const auto& jw = require_field(j, "weights");
    const auto& jb = require_field(j, "biases");
    if (jw.size() != net.views_.size())
      throw ParseError("policy file: \"weights\" must have one entry per layer");
    if (jb.size() != net.views_.size())
      throw ParseError("policy file: \"biases\" must have one entry per layer");
    for (std::size_t l = 0; l < net.views_.size(); ++l) {
      const LayerView& v = net.views_[l];
      const auto w = jw[l].get<std::vector<double>>();
      const auto b = jb[l].get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(v.in) * v.out)
        throw ParseError("policy file: \"weights\" layer " + std::to_string(l) +
                         " has wrong element count");
      if (b.size() != static_cast<std::size_t>(v.out))
        throw ParseError("policy file: \"biases\" layer " + std::to_string(l) +
                         " has wrong element count");
      std::copy(w.begin(), w.end(), net.theta_.begin() + v.w_off);
      std::copy(b.begin(), b.end(), net.theta_.begin() + v.b_off);
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("policy file: ") + e.what());
  }
}

nlohmann::json Policy::to_json() const {
  nlohmann::json j = net.to_json();
  j["obs_mean"] = stats.mean;
  j["obs_std"] = stats.std;
  return j;
}

Policy Policy::from_json(const nlohmann::json& j) {
  PolicyNetwork net = PolicyNetwork::from_json(j);
  ObsStats stats = ObsStats::identity(net.input_dim());
  if (j.contains("obs_mean")) stats.mean = j.at("obs_mean").get<std::vector<double>>();
  if (j.contains("obs_std")) stats.std = j.at("obs_std").get<std::vector<double>>();
  if (stats.mean.size() != static_cast<std::size_t>(net.input_dim()) ||
      stats.std.size() != static_cast<std::size_t>(net.input_dim()))
    throw ParseError("policy file: \"obs_mean\"/\"obs_std\" length must equal input_dim");
  return Policy{std::move(net), std::move(stats)};
}

void Policy::save(const std::string& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

Policy Policy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("policy not found: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("policy file " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace bilevel_rl
