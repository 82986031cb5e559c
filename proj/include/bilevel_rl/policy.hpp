#ifndef BILEVEL_RL_POLICY_HPP
#define BILEVEL_RL_POLICY_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel_rl/rng.hpp"

namespace bilevel_rl {

enum class Activation { Tanh, ReLU6, LeakyReLU, Linear };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerSpec {
  int width = 1;
  Activation activation = Activation::Tanh;
};

/// Gaussian control distribution in physical actuator units.
struct ControlDistribution {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Sum over controls of the Gaussian log-density of u under dist.
double log_prob(const ControlDistribution& dist, std::span<const double> u);

/// Per-dimension normalization statistics, frozen once computed from the
/// pre-training demonstrations.
struct ObsStats {
  std::vector<double> mean;
  std::vector<double> std;  // floored at 1e-8

  std::vector<double> normalize(std::span<const double> obs) const;
  std::vector<double> denormalize(std::span<const double> normed) const;
  static ObsStats identity(int dim);
  static ObsStats from_samples(const std::vector<std::vector<double>>& samples);
};

/// Feed-forward policy: tanh hidden layers, a ReLU6 mean head rescaled onto
/// the actuator range and a leaky-ReLU std head mapped through |.| and a
/// floor. Parameters live in one flat vector (per layer: row-major weights,
/// then biases; heads last, mean before std) so the optimizer and the
/// gradient code share a single layout.
class PolicyNetwork {
 public:
  PolicyNetwork(int input_dim, const std::vector<LayerSpec>& hidden, int n_controls,
                std::vector<double> action_low, std::vector<double> action_high,
                double std_floor_frac = 0.01);

  // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], reproducible per seed.
  void init_params(std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int n_controls() const { return n_controls_; }
  std::size_t n_params() const { return theta_.size(); }
  const std::vector<double>& params() const { return theta_; }
  std::vector<double>& params() { return theta_; }
  void set_params(std::span<const double> p);

  const std::vector<double>& action_low() const { return action_low_; }
  const std::vector<double>& action_high() const { return action_high_; }
  double std_floor_frac() const { return std_floor_frac_; }
  // Emitted std never drops below this (per control, physical units).
  double std_floor(int control) const;

  /// obs must already be normalized and finite; length input_dim.
  ControlDistribution forward(std::span<const double> obs) const;

  /// Gaussian draw per control from dist, then clipped to the actuator box.
  /// raw_out, when given, receives the pre-clip sample (what log_prob scores).
  std::vector<double> sample(const ControlDistribution& dist, RngStream& rng,
                             std::vector<double>* raw_out = nullptr) const;

  std::vector<double> clip(std::span<const double> u) const;

  /// Exact reverse-mode gradient of log_prob(forward(obs), u) w.r.t. every
  /// weight and bias. Subgradients at kinks: 0 at the ReLU6 corners, the leak
  /// slope at the leaky-ReLU corner, 0 where the std floor or action clamp is
  /// active.
  std::vector<double> grad_log_prob(std::span<const double> obs,
                                    std::span<const double> u) const;

  /// Reverse-mode gradient of an arbitrary scalar loss given its gradient
  /// w.r.t. the emitted mean and std (d_std may be empty for mean-only
  /// losses, e.g. the pre-training MSE).
  std::vector<double> backprop(std::span<const double> obs,
                               std::span<const double> d_mean,
                               std::span<const double> d_std) const;

  nlohmann::json to_json() const;
  static PolicyNetwork from_json(const nlohmann::json& j);

  // All layers in order: hidden..., mean head, std head.
  const std::vector<LayerSpec>& layers() const { return layers_; }

 private:
  struct LayerView {
    int in = 0;
    int out = 0;
    std::size_t w_off = 0;  // row-major out x in
    std::size_t b_off = 0;
    Activation act = Activation::Tanh;
  };

  struct ForwardCache {
    std::vector<std::vector<double>> pre;   // z per layer
    std::vector<std::vector<double>> post;  // a per layer
  };

  ControlDistribution run_forward(std::span<const double> obs, ForwardCache* cache) const;

  int input_dim_;
  int n_controls_;
  std::vector<LayerSpec> layers_;     // hidden..., mean head, std head
  std::vector<LayerView> views_;
  std::vector<double> theta_;
  std::vector<double> action_low_;
  std::vector<double> action_high_;
  double std_floor_frac_;
};

/// Self-contained controller artifact: the network plus the frozen
/// normalization it was trained with.
struct Policy {
  PolicyNetwork net;
  ObsStats stats;

  nlohmann::json to_json() const;
  static Policy from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Policy load(const std::string& path);
};

}  // namespace bilevel_rl

#endif
