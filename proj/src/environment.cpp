#include "bilevel_rl/environment.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

TimeGrid::TimeGrid(double t_final_, int n_steps_, int substeps_)
    : t_final(t_final_), n_steps(n_steps_), substeps(substeps_) {
  if (!(t_final > 0.0)) throw ContractError("TimeGrid: t_final must be positive");
  if (n_steps < 1) throw ContractError("TimeGrid: n_steps must be >= 1");
  if (substeps < 1) throw ContractError("TimeGrid: substeps must be >= 1");
}

std::vector<double> rk4_step(
    const std::function<std::vector<double>(std::span<const double>, double)>& f,
    std::span<const double> x, double t, double dt) {
  const std::size_t n = x.size();
  const std::vector<double> k1 = f(x, t);
  std::vector<double> tmp(n);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  const std::vector<double> k2 = f(tmp, t + 0.5 * dt);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  const std::vector<double> k3 = f(tmp, t + 0.5 * dt);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  const std::vector<double> k4 = f(tmp, t + dt);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!std::isfinite(out[i]))
      throw IntegrationError("rk4_step: non-finite state at t=" + std::to_string(t));
  }
  return out;
}

namespace {
std::atomic<std::uint64_t> g_floor_events{0};
}

void note_floor_event() { g_floor_events.fetch_add(1, std::memory_order_relaxed); }

std::uint64_t floor_event_count() { return g_floor_events.load(std::memory_order_relaxed); }

}  // namespace bilevel_rl
