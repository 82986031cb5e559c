#ifndef BILEVEL_RL_SEARCH_HPP
#define BILEVEL_RL_SEARCH_HPP

#include <functional>
#include <utility>
#include <vector>

namespace bilevel_rl {

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  std::vector<double> clamp(std::vector<double> x) const;
};

struct SearchResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
};

struct NelderMeadOptions {
  int max_iterations = 200;
  double initial_scale = 0.25;  // simplex edge as a fraction of the box width
  double x_tolerance = 1e-6;    // simplex diameter relative to the box width
  double f_tolerance = 1e-10;
  // Stop as soon as the objective drops to this value or below (feasibility
  // searches only need any point at merit <= 0).
  double good_enough = -1e300;
};

/// Nelder-Mead on a box: candidate points are clamped before evaluation.
/// Deterministic for a fixed starting point.
SearchResult nelder_mead(const ObjectiveFn& f, const Box& box,
                         const std::vector<double>& start, const NelderMeadOptions& opts);

struct PatternSearchOptions {
  int max_iterations = 400;
  double initial_mesh = 0.25;    // fraction of the box width per coordinate
  double mesh_shrink = 0.5;
  double mesh_tolerance = 1e-3;  // stop when the relative mesh falls below this
};

/// Compass pattern search with a shrinking mesh, polling +/- each coordinate
/// in fixed order. Deterministic.
SearchResult pattern_search(const ObjectiveFn& f, const Box& box,
                            const std::vector<double>& start,
                            const PatternSearchOptions& opts);

}  // namespace bilevel_rl

#endif
