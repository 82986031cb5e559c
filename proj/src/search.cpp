#include "bilevel_rl/search.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

std::vector<double> Box::clamp(std::vector<double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::min(std::max(x[i], lo[i]), hi[i]);
  return x;
}

SearchResult nelder_mead(const ObjectiveFn& f, const Box& box,
                         const std::vector<double>& start, const NelderMeadOptions& opts) {
  const std::size_t n = box.dim();
  if (start.size() != n) throw ContractError("nelder_mead: start dimension mismatch");

  int evals = 0;
  const auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(box.clamp(x));
  };

  // Initial simplex: start plus one vertex displaced along each axis.
  std::vector<std::pair<std::vector<double>, double>> simplex;
  simplex.reserve(n + 1);
  {
    std::vector<double> x0 = box.clamp(start);
    simplex.emplace_back(x0, eval(x0));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x = x0;
      const double width = box.hi[i] - box.lo[i];
      double step = opts.initial_scale * width;
      if (x[i] + step > box.hi[i]) step = -step;
      x[i] += step;
      simplex.emplace_back(x, eval(x));
    }
  }
  const auto by_value = [](const auto& a, const auto& b) { return a.second < b.second; };
  std::sort(simplex.begin(), simplex.end(), by_value);

  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
  SearchResult res;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (simplex.front().second <= opts.good_enough) break;

    // Termination: simplex collapsed in x or f.
    double diameter = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double span = 0.0;
      for (const auto& v : simplex)
        span = std::max(span, std::abs(v.first[i] - simplex.front().first[i]));
      diameter = std::max(diameter, span / std::max(box.hi[i] - box.lo[i], 1e-300));
    }
    if (diameter < opts.x_tolerance &&
        std::abs(simplex.back().second - simplex.front().second) < opts.f_tolerance)
      break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v].first[i] / n;

    const auto& worst = simplex.back();
    std::vector<double> reflected(n);
    for (std::size_t i = 0; i < n; ++i)
      reflected[i] = centroid[i] + kReflect * (centroid[i] - worst.first[i]);
    const double f_reflected = eval(reflected);

    if (f_reflected < simplex.front().second) {
      std::vector<double> expanded(n);
      for (std::size_t i = 0; i < n; ++i)
        expanded[i] = centroid[i] + kExpand * (centroid[i] - worst.first[i]);
      const double f_expanded = eval(expanded);
      simplex.back() = f_expanded < f_reflected
                           ? std::make_pair(expanded, f_expanded)
                           : std::make_pair(reflected, f_reflected);
    } else if (f_reflected < simplex[n - 1].second) {
      simplex.back() = {reflected, f_reflected};
    } else {
      std::vector<double> contracted(n);
      for (std::size_t i = 0; i < n; ++i)
        contracted[i] = centroid[i] + kContract * (worst.first[i] - centroid[i]);
      const double f_contracted = eval(contracted);
      if (f_contracted < worst.second) {
        simplex.back() = {contracted, f_contracted};
      } else {
        for (std::size_t v = 1; v <= n; ++v) {
          for (std::size_t i = 0; i < n; ++i)
            simplex[v].first[i] = simplex.front().first[i] +
                                  kShrink * (simplex[v].first[i] - simplex.front().first[i]);
          simplex[v].second = eval(simplex[v].first);
        }
      }
    }
    std::sort(simplex.begin(), simplex.end(), by_value);
  }

  res.x = box.clamp(simplex.front().first);
  res.value = simplex.front().second;
  res.evaluations = evals;
  return res;
}

SearchResult pattern_search(const ObjectiveFn& f, const Box& box,
                            const std::vector<double>& start,
                            const PatternSearchOptions& opts) {
  const std::size_t n = box.dim();
  if (start.size() != n) throw ContractError("pattern_search: start dimension mismatch");

  SearchResult res;
  res.x = box.clamp(start);
  res.value = f(res.x);
  res.evaluations = 1;

  double mesh = opts.initial_mesh;
  for (int iter = 0; iter < opts.max_iterations && mesh >= opts.mesh_tolerance; ++iter) {
    bool improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double step = mesh * (box.hi[i] - box.lo[i]);
      if (step == 0.0) continue;
      for (const double dir : {+1.0, -1.0}) {
        std::vector<double> x = res.x;
        x[i] += dir * step;
        x = box.clamp(x);
        if (x[i] == res.x[i]) continue;
        const double v = f(x);
        ++res.evaluations;
        if (v < res.value) {
          res.x = std::move(x);
          res.value = v;
          improved = true;
          break;  // accept the first improving direction on this axis
        }
      }
    }
    if (!improved) mesh *= opts.mesh_shrink;
  }
  return res;
}

}  // namespace bilevel_rl
