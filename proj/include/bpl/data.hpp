#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpl/rng.hpp"
#include "bpl/systems.hpp"

namespace bpl {

struct Point {
  double x = 0.0;
  double t = 0.0;
};

struct LabeledPoint {
  double x = 0.0;
  double t = 0.0;
  double u = 0.0;
};

/// Training datasets for one run. bc_times holds the 100 boundary samples;
/// entry t stands for the coupled pair (x_min,t),(x_max,t), which the
/// boundary residuals evaluate jointly. pl grows during training; pl_from[i]
/// is the collocation index pseudo-label i was created at (each collocation
/// point is labeled at most once).
struct DataBundle {
  std::vector<LabeledPoint> ic;
  std::vector<double> bc_times;
  std::vector<Point> pde;
  std::vector<LabeledPoint> pl;
  std::vector<int> pl_from;
};

struct DataSizes {
  int ic = 256;
  int bc = 100;
  int pde = 1000;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Latin hypercube sample: n points, one per stratum in every dimension.
/// Per dimension the stratum order is a uniform permutation and the point
/// sits uniformly inside its stratum. Row i of the result is point i.
inline Eigen::MatrixXd latin_hypercube(int n, const std::vector<Interval>& bounds,
                                       std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  Rng rng(seed);
  const int dims = static_cast<int>(bounds.size());
  Eigen::MatrixXd pts(n, dims);
  std::vector<int> perm(n);
  for (int d = 0; d < dims; ++d) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<int>(rng.below(i + 1))]);
    const double width = (bounds[d].hi - bounds[d].lo) / n;
    for (int i = 0; i < n; ++i)
      pts(i, d) = bounds[d].lo + (perm[i] + rng.u01()) * width;
  }
  return pts;
}

/// IC points evenly spaced on [x_min, x_max) at t=0 with exact labels;
/// boundary times evenly spaced on [0, t_max] inclusive; collocation points
/// by Latin hypercube; empty pseudo-label buffer.
inline DataBundle build_bundle(const SystemSpec& spec, std::uint64_t seed,
                               const DataSizes& sizes = {}) {
  DataBundle b;
  b.ic.reserve(sizes.ic);
  const double span = spec.x_max - spec.x_min;
  for (int i = 0; i < sizes.ic; ++i) {
    const double x = spec.x_min + span * i / sizes.ic;
    b.ic.push_back({x, 0.0, initial_condition(spec, x)});
  }
  b.bc_times.reserve(sizes.bc);
  for (int j = 0; j < sizes.bc; ++j)
    b.bc_times.push_back(sizes.bc == 1 ? 0.0 : spec.t_max * j / (sizes.bc - 1));
  const Eigen::MatrixXd pts = latin_hypercube(
      sizes.pde, {{spec.x_min, spec.x_max}, {0.0, spec.t_max}}, seed);
  b.pde.reserve(sizes.pde);
  for (int i = 0; i < sizes.pde; ++i) b.pde.push_back({pts(i, 0), pts(i, 1)});
  return b;
}

/// Min-max scaling of a domain point to the unit square. All gating and
/// activation distances are computed on these coordinates.
inline Point normalize(Point p, const SystemSpec& spec) {
  return {(p.x - spec.x_min) / (spec.x_max - spec.x_min), p.t / spec.t_max};
}

/// D_l = D_ic and D_pl as one list (ic first, then pl, in stored order).
inline std::vector<LabeledPoint> labeled_union(const DataBundle& b) {
  std::vector<LabeledPoint> out;
  out.reserve(b.ic.size() + b.pl.size());
  out.insert(out.end(), b.ic.begin(), b.ic.end());
  out.insert(out.end(), b.pl.begin(), b.pl.end());
  return out;
}

struct Nearest {
  int index = -1;
  double distance = 0.0; // in normalized coordinates
};

/// Exhaustive nearest-neighbor scan in normalized coordinates; ties keep the
/// lowest index.
inline Nearest nearest_labeled(Point query, const std::vector<LabeledPoint>& labeled,
                               const SystemSpec& spec) {
  if (labeled.empty()) throw std::invalid_argument("nearest_labeled: empty labeled set");
  const Point q = normalize(query, spec);
  Nearest best;
  double best_sq = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const Point p = normalize({labeled[i].x, labeled[i].t}, spec);
    const double dxx = p.x - q.x, dtt = p.t - q.t;
    const double d2 = dxx * dxx + dtt * dtt;
    if (d2 < best_sq) {
      best_sq = d2;
      best.index = static_cast<int>(i);
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

/// Indices of the collocation points whose nearest labeled neighbor is
/// strictly closer than delta_pde (normalized).
inline std::vector<int> active_subset(const std::vector<Point>& points,
                                      const std::vector<LabeledPoint>& labeled, double delta_pde,
                                      const SystemSpec& spec) {
  if (delta_pde <= 0.0) throw std::invalid_argument("active_subset: delta_pde must be > 0");
  std::vector<int> out;
  if (labeled.empty()) return out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (nearest_labeled(points[i], labeled, spec).distance < delta_pde)
      out.push_back(static_cast<int>(i));
  return out;
}

/// Active boundary entries: a pair (x_min,t),(x_max,t) is active when either
/// end is strictly within delta_pde of a labeled point.
inline std::vector<int> active_bc_subset(const std::vector<double>& bc_times,
                                         const std::vector<LabeledPoint>& labeled,
                                         double delta_pde, const SystemSpec& spec) {
  if (delta_pde <= 0.0) throw std::invalid_argument("active_bc_subset: delta_pde must be > 0");
  std::vector<int> out;
  if (labeled.empty()) return out;
  for (std::size_t j = 0; j < bc_times.size(); ++j) {
    const double t = bc_times[j];
    const double lo = nearest_labeled({spec.x_min, t}, labeled, spec).distance;
    const double hi = nearest_labeled({spec.x_max, t}, labeled, spec).distance;
    if (std::min(lo, hi) < delta_pde) out.push_back(static_cast<int>(j));
  }
  return out;
}

// --- csv io ---

inline void bundle_to_csv(const DataBundle& b, const SystemSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("bundle_to_csv: cannot open " + path);
  out << "role,x,t,u\n";
  char buf[128];
  auto row = [&](const char* role, double x, double t, const double* u) {
    if (u)
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", role, x, t, *u);
    else
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,\n", role, x, t);
    out << buf;
  };
  for (const auto& p : b.ic) row("ic", p.x, p.t, &p.u);
  for (double t : b.bc_times) {
    row("bc", spec.x_min, t, nullptr);
    row("bc", spec.x_max, t, nullptr);
  }
  for (const auto& p : b.pde) row("pde", p.x, p.t, nullptr);
  for (const auto& p : b.pl) row("pl", p.x, p.t, &p.u);
}

inline DataBundle bundle_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("bundle_from_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "role,x,t,u") throw std::runtime_error("bundle_from_csv: bad header");
  DataBundle b;
  int bc_row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string role, xs, ts, us;
    std::getline(ls, role, ',');
    std::getline(ls, xs, ',');
    std::getline(ls, ts, ',');
    std::getline(ls, us);
    const double x = std::stod(xs), t = std::stod(ts);
    if (role == "ic")
      b.ic.push_back({x, t, std::stod(us)});
    else if (role == "bc") {
      if (bc_row++ % 2 == 0) b.bc_times.push_back(t); // pairs share t; keep one
    } else if (role == "pde")
      b.pde.push_back({x, t});
    else if (role == "pl")
      b.pl.push_back({x, t, std::stod(us)});
    else
      throw std::runtime_error("bundle_from_csv: unknown role '" + role + "'");
  }
  // Re-associate pseudo-labels with their collocation points.
  for (const auto& p : b.pl) {
    int found = -1;
    for (std::size_t i = 0; i < b.pde.size(); ++i)
      if (b.pde[i].x == p.x && b.pde[i].t == p.t) {
        found = static_cast<int>(i);
        break;
      }
    if (found < 0)
      throw std::runtime_error("bundle_from_csv: pseudo-label does not match a collocation point");
    b.pl_from.push_back(found);
  }
  return b;
}

} // namespace bpl
