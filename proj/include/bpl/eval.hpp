#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpl/batch.hpp"
#include "bpl/data.hpp"
#include "bpl/rng.hpp"
#include "bpl/systems.hpp"

namespace bpl {

/// Pointwise mean of the ensemble predictions.
inline Eigen::VectorXd predict_mean(const Architecture& arch,
                                    const std::vector<ParameterVector>& samples,
                                    const std::vector<Point>& points) {
  if (samples.empty()) throw std::invalid_argument("predict_mean: no samples");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  if (n == 0) return mean;
  Batch batch(arch, Planes{}, n);
  std::vector<double> xs(n), ts(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xs[i] = points[i].x;
    ts[i] = points[i].t;
  }
  batch.set_inputs(xs, ts);
  for (const auto& s : samples) {
    batch.forward(s);
    mean += batch.u().transpose();
  }
  return mean / static_cast<double>(samples.size());
}

/// ||pred - ref||_2 / ||ref||_2 over an evaluation point set.
inline double relative_l2(const Eigen::VectorXd& pred, const Eigen::VectorXd& ref) {
  if (pred.size() != ref.size()) throw std::invalid_argument("relative_l2: length mismatch");
  const double denom = ref.norm();
  if (denom == 0.0) throw std::domain_error("relative_l2: reference has zero norm");
  return (pred - ref).norm() / denom;
}

/// Uniformly random evaluation points over the computational domain.
inline std::vector<Point> random_eval_points(const SystemSpec& spec, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> pts(n);
  for (auto& p : pts) {
    p.x = rng.uniform(spec.x_min, spec.x_max);
    p.t = rng.uniform(0.0, spec.t_max);
  }
  return pts;
}

/// Relative L2 of an ensemble against the reference oracle at n random
/// points.
inline double relative_l2_vs_reference(const Architecture& arch,
                                       const std::vector<ParameterVector>& samples,
                                       const ReferenceSolution& ref, int n, std::uint64_t seed) {
  const std::vector<Point> pts = random_eval_points(ref.spec(), n, seed);
  const Eigen::VectorXd pred = predict_mean(arch, samples, pts);
  Eigen::VectorXd exact(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) exact[i] = ref(pts[i].x, pts[i].t);
  return relative_l2(pred, exact);
}

/// Lattice of per-cell prediction, reference, absolute error and ensemble
/// variance. x excludes the periodic endpoint; t includes both ends.
struct EvalGrid {
  int nx = 0;
  int nt = 0;
  std::vector<double> xs;
  std::vector<double> ts;
  Eigen::MatrixXd prediction; // nx rows, nt cols
  Eigen::MatrixXd reference;
  Eigen::MatrixXd abs_error;
  Eigen::MatrixXd variance;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("EvalGrid: cannot open " + path);
    out << "x,t,prediction,reference,abs_error,variance\n";
    char buf[192];
    for (int j = 0; j < nt; ++j)
      for (int i = 0; i < nx; ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.17g,%.17g,%.17g,%.17g\n", xs[i], ts[j],
                      prediction(i, j), reference(i, j), abs_error(i, j), variance(i, j));
        out << buf;
      }
  }
};

/// Grid evaluation from arbitrary prediction mean/variance functions (used
/// directly by tests that substitute an exact oracle for the ensemble).
inline EvalGrid evaluate_fields(const std::function<double(double, double)>& pred_mean,
                                const std::function<double(double, double)>& pred_variance,
                                const ReferenceSolution& ref, int nx = 256, int nt = 100) {
  const SystemSpec& spec = ref.spec();
  EvalGrid g;
  g.nx = nx;
  g.nt = nt;
  g.xs.resize(nx);
  g.ts.resize(nt);
  for (int i = 0; i < nx; ++i)
    g.xs[i] = spec.x_min + (spec.x_max - spec.x_min) * i / nx;
  for (int j = 0; j < nt; ++j) g.ts[j] = nt == 1 ? 0.0 : spec.t_max * j / (nt - 1);
  g.prediction.resize(nx, nt);
  g.reference.resize(nx, nt);
  g.abs_error.resize(nx, nt);
  g.variance.resize(nx, nt);
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nx; ++i) {
      const double p = pred_mean(g.xs[i], g.ts[j]);
      const double r = ref(g.xs[i], g.ts[j]);
      g.prediction(i, j) = p;
      g.reference(i, j) = r;
      g.abs_error(i, j) = std::abs(p - r);
      g.variance(i, j) = pred_variance(g.xs[i], g.ts[j]);
    }
  return g;
}

/// Grid evaluation of an ensemble: per-cell mean prediction and population
/// variance against the reference. Writes the CSV when a path is given.
inline EvalGrid export_fields(const Architecture& arch,
                              const std::vector<ParameterVector>& samples,
                              const ReferenceSolution& ref, int nx = 256, int nt = 100,
                              const std::string& csv_path = {}) {
  if (samples.empty()) throw std::invalid_argument("export_fields: no samples");
  const SystemSpec& spec = ref.spec();
  // One batched sweep per sample over the whole lattice.
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(nx) * nt);
  std::vector<double> xs(nx), ts(nt);
  for (int i = 0; i < nx; ++i) xs[i] = spec.x_min + (spec.x_max - spec.x_min) * i / nx;
  for (int j = 0; j < nt; ++j) ts[j] = nt == 1 ? 0.0 : spec.t_max * j / (nt - 1);
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nx; ++i) pts.push_back({xs[i], ts[j]});

  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());
  Batch batch(arch, Planes{}, n);
  std::vector<double> bx(n), bt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    bx[i] = pts[i].x;
    bt[i] = pts[i].t;
  }
  batch.set_inputs(bx, bt);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  for (const auto& s : samples) {
    batch.forward(s);
    sum += batch.u().transpose();
  }
  const double m = static_cast<double>(samples.size());
  const Eigen::VectorXd mean = sum / m;
  // Two-pass form keeps the variance nonnegative.
  Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
  for (const auto& s : samples) {
    batch.forward(s);
    var += (batch.u().transpose() - mean).array().square().matrix();
  }
  var /= m;

  EvalGrid g;
  g.nx = nx;
  g.nt = nt;
  g.xs = xs;
  g.ts = ts;
  g.prediction.resize(nx, nt);
  g.reference.resize(nx, nt);
  g.abs_error.resize(nx, nt);
  g.variance.resize(nx, nt);
  Eigen::Index k = 0;
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nx; ++i, ++k) {
      const double r = ref(xs[i], ts[j]);
      g.prediction(i, j) = mean[k];
      g.reference(i, j) = r;
      g.abs_error(i, j) = std::abs(mean[k] - r);
      g.variance(i, j) = var[k];
    }
  if (!csv_path.empty()) g.write_csv(csv_path);
  return g;
}

} // namespace bpl
