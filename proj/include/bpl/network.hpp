#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpl/rng.hpp"
#include "bpl/tape.hpp"

namespace bpl {

using ParameterVector = Eigen::VectorXd;

/// Fully connected tanh network u(x,t). All layers are dense; hidden layers
/// share one width.
struct Architecture {
  int input_dim = 2;
  int hidden_layers = 4;
  int hidden_width = 50;
  int output_dim = 1;

  int num_linear_layers() const { return hidden_layers + 1; }

  int layer_in(int l) const { return l == 0 ? input_dim : hidden_width; }
  int layer_out(int l) const { return l == num_linear_layers() - 1 ? output_dim : hidden_width; }

  /// Flat offset of layer l's weight block; biases follow the weights.
  int layer_offset(int l) const {
    int off = 0;
    for (int i = 0; i < l; ++i) off += layer_in(i) * layer_out(i) + layer_out(i);
    return off;
  }

  int param_count() const { return layer_offset(num_linear_layers()); }
};

/// Parameter layout (the checkpoint contract): layers in order, each as the
/// row-major weight matrix (out x in; entry (i,j) feeds output i from input
/// j) followed by the bias vector. 64-bit little-endian floats on disk.
using WeightMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutableWeightMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline WeightMap layer_weights(const Architecture& a, const ParameterVector& p, int l) {
  return WeightMap(p.data() + a.layer_offset(l), a.layer_out(l), a.layer_in(l));
}

inline Eigen::Map<const Eigen::VectorXd> layer_biases(const Architecture& a,
                                                      const ParameterVector& p, int l) {
  return Eigen::Map<const Eigen::VectorXd>(
      p.data() + a.layer_offset(l) + a.layer_in(l) * a.layer_out(l), a.layer_out(l));
}

struct LayerParams {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

inline std::vector<LayerParams> unflatten(const Architecture& a, const ParameterVector& p) {
  if (p.size() != a.param_count())
    throw std::invalid_argument("unflatten: parameter vector length mismatch");
  std::vector<LayerParams> layers(a.num_linear_layers());
  for (int l = 0; l < a.num_linear_layers(); ++l) {
    layers[l].weights = layer_weights(a, p, l);
    layers[l].biases = layer_biases(a, p, l);
  }
  return layers;
}

inline ParameterVector flatten(const Architecture& a, const std::vector<LayerParams>& layers) {
  ParameterVector p(a.param_count());
  for (int l = 0; l < a.num_linear_layers(); ++l) {
    MutableWeightMap(p.data() + a.layer_offset(l), a.layer_out(l), a.layer_in(l)) =
        layers[l].weights;
    Eigen::Map<Eigen::VectorXd>(p.data() + a.layer_offset(l) + a.layer_in(l) * a.layer_out(l),
                                a.layer_out(l)) = layers[l].biases;
  }
  return p;
}

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
inline ParameterVector init_parameters(const Architecture& a, std::uint64_t seed) {
  Rng rng(seed);
  ParameterVector p = ParameterVector::Zero(a.param_count());
  for (int l = 0; l < a.num_linear_layers(); ++l) {
    const int in = a.layer_in(l), out = a.layer_out(l);
    const double bound = std::sqrt(6.0 / (in + out));
    double* w = p.data() + a.layer_offset(l);
    for (int i = 0; i < in * out; ++i) w[i] = rng.uniform(-bound, bound);
  }
  return p;
}

/// Network output plus the input derivatives the physics residuals use.
template <class S>
struct SolutionDerivs {
  S u, ut, ux, uxx;
};
using Derivs = SolutionDerivs<double>;

/// u(x,t) for a single point. Same accumulation order as forward_jet, so the
/// two agree bitwise on the value slot.
inline double forward(const Architecture& a, const ParameterVector& p, double x, double t) {
  if (p.size() != a.param_count())
    throw std::invalid_argument("forward: parameter vector length mismatch");
  std::vector<double> act(a.layer_in(0)), next;
  act[0] = x;
  if (a.input_dim > 1) act[1] = t;
  for (int l = 0; l < a.num_linear_layers(); ++l) {
    const int in = a.layer_in(l), out = a.layer_out(l);
    const double* w = p.data() + a.layer_offset(l);
    const double* b = w + in * out;
    next.assign(out, 0.0);
    for (int i = 0; i < out; ++i) {
      double z = b[i];
      for (int j = 0; j < in; ++j) z += w[i * in + j] * act[j];
      next[i] = l + 1 < a.num_linear_layers() ? std::tanh(z) : z;
    }
    act.swap(next);
  }
  return act[0];
}

/// Forward pass propagating the coordinate jets; returns (u, u_t, u_x, u_xx).
inline Derivs forward_jet(const Architecture& a, const ParameterVector& p, double x, double t) {
  if (p.size() != a.param_count())
    throw std::invalid_argument("forward_jet: parameter vector length mismatch");
  std::vector<Jet2> act(a.layer_in(0)), next;
  act[0] = Jet2::seed_x(x);
  if (a.input_dim > 1) act[1] = Jet2::seed_t(t);
  for (int l = 0; l < a.num_linear_layers(); ++l) {
    const int in = a.layer_in(l), out = a.layer_out(l);
    const double* w = p.data() + a.layer_offset(l);
    const double* b = w + in * out;
    next.assign(out, Jet2{});
    for (int i = 0; i < out; ++i) {
      Jet2 z = Jet2::constant(b[i]);
      for (int j = 0; j < in; ++j) {
        const double c = w[i * in + j];
        z.val += c * act[j].val;
        z.dx += c * act[j].dx;
        z.dt += c * act[j].dt;
        z.dxx += c * act[j].dxx;
      }
      next[i] = l + 1 < a.num_linear_layers() ? tanh(z) : z;
    }
    act.swap(next);
  }
  return {act[0].val, act[0].dt, act[0].dx, act[0].dxx};
}

/// Builds the network expression on a tape. `params` must hold one node per
/// flat parameter, in layout order. Used to cross-check the batched engine.
inline Tape::NodeId tape_forward(Tape& tape, const Architecture& a,
                                 std::span<const Tape::NodeId> params, Tape::NodeId x,
                                 Tape::NodeId t) {
  if (static_cast<int>(params.size()) != a.param_count())
    throw std::invalid_argument("tape_forward: parameter node count mismatch");
  std::vector<Tape::NodeId> act = {x, t};
  for (int l = 0; l < a.num_linear_layers(); ++l) {
    const int in = a.layer_in(l), out = a.layer_out(l);
    const int off = a.layer_offset(l);
    std::vector<Tape::NodeId> next(out);
    for (int i = 0; i < out; ++i) {
      Tape::NodeId z = params[off + in * out + i];
      for (int j = 0; j < in; ++j)
        z = tape.add(z, tape.mul(params[off + i * in + j], act[j]));
      next[i] = l + 1 < a.num_linear_layers() ? tape.tanh(z) : z;
    }
    act.swap(next);
  }
  return act[0];
}

// --- checkpoint io ---

inline void save_checkpoint(const std::string& path, const Architecture& a,
                            const ParameterVector& p) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format is little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << "bpl checkpoint 1\n"
      << "arch " << a.input_dim << ' ' << a.hidden_layers << ' ' << a.hidden_width << ' '
      << a.output_dim << '\n'
      << "params " << p.size() << '\n'
      << "layout layer-major row-major weights-then-biases float64-le\n"
      << "data\n";
  out.write(reinterpret_cast<const char*>(p.data()),
            static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline std::pair<Architecture, ParameterVector> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "bpl checkpoint 1")
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  Architecture a;
  long n = -1;
  while (std::getline(in, line) && line != "data") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "arch")
      ls >> a.input_dim >> a.hidden_layers >> a.hidden_width >> a.output_dim;
    else if (key == "params")
      ls >> n;
    else if (key == "layout")
      ;  // informative only
    else
      throw std::runtime_error("load_checkpoint: unknown header key '" + key + "'");
  }
  if (n != a.param_count())
    throw std::runtime_error("load_checkpoint: parameter count does not match architecture");
  ParameterVector p(n);
  in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated data in " + path);
  if (!p.allFinite()) throw std::runtime_error("load_checkpoint: non-finite parameters");
  return {a, std::move(p)};
}

} // namespace bpl
