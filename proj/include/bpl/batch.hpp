#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "bpl/network.hpp"

namespace bpl {

/// Which input-derivative planes a batched evaluation carries besides the
/// value. Residuals that never touch u_xx (or u_x) skip those planes, which
/// roughly halves the dominant GEMM cost for the reaction system.
struct Planes {
  bool dx = false;
  bool dt = false;
  bool dxx = false;

  int count() const { return 1 + dx + dt + dxx; }
};

namespace detail {
/// Vectorized tanh via exp: Eigen carries no SIMD tanh kernel for double, so
/// the scalar libm call would dominate the layer cost. Max deviation from
/// std::tanh is a couple of ulp, and the saturation limits are exact.
template <class Dst, class Src>
void tanh_into(Dst&& dst, const Src& src) {
  dst.array() = 1.0 - 2.0 / ((2.0 * src.array()).exp() + 1.0);
}
} // namespace detail

/// Batched forward/reverse evaluation of the network over a fixed point set.
///
/// Activations are (width x planes*n) matrices whose column blocks hold, in
/// order, the value plane and the requested derivative planes. A dense layer
/// is then a single GEMM across all planes, and the parameter-gradient
/// accumulation of the reverse sweep is likewise one GEMM per layer.
///
/// Construction fixes the point count; forward() may be called repeatedly
/// with different parameters (the sampler re-evaluates thousands of times per
/// iteration on the same points). backward() consumes adjoint seeds on the
/// output planes and accumulates d(scalar)/d(theta) into a flat gradient; it
/// must be called with the same parameters as the preceding forward().
class Batch {
public:
  Batch(const Architecture& arch, Planes planes, Eigen::Index n)
      : arch_(arch), planes_(planes), n_(n), k_(planes.count()) {
    if (planes_.dxx && !planes_.dx)
      throw std::invalid_argument("Batch: dxx plane requires dx plane");
    if (arch_.input_dim != 2) throw std::invalid_argument("Batch: input must be (x,t)");
    const int L = arch_.num_linear_layers();
    acts_.resize(L + 1);
    pre_.resize(L + 1);
    acts_[0].setZero(2, k_ * n_);
    for (int l = 0; l < L; ++l) {
      acts_[l + 1].setZero(arch_.layer_out(l), k_ * n_);
      pre_[l + 1].setZero(arch_.layer_out(l), k_ * n_);
    }
    seed_.setZero(arch_.output_dim, k_ * n_);
    const Eigen::Index w = std::max(arch_.hidden_width, arch_.output_dim);
    s_.setZero(w, n_);
    sp_.setZero(w, n_);
    buf_a_.setZero(w, k_ * n_);
    buf_b_.setZero(w, k_ * n_);
  }

  Eigen::Index size() const { return n_; }
  const Planes& planes() const { return planes_; }

  /// Sets the evaluation points. Column i of the value plane gets (x_i,t_i);
  /// the derivative planes get the coordinate seeds.
  void set_inputs(const std::vector<double>& xs, const std::vector<double>& ts) {
    if (static_cast<Eigen::Index>(xs.size()) != n_ || static_cast<Eigen::Index>(ts.size()) != n_)
      throw std::invalid_argument("Batch: input size mismatch");
    Eigen::MatrixXd& a = acts_[0];
    a.setZero();
    for (Eigen::Index i = 0; i < n_; ++i) {
      a(0, i) = xs[i];
      a(1, i) = ts[i];
    }
    if (planes_.dx) a.row(0).segment(dx_block() * n_, n_).setOnes();
    if (planes_.dt) a.row(1).segment(dt_block() * n_, n_).setOnes();
    // dxx seeds are zero.
  }

  void forward(const ParameterVector& p) {
    const int L = arch_.num_linear_layers();
    for (int l = 0; l < L; ++l) {
      const auto w = layer_weights(arch_, p, l);
      const auto b = layer_biases(arch_, p, l);
      Eigen::MatrixXd& z = pre_[l + 1];
      z.noalias() = w * acts_[l];
      z.leftCols(n_).colwise() += b;
      if (l + 1 == L) {
        acts_[l + 1] = z;
        continue;
      }
      // tanh on the value plane, chain rule on the derivative planes.
      const int out = arch_.layer_out(l);
      Eigen::MatrixXd& a = acts_[l + 1];
      auto h = a.leftCols(n_);
      auto s = s_.topRows(out);
      detail::tanh_into(h, z.leftCols(n_));
      s.array() = 1.0 - h.array().square();
      if (planes_.dx)
        a.middleCols(dx_block() * n_, n_).array() =
            s.array() * z.middleCols(dx_block() * n_, n_).array();
      if (planes_.dt)
        a.middleCols(dt_block() * n_, n_).array() =
            s.array() * z.middleCols(dt_block() * n_, n_).array();
      if (planes_.dxx)
        a.middleCols(dxx_block() * n_, n_).array() =
            s.array() * z.middleCols(dxx_block() * n_, n_).array() -
            2.0 * h.array() * s.array() *
                z.middleCols(dx_block() * n_, n_).array().square();
    }
  }

  // Output accessors (valid after forward). Row blocks of size output_dim x n.
  auto u() const { return out().leftCols(n_); }
  auto ux() const { return out().middleCols(checked_block(planes_.dx, dx_block()) * n_, n_); }
  auto ut() const { return out().middleCols(checked_block(planes_.dt, dt_block()) * n_, n_); }
  auto uxx() const { return out().middleCols(checked_block(planes_.dxx, dxx_block()) * n_, n_); }

  /// Zeroes the adjoint seed buffer; fill the blocks, then call backward().
  void clear_seed() { seed_.setZero(); }
  auto seed_u() { return seed_.leftCols(n_); }
  auto seed_ux() { return seed_.middleCols(checked_block(planes_.dx, dx_block()) * n_, n_); }
  auto seed_ut() { return seed_.middleCols(checked_block(planes_.dt, dt_block()) * n_, n_); }
  auto seed_uxx() { return seed_.middleCols(checked_block(planes_.dxx, dxx_block()) * n_, n_); }

  /// Reverse sweep for the scalar whose output-plane adjoints are in the
  /// seed buffer; adds the parameter gradient into `grad`.
  void backward(const ParameterVector& p, Eigen::Ref<Eigen::VectorXd> grad) {
    const int L = arch_.num_linear_layers();
    Eigen::MatrixXd* cur = &buf_a_; // zbar of the layer being processed
    Eigen::MatrixXd* nxt = &buf_b_;
    cur->topRows(arch_.output_dim) = seed_;
    for (int l = L - 1; l >= 0; --l) {
      const int out_dim = arch_.layer_out(l);
      auto zbar = cur->topRows(out_dim);
      const int off = arch_.layer_offset(l);
      MutableWeightMap wbar(grad.data() + off, out_dim, arch_.layer_in(l));
      wbar.noalias() += zbar * acts_[l].transpose();
      Eigen::Map<Eigen::VectorXd>(grad.data() + off + out_dim * arch_.layer_in(l), out_dim) +=
          zbar.leftCols(n_).rowwise().sum();
      if (l == 0) break;

      const int prev = arch_.layer_out(l - 1);
      auto abar = nxt->topRows(prev);
      abar.noalias() = layer_weights(arch_, p, l).transpose() * zbar;

      // Through layer l-1's tanh: abar (adjoint of activations) becomes the
      // adjoint of pre-activations, in place. The value plane folds in the
      // cross terms of the not-yet-scaled derivative planes, and the dx
      // plane the dxx cross term, so the evaluation order below matters.
      const auto h = acts_[l].leftCols(n_);
      const auto& z = pre_[l];
      auto s = s_.topRows(prev);
      s.array() = 1.0 - h.array().square();
      auto abar_u = abar.leftCols(n_);
      if (k_ == 1) {
        abar_u.array() *= s.array();
      } else {
        auto sp = sp_.topRows(prev);
        sp.array() = -2.0 * h.array() * s.array();
        if (planes_.dxx) {
          const auto zx = z.middleCols(dx_block() * n_, n_);
          const auto zt = z.middleCols(dt_block() * n_, n_);
          const auto zxx = z.middleCols(dxx_block() * n_, n_);
          const auto abar_x = abar.middleCols(dx_block() * n_, n_);
          const auto abar_t = abar.middleCols(dt_block() * n_, n_);
          const auto abar_xx = abar.middleCols(dxx_block() * n_, n_);
          // d(sp)/dv = -2 s (s - 2 h^2)
          abar_u.array() =
              abar_u.array() * s.array() + abar_x.array() * sp.array() * zx.array() +
              abar_t.array() * sp.array() * zt.array() +
              abar_xx.array() *
                  (sp.array() * zxx.array() -
                   2.0 * s.array() * (s.array() - 2.0 * h.array().square()) *
                       zx.array().square());
          abar.middleCols(dx_block() * n_, n_).array() =
              abar_x.array() * s.array() + 2.0 * abar_xx.array() * sp.array() * zx.array();
          abar.middleCols(dt_block() * n_, n_).array() *= s.array();
          abar.middleCols(dxx_block() * n_, n_).array() *= s.array();
        } else {
          if (planes_.dx && planes_.dt)
            abar_u.array() = abar_u.array() * s.array() +
                             sp.array() * (abar.middleCols(dx_block() * n_, n_).array() *
                                               z.middleCols(dx_block() * n_, n_).array() +
                                           abar.middleCols(dt_block() * n_, n_).array() *
                                               z.middleCols(dt_block() * n_, n_).array());
          else if (planes_.dx)
            abar_u.array() = abar_u.array() * s.array() +
                             sp.array() * abar.middleCols(dx_block() * n_, n_).array() *
                                 z.middleCols(dx_block() * n_, n_).array();
          else
            abar_u.array() = abar_u.array() * s.array() +
                             sp.array() * abar.middleCols(dt_block() * n_, n_).array() *
                                 z.middleCols(dt_block() * n_, n_).array();
          if (planes_.dx) abar.middleCols(dx_block() * n_, n_).array() *= s.array();
          if (planes_.dt) abar.middleCols(dt_block() * n_, n_).array() *= s.array();
        }
      }
      std::swap(cur, nxt);
    }
  }

private:
  int dx_block() const { return 1; }
  int dt_block() const { return 1 + planes_.dx; }
  int dxx_block() const { return 1 + planes_.dx + planes_.dt; }

  static int checked_block(bool enabled, int blk) {
    if (!enabled) throw std::logic_error("Batch: plane not enabled");
    return blk;
  }

  const Eigen::MatrixXd& out() const { return acts_.back(); }

  Architecture arch_;
  Planes planes_;
  Eigen::Index n_;
  int k_;
  std::vector<Eigen::MatrixXd> acts_; // acts_[0] inputs, acts_[l+1] layer l output
  std::vector<Eigen::MatrixXd> pre_;  // pre_[l+1] layer l pre-activation
  Eigen::MatrixXd seed_;
  Eigen::MatrixXd s_, sp_;
  Eigen::MatrixXd buf_a_, buf_b_;
};

} // namespace bpl
