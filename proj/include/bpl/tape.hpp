#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bpl/jet.hpp"

namespace bpl {

enum class JetSlot { val, dx, dt, dxx };

/// Records a forward evaluation as elementary operations over Jet2-valued
/// nodes and plays it backwards once to obtain the gradient of a scalar
/// output with respect to every registered parameter.
///
/// Values are evaluated eagerly while recording; nodes are created in
/// topological order, so one reverse sweep over the node list in reverse
/// creation order accumulates exact adjoints. Parameters are jet constants
/// (no x/t dependence): the parameter gradient of the output's value slot is
/// the value-component adjoint at each parameter node.
class Tape {
public:
  struct NodeId {
    std::uint32_t index = 0;
    std::uint32_t tape = 0;
  };

  Tape() : id_(next_id()++) {}

  NodeId input_x(double x) { return push(Op::leaf, 0, 0, 0.0, Jet2::seed_x(x)); }
  NodeId input_t(double t) { return push(Op::leaf, 0, 0, 0.0, Jet2::seed_t(t)); }
  NodeId constant(double c) { return push(Op::leaf, 0, 0, 0.0, Jet2::constant(c)); }

  /// Registers a parameter; gradient entries follow registration order.
  NodeId param(double value) {
    NodeId id = push(Op::leaf, 0, 0, 0.0, Jet2::constant(value));
    params_.push_back(id.index);
    return id;
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::mul, a, b); }
  /// Division is recorded as mul(a, recip(b)).
  NodeId div(NodeId a, NodeId b) { return mul(a, recip(b)); }
  NodeId recip(NodeId a) { return unary(Op::recip, a); }
  NodeId tanh(NodeId a) { return unary(Op::tanh_, a); }
  NodeId exp(NodeId a) { return unary(Op::exp_, a); }
  NodeId sin(NodeId a) { return unary(Op::sin_, a); }
  NodeId scale(NodeId a, double c) {
    check(a);
    return push(Op::scale, a.index, 0, c, c * nodes_[a.index].value);
  }

  /// Lifts one jet component to a plain (derivative-free) scalar node, so
  /// residual expressions like u_t - rho u (1-u) can be recorded as scalar
  /// functions of the parameters. The extracted node's own derivative slots
  /// are zero: it is the component's value, not a function of (x,t).
  NodeId extract(NodeId a, JetSlot slot) {
    check(a);
    const Jet2& v = nodes_[a.index].value;
    double comp = 0.0;
    switch (slot) {
      case JetSlot::val: comp = v.val; break;
      case JetSlot::dx: comp = v.dx; break;
      case JetSlot::dt: comp = v.dt; break;
      case JetSlot::dxx: comp = v.dxx; break;
    }
    return push(Op::slot, a.index, 0, static_cast<double>(static_cast<int>(slot)),
                Jet2::constant(comp));
  }

  const Jet2& value(NodeId id) const {
    check(id);
    return nodes_[id.index].value;
  }

  std::size_t num_params() const { return params_.size(); }

  /// Reverse sweep from `output`; returns d(output.val)/d(theta_k) for every
  /// registered parameter, in registration order.
  std::vector<double> gradient(NodeId output) const {
    check(output);
    std::vector<Jet2> adj(nodes_.size());
    adj[output.index].val = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const Node& n = nodes_[i];
      const Jet2& h = adj[i];
      if (h.val == 0.0 && h.dx == 0.0 && h.dt == 0.0 && h.dxx == 0.0) continue;
      switch (n.op) {
        case Op::leaf:
          break;
        case Op::add: {
          accum(adj[n.a], h, 1.0);
          accum(adj[n.b], h, 1.0);
          break;
        }
        case Op::sub: {
          accum(adj[n.a], h, 1.0);
          accum(adj[n.b], h, -1.0);
          break;
        }
        case Op::scale: {
          accum(adj[n.a], h, n.c);
          break;
        }
        case Op::slot: {
          // Only the extracted component receives the value adjoint; the
          // node's derivative slots are structurally zero.
          switch (static_cast<JetSlot>(static_cast<int>(n.c))) {
            case JetSlot::val: adj[n.a].val += h.val; break;
            case JetSlot::dx: adj[n.a].dx += h.val; break;
            case JetSlot::dt: adj[n.a].dt += h.val; break;
            case JetSlot::dxx: adj[n.a].dxx += h.val; break;
          }
          break;
        }
        case Op::mul: {
          const Jet2& f = nodes_[n.a].value;
          const Jet2& g = nodes_[n.b].value;
          Jet2& fa = adj[n.a];
          Jet2& ga = adj[n.b];
          fa.val += h.val * g.val + h.dx * g.dx + h.dt * g.dt + h.dxx * g.dxx;
          fa.dx += h.dx * g.val + 2.0 * h.dxx * g.dx;
          fa.dt += h.dt * g.val;
          fa.dxx += h.dxx * g.val;
          ga.val += h.val * f.val + h.dx * f.dx + h.dt * f.dt + h.dxx * f.dxx;
          ga.dx += h.dx * f.val + 2.0 * h.dxx * f.dx;
          ga.dt += h.dt * f.val;
          ga.dxx += h.dxx * f.val;
          break;
        }
        case Op::tanh_:
        case Op::exp_:
        case Op::sin_:
        case Op::recip: {
          const Jet2& f = nodes_[n.a].value;
          double p1, p2, p3;
          unary_derivs(n.op, f.val, p1, p2, p3);
          Jet2& fa = adj[n.a];
          fa.val += h.val * p1 + h.dx * p2 * f.dx + h.dt * p2 * f.dt +
                    h.dxx * (p2 * f.dxx + p3 * f.dx * f.dx);
          fa.dx += h.dx * p1 + 2.0 * h.dxx * p2 * f.dx;
          fa.dt += h.dt * p1;
          fa.dxx += h.dxx * p1;
          break;
        }
      }
    }
    std::vector<double> grad(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k) grad[k] = adj[params_[k]].val;
    return grad;
  }

private:
  enum class Op : std::uint8_t { leaf, add, sub, mul, scale, slot, tanh_, exp_, sin_, recip };

  struct Node {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    double c;
    Jet2 value;
  };

  static std::uint32_t& next_id() {
    static std::uint32_t id = 1;
    return id;
  }

  void check(NodeId id) const {
    if (id.tape != id_ || id.index >= nodes_.size())
      throw std::invalid_argument("Tape: node does not belong to this tape");
  }

  NodeId push(Op op, std::uint32_t a, std::uint32_t b, double c, const Jet2& v) {
    nodes_.push_back(Node{op, a, b, c, v});
    return {static_cast<std::uint32_t>(nodes_.size() - 1), id_};
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    check(a);
    check(b);
    const Jet2& f = nodes_[a.index].value;
    const Jet2& g = nodes_[b.index].value;
    Jet2 v;
    switch (op) {
      case Op::add: v = f + g; break;
      case Op::sub: v = f - g; break;
      case Op::mul: v = f * g; break;
      default: throw std::invalid_argument("Tape: not a binary op");
    }
    return push(op, a.index, b.index, 0.0, v);
  }

  NodeId unary(Op op, NodeId a) {
    check(a);
    const Jet2& f = nodes_[a.index].value;
    Jet2 v;
    switch (op) {
      case Op::tanh_: v = bpl::tanh(f); break;
      case Op::exp_: v = bpl::exp(f); break;
      case Op::sin_: v = bpl::sin(f); break;
      case Op::recip: v = bpl::recip(f); break;
      default: throw std::invalid_argument("Tape: not a unary op");
    }
    return push(op, a.index, 0, 0.0, v);
  }

  static void unary_derivs(Op op, double v, double& p1, double& p2, double& p3) {
    switch (op) {
      case Op::tanh_: {
        const double h = std::tanh(v);
        const double s = 1.0 - h * h;
        p1 = s;
        p2 = -2.0 * h * s;
        p3 = -2.0 * s * (s - 2.0 * h * h);
        return;
      }
      case Op::exp_: {
        const double e = std::exp(v);
        p1 = p2 = p3 = e;
        return;
      }
      case Op::sin_: {
        p1 = std::cos(v);
        p2 = -std::sin(v);
        p3 = -p1;
        return;
      }
      case Op::recip: {
        const double r = 1.0 / v;
        p1 = -r * r;
        p2 = 2.0 * r * r * r;
        p3 = -6.0 * r * r * r * r;
        return;
      }
      default: throw std::invalid_argument("Tape: not a unary op");
    }
  }

  static void accum(Jet2& dst, const Jet2& h, double w) {
    dst.val += w * h.val;
    dst.dx += w * h.dx;
    dst.dt += w * h.dt;
    dst.dxx += w * h.dxx;
  }

  std::uint32_t id_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> params_;
};

} // namespace bpl
