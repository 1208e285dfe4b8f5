#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rmpflow/gds.hpp"
#include "rmpflow/taskmap.hpp"

namespace rmpflow {

/// Ablation switches mirroring the controlled experiments: dropping the
/// Jdot*xdot correction in pullback, or the curvature terms at the leaves.
struct EvalOptions {
  bool use_jdot = true;
  bool use_curvature = true;
};

struct NodeSnapshot {
  std::string path;
  Vector x;
  Vector xdot;
  NaturalRmp rmp;
};

class RmpNode {
 public:
  RmpNode(std::string name, int dim, std::optional<TaskMap> edge)
      : name_(std::move(name)), dim_(dim), edge_(std::move(edge)) {}

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  bool is_leaf() const { return leaf_.has_value(); }
  const GdsLeaf& leaf() const { return *leaf_; }
  const std::vector<std::unique_ptr<RmpNode>>& children() const { return children_; }

  RmpNode& add_child(std::string name, TaskMap edge) {
    if (leaf_)
      throw std::logic_error("RmpNode: node '" + name_ + "' already carries a leaf policy");
    if (edge.input_dim != dim_)
      throw std::invalid_argument("RmpNode: edge into '" + name + "' expects input dim " +
                                  std::to_string(edge.input_dim) + ", node dim is " +
                                  std::to_string(dim_));
    const int child_dim = edge.output_dim;
    children_.push_back(
        std::make_unique<RmpNode>(std::move(name), child_dim, std::move(edge)));
    return *children_.back();
  }

  RmpNode& add_leaf(std::string name, TaskMap edge, GdsLeaf leaf) {
    if (leaf.dim != edge.output_dim)
      throw std::invalid_argument("RmpNode: leaf dim " + std::to_string(leaf.dim) +
                                  " does not match edge output " +
                                  std::to_string(edge.output_dim));
    RmpNode& child = add_child(std::move(name), std::move(edge));
    child.leaf_ = std::move(leaf);
    return child;
  }

  std::unique_ptr<RmpNode> clone() const {
    auto copy = std::make_unique<RmpNode>(name_, dim_, edge_);
    copy->leaf_ = leaf_;
    for (const auto& c : children_) copy->children_.push_back(c->clone());
    return copy;
  }

  /// Forward pass: store the pushed state; recurse into children through
  /// taskmap_apply on each edge.
  void pushforward(const Vector& x, const Vector& xdot, const std::string& path) {
    t_.x = x;
    t_.xdot = xdot;
    t_.valid = true;
    for (auto& child : children_) {
      TaskMapEval ev;
      try {
        ev = taskmap_apply(*child->edge_, x, xdot);
      } catch (const std::domain_error& e) {
        throw std::domain_error("at node '" + path + "/" + child->name_ + "': " + e.what());
      }
      child->t_.J = ev.J;
      child->t_.jdotxdot = ev.jdotxdot;
      child->pushforward(ev.y, ev.ydot, path + "/" + child->name_);
    }
  }

  /// Backward pass: leaves evaluate their GDS, interior nodes pull the
  /// children back as f = sum J^T (f_i - M_i Jdot xdot), M = sum J^T M_i J.
  const NaturalRmp& pullback_pass(const EvalOptions& opts, const std::string& path) {
    if (leaf_) {
      try {
        t_.rmp = gds_natural_rmp(*leaf_, t_.x, t_.xdot, opts.use_curvature);
      } catch (const std::domain_error& e) {
        throw std::domain_error("at node '" + path + "': " + e.what());
      }
      return *t_.rmp;
    }
    std::vector<ChildPull> pulls;
    pulls.reserve(children_.size());
    for (auto& child : children_) {
      const NaturalRmp& crmp = child->pullback_pass(opts, path + "/" + child->name_);
      pulls.push_back({crmp, child->t_.J,
                       opts.use_jdot ? child->t_.jdotxdot
                                     : Vector(Vector::Zero(child->dim_))});
    }
    t_.rmp = pullback(pulls, dim_);
    return *t_.rmp;
  }

  void snapshot_into(std::vector<NodeSnapshot>& out, const std::string& path) const {
    if (t_.valid && t_.rmp) out.push_back({path, t_.x, t_.xdot, *t_.rmp});
    for (const auto& c : children_) c->snapshot_into(out, path + "/" + c->name_);
  }

  void invalidate() {
    t_ = Transient{};
    for (auto& c : children_) c->invalidate();
  }

  template <typename Fn>
  void visit_leaves(const TaskMap& to_here, const Fn& fn) const {
    if (leaf_) fn(to_here, *leaf_);
    for (const auto& c : children_) c->visit_leaves(compose_maps(*c->edge_, to_here), fn);
  }

 private:
  struct Transient {
    Vector x, xdot;
    Matrix J;
    Vector jdotxdot;
    std::optional<NaturalRmp> rmp;
    bool valid = false;
  };

  std::string name_;
  int dim_;
  std::optional<TaskMap> edge_;
  std::optional<GdsLeaf> leaf_;
  std::vector<std::unique_ptr<RmpNode>> children_;
  Transient t_;
};

struct EvalResult {
  Vector qddot;
  NaturalRmp root;
};

struct EnergyReport {
  double kinetic = 0.0;
  double potential = 0.0;
  bool potential_complete = true;  // false when some leaf lacks potential_value
  double total() const { return kinetic + potential; }
};

/// Tree of task spaces with GDS leaf policies. A tree instance is
/// single-threaded during a pass; clone() yields independent instances for
/// parallel trials.
class RmpTree {
 public:
  explicit RmpTree(int config_dim, std::string root_name = "root")
      : root_(std::make_unique<RmpNode>(std::move(root_name), config_dim, std::nullopt)) {}

  RmpTree(const RmpTree& other) : options(other.options), root_(other.root_->clone()) {}
  RmpTree& operator=(const RmpTree& other) {
    options = other.options;
    root_ = other.root_->clone();
    return *this;
  }
  RmpTree(RmpTree&&) = default;
  RmpTree& operator=(RmpTree&&) = default;

  EvalOptions options;

  RmpNode& root() { return *root_; }
  const RmpNode& root() const { return *root_; }
  int config_dim() const { return root_->dim(); }

  /// Two-pass policy evaluation: returns the resolved acceleration and the
  /// unresolved root RMP. Transient caches are dropped before returning.
  EvalResult evaluate(const Vector& q, const Vector& qdot,
                      std::vector<NodeSnapshot>* snapshot = nullptr) {
    check_state(q, qdot);
    root_->pushforward(q, qdot, root_->name());
    NaturalRmp root_rmp = root_->pullback_pass(options, root_->name());
    if (snapshot) {
      snapshot->clear();
      root_->snapshot_into(*snapshot, root_->name());
    }
    root_->invalidate();
    return {resolve(root_rmp).a, std::move(root_rmp)};
  }

  /// Policy closure q, qdot -> qddot for the integrator.
  std::function<Vector(const Vector&, const Vector&)> policy() {
    return [this](const Vector& q, const Vector& qdot) { return evaluate(q, qdot).qddot; };
  }

  /// Total energy 1/2 qdot^T G qdot + Phi, assembled leaf-wise at the pushed
  /// states (equals the pulled-back root quantities).
  EnergyReport energy(const Vector& q, const Vector& qdot) const {
    check_state(q, qdot);
    EnergyReport rep;
    root_->visit_leaves(identity_map(config_dim()),
                        [&](const TaskMap& to_leaf, const GdsLeaf& leaf) {
                          const TaskMapEval ev = taskmap_apply(to_leaf, q, qdot);
                          rep.kinetic += 0.5 * ev.ydot.dot(leaf.metric(ev.y, ev.ydot) * ev.ydot);
                          if (leaf.potential_value)
                            rep.potential += leaf.potential_value(ev.y);
                          else
                            rep.potential_complete = false;
                        });
    return rep;
  }

  /// Pulled-back metric, damping and potential gradient at a state:
  /// G = sum J^T G_i J, B = sum J^T B_i J, grad Phi = sum J^T grad Phi_i.
  struct PulledBack {
    Matrix G;
    Matrix B;
    Vector grad_potential;
  };
  PulledBack pulled_back(const Vector& q, const Vector& qdot) const {
    check_state(q, qdot);
    const int d = config_dim();
    PulledBack out{Matrix::Zero(d, d), Matrix::Zero(d, d), Vector::Zero(d)};
    root_->visit_leaves(identity_map(d), [&](const TaskMap& to_leaf, const GdsLeaf& leaf) {
      const TaskMapEval ev = taskmap_apply(to_leaf, q, qdot);
      out.G += ev.J.transpose() * leaf.metric(ev.y, ev.ydot) * ev.J;
      out.B += ev.J.transpose() * leaf.damping(ev.y, ev.ydot) * ev.J;
      if (leaf.potential_grad) out.grad_potential += ev.J.transpose() * leaf.potential_grad(ev.y);
    });
    return out;
  }

  /// Each leaf together with the composed task map from the root.
  std::vector<std::pair<TaskMap, const GdsLeaf*>> flattened_leaves() const {
    std::vector<std::pair<TaskMap, const GdsLeaf*>> out;
    root_->visit_leaves(identity_map(config_dim()),
                        [&](const TaskMap& to_leaf, const GdsLeaf& leaf) {
                          out.emplace_back(to_leaf, &leaf);
                        });
    return out;
  }

 private:
  void check_state(const Vector& q, const Vector& qdot) const {
    if (q.size() != config_dim() || qdot.size() != config_dim())
      throw std::invalid_argument("RmpTree: state dimension mismatch");
    if (!is_finite(q) || !is_finite(qdot))
      throw std::invalid_argument("RmpTree: non-finite state");
  }

  std::unique_ptr<RmpNode> root_;
};

}  // namespace rmpflow
