#pragma once

// Deterministic tree policy: flat node array, x[feature] <= threshold goes
// left, otherwise right. Leaves carry a setpoint pair.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvacdt/types.hpp"

namespace hvacdt {

struct TreeNode {
  bool is_leaf = true;
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  SetpointAction action;  // meaningful for leaves only

  static TreeNode leaf(SetpointAction a) { return TreeNode{true, -1, 0.0, -1, -1, a}; }
  static TreeNode split(int feature, double threshold, int left, int right) {
    return TreeNode{false, feature, threshold, left, right, SetpointAction::off()};
  }

  bool operator==(const TreeNode& o) const {
    if (is_leaf != o.is_leaf) return false;
    if (is_leaf) return action == o.action;
    return feature == o.feature && threshold == o.threshold && left == o.left && right == o.right;
  }
};

class TreePolicy {
 public:
  /// Validates structure: every node reachable from the root exactly once,
  /// children in range, split features in [0, 6).
  TreePolicy(std::vector<TreeNode> nodes, int root) : nodes_(std::move(nodes)), root_(root) { validate(); }

  static TreePolicy single_leaf(SetpointAction a) { return TreePolicy({TreeNode::leaf(a)}, 0); }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  int root() const noexcept { return root_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaves_; }
  std::size_t internal_count() const noexcept { return nodes_.size() - leaves_; }

  /// Index of the leaf reached by x.
  int route(std::span<const double> x) const noexcept {
    int i = root_;
    while (!nodes_[static_cast<std::size_t>(i)].is_leaf) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return i;
  }

  SetpointAction infer(std::span<const double> x) const noexcept {
    return nodes_[static_cast<std::size_t>(route(x))].action;
  }
  SetpointAction infer(const FeatureVector& x) const noexcept { return infer(std::span<const double>(x)); }

  int depth() const {
    int best = 0;
    std::vector<std::pair<int, int>> stack{{root_, 0}};
    while (!stack.empty()) {
      const auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.is_leaf) {
        stack.emplace_back(n.left, d + 1);
        stack.emplace_back(n.right, d + 1);
      }
    }
    return best;
  }

  /// Same structure with some leaf actions replaced.
  TreePolicy with_leaf_actions(std::span<const std::pair<int, SetpointAction>> edits) const {
    std::vector<TreeNode> copy = nodes_;
    for (const auto& [id, a] : edits) {
      if (id < 0 || static_cast<std::size_t>(id) >= copy.size() || !copy[static_cast<std::size_t>(id)].is_leaf) {
        throw PreconditionError("node " + std::to_string(id) + " is not a leaf");
      }
      copy[static_cast<std::size_t>(id)].action = a;
    }
    return TreePolicy(std::move(copy), root_);
  }

  bool operator==(const TreePolicy& o) const { return root_ == o.root_ && nodes_ == o.nodes_; }

 private:
  void validate() {
    if (nodes_.empty()) throw ParseError("tree has no nodes");
    const auto n = static_cast<int>(nodes_.size());
    if (root_ < 0 || root_ >= n) throw ParseError("tree root out of range");
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<int> stack{root_};
    std::size_t visited = 0;
    leaves_ = 0;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      if (seen[static_cast<std::size_t>(i)]) throw ParseError("node " + std::to_string(i) + " reached twice (cycle or shared child)");
      seen[static_cast<std::size_t>(i)] = 1;
      ++visited;
      const auto& node = nodes_[static_cast<std::size_t>(i)];
      if (node.is_leaf) {
        ++leaves_;
        continue;
      }
      if (node.feature < 0 || node.feature >= static_cast<int>(kFeatureCount)) {
        throw ParseError("node " + std::to_string(i) + " splits on invalid feature " + std::to_string(node.feature));
      }
      if (!std::isfinite(node.threshold)) throw ParseError("node " + std::to_string(i) + " has non-finite threshold");
      for (int c : {node.left, node.right}) {
        if (c < 0 || c >= n) throw ParseError("node " + std::to_string(i) + " has missing child");
        stack.push_back(c);
      }
    }
    if (visited != nodes_.size()) throw ParseError("tree has nodes unreachable from the root");
    if (leaves_ != nodes_.size() - leaves_ + 1) throw ParseError("tree is not a full binary tree");
  }

  std::vector<TreeNode> nodes_;
  int root_ = 0;
  std::size_t leaves_ = 0;
};

// Boxes --------------------------------------------------------------------

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = true;
  bool hi_open = true;

  bool empty() const noexcept { return lo > hi || (lo == hi && (lo_open || hi_open)); }
  bool contains(double v) const noexcept {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  bool operator==(const Interval&) const = default;
};

/// Axis-aligned box, one interval per input dimension.
struct BoxRegion {
  std::vector<Interval> dims;

  static BoxRegion full(std::size_t n = kFeatureCount) { return {std::vector<Interval>(n)}; }

  std::size_t dimension() const noexcept { return dims.size(); }
  bool empty() const noexcept {
    for (const auto& d : dims) {
      if (d.empty()) return true;
    }
    return false;
  }
  bool contains(std::span<const double> x) const {
    if (x.size() != dims.size()) throw PreconditionError("BoxRegion::contains: dimension mismatch");
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (!dims[i].contains(x[i])) return false;
    }
    return true;
  }
  bool operator==(const BoxRegion&) const = default;
};

inline Interval interval_intersect(const Interval& a, const Interval& b) noexcept {
  Interval r;
  if (a.lo > b.lo) {
    r.lo = a.lo, r.lo_open = a.lo_open;
  } else if (b.lo > a.lo) {
    r.lo = b.lo, r.lo_open = b.lo_open;
  } else {
    r.lo = a.lo, r.lo_open = a.lo_open || b.lo_open;
  }
  if (a.hi < b.hi) {
    r.hi = a.hi, r.hi_open = a.hi_open;
  } else if (b.hi < a.hi) {
    r.hi = b.hi, r.hi_open = b.hi_open;
  } else {
    r.hi = a.hi, r.hi_open = a.hi_open || b.hi_open;
  }
  return r;
}

inline BoxRegion box_intersect(const BoxRegion& a, const BoxRegion& b) {
  if (a.dimension() != b.dimension()) throw PreconditionError("box_intersect: dimension mismatch");
  BoxRegion r;
  r.dims.reserve(a.dimension());
  for (std::size_t i = 0; i < a.dimension(); ++i) r.dims.push_back(interval_intersect(a.dims[i], b.dims[i]));
  return r;
}

/// Input region selected by one edge: left is x[f] <= t, right is x[f] > t.
inline BoxRegion edge_box(int feature, double threshold, bool left, std::size_t n = kFeatureCount) {
  BoxRegion b = BoxRegion::full(n);
  auto& d = b.dims[static_cast<std::size_t>(feature)];
  if (left) {
    d.hi = threshold, d.hi_open = false;
  } else {
    d.lo = threshold, d.lo_open = true;
  }
  return b;
}

struct LeafRegion {
  int leaf_id = 0;
  std::vector<int> path;  // root ... leaf
  BoxRegion box;
};

/// Every leaf with its root path and the intersection of the edge boxes
/// along it. Leaves come out in left-first depth-first order.
inline std::vector<LeafRegion> enumerate_leaf_boxes(const TreePolicy& tree) {
  std::vector<LeafRegion> out;
  out.reserve(tree.leaf_count());
  struct Frame {
    int node;
    std::vector<int> path;
    BoxRegion box;
  };
  std::vector<Frame> stack;
  stack.push_back({tree.root(), {tree.root()}, BoxRegion::full()});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const auto& n = tree.node(f.node);
    if (n.is_leaf) {
      out.push_back({f.node, std::move(f.path), std::move(f.box)});
      continue;
    }
    Frame right{n.right, f.path, box_intersect(f.box, edge_box(n.feature, n.threshold, false))};
    right.path.push_back(n.right);
    Frame left{n.left, std::move(f.path), box_intersect(f.box, edge_box(n.feature, n.threshold, true))};
    left.path.push_back(n.left);
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return out;
}

// Serialization ------------------------------------------------------------

inline nlohmann::json to_json(const TreePolicy& tree) {
  nlohmann::json j;
  j["version"] = 1;
  j["feature_names"] = kFeatureNames;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf) {
      nodes.push_back({{"type", "leaf"}, {"heat_sp", n.action.heat_sp()}, {"cool_sp", n.action.cool_sp()}});
    } else {
      nodes.push_back({{"type", "split"}, {"feature", n.feature}, {"threshold", n.threshold},
                       {"left", n.left}, {"right", n.right}});
    }
  }
  j["root"] = tree.root();
  return j;
}

inline TreePolicy tree_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version") != 1) throw ParseError("unsupported tree version");
    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    if (names.size() != kFeatureCount) throw ParseError("tree must name exactly 6 features");
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (names[i] != kFeatureNames[i]) throw ParseError("unexpected feature name '" + names[i] + "'");
    }
    std::vector<TreeNode> nodes;
    for (const auto& n : j.at("nodes")) {
      const auto type = n.at("type").get<std::string>();
      if (type == "leaf") {
        const int h = n.at("heat_sp"), c = n.at("cool_sp");
        if (!SetpointAction::valid(h, c)) throw ParseError("leaf has invalid setpoints");
        nodes.push_back(TreeNode::leaf({h, c}));
      } else if (type == "split") {
        nodes.push_back(TreeNode::split(n.at("feature"), n.at("threshold"), n.at("left"), n.at("right")));
      } else {
        throw ParseError("unknown node type '" + type + "'");
      }
    }
    return TreePolicy(std::move(nodes), j.at("root"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tree JSON: ") + e.what());
  }
}

/// Indented if/else rendering for human review.
inline std::string describe(const TreePolicy& tree) {
  std::ostringstream os;
  struct Item {
    int node;
    int depth;
    std::string prefix;
  };
  std::vector<Item> stack{{tree.root(), 0, ""}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const auto& n = tree.node(it.node);
    os << std::string(static_cast<std::size_t>(2 * it.depth), ' ') << it.prefix;
    if (n.is_leaf) {
      os << "setpoints " << n.action << '\n';
      continue;
    }
    os << "node " << it.node << '\n';
    const std::string name = kFeatureNames[static_cast<std::size_t>(n.feature)];
    std::ostringstream thr;
    thr << n.threshold;
    stack.push_back({n.right, it.depth + 1, "if " + name + " > " + thr.str() + ": "});
    stack.push_back({n.left, it.depth + 1, "if " + name + " <= " + thr.str() + ": "});
  }
  return os.str();
}

}  // namespace hvacdt
