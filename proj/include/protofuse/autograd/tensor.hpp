#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace protofuse::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents.
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

/// Handle to a node of the reverse-mode tape. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Gradient, or a zero matrix of the value's shape when nothing flowed in.
  Matrix grad() const;
  bool has_grad() const { return node_ && node_->grad.size() > 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;
  bool defined() const { return static_cast<bool>(node_); }

  /// Backpropagates from a 1x1 value.
  void backward() const;
  void zero_grad();
  /// Same value, cut from the tape.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Internal: builds an op result whose grad flows to `parents`.
  static Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

 private:
  std::shared_ptr<Node> node_;
};

/// Named trainable leaves in insertion order. Names are dotted paths whose
/// first segment identifies the component ("encoder", "joint", "head").
class ParamStore {
 public:
  Var& add(const std::string& name, Matrix value);
  Var& at(const std::string& name);
  const Var& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  void erase_prefix(const std::string& prefix);

  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Independent leaves with copied values.
  ParamStore clone() const;
  /// Copies values of matching names (shapes must agree).
  void assign_values(const ParamStore& other);
  bool bitwise_equal(const ParamStore& other) const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace protofuse::ag
