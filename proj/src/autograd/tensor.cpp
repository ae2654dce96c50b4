#include "protofuse/autograd/tensor.hpp"

#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace protofuse::ag {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) {
    throw std::logic_error("item() on a " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                           " value");
  }
  return node_->value(0, 0);
}

void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Var Var::make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  Var out(std::move(value), false);
  for (auto& p : parents) {
    if (p.requires_grad()) out.node_->requires_grad = true;
  }
  if (out.node_->requires_grad) {
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward_fn);
  }
  return out;
}

void Var::backward() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("backward() needs a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

Var& ParamStore::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::logic_error("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.emplace_back(name, Var(std::move(value), true));
  return entries_.back().second;
}

Var& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return entries_[it->second].second;
}

const Var& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return entries_[it->second].second;
}

void ParamStore::erase_prefix(const std::string& prefix) {
  std::vector<std::pair<std::string, Var>> kept;
  for (auto& e : entries_) {
    if (e.first.rfind(prefix, 0) != 0) kept.push_back(std::move(e));
  }
  entries_ = std::move(kept);
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].first] = i;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.second.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.first, e.second.value());
  return out;
}

void ParamStore::assign_values(const ParamStore& other) {
  for (const auto& e : other.entries_) {
    auto& mine = at(e.first).mutable_value();
    mine = e.second.value();
  }
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.first != b.first) return false;
    if (a.second.rows() != b.second.rows() || a.second.cols() != b.second.cols()) return false;
    const auto bytes = static_cast<std::size_t>(a.second.value().size()) * sizeof(double);
    if (bytes && std::memcmp(a.second.value().data(), b.second.value().data(), bytes) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace protofuse::ag
