#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "poselift/errors.hpp"

namespace poselift::gradcore {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class GradientMap;

/// A node of the compute tape. Nodes are created in program order and never
/// mutated; backward walks ids in descending order, which is a reverse
/// topological order because inputs always predate their consumers.
struct Node {
  NodeId id = 0;
  std::size_t size = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's incoming gradient into its parents' entries.
  // Empty for leaf variables.
  std::function<void(const std::vector<double>&, GradientMap&)> backward;
};

/// Dense 64-bit tensor, row-major. Values are immutable once the tensor
/// participates in a graph; constants carry no node and never receive
/// gradient entries.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  /// Constant view over shared storage (no copy). The storage must not be
  /// mutated while a graph built from this tensor is still in use.
  static Tensor constant_view(Shape shape, std::shared_ptr<std::vector<double>> data);
  static Tensor variable(Shape shape, std::vector<double> data);
  /// Variable view over externally owned storage (parameter stores bind
  /// their buffers once per step; the graph is discarded before the
  /// optimizer writes).
  static Tensor variable(Shape shape, std::shared_ptr<std::vector<double>> data);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar_const(double value) { return constant({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  bool empty() const { return data_ == nullptr; }

  const std::vector<double>& values() const { return *data_; }
  const std::shared_ptr<std::vector<double>>& storage() const { return data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double scalar() const;

  bool requires_grad() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }
  NodeId graph_id() const;  // throws NotScalar-unrelated error if constant

  static Tensor attach_node(Tensor t, std::shared_ptr<Node> node);

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<Node> node_;
};

/// Gradients keyed by node identity. After backward() completes only leaf
/// entries remain; interior gradients are dropped as soon as they have been
/// propagated (their buffers return to the pool).
class GradientMap {
 public:
  std::vector<double>& get_or_zero(NodeId id, std::size_t n);
  const std::vector<double>* find(NodeId id) const;
  bool contains(NodeId id) const { return entries_.count(id) != 0; }
  bool contains(const Tensor& t) const;
  const std::vector<double>& at(NodeId id) const;
  const std::vector<double>& at(const Tensor& t) const;
  void erase(NodeId id) { entries_.erase(id); }
  std::size_t entry_count() const { return entries_.size(); }

 private:
  std::unordered_map<NodeId, std::shared_ptr<std::vector<double>>> entries_;
};

/// Creates an interior tensor wired to the inputs that participate in the
/// graph. If no input does, the result is a constant and `backward` is
/// discarded.
Tensor make_op(Shape shape, std::vector<double> data,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(const std::vector<double>&, GradientMap&)> backward);
Tensor make_op(Shape shape, std::shared_ptr<std::vector<double>> data,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(const std::vector<double>&, GradientMap&)> backward);

/// Recycles the large per-step buffers (op outputs, gradients, scratch).
/// Training allocates the same shapes every iteration; exact-size reuse
/// keeps the pages warm and the allocator quiet.
namespace pool {
/// Buffer of size n with unspecified contents; the caller overwrites it.
std::shared_ptr<std::vector<double>> acquire(std::size_t n);
/// Buffer of size n filled with zeros.
std::shared_ptr<std::vector<double>> acquire_zero(std::size_t n);
void clear();
}  // namespace pool

/// Reverse-mode accumulation from a scalar root. Gradients of independent
/// consumers add; two passes over identical inputs are bit-identical.
GradientMap backward(const Tensor& root);

}  // namespace poselift::gradcore
