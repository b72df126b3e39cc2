#include "poselift/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace poselift::gradcore {

namespace {
std::atomic<NodeId> g_next_node_id{1};

// Free list of retired buffers, bucketed by exact size. Thread-local: each
// training or evaluation thread owns its own pool.
thread_local std::unordered_map<std::size_t, std::vector<std::vector<double>*>> g_pool;

std::shared_ptr<std::vector<double>> pool_acquire_raw(std::size_t n) {
  std::vector<double>* buf = nullptr;
  auto it = g_pool.find(n);
  if (it != g_pool.end() && !it->second.empty()) {
    buf = it->second.back();
    it->second.pop_back();
  } else {
    buf = new std::vector<double>(n);
  }
  return std::shared_ptr<std::vector<double>>(buf, [](std::vector<double>* p) {
    g_pool[p->size()].push_back(p);
  });
}

}  // namespace

namespace pool {

std::shared_ptr<std::vector<double>> acquire(std::size_t n) {
  return pool_acquire_raw(n);
}

std::shared_ptr<std::vector<double>> acquire_zero(std::size_t n) {
  auto buf = pool_acquire_raw(n);
  std::fill(buf->begin(), buf->end(), 0.0);
  return buf;
}

void clear() {
  for (auto& [size, list] : g_pool)
    for (std::vector<double>* p : list) delete p;
  g_pool.clear();
}

}  // namespace pool

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size())
    throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::constant_view(Shape shape, std::shared_ptr<std::vector<double>> data) {
  if (numel(shape) != data->size())
    throw ShapeMismatch("tensor data length " + std::to_string(data->size()) +
                        " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::variable(Shape shape, std::vector<double> data) {
  return variable(std::move(shape),
                  std::make_shared<std::vector<double>>(std::move(data)));
}

Tensor Tensor::variable(Shape shape, std::shared_ptr<std::vector<double>> data) {
  if (numel(shape) != data->size())
    throw ShapeMismatch("tensor data length " + std::to_string(data->size()) +
                        " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.node_ = std::make_shared<Node>();
  t.node_->id = g_next_node_id.fetch_add(1);
  t.node_->size = t.data_->size();
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

double Tensor::scalar() const {
  if (size() != 1)
    throw NotScalar("tensor of shape " + shape_str(shape_) + " is not a scalar");
  return (*data_)[0];
}

NodeId Tensor::graph_id() const {
  if (!node_) throw std::logic_error("constant tensor has no graph id");
  return node_->id;
}

std::vector<double>& GradientMap::get_or_zero(NodeId id, std::size_t n) {
  auto it = entries_.find(id);
  if (it == entries_.end()) it = entries_.emplace(id, pool::acquire_zero(n)).first;
  return *it->second;
}

const std::vector<double>* GradientMap::find(NodeId id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : it->second.get();
}

bool GradientMap::contains(const Tensor& t) const {
  return t.requires_grad() && contains(t.graph_id());
}

const std::vector<double>& GradientMap::at(NodeId id) const {
  auto it = entries_.find(id);
  if (it == entries_.end())
    throw std::out_of_range("no gradient entry for node " + std::to_string(id));
  return *it->second;
}

const std::vector<double>& GradientMap::at(const Tensor& t) const {
  if (!t.requires_grad())
    throw std::out_of_range("constant tensor has no gradient entry");
  return at(t.graph_id());
}

namespace {

Tensor finish_op(Tensor t, std::initializer_list<const Tensor*> inputs,
                 std::function<void(const std::vector<double>&, GradientMap&)> backward_fn) {
  bool tracked = std::any_of(inputs.begin(), inputs.end(),
                             [](const Tensor* in) { return in->requires_grad(); });
  if (!tracked) return t;
  auto node = std::make_shared<Node>();
  node->id = g_next_node_id.fetch_add(1);
  node->size = t.size();
  node->backward = std::move(backward_fn);
  for (const Tensor* in : inputs)
    if (in->requires_grad()) node->parents.push_back(in->node());
  return Tensor::attach_node(std::move(t), std::move(node));
}

}  // namespace

Tensor Tensor::attach_node(Tensor t, std::shared_ptr<Node> node) {
  t.node_ = std::move(node);
  return t;
}

Tensor make_op(Shape shape, std::vector<double> data,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(const std::vector<double>&, GradientMap&)> backward_fn) {
  return finish_op(Tensor::constant(std::move(shape), std::move(data)), inputs,
                   std::move(backward_fn));
}

Tensor make_op(Shape shape, std::shared_ptr<std::vector<double>> data,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(const std::vector<double>&, GradientMap&)> backward_fn) {
  return finish_op(Tensor::constant_view(std::move(shape), std::move(data)), inputs,
                   std::move(backward_fn));
}

GradientMap backward(const Tensor& root) {
  if (root.size() != 1)
    throw NotScalar("backward root has " + std::to_string(root.size()) + " elements");
  GradientMap grads;
  if (!root.requires_grad()) return grads;

  // Collect ancestors of the root.
  std::unordered_map<NodeId, Node*> reachable;
  std::vector<Node*> stack{root.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!reachable.emplace(n->id, n).second) continue;
    for (auto& p : n->parents) stack.push_back(p.get());
  }

  std::vector<NodeId> order;
  order.reserve(reachable.size());
  for (auto& [id, n] : reachable) order.push_back(id);
  std::sort(order.begin(), order.end(), std::greater<>());

  grads.get_or_zero(root.graph_id(), 1)[0] = 1.0;
  for (NodeId id : order) {
    Node* n = reachable[id];
    if (!n->backward) continue;  // leaf: keep its entry
    const std::vector<double>* g = grads.find(id);
    if (!g) continue;
    n->backward(*g, grads);
    grads.erase(id);  // interior gradients are not part of the result
  }
  return grads;
}

}  // namespace poselift::gradcore
