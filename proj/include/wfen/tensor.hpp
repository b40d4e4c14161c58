#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wfen {

using Shape = std::vector<int64_t>;

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct GraphCore;

// Shared between all Tensor copies of one value. Holding the graph link here
// means watching a parameter once attaches every live copy of it.
template <typename T>
struct Storage {
  std::shared_ptr<std::vector<T>> values;
  std::weak_ptr<GraphCore<T>> graph;
  int node = -1;
};

template <typename T>
struct GraphCore {
  struct Node {
    std::vector<int> inputs;
    int64_t numel = 0;
    std::function<void(const T*, GraphCore<T>&)> backward;
  };

  std::vector<Node> nodes;
  std::vector<std::vector<T>> grads;
  bool consumed = false;

  int add_node(int64_t numel, std::vector<int> inputs,
               std::function<void(const T*, GraphCore<T>&)> fn) {
    nodes.push_back(Node{std::move(inputs), numel, std::move(fn)});
    return static_cast<int>(nodes.size()) - 1;
  }

  T* grad_buf(int id) { return grads[static_cast<size_t>(id)].data(); }

  void run_backward(int loss_node) {
    if (consumed) throw std::runtime_error("backward: graph already consumed");
    std::vector<char> live(nodes.size(), 0);
    std::vector<int> stack{loss_node};
    live[static_cast<size_t>(loss_node)] = 1;
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      for (int in : nodes[static_cast<size_t>(n)].inputs) {
        if (in >= 0 && !live[static_cast<size_t>(in)]) {
          live[static_cast<size_t>(in)] = 1;
          stack.push_back(in);
        }
      }
    }
    grads.assign(nodes.size(), {});
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (live[i]) grads[i].assign(static_cast<size_t>(nodes[i].numel), T(0));
    }
    grads[static_cast<size_t>(loss_node)][0] = T(1);
    for (int i = loss_node; i >= 0; --i) {
      auto& node = nodes[static_cast<size_t>(i)];
      if (live[static_cast<size_t>(i)] && node.backward) node.backward(grads[static_cast<size_t>(i)].data(), *this);
    }
    for (auto& node : nodes) node.backward = nullptr;
    consumed = true;
  }
};

}  // namespace detail

// Dense row-major tensor of rank <= 4. Copies share the value buffer.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : Tensor(std::move(shape), kZeroFill) {}

  Tensor(Shape shape, std::vector<T> values) {
    validate_shape(shape);
    check(shape_numel(shape) == static_cast<int64_t>(values.size()),
          "tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    shape_ = std::move(shape);
    st_ = std::make_shared<detail::Storage<T>>();
    st_->values = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape), kZeroFill);
    for (T& v : *t.st_->values) v = value;
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, std::vector<T>{value}); }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t numel() const { return defined() ? static_cast<int64_t>(st_->values->size()) : 0; }

  T* data() { return st_->values->data(); }
  const T* cdata() const { return st_->values->data(); }
  std::vector<T>& vec() { return *st_->values; }
  const std::vector<T>& vec() const { return *st_->values; }
  const std::shared_ptr<std::vector<T>>& values_ptr() const { return st_->values; }
  const std::shared_ptr<detail::Storage<T>>& storage() const { return st_; }

  // Same values, no graph attachment.
  Tensor detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.st_ = std::make_shared<detail::Storage<T>>();
    t.st_->values = st_->values;
    return t;
  }

  // Deep copy of the values.
  Tensor clone() const { return Tensor(shape_, *st_->values); }

  bool all_finite() const {
    for (const T& v : *st_->values) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  // Convenience accessors for tests and glue code.
  T at(int64_t i) const { return (*st_->values)[static_cast<size_t>(i)]; }
  T at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return (*st_->values)[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  void set(int64_t i, T v) { (*st_->values)[static_cast<size_t>(i)] = v; }

 private:
  enum ZeroFillTag { kZeroFill };
  Tensor(Shape shape, ZeroFillTag) {
    validate_shape(shape);
    const int64_t n = shape_numel(shape);
    shape_ = std::move(shape);
    st_ = std::make_shared<detail::Storage<T>>();
    st_->values = std::make_shared<std::vector<T>>(static_cast<size_t>(n), T(0));
  }

  static void validate_shape(const Shape& shape) {
    check(!shape.empty(), "tensor: rank-0 shapes are not supported, use {1}");
    check(shape.size() <= 4, "tensor: rank " + std::to_string(shape.size()) + " exceeds 4");
    for (int64_t e : shape) check(e > 0, "tensor: nonpositive extent in " + shape_str(shape));
  }

  Shape shape_;
  std::shared_ptr<detail::Storage<T>> st_;
};

namespace detail {

// Common live graph of the given operands, null when all are detached.
template <typename T>
std::shared_ptr<GraphCore<T>> live_graph(std::initializer_list<const Tensor<T>*> ts) {
  std::shared_ptr<GraphCore<T>> g;
  for (const Tensor<T>* t : ts) {
    if (!t || !t->defined()) continue;
    auto h = t->storage()->graph.lock();
    if (!h || t->storage()->node < 0) continue;
    if (!g) {
      g = std::move(h);
    } else {
      check(g == h, "autodiff: operands belong to different graphs");
    }
  }
  return g;
}

template <typename T>
int node_of(const Tensor<T>& t, const std::shared_ptr<GraphCore<T>>& g) {
  if (!t.defined()) return -1;
  auto h = t.storage()->graph.lock();
  return (h == g) ? t.storage()->node : -1;
}

template <typename T>
void record(const std::shared_ptr<GraphCore<T>>& g, Tensor<T>& out, std::vector<int> inputs,
            std::function<void(const T*, GraphCore<T>&)> fn) {
  out.storage()->graph = g;
  out.storage()->node = g->add_node(out.numel(), std::move(inputs), std::move(fn));
}

}  // namespace detail

// One reverse-mode tape. Confined to a single logical training step.
template <typename T>
class Graph {
 public:
  Graph() : core_(std::make_shared<detail::GraphCore<T>>()) {}

  // Registers a differentiable leaf. Idempotent for this graph.
  void watch(Tensor<T>& t) {
    check(t.defined(), "watch: undefined tensor");
    auto h = t.storage()->graph.lock();
    if (h == core_ && t.storage()->node >= 0) return;
    check(h == nullptr || h == core_, "watch: tensor already attached to a live graph");
    t.storage()->graph = core_;
    t.storage()->node = core_->add_node(t.numel(), {}, nullptr);
  }

  void backward(const Tensor<T>& loss) {
    check(loss.defined(), "backward: undefined loss tensor");
    auto h = loss.storage()->graph.lock();
    check(h == core_ && loss.storage()->node >= 0, "backward: loss is not attached to this graph");
    check(loss.numel() == 1, "backward: loss must be a single element, got " + shape_str(loss.shape()));
    core_->run_backward(loss.storage()->node);
  }

  bool consumed() const { return core_->consumed; }

  // Gradient of the watched/attached tensor; zeros when it did not reach the loss.
  Tensor<T> grad(const Tensor<T>& t) const {
    check(t.defined(), "grad: undefined tensor");
    auto h = t.storage()->graph.lock();
    check(h == core_ && t.storage()->node >= 0, "grad: tensor is not attached to this graph");
    check(core_->consumed, "grad: backward has not been run");
    const auto& buf = core_->grads[static_cast<size_t>(t.storage()->node)];
    if (buf.empty()) return Tensor<T>(t.shape());
    return Tensor<T>(t.shape(), buf);
  }

  const std::shared_ptr<detail::GraphCore<T>>& core() const { return core_; }

 private:
  std::shared_ptr<detail::GraphCore<T>> core_;
};

}  // namespace wfen
