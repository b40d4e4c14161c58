#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wfen/ops.hpp"
#include "wfen/rng.hpp"
#include "wfen/tensor.hpp"

namespace wfen {

// Ordered, uniquely named collection of trainable tensors. Iteration order is
// construction order, which doubles as the checkpoint entry order.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  explicit ParameterStore(uint64_t seed = 0) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    check(!name.empty(), "param store: empty name");
    check(index_.find(name) == index_.end(), "param store: duplicate name " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, std::move(t)});
    return entries_.back().tensor;
  }

  bool has(const std::string& name) const { return index_.find(name) != index_.end(); }

  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "param store: unknown name " + name);
    return entries_[it->second].tensor;
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "param store: unknown name " + name);
    return entries_[it->second].tensor;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void watch_all(Graph<T>& g) {
    for (auto& e : entries_) g.watch(e.tensor);
  }

 private:
  uint64_t seed_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Uniform in (-b, b) with b = sqrt(6 / fan_in), the relu-gain fan-in rule.
template <typename T>
void init_conv_weight(Tensor<T>& w, int64_t fan_in, Rng& rng) {
  const double b = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < w.numel(); ++i) w.set(i, static_cast<T>(rng.uniform(-b, b)));
}

template <typename T>
struct Conv2d {
  Tensor<T> weight, bias;
  int64_t stride = 1, padding = 0, groups = 1;

  Conv2d() = default;

  Conv2d(ParameterStore<T>& store, const std::string& name, int64_t cin, int64_t cout,
         int64_t kernel, int64_t stride_, int64_t padding_, int64_t groups_, Rng& rng)
      : stride(stride_), padding(padding_), groups(groups_) {
    check(cin % groups == 0, "conv module " + name + ": groups must divide input channels");
    Tensor<T> w({cout, cin / groups, kernel, kernel});
    init_conv_weight(w, (cin / groups) * kernel * kernel, rng);
    weight = store.add(name + ".weight", std::move(w));
    bias = store.add(name + ".bias", Tensor<T>({cout}));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, stride, padding, groups);
  }
};

template <typename T>
struct LayerNormChannel {
  Tensor<T> gamma, beta;

  LayerNormChannel() = default;

  LayerNormChannel(ParameterStore<T>& store, const std::string& name, int64_t c) {
    gamma = store.add(name + ".gamma", Tensor<T>::full({c}, T(1)));
    beta = store.add(name + ".beta", Tensor<T>({c}));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm_channel(x, gamma, beta); }
};

// conv3x3 -> relu -> conv3x3 with an identity skip, or a 1x1 projection skip
// when the channel count changes.
template <typename T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2, skip;
  bool projected = false;

  ResidualBlock() = default;

  ResidualBlock(ParameterStore<T>& store, const std::string& name, int64_t cin, int64_t cout,
                Rng& rng)
      : conv1(store, name + ".conv1", cin, cout, 3, 1, 1, 1, rng),
        conv2(store, name + ".conv2", cout, cout, 3, 1, 1, 1, rng) {
    if (cin != cout) {
      skip = Conv2d<T>(store, name + ".skip", cin, cout, 1, 1, 0, 1, rng);
      projected = true;
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> branch = conv2.forward(relu(conv1.forward(x)));
    return add(branch, projected ? skip.forward(x) : x);
  }
};

// norm -> 1x1 expand (2x) -> depthwise 3x3 -> relu -> 1x1 project, wrapped in
// a residual connection.
template <typename T>
struct FeedForward {
  LayerNormChannel<T> norm;
  Conv2d<T> expand, dw, project;

  FeedForward() = default;

  FeedForward(ParameterStore<T>& store, const std::string& name, int64_t c, Rng& rng)
      : norm(store, name + ".norm", c),
        expand(store, name + ".expand", c, 2 * c, 1, 1, 0, 1, rng),
        dw(store, name + ".dw", 2 * c, 2 * c, 3, 1, 1, 2 * c, rng),
        project(store, name + ".project", 2 * c, c, 1, 1, 0, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> branch = project.forward(relu(dw.forward(expand.forward(norm.forward(x)))));
    return add(x, branch);
  }
};

}  // namespace wfen
