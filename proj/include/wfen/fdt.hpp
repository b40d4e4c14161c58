#pragma once

#include <algorithm>
#include <string>

#include "wfen/nn.hpp"
#include "wfen/ops.hpp"
#include "wfen/tensor.hpp"

namespace wfen {

// Geometry actually used by one attention forward pass, for inspection.
struct AttnStats {
  Shape map_shape;
  int64_t window = 0;
  int64_t shift = 0;
  int64_t heads = 0;
};

// Gate for transposed attention: relu of the pairwise feature products scaled
// by a learnable temperature kept away from zero.
// q, k: (groups, C, M) with M the token count; result (groups, C, C).
template <typename T>
Tensor<T> relu_attention_map(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& temp) {
  check(q.rank() == 3 && k.rank() == 3, "relu_attention_map: expected rank-3 operands");
  check(q.shape() == k.shape(), "relu_attention_map: shape mismatch " + shape_str(q.shape()) +
                                    " vs " + shape_str(k.shape()));
  Tensor<T> scores = matmul(q, permute(k, {0, 2, 1}));
  Tensor<T> inv_temp = reciprocal(add_scalar(abs(temp), T(1e-6)));
  return relu(mul_scalar_tensor(scores, inv_temp));
}

// Window attention over pixel tokens with a channel-by-channel map. The input
// is normalized, lifted to q/k/v with a pointwise then depthwise convolution,
// optionally cyclically shifted, windowed, attended, merged back, projected,
// and added to the block input.
template <typename T>
struct RsaLayer {
  LayerNormChannel<T> norm;
  Conv2d<T> qkv_point, qkv_depth, proj;
  Tensor<T> alpha;
  int64_t window = 8;
  bool shifted = false;

  RsaLayer() = default;

  RsaLayer(ParameterStore<T>& store, const std::string& name, int64_t c, int64_t window_,
           bool shifted_, Rng& rng)
      : norm(store, name + ".norm", c),
        qkv_point(store, name + ".qkv_point", c, 3 * c, 1, 1, 0, 1, rng),
        qkv_depth(store, name + ".qkv_depth", 3 * c, 3 * c, 3, 1, 1, 3 * c, rng),
        proj(store, name + ".proj", c, c, 1, 1, 0, 1, rng),
        window(window_),
        shifted(shifted_) {
    alpha = store.add(name + ".alpha", Tensor<T>::full({1}, T(1)));
  }

  Tensor<T> forward(const Tensor<T>& x, AttnStats* stats = nullptr) const {
    check(x.rank() == 4, "rsa: expected rank-4 input, got " + shape_str(x.shape()));
    const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const int64_t n = std::min<int64_t>(window, std::min(h, w));
    check(h % n == 0 && w % n == 0, "rsa: window " + std::to_string(n) +
                                        " does not divide input " + shape_str(x.shape()));
    const int64_t s = shifted ? n / 2 : 0;
    Tensor<T> t = qkv_depth.forward(qkv_point.forward(norm.forward(x)));
    if (s != 0) t = cyclic_shift(t, s);
    auto qkv = split(t, 1, {c, c, c});
    const int64_t wins = b * (h / n) * (w / n);
    Tensor<T> q = reshape(window_partition(qkv[0], n), {wins, c, n * n});
    Tensor<T> k = reshape(window_partition(qkv[1], n), {wins, c, n * n});
    Tensor<T> v = reshape(window_partition(qkv[2], n), {wins, c, n * n});
    Tensor<T> gate = relu_attention_map(q, k, alpha);
    if (stats) {
      stats->map_shape = gate.shape();
      stats->window = n;
      stats->shift = s;
      stats->heads = 1;
    }
    Tensor<T> att = matmul(permute(gate, {0, 2, 1}), v);
    Tensor<T> merged = window_merge(reshape(att, {wins, c, n, n}), b, h, w);
    if (s != 0) merged = cyclic_shift(merged, -s);
    return add(x, proj.forward(merged));
  }
};

// Channel attention over the whole spatial extent, split into heads, with a
// head shuffle before the output projection.
template <typename T>
struct GsaLayer {
  LayerNormChannel<T> norm;
  Conv2d<T> qkv_point, qkv_depth, proj;
  Tensor<T> beta;
  int64_t heads = 1;

  bool shuffle = true;

  GsaLayer() = default;

  GsaLayer(ParameterStore<T>& store, const std::string& name, int64_t c, int64_t heads_, Rng& rng,
           bool shuffle_ = true)
      : norm(store, name + ".norm", c),
        qkv_point(store, name + ".qkv_point", c, 3 * c, 1, 1, 0, 1, rng),
        qkv_depth(store, name + ".qkv_depth", 3 * c, 3 * c, 3, 1, 1, 3 * c, rng),
        proj(store, name + ".proj", c, c, 1, 1, 0, 1, rng),
        heads(heads_),
        shuffle(shuffle_) {
    check(heads >= 1 && c % heads == 0,
          "gsa " + name + ": heads " + std::to_string(heads_) + " must divide channels " +
              std::to_string(c));
    beta = store.add(name + ".beta", Tensor<T>::full({1}, T(1)));
  }

  Tensor<T> forward(const Tensor<T>& x, AttnStats* stats = nullptr) const {
    check(x.rank() == 4, "gsa: expected rank-4 input, got " + shape_str(x.shape()));
    const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const int64_t ch = c / heads;
    Tensor<T> t = qkv_depth.forward(qkv_point.forward(norm.forward(x)));
    auto qkv = split(t, 1, {c, c, c});
    Tensor<T> q = reshape(qkv[0], {b * heads, ch, h * w});
    Tensor<T> k = reshape(qkv[1], {b * heads, ch, h * w});
    Tensor<T> v = reshape(qkv[2], {b * heads, ch, h * w});
    Tensor<T> gate = relu_attention_map(q, k, beta);
    if (stats) {
      stats->map_shape = gate.shape();
      stats->window = 0;
      stats->shift = 0;
      stats->heads = heads;
    }
    Tensor<T> att = matmul(gate, v);
    Tensor<T> merged = reshape(att, {b, c, h, w});
    if (shuffle) merged = shuffle_heads(merged, heads);
    return add(x, proj.forward(merged));
  }
};

// Regional attention, feed-forward, global attention, feed-forward; every
// sublayer carries its own residual, so zero branch projections make the
// whole block an exact identity.
template <typename T>
struct FdtBlock {
  RsaLayer<T> rsa;
  FeedForward<T> ffn1;
  GsaLayer<T> gsa;
  FeedForward<T> ffn2;

  FdtBlock() = default;

  FdtBlock(ParameterStore<T>& store, const std::string& name, int64_t c, int64_t window,
           int64_t heads, bool shifted, Rng& rng, bool shuffle = true)
      : rsa(store, name + ".rsa", c, window, shifted, rng),
        ffn1(store, name + ".ffn1", c, rng),
        gsa(store, name + ".gsa", c, heads, rng, shuffle),
        ffn2(store, name + ".ffn2", c, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return ffn2.forward(gsa.forward(ffn1.forward(rsa.forward(x))));
  }
};

}  // namespace wfen
