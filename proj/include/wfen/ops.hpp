#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "wfen/parallel.hpp"
#include "wfen/tensor.hpp"

namespace wfen {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    auto xv = x.values_ptr();
    detail::record<T>(g, out, {xid}, [xid, xv, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      const T* xd = xv->data();
      for (int64_t i = 0; i < n; ++i) {
        if (xd[i] > T(0)) gx[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] < T(0) ? -xd[i] : xd[i];
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    auto xv = x.values_ptr();
    detail::record<T>(g, out, {xid}, [xid, xv, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      const T* xd = xv->data();
      for (int64_t i = 0; i < n; ++i) {
        if (xd[i] > T(0)) {
          gx[i] += go[i];
        } else if (xd[i] < T(0)) {
          gx[i] -= go[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = T(1) / xd[i];
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    auto ov = out.values_ptr();
    detail::record<T>(g, out, {xid}, [xid, ov, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      const T* od = ov->data();
      for (int64_t i = 0; i < n; ++i) gx[i] -= go[i] * od[i] * od[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* ad = a.cdata();
  const T* bd = b.cdata();
  T* od = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i];
  if (auto g = detail::live_graph<T>({&a, &b})) {
    const int aid = detail::node_of(a, g);
    const int bid = detail::node_of(b, g);
    detail::record<T>(g, out, {aid, bid}, [aid, bid, n](const T* go, detail::GraphCore<T>& gc) {
      if (aid >= 0) {
        T* ga = gc.grad_buf(aid);
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      }
      if (bid >= 0) {
        T* gb = gc.grad_buf(bid);
        for (int64_t i = 0; i < n; ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* ad = a.cdata();
  const T* bd = b.cdata();
  T* od = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = ad[i] - bd[i];
  if (auto g = detail::live_graph<T>({&a, &b})) {
    const int aid = detail::node_of(a, g);
    const int bid = detail::node_of(b, g);
    detail::record<T>(g, out, {aid, bid}, [aid, bid, n](const T* go, detail::GraphCore<T>& gc) {
      if (aid >= 0) {
        T* ga = gc.grad_buf(aid);
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      }
      if (bid >= 0) {
        T* gb = gc.grad_buf(bid);
        for (int64_t i = 0; i < n; ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* ad = a.cdata();
  const T* bd = b.cdata();
  T* od = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = ad[i] * bd[i];
  if (auto g = detail::live_graph<T>({&a, &b})) {
    const int aid = detail::node_of(a, g);
    const int bid = detail::node_of(b, g);
    auto av = a.values_ptr();
    auto bv = b.values_ptr();
    detail::record<T>(g, out, {aid, bid},
                      [aid, bid, av, bv, n](const T* go, detail::GraphCore<T>& gc) {
                        if (aid >= 0) {
                          T* ga = gc.grad_buf(aid);
                          const T* bd = bv->data();
                          for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * bd[i];
                        }
                        if (bid >= 0) {
                          T* gb = gc.grad_buf(bid);
                          const T* ad = av->data();
                          for (int64_t i = 0; i < n; ++i) gb[i] += go[i] * ad[i];
                        }
                      });
  }
  return out;
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& x, T k) {
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] * k;
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid}, [xid, k, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * k;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] + c;
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid}, [xid, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

// x broadcast-multiplied by a single-element tensor.
template <typename T>
Tensor<T> mul_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s) {
  check(s.numel() == 1, "mul_scalar_tensor: scale must hold one element, got " + shape_str(s.shape()));
  const T sv = s.at(0);
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] * sv;
  if (auto g = detail::live_graph<T>({&x, &s})) {
    const int xid = detail::node_of(x, g);
    const int sid = detail::node_of(s, g);
    auto xv = x.values_ptr();
    detail::record<T>(g, out, {xid, sid},
                      [xid, sid, sv, xv, n](const T* go, detail::GraphCore<T>& gc) {
                        if (xid >= 0) {
                          T* gx = gc.grad_buf(xid);
                          for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * sv;
                        }
                        if (sid >= 0) {
                          T* gs = gc.grad_buf(sid);
                          const T* xd = xv->data();
                          T acc = T(0);
                          for (int64_t i = 0; i < n; ++i) acc += go[i] * xd[i];
                          gs[0] += acc;
                        }
                      });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  const T* xd = x.cdata();
  const int64_t n = x.numel();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += xd[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid}, [xid, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      const T gv = go[0];
      for (int64_t i = 0; i < n; ++i) gx[i] += gv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  const T* xd = x.cdata();
  const int64_t n = x.numel();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += xd[i];
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid}, [xid, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      const T gv = go[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) gx[i] += gv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// data movement
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  check(shape_numel(new_shape) == x.numel(), "reshape: " + shape_str(x.shape()) + " to " +
                                                 shape_str(new_shape) + " changes element count");
  Tensor<T> out(std::move(new_shape), x.vec());
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    const int64_t n = x.numel();
    detail::record<T>(g, out, {xid}, [xid, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      T* gx = gc.grad_buf(xid);
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

namespace detail {

// out indexed row-major over the permuted shape; ACC accumulates instead of assigning.
template <typename T, bool ACC>
void permute_raw(const T* in, T* out, const Shape& in_shape, const std::vector<int>& axes) {
  const int r = static_cast<int>(in_shape.size());
  int64_t in_strides[4] = {0, 0, 0, 0};
  int64_t stride = 1;
  for (int d = r - 1; d >= 0; --d) {
    in_strides[d] = stride;
    stride *= in_shape[static_cast<size_t>(d)];
  }
  int64_t out_extents[4] = {1, 1, 1, 1};
  int64_t out_strides[4] = {0, 0, 0, 0};
  for (int d = 0; d < r; ++d) {
    out_extents[d] = in_shape[static_cast<size_t>(axes[static_cast<size_t>(d)])];
    out_strides[d] = in_strides[axes[static_cast<size_t>(d)]];
  }
  const int64_t n = shape_numel(in_shape);
  int64_t counter[4] = {0, 0, 0, 0};
  int64_t src = 0;
  for (int64_t o = 0; o < n; ++o) {
    if constexpr (ACC) {
      out[src] += in[o];
    } else {
      out[o] = in[src];
    }
    for (int d = r - 1; d >= 0; --d) {
      counter[d]++;
      src += out_strides[d];
      if (counter[d] < out_extents[d]) break;
      src -= out_strides[d] * out_extents[d];
      counter[d] = 0;
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::vector<int> axes) {
  const int r = x.rank();
  check(static_cast<int>(axes.size()) == r, "permute: axes count " + std::to_string(axes.size()) +
                                                " does not match rank " + std::to_string(r));
  std::vector<char> seen(static_cast<size_t>(r), 0);
  for (int a : axes) {
    check(a >= 0 && a < r && !seen[static_cast<size_t>(a)], "permute: invalid axes for rank " + std::to_string(r));
    seen[static_cast<size_t>(a)] = 1;
  }
  Shape out_shape(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) out_shape[static_cast<size_t>(d)] = x.extent(axes[static_cast<size_t>(d)]);
  Tensor<T> out(out_shape);
  detail::permute_raw<T, false>(x.cdata(), out.data(), x.shape(), axes);
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    const Shape in_shape = x.shape();
    detail::record<T>(g, out, {xid},
                      [xid, in_shape, axes](const T* go, detail::GraphCore<T>& gc) {
                        if (xid < 0) return;
                        // The forward map reads in[src] for out[o]; the adjoint
                        // scatters go[o] back to src with the same traversal.
                        detail::permute_raw<T, true>(go, gc.grad_buf(xid), in_shape, axes);
                      });
  }
  return out;
}

namespace detail {

inline void axis_blocks(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
  for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[static_cast<size_t>(d)];
}

}  // namespace detail

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const int r = parts[0].rank();
  check(axis >= 0 && axis < r, "concat: axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    check(p.rank() == r, "concat: rank mismatch");
    for (int d = 0; d < r; ++d) {
      if (d == axis) continue;
      check(p.extent(d) == out_shape[static_cast<size_t>(d)],
            "concat: extent mismatch at axis " + std::to_string(d) + ": " + shape_str(p.shape()) +
                " vs " + shape_str(parts[0].shape()));
    }
    total += p.extent(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  Tensor<T> out(out_shape);
  int64_t outer, inner;
  detail::axis_blocks(out_shape, axis, outer, inner);
  T* od = out.data();
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t e = p.extent(axis);
    const T* pd = p.cdata();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy(pd + o * e * inner, pd + (o + 1) * e * inner, od + (o * total + offset) * inner);
    }
    offset += e;
  }
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  std::shared_ptr<detail::GraphCore<T>> g;
  for (const auto& p : parts) {
    auto h = detail::live_graph<T>({&p});
    if (h) {
      check(!g || g == h, "autodiff: operands belong to different graphs");
      g = h;
    }
  }
  if (g) {
    std::vector<int> ids;
    std::vector<int64_t> extents;
    for (const auto& p : parts) {
      ids.push_back(detail::node_of(p, g));
      extents.push_back(p.extent(axis));
    }
    detail::record<T>(g, out, ids,
                      [ids, extents, outer, inner, total](const T* go, detail::GraphCore<T>& gc) {
                        int64_t offset = 0;
                        for (size_t k = 0; k < ids.size(); ++k) {
                          const int64_t e = extents[k];
                          if (ids[k] >= 0) {
                            T* gp = gc.grad_buf(ids[k]);
                            for (int64_t o = 0; o < outer; ++o) {
                              const T* src = go + (o * total + offset) * inner;
                              T* dst = gp + o * e * inner;
                              for (int64_t i = 0; i < e * inner; ++i) dst[i] += src[i];
                            }
                          }
                          offset += e;
                        }
                      });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<int64_t>& sizes) {
  const int r = x.rank();
  check(axis >= 0 && axis < r, "split: axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  int64_t total = 0;
  for (int64_t s : sizes) {
    check(s > 0, "split: nonpositive part size");
    total += s;
  }
  check(total == x.extent(axis), "split: part sizes sum to " + std::to_string(total) +
                                     ", axis extent is " + std::to_string(x.extent(axis)));
  int64_t outer, inner;
  detail::axis_blocks(x.shape(), axis, outer, inner);
  auto g = detail::live_graph<T>({&x});
  const int xid = g ? detail::node_of(x, g) : -1;
  std::vector<Tensor<T>> parts;
  int64_t offset = 0;
  const T* xd = x.cdata();
  for (int64_t e : sizes) {
    Shape ps = x.shape();
    ps[static_cast<size_t>(axis)] = e;
    Tensor<T> p(ps);
    T* pd = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy(xd + (o * total + offset) * inner, xd + (o * total + offset + e) * inner,
                pd + o * e * inner);
    }
    if (g) {
      const int64_t off = offset;
      detail::record<T>(g, p, {xid},
                        [xid, off, e, outer, inner, total](const T* go, detail::GraphCore<T>& gc) {
                          if (xid < 0) return;
                          T* gx = gc.grad_buf(xid);
                          for (int64_t o = 0; o < outer; ++o) {
                            const T* src = go + o * e * inner;
                            T* dst = gx + (o * total + off) * inner;
                            for (int64_t i = 0; i < e * inner; ++i) dst[i] += src[i];
                          }
                        });
    }
    parts.push_back(std::move(p));
    offset += e;
  }
  return parts;
}

namespace detail {

// dir=+1 applies the partition map, dir=-1 its inverse. ACC accumulates.
template <typename T, bool ACC>
void window_map_raw(const T* src, T* dst, int64_t b, int64_t c, int64_t h, int64_t w, int64_t n,
                    bool inverse) {
  const int64_t wy_count = h / n;
  const int64_t wx_count = w / n;
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t wy = 0; wy < wy_count; ++wy) {
      for (int64_t wx = 0; wx < wx_count; ++wx) {
        const int64_t ob = (bi * wy_count + wy) * wx_count + wx;
        for (int64_t ci = 0; ci < c; ++ci) {
          for (int64_t i = 0; i < n; ++i) {
            const int64_t img = ((bi * c + ci) * h + wy * n + i) * w + wx * n;
            const int64_t win = ((ob * c + ci) * n + i) * n;
            for (int64_t j = 0; j < n; ++j) {
              const int64_t a = img + j;
              const int64_t d = win + j;
              const int64_t from = inverse ? d : a;
              const int64_t to = inverse ? a : d;
              if constexpr (ACC) {
                dst[to] += src[from];
              } else {
                dst[to] = src[from];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// (B, C, H, W) to (B * H/N * W/N, C, N, N), window-major row order.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int64_t n) {
  check(x.rank() == 4, "window_partition: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  check(n >= 1, "window_partition: window must be positive");
  check(h % n == 0 && w % n == 0, "window_partition: window " + std::to_string(n) +
                                      " does not divide spatial extents " + shape_str(x.shape()));
  Tensor<T> out({b * (h / n) * (w / n), c, n, n});
  detail::window_map_raw<T, false>(x.cdata(), out.data(), b, c, h, w, n, false);
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid}, [xid, b, c, h, w, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      detail::window_map_raw<T, true>(go, gc.grad_buf(xid), b, c, h, w, n, true);
    });
  }
  return out;
}

// Inverse of window_partition for the given image geometry.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& wins, int64_t b, int64_t h, int64_t w) {
  check(wins.rank() == 4, "window_merge: expected rank-4 input, got " + shape_str(wins.shape()));
  const int64_t c = wins.extent(1);
  const int64_t n = wins.extent(2);
  check(wins.extent(3) == n, "window_merge: windows must be square, got " + shape_str(wins.shape()));
  check(n >= 1 && h % n == 0 && w % n == 0 && wins.extent(0) == b * (h / n) * (w / n),
        "window_merge: geometry mismatch for " + shape_str(wins.shape()) + " into " +
            std::to_string(b) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
            std::to_string(w));
  Tensor<T> out({b, c, h, w});
  detail::window_map_raw<T, false>(wins.cdata(), out.data(), b, c, h, w, n, true);
  if (auto g = detail::live_graph<T>({&wins})) {
    const int xid = detail::node_of(wins, g);
    detail::record<T>(g, out, {xid}, [xid, b, c, h, w, n](const T* go, detail::GraphCore<T>& gc) {
      if (xid < 0) return;
      detail::window_map_raw<T, true>(go, gc.grad_buf(xid), b, c, h, w, n, false);
    });
  }
  return out;
}

// Spatial circular shift by (s, s); a shift by -s inverts it exactly.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, int64_t s) {
  check(x.rank() == 4, "cyclic_shift: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const int64_t sh = ((s % h) + h) % h;
  const int64_t sw = ((s % w) + w) % w;
  Tensor<T> out(x.shape());
  const T* xd = x.cdata();
  T* od = out.data();
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* xp = xd + bc * h * w;
    T* op = od + bc * h * w;
    for (int64_t i = 0; i < h; ++i) {
      const int64_t si = (i - sh + h) % h;
      for (int64_t j = 0; j < w; ++j) op[i * w + j] = xp[si * w + (j - sw + w) % w];
    }
  }
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid},
                      [xid, b, c, h, w, sh, sw](const T* go, detail::GraphCore<T>& gc) {
                        if (xid < 0) return;
                        T* gx = gc.grad_buf(xid);
                        for (int64_t bc = 0; bc < b * c; ++bc) {
                          const T* gp = go + bc * h * w;
                          T* xp = gx + bc * h * w;
                          for (int64_t i = 0; i < h; ++i) {
                            const int64_t si = (i - sh + h) % h;
                            for (int64_t j = 0; j < w; ++j) {
                              xp[si * w + (j - sw + w) % w] += gp[i * w + j];
                            }
                          }
                        }
                      });
  }
  return out;
}

// out channel d reads input channel perm[d].
template <typename T>
Tensor<T> channel_permute(const Tensor<T>& x, const std::vector<int64_t>& perm) {
  check(x.rank() == 4, "channel_permute: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  check(static_cast<int64_t>(perm.size()) == c,
        "channel_permute: permutation size " + std::to_string(perm.size()) + " for " +
            std::to_string(c) + " channels");
  std::vector<char> seen(static_cast<size_t>(c), 0);
  for (int64_t p : perm) {
    check(p >= 0 && p < c && !seen[static_cast<size_t>(p)], "channel_permute: not a permutation");
    seen[static_cast<size_t>(p)] = 1;
  }
  Tensor<T> out(x.shape());
  const int64_t plane = h * w;
  const T* xd = x.cdata();
  T* od = out.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t d = 0; d < c; ++d) {
      const T* src = xd + (bi * c + perm[static_cast<size_t>(d)]) * plane;
      std::copy(src, src + plane, od + (bi * c + d) * plane);
    }
  }
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid},
                      [xid, perm, b, c, plane](const T* go, detail::GraphCore<T>& gc) {
                        if (xid < 0) return;
                        T* gx = gc.grad_buf(xid);
                        for (int64_t bi = 0; bi < b; ++bi) {
                          for (int64_t d = 0; d < c; ++d) {
                            const T* src = go + (bi * c + d) * plane;
                            T* dst = gx + (bi * c + perm[static_cast<size_t>(d)]) * plane;
                            for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                          }
                        }
                      });
  }
  return out;
}

// Channel c = g * Ch + k moves to k * heads + g, with Ch = C / heads.
template <typename T>
Tensor<T> shuffle_heads(const Tensor<T>& x, int64_t heads) {
  check(x.rank() == 4, "shuffle_heads: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t c = x.extent(1);
  check(heads >= 1 && c % heads == 0, "shuffle_heads: heads " + std::to_string(heads) +
                                          " must divide channels " + std::to_string(c));
  const int64_t ch = c / heads;
  std::vector<int64_t> perm(static_cast<size_t>(c));
  for (int64_t d = 0; d < c; ++d) perm[static_cast<size_t>(d)] = (d % heads) * ch + d / heads;
  return channel_permute(x, perm);
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace detail {

struct ConvDims {
  int64_t batch, cin, h, w, cout, k, stride, pad, groups, ho, wo;
  int64_t cin_g() const { return cin / groups; }
  int64_t cout_g() const { return cout / groups; }
};

inline int64_t div_floor(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline int64_t div_ceil(int64_t a, int64_t b) { return a > 0 ? (a + b - 1) / b : -((-a) / b); }

// Valid output range [lo, hi) such that 0 <= o*stride - pad + koff < extent.
inline void conv_out_range(int64_t extent, int64_t out_extent, int64_t stride, int64_t pad,
                           int64_t koff, int64_t& lo, int64_t& hi) {
  lo = std::max<int64_t>(0, div_ceil(pad - koff, stride));
  hi = std::min<int64_t>(out_extent, div_floor(extent - 1 + pad - koff, stride) + 1);
}

template <typename T>
void conv_forward_raw(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  parallel_for(d.batch * d.cout, [&](int64_t lo, int64_t hi) {
    for (int64_t bo = lo; bo < hi; ++bo) {
      const int64_t bi = bo / d.cout;
      const int64_t o = bo % d.cout;
      T* yrow = y + bo * d.ho * d.wo;
      const T bv = b ? b[o] : T(0);
      for (int64_t i = 0; i < d.ho * d.wo; ++i) yrow[i] = bv;
      const int64_t ci0 = (o / d.cout_g()) * d.cin_g();
      for (int64_t ig = 0; ig < d.cin_g(); ++ig) {
        const T* xch = x + (bi * d.cin + ci0 + ig) * d.h * d.w;
        const T* wch = w + (o * d.cin_g() + ig) * d.k * d.k;
        for (int64_t ky = 0; ky < d.k; ++ky) {
          int64_t oh_lo, oh_hi;
          conv_out_range(d.h, d.ho, d.stride, d.pad, ky, oh_lo, oh_hi);
          for (int64_t kx = 0; kx < d.k; ++kx) {
            const T wv = wch[ky * d.k + kx];
            int64_t ow_lo, ow_hi;
            conv_out_range(d.w, d.wo, d.stride, d.pad, kx, ow_lo, ow_hi);
            for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
              const int64_t ih = oh * d.stride - d.pad + ky;
              const T* xr = xch + ih * d.w - d.pad + kx;
              T* yr = yrow + oh * d.wo;
              if (d.stride == 1) {
                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow];
              } else {
                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow * d.stride];
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
void conv_backward_raw(const ConvDims& d, const T* go, const T* x, const T* w, T* gx, T* gw,
                       T* gb) {
  if (gb) {
    for (int64_t o = 0; o < d.cout; ++o) {
      T acc = T(0);
      for (int64_t bi = 0; bi < d.batch; ++bi) {
        const T* gr = go + (bi * d.cout + o) * d.ho * d.wo;
        for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += gr[i];
      }
      gb[o] += acc;
    }
  }
  if (gw) {
    parallel_for(d.cout, [&](int64_t olo, int64_t ohi) {
      for (int64_t o = olo; o < ohi; ++o) {
        const int64_t ci0 = (o / d.cout_g()) * d.cin_g();
        for (int64_t ig = 0; ig < d.cin_g(); ++ig) {
          for (int64_t ky = 0; ky < d.k; ++ky) {
            int64_t oh_lo, oh_hi;
            conv_out_range(d.h, d.ho, d.stride, d.pad, ky, oh_lo, oh_hi);
            for (int64_t kx = 0; kx < d.k; ++kx) {
              int64_t ow_lo, ow_hi;
              conv_out_range(d.w, d.wo, d.stride, d.pad, kx, ow_lo, ow_hi);
              T acc = T(0);
              for (int64_t bi = 0; bi < d.batch; ++bi) {
                const T* gr0 = go + (bi * d.cout + o) * d.ho * d.wo;
                const T* xch = x + (bi * d.cin + ci0 + ig) * d.h * d.w;
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                  const int64_t ih = oh * d.stride - d.pad + ky;
                  const T* xr = xch + ih * d.w - d.pad + kx;
                  const T* gr = gr0 + oh * d.wo;
                  if (d.stride == 1) {
                    for (int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += gr[ow] * xr[ow];
                  } else {
                    for (int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += gr[ow] * xr[ow * d.stride];
                  }
                }
              }
              gw[(o * d.cin_g() + ig) * d.k * d.k + ky * d.k + kx] += acc;
            }
          }
        }
      }
    });
  }
  if (gx) {
    parallel_for(d.batch, [&](int64_t blo, int64_t bhi) {
      for (int64_t bi = blo; bi < bhi; ++bi) {
        for (int64_t o = 0; o < d.cout; ++o) {
          const int64_t ci0 = (o / d.cout_g()) * d.cin_g();
          const T* gr0 = go + (bi * d.cout + o) * d.ho * d.wo;
          for (int64_t ig = 0; ig < d.cin_g(); ++ig) {
            T* xch = gx + (bi * d.cin + ci0 + ig) * d.h * d.w;
            const T* wch = w + (o * d.cin_g() + ig) * d.k * d.k;
            for (int64_t ky = 0; ky < d.k; ++ky) {
              int64_t oh_lo, oh_hi;
              conv_out_range(d.h, d.ho, d.stride, d.pad, ky, oh_lo, oh_hi);
              for (int64_t kx = 0; kx < d.k; ++kx) {
                const T wv = wch[ky * d.k + kx];
                if (wv == T(0)) continue;
                int64_t ow_lo, ow_hi;
                conv_out_range(d.w, d.wo, d.stride, d.pad, kx, ow_lo, ow_hi);
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                  const int64_t ih = oh * d.stride - d.pad + ky;
                  T* xr = xch + ih * d.w - d.pad + kx;
                  const T* gr = gr0 + oh * d.wo;
                  if (d.stride == 1) {
                    for (int64_t ow = ow_lo; ow < ow_hi; ++ow) xr[ow] += wv * gr[ow];
                  } else {
                    for (int64_t ow = ow_lo; ow < ow_hi; ++ow) xr[ow * d.stride] += wv * gr[ow];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
}

}  // namespace detail

// Zero padding, square kernel, grouped. weight is (Cout, Cin/groups, K, K).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t stride = 1, int64_t padding = 0, int64_t groups = 1) {
  check(x.rank() == 4, "conv2d: expected rank-4 input, got " + shape_str(x.shape()));
  check(weight.rank() == 4, "conv2d: expected rank-4 weight, got " + shape_str(weight.shape()));
  check(stride >= 1, "conv2d: stride must be positive");
  check(padding >= 0, "conv2d: negative padding");
  check(groups >= 1, "conv2d: groups must be positive");
  const int64_t cin = x.extent(1);
  const int64_t cout = weight.extent(0);
  const int64_t k = weight.extent(2);
  check(weight.extent(3) == k, "conv2d: kernel must be square, got " + shape_str(weight.shape()));
  check(cin % groups == 0, "conv2d: input channels " + std::to_string(cin) +
                               " not divisible by groups " + std::to_string(groups));
  check(cout % groups == 0, "conv2d: output channels " + std::to_string(cout) +
                                " not divisible by groups " + std::to_string(groups));
  check(weight.extent(1) == cin / groups,
        "conv2d: weight " + shape_str(weight.shape()) + " does not match input " +
            shape_str(x.shape()) + " with groups " + std::to_string(groups));
  if (bias.defined()) {
    check(bias.rank() == 1 && bias.extent(0) == cout,
          "conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(cout) + " outputs");
  }
  detail::ConvDims d;
  d.batch = x.extent(0);
  d.cin = cin;
  d.h = x.extent(2);
  d.w = x.extent(3);
  d.cout = cout;
  d.k = k;
  d.stride = stride;
  d.pad = padding;
  d.groups = groups;
  d.ho = (d.h + 2 * padding - k) / stride + 1;
  d.wo = (d.w + 2 * padding - k) / stride + 1;
  check(d.h + 2 * padding >= k && d.w + 2 * padding >= k,
        "conv2d: kernel " + std::to_string(k) + " exceeds padded input " + shape_str(x.shape()));
  Tensor<T> out({d.batch, d.cout, d.ho, d.wo});
  detail::conv_forward_raw<T>(d, x.cdata(), weight.cdata(), bias.defined() ? bias.cdata() : nullptr,
                              out.data());
  if (auto g = detail::live_graph<T>({&x, &weight, &bias})) {
    const int xid = detail::node_of(x, g);
    const int wid = detail::node_of(weight, g);
    const int bid = bias.defined() ? detail::node_of(bias, g) : -1;
    auto xv = x.values_ptr();
    auto wv = weight.values_ptr();
    detail::record<T>(g, out, {xid, wid, bid},
                      [d, xid, wid, bid, xv, wv](const T* go, detail::GraphCore<T>& gc) {
                        detail::conv_backward_raw<T>(d, go, xv->data(), wv->data(),
                                                     xid >= 0 ? gc.grad_buf(xid) : nullptr,
                                                     wid >= 0 ? gc.grad_buf(wid) : nullptr,
                                                     bid >= 0 ? gc.grad_buf(bid) : nullptr);
                      });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, int64_t stride = 1,
                 int64_t padding = 0, int64_t groups = 1) {
  return conv2d(x, weight, Tensor<T>(), stride, padding, groups);
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void matmul_forward_raw(int64_t batch, int64_t m, int64_t k, int64_t n, const T* a, const T* b,
                        T* y) {
  parallel_for(batch * m, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      const int64_t bt = r / m;
      const T* arow = a + r * k;
      const T* bmat = b + bt * k * n;
      T* yrow = y + r * n;
      for (int64_t j = 0; j < n; ++j) yrow[j] = T(0);
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = bmat + kk * n;
        for (int64_t j = 0; j < n; ++j) yrow[j] += av * brow[j];
      }
    }
  });
}

}  // namespace detail

// Batched matrix product over equal leading extents: (..., M, K) x (..., K, N).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() >= 2 && b.rank() >= 2, "matmul: operands must have rank >= 2");
  check(a.rank() == b.rank(), "matmul: rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int r = a.rank();
  int64_t batch = 1;
  for (int d = 0; d < r - 2; ++d) {
    check(a.extent(d) == b.extent(d),
          "matmul: leading extent mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    batch *= a.extent(d);
  }
  const int64_t m = a.extent(r - 2);
  const int64_t k = a.extent(r - 1);
  const int64_t n = b.extent(r - 1);
  check(b.extent(r - 2) == k,
        "matmul: inner extent mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(r - 1)] = n;
  Tensor<T> out(out_shape);
  detail::matmul_forward_raw<T>(batch, m, k, n, a.cdata(), b.cdata(), out.data());
  if (auto g = detail::live_graph<T>({&a, &b})) {
    const int aid = detail::node_of(a, g);
    const int bid = detail::node_of(b, g);
    auto av = a.values_ptr();
    auto bv = b.values_ptr();
    detail::record<T>(
        g, out, {aid, bid}, [aid, bid, av, bv, batch, m, k, n](const T* go, detail::GraphCore<T>& gc) {
          if (aid >= 0) {
            T* ga = gc.grad_buf(aid);
            const T* bd = bv->data();
            parallel_for(batch * m, [&](int64_t lo, int64_t hi) {
              for (int64_t r2 = lo; r2 < hi; ++r2) {
                const int64_t bt = r2 / m;
                const T* grow = go + r2 * n;
                const T* bmat = bd + bt * k * n;
                T* garow = ga + r2 * k;
                for (int64_t kk = 0; kk < k; ++kk) {
                  const T* brow = bmat + kk * n;
                  T acc = T(0);
                  for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                  garow[kk] += acc;
                }
              }
            });
          }
          if (bid >= 0) {
            T* gb = gc.grad_buf(bid);
            const T* ad = av->data();
            parallel_for(batch, [&](int64_t lo, int64_t hi) {
              for (int64_t bt = lo; bt < hi; ++bt) {
                const T* amat = ad + bt * m * k;
                const T* gmat = go + bt * m * n;
                T* gbmat = gb + bt * k * n;
                for (int64_t i = 0; i < m; ++i) {
                  const T* arow = amat + i * k;
                  const T* grow = gmat + i * n;
                  for (int64_t kk = 0; kk < k; ++kk) {
                    const T av2 = arow[kk];
                    if (av2 == T(0)) continue;
                    T* gbrow = gbmat + kk * n;
                    for (int64_t j = 0; j < n; ++j) gbrow[j] += av2 * grow[j];
                  }
                }
              }
            });
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer norm over channels at each spatial location
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm_channel(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             T eps = T(1e-6)) {
  check(x.rank() == 4, "layer_norm_channel: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  check(c >= 1, "layer_norm_channel: no channels");
  check(gamma.rank() == 1 && gamma.extent(0) == c,
        "layer_norm_channel: gamma " + shape_str(gamma.shape()) + " for " + std::to_string(c) + " channels");
  check(beta.rank() == 1 && beta.extent(0) == c,
        "layer_norm_channel: beta " + shape_str(beta.shape()) + " for " + std::to_string(c) + " channels");
  check(eps > T(0), "layer_norm_channel: eps must be positive");
  const int64_t p = h * w;
  Tensor<T> out(x.shape());
  auto mu = std::make_shared<std::vector<T>>(static_cast<size_t>(b * p), T(0));
  auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(b * p), T(0));
  const T* xd = x.cdata();
  const T* gd = gamma.cdata();
  const T* bd = beta.cdata();
  T* od = out.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    const T* xb = xd + bi * c * p;
    T* ob = od + bi * c * p;
    T* mub = mu->data() + bi * p;
    T* rb = rstd->data() + bi * p;
    for (int64_t ci = 0; ci < c; ++ci) {
      const T* xr = xb + ci * p;
      for (int64_t i = 0; i < p; ++i) mub[i] += xr[i];
    }
    for (int64_t i = 0; i < p; ++i) mub[i] /= static_cast<T>(c);
    for (int64_t ci = 0; ci < c; ++ci) {
      const T* xr = xb + ci * p;
      for (int64_t i = 0; i < p; ++i) {
        const T dd = xr[i] - mub[i];
        rb[i] += dd * dd;
      }
    }
    for (int64_t i = 0; i < p; ++i) rb[i] = T(1) / std::sqrt(rb[i] / static_cast<T>(c) + eps);
    for (int64_t ci = 0; ci < c; ++ci) {
      const T* xr = xb + ci * p;
      T* orow = ob + ci * p;
      const T gv = gd[ci];
      const T bv = bd[ci];
      for (int64_t i = 0; i < p; ++i) orow[i] = (xr[i] - mub[i]) * rb[i] * gv + bv;
    }
  }
  if (auto g = detail::live_graph<T>({&x, &gamma, &beta})) {
    const int xid = detail::node_of(x, g);
    const int gid = detail::node_of(gamma, g);
    const int bid = detail::node_of(beta, g);
    auto xv = x.values_ptr();
    auto gv = gamma.values_ptr();
    detail::record<T>(
        g, out, {xid, gid, bid},
        [xid, gid, bid, xv, gv, mu, rstd, b, c, p](const T* go, detail::GraphCore<T>& gc) {
          const T* xd = xv->data();
          const T* gd = gv->data();
          std::vector<T> s1(static_cast<size_t>(p)), s2(static_cast<size_t>(p));
          for (int64_t bi = 0; bi < b; ++bi) {
            const T* xb = xd + bi * c * p;
            const T* gob = go + bi * c * p;
            const T* mub = mu->data() + bi * p;
            const T* rb = rstd->data() + bi * p;
            if (gid >= 0) {
              T* gg = gc.grad_buf(gid);
              for (int64_t ci = 0; ci < c; ++ci) {
                const T* xr = xb + ci * p;
                const T* gr = gob + ci * p;
                T acc = T(0);
                for (int64_t i = 0; i < p; ++i) acc += gr[i] * (xr[i] - mub[i]) * rb[i];
                gg[ci] += acc;
              }
            }
            if (bid >= 0) {
              T* gb = gc.grad_buf(bid);
              for (int64_t ci = 0; ci < c; ++ci) {
                const T* gr = gob + ci * p;
                T acc = T(0);
                for (int64_t i = 0; i < p; ++i) acc += gr[i];
                gb[ci] += acc;
              }
            }
            if (xid >= 0) {
              T* gx = gc.grad_buf(xid) + bi * c * p;
              std::fill(s1.begin(), s1.end(), T(0));
              std::fill(s2.begin(), s2.end(), T(0));
              for (int64_t ci = 0; ci < c; ++ci) {
                const T* xr = xb + ci * p;
                const T* gr = gob + ci * p;
                const T gvv = gd[ci];
                for (int64_t i = 0; i < p; ++i) {
                  const T u = gr[i] * gvv;
                  s1[static_cast<size_t>(i)] += u;
                  s2[static_cast<size_t>(i)] += u * (xr[i] - mub[i]) * rb[i];
                }
              }
              for (int64_t ci = 0; ci < c; ++ci) {
                const T* xr = xb + ci * p;
                const T* gr = gob + ci * p;
                const T gvv = gd[ci];
                for (int64_t i = 0; i < p; ++i) {
                  const T xhat = (xr[i] - mub[i]) * rb[i];
                  gx[ci * p + i] += rb[i] * (gr[i] * gvv - (s1[static_cast<size_t>(i)] +
                                                            xhat * s2[static_cast<size_t>(i)]) /
                                                               static_cast<T>(c));
                }
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling and resampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x) {
  check(x.rank() == 4, "avgpool2: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  check(h % 2 == 0 && w % 2 == 0, "avgpool2: spatial extents must be even, got " + shape_str(x.shape()));
  Tensor<T> out({b, c, h / 2, w / 2});
  const T* xd = x.cdata();
  T* od = out.data();
  const int64_t ho = h / 2, wo = w / 2;
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* xp = xd + bc * h * w;
    T* op = od + bc * ho * wo;
    for (int64_t i = 0; i < ho; ++i) {
      for (int64_t j = 0; j < wo; ++j) {
        const T* r0 = xp + (2 * i) * w + 2 * j;
        const T* r1 = r0 + w;
        op[i * wo + j] = (r0[0] + r0[1] + r1[0] + r1[1]) / T(4);
      }
    }
  }
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid},
                      [xid, b, c, h, w, ho, wo](const T* go, detail::GraphCore<T>& gc) {
                        if (xid < 0) return;
                        T* gx = gc.grad_buf(xid);
                        for (int64_t bc = 0; bc < b * c; ++bc) {
                          const T* gp = go + bc * ho * wo;
                          T* xp = gx + bc * h * w;
                          for (int64_t i = 0; i < ho; ++i) {
                            for (int64_t j = 0; j < wo; ++j) {
                              const T gv = gp[i * wo + j] / T(4);
                              T* r0 = xp + (2 * i) * w + 2 * j;
                              T* r1 = r0 + w;
                              r0[0] += gv;
                              r0[1] += gv;
                              r1[0] += gv;
                              r1[1] += gv;
                            }
                          }
                        }
                      });
  }
  return out;
}

// Catmull-Rom style cubic kernel with a = -0.5.
inline double bicubic_kernel_weight(double x) {
  const double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct CubicTaps {
  std::vector<int64_t> idx;  // 4 per output coordinate, edge-clamped
  std::vector<double> w;
};

inline CubicTaps make_cubic_taps(int64_t in, int64_t out) {
  CubicTaps t;
  t.idx.resize(static_cast<size_t>(out * 4));
  t.w.resize(static_cast<size_t>(out * 4));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    const double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(s);
    const double frac = s - base;
    const int64_t bi = static_cast<int64_t>(base);
    for (int64_t k = 0; k < 4; ++k) {
      t.idx[static_cast<size_t>(o * 4 + k)] = std::clamp<int64_t>(bi - 1 + k, 0, in - 1);
      t.w[static_cast<size_t>(o * 4 + k)] = bicubic_kernel_weight(frac + 1.0 - static_cast<double>(k));
    }
  }
  return t;
}

// Resample the last axis of a (rows, in) block into (rows, out).
template <typename T>
void cubic_rows_forward(const CubicTaps& t, int64_t rows, int64_t in, int64_t out, const T* x,
                        T* y) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * in;
    T* yr = y + r * out;
    for (int64_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int64_t k = 0; k < 4; ++k) {
        acc += t.w[static_cast<size_t>(o * 4 + k)] *
               static_cast<double>(xr[t.idx[static_cast<size_t>(o * 4 + k)]]);
      }
      yr[o] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void cubic_rows_adjoint(const CubicTaps& t, int64_t rows, int64_t in, int64_t out, const T* gy,
                        T* gx) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* gr = gy + r * out;
    T* gxr = gx + r * in;
    for (int64_t o = 0; o < out; ++o) {
      const T gv = gr[o];
      for (int64_t k = 0; k < 4; ++k) {
        gxr[t.idx[static_cast<size_t>(o * 4 + k)]] +=
            static_cast<T>(t.w[static_cast<size_t>(o * 4 + k)]) * gv;
      }
    }
  }
}

// Resample the second-to-last axis: blocks of (in, width) into (out, width).
template <typename T>
void cubic_cols_forward(const CubicTaps& t, int64_t blocks, int64_t in, int64_t out, int64_t width,
                        const T* x, T* y) {
  for (int64_t bl = 0; bl < blocks; ++bl) {
    const T* xb = x + bl * in * width;
    T* yb = y + bl * out * width;
    for (int64_t o = 0; o < out; ++o) {
      T* yr = yb + o * width;
      for (int64_t j = 0; j < width; ++j) yr[j] = T(0);
      for (int64_t k = 0; k < 4; ++k) {
        const T wv = static_cast<T>(t.w[static_cast<size_t>(o * 4 + k)]);
        const T* xr = xb + t.idx[static_cast<size_t>(o * 4 + k)] * width;
        for (int64_t j = 0; j < width; ++j) yr[j] += wv * xr[j];
      }
    }
  }
}

template <typename T>
void cubic_cols_adjoint(const CubicTaps& t, int64_t blocks, int64_t in, int64_t out, int64_t width,
                        const T* gy, T* gx) {
  for (int64_t bl = 0; bl < blocks; ++bl) {
    const T* gb = gy + bl * out * width;
    T* gxb = gx + bl * in * width;
    for (int64_t o = 0; o < out; ++o) {
      const T* gr = gb + o * width;
      for (int64_t k = 0; k < 4; ++k) {
        const T wv = static_cast<T>(t.w[static_cast<size_t>(o * 4 + k)]);
        T* gxr = gxb + t.idx[static_cast<size_t>(o * 4 + k)] * width;
        for (int64_t j = 0; j < width; ++j) gxr[j] += wv * gr[j];
      }
    }
  }
}

}  // namespace detail

// Separable cubic resampling with pixel-center mapping and edge clamp.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  check(x.rank() == 4, "bicubic_resize: expected rank-4 input, got " + shape_str(x.shape()));
  check(out_h >= 1 && out_w >= 1, "bicubic_resize: target extents must be positive");
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const detail::CubicTaps tw = detail::make_cubic_taps(w, out_w);
  const detail::CubicTaps th = detail::make_cubic_taps(h, out_h);
  std::vector<T> mid(static_cast<size_t>(b * c * h * out_w));
  detail::cubic_rows_forward<T>(tw, b * c * h, w, out_w, x.cdata(), mid.data());
  Tensor<T> out({b, c, out_h, out_w});
  detail::cubic_cols_forward<T>(th, b * c, h, out_h, out_w, mid.data(), out.data());
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    detail::record<T>(g, out, {xid},
                      [xid, tw, th, b, c, h, w, out_h, out_w](const T* go, detail::GraphCore<T>& gc) {
                        if (xid < 0) return;
                        std::vector<T> gmid(static_cast<size_t>(b * c * h * out_w), T(0));
                        detail::cubic_cols_adjoint<T>(th, b * c, h, out_h, out_w, go, gmid.data());
                        detail::cubic_rows_adjoint<T>(tw, b * c * h, w, out_w, gmid.data(),
                                                      gc.grad_buf(xid));
                      });
  }
  return out;
}

}  // namespace wfen
