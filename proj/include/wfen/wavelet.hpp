#pragma once

#include "wfen/tensor.hpp"

namespace wfen {

// One level of subbands: approximation plus horizontal, vertical and diagonal
// detail, each at half the source resolution.
template <typename T>
struct SubbandSet {
  Tensor<T> ll, lh, hl, hh;
};

namespace detail {

// Per 2x2 block (x00 x01 / x10 x11) the four unnormalized Haar responses are
//   ll = x00 + x01 + x10 + x11
//   lh = x00 + x01 - x10 - x11
//   hl = x00 - x01 + x10 - x11
//   hh = x00 - x01 - x10 + x11
// The map matrix M satisfies M * M^T = 4I, so the inverse is M^T / 4 and the
// round trip is exact for dyadic inputs.
template <typename T>
struct HaarSigns {
  // sign[band][corner], corners ordered x00, x01, x10, x11
  static constexpr T sign[4][4] = {
      {T(1), T(1), T(1), T(1)},
      {T(1), T(1), T(-1), T(-1)},
      {T(1), T(-1), T(1), T(-1)},
      {T(1), T(-1), T(-1), T(1)},
  };
};

}  // namespace detail

template <typename T>
SubbandSet<T> dwt2_haar(const Tensor<T>& x) {
  check(x.rank() == 4, "dwt2_haar: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  check(h % 2 == 0 && w % 2 == 0,
        "dwt2_haar: spatial extents must be even, got " + shape_str(x.shape()));
  const int64_t ho = h / 2, wo = w / 2;
  SubbandSet<T> s;
  Tensor<T>* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
  for (auto* t : bands) *t = Tensor<T>({b, c, ho, wo});
  const T* xd = x.cdata();
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* xp = xd + bc * h * w;
    for (int band = 0; band < 4; ++band) {
      T* op = bands[band]->data() + bc * ho * wo;
      const T* sg = detail::HaarSigns<T>::sign[band];
      for (int64_t i = 0; i < ho; ++i) {
        const T* r0 = xp + (2 * i) * w;
        const T* r1 = r0 + w;
        for (int64_t j = 0; j < wo; ++j) {
          op[i * wo + j] = sg[0] * r0[2 * j] + sg[1] * r0[2 * j + 1] + sg[2] * r1[2 * j] +
                           sg[3] * r1[2 * j + 1];
        }
      }
    }
  }
  if (auto g = detail::live_graph<T>({&x})) {
    const int xid = detail::node_of(x, g);
    for (int band = 0; band < 4; ++band) {
      detail::record<T>(g, *bands[band], {xid},
                        [xid, band, b, c, h, w, ho, wo](const T* go, detail::GraphCore<T>& gc) {
                          if (xid < 0) return;
                          T* gx = gc.grad_buf(xid);
                          const T* sg = detail::HaarSigns<T>::sign[band];
                          for (int64_t bc = 0; bc < b * c; ++bc) {
                            const T* gp = go + bc * ho * wo;
                            T* xp = gx + bc * h * w;
                            for (int64_t i = 0; i < ho; ++i) {
                              T* r0 = xp + (2 * i) * w;
                              T* r1 = r0 + w;
                              for (int64_t j = 0; j < wo; ++j) {
                                const T gv = gp[i * wo + j];
                                r0[2 * j] += sg[0] * gv;
                                r0[2 * j + 1] += sg[1] * gv;
                                r1[2 * j] += sg[2] * gv;
                                r1[2 * j + 1] += sg[3] * gv;
                              }
                            }
                          }
                        });
    }
  }
  return s;
}

template <typename T>
Tensor<T> idwt2_haar(const Tensor<T>& ll, const Tensor<T>& lh, const Tensor<T>& hl,
                     const Tensor<T>& hh) {
  check(ll.rank() == 4, "idwt2_haar: expected rank-4 subbands, got " + shape_str(ll.shape()));
  check(ll.shape() == lh.shape() && ll.shape() == hl.shape() && ll.shape() == hh.shape(),
        "idwt2_haar: subband shapes differ");
  const int64_t b = ll.extent(0), c = ll.extent(1), ho = ll.extent(2), wo = ll.extent(3);
  const int64_t h = 2 * ho, w = 2 * wo;
  Tensor<T> out({b, c, h, w});
  const Tensor<T>* bands[4] = {&ll, &lh, &hl, &hh};
  T* od = out.data();
  for (int64_t bc = 0; bc < b * c; ++bc) {
    T* xp = od + bc * h * w;
    for (int64_t i = 0; i < h * w; ++i) xp[i] = T(0);
    for (int band = 0; band < 4; ++band) {
      const T* bp = bands[band]->cdata() + bc * ho * wo;
      const T* sg = detail::HaarSigns<T>::sign[band];
      for (int64_t i = 0; i < ho; ++i) {
        T* r0 = xp + (2 * i) * w;
        T* r1 = r0 + w;
        for (int64_t j = 0; j < wo; ++j) {
          const T v = bp[i * wo + j] / T(4);
          r0[2 * j] += sg[0] * v;
          r0[2 * j + 1] += sg[1] * v;
          r1[2 * j] += sg[2] * v;
          r1[2 * j + 1] += sg[3] * v;
        }
      }
    }
  }
  if (auto g = detail::live_graph<T>({&ll, &lh, &hl, &hh})) {
    int ids[4];
    for (int band = 0; band < 4; ++band) ids[band] = detail::node_of(*bands[band], g);
    detail::record<T>(g, out, {ids[0], ids[1], ids[2], ids[3]},
                      [ids, b, c, h, w, ho, wo](const T* go, detail::GraphCore<T>& gc) {
                        for (int band = 0; band < 4; ++band) {
                          if (ids[band] < 0) continue;
                          T* gb = gc.grad_buf(ids[band]);
                          const T* sg = detail::HaarSigns<T>::sign[band];
                          for (int64_t bc = 0; bc < b * c; ++bc) {
                            const T* gp = go + bc * h * w;
                            T* bp = gb + bc * ho * wo;
                            for (int64_t i = 0; i < ho; ++i) {
                              const T* r0 = gp + (2 * i) * w;
                              const T* r1 = r0 + w;
                              for (int64_t j = 0; j < wo; ++j) {
                                bp[i * wo + j] += (sg[0] * r0[2 * j] + sg[1] * r0[2 * j + 1] +
                                                   sg[2] * r1[2 * j] + sg[3] * r1[2 * j + 1]) /
                                                  T(4);
                              }
                            }
                          }
                        }
                      });
  }
  return out;
}

template <typename T>
Tensor<T> idwt2_haar(const SubbandSet<T>& s) {
  return idwt2_haar(s.ll, s.lh, s.hl, s.hh);
}

}  // namespace wfen
