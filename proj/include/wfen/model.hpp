#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "wfen/fdt.hpp"
#include "wfen/nn.hpp"
#include "wfen/wavelet.hpp"

namespace wfen {

enum class DownsampleKind { wfd, stride, avgpool, bicubic };

inline const char* downsample_name(DownsampleKind k) {
  switch (k) {
    case DownsampleKind::wfd: return "wfd";
    case DownsampleKind::stride: return "stride";
    case DownsampleKind::avgpool: return "avgpool";
    case DownsampleKind::bicubic: return "bicubic";
  }
  throw std::invalid_argument("downsample_name: bad enum value");
}

inline DownsampleKind parse_downsample(const std::string& s) {
  if (s == "wfd") return DownsampleKind::wfd;
  if (s == "stride") return DownsampleKind::stride;
  if (s == "avgpool") return DownsampleKind::avgpool;
  if (s == "bicubic") return DownsampleKind::bicubic;
  throw std::invalid_argument("unknown downsample variant '" + s +
                              "' (valid: wfd, stride, avgpool, bicubic)");
}

struct WfenConfig {
  int64_t base_channels = 40;
  std::vector<int64_t> encoder_blocks{2, 1, 1};
  int64_t bottleneck_blocks = 6;
  std::vector<int64_t> decoder_blocks{1, 1, 1};
  int64_t window = 8;
  std::vector<int64_t> heads{1, 2, 4, 4};
  int64_t input_size = 128;
  bool shift_windows = true;
  bool shuffle_heads = true;
  DownsampleKind downsample = DownsampleKind::wfd;

  // Desk-scale preset used by tests and the training harness.
  static WfenConfig tiny() {
    WfenConfig c;
    c.base_channels = 16;
    c.encoder_blocks = {1, 1, 1};
    c.bottleneck_blocks = 2;
    c.decoder_blocks = {1, 1, 1};
    c.input_size = 32;
    return c;
  }

  // Channels per resolution level: full, half, quarter, eighth.
  std::vector<int64_t> channel_schedule() const {
    return {base_channels, 2 * base_channels, 4 * base_channels, 4 * base_channels};
  }

  // Effective attention window at a stage with the given spatial extent.
  int64_t stage_window(int64_t extent) const { return std::min(window, extent); }

  void validate() const {
    std::vector<std::string> bad;
    if (base_channels < 1) bad.push_back("base_channels must be positive");
    if (encoder_blocks.size() != 3) bad.push_back("encoder_blocks must list 3 stages");
    if (decoder_blocks.size() != 3) bad.push_back("decoder_blocks must list 3 stages");
    for (int64_t n : encoder_blocks) {
      if (n < 1) bad.push_back("encoder stage block counts must be positive");
    }
    for (int64_t n : decoder_blocks) {
      if (n < 1) bad.push_back("decoder stage block counts must be positive");
    }
    if (bottleneck_blocks < 1) bad.push_back("bottleneck_blocks must be positive");
    if (window < 1) bad.push_back("window must be positive");
    if (heads.size() != 4) {
      bad.push_back("heads must list 4 levels");
    } else {
      const auto sched = channel_schedule();
      for (size_t i = 0; i < 4; ++i) {
        if (heads[i] < 1) {
          bad.push_back("heads[" + std::to_string(i) + "] must be positive");
        } else if (sched[i] % heads[i] != 0) {
          bad.push_back("heads[" + std::to_string(i) + "]=" + std::to_string(heads[i]) +
                        " does not divide the level's " + std::to_string(sched[i]) + " channels");
        }
      }
    }
    if (input_size < 8 || input_size % 8 != 0) {
      bad.push_back("input_size must be a positive multiple of 8");
    } else {
      append_spatial_violations(input_size, input_size, bad);
    }
    if (!bad.empty()) throw std::invalid_argument("config: " + join(bad));
  }

  void validate_input(int64_t h, int64_t w) const {
    std::vector<std::string> bad;
    if (h < 8 || h % 8 != 0 || w < 8 || w % 8 != 0) {
      bad.push_back("input extents " + std::to_string(h) + "x" + std::to_string(w) +
                    " must be positive multiples of 8");
    } else {
      append_spatial_violations(h, w, bad);
    }
    if (!bad.empty()) throw std::invalid_argument("config: " + join(bad));
  }

 private:
  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
      if (i) out += "; ";
      out += parts[i];
    }
    return out;
  }

  void append_spatial_violations(int64_t h, int64_t w, std::vector<std::string>& bad) const {
    for (int level = 0; level < 4; ++level) {
      const int64_t eh = h >> level;
      const int64_t ew = w >> level;
      const int64_t n = stage_window(std::min(eh, ew));
      if (n < 1 || eh % n != 0 || ew % n != 0) {
        bad.push_back("window " + std::to_string(n) + " does not tile the level-" +
                      std::to_string(level) + " extent " + std::to_string(eh) + "x" +
                      std::to_string(ew));
      }
    }
  }
};

// Analysis-side downsampling: route the low band through a transformer block
// and the three high bands through a residual block, then fuse 1x1.
template <typename T>
struct WfdLayer {
  FdtBlock<T> low_fdt;
  ResidualBlock<T> high_res;
  Conv2d<T> fuse;

  WfdLayer() = default;

  WfdLayer(ParameterStore<T>& store, const std::string& name, int64_t cin, int64_t cout,
           int64_t window, int64_t heads, bool shuffle, Rng& rng)
      : low_fdt(store, name + ".low_fdt", cin, window, heads, false, rng, shuffle),
        high_res(store, name + ".high_res", 3 * cin, cin, rng),
        fuse(store, name + ".fuse", 2 * cin, cout, 1, 1, 0, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    SubbandSet<T> s = dwt2_haar(x);
    Tensor<T> low = low_fdt.forward(s.ll);
    Tensor<T> high = high_res.forward(concat<T>({s.lh, s.hl, s.hh}, 1));
    return fuse.forward(concat<T>({low, high}, 1));
  }
};

// Synthesis-side upsampling: take the encoder feature's subbands, fuse its low
// band with the decoder feature, refine the high bands, and invert the
// transform back to double resolution.
template <typename T>
struct WfuLayer {
  Conv2d<T> low_fuse;
  ResidualBlock<T> high_res;
  int64_t channels = 0;

  WfuLayer() = default;

  WfuLayer(ParameterStore<T>& store, const std::string& name, int64_t c, Rng& rng)
      : low_fuse(store, name + ".low_fuse", 2 * c, c, 1, 1, 0, 1, rng),
        high_res(store, name + ".high_res", 3 * c, 3 * c, rng),
        channels(c) {}

  Tensor<T> forward(const Tensor<T>& f_enc, const Tensor<T>& f_dec) const {
    check(f_enc.rank() == 4 && f_dec.rank() == 4, "wfu: expected rank-4 operands");
    check(f_enc.extent(1) == channels && f_dec.extent(1) == channels,
          "wfu: expected " + std::to_string(channels) + " channels, got " +
              shape_str(f_enc.shape()) + " and " + shape_str(f_dec.shape()));
    check(f_enc.extent(2) == 2 * f_dec.extent(2) && f_enc.extent(3) == 2 * f_dec.extent(3),
          "wfu: encoder feature " + shape_str(f_enc.shape()) +
              " must be exactly double the decoder feature " + shape_str(f_dec.shape()));
    SubbandSet<T> s = dwt2_haar(f_enc);
    Tensor<T> low = low_fuse.forward(concat<T>({s.ll, f_dec}, 1));
    Tensor<T> highs = high_res.forward(concat<T>({s.lh, s.hl, s.hh}, 1));
    auto parts = split(highs, 1, {channels, channels, channels});
    return idwt2_haar(low, parts[0], parts[1], parts[2]);
  }
};

// Downsampling operator selected by config; all variants halve the spatial
// extent and move cin to cout channels.
template <typename T>
struct Downsample {
  DownsampleKind kind = DownsampleKind::wfd;
  WfdLayer<T> wfd;
  Conv2d<T> conv;

  Downsample() = default;

  Downsample(ParameterStore<T>& store, const std::string& name, DownsampleKind kind_, int64_t cin,
             int64_t cout, int64_t window, int64_t heads, bool shuffle, Rng& rng)
      : kind(kind_) {
    switch (kind) {
      case DownsampleKind::wfd:
        wfd = WfdLayer<T>(store, name + ".wfd", cin, cout, window, heads, shuffle, rng);
        break;
      case DownsampleKind::stride:
        conv = Conv2d<T>(store, name + ".conv", cin, cout, 3, 2, 1, 1, rng);
        break;
      case DownsampleKind::avgpool:
      case DownsampleKind::bicubic:
        conv = Conv2d<T>(store, name + ".expand", cin, cout, 1, 1, 0, 1, rng);
        break;
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    switch (kind) {
      case DownsampleKind::wfd: return wfd.forward(x);
      case DownsampleKind::stride: return conv.forward(x);
      case DownsampleKind::avgpool: return conv.forward(avgpool2(x));
      case DownsampleKind::bicubic:
        return conv.forward(bicubic_resize(x, x.extent(2) / 2, x.extent(3) / 2));
    }
    throw std::invalid_argument("downsample: bad enum value");
  }
};

// Encoder-decoder with a global image residual. The input is a [0,1] image
// batch at the working resolution; the output has the same shape.
template <typename T>
struct WfenModel {
  struct EncStage {
    std::vector<FdtBlock<T>> blocks;
    Downsample<T> down;
  };
  struct DecStage {
    Conv2d<T> reduce;
    WfuLayer<T> wfu;
    std::vector<FdtBlock<T>> blocks;
  };

  WfenConfig cfg;
  ParameterStore<T> params;
  Conv2d<T> shallow;
  std::array<EncStage, 3> enc;
  std::vector<FdtBlock<T>> bottleneck;
  std::array<DecStage, 3> dec;  // stored by level; processed 2, 1, 0
  Conv2d<T> head;

  WfenModel(const WfenConfig& config, uint64_t seed) : cfg(config), params(seed) {
    cfg.validate();
    Rng rng(seed);
    const auto sched = cfg.channel_schedule();
    const bool sh = cfg.shuffle_heads;
    shallow = Conv2d<T>(params, "shallow", 3, sched[0], 3, 1, 1, 1, rng);
    for (int i = 0; i < 3; ++i) {
      const std::string stage = "enc" + std::to_string(i);
      for (int64_t j = 0; j < cfg.encoder_blocks[static_cast<size_t>(i)]; ++j) {
        const bool shifted = cfg.shift_windows && (j % 2 == 1);
        enc[static_cast<size_t>(i)].blocks.emplace_back(params,
                                                        stage + ".block" + std::to_string(j),
                                                        sched[static_cast<size_t>(i)], cfg.window,
                                                        cfg.heads[static_cast<size_t>(i)], shifted,
                                                        rng, sh);
      }
      enc[static_cast<size_t>(i)].down =
          Downsample<T>(params, stage + ".down", cfg.downsample, sched[static_cast<size_t>(i)],
                        sched[static_cast<size_t>(i) + 1], cfg.window,
                        cfg.heads[static_cast<size_t>(i)], sh, rng);
    }
    for (int64_t j = 0; j < cfg.bottleneck_blocks; ++j) {
      const bool shifted = cfg.shift_windows && (j % 2 == 1);
      bottleneck.emplace_back(params, "bottleneck.block" + std::to_string(j), sched[3], cfg.window,
                              cfg.heads[3], shifted, rng, sh);
    }
    int64_t cur = sched[3];
    for (int i = 2; i >= 0; --i) {
      const std::string stage = "dec" + std::to_string(i);
      auto& d = dec[static_cast<size_t>(i)];
      d.reduce = Conv2d<T>(params, stage + ".reduce", cur, sched[static_cast<size_t>(i)], 1, 1, 0,
                           1, rng);
      d.wfu = WfuLayer<T>(params, stage + ".wfu", sched[static_cast<size_t>(i)], rng);
      for (int64_t j = 0; j < cfg.decoder_blocks[static_cast<size_t>(i)]; ++j) {
        const bool shifted = cfg.shift_windows && (j % 2 == 1);
        d.blocks.emplace_back(params, stage + ".block" + std::to_string(j),
                              sched[static_cast<size_t>(i)], cfg.window,
                              cfg.heads[static_cast<size_t>(i)], shifted, rng, sh);
      }
      cur = sched[static_cast<size_t>(i)];
    }
    head = Conv2d<T>(params, "head", 2 * sched[0], 3, 3, 1, 1, 1, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.rank() == 4 && x.extent(1) == 3,
          "model: expected a Bx3xHxW input, got " + shape_str(x.shape()));
    cfg.validate_input(x.extent(2), x.extent(3));
    Tensor<T> f0 = shallow.forward(x);
    Tensor<T> cur = f0;
    std::array<Tensor<T>, 3> skips;
    for (int i = 0; i < 3; ++i) {
      for (const auto& b : enc[static_cast<size_t>(i)].blocks) cur = b.forward(cur);
      skips[static_cast<size_t>(i)] = cur;
      cur = enc[static_cast<size_t>(i)].down.forward(cur);
    }
    for (const auto& b : bottleneck) cur = b.forward(cur);
    for (int i = 2; i >= 0; --i) {
      const auto& d = dec[static_cast<size_t>(i)];
      cur = d.reduce.forward(cur);
      cur = d.wfu.forward(skips[static_cast<size_t>(i)], cur);
      for (const auto& b : d.blocks) cur = b.forward(cur);
    }
    Tensor<T> restored = head.forward(concat<T>({cur, f0}, 1));
    return add(restored, x);
  }
};

}  // namespace wfen
