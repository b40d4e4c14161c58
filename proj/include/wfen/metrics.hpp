#pragma once

#include <string>

#include "wfen/image.hpp"

namespace wfen {

enum class ChannelMode { rgb_mean, luma };

inline const char* channel_mode_name(ChannelMode m) {
  return m == ChannelMode::rgb_mean ? "rgb_mean" : "luma";
}

inline ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "rgb_mean") return ChannelMode::rgb_mean;
  if (s == "luma") return ChannelMode::luma;
  throw std::invalid_argument("unknown channel mode '" + s + "' (valid: rgb_mean, luma)");
}

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  ChannelMode channel_mode = ChannelMode::rgb_mean;
};

// Peak signal-to-noise ratio in dB: 10*log10(peak^2 / MSE). Identical images
// return +infinity. rgb_mean pools squared error over all three channels;
// luma compares BT.601 luminance.
double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0,
            ChannelMode mode = ChannelMode::rgb_mean);

// Single-scale structural similarity with a Gaussian window (default 11x11,
// sigma 1.5), K1=0.01, K2=0.03, dynamic range 1. Only fully interior window
// positions contribute; images smaller than the window are rejected.
double ssim(const ImageBuffer& a, const ImageBuffer& b, int window = 11, double sigma = 1.5,
            ChannelMode mode = ChannelMode::rgb_mean);

MetricReport evaluate_pair(const ImageBuffer& prediction, const ImageBuffer& reference,
                           ChannelMode mode = ChannelMode::rgb_mean);

}  // namespace wfen
