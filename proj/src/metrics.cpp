#include "wfen/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace wfen {

namespace {

void check_same_geometry(const ImageBuffer& a, const ImageBuffer& b) {
  check(a.width == b.width && a.height == b.height && a.channels == b.channels,
        "metrics: image geometry mismatch (" + std::to_string(a.width) + "x" +
            std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
            std::to_string(b.height) + ")");
}

// Planes to compare: three RGB planes for rgb_mean, one BT.601 luma plane.
std::vector<std::vector<double>> comparison_planes(const ImageBuffer& img, ChannelMode mode) {
  const size_t n = static_cast<size_t>(img.pixel_count());
  if (mode == ChannelMode::rgb_mean) {
    std::vector<std::vector<double>> planes(3, std::vector<double>(n));
    for (int64_t c = 0; c < 3; ++c) {
      for (size_t i = 0; i < n; ++i) planes[static_cast<size_t>(c)][i] =
          img.values[static_cast<size_t>(c) * n + i];
    }
    return planes;
  }
  std::vector<std::vector<double>> planes(1, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i) {
    planes[0][i] = 0.299 * img.values[i] + 0.587 * img.values[n + i] +
                   0.114 * img.values[2 * n + i];
  }
  return planes;
}

std::vector<double> gaussian_window(int window, double sigma) {
  std::vector<double> w(static_cast<size_t>(window) * static_cast<size_t>(window));
  const double half = (window - 1) / 2.0;
  double total = 0.0;
  for (int y = 0; y < window; ++y) {
    for (int x = 0; x < window; ++x) {
      const double dy = y - half;
      const double dx = x - half;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(y * window + x)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak, ChannelMode mode) {
  check_same_geometry(a, b);
  check(peak > 0.0, "metrics: peak must be positive");
  const auto pa = comparison_planes(a, mode);
  const auto pb = comparison_planes(b, mode);
  double sq = 0.0;
  size_t count = 0;
  for (size_t p = 0; p < pa.size(); ++p) {
    for (size_t i = 0; i < pa[p].size(); ++i) {
      const double d = pa[p][i] - pb[p][i];
      sq += d * d;
    }
    count += pa[p].size();
  }
  const double mse = sq / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, int window, double sigma,
            ChannelMode mode) {
  check_same_geometry(a, b);
  check(window >= 2, "metrics: ssim window must be at least 2");
  check(sigma > 0.0, "metrics: ssim sigma must be positive");
  check(a.width >= window && a.height >= window,
        "metrics: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
            " is smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
            " ssim window");
  const double l = 1.0;
  const double c1 = (0.01 * l) * (0.01 * l);
  const double c2 = (0.03 * l) * (0.03 * l);
  const auto pa = comparison_planes(a, mode);
  const auto pb = comparison_planes(b, mode);
  const auto w = gaussian_window(window, sigma);
  const int64_t width = a.width;
  const int64_t out_h = a.height - window + 1;
  const int64_t out_w = a.width - window + 1;
  double total = 0.0;
  int64_t count = 0;
  for (size_t p = 0; p < pa.size(); ++p) {
    const std::vector<double>& xa = pa[p];
    const std::vector<double>& xb = pb[p];
    for (int64_t oy = 0; oy < out_h; ++oy) {
      for (int64_t ox = 0; ox < out_w; ++ox) {
        double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
        for (int ky = 0; ky < window; ++ky) {
          for (int kx = 0; kx < window; ++kx) {
            const double wv = w[static_cast<size_t>(ky * window + kx)];
            const double va = xa[static_cast<size_t>((oy + ky) * width + (ox + kx))];
            const double vb = xb[static_cast<size_t>((oy + ky) * width + (ox + kx))];
            mu_a += wv * va;
            mu_b += wv * vb;
            aa += wv * va * va;
            bb += wv * vb * vb;
            ab += wv * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

MetricReport evaluate_pair(const ImageBuffer& prediction, const ImageBuffer& reference,
                           ChannelMode mode) {
  MetricReport r;
  r.psnr_db = psnr(prediction, reference, 1.0, mode);
  r.ssim = ssim(prediction, reference, 11, 1.5, mode);
  r.channel_mode = mode;
  return r;
}

}  // namespace wfen
