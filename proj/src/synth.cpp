#include "wfen/synth.hpp"

#include <cmath>

#include "wfen/rng.hpp"

namespace wfen {

namespace {

struct Blob {
  double cx, cy, rx, ry, depth;
};

double gauss2(double dx, double dy, double rx, double ry) {
  return std::exp(-(dx * dx / (rx * rx) + dy * dy / (ry * ry)));
}

}  // namespace

ImageBuffer synth_sample(uint64_t seed, uint64_t index, int64_t size) {
  check(size >= 8 && size % 8 == 0, "synth: size must be a positive multiple of 8");
  SplitMix64 rng(seed, index);
  const double s = static_cast<double>(size);

  // Smooth base: linear ramp plus one broad elliptical highlight.
  const double base = rng.uniform(0.25, 0.6);
  const double ramp_x = rng.uniform(-0.25, 0.25);
  const double ramp_y = rng.uniform(-0.25, 0.25);
  const double hi_cx = rng.uniform(0.3, 0.7) * s;
  const double hi_cy = rng.uniform(0.2, 0.6) * s;
  const double hi_rx = rng.uniform(0.35, 0.7) * s;
  const double hi_ry = rng.uniform(0.35, 0.7) * s;
  const double hi_amp = rng.uniform(0.15, 0.3);

  // Oriented sinusoidal texture patches (high-frequency content that a naive
  // downsampler aliases away).
  struct Patch {
    double cx, cy, r, freq, theta, phase, amp;
  } patches[3];
  for (auto& p : patches) {
    p.cx = rng.uniform(0.15, 0.85) * s;
    p.cy = rng.uniform(0.15, 0.85) * s;
    p.r = rng.uniform(0.12, 0.3) * s;
    p.freq = rng.uniform(0.2, 0.45);  // cycles per pixel
    p.theta = rng.uniform(0.0, 3.14159265358979323846);
    p.phase = rng.uniform(0.0, 6.28318530717958647692);
    p.amp = rng.uniform(0.1, 0.22);
  }

  // Two dark blobs.
  Blob blobs[2];
  const double eye_y = rng.uniform(0.3, 0.5) * s;
  blobs[0] = {rng.uniform(0.25, 0.4) * s, eye_y, rng.uniform(0.05, 0.1) * s,
              rng.uniform(0.04, 0.08) * s, rng.uniform(0.25, 0.45)};
  blobs[1] = {rng.uniform(0.6, 0.75) * s, eye_y + rng.uniform(-0.03, 0.03) * s,
              rng.uniform(0.05, 0.1) * s, rng.uniform(0.04, 0.08) * s, rng.uniform(0.25, 0.45)};

  // Gentle per-channel tint keeps channels correlated but distinct.
  const double tint[3] = {rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06),
                          rng.uniform(-0.06, 0.06)};

  ImageBuffer img(size, size);
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / s;
      const double fy = (static_cast<double>(y) + 0.5) / s;
      double v = base + ramp_x * (fx - 0.5) + ramp_y * (fy - 0.5);
      v += hi_amp * gauss2(static_cast<double>(x) - hi_cx, static_cast<double>(y) - hi_cy, hi_rx,
                           hi_ry);
      for (const auto& p : patches) {
        const double dx = static_cast<double>(x) - p.cx;
        const double dy = static_cast<double>(y) - p.cy;
        const double mask = gauss2(dx, dy, p.r, p.r);
        const double wave = std::sin(6.28318530717958647692 * p.freq *
                                         (dx * std::cos(p.theta) + dy * std::sin(p.theta)) +
                                     p.phase);
        v += p.amp * mask * wave;
      }
      for (const auto& b : blobs) {
        v -= b.depth * gauss2(static_cast<double>(x) - b.cx, static_cast<double>(y) - b.cy, b.rx,
                              b.ry);
      }
      for (int64_t c = 0; c < 3; ++c) {
        const double vc = v + tint[c] * (0.5 + 0.5 * std::sin(2.2 * fx + 1.7 * fy + c));
        img.set(c, y, x, std::min(1.0, std::max(0.0, vc)));
      }
    }
  }
  return img;
}

}  // namespace wfen
