#pragma once

#include <cstdint>

#include "wfen/image.hpp"

namespace wfen {

// Deterministic procedural test image: a smooth elliptical gradient base,
// a few oriented sinusoidal texture patches, and two dark elliptical blobs.
// Pure function of (seed, index); all values land in [0, 1].
ImageBuffer synth_sample(uint64_t seed, uint64_t index, int64_t size);

}  // namespace wfen
