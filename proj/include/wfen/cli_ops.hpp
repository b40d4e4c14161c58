#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "wfen/config.hpp"

namespace wfen {

// File names produced by cmd_dwt and consumed by cmd_idwt for a given prefix.
struct BandPaths {
  std::string ll, lh, hl, hh, raw;
};
BandPaths band_paths(const std::string& prefix);

// Decomposes a P6 image into four subband display images plus a lossless raw
// dump; cmd_idwt inverts the raw dump back to a byte-identical P6 file.
void cmd_dwt(const std::string& input_ppm, const std::string& out_prefix, std::ostream& out);
void cmd_idwt(const std::string& prefix, const std::string& out_ppm, std::ostream& out);

// Trains per the run config ("f32" or "f64" arithmetic), writes the checkpoint
// with the effective config echoed inside, and reports one line per interval.
void cmd_train(const RunConfig& rc, const std::string& mode, std::ostream& out);

// Restores a checkpoint and super-resolves one image. Inputs whose extents are
// exactly 1/8 of the configured size are bicubically upsampled first.
void cmd_infer(const std::string& checkpoint_path, const std::string& input_ppm,
               const std::string& output_ppm, const std::string& mode, std::ostream& out);

// Degrades every P6 image in a directory with the checkpoint's configured
// scale factor, restores it, and reports per-image and mean PSNR/SSIM.
void cmd_eval(const std::string& checkpoint_path, const std::string& dir, const std::string& mode,
              std::ostream& out);

// One gradient-verification table row; `reported` is the row's error measure
// and must stay below `threshold` for `passed`.
struct GradRow {
  std::string name;
  double reported = 0.0;
  double threshold = 0.0;
  bool passed = false;
  int64_t probes = 0;
};

// scope: "all" or one of conv|norm|residual|ffn|rsa|gsa|wfd|wfu|model.
std::vector<GradRow> gradcheck_rows(const std::string& scope);

// Prints the table; returns false if any row failed.
bool cmd_gradcheck(const std::string& scope, std::ostream& out);

// Trains the requested downsampling variants (all four when `variants` is
// empty) under one seed and data order, then reports per-variant metrics, the
// aliasing micro-benchmark, and the full-scale reference footer.
void cmd_ablate(const RunConfig& rc, const std::vector<std::string>& variants, std::ostream& out);

void cmd_config_defaults(std::ostream& out);

}  // namespace wfen
