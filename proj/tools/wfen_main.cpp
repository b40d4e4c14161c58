#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wfen/cli_ops.hpp"

namespace {

wfen::RunConfig config_or_defaults(const std::string& path) {
  if (path.empty()) return wfen::default_run_config();
  return wfen::load_run_config(path);
}

void tee_to_file(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavelet-domain face super-resolution toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string mode = "f32";
  std::string input_path;
  std::string checkpoint_path;
  std::string dir_path;
  std::string scope = "all";
  std::vector<std::string> variants;
  uint64_t seed = 0;
  bool seed_set = false;
  bool show_defaults = false;

  auto* dwt = app.add_subcommand("dwt", "decompose a P6 image into wavelet subbands");
  dwt->add_option("input", input_path, "input .ppm image")->required();
  dwt->add_option("--out", out_path, "output prefix (default: input path without extension)");

  auto* idwt = app.add_subcommand("idwt", "rebuild the image from a subband dump");
  idwt->add_option("prefix", input_path, "prefix passed to dwt")->required();
  idwt->add_option("--out", out_path, "output .ppm path (default: <prefix>_rec.ppm)");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--config", config_path, "run config JSON path (defaults when omitted)");
  train->add_option("--seed", seed, "override train.seed")->each([&](const std::string&) {
    seed_set = true;
  });
  train->add_option("--out", out_path, "override io.checkpoint");
  train->add_option("--mode", mode, "arithmetic: f32 or f64")->default_val("f32");

  auto* infer = app.add_subcommand("infer", "super-resolve one image with a checkpoint");
  infer->add_option("checkpoint", checkpoint_path, "checkpoint path")->required();
  infer->add_option("input", input_path, "input .ppm image")->required();
  infer->add_option("--out", out_path, "output .ppm path")->required();
  infer->add_option("--mode", mode, "arithmetic: f32 or f64")->default_val("f32");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against a directory of images");
  eval->add_option("checkpoint", checkpoint_path, "checkpoint path")->required();
  eval->add_option("dir", dir_path, "directory of ground-truth .ppm images")->required();
  eval->add_option("--mode", mode, "arithmetic: f32 or f64")->default_val("f32");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "verify analytic gradients against finite differences "
                                      "(always 64-bit)");
  gradcheck->add_option("scope", scope,
                        "all, conv, norm, residual, ffn, rsa, gsa, wfd, wfu, or model");

  auto* ablate = app.add_subcommand("ablate-downsample",
                                    "train each downsampling variant under one seed and compare");
  ablate->add_option("--config", config_path, "run config JSON path (defaults when omitted)");
  ablate->add_option("--variant", variants, "restrict to wfd, stride, avgpool, or bicubic");
  ablate->add_option("--seed", seed, "override train.seed")->each([&](const std::string&) {
    seed_set = true;
  });
  ablate->add_option("--out", out_path, "also write the report to this file");

  auto* config = app.add_subcommand("config", "print or validate run configs");
  config->add_flag("--defaults", show_defaults, "print the default run config as JSON");
  config->add_option("--config", config_path, "validate this config file and echo it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (dwt->parsed()) {
      std::string prefix = out_path;
      if (prefix.empty()) {
        prefix = input_path;
        const auto dot = prefix.rfind('.');
        if (dot != std::string::npos && dot > prefix.rfind('/') + 1) prefix = prefix.substr(0, dot);
      }
      wfen::cmd_dwt(input_path, prefix, std::cout);
    } else if (idwt->parsed()) {
      const std::string out = out_path.empty() ? input_path + "_rec.ppm" : out_path;
      wfen::cmd_idwt(input_path, out, std::cout);
    } else if (train->parsed()) {
      wfen::RunConfig rc = config_or_defaults(config_path);
      if (seed_set) rc.train.seed = seed;
      if (!out_path.empty()) rc.io.checkpoint = out_path;
      wfen::cmd_train(rc, mode, std::cout);
    } else if (infer->parsed()) {
      wfen::cmd_infer(checkpoint_path, input_path, out_path, mode, std::cout);
    } else if (eval->parsed()) {
      wfen::cmd_eval(checkpoint_path, dir_path, mode, std::cout);
    } else if (gradcheck->parsed()) {
      if (!wfen::cmd_gradcheck(scope, std::cout)) return 1;
    } else if (ablate->parsed()) {
      wfen::RunConfig rc = config_or_defaults(config_path);
      if (seed_set) rc.train.seed = seed;
      std::ostringstream report;
      wfen::cmd_ablate(rc, variants, report);
      std::cout << report.str();
      tee_to_file(out_path, report.str());
    } else if (config->parsed()) {
      if (show_defaults) {
        wfen::cmd_config_defaults(std::cout);
      } else if (!config_path.empty()) {
        wfen::RunConfig rc = wfen::load_run_config(config_path);
        std::cout << wfen::serialize_run_config(rc);
      } else {
        std::cerr << "config: pass --defaults or --config <path>\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
