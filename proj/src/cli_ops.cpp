#include "wfen/cli_ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "wfen/checkpoint.hpp"
#include "wfen/gradcheck.hpp"
#include "wfen/image.hpp"
#include "wfen/metrics.hpp"
#include "wfen/model.hpp"
#include "wfen/ops.hpp"
#include "wfen/synth.hpp"
#include "wfen/train.hpp"
#include "wfen/wavelet.hpp"

namespace wfen {

namespace {

// Runs fn<T>() with T selected by the --mode string.
template <typename Fn>
void dispatch_mode(const std::string& mode, Fn&& fn) {
  if (mode == "f32") {
    fn.template operator()<float>();
  } else if (mode == "f64") {
    fn.template operator()<double>();
  } else {
    throw std::invalid_argument("mode: expected 'f32' or 'f64', got '" + mode + "'");
  }
}

// Image pixels as raw byte values 0..255; integer-valued floats keep the
// wavelet round trip exact.
Tensor<float> byte_tensor(const ImageBuffer& img) {
  Tensor<float> t({1, img.channels, img.height, img.width});
  for (int64_t i = 0; i < t.numel(); ++i) {
    t.set(i, static_cast<float>(std::lround(img.values[static_cast<size_t>(i)] * 255.0)));
  }
  return t;
}

ImageBuffer image_from_unit_values(const Tensor<float>& t) {
  return tensor_to_image<float>(t);
}

std::vector<std::string> list_ppm_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw std::invalid_argument("eval: '" + dir + "' is not a directory");
  }
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") {
      files.push_back(e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Training-sample provider for either data source. Directory sources cycle
// through the sorted .ppm files and override the configured dataset size.
template <typename T>
std::function<Tensor<T>(int64_t)> make_provider(const RunConfig& rc, int64_t& dataset_size_out) {
  const int64_t size = rc.model.input_size;
  if (rc.train.source == DataSource::synthetic) {
    dataset_size_out = rc.train.dataset_size;
    const uint64_t seed = rc.train.seed;
    return [seed, size](int64_t index) {
      return image_to_tensor<T>(synth_sample(seed, static_cast<uint64_t>(index), size));
    };
  }
  auto files = list_ppm_files(rc.io.data_dir);
  if (files.empty()) {
    throw std::invalid_argument("train: no .ppm files in data_dir '" + rc.io.data_dir + "'");
  }
  dataset_size_out = static_cast<int64_t>(files.size());
  return [files, size](int64_t index) {
    const auto& path = files[static_cast<size_t>(index) % files.size()];
    ImageBuffer img = ppm_read(path);
    if (img.width != size || img.height != size) {
      throw std::invalid_argument("train: '" + path + "' is " + std::to_string(img.width) + "x" +
                                  std::to_string(img.height) + ", expected " +
                                  std::to_string(size) + "x" + std::to_string(size));
    }
    return image_to_tensor<T>(img);
  };
}

struct MetricMeans {
  double psnr = 0.0;
  double ssim = 0.0;
  int64_t count = 0;

  void add(const MetricReport& r) {
    psnr += r.psnr_db;
    ssim += r.ssim;
    ++count;
  }
};

std::string hex_u64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

BandPaths band_paths(const std::string& prefix) {
  return {prefix + "_ll.ppm", prefix + "_lh.ppm", prefix + "_hl.ppm", prefix + "_hh.ppm",
          prefix + "_bands.ckpt"};
}

void cmd_dwt(const std::string& input_ppm, const std::string& out_prefix, std::ostream& out) {
  ImageBuffer img = ppm_read(input_ppm);
  Tensor<float> x = byte_tensor(img);
  SubbandSet<float> s = dwt2_haar(x);
  const BandPaths paths = band_paths(out_prefix);

  // Low band spans [0, 4*255]; dividing by 4 restores the display range.
  {
    Tensor<float> disp = s.ll.clone();
    for (int64_t i = 0; i < disp.numel(); ++i) disp.set(i, disp.at(i) / (4.0f * 255.0f));
    ppm_write(image_from_unit_values(disp), paths.ll);
  }
  // High bands span [-2*255, 2*255]; map to a zero-centered gray encoding.
  const Tensor<float>* high[3] = {&s.lh, &s.hl, &s.hh};
  const std::string high_paths[3] = {paths.lh, paths.hl, paths.hh};
  for (int k = 0; k < 3; ++k) {
    Tensor<float> disp = high[k]->clone();
    for (int64_t i = 0; i < disp.numel(); ++i) {
      disp.set(i, disp.at(i) / 255.0f / 8.0f + 0.5f);
    }
    ppm_write(image_from_unit_values(disp), high_paths[k]);
  }

  // Lossless dump alongside the display images; cmd_idwt consumes this.
  CheckpointData raw;
  raw.config_text = "{\"kind\":\"dwt-bands\",\"width\":" + std::to_string(img.width) +
                    ",\"height\":" + std::to_string(img.height) + "}";
  const char* names[4] = {"ll", "lh", "hl", "hh"};
  const Tensor<float>* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
  for (int k = 0; k < 4; ++k) {
    CheckpointEntry e;
    e.name = names[k];
    e.shape = bands[k]->shape();
    e.values.resize(static_cast<size_t>(bands[k]->numel()));
    std::memcpy(e.values.data(), bands[k]->cdata(), e.values.size() * sizeof(float));
    raw.entries.push_back(std::move(e));
  }
  checkpoint_save(paths.raw, raw);

  out << "wrote " << paths.ll << "\n"
      << "wrote " << paths.lh << "\n"
      << "wrote " << paths.hl << "\n"
      << "wrote " << paths.hh << "\n"
      << "wrote " << paths.raw << "\n";
}

void cmd_idwt(const std::string& prefix, const std::string& out_ppm, std::ostream& out) {
  const BandPaths paths = band_paths(prefix);
  CheckpointData raw;
  try {
    raw = checkpoint_load(paths.raw);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("idwt: missing band file: " + std::string(e.what()));
  }
  const char* names[4] = {"ll", "lh", "hl", "hh"};
  Tensor<float> bands[4];
  for (int k = 0; k < 4; ++k) {
    bool found = false;
    for (const auto& e : raw.entries) {
      if (e.name == names[k]) {
        Tensor<float> t(e.shape);
        std::memcpy(t.data(), e.values.data(), e.values.size() * sizeof(float));
        bands[k] = t;
        found = true;
        break;
      }
    }
    if (!found) {
      throw std::invalid_argument("idwt: band '" + std::string(names[k]) + "' missing from '" +
                                  paths.raw + "'");
    }
  }
  Tensor<float> x = idwt2_haar(bands[0], bands[1], bands[2], bands[3]);
  ImageBuffer img(x.extent(3), x.extent(2));
  for (int64_t i = 0; i < x.numel(); ++i) {
    img.values[static_cast<size_t>(i)] = static_cast<double>(x.at(i)) / 255.0;
  }
  ppm_write(img, out_ppm);
  out << "wrote " << out_ppm << "\n";
}

void cmd_train(const RunConfig& rc, const std::string& mode, std::ostream& out) {
  const std::string echo = serialize_run_config(rc);
  dispatch_mode(mode, [&]<typename T>() {
    RunConfig effective = rc;
    int64_t dataset_size = 0;
    auto provider = make_provider<T>(effective, dataset_size);
    effective.train.dataset_size = dataset_size;

    WfenModel<T> model(effective.model, effective.train.seed);
    std::ostringstream log;
    TrainReport report = train_loop<T>(model, effective.train, provider, &log);

    out << log.str();
    out << "initial loss " << report.initial_loss << "\n";
    out << "final loss " << report.final_loss << "\n";
    out << "batch hash " << hex_u64(report.batch_hash) << "\n";
    out << "wall " << report.wall_seconds << " s\n";

    if (!effective.io.report.empty()) {
      std::ofstream rep(effective.io.report);
      if (!rep) throw std::runtime_error("train: cannot write report '" + effective.io.report + "'");
      rep << log.str();
      rep << "initial loss " << report.initial_loss << "\n";
      rep << "final loss " << report.final_loss << "\n";
      rep << "batch hash " << hex_u64(report.batch_hash) << "\n";
      rep << "wall " << report.wall_seconds << " s\n";
      out << "wrote report " << effective.io.report << "\n";
    }

    CheckpointData data = checkpoint_from_store(model.params, echo);
    checkpoint_save(effective.io.checkpoint, data);
    out << "wrote checkpoint " << effective.io.checkpoint << "\n";
  });
}

void cmd_infer(const std::string& checkpoint_path, const std::string& input_ppm,
               const std::string& output_ppm, const std::string& mode, std::ostream& out) {
  CheckpointData data = checkpoint_load(checkpoint_path);
  RunConfig rc = parse_run_config(data.config_text);
  ImageBuffer img = ppm_read(input_ppm);

  dispatch_mode(mode, [&]<typename T>() {
    WfenModel<T> model(rc.model, 0);
    checkpoint_apply(data, model.params);

    Tensor<T> x = image_to_tensor<T>(img);
    const int64_t target = rc.model.input_size;
    if (img.width * 8 == target && img.height * 8 == target) {
      x = bicubic_resize(x, target, target);
      out << "pre-upsampled " << img.width << "x" << img.height << " input to " << target << "x"
          << target << "\n";
    }
    Tensor<T> y = model.forward(x);
    ppm_write(tensor_to_image<T>(y), output_ppm);
    out << "wrote " << output_ppm << "\n";
  });
}

void cmd_eval(const std::string& checkpoint_path, const std::string& dir, const std::string& mode,
              std::ostream& out) {
  CheckpointData data = checkpoint_load(checkpoint_path);
  RunConfig rc = parse_run_config(data.config_text);
  auto files = list_ppm_files(dir);
  if (files.empty()) throw std::invalid_argument("eval: no .ppm files in '" + dir + "'");

  dispatch_mode(mode, [&]<typename T>() {
    WfenModel<T> model(rc.model, 0);
    checkpoint_apply(data, model.params);

    MetricMeans means;
    const auto flags = out.flags();
    out << std::fixed << std::setprecision(4);
    for (const auto& path : files) {
      ImageBuffer hr_img = ppm_read(path);
      Tensor<T> hr = image_to_tensor<T>(hr_img);
      auto pair = make_training_pair(hr, rc.train.sr_factor);
      Tensor<T> y = model.forward(pair.first);
      MetricReport rep = evaluate_pair(tensor_to_image<T>(y), hr_img, rc.eval_channels);
      means.add(rep);
      out << std::filesystem::path(path).filename().string() << " psnr " << rep.psnr_db
          << " ssim " << rep.ssim << "\n";
    }
    out << "psnr " << means.psnr / static_cast<double>(means.count) << " ssim "
        << means.ssim / static_cast<double>(means.count) << "\n";
    out.flags(flags);
  });
}

namespace {

using P64 = std::vector<std::pair<std::string, Tensor<double>>>;

Tensor<double> random_signal(uint64_t seed, const Shape& shape, double lo, double hi) {
  Rng rng(seed);
  Tensor<double> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

P64 store_params(ParameterStore<double>& store) {
  P64 out;
  for (auto& e : store.entries()) out.push_back({e.name, e.tensor});
  return out;
}

// Floored relative error: small layers are fully probed and every coordinate
// must satisfy |analytic - numeric| / (1e-3 + max(|a|, |n|)) below threshold.
GradRow layer_row(const std::string& name, const std::function<Tensor<double>(Graph<double>&)>& f,
                  const P64& params, double threshold) {
  GradCheckOptions opt;
  opt.eps = 1e-5;
  opt.rtol = 1.0;
  opt.atol = 1e-3;
  opt.max_probes_per_param = 0;
  GradCheckResult res = grad_check<double>(f, params, opt);
  GradRow row;
  row.name = name;
  row.reported = res.max_err_ratio;
  row.threshold = threshold;
  row.passed = res.max_err_ratio < threshold;
  row.probes = res.probes;
  return row;
}

GradRow model_row() {
  WfenConfig cfg = WfenConfig::tiny();
  WfenModel<double> model(cfg, 71);
  // Halving every multi-element parameter tames the randomly-initialized
  // activation scale so the finite differences stay well conditioned; the
  // analytic/numeric comparison itself is unaffected by where it runs.
  for (auto& e : model.params.entries()) {
    if (e.tensor.numel() == 1) continue;
    double* d = e.tensor.data();
    for (int64_t i = 0; i < e.tensor.numel(); ++i) d[i] *= 0.5;
  }
  Tensor<double> x = random_signal(72, {1, 3, 16, 16}, 0.0, 1.0);
  auto loss_fn = [&](Graph<double>&) {
    Tensor<double> y = model.forward(x);
    return mean_all(mul(y, y));
  };
  P64 params = store_params(model.params);
  GradCheckOptions opt;
  opt.eps = 1e-7;
  opt.rtol = 1e-4;
  opt.atol = 1e-7;
  opt.max_probes_per_param = 2;
  GradCheckResult res = grad_check<double>(loss_fn, params, opt);
  GradRow row;
  row.name = "model";
  row.reported = res.vector_rel_err();
  row.threshold = 1e-4;
  row.passed = row.reported < row.threshold;
  row.probes = res.probes;
  return row;
}

}  // namespace

std::vector<GradRow> gradcheck_rows(const std::string& scope) {
  const double layer_tol = 1e-5;
  std::vector<GradRow> rows;
  auto want = [&scope](const char* name) { return scope == "all" || scope == name; };

  if (want("conv")) {
    ParameterStore<double> store(301);
    Rng rng(301);
    Conv2d<double> conv(store, "conv", 3, 4, 3, 1, 1, 1, rng);
    Tensor<double> x = random_signal(302, {1, 3, 6, 6}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("conv",
                             [&](Graph<double>&) {
                               Tensor<double> y = conv.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("norm")) {
    ParameterStore<double> store(311);
    LayerNormChannel<double> norm(store, "norm", 5);
    Tensor<double> x = random_signal(312, {1, 5, 4, 4}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("norm",
                             [&](Graph<double>&) {
                               Tensor<double> y = norm.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("residual")) {
    ParameterStore<double> store(321);
    Rng rng(321);
    ResidualBlock<double> block(store, "res", 3, 5, rng);
    Tensor<double> x = random_signal(322, {1, 3, 6, 6}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("residual",
                             [&](Graph<double>&) {
                               Tensor<double> y = block.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("ffn")) {
    ParameterStore<double> store(331);
    Rng rng(331);
    FeedForward<double> ffn(store, "ffn", 6, rng);
    Tensor<double> x = random_signal(332, {1, 6, 8, 8}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("ffn",
                             [&](Graph<double>&) {
                               Tensor<double> y = ffn.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("rsa")) {
    ParameterStore<double> store(341);
    Rng rng(341);
    RsaLayer<double> rsa(store, "rsa", 6, 4, true, rng);
    Tensor<double> x = random_signal(342, {1, 6, 8, 8}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("rsa",
                             [&](Graph<double>&) {
                               Tensor<double> y = rsa.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("gsa")) {
    ParameterStore<double> store(351);
    Rng rng(351);
    GsaLayer<double> gsa(store, "gsa", 6, 2, rng, true);
    Tensor<double> x = random_signal(352, {1, 6, 8, 8}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("gsa",
                             [&](Graph<double>&) {
                               Tensor<double> y = gsa.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("wfd")) {
    ParameterStore<double> store(361);
    Rng rng(361);
    WfdLayer<double> wfd(store, "wfd", 3, 5, 4, 1, true, rng);
    Tensor<double> x = random_signal(362, {1, 3, 8, 8}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"x", x});
    rows.push_back(layer_row("wfd",
                             [&](Graph<double>&) {
                               Tensor<double> y = wfd.forward(x);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("wfu")) {
    ParameterStore<double> store(371);
    Rng rng(371);
    WfuLayer<double> wfu(store, "wfu", 3, rng);
    Tensor<double> f_enc = random_signal(372, {1, 3, 8, 8}, -1.0, 1.0);
    Tensor<double> f_dec = random_signal(373, {1, 3, 4, 4}, -1.0, 1.0);
    P64 params = store_params(store);
    params.push_back({"f_enc", f_enc});
    params.push_back({"f_dec", f_dec});
    rows.push_back(layer_row("wfu",
                             [&](Graph<double>&) {
                               Tensor<double> y = wfu.forward(f_enc, f_dec);
                               return mean_all(mul(y, y));
                             },
                             params, layer_tol));
  }
  if (want("model")) {
    rows.push_back(model_row());
  }
  if (rows.empty()) {
    throw std::invalid_argument(
        "gradcheck: unknown scope '" + scope +
        "'; expected all, conv, norm, residual, ffn, rsa, gsa, wfd, wfu, or model");
  }
  return rows;
}

bool cmd_gradcheck(const std::string& scope, std::ostream& out) {
  auto rows = gradcheck_rows(scope);
  bool all_passed = true;
  out << "layer rows: max relative error over every coordinate "
      << "(denominator floored at 1e-3); model row: whole-gradient relative error\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(10) << row.name << " " << std::scientific
        << std::setprecision(3) << row.reported << " < " << row.threshold << " probes "
        << std::defaultfloat << row.probes << " " << (row.passed ? "pass" : "FAIL") << "\n";
    all_passed = all_passed && row.passed;
  }
  out << (all_passed ? "all rows passed" : "FAILURES present") << "\n";
  return all_passed;
}

void cmd_ablate(const RunConfig& rc, const std::vector<std::string>& variants, std::ostream& out) {
  std::vector<DownsampleKind> kinds;
  if (variants.empty()) {
    kinds = {DownsampleKind::wfd, DownsampleKind::stride, DownsampleKind::avgpool,
             DownsampleKind::bicubic};
  } else {
    for (const auto& v : variants) kinds.push_back(parse_downsample(v));
  }

  struct VariantResult {
    std::string name;
    double final_loss = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    uint64_t batch_hash = 0;
    double wall = 0.0;
  };
  std::vector<VariantResult> results;

  const int64_t holdout_count = 4;
  const int64_t size = rc.model.input_size;

  for (DownsampleKind kind : kinds) {
    RunConfig v = rc;
    v.model.downsample = kind;
    int64_t dataset_size = 0;
    auto provider = make_provider<float>(v, dataset_size);
    v.train.dataset_size = dataset_size;

    WfenModel<float> model(v.model, v.train.seed);
    std::ostringstream sink;
    TrainReport report = train_loop<float>(model, v.train, provider, &sink);

    // Held-out probe set: synthetic indices far above the training range.
    MetricMeans means;
    for (int64_t i = 0; i < holdout_count; ++i) {
      ImageBuffer hr_img = synth_sample(v.train.seed, static_cast<uint64_t>(1000 + i), size);
      Tensor<float> hr = image_to_tensor<float>(hr_img);
      auto pair = make_training_pair(hr, v.train.sr_factor);
      Tensor<float> y = model.forward(pair.first);
      means.add(evaluate_pair(tensor_to_image<float>(y), hr_img, rc.eval_channels));
    }

    VariantResult r;
    r.name = downsample_name(kind);
    r.final_loss = report.final_loss;
    r.psnr = means.psnr / static_cast<double>(means.count);
    r.ssim = means.ssim / static_cast<double>(means.count);
    r.batch_hash = report.batch_hash;
    r.wall = report.wall_seconds;
    results.push_back(r);
  }

  const auto flags = out.flags();
  out << std::fixed << std::setprecision(4);
  for (const auto& r : results) {
    out << "variant " << std::left << std::setw(8) << r.name << " psnr " << r.psnr << " ssim "
        << r.ssim << " final_loss " << r.final_loss << " batch_hash " << hex_u64(r.batch_hash)
        << " wall " << std::setprecision(1) << r.wall << "s" << std::setprecision(4) << "\n";
  }
  out.flags(flags);

  bool hashes_match = true;
  for (const auto& r : results) hashes_match = hashes_match && r.batch_hash == results[0].batch_hash;
  out << "data order identical across variants: " << (hashes_match ? "yes" : "NO") << "\n";

  // Aliasing micro-benchmark: average pooling annihilates the +-1
  // checkerboard while the subband path keeps it recoverable.
  {
    Tensor<float> cb({1, 1, 8, 8});
    for (int64_t i = 0; i < 8; ++i) {
      for (int64_t j = 0; j < 8; ++j) cb.set(i * 8 + j, ((i + j) % 2 == 0) ? 1.0f : -1.0f);
    }
    Tensor<float> pooled = avgpool2(cb);
    float pool_max = 0.0f;
    for (int64_t i = 0; i < pooled.numel(); ++i) {
      pool_max = std::max(pool_max, std::fabs(pooled.at(i)));
    }
    SubbandSet<float> s = dwt2_haar(cb);
    Tensor<float> rec = idwt2_haar(s);
    const bool exact =
        std::memcmp(rec.cdata(), cb.cdata(), sizeof(float) * static_cast<size_t>(cb.numel())) == 0;
    out << "checkerboard micro-benchmark: avgpool2 max |output| = " << pool_max
        << " (information destroyed); wavelet subbands reconstruct exactly: "
        << (exact ? "yes" : "NO") << "\n";
  }

  out << "desk-scale run; variant ordering is reported, not asserted\n";
  out << "reference (full-scale Helen x8): stride 26.22/0.7743, avgpool 26.26/0.7747, "
         "bicubic 26.21/0.7731, wfd 26.36/0.7795\n";
}

void cmd_config_defaults(std::ostream& out) { out << serialize_run_config(default_run_config()); }

}  // namespace wfen
