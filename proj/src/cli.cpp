#include "lenssim/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "lenssim/blurmap.hpp"
#include "lenssim/bridge.hpp"
#include "lenssim/bridge_io.hpp"
#include "lenssim/config.hpp"
#include "lenssim/dataset.hpp"
#include "lenssim/degrade.hpp"
#include "lenssim/image_io.hpp"
#include "lenssim/parallel.hpp"
#include "lenssim/psf_io.hpp"

namespace lenssim {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::string config;
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : parse_config(g.config);
  if (g.seed) c.degrade.seed = *g.seed;
  c.degrade.threads = resolve_threads(g.threads);
  return c;
}

PsfGrid build_grid(const PipelineConfig& c) {
  PsfGridOptions opt;
  opt.psf_size = c.optics.psf_size;
  opt.detector_pitch = c.optics.detector_pitch;
  opt.reference_wavelength_um = c.optics.reference_wavelength_um;
  opt.spectral_weights = c.optics.spectral_weights;
  opt.remove_piston_tilt = c.optics.remove_piston_tilt;
  opt.threads = c.degrade.threads;
  return build_psf_grid(c.optics.pupil, make_fields(c.optics), c.optics.rows, c.optics.cols,
                        c.optics.wavelengths_um, opt);
}

void save_plane(const fs::path& path, const Image& plane) {
  if (path.extension() == ".png" || path.extension() == ".pgm")
    save_image(path, plane);
  else
    write_raw_f32(path, plane);
}

void print_psnr(std::ostream& out, double psnr) {
  if (std::isinf(psnr))
    out << "psnr=inf\n";
  else
    out << "psnr=" << psnr << '\n';
}

}  // namespace

int run_pipeline(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Infrared single-lens imaging simulation toolkit", "lenssim"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (default: LENSSIM_THREADS, then logical cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Override the noise / master seed");
  app.add_option("--config", g.config, "Pipeline config (TOML)");
  app.add_flag("--quiet", g.quiet, "Suppress diagnostics");

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // psf
  std::string psf_out;
  auto* psf = sub("psf", "Build a field-dependent PSF grid");
  psf->add_option("--out", psf_out, "Grid file")->required();

  // degrade
  std::string deg_grid, deg_in, deg_out, deg_raw;
  std::optional<double> deg_q, deg_sigma;
  auto* degrade = sub("degrade", "Blur, quantize and add noise to one image");
  degrade->add_option("--psf-grid", deg_grid, "PSF grid file")->required();
  degrade->add_option("--in", deg_in, "Clean image (PNG or PGM)")->required();
  degrade->add_option("--out", deg_out, "Degraded image (16-bit PNG or PGM)")->required();
  degrade->add_option("--q", deg_q, "Quantization scale");
  degrade->add_option("--sigma", deg_sigma, "Noise standard deviation");
  degrade->add_option("--raw", deg_raw, "Also write a raw float32 plane");

  // blurmap
  std::string bm_grid, bm_out, bm_png;
  std::optional<int> bm_height, bm_width;
  auto* blurmap = sub("blurmap", "Blur-index map from a PSF grid");
  blurmap->add_option("--psf-grid", bm_grid, "PSF grid file")->required();
  blurmap->add_option("--height", bm_height, "Map height");
  blurmap->add_option("--width", bm_width, "Map width");
  blurmap->add_option("--out", bm_out, "Raw float32 map")->required();
  blurmap->add_option("--png", bm_png, "16-bit PNG preview");

  // gates
  std::string gt_map, gt_prefix;
  std::optional<int> gt_height, gt_width;
  auto* gates = sub("gates", "Gate maps from a blur-index map");
  gates->add_option("--blurmap", gt_map, "Raw float32 blur-index map")->required();
  gates->add_option("--height", gt_height, "Map height");
  gates->add_option("--width", gt_width, "Map width");
  gates->add_option("--out-prefix", gt_prefix, "Writes <prefix>small.f32, large.f32, laplacian.f32")->required();

  // bridge
  auto* bridge = sub("bridge", "Bridge block reference forward pass");
  bridge->require_subcommand(1);
  std::string br_features, br_weights, br_map, br_out, br_dump;
  auto* br_run = bridge->add_subcommand("run", "Run the forward pass on a feature dump");
  br_run->fallthrough();
  br_run->add_option("--features", br_features, "Input feature tensor")->required();
  br_run->add_option("--weights", br_weights, "Weight file (default: config bridge.weights)");
  br_run->add_option("--blurmap", br_map, "Raw float32 blur-index map (H x W)")->required();
  br_run->add_option("--out", br_out, "Output feature tensor")->required();
  br_run->add_option("--dump-dir", br_dump, "Directory for intermediate tensors");
  std::optional<int> bi_channels, bi_groups, bi_ratio, bi_kernel;
  bool bi_identity = false;
  std::string bi_out;
  auto* br_init = bridge->add_subcommand("init", "Write seeded random or identity weights");
  br_init->fallthrough();
  br_init->add_option("--channels", bi_channels, "Channels");
  br_init->add_option("--groups", bi_groups, "Small-path groups");
  br_init->add_option("--se-ratio", bi_ratio, "SE reduction ratio");
  br_init->add_option("--large-kernel", bi_kernel, "Depthwise kernel size");
  br_init->add_flag("--identity", bi_identity, "Identity weights instead of random");
  br_init->add_option("--out", bi_out, "Weight file")->required();

  // dataset
  std::string ds_manifest, ds_out, ds_grid;
  std::optional<double> ds_q, ds_sigma;
  auto* dataset = sub("dataset", "Build a paired clean/degraded dataset");
  dataset->add_option("--manifest", ds_manifest, "Input manifest");
  dataset->add_option("--out-dir", ds_out, "Dataset root");
  dataset->add_option("--psf-grid", ds_grid, "PSF grid file");
  dataset->add_option("--q", ds_q, "Quantization scale");
  dataset->add_option("--sigma", ds_sigma, "Noise standard deviation");

  // metrics
  std::string mt_a, mt_b;
  auto* metrics = sub("metrics", "MSE and PSNR between two images");
  metrics->add_option("--a", mt_a, "First image")->required();
  metrics->add_option("--b", mt_b, "Second image")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  auto note = [&](const std::string& msg) {
    if (!g.quiet) err << msg << '\n';
  };

  out.precision(12);
  try {
    PipelineConfig cfg = load_config(g);

    if (*psf) {
      const PsfGrid grid = build_grid(cfg);
      write_psf_grid(psf_out, grid);
      out << "grid_id=" << psf_grid_id(grid) << "\nrows=" << grid.rows << "\ncols=" << grid.cols
          << "\npsf_size=" << grid.psf_size() << "\npixel_pitch=" << grid.pixel_pitch() << '\n';
    } else if (*degrade) {
      if (deg_q) cfg.degrade.q = *deg_q;
      if (deg_sigma) cfg.degrade.sigma = *deg_sigma;
      cfg.degrade.validate();
      const PsfGrid grid = read_psf_grid(deg_grid);
      const Image clean = load_image(deg_in);
      const Image raw = apply_noise(degrade_image(clean, grid, cfg.degrade), cfg.degrade);
      save_image(deg_out, raw);
      if (!deg_raw.empty()) write_raw_f32(deg_raw, raw);
      out << "height=" << raw.rows() << "\nwidth=" << raw.cols() << "\nq=" << cfg.degrade.q
          << "\nq_step=" << cfg.degrade.q_step() << "\nsigma=" << cfg.degrade.sigma
          << "\nseed=" << cfg.degrade.seed << "\npsf_grid=" << psf_grid_id(grid) << '\n';
    } else if (*blurmap) {
      const PsfGrid grid = read_psf_grid(bm_grid);
      const int h = bm_height.value_or(cfg.blurmap.height);
      const int w = bm_width.value_or(cfg.blurmap.width);
      const Image k = build_blur_index_map(grid, h, w);
      write_raw_f32(bm_out, k);
      if (!bm_png.empty()) save_image(bm_png, k);
      out << "height=" << h << "\nwidth=" << w << "\nmin=" << k.minCoeff() << "\nmax=" << k.maxCoeff() << '\n';
    } else if (*gates) {
      const int h = gt_height.value_or(cfg.blurmap.height);
      const int w = gt_width.value_or(cfg.blurmap.width);
      const GateMaps maps = compute_gate_maps(read_raw_f32(gt_map, h, w), cfg.gates);
      save_plane(gt_prefix + "small.f32", maps.small);
      save_plane(gt_prefix + "large.f32", maps.large);
      save_plane(gt_prefix + "laplacian.f32", maps.laplacian);
      out << "small_mean=" << maps.small.mean() << "\nlarge_mean=" << maps.large.mean()
          << "\nlaplacian_mean=" << maps.laplacian.mean() << '\n';
    } else if (*bridge && *br_run) {
      const FeatureTensor<double> x = read_tensor(br_features);
      const std::string weights_path = br_weights.empty() ? cfg.bridge.weights : br_weights;
      require(!weights_path.empty(), ErrorKind::config, "bridge run needs --weights or bridge.weights");
      const BridgeWeights<double> weights = read_weights(weights_path);
      const Image k = read_raw_f32(br_map, static_cast<int>(x.dimension(2)), static_cast<int>(x.dimension(3)));
      const BridgeTrace<double> trace = bridge_forward_trace(x, k, cfg.gates, weights);
      write_tensor(br_out, trace.output);
      if (!br_dump.empty()) {
        fs::create_directories(br_dump);
        write_tensor(fs::path(br_dump) / "small.ftns", trace.branches.small);
        write_tensor(fs::path(br_dump) / "large.ftns", trace.branches.large);
        write_tensor(fs::path(br_dump) / "laplacian.ftns", trace.branches.laplacian);
        write_tensor(fs::path(br_dump) / "fused.ftns", trace.fused);
        write_tensor(fs::path(br_dump) / "excited.ftns", trace.excited);
      }
      out << "dims=" << x.dimension(0) << 'x' << x.dimension(1) << 'x' << x.dimension(2) << 'x'
          << x.dimension(3) << '\n';
    } else if (*bridge && *br_init) {
      const int channels = bi_channels.value_or(cfg.bridge.channels);
      const int groups = bi_groups.value_or(cfg.bridge.groups);
      const int ratio = bi_ratio.value_or(cfg.bridge.se_ratio);
      const int kernel = bi_kernel.value_or(cfg.bridge.large_kernel);
      const auto weights = bi_identity
                               ? BridgeWeights<double>::identity(channels, groups, ratio, kernel)
                               : BridgeWeights<double>::random(channels, cfg.degrade.seed, groups, ratio, kernel);
      write_weights(bi_out, weights);
      out << "channels=" << channels << "\ngroups=" << groups << "\nse_hidden="
          << BridgeWeights<double>::se_hidden(channels, ratio) << '\n';
    } else if (*dataset) {
      if (ds_q) cfg.degrade.q = *ds_q;
      if (ds_sigma) cfg.degrade.sigma = *ds_sigma;
      const std::string manifest = ds_manifest.empty() ? cfg.dataset.manifest : ds_manifest;
      const std::string root = ds_out.empty() ? cfg.dataset.output_dir : ds_out;
      const std::string grid_path = ds_grid.empty() ? cfg.dataset.psf_grid : ds_grid;
      require(!manifest.empty(), ErrorKind::config, "dataset needs --manifest or dataset.manifest");
      require(!root.empty(), ErrorKind::config, "dataset needs --out-dir or dataset.output_dir");
      const PsfGrid grid = grid_path.empty() ? build_grid(cfg) : read_psf_grid(grid_path);
      DatasetOptions opt;
      opt.target = {cfg.dataset.width, cfg.dataset.height};
      opt.write_raw = cfg.dataset.write_raw;
      opt.master_seed = cfg.degrade.seed;
      const auto inputs = read_input_manifest(manifest);
      if (inputs.empty()) note("warning: manifest lists no images");
      const DatasetReport report = build_dataset(inputs, grid, cfg.degrade, opt, root);
      for (const auto& [index, reason] : report.skipped)
        note("warning: skipped input " + std::to_string(index) + ": " + reason);
      if (report.dropped_boxes > 0) note("warning: dropped " + std::to_string(report.dropped_boxes) + " degenerate boxes");
      out << "inputs=" << report.inputs << "\nsamples=" << report.records.size()
          << "\nskipped=" << report.skipped.size() << "\ndropped_boxes=" << report.dropped_boxes
          << "\nmanifest=" << (fs::path(root) / "manifests" / "manifest.txt").string() << '\n';
    } else if (*metrics) {
      const MetricReport r = image_metrics(load_image(mt_a), load_image(mt_b));
      out << "mse=" << r.mse << '\n';
      print_psnr(out, r.psnr);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_pipeline(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_pipeline(args, std::cout, std::cerr);
}

}  // namespace lenssim
