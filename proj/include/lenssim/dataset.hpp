#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lenssim/degrade.hpp"
#include "lenssim/optics.hpp"
#include "lenssim/types.hpp"

namespace lenssim {

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Detection label with normalized center/size box.
struct Annotation {
  int class_id = 0;
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

/// Detection label with a corner box in pixels.
struct AbsoluteBox {
  int class_id = 0;
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

struct RescaledLabels {
  std::vector<Annotation> boxes;
  std::size_t dropped = 0;  // zero-area after clamping
};

/// (to_w / from_w, to_h / from_h).
std::pair<double, double> scale_factors(ImageSize from, ImageSize to);

/// Normalized boxes are size-invariant: clamped to [0, 1] and passed through.
RescaledLabels rescale_annotations(const std::vector<Annotation>& boxes, ImageSize from, ImageSize to);

/// Absolute boxes are scaled into the target frame, then normalized and clamped.
RescaledLabels rescale_annotations(const std::vector<AbsoluteBox>& boxes, ImageSize from, ImageSize to);

std::vector<AbsoluteBox> to_absolute(const std::vector<Annotation>& boxes, ImageSize size);

enum class LabelFormat { yolo, xyxy };

/// One "class a b c d" line per object; blank lines and '#' comments skipped.
std::vector<Annotation> parse_yolo_labels(const std::string& text);
std::vector<AbsoluteBox> parse_xyxy_labels(const std::string& text);
std::string format_yolo_labels(const std::vector<Annotation>& boxes);

struct MetricReport {
  double mse = 0.0;
  double psnr = 0.0;  // +inf for identical images
};

/// Mean squared error and PSNR against a unit peak.
MetricReport image_metrics(const Image& a, const Image& b);

/// Bilinear resize with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& image, int height, int width);

/// Per-sample seed: a pure 64-bit mix of (master seed, sample index).
std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index);

struct ManifestEntry {
  std::filesystem::path image;
  std::optional<std::filesystem::path> labels;
  LabelFormat format = LabelFormat::yolo;
};

/// key=value records, one per line: image=<path> [labels=<path>] [format=yolo|xyxy].
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_input_manifest(const std::filesystem::path& path);

struct SampleRecord {
  std::size_t index = 0;
  std::string clean_path;       // relative to the dataset root
  std::string degraded_path;
  std::string annotation_path;
  std::string raw_path;         // empty unless raw planes are written
  double q = 0.0;
  double q_step = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string psf_grid_id;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

std::string format_record(const SampleRecord& record);
SampleRecord parse_record(const std::string& line);

struct DatasetOptions {
  ImageSize target{640, 480};
  bool write_raw = false;
  std::uint64_t master_seed = 0;
};

struct DatasetReport {
  std::size_t inputs = 0;
  std::vector<SampleRecord> records;
  std::vector<std::pair<std::size_t, std::string>> skipped;  // (input index, reason)
  std::size_t dropped_boxes = 0;
};

/// Writes clean/, degraded/, labels/ and manifests/manifest.txt under `root`.
/// Unreadable inputs are skipped and reported; if every input fails the
/// build throws. cfg.seed is replaced by the per-sample seed.
DatasetReport build_dataset(const std::vector<ManifestEntry>& inputs, const PsfGrid& grid,
                            const DegradationConfig& cfg, const DatasetOptions& options,
                            const std::filesystem::path& root);

}  // namespace lenssim
