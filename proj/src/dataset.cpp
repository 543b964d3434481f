#include "lenssim/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "lenssim/error.hpp"
#include "lenssim/image_io.hpp"
#include "lenssim/psf_io.hpp"

namespace lenssim {

namespace {

void require_size(ImageSize s, const char* what) {
  require(s.width > 0 && s.height > 0, ErrorKind::parameter, std::string(what) + " size must be positive");
}

/// Clamps a corner box to the unit square; nullopt when nothing is left.
std::optional<Annotation> normalized_from_corners(int cls, double x0, double y0, double x1, double y1) {
  x0 = std::clamp(x0, 0.0, 1.0), x1 = std::clamp(x1, 0.0, 1.0);
  y0 = std::clamp(y0, 0.0, 1.0), y1 = std::clamp(y1, 0.0, 1.0);
  if (!(x1 > x0) || !(y1 > y0)) return std::nullopt;
  return Annotation{cls, 0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, any = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      any = true;
    } else if (!quoted && std::isspace(static_cast<unsigned char>(c))) {
      if (any) out.push_back(cur);
      cur.clear();
      any = false;
    } else {
      cur.push_back(c);
      any = true;
    }
  }
  require(!quoted, ErrorKind::parameter, "unterminated quote in record");
  if (any) out.push_back(cur);
  return out;
}

std::map<std::string, std::string> parse_kv(const std::string& line) {
  std::map<std::string, std::string> kv;
  for (const auto& tok : split_tokens(line)) {
    const auto eq = tok.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::parameter, "malformed record field '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

std::string quote_if_needed(const std::string& s) {
  return s.find_first_of(" \t\"") == std::string::npos ? s : "\"" + s + "\"";
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(const std::string& s, const char* field) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && ptr == s.data() + s.size(), ErrorKind::parameter,
          std::string("invalid number for ") + field + ": '" + s + "'");
  return v;
}

template <typename Fn>
void for_each_label_line(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> toks;
    for (std::string t; fields >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    require(toks.size() == 5, ErrorKind::parameter,
            "label line " + std::to_string(lineno) + ": expected 5 fields");
    fn(parse_number<int>(toks[0], "class"), parse_number<double>(toks[1], "label"),
       parse_number<double>(toks[2], "label"), parse_number<double>(toks[3], "label"),
       parse_number<double>(toks[4], "label"));
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::pair<double, double> scale_factors(ImageSize from, ImageSize to) {
  require_size(from, "source");
  require_size(to, "target");
  return {static_cast<double>(to.width) / from.width, static_cast<double>(to.height) / from.height};
}

RescaledLabels rescale_annotations(const std::vector<Annotation>& boxes, ImageSize from, ImageSize to) {
  require_size(from, "source");
  require_size(to, "target");
  RescaledLabels out;
  for (const auto& b : boxes) {
    auto a = normalized_from_corners(b.class_id, b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w,
                                     b.cy + 0.5 * b.h);
    if (a && b.class_id >= 0) {
      // Boxes already inside the frame pass through bit-for-bit.
      if (b.cx - 0.5 * b.w >= 0.0 && b.cx + 0.5 * b.w <= 1.0 && b.cy - 0.5 * b.h >= 0.0 &&
          b.cy + 0.5 * b.h <= 1.0)
        a = b;
      out.boxes.push_back(*a);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

RescaledLabels rescale_annotations(const std::vector<AbsoluteBox>& boxes, ImageSize from, ImageSize to) {
  const auto [sx, sy] = scale_factors(from, to);
  RescaledLabels out;
  for (const auto& b : boxes) {
    const double x0 = b.x_min * sx / to.width, x1 = b.x_max * sx / to.width;
    const double y0 = b.y_min * sy / to.height, y1 = b.y_max * sy / to.height;
    auto a = normalized_from_corners(b.class_id, x0, y0, x1, y1);
    if (a && b.class_id >= 0)
      out.boxes.push_back(*a);
    else
      ++out.dropped;
  }
  return out;
}

std::vector<AbsoluteBox> to_absolute(const std::vector<Annotation>& boxes, ImageSize size) {
  require_size(size, "image");
  std::vector<AbsoluteBox> out;
  for (const auto& b : boxes)
    out.push_back({b.class_id, (b.cx - 0.5 * b.w) * size.width, (b.cy - 0.5 * b.h) * size.height,
                   (b.cx + 0.5 * b.w) * size.width, (b.cy + 0.5 * b.h) * size.height});
  return out;
}

std::vector<Annotation> parse_yolo_labels(const std::string& text) {
  std::vector<Annotation> out;
  for_each_label_line(text, [&](int c, double a, double b, double w, double h) { out.push_back({c, a, b, w, h}); });
  return out;
}

std::vector<AbsoluteBox> parse_xyxy_labels(const std::string& text) {
  std::vector<AbsoluteBox> out;
  for_each_label_line(text, [&](int c, double a, double b, double w, double h) { out.push_back({c, a, b, w, h}); });
  return out;
}

std::string format_yolo_labels(const std::vector<Annotation>& boxes) {
  std::string out;
  char buf[128];
  for (const auto& b : boxes) {
    std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy, b.w, b.h);
    out += buf;
  }
  return out;
}

MetricReport image_metrics(const Image& a, const Image& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::dimension,
          "metric inputs must have equal dimensions");
  require(a.size() > 0, ErrorKind::dimension, "metric inputs are empty");
  const double mse = (a - b).square().mean();
  return {mse, mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity()};
}

Image resize_bilinear(const Image& image, int height, int width) {
  require(image.size() > 0 && height >= 1 && width >= 1, ErrorKind::dimension, "invalid resize");
  if (image.rows() == height && image.cols() == width) return image;
  const auto sy = static_cast<double>(image.rows()) / height;
  const auto sx = static_cast<double>(image.cols()) / width;
  auto coord = [](int i, double scale, Eigen::Index n, Eigen::Index& i0, Eigen::Index& i1, double& t) {
    const double u = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<Eigen::Index>(std::floor(u));
    i1 = std::min<Eigen::Index>(i0 + 1, n - 1);
    t = u - static_cast<double>(i0);
  };
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    Eigen::Index y0, y1;
    double ty;
    coord(y, sy, image.rows(), y0, y1, ty);
    for (int x = 0; x < width; ++x) {
      Eigen::Index x0, x1;
      double tx;
      coord(x, sx, image.cols(), x0, x1, tx);
      const double top = image(y0, x0) + tx * (image(y0, x1) - image(y0, x0));
      const double bottom = image(y1, x0) + tx * (image(y1, x1) - image(y1, x0));
      out(y, x) = top + ty * (bottom - top);
    }
  }
  return out;
}

std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

std::vector<ManifestEntry> read_input_manifest(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::map<std::string, std::string> kv;
    try {
      kv = parse_kv(line);
    } catch (const Error& e) {
      fail(ErrorKind::parameter, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry entry;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return q.is_absolute() ? q : base / q;
    };
    const auto img = kv.find("image");
    require(img != kv.end(), ErrorKind::parameter,
            path.string() + ":" + std::to_string(lineno) + ": missing image=");
    entry.image = resolve(img->second);
    if (auto it = kv.find("labels"); it != kv.end()) entry.labels = resolve(it->second);
    if (auto it = kv.find("format"); it != kv.end()) {
      require(it->second == "yolo" || it->second == "xyxy", ErrorKind::parameter,
              path.string() + ":" + std::to_string(lineno) + ": format must be yolo or xyxy");
      entry.format = it->second == "xyxy" ? LabelFormat::xyxy : LabelFormat::yolo;
    }
    for (const auto& [k, v] : kv)
      require(k == "image" || k == "labels" || k == "format", ErrorKind::parameter,
              path.string() + ":" + std::to_string(lineno) + ": unknown field " + k);
    out.push_back(std::move(entry));
  }
  return out;
}

std::string format_record(const SampleRecord& r) {
  std::string line = "index=" + std::to_string(r.index) + " clean=" + quote_if_needed(r.clean_path) +
                     " degraded=" + quote_if_needed(r.degraded_path) +
                     " labels=" + quote_if_needed(r.annotation_path);
  if (!r.raw_path.empty()) line += " raw=" + quote_if_needed(r.raw_path);
  line += " q=" + format_double(r.q) + " q_step=" + format_double(r.q_step) +
          " sigma=" + format_double(r.sigma) + " seed=" + std::to_string(r.seed) +
          " psf_grid=" + r.psf_grid_id;
  return line;
}

SampleRecord parse_record(const std::string& line) {
  const auto kv = parse_kv(line);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::parameter, std::string("record missing ") + key);
    return it->second;
  };
  SampleRecord r;
  r.index = parse_number<std::size_t>(get("index"), "index");
  r.clean_path = get("clean");
  r.degraded_path = get("degraded");
  r.annotation_path = get("labels");
  if (auto it = kv.find("raw"); it != kv.end()) r.raw_path = it->second;
  r.q = parse_number<double>(get("q"), "q");
  r.q_step = parse_number<double>(get("q_step"), "q_step");
  r.sigma = parse_number<double>(get("sigma"), "sigma");
  r.seed = parse_number<std::uint64_t>(get("seed"), "seed");
  r.psf_grid_id = get("psf_grid");
  return r;
}

DatasetReport build_dataset(const std::vector<ManifestEntry>& inputs, const PsfGrid& grid,
                            const DegradationConfig& cfg, const DatasetOptions& options,
                            const std::filesystem::path& root) {
  cfg.validate();
  require_size(options.target, "target");
  require(options.target.width % cfg.patch_size == 0 && options.target.height % cfg.patch_size == 0,
          ErrorKind::parameter, "target size must be a multiple of patch_size");
  require(options.target.height / cfg.patch_size == grid.rows &&
              options.target.width / cfg.patch_size == grid.cols,
          ErrorKind::dimension, "PSF grid does not match the target patch lattice");

  namespace fs = std::filesystem;
  for (const char* dir : {"clean", "degraded", "labels", "manifests"}) fs::create_directories(root / dir);

  const std::string grid_id = psf_grid_id(grid);
  DatasetReport report;
  report.inputs = inputs.size();

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& entry = inputs[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06zu", i);
    try {
      const Image source = load_image(entry.image);
      const ImageSize from{static_cast<int>(source.cols()), static_cast<int>(source.rows())};
      const Image clean = resize_bilinear(source, options.target.height, options.target.width);

      RescaledLabels labels;
      if (entry.labels) {
        const std::string text = read_text(*entry.labels);
        labels = entry.format == LabelFormat::xyxy
                     ? rescale_annotations(parse_xyxy_labels(text), from, options.target)
                     : rescale_annotations(parse_yolo_labels(text), from, options.target);
      }

      DegradationConfig sample_cfg = cfg;
      sample_cfg.seed = sample_seed(options.master_seed, i);
      const Image raw = apply_noise(degrade_image(clean, grid, sample_cfg), sample_cfg);

      SampleRecord record;
      record.index = i;
      record.clean_path = "clean/" + std::string(stem) + ".png";
      record.degraded_path = "degraded/" + std::string(stem) + ".png";
      record.annotation_path = "labels/" + std::string(stem) + ".txt";
      if (options.write_raw) record.raw_path = "degraded/" + std::string(stem) + ".f32";
      record.q = cfg.q;
      record.q_step = cfg.q_step();
      record.sigma = cfg.sigma;
      record.seed = sample_cfg.seed;
      record.psf_grid_id = grid_id;

      save_image(root / record.clean_path, clean);
      save_image(root / record.degraded_path, raw);
      if (options.write_raw) write_raw_f32(root / record.raw_path, raw);
      write_text(root / record.annotation_path, format_yolo_labels(labels.boxes));
      report.dropped_boxes += labels.dropped;
      report.records.push_back(std::move(record));
    } catch (const Error& e) {
      report.skipped.emplace_back(i, e.what());
    }
  }

  std::string manifest;
  for (const auto& r : report.records) manifest += format_record(r) + "\n";
  write_text(root / "manifests" / "manifest.txt", manifest);

  require(inputs.empty() || !report.records.empty(), ErrorKind::build,
          "dataset build produced no samples (" + std::to_string(report.skipped.size()) + " skipped)");
  return report;
}

}  // namespace lenssim
