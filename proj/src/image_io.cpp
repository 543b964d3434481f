#include "lenssim/image_io.hpp"

#include <png.h>

#include <cmath>
#include <algorithm>
#include <sstream>
#include <vector>

#include "binary.hpp"

namespace lenssim {

namespace {

bool has_extension(const std::filesystem::path& path, const char* ext) {
  auto e = path.extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return e == ext;
}

Image load_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    fail(ErrorKind::io, "png " + path.string() + ": " + img.message);
  // Sixteen-bit sources are read as 16-bit linear gray, the rest as 8-bit gray.
  const bool wide = (img.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  img.format = wide ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  const auto height = img.height;
  const auto width = img.width;
  Image out(height, width);
  if (wide) {
    std::vector<png_uint_16> buffer(PNG_IMAGE_SIZE(img) / 2);
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr))
      fail(ErrorKind::io, "png " + path.string() + ": " + img.message);
    for (std::size_t i = 0; i < buffer.size(); ++i) out.data()[i] = buffer[i] / 65535.0;
  } else {
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr))
      fail(ErrorKind::io, "png " + path.string() + ": " + img.message);
    for (std::size_t i = 0; i < buffer.size(); ++i) out.data()[i] = buffer[i] / 255.0;
  }
  return out;
}

void save_png(const std::filesystem::path& path, const Image& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.cols());
  img.height = static_cast<png_uint_32>(image.rows());
  img.format = PNG_FORMAT_LINEAR_Y;
  std::vector<png_uint_16> buffer(static_cast<std::size_t>(image.size()));
  for (std::size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = static_cast<png_uint_16>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 65535.0));
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr))
    fail(ErrorKind::io, "png " + path.string() + ": " + img.message);
}

Image load_pgm(const std::filesystem::path& path) {
  const auto bytes = binary::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t.push_back(c);
        ++pos;
      }
    }
    return t;
  };
  require(token() == "P5", ErrorKind::io, "pgm: only binary P5 is supported");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    fail(ErrorKind::io, "pgm: malformed header");
  }
  require(width > 0 && height > 0 && maxval > 0 && maxval < 65536, ErrorKind::io,
          "pgm: invalid header values");
  ++pos;  // single whitespace after maxval
  const std::size_t sample = maxval > 255 ? 2 : 1;
  require(bytes.size() >= pos + sample * width * height, ErrorKind::truncated, "pgm: truncated");
  Image img(height, width);
  for (int i = 0; i < width * height; ++i) {
    const std::size_t at = pos + sample * i;
    const unsigned v = sample == 2 ? (bytes[at] << 8) | bytes[at + 1] : bytes[at];
    img.data()[i] = static_cast<double>(v) / (maxval > 255 ? 65535.0 : 255.0);
  }
  return img;
}

void save_pgm(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> out;
  std::ostringstream header;
  header << "P5\n" << image.cols() << ' ' << image.rows() << "\n65535\n";
  binary::put_bytes(out, header.str());
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const auto code = static_cast<unsigned>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<std::uint8_t>(code >> 8));
    out.push_back(static_cast<std::uint8_t>(code & 0xff));
  }
  binary::write_file(path, out);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  if (has_extension(path, ".pgm")) return load_pgm(path);
  return load_png(path);
}

void save_image(const std::filesystem::path& path, const Image& image) {
  require(image.size() > 0, ErrorKind::dimension, "cannot save an empty image");
  if (has_extension(path, ".pgm"))
    save_pgm(path, image);
  else
    save_png(path, image);
}

void write_raw_f32(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(image.size()) * 4);
  for (Eigen::Index i = 0; i < image.size(); ++i) binary::put_f32(out, static_cast<float>(image.data()[i]));
  binary::write_file(path, out);
}

Image read_raw_f32(const std::filesystem::path& path, int height, int width) {
  require(height >= 1 && width >= 1, ErrorKind::dimension, "raw plane size must be positive");
  const auto bytes = binary::read_file(path);
  const std::size_t expected = static_cast<std::size_t>(height) * width * 4;
  require(bytes.size() >= expected, ErrorKind::truncated, "raw plane shorter than " +
                                                               std::to_string(height) + "x" + std::to_string(width));
  require(bytes.size() == expected, ErrorKind::dimension, "raw plane larger than expected size");
  binary::Reader in(bytes);
  Image img(height, width);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = in.f32();
  return img;
}

}  // namespace lenssim
