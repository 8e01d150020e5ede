#include "edgeshield/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace edgeshield {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Image8 decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ImageIoError(name + ": " + image.message);
  }
  const auto native = image.format;
  if ((native & (PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR)) != 0) {
    png_image_free(&image);
    throw ImageIoError(name + ": only 8-bit gray or RGB PNG images are supported");
  }
  const bool color = (native & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out{image.width, image.height, color ? 3u : 1u, {}};
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw ImageIoError(name + ": " + message);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Image8& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw ImageIoError(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw ImageIoError(std::string("png encode: ") + image.message);
  }
  bytes.resize(size);
  return bytes;
}

void check_image(const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ImageIoError("images must have 1 or 3 channels");
  }
  if (image.width == 0 || image.height == 0 ||
      image.pixels.size() != image.width * image.height * image.channels) {
    throw ImageIoError("image buffer does not match its dimensions");
  }
}

}  // namespace

Image8 decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t value = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw ImageIoError("pgm header value too large");
    }
    if (digits == 0) throw ImageIoError("malformed pgm header");
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ImageIoError("not a binary PGM (P5) file");
  }
  pos = 2;
  const std::size_t width = read_int();
  const std::size_t height = read_int();
  const std::size_t maxval = read_int();
  if (width == 0 || height == 0) throw ImageIoError("pgm has zero extent");
  if (maxval == 0 || maxval > 255) throw ImageIoError("only 8-bit PGM is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ImageIoError("malformed pgm header");
  ++pos;
  if (bytes.size() - pos < width * height) throw ImageIoError("pgm pixel data truncated");
  Image8 out{width, height, 1, std::vector<std::uint8_t>(bytes.begin() + pos,
                                                          bytes.begin() + pos + width * height)};
  if (maxval != 255) {
    for (auto& p : out.pixels) {
      p = static_cast<std::uint8_t>(std::min<std::size_t>(255, (p * 255 + maxval / 2) / maxval));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const Image8& image) {
  check_image(image);
  if (image.channels != 1) throw ImageIoError("PGM output requires a single channel");
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  return bytes;
}

Image8 read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin())) {
    return decode_png(bytes, path.string());
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  throw ImageIoError(path.string() + ": unrecognized image format");
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  check_image(image);
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    atomic_write(path, encode_png(image));
  } else if (ext == ".pgm") {
    atomic_write(path, encode_pgm(image));
  } else {
    throw ImageIoError("unsupported output extension '" + ext + "' (use .png or .pgm)");
  }
}

std::vector<float> to_planar_unit(const Image8& image) {
  const std::size_t plane = image.width * image.height;
  std::vector<float> out(plane * image.channels);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      out[c * plane + i] = static_cast<float>(image.pixels[i * image.channels + c]) / 255.0f;
    }
  }
  return out;
}

Image8 from_planar_unit(std::span<const float> chw, ImageShape shape) {
  const std::size_t plane = shape.width * shape.height;
  Image8 out{shape.width, shape.height, shape.channels,
             std::vector<std::uint8_t>(plane * shape.channels)};
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < shape.channels; ++c) {
      const double v = std::floor(std::clamp<double>(chw[c * plane + i], 0.0, 1.0) * 255.0 + 0.5);
      out.pixels[i * shape.channels + c] = static_cast<std::uint8_t>(v);
    }
  }
  return out;
}

void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ImageIoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ImageIoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void atomic_write(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace edgeshield
