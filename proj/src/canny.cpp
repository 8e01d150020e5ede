#include "edgeshield/canny.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace edgeshield {

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1.0f));
}

EdgeMap EdgeMap::replicated(std::size_t out_channels) const {
  EdgeMap out{width, height, out_channels, {}};
  const std::size_t plane = width * height;
  out.values.reserve(plane * out_channels);
  for (std::size_t c = 0; c < out_channels; ++c) {
    out.values.insert(out.values.end(), values.begin(), values.begin() + plane);
  }
  return out;
}

Tensor EdgeMap::to_tensor() const { return Tensor(Shape{1, channels, height, width}, values); }

GrayImage8 to_gray8(std::span<const float> chw, ImageShape shape) {
  if (shape.channels != 1 && shape.channels != 3) {
    throw std::invalid_argument("to_gray8 supports 1 or 3 channels, got " +
                                std::to_string(shape.channels));
  }
  if (chw.size() != shape.numel()) throw ShapeError("to_gray8 buffer does not match " + shape.str());
  GrayImage8 out{shape.width, shape.height, std::vector<std::uint8_t>(shape.width * shape.height)};
  const std::size_t plane = shape.width * shape.height;
  for (std::size_t i = 0; i < plane; ++i) {
    double luma;
    if (shape.channels == 3) {
      luma = 0.299 * chw[i] + 0.587 * chw[plane + i] + 0.114 * chw[2 * plane + i];
    } else {
      luma = chw[i];
    }
    const double scaled = std::floor(luma * 255.0 + 0.5);
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  return out;
}

GrayImage8 to_gray8(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("to_gray8 expects a C x H x W tensor");
  return to_gray8(image.data(), ImageShape{image.dim(0), image.dim(1), image.dim(2)});
}

namespace {

// gfedcb|abcdefgh|gfedcba
std::size_t reflect101(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  const int half = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    taps[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

FloatImage gaussian_blur(const GrayImage8& image) {
  const std::size_t w = image.width, h = image.height;
  if (w < kGaussianSize || h < kGaussianSize) {
    throw ImageSizeError("gaussian_blur needs at least a 5x5 image, got " + std::to_string(w) +
                         "x" + std::to_string(h));
  }
  const auto taps = gaussian_kernel();
  const int half = kGaussianSize / 2;
  std::vector<double> horizontal(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        acc += taps[static_cast<std::size_t>(k + half)] *
               image.pixels[y * w + reflect101(static_cast<std::ptrdiff_t>(x) + k, w)];
      }
      horizontal[y * w + x] = acc;
    }
  }
  FloatImage out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        acc += taps[static_cast<std::size_t>(k + half)] *
               horizontal[reflect101(static_cast<std::ptrdiff_t>(y) + k, h) * w + x];
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

SobelResult sobel_gradients(const FloatImage& image) {
  const std::size_t w = image.width, h = image.height;
  if (w < 3 || h < 3) {
    throw ImageSizeError("sobel_gradients needs at least a 3x3 image, got " + std::to_string(w) +
                         "x" + std::to_string(h));
  }
  SobelResult r{FloatImage(w, h), FloatImage(w, h), FloatImage(w, h), FloatImage(w, h)};
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t ym = reflect101(static_cast<std::ptrdiff_t>(y) - 1, h);
    const std::size_t yp = reflect101(static_cast<std::ptrdiff_t>(y) + 1, h);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xm = reflect101(static_cast<std::ptrdiff_t>(x) - 1, w);
      const std::size_t xp = reflect101(static_cast<std::ptrdiff_t>(x) + 1, w);
      const double tl = image.at(xm, ym), tc = image.at(x, ym), tr = image.at(xp, ym);
      const double ml = image.at(xm, y), mr = image.at(xp, y);
      const double bl = image.at(xm, yp), bc = image.at(x, yp), br = image.at(xp, yp);
      const double gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      const double gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
      r.gx.at(x, y) = static_cast<float>(gx);
      r.gy.at(x, y) = static_cast<float>(gy);
      r.magnitude.at(x, y) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
      r.direction.at(x, y) = static_cast<float>(std::atan2(gy, gx));
    }
  }
  return r;
}

FloatImage non_max_suppress(const FloatImage& magnitude, const FloatImage& direction) {
  if (magnitude.width != direction.width || magnitude.height != direction.height) {
    throw ShapeError("non_max_suppress: magnitude and direction sizes differ");
  }
  const std::size_t w = magnitude.width, h = magnitude.height;
  FloatImage out(w, h);
  if (w < 3 || h < 3) return out;
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      const float m = magnitude.at(x, y);
      if (m <= 0.0f) continue;
      double degrees = direction.at(x, y) * 180.0 / std::numbers::pi;
      if (degrees < 0.0) degrees += 180.0;
      float a, b;
      if (degrees < 22.5 || degrees >= 157.5) {
        a = magnitude.at(x - 1, y);
        b = magnitude.at(x + 1, y);
      } else if (degrees < 67.5) {
        a = magnitude.at(x - 1, y - 1);
        b = magnitude.at(x + 1, y + 1);
      } else if (degrees < 112.5) {
        a = magnitude.at(x, y - 1);
        b = magnitude.at(x, y + 1);
      } else {
        a = magnitude.at(x + 1, y - 1);
        b = magnitude.at(x - 1, y + 1);
      }
      if (m >= a && m >= b) out.at(x, y) = m;
    }
  }
  return out;
}

std::vector<std::uint8_t> strong_mask(const FloatImage& thinned, double high) {
  std::vector<std::uint8_t> mask(thinned.pixels.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = thinned.pixels[i] >= high ? 1 : 0;
  return mask;
}

EdgeMap hysteresis(const FloatImage& thinned, double low, double high) {
  if (low > high) {
    throw std::invalid_argument("hysteresis: low threshold " + std::to_string(low) +
                                " exceeds high threshold " + std::to_string(high));
  }
  const std::size_t w = thinned.width, h = thinned.height;
  EdgeMap out{w, h, 1, std::vector<float>(w * h, 0.0f)};
  auto mask = strong_mask(thinned, high);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) stack.push_back(i);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    out.values[i] = 1.0f;
    const auto x = static_cast<std::ptrdiff_t>(i % w), y = static_cast<std::ptrdiff_t>(i / w);
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
        const std::ptrdiff_t nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) ||
            ny >= static_cast<std::ptrdiff_t>(h)) {
          continue;
        }
        const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (!mask[j] && thinned.pixels[j] >= low) {
          mask[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return out;
}

EdgeMap canny(std::span<const float> chw, ImageShape shape, double low, double high,
              std::size_t out_channels) {
  const GrayImage8 gray = to_gray8(chw, shape);
  const FloatImage blurred = gaussian_blur(gray);
  const SobelResult grad = sobel_gradients(blurred);
  const FloatImage thin = non_max_suppress(grad.magnitude, grad.direction);
  return hysteresis(thin, low, high).replicated(out_channels);
}

EdgeMap canny(const Tensor& image, double low, double high) {
  if (image.rank() != 3) throw ShapeError("canny expects a C x H x W tensor");
  return canny(image.data(), ImageShape{image.dim(0), image.dim(1), image.dim(2)}, low, high, 3);
}

}  // namespace edgeshield
