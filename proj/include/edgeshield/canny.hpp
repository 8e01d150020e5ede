#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "edgeshield/image_shape.hpp"
#include "edgeshield/tensor.hpp"

namespace edgeshield {

class ImageSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GrayImage8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

struct FloatImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  FloatImage() = default;
  FloatImage(std::size_t w, std::size_t h, float fill = 0.0f)
      : width(w), height(h), pixels(w * h, fill) {}
  float& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  float at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// Binary edge map with values in {0, 1}, stored channel-major.
struct EdgeMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<float> values;

  float at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return values[(c * height + y) * width + x];
  }
  std::size_t count() const;
  EdgeMap replicated(std::size_t channels) const;
  /// 1 x C x H x W tensor.
  Tensor to_tensor() const;
};

struct SobelResult {
  FloatImage gx;
  FloatImage gy;
  FloatImage magnitude;
  FloatImage direction;  // radians, atan2(gy, gx)
};

inline constexpr double kCannyLow = 100.0;
inline constexpr double kCannyHigh = 200.0;
inline constexpr int kGaussianSize = 5;
inline constexpr double kGaussianSigma = 1.4;

/// Luma 0.299 R + 0.587 G + 0.114 B (or the single channel), x255, rounded half up.
GrayImage8 to_gray8(std::span<const float> chw, ImageShape shape);
GrayImage8 to_gray8(const Tensor& image);

/// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_kernel(int size = kGaussianSize, double sigma = kGaussianSigma);

/// Separable 5x5 Gaussian with reflect-101 borders.
FloatImage gaussian_blur(const GrayImage8& image);

/// 3x3 Sobel with reflect-101 borders; magnitude sqrt(gx^2 + gy^2).
SobelResult sobel_gradients(const FloatImage& image);

/// Keeps a pixel iff its magnitude is >= both neighbours along the gradient
/// direction quantized to 0/45/90/135 degrees. The one-pixel border is zeroed.
FloatImage non_max_suppress(const FloatImage& magnitude, const FloatImage& direction);

/// Pixels >= high.
std::vector<std::uint8_t> strong_mask(const FloatImage& thinned, double high);

/// Strong pixels plus weak pixels ([low, high)) 8-connected to a strong one.
EdgeMap hysteresis(const FloatImage& thinned, double low = kCannyLow, double high = kCannyHigh);

/// Full pipeline, replicated to `out_channels` channels.
EdgeMap canny(std::span<const float> chw, ImageShape shape, double low = kCannyLow,
              double high = kCannyHigh, std::size_t out_channels = 3);
EdgeMap canny(const Tensor& image, double low = kCannyLow, double high = kCannyHigh);

}  // namespace edgeshield
