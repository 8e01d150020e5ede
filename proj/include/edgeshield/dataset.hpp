#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "edgeshield/image_shape.hpp"
#include "edgeshield/tensor.hpp"

namespace edgeshield {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance { clean, noisy, edges, edges_noisy, mixed };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& name);

/// Immutable labeled image collection. Every image has the same shape and
/// every pixel lies in [0, 1]; the constructor enforces both.
class ImageDataset {
 public:
  ImageDataset(ImageShape shape, std::vector<float> pixels, std::vector<int> labels,
               std::vector<std::string> class_names, Provenance provenance);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const ImageShape& image_shape() const { return shape_; }
  std::size_t num_classes() const { return class_names_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  Provenance provenance() const { return provenance_; }

  const std::vector<int>& labels() const { return labels_; }
  int label(std::size_t i) const { return labels_.at(i); }
  std::span<const float> image(std::size_t i) const;
  const std::vector<float>& pixels() const { return pixels_; }

  /// N x C x H x W batch of the given indices.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor batch(std::size_t begin, std::size_t end) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;

  ImageDataset subset(std::span<const std::size_t> indices) const;
  ImageDataset with_provenance(Provenance p) const;
  std::vector<std::size_t> class_histogram() const;

 private:
  ImageShape shape_;
  std::vector<float> pixels_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
  Provenance provenance_;
};

/// Concatenates datasets with identical shape and class names.
ImageDataset concatenate(const std::vector<const ImageDataset*>& parts, Provenance provenance);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then the first round(fraction * n) samples go to train.
std::pair<ImageDataset, ImageDataset> split(const ImageDataset& dataset, const SplitSpec& spec);

struct SynthSpec {
  std::size_t per_class = 100;
  std::size_t size = 32;
  std::size_t channels = 3;
  double noise = 0.03;
  std::uint64_t seed = 0;
};

/// Two-class shape corpus: class 0 ("ellipse") filled ellipses, class 1
/// ("rectangle") filled rectangles, with random placement, scale and colour
/// plus additive Gaussian pixel noise of standard deviation `noise`.
ImageDataset synth_shapes(const SynthSpec& spec);

struct LoadResult {
  ImageDataset dataset;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Loads root/<class>/*.png|*.pgm. Classes are numbered in sorted directory
/// order, files read in sorted path order, each image bilinearly resized
/// (corner-aligned) to `target` and scaled to [0, 1]. Unreadable files are
/// skipped and counted; a class directory with no images is an error.
LoadResult load_image_dir(const std::filesystem::path& root, ImageShape target);

/// Corner-aligned bilinear resize of one channel-major 8-bit image.
std::vector<float> resize_bilinear(std::span<const float> plane, std::size_t src_h,
                                   std::size_t src_w, std::size_t dst_h, std::size_t dst_w);

/// Canny edge maps of every image (replicated to the dataset's channel count).
ImageDataset edge_transform(const ImageDataset& dataset, double low, double high);

/// m stratified samples (without replacement) from each source, concatenated
/// and shuffled. Per-class counts follow the source histogram, rounded by
/// largest remainder.
ImageDataset retrain_mix(const ImageDataset& clean, const ImageDataset& noisy, std::size_t per_side,
                         std::uint64_t seed);

/// Indices drawn by the stratified sampler used in retrain_mix.
std::vector<std::size_t> stratified_sample(const ImageDataset& dataset, std::size_t count,
                                           std::uint64_t seed);

}  // namespace edgeshield
