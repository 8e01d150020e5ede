#include "edgeshield/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "edgeshield/canny.hpp"
#include "edgeshield/image_io.hpp"
#include "edgeshield/rng.hpp"

namespace edgeshield {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::clean: return "clean";
    case Provenance::noisy: return "noisy";
    case Provenance::edges: return "edges";
    case Provenance::edges_noisy: return "edges-noisy";
    case Provenance::mixed: return "mixed";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& name) {
  for (auto p : {Provenance::clean, Provenance::noisy, Provenance::edges, Provenance::edges_noisy,
                 Provenance::mixed}) {
    if (to_string(p) == name) return p;
  }
  throw DatasetError("unknown provenance '" + name + "'");
}

ImageDataset::ImageDataset(ImageShape shape, std::vector<float> pixels, std::vector<int> labels,
                           std::vector<std::string> class_names, Provenance provenance)
    : shape_(shape),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)),
      provenance_(provenance) {
  if (shape_.numel() == 0) throw DatasetError("image shape must be non-empty");
  if (class_names_.empty()) throw DatasetError("dataset needs at least one class name");
  if (pixels_.size() != labels_.size() * shape_.numel()) {
    throw DatasetError("pixel buffer holds " + std::to_string(pixels_.size()) +
                       " values, expected " + std::to_string(labels_.size()) + " images of " +
                       shape_.str());
  }
  for (int label : labels_) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_names_.size()) {
      throw DatasetError("label " + std::to_string(label) + " outside [0, " +
                         std::to_string(class_names_.size()) + ")");
    }
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("pixel value outside [0, 1]");
  }
}

std::span<const float> ImageDataset::image(std::size_t i) const {
  if (i >= size()) throw DatasetError("image index " + std::to_string(i) + " out of range");
  return std::span<const float>(pixels_).subspan(i * shape_.numel(), shape_.numel());
}

Tensor ImageDataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t n = shape_.numel();
  std::vector<float> out(indices.size() * n);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto img = image(indices[k]);
    std::copy(img.begin(), img.end(), out.begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return Tensor(Shape{indices.size(), shape_.channels, shape_.height, shape_.width}, std::move(out));
}

Tensor ImageDataset::batch(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return batch(idx);
}

std::vector<int> ImageDataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(label(i));
  return out;
}

ImageDataset ImageDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<float> px;
  px.reserve(indices.size() * shape_.numel());
  std::vector<int> lb;
  lb.reserve(indices.size());
  for (auto i : indices) {
    auto img = image(i);
    px.insert(px.end(), img.begin(), img.end());
    lb.push_back(labels_[i]);
  }
  return ImageDataset(shape_, std::move(px), std::move(lb), class_names_, provenance_);
}

ImageDataset ImageDataset::with_provenance(Provenance p) const {
  ImageDataset out = *this;
  out.provenance_ = p;
  return out;
}

std::vector<std::size_t> ImageDataset::class_histogram() const {
  std::vector<std::size_t> hist(num_classes(), 0);
  for (int l : labels_) ++hist[static_cast<std::size_t>(l)];
  return hist;
}

ImageDataset concatenate(const std::vector<const ImageDataset*>& parts, Provenance provenance) {
  if (parts.empty()) throw DatasetError("concatenate needs at least one dataset");
  const auto& first = *parts.front();
  std::vector<float> px;
  std::vector<int> lb;
  for (const auto* p : parts) {
    if (!(p->image_shape() == first.image_shape()) || p->class_names() != first.class_names()) {
      throw DatasetError("cannot concatenate datasets with different shapes or classes");
    }
    px.insert(px.end(), p->pixels().begin(), p->pixels().end());
    lb.insert(lb.end(), p->labels().begin(), p->labels().end());
  }
  return ImageDataset(first.image_shape(), std::move(px), std::move(lb), first.class_names(),
                      provenance);
}

std::pair<ImageDataset, ImageDataset> split(const ImageDataset& dataset, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw DatasetError("train fraction must lie strictly between 0 and 1");
  }
  if (dataset.size() < 2) throw DatasetError("split needs at least two samples");
  const auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(dataset.size())));
  if (n_train == 0 || n_train >= dataset.size()) {
    throw DatasetError("train fraction " + std::to_string(spec.train_fraction) +
                       " leaves one side of the split empty");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::span<const std::size_t> all(order);
  return {dataset.subset(all.first(n_train)), dataset.subset(all.subspan(n_train))};
}

ImageDataset synth_shapes(const SynthSpec& spec) {
  if (spec.per_class < 1) throw DatasetError("synth_shapes needs at least one sample per class");
  if (spec.size < 16) throw DatasetError("synth_shapes image size must be at least 16");
  if (spec.channels != 1 && spec.channels != 3) throw DatasetError("synth_shapes supports 1 or 3 channels");
  if (spec.noise < 0.0) throw DatasetError("noise level must be non-negative");

  const ImageShape shape{spec.channels, spec.size, spec.size};
  const std::size_t total = 2 * spec.per_class;
  const std::size_t plane = spec.size * spec.size;
  std::vector<float> pixels(total * shape.numel());
  std::vector<int> labels(total);
  Rng rng(spec.seed);
  const double s = static_cast<double>(spec.size);

  for (std::size_t k = 0; k < total; ++k) {
    const int label = static_cast<int>(k % 2);
    labels[k] = label;
    double background[3], foreground[3];
    for (std::size_t c = 0; c < 3; ++c) {
      background[c] = rng.uniform(0.0, 0.25);
      foreground[c] = rng.uniform(0.7, 1.0);
    }
    const double cx = s / 2.0 + rng.uniform(-0.1, 0.1) * s;
    const double cy = s / 2.0 + rng.uniform(-0.1, 0.1) * s;
    const double ax = rng.uniform(0.2, 0.34) * s;
    const double ay = rng.uniform(0.2, 0.34) * s;
    float* img = pixels.data() + k * shape.numel();
    for (std::size_t y = 0; y < spec.size; ++y) {
      for (std::size_t x = 0; x < spec.size; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / ax;
        const double dy = (static_cast<double>(y) + 0.5 - cy) / ay;
        const bool inside =
            label == 0 ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        for (std::size_t c = 0; c < spec.channels; ++c) {
          const double base = inside ? foreground[c] : background[c];
          img[c * plane + y * spec.size + x] = static_cast<float>(base);
        }
      }
    }
    if (spec.noise > 0.0) {
      for (std::size_t i = 0; i < shape.numel(); ++i) {
        img[i] = static_cast<float>(std::clamp(img[i] + spec.noise * rng.normal(), 0.0, 1.0));
      }
    }
  }
  return ImageDataset(shape, std::move(pixels), std::move(labels), {"ellipse", "rectangle"},
                      Provenance::clean);
}

std::vector<float> resize_bilinear(std::span<const float> plane, std::size_t src_h,
                                   std::size_t src_w, std::size_t dst_h, std::size_t dst_w) {
  std::vector<float> out(dst_h * dst_w);
  const double sy = dst_h > 1 ? static_cast<double>(src_h - 1) / static_cast<double>(dst_h - 1) : 0.0;
  const double sx = dst_w > 1 ? static_cast<double>(src_w - 1) / static_cast<double>(dst_w - 1) : 0.0;
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double fy = static_cast<double>(y) * sy;
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double fx = static_cast<double>(x) * sx;
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * plane[y0 * src_w + x0] + wx * plane[y0 * src_w + x1];
      const double bottom = (1.0 - wx) * plane[y1 * src_w + x0] + wx * plane[y1 * src_w + x1];
      out[y * dst_w + x] = static_cast<float>((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

namespace {

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".pgm";
}

// Converts to the target channel count, resizes, and clamps to [0, 1].
std::vector<float> prepare_image(const Image8& decoded, ImageShape target) {
  const std::size_t src_plane = decoded.width * decoded.height;
  const std::vector<float> planar = to_planar_unit(decoded);
  std::vector<std::vector<float>> planes;
  if (target.channels == decoded.channels) {
    for (std::size_t c = 0; c < decoded.channels; ++c) {
      planes.emplace_back(planar.begin() + static_cast<std::ptrdiff_t>(c * src_plane),
                          planar.begin() + static_cast<std::ptrdiff_t>((c + 1) * src_plane));
    }
  } else if (decoded.channels == 1) {
    for (std::size_t c = 0; c < target.channels; ++c) planes.push_back(planar);
  } else {
    std::vector<float> luma(src_plane);
    for (std::size_t i = 0; i < src_plane; ++i) {
      luma[i] = static_cast<float>(0.299 * planar[i] + 0.587 * planar[src_plane + i] +
                                   0.114 * planar[2 * src_plane + i]);
    }
    for (std::size_t c = 0; c < target.channels; ++c) planes.push_back(luma);
  }
  std::vector<float> out;
  out.reserve(target.numel());
  for (auto& p : planes) {
    auto resized = resize_bilinear(p, decoded.height, decoded.width, target.height, target.width);
    for (float v : resized) out.push_back(std::clamp(v, 0.0f, 1.0f));
  }
  return out;
}

}  // namespace

LoadResult load_image_dir(const std::filesystem::path& root, ImageShape target) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DatasetError("dataset root '" + root.string() + "' is not a directory");
  if (target.channels != 1 && target.channels != 3) throw DatasetError("target must have 1 or 3 channels");
  if (target.height == 0 || target.width == 0) throw DatasetError("target size must be positive");

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DatasetError("dataset root '" + root.string() + "' has no class directories");

  std::vector<std::string> names;
  std::vector<float> pixels;
  std::vector<int> labels;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t loaded = 0;
    for (const auto& f : files) {
      try {
        auto img = prepare_image(read_image(f), target);
        pixels.insert(pixels.end(), img.begin(), img.end());
        labels.push_back(static_cast<int>(c));
        ++loaded;
      } catch (const ImageIoError& e) {
        ++skipped;
        warnings.push_back(e.what());
      }
    }
    if (loaded == 0) throw DatasetError("class directory '" + class_dirs[c].string() + "' contains no readable images");
  }
  return LoadResult{ImageDataset(target, std::move(pixels), std::move(labels), std::move(names),
                                 Provenance::clean),
                    skipped, std::move(warnings)};
}

ImageDataset edge_transform(const ImageDataset& dataset, double low, double high) {
  const ImageShape shape = dataset.image_shape();
  std::vector<float> pixels;
  pixels.reserve(dataset.pixels().size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    EdgeMap edges = canny(dataset.image(i), shape, low, high, shape.channels);
    pixels.insert(pixels.end(), edges.values.begin(), edges.values.end());
  }
  const Provenance p = dataset.provenance() == Provenance::noisy ? Provenance::edges_noisy : Provenance::edges;
  return ImageDataset(shape, std::move(pixels), dataset.labels(), dataset.class_names(), p);
}

std::vector<std::size_t> stratified_sample(const ImageDataset& dataset, std::size_t count,
                                           std::uint64_t seed) {
  if (count > dataset.size()) {
    throw DatasetError("cannot draw " + std::to_string(count) + " samples from a dataset of " +
                       std::to_string(dataset.size()));
  }
  const auto hist = dataset.class_histogram();
  const std::size_t k = hist.size();
  const double n = static_cast<double>(dataset.size());
  std::vector<std::size_t> quota(k);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double exact = static_cast<double>(count) * static_cast<double>(hist[c]) / n;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < count; ++i) {
    const std::size_t c = remainders[i % k].second;
    if (quota[c] < hist[c]) {
      ++quota[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(count);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (static_cast<std::size_t>(dataset.label(i)) == c) members.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(members));
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  return picked;
}

ImageDataset retrain_mix(const ImageDataset& clean, const ImageDataset& noisy, std::size_t per_side,
                         std::uint64_t seed) {
  if (per_side == 0) throw DatasetError("mix size must be positive");
  if (clean.size() < per_side || noisy.size() < per_side) {
    throw DatasetError("insufficient samples for a mix of " + std::to_string(per_side) +
                       " per side (clean " + std::to_string(clean.size()) + ", noisy " +
                       std::to_string(noisy.size()) + ")");
  }
  const auto clean_idx = stratified_sample(clean, per_side, derive_seed(seed, 1));
  const auto noisy_idx = stratified_sample(noisy, per_side, derive_seed(seed, 2));
  const ImageDataset a = clean.subset(clean_idx);
  const ImageDataset b = noisy.subset(noisy_idx);
  const ImageDataset joined = concatenate({&a, &b}, Provenance::mixed);
  std::vector<std::size_t> order(joined.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 3));
  rng.shuffle(std::span<std::size_t>(order));
  return joined.subset(order);
}

}  // namespace edgeshield
