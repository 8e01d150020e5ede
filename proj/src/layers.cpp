#include "edgeshield/layers.hpp"

#include <cmath>

namespace edgeshield {

namespace {

template <typename T>
void he_uniform(BasicTensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride, std::size_t padding, Rng& init)
    : weight_(Shape{out_channels, in_channels, kernel, kernel}),
      bias_(Shape{out_channels}),
      stride_(stride),
      padding_(padding) {
  he_uniform(weight_, in_channels * kernel * kernel, init);
}

template <typename T>
BasicTensor<T> Conv2dLayer<T>::forward(const BasicTensor<T>& x, Mode, Rng&) {
  return conv2d(x, weight_, bias_, stride_, padding_);
}

template <typename T>
void Conv2dLayer<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + "weight", weight_, true});
  out.push_back({prefix + "bias", bias_, true});
}

template <typename T>
BatchNorm2dLayer<T>::BatchNorm2dLayer(std::size_t channels)
    : gamma_(Shape{channels}, T(1)), beta_(Shape{channels}, T(0)), state_(channels) {}

template <typename T>
BasicTensor<T> BatchNorm2dLayer<T>::forward(const BasicTensor<T>& x, Mode mode, Rng&) {
  return batchnorm2d(x, gamma_, beta_, state_, mode);
}

template <typename T>
void BatchNorm2dLayer<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + "gamma", gamma_, true});
  out.push_back({prefix + "beta", beta_, true});
  out.push_back({prefix + "running_mean", state_.running_mean, false});
  out.push_back({prefix + "running_var", state_.running_var, false});
}

template <typename T>
DenseLayer<T>::DenseLayer(std::size_t in_features, std::size_t units, Rng& init)
    : weight_(Shape{in_features, units}), bias_(Shape{units}) {
  he_uniform(weight_, in_features, init);
}

template <typename T>
BasicTensor<T> DenseLayer<T>::forward(const BasicTensor<T>& x, Mode, Rng&) {
  return dense(x, weight_, bias_);
}

template <typename T>
void DenseLayer<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + "weight", weight_, true});
  out.push_back({prefix + "bias", bias_, true});
}

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  BasicTensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode, rng);
  return h;
}

template <typename T>
void Sequential<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect(prefix + std::to_string(i) + ".", out);
  }
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::forward(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  BasicTensor<T> main = branch_->forward(x, mode, rng);
  BasicTensor<T> skip = shortcut_->size() == 0 ? x : shortcut_->forward(x, mode, rng);
  return relu(add(main, skip));
}

template <typename T>
void ResidualBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  branch_->collect(prefix + "branch.", out);
  shortcut_->collect(prefix + "shortcut.", out);
}

template <typename T>
BasicTensor<T> InceptionBlock<T>::forward(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  std::vector<BasicTensor<T>> parts;
  parts.reserve(branches_.size());
  for (auto& b : branches_) parts.push_back(b->forward(x, mode, rng));
  return concat_channels(parts);
}

template <typename T>
void InceptionBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    branches_[i]->collect(prefix + "branch" + std::to_string(i) + ".", out);
  }
}

template <typename T>
DenseBlock<T>::DenseBlock(std::size_t in_channels, std::size_t growth, std::size_t stages,
                          Rng& init)
    : in_channels_(in_channels), growth_(growth) {
  std::size_t channels = in_channels;
  for (std::size_t s = 0; s < stages; ++s) {
    auto stage = std::make_unique<Sequential<T>>();
    stage->template emplace<BatchNorm2dLayer<T>>(channels);
    stage->template emplace<ReluLayer<T>>();
    stage->template emplace<Conv2dLayer<T>>(channels, growth, 3, 1, 1, init);
    stages_.push_back(std::move(stage));
    channels += growth;
  }
}

template <typename T>
BasicTensor<T> DenseBlock<T>::forward(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  BasicTensor<T> features = x;
  for (auto& stage : stages_) {
    BasicTensor<T> fresh = stage->forward(features, mode, rng);
    features = concat_channels(std::vector<BasicTensor<T>>{features, fresh});
  }
  return features;
}

template <typename T>
void DenseBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i]->collect(prefix + "stage" + std::to_string(i) + ".", out);
  }
}

#define EDGESHIELD_INSTANTIATE_LAYERS(T) \
  template class Conv2dLayer<T>;         \
  template class BatchNorm2dLayer<T>;    \
  template class DenseLayer<T>;          \
  template class Sequential<T>;          \
  template class ResidualBlock<T>;       \
  template class InceptionBlock<T>;      \
  template class DenseBlock<T>;

EDGESHIELD_INSTANTIATE_LAYERS(float)
EDGESHIELD_INSTANTIATE_LAYERS(double)

}  // namespace edgeshield
