#pragma once

#include <memory>
#include <string>
#include <vector>

#include "edgeshield/ops.hpp"
#include "edgeshield/rng.hpp"
#include "edgeshield/tensor.hpp"

namespace edgeshield {

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
  bool trainable;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) = 0;
  /// Appends parameters and buffers under `prefix`, in a stable order.
  virtual void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const = 0;
  virtual std::string kind() const = 0;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

/// He-uniform initialized convolution.
template <typename T>
class Conv2dLayer : public Layer<T> {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
              std::size_t stride, std::size_t padding, Rng& init);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "conv2d"; }

  std::size_t out_channels() const { return weight_.dim(0); }
  BasicTensor<T>& weight() { return weight_; }
  BasicTensor<T>& bias() { return bias_; }

 private:
  BasicTensor<T> weight_;
  BasicTensor<T> bias_;
  std::size_t stride_;
  std::size_t padding_;
};

template <typename T>
class BatchNorm2dLayer : public Layer<T> {
 public:
  explicit BatchNorm2dLayer(std::size_t channels);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "batchnorm2d"; }

  BasicTensor<T>& gamma() { return gamma_; }
  BasicTensor<T>& beta() { return beta_; }
  BatchNormState<T>& state() { return state_; }

 private:
  BasicTensor<T> gamma_;
  BasicTensor<T> beta_;
  BatchNormState<T> state_;
};

template <typename T>
class DenseLayer : public Layer<T> {
 public:
  DenseLayer(std::size_t in_features, std::size_t units, Rng& init);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "dense"; }

  BasicTensor<T>& weight() { return weight_; }
  BasicTensor<T>& bias() { return bias_; }

 private:
  BasicTensor<T> weight_;
  BasicTensor<T> bias_;
};

template <typename T>
class ReluLayer : public Layer<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode, Rng&) override { return relu(x); }
  void collect(const std::string&, std::vector<NamedTensor<T>>&) const override {}
  std::string kind() const override { return "relu"; }
};

template <typename T>
class MaxPoolLayer : public Layer<T> {
 public:
  MaxPoolLayer(std::size_t window, std::size_t stride) : window_(window), stride_(stride) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode, Rng&) override {
    return maxpool2d(x, window_, stride_);
  }
  void collect(const std::string&, std::vector<NamedTensor<T>>&) const override {}
  std::string kind() const override { return "maxpool2d"; }

 private:
  std::size_t window_;
  std::size_t stride_;
};

template <typename T>
class FlattenLayer : public Layer<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode, Rng&) override { return flatten(x); }
  void collect(const std::string&, std::vector<NamedTensor<T>>&) const override {}
  std::string kind() const override { return "flatten"; }
};

template <typename T>
class GlobalAvgPoolLayer : public Layer<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode, Rng&) override {
    return global_avg_pool(x);
  }
  void collect(const std::string&, std::vector<NamedTensor<T>>&) const override {}
  std::string kind() const override { return "global_avg_pool"; }
};

template <typename T>
class DropoutLayer : public Layer<T> {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override {
    return dropout(x, rate_, rng, mode);
  }
  void collect(const std::string&, std::vector<NamedTensor<T>>&) const override {}
  std::string kind() const override { return "dropout"; }
  double rate() const { return rate_; }

 private:
  double rate_;
};

template <typename T>
class Sequential : public Layer<T> {
 public:
  Sequential() = default;
  Sequential& add(LayerPtr<T> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "sequential"; }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// relu(branch(x) + shortcut(x)); an empty shortcut is the identity.
template <typename T>
class ResidualBlock : public Layer<T> {
 public:
  ResidualBlock(std::unique_ptr<Sequential<T>> branch, std::unique_ptr<Sequential<T>> shortcut)
      : branch_(std::move(branch)), shortcut_(std::move(shortcut)) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "residual"; }

  Sequential<T>& branch() { return *branch_; }
  Sequential<T>& shortcut() { return *shortcut_; }

 private:
  std::unique_ptr<Sequential<T>> branch_;
  std::unique_ptr<Sequential<T>> shortcut_;
};

/// Parallel branches over one input, concatenated along channels.
template <typename T>
class InceptionBlock : public Layer<T> {
 public:
  explicit InceptionBlock(std::vector<std::unique_ptr<Sequential<T>>> branches)
      : branches_(std::move(branches)) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "inception"; }

 private:
  std::vector<std::unique_ptr<Sequential<T>>> branches_;
};

/// Each stage sees the concatenation of the block input and every earlier
/// stage's output, and contributes `growth` channels (bn -> relu -> conv3x3).
template <typename T>
class DenseBlock : public Layer<T> {
 public:
  DenseBlock(std::size_t in_channels, std::size_t growth, std::size_t stages, Rng& init);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng& rng) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::string kind() const override { return "dense_block"; }

  std::size_t out_channels() const { return in_channels_ + growth_ * stages_.size(); }

 private:
  std::size_t in_channels_;
  std::size_t growth_;
  std::vector<std::unique_ptr<Sequential<T>>> stages_;
};

}  // namespace edgeshield
