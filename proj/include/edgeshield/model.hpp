#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "edgeshield/image_shape.hpp"
#include "edgeshield/layers.hpp"

namespace edgeshield {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An image classifier: a layer stack producing logits, plus the metadata
/// needed to rebuild it (architecture id, input shape, class count).
template <typename T>
class Model {
 public:
  Model(std::string architecture, ImageShape input, std::size_t classes,
        std::unique_ptr<Sequential<T>> body, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// N x K logits in the current mode; records on the active tape.
  BasicTensor<T> logits(const BasicTensor<T>& batch);
  /// N x K class probabilities in the current mode; never records.
  BasicTensor<T> forward(const BasicTensor<T>& batch);

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  const std::string& architecture() const { return architecture_; }
  const ImageShape& input_shape() const { return input_; }
  std::size_t num_classes() const { return classes_; }
  std::uint64_t seed() const { return seed_; }

  /// Trainable tensors, in registry order.
  std::vector<BasicTensor<T>> parameters() const;
  /// Every parameter and buffer (batchnorm running statistics) by name.
  std::vector<NamedTensor<T>> state() const;
  /// Copies values by name; throws ModelError on a missing name or shape mismatch.
  void load_state(const std::vector<NamedTensor<T>>& source);

  /// Independent deep copy with identical weights and mode.
  Model clone() const;
  template <typename U>
  Model<U> cast() const;

  Sequential<T>& body() { return *body_; }
  Rng& dropout_rng() { return dropout_rng_; }

 private:
  void check_batch(const BasicTensor<T>& batch) const;

  std::string architecture_;
  ImageShape input_;
  std::size_t classes_;
  std::unique_ptr<Sequential<T>> body_;
  std::uint64_t seed_;
  Mode mode_ = Mode::infer;
  Rng dropout_rng_;
};

/// Architecture ids understood by build_model.
inline constexpr const char* kPaperCnn = "paper_cnn";
std::vector<std::string> stand_in_names();
std::vector<std::string> architecture_names();

/// Builds any registered architecture with deterministic He-uniform init.
template <typename T>
Model<T> build_model(const std::string& architecture, ImageShape input, std::size_t classes,
                     std::uint64_t seed);

/// Three conv blocks (32/64/128 filters, conv3x3 -> bn -> relu -> maxpool 2x2),
/// flatten, dense 256 + relu, dropout 0.5, dense K.
template <typename T>
Model<T> build_paper_cnn(ImageShape input, std::size_t classes, std::uint64_t seed);

/// Toy-depth homages to the transfer-learning baselines:
/// resnet_s (skip connections), vgg_s (deep plain stacks),
/// inception_s (parallel branches), densenet_s (dense concatenation).
template <typename T>
Model<T> build_stand_in(const std::string& name, ImageShape input, std::size_t classes,
                        std::uint64_t seed);

template <typename T>
Model<T> Model<T>::clone() const {
  return cast<T>();
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out = build_model<U>(architecture_, input_, classes_, seed_);
  std::vector<NamedTensor<U>> converted;
  for (const auto& entry : state()) {
    converted.push_back({entry.name, entry.tensor.template cast<U>(), entry.trainable});
  }
  out.load_state(converted);
  out.set_mode(mode_);
  return out;
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace edgeshield
