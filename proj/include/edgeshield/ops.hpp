#pragma once

#include <cstddef>
#include <vector>

#include "edgeshield/rng.hpp"
#include "edgeshield/tensor.hpp"

namespace edgeshield {

enum class Mode { train, infer };

/// Per-channel running statistics owned by a batch-normalization layer.
template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kLogFloor = 1e-12;

// All operations below record themselves on the active GradientTape when any
// input is tracked, and throw NumericError if they produce a non-finite value.

/// NCHW input, OIHW weight, bias of length O.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);

/// Max over window x window patches. Ties route the gradient to the first
/// maximum in row-major order.
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

/// N x F input, F x U weight, bias of length U.
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias);

/// Subgradient 0 at exactly zero.
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Train mode normalizes with batch statistics and folds them into `state`
/// with momentum kBatchNormMomentum. Infer mode uses the running statistics.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormState<T>& state, Mode mode);

/// Mean over the batch of -log softmax(logits)[true class]. Rows of `onehot`
/// must contain a single 1 and zeros elsewhere.
template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& onehot);

/// Row-wise softmax. Not differentiable; use softmax_cross_entropy for training.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Scalar sum of every element.
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);

/// N x C x H x W -> N x (C*H*W).
template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& input);

/// NCHW -> N x C.
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

/// Concatenates NCHW tensors along the channel axis.
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);

/// Inverted dropout: in train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate). Identity in infer mode.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double rate, Rng& rng, Mode mode);

/// N x K one-hot matrix for integer labels.
template <typename T>
BasicTensor<T> one_hot(const std::vector<int>& labels, std::size_t classes);

}  // namespace edgeshield
