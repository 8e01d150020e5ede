#pragma once

#include <vector>

#include "edgeshield/dataset.hpp"
#include "edgeshield/model.hpp"

namespace edgeshield {

struct AttackConfig {
  double epsilon = 0.015;  // L-infinity budget on the [0, 1] pixel scale
  bool clip = true;        // clamp the result to [0, 1]

  void validate() const;
};

/// Gradient of the mean categorical cross-entropy with respect to the input
/// pixels, taken in infer mode. Model weights are not modified and the
/// model's mode is restored afterwards.
template <typename T>
BasicTensor<T> input_gradient(Model<T>& model, const BasicTensor<T>& x, const std::vector<int>& labels);

/// x + epsilon * sign(grad), optionally clipped to [0, 1]. sign(0) = 0.
template <typename T>
BasicTensor<T> fgsm_perturb(const BasicTensor<T>& x, const BasicTensor<T>& grad,
                            const AttackConfig& config);

/// Replaces every image with its FGSM counterpart against its own label.
/// Labels and order are preserved; provenance becomes noisy (or edges-noisy
/// for edge-map inputs).
ImageDataset attack_dataset(Model<float>& model, const ImageDataset& dataset,
                            const AttackConfig& config, std::size_t batch_size = 64);

}  // namespace edgeshield
