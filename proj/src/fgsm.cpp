#include "edgeshield/fgsm.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "edgeshield/ops.hpp"

namespace edgeshield {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
}

template <typename T>
BasicTensor<T> input_gradient(Model<T>& model, const BasicTensor<T>& x, const std::vector<int>& labels) {
  if (x.rank() != 4 || x.dim(0) != labels.size()) {
    throw ShapeError("input_gradient: batch " + shape_string(x.shape()) + " does not match " +
                     std::to_string(labels.size()) + " labels");
  }
  const Mode previous = model.mode();
  model.set_mode(Mode::infer);
  BasicTensor<T> input = x.clone();
  input.set_requires_grad(false);
  BasicTensor<T> grad;
  {
    GradientTape<T> tape;
    tape.watch(input);
    BasicTensor<T> loss =
        softmax_cross_entropy(model.logits(input), one_hot<T>(labels, model.num_classes()));
    tape.backward(loss);
    grad = input.grad_tensor();
  }
  model.set_mode(previous);
  return grad;
}

template <typename T>
BasicTensor<T> fgsm_perturb(const BasicTensor<T>& x, const BasicTensor<T>& grad,
                            const AttackConfig& config) {
  config.validate();
  if (x.shape() != grad.shape()) {
    throw ShapeError("fgsm_perturb: image " + shape_string(x.shape()) + " and gradient " +
                     shape_string(grad.shape()) + " differ");
  }
  BasicTensor<T> out(x.shape());
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T g = grad[i];
    const T step = g > T(0) ? eps : (g < T(0) ? -eps : T(0));
    T v = x[i] + step;
    if (config.clip) v = std::clamp(v, T(0), T(1));
    out[i] = v;
  }
  return out;
}

ImageDataset attack_dataset(Model<float>& model, const ImageDataset& dataset,
                            const AttackConfig& config, std::size_t batch_size) {
  config.validate();
  const Provenance out_provenance =
      (dataset.provenance() == Provenance::edges || dataset.provenance() == Provenance::edges_noisy)
          ? Provenance::edges_noisy
          : Provenance::noisy;
  if (config.epsilon == 0.0) return dataset.with_provenance(out_provenance);
  if (!(dataset.image_shape() == model.input_shape())) {
    throw ShapeError("attack_dataset: images are " + dataset.image_shape().str() +
                     " but the model expects " + model.input_shape().str());
  }
  std::vector<float> pixels;
  pixels.reserve(dataset.pixels().size());
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor x = dataset.batch(idx);
    Tensor grad = input_gradient(model, x, dataset.batch_labels(idx));
    Tensor adv = fgsm_perturb(x, grad, config);
    pixels.insert(pixels.end(), adv.data().begin(), adv.data().end());
  }
  if (!config.clip) {
    // Datasets hold [0, 1] pixels; unclipped attacks still have to land there.
    for (auto& v : pixels) v = std::clamp(v, 0.0f, 1.0f);
  }
  return ImageDataset(dataset.image_shape(), std::move(pixels), dataset.labels(),
                      dataset.class_names(), out_provenance);
}

template BasicTensor<float> input_gradient(Model<float>&, const BasicTensor<float>&, const std::vector<int>&);
template BasicTensor<double> input_gradient(Model<double>&, const BasicTensor<double>&, const std::vector<int>&);
template BasicTensor<float> fgsm_perturb(const BasicTensor<float>&, const BasicTensor<float>&, const AttackConfig&);
template BasicTensor<double> fgsm_perturb(const BasicTensor<double>&, const BasicTensor<double>&, const AttackConfig&);

}  // namespace edgeshield
