#include "edgeshield/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "edgeshield/adam.hpp"
#include "edgeshield/ops.hpp"

namespace edgeshield {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie strictly between 0 and 1");
  }
  if (early_stopping_patience < 0 || lr_patience < 0) {
    throw std::invalid_argument("patience values must be non-negative");
  }
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw std::invalid_argument("lr_factor must lie in (0, 1)");
  if (min_lr < 0.0) throw std::invalid_argument("min_lr must be non-negative");
}

bool EarlyStopping::update(double val_loss) {
  improved_ = val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    wait_ = 0;
    return false;
  }
  ++wait_;
  return wait_ >= patience_;
}

double ReduceLrOnPlateau::update(double val_loss, double current_lr) {
  if (val_loss < best_) {
    best_ = val_loss;
    wait_ = 0;
    return current_lr;
  }
  ++wait_;
  if (wait_ >= patience_) {
    wait_ = 0;
    return std::max(current_lr * factor_, std::min(min_lr_, current_lr));
  }
  return current_lr;
}

std::vector<int> argmax_rows(const Tensor& probabilities) {
  const std::size_t n = probabilities.dim(0), k = probabilities.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (probabilities[r * k + j] > probabilities[r * k + best]) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

Prediction predict(Model<float>& model, const Tensor& batch, std::size_t batch_size) {
  if (batch.rank() != 4) throw ShapeError("predict expects an N x C x H x W batch");
  const Mode previous = model.mode();
  model.set_mode(Mode::infer);
  const std::size_t n = batch.dim(0), per = batch.size() / std::max<std::size_t>(n, 1);
  const std::size_t k = model.num_classes();
  Tensor probs(Shape{n, k});
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<float> chunk(batch.data().begin() + static_cast<std::ptrdiff_t>(start * per),
                             batch.data().begin() + static_cast<std::ptrdiff_t>(end * per));
    Tensor part(Shape{end - start, batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(chunk));
    Tensor p = model.forward(part);
    std::copy(p.data().begin(), p.data().end(), probs.data().begin() + static_cast<std::ptrdiff_t>(start * k));
  }
  model.set_mode(previous);
  return Prediction{probs, argmax_rows(probs)};
}

namespace {

struct LossAccuracy {
  double loss = 0;
  double accuracy = 0;
};

LossAccuracy measure(Model<float>& model, const ImageDataset& data, std::size_t batch_size) {
  NoGradScope<float> no_grad;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto labels = data.batch_labels(idx);
    Tensor logits = model.logits(data.batch(idx));
    loss += softmax_cross_entropy(logits, one_hot<float>(labels, model.num_classes())).item() *
            static_cast<double>(idx.size());
    const auto predicted = argmax_rows(logits);
    for (std::size_t i = 0; i < idx.size(); ++i) correct += predicted[i] == labels[i];
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::vector<NamedTensor<float>> snapshot(const Model<float>& model) {
  std::vector<NamedTensor<float>> out;
  for (const auto& e : model.state()) out.push_back({e.name, e.tensor.clone(), e.trainable});
  return out;
}

}  // namespace

TrainHistory train(Model<float>& model, const ImageDataset& train_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw DatasetError("cannot train on an empty dataset");
  if (!(train_set.image_shape() == model.input_shape())) {
    throw DatasetError("dataset images are " + train_set.image_shape().str() + " but the model expects " +
                       model.input_shape().str());
  }
  for (int l : train_set.labels()) {
    if (static_cast<std::size_t>(l) >= model.num_classes()) {
      throw DatasetError("label " + std::to_string(l) + " outside the model's " +
                         std::to_string(model.num_classes()) + " classes");
    }
  }
  if (train_set.size() < 2) throw DatasetError("training needs at least two samples (train + validation)");

  Rng rng(derive_seed(config.seed, 0x7A11));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(train_set.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, train_set.size() - 1);
  std::span<const std::size_t> all(order);
  const ImageDataset validation = train_set.subset(all.first(n_val));
  const ImageDataset fit = train_set.subset(all.subspan(n_val));

  const std::vector<Tensor> params = model.parameters();
  Adam<float> optimizer(params, AdamConfig{config.learning_rate});
  EarlyStopping stopper(config.early_stopping_patience);
  ReduceLrOnPlateau scheduler(config.lr_factor, config.lr_patience, config.min_lr);
  TrainHistory history;
  history.stop_reason = "completed";
  auto best_state = snapshot(model);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  const std::size_t k = model.num_classes();

  std::vector<std::size_t> fit_order(fit.size());
  std::iota(fit_order.begin(), fit_order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    model.set_mode(Mode::train);
    rng.shuffle(std::span<std::size_t>(fit_order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < fit.size(); start += batch_size) {
      const std::size_t end = std::min(fit.size(), start + batch_size);
      std::span<const std::size_t> idx(fit_order.data() + start, end - start);
      const auto labels = fit.batch_labels(idx);
      optimizer.zero_grad();
      GradientTape<float> tape;
      for (const auto& p : params) tape.watch(p);
      Tensor logits = model.logits(fit.batch(idx));
      Tensor loss = softmax_cross_entropy(logits, one_hot<float>(labels, k));
      tape.backward(loss);
      optimizer.step();
      loss_sum += loss.item() * static_cast<double>(idx.size());
      const auto predicted = argmax_rows(logits);
      for (std::size_t i = 0; i < idx.size(); ++i) correct += predicted[i] == labels[i];
    }

    model.set_mode(Mode::infer);
    const LossAccuracy val = measure(model, validation, 128);
    EpochRecord record{loss_sum / static_cast<double>(fit.size()),
                       static_cast<double>(correct) / static_cast<double>(fit.size()), val.loss,
                       val.accuracy, optimizer.learning_rate()};
    history.epochs.push_back(record);

    const bool stop = stopper.update(val.loss);
    if (stopper.improved()) {
      best_state = snapshot(model);
      history.best_epoch = epoch;
      history.best_val_loss = val.loss;
    }
    optimizer.set_learning_rate(scheduler.update(val.loss, optimizer.learning_rate()));
    if (stop) {
      history.stop_reason = "early_stopping";
      break;
    }
  }
  model.load_state(best_state);
  model.set_mode(Mode::infer);
  return history;
}

}  // namespace edgeshield
