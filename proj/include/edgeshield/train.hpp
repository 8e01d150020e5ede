#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "edgeshield/dataset.hpp"
#include "edgeshield/model.hpp"

namespace edgeshield {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int early_stopping_patience = 3;
  double lr_factor = 0.5;
  int lr_patience = 2;
  double min_lr = 1e-5;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct EpochRecord {
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double learning_rate = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::string stop_reason;  // "completed" or "early_stopping"
  int best_epoch = -1;      // zero-based
  double best_val_loss = std::numeric_limits<double>::infinity();
};

/// Stops once the monitored loss has failed to improve for `patience` epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when training should stop after this epoch.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  int patience_;
  int wait_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Multiplies the learning rate by `factor` (floored at `min_lr`) once the
/// monitored loss has failed to improve for `patience` epochs.
class ReduceLrOnPlateau {
 public:
  ReduceLrOnPlateau(double factor, int patience, double min_lr)
      : factor_(factor), patience_(patience), min_lr_(min_lr) {}
  /// Returns the learning rate to use for the next epoch.
  double update(double val_loss, double current_lr);

 private:
  double factor_;
  int patience_;
  double min_lr_;
  int wait_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Mini-batch Adam on categorical cross-entropy with a seeded validation
/// hold-out, plateau LR reduction and early stopping. The weights (and
/// batchnorm statistics) of the best validation epoch are restored at the end.
/// The model is left in infer mode.
TrainHistory train(Model<float>& model, const ImageDataset& train_set, const TrainConfig& config);

struct Prediction {
  Tensor probabilities;
  std::vector<int> labels;
};

/// Argmax with ties broken toward the lowest class index.
std::vector<int> argmax_rows(const Tensor& probabilities);

/// Infer-mode forward in batches; restores the model's previous mode.
Prediction predict(Model<float>& model, const Tensor& batch, std::size_t batch_size = 64);

}  // namespace edgeshield
