#pragma once

#include <array>
#include <string>
#include <vector>

#include "edgeshield/dataset.hpp"
#include "edgeshield/fgsm.hpp"
#include "edgeshield/model.hpp"

namespace edgeshield {

struct EvalRecord {
  std::string model_id;
  Provenance provenance = Provenance::clean;
  double loss = 0;      // mean categorical cross-entropy
  double accuracy = 0;  // argmax-correct fraction, ties to the lowest index
  std::size_t count = 0;
};

/// Infer-mode loss and accuracy; restores the model's previous mode.
EvalRecord evaluate(Model<float>& model, const ImageDataset& dataset, const std::string& model_id = "",
                    std::size_t batch_size = 128);

/// Fraction of index-aligned samples whose predicted class differs between
/// the clean and noisy sets. This is a prediction-change rate, not an
/// accuracy drop.
double fooling_rate(Model<float>& model, const ImageDataset& clean, const ImageDataset& noisy);

/// Rows are noise generators, columns the evaluated models.
struct FoolingMatrix {
  std::vector<std::string> generators;
  std::vector<std::string> evaluated;
  std::vector<std::vector<double>> rates;

  double at(std::size_t generator, std::size_t model) const { return rates.at(generator).at(model); }
};

struct NamedModel {
  std::string id;
  Model<float>* model;
};

/// FGSM test set per generator, then every model's fooling rate on it.
FoolingMatrix transfer_matrix(const std::vector<NamedModel>& models, const ImageDataset& test,
                              double epsilon);

/// Column order: training/original/clean, training/original/noisy,
/// training/edges/clean, training/edges/noisy, then the same four for
/// retraining.
inline constexpr std::array<const char*, 8> kExperimentColumns = {
    "train_original_clean", "train_original_noisy", "train_edges_clean", "train_edges_noisy",
    "retrain_original_clean", "retrain_original_noisy", "retrain_edges_clean", "retrain_edges_noisy"};

struct ExperimentRow {
  std::string model_id;
  std::array<double, 8> accuracy{};
};

/// Accuracy records of one model's four variants on clean and noisy test sets.
/// Keyed by kExperimentColumns entries; each must be present.
struct VariantResults {
  std::string model_id;
  std::vector<std::pair<std::string, EvalRecord>> cells;
};

std::vector<ExperimentRow> experiment_table(const std::vector<VariantResults>& models);

}  // namespace edgeshield
