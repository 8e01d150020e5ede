#include "edgeshield/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "edgeshield/ops.hpp"
#include "edgeshield/train.hpp"

namespace edgeshield {

EvalRecord evaluate(Model<float>& model, const ImageDataset& dataset, const std::string& model_id,
                    std::size_t batch_size) {
  if (dataset.empty()) throw DatasetError("cannot evaluate on an empty dataset");
  if (!(dataset.image_shape() == model.input_shape())) {
    throw ShapeError("evaluate: images are " + dataset.image_shape().str() + " but the model expects " +
                     model.input_shape().str());
  }
  const Mode previous = model.mode();
  model.set_mode(Mode::infer);
  NoGradScope<float> no_grad;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto labels = dataset.batch_labels(idx);
    Tensor logits = model.logits(dataset.batch(idx));
    loss += static_cast<double>(
                softmax_cross_entropy(logits, one_hot<float>(labels, model.num_classes())).item()) *
            static_cast<double>(idx.size());
    const auto predicted = argmax_rows(logits);
    for (std::size_t i = 0; i < idx.size(); ++i) correct += predicted[i] == labels[i];
  }
  model.set_mode(previous);
  const double n = static_cast<double>(dataset.size());
  return EvalRecord{model_id, dataset.provenance(), std::max(0.0, loss / n),
                    static_cast<double>(correct) / n, dataset.size()};
}

double fooling_rate(Model<float>& model, const ImageDataset& clean, const ImageDataset& noisy) {
  if (clean.size() != noisy.size() || clean.labels() != noisy.labels() ||
      !(clean.image_shape() == noisy.image_shape())) {
    throw DatasetError("fooling_rate: clean and noisy sets are not index-aligned");
  }
  if (clean.empty()) throw DatasetError("fooling_rate: empty dataset");
  const auto a = predict(model, clean.batch(0, clean.size())).labels;
  const auto b = predict(model, noisy.batch(0, noisy.size())).labels;
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < a.size(); ++i) fooled += a[i] != b[i];
  return static_cast<double>(fooled) / static_cast<double>(a.size());
}

FoolingMatrix transfer_matrix(const std::vector<NamedModel>& models, const ImageDataset& test,
                              double epsilon) {
  if (models.empty()) throw std::invalid_argument("transfer_matrix needs at least one model");
  for (const auto& m : models) {
    if (!(m.model->input_shape() == models.front().model->input_shape()) ||
        m.model->num_classes() != models.front().model->num_classes()) {
      throw ModelError("transfer_matrix: models disagree on input shape or class count");
    }
  }
  FoolingMatrix out;
  for (const auto& m : models) {
    out.generators.push_back(m.id);
    out.evaluated.push_back(m.id);
  }
  for (const auto& g : models) {
    const ImageDataset noisy = attack_dataset(*g.model, test, AttackConfig{epsilon});
    std::vector<double> row;
    for (const auto& m : models) row.push_back(fooling_rate(*m.model, test, noisy));
    out.rates.push_back(std::move(row));
  }
  return out;
}

std::vector<ExperimentRow> experiment_table(const std::vector<VariantResults>& models) {
  std::vector<ExperimentRow> rows;
  for (const auto& m : models) {
    ExperimentRow row{m.model_id, {}};
    for (std::size_t c = 0; c < kExperimentColumns.size(); ++c) {
      auto it = std::find_if(m.cells.begin(), m.cells.end(),
                             [&](const auto& cell) { return cell.first == kExperimentColumns[c]; });
      if (it == m.cells.end()) {
        throw std::invalid_argument("experiment_table: " + m.model_id + " lacks " + kExperimentColumns[c]);
      }
      row.accuracy[c] = it->second.accuracy;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace edgeshield
