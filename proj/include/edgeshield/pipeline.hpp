#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgeshield/dataset.hpp"
#include "edgeshield/evaluation.hpp"
#include "edgeshield/model.hpp"
#include "edgeshield/train.hpp"

namespace edgeshield {

enum class AttackSurface {
  edge_space,      // FGSM on the edge map fed to the edge-trained model
  raw_then_edges,  // signed edge-space gradient applied to the raw image, then re-extracted
};

std::string to_string(AttackSurface s);
AttackSurface attack_surface_from_string(const std::string& name);

struct DataConfig {
  std::string source = "synthetic";  // or a directory of class subdirectories
  std::size_t per_class = 300;       // synthetic only
  double noise = 0.03;               // synthetic only
  std::size_t image_size = 32;
  std::size_t channels = 3;
  double train_fraction = 0.8;
};

struct EpsilonConfig {
  double impact = 0.05;
  double edge = 0.015;
  double retrain = 0.015;
  double visual = 0.04;
};

struct RetrainConfig {
  std::size_t per_side = 160;
  bool from_scratch = false;
};

struct SeedConfig {
  std::uint64_t data = 1;
  std::uint64_t init = 2;
  std::uint64_t sampling = 3;
};

struct VisualConfig {
  std::vector<std::size_t> indices = {0, 1, 2, 3};
  std::size_t patch = 32;
};

struct ExperimentConfig {
  DataConfig data;
  std::vector<std::string> models = {"paper_cnn", "resnet_s"};
  EpsilonConfig epsilon;
  double canny_low = 100.0;
  double canny_high = 200.0;
  AttackSurface attack_surface = AttackSurface::edge_space;
  RetrainConfig retrain;
  TrainConfig train;  // train.seed is ignored; seeds.init drives training
  SeedConfig seeds;
  VisualConfig visualize;
  std::filesystem::path output = "out";

  /// Throws std::invalid_argument when a field violates a module precondition.
  void validate() const;
  ImageShape input_shape() const {
    return ImageShape{data.channels, data.image_size, data.image_size};
  }
  void set_all_seeds(std::uint64_t seed) { seeds = SeedConfig{seed, seed, seed}; }
};

enum class Track { original, edges };
enum class Phase { train, retrain };
std::string to_string(Track t);
std::string to_string(Phase p);

/// "<arch>/<track>/<phase>", the id used in reports and file names.
std::string variant_id(const std::string& arch, Track track, Phase phase);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string kind;  // model | report | image | dataset
  std::string checksum;
  std::map<std::string, std::string> attributes;
};

struct PixelSummary {
  std::size_t index = 0;
  int label = 0;
  double mean_pixel_diff = 0;    // mean |noisy - clean| over all values
  double edge_hamming_diff = 0;  // fraction of edge pixels that differ
};

struct ExperimentState {
  ExperimentConfig config;
  std::string config_hash;
  std::optional<ImageDataset> train_set;
  std::optional<ImageDataset> test_set;
  std::optional<ImageDataset> train_edges;
  std::optional<ImageDataset> test_edges;
  std::map<std::string, Model<float>> models;  // keyed by variant_id
  std::map<std::string, TrainHistory> histories;
  std::vector<EvalRecord> impact_records;  // at epsilon.impact, model_id = architecture
  std::vector<EvalRecord> records;         // edge and retrain phases, model_id = variant_id
  std::optional<FoolingMatrix> matrix;
  std::vector<PixelSummary> pixel_summary;
  std::vector<ManifestEntry> manifest;

  const ImageDataset& train() const;
  const ImageDataset& test() const;
  /// Canny versions of the splits, computed on first use.
  const ImageDataset& train_set_for(Track track);
  const ImageDataset& test_set_for(Track track);
  Model<float>& model(const std::string& id);
  const EvalRecord& record(const std::string& model_id, Provenance provenance) const;
};

/// Loads the configured directory or synthesizes the shape corpus.
ImageDataset load_corpus(const ExperimentConfig& config);

/// Loads or synthesizes the corpus and splits it.
ExperimentState prepare(const ExperimentConfig& config);

/// Trains each configured model on clean data, evaluates it on clean and
/// self-FGSM test sets and fills the transfer matrix.
void run_impact(ExperimentState& state);

/// Trains the edge-input twin of each model and evaluates both tracks at the
/// edge epsilon.
void run_edge_experiment(ExperimentState& state);

/// Fine-tunes (or retrains) every train-phase model on a 1:1 clean/FGSM mix
/// of its own training data, then evaluates against noise regenerated from
/// the retrained model. Train-phase model files are never rewritten.
void run_retrain(ExperimentState& state);

/// Writes per-image panels (clean, clean edges, noisy, noisy edges),
/// patches and difference heatmaps under visuals/, and fills pixel_summary.
void run_pixel_analysis(ExperimentState& state, const std::string& model_id,
                        const std::vector<std::size_t>& indices);

/// Table rows for every model with both tracks in both phases.
std::vector<ExperimentRow> experiment_rows(const ExperimentState& state);

/// Writes CSV and JSON reports plus manifest.json.
void write_reports(ExperimentState& state);

/// prepare, the four phases and write_reports.
ExperimentState run_all(const ExperimentConfig& config);

/// Continues training a copy of `source` (or a fresh model when
/// retrain.from_scratch is set) on a 1:1 stratified mix of clean and noisy.
Model<float> retrain_model(const Model<float>& source, const ImageDataset& clean, const ImageDataset& noisy,
                           const ExperimentConfig& config, std::uint64_t seed,
                           TrainHistory* history = nullptr);

/// Test set for an edge-trained model under the configured attack surface.
ImageDataset attack_edge_model(Model<float>& edge_model, const ImageDataset& raw,
                               const ImageDataset& edges, double epsilon, const ExperimentConfig& config);

}  // namespace edgeshield
