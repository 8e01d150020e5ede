#include "edgeshield/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "edgeshield/canny.hpp"
#include "edgeshield/config_file.hpp"
#include "edgeshield/fgsm.hpp"
#include "edgeshield/image_io.hpp"
#include "edgeshield/model_io.hpp"
#include "edgeshield/report.hpp"

namespace edgeshield {

std::string to_string(AttackSurface s) {
  return s == AttackSurface::edge_space ? "edge_space" : "raw_then_edges";
}

AttackSurface attack_surface_from_string(const std::string& name) {
  if (name == "edge_space") return AttackSurface::edge_space;
  if (name == "raw_then_edges") return AttackSurface::raw_then_edges;
  throw std::invalid_argument("unknown attack_surface '" + name + "' (edge_space | raw_then_edges)");
}

std::string to_string(Track t) { return t == Track::original ? "original" : "edges"; }
std::string to_string(Phase p) { return p == Phase::train ? "train" : "retrain"; }

std::string variant_id(const std::string& arch, Track track, Phase phase) {
  return arch + "/" + to_string(track) + "/" + to_string(phase);
}

void ExperimentConfig::validate() const {
  if (data.source.empty()) throw std::invalid_argument("data.source must not be empty");
  if (data.source == "synthetic") {
    if (data.per_class < 1) throw std::invalid_argument("data.per_class must be >= 1");
    if (data.image_size < 16) throw std::invalid_argument("data.image_size must be >= 16 for the synthetic corpus");
    if (!(data.noise >= 0.0)) throw std::invalid_argument("data.noise must be non-negative");
  }
  if (data.image_size < 8) throw std::invalid_argument("data.image_size must be >= 8");
  if (data.channels != 1 && data.channels != 3) throw std::invalid_argument("data.channels must be 1 or 3");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw std::invalid_argument("data.train_fraction must lie strictly between 0 and 1");
  }
  if (models.empty()) throw std::invalid_argument("models must list at least one architecture");
  const auto known = architecture_names();
  for (const auto& m : models) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw std::invalid_argument("unknown model '" + m + "'");
    }
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (std::find(models.begin() + static_cast<std::ptrdiff_t>(i) + 1, models.end(), models[i]) != models.end()) {
      throw std::invalid_argument("model '" + models[i] + "' listed twice");
    }
  }
  for (double e : {epsilon.impact, epsilon.edge, epsilon.retrain, epsilon.visual}) {
    if (!(e >= 0.0)) throw std::invalid_argument("epsilon values must be non-negative");
  }
  if (!(canny_low >= 0.0) || canny_low > canny_high) {
    throw std::invalid_argument("canny thresholds need 0 <= low <= high");
  }
  if (retrain.per_side < 1) throw std::invalid_argument("retrain.per_side must be >= 1");
  if (visualize.patch < 1) throw std::invalid_argument("visualize.patch must be >= 1");
  train.validate();
}

namespace {

constexpr std::uint64_t kSplitStream = 0x5B;

std::size_t arch_index(const ExperimentConfig& config, const std::string& arch) {
  auto it = std::find(config.models.begin(), config.models.end(), arch);
  if (it == config.models.end()) throw std::invalid_argument("model '" + arch + "' is not configured");
  return static_cast<std::size_t>(it - config.models.begin());
}

// One stream per (architecture, track, phase, purpose).
std::uint64_t variant_seed(std::uint64_t base, std::size_t arch, Track track, Phase phase, std::uint64_t purpose) {
  return derive_seed(base, (arch << 8) | (static_cast<std::uint64_t>(track) << 4) |
                               (static_cast<std::uint64_t>(phase) << 2) | purpose);
}

std::string model_file(const std::string& arch, Track track, Phase phase) {
  return "models/" + arch + "_" + to_string(track) + "_" + to_string(phase) + ".edgs";
}

void add_model_entry(ExperimentState& state, const std::string& arch, Track track, Phase phase) {
  const std::string rel = model_file(arch, track, phase);
  const auto& history = state.histories.at(variant_id(arch, track, phase));
  state.manifest.push_back(ManifestEntry{
      rel, "model", file_checksum(state.config.output / rel),
      {{"variant", variant_id(arch, track, phase)},
       {"architecture", arch},
       {"track", to_string(track)},
       {"phase", to_string(phase)},
       {"epochs_run", std::to_string(history.epochs.size())},
       {"stop_reason", history.stop_reason},
       {"retrain_mode", phase == Phase::retrain
                            ? (state.config.retrain.from_scratch ? "from_scratch" : "fine_tune")
                            : "n/a"}}});
}

void add_dataset_entry(ExperimentState& state, const std::string& name, const ImageDataset& data,
                       const std::string& generator, double epsilon) {
  state.manifest.push_back(ManifestEntry{name, "dataset", "",
                                         {{"provenance", to_string(data.provenance())},
                                          {"count", std::to_string(data.size())},
                                          {"generator", generator},
                                          {"epsilon", format_number(epsilon)}}});
}

TrainConfig train_config_for(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig tc = config.train;
  tc.seed = seed;
  return tc;
}

Model<float>& train_variant(ExperimentState& state, const std::string& arch, Track track) {
  const std::string id = variant_id(arch, track, Phase::train);
  if (auto it = state.models.find(id); it != state.models.end()) return it->second;
  const auto& cfg = state.config;
  const std::size_t a = arch_index(cfg, arch);
  Model<float> model =
      build_model<float>(arch, cfg.input_shape(), state.train().num_classes(),
                         variant_seed(cfg.seeds.init, a, track, Phase::train, 0));
  state.histories[id] = train(model, state.train_set_for(track),
                              train_config_for(cfg, variant_seed(cfg.seeds.init, a, track, Phase::train, 1)));
  save_model(model, cfg.output / model_file(arch, track, Phase::train));
  add_model_entry(state, arch, track, Phase::train);
  return state.models.emplace(id, std::move(model)).first->second;
}

ImageDataset attack_for(ExperimentState& state, Model<float>& model, Track track, bool test, double epsilon) {
  const ImageDataset& raw = test ? state.test() : state.train();
  if (track == Track::original) return attack_dataset(model, raw, AttackConfig{epsilon});
  return attack_edge_model(model, raw, test ? state.test_set_for(Track::edges) : state.train_set_for(Track::edges),
                           epsilon, state.config);
}

void upsert(std::vector<EvalRecord>& records, EvalRecord record) {
  auto it = std::find_if(records.begin(), records.end(), [&](const EvalRecord& r) {
    return r.model_id == record.model_id && r.provenance == record.provenance;
  });
  if (it != records.end()) {
    *it = std::move(record);
  } else {
    records.push_back(std::move(record));
  }
}

Image8 to_rgb8(std::span<const float> chw, ImageShape shape) {
  Image8 img = from_planar_unit(chw, shape);
  if (img.channels == 3) return img;
  Image8 rgb{img.width, img.height, 3, std::vector<std::uint8_t>(img.pixels.size() * 3)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = img.pixels[i];
  }
  return rgb;
}

Image8 crop(const Image8& img, std::size_t size) {
  const std::size_t w = std::min(size, img.width), h = std::min(size, img.height);
  const std::size_t x0 = (img.width - w) / 2, y0 = (img.height - h) / 2;
  Image8 out{w, h, img.channels, std::vector<std::uint8_t>(w * h * img.channels)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.pixels[(y * w + x) * img.channels + c] = img.pixels[((y0 + y) * img.width + x0 + x) * img.channels + c];
      }
    }
  }
  return out;
}

}  // namespace

const ImageDataset& ExperimentState::train() const {
  if (!train_set) throw std::logic_error("experiment state has no training split");
  return *train_set;
}

const ImageDataset& ExperimentState::test() const {
  if (!test_set) throw std::logic_error("experiment state has no test split");
  return *test_set;
}

const ImageDataset& ExperimentState::train_set_for(Track track) {
  if (track == Track::original) return train();
  if (!train_edges) train_edges = edge_transform(train(), config.canny_low, config.canny_high);
  return *train_edges;
}

const ImageDataset& ExperimentState::test_set_for(Track track) {
  if (track == Track::original) return test();
  if (!test_edges) test_edges = edge_transform(test(), config.canny_low, config.canny_high);
  return *test_edges;
}

Model<float>& ExperimentState::model(const std::string& id) {
  auto it = models.find(id);
  if (it == models.end()) throw std::invalid_argument("no trained model '" + id + "'");
  return it->second;
}

const EvalRecord& ExperimentState::record(const std::string& model_id, Provenance provenance) const {
  for (const auto& r : records) {
    if (r.model_id == model_id && r.provenance == provenance) return r;
  }
  throw std::invalid_argument("no record for " + model_id + " on " + to_string(provenance));
}

ImageDataset load_corpus(const ExperimentConfig& config) {
  if (config.data.source == "synthetic") {
    return synth_shapes(SynthSpec{config.data.per_class, config.data.image_size, config.data.channels,
                                  config.data.noise, config.seeds.data});
  }
  return load_image_dir(config.data.source, config.input_shape()).dataset;
}

ExperimentState prepare(const ExperimentConfig& config) {
  config.validate();
  ExperimentState state;
  state.config = config;
  state.config_hash = config_hash(config);
  auto [train_part, test_part] =
      split(load_corpus(config), SplitSpec{config.data.train_fraction, derive_seed(config.seeds.data, kSplitStream)});
  state.train_set.emplace(std::move(train_part));
  state.test_set.emplace(std::move(test_part));
  return state;
}

ImageDataset attack_edge_model(Model<float>& edge_model, const ImageDataset& raw, const ImageDataset& edges,
                               double epsilon, const ExperimentConfig& config) {
  if (config.attack_surface == AttackSurface::edge_space) {
    return attack_dataset(edge_model, edges, AttackConfig{epsilon});
  }
  if (raw.size() != edges.size()) throw DatasetError("raw and edge sets are not aligned");
  const ImageShape shape = raw.image_shape();
  std::vector<float> pixels;
  pixels.reserve(edges.pixels().size());
  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < raw.size(); start += kBatch) {
    const std::size_t end = std::min(raw.size(), start + kBatch);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    // Canny has no useful derivative; the edge-space gradient stands in for it.
    Tensor grad = input_gradient(edge_model, edges.batch(idx), edges.batch_labels(idx));
    Tensor adv = fgsm_perturb(raw.batch(idx), grad, AttackConfig{epsilon});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::span<const float> image(adv.data().data() + i * shape.numel(), shape.numel());
      const EdgeMap map = canny(image, shape, config.canny_low, config.canny_high, shape.channels);
      pixels.insert(pixels.end(), map.values.begin(), map.values.end());
    }
  }
  return ImageDataset(shape, std::move(pixels), edges.labels(), edges.class_names(), Provenance::edges_noisy);
}

Model<float> retrain_model(const Model<float>& source, const ImageDataset& clean, const ImageDataset& noisy,
                           const ExperimentConfig& config, std::uint64_t seed, TrainHistory* history) {
  const std::size_t m = config.retrain.per_side;
  if (clean.size() < m || noisy.size() < m) {
    throw DatasetError("retrain.per_side = " + std::to_string(m) + " exceeds the " +
                       std::to_string(std::min(clean.size(), noisy.size())) + " available training samples");
  }
  const ImageDataset mix = retrain_mix(clean, noisy, m, derive_seed(seed, 0));
  Model<float> model = config.retrain.from_scratch
                           ? build_model<float>(source.architecture(), source.input_shape(),
                                                source.num_classes(), derive_seed(seed, 1))
                           : source.clone();
  TrainHistory h = train(model, mix, train_config_for(config, derive_seed(seed, 2)));
  if (history) *history = std::move(h);
  return model;
}

void run_impact(ExperimentState& state) {
  const auto& cfg = state.config;
  const double eps = cfg.epsilon.impact;
  std::vector<NamedModel> named;
  for (const auto& arch : cfg.models) {
    Model<float>& model = train_variant(state, arch, Track::original);
    upsert(state.impact_records, evaluate(model, state.test(), arch));
    const ImageDataset noisy = attack_dataset(model, state.test(), AttackConfig{eps});
    add_dataset_entry(state, "impact/" + arch + "/test-noisy", noisy, variant_id(arch, Track::original, Phase::train),
                      eps);
    upsert(state.impact_records, evaluate(model, noisy, arch));
    named.push_back(NamedModel{arch, &model});
  }
  state.matrix = transfer_matrix(named, state.test(), eps);
}

void run_edge_experiment(ExperimentState& state) {
  const double eps = state.config.epsilon.edge;
  for (const auto& arch : state.config.models) {
    for (Track track : {Track::original, Track::edges}) {
      const std::string id = variant_id(arch, track, Phase::train);
      Model<float>& model = train_variant(state, arch, track);
      upsert(state.records, evaluate(model, state.test_set_for(track), id));
      const ImageDataset noisy = attack_for(state, model, track, true, eps);
      add_dataset_entry(state, "edge/" + id + "/test-noisy", noisy, id, eps);
      upsert(state.records, evaluate(model, noisy, id));
    }
  }
}

void run_retrain(ExperimentState& state) {
  const auto& cfg = state.config;
  const double eps = cfg.epsilon.retrain;
  for (const auto& arch : cfg.models) {
    const std::size_t a = arch_index(cfg, arch);
    for (Track track : {Track::original, Track::edges}) {
      const std::string source_id = variant_id(arch, track, Phase::train);
      const std::string id = variant_id(arch, track, Phase::retrain);
      Model<float>& source = train_variant(state, arch, track);
      const ImageDataset noisy_train = attack_for(state, source, track, false, eps);
      add_dataset_entry(state, "retrain/" + id + "/train-noisy", noisy_train, source_id, eps);
      TrainHistory history;
      Model<float> retrained =
          retrain_model(source, state.train_set_for(track), noisy_train, cfg,
                        variant_seed(cfg.seeds.sampling, a, track, Phase::retrain, 0), &history);
      state.histories[id] = std::move(history);
      save_model(retrained, cfg.output / model_file(arch, track, Phase::retrain));
      add_model_entry(state, arch, track, Phase::retrain);
      Model<float>& model = state.models.insert_or_assign(id, std::move(retrained)).first->second;

      upsert(state.records, evaluate(model, state.test_set_for(track), id));
      // Fresh noise from the retrained model, not the train-phase noisy set.
      const ImageDataset noisy = attack_for(state, model, track, true, eps);
      add_dataset_entry(state, "retrain/" + id + "/test-noisy", noisy, id, eps);
      upsert(state.records, evaluate(model, noisy, id));
    }
  }
}

void run_pixel_analysis(ExperimentState& state, const std::string& model_id,
                        const std::vector<std::size_t>& indices) {
  const auto& cfg = state.config;
  const ImageDataset& test = state.test();
  for (std::size_t i : indices) {
    if (i >= test.size()) {
      throw std::out_of_range("image index " + std::to_string(i) + " outside the " +
                              std::to_string(test.size()) + "-image test set");
    }
  }
  Model<float>& model = state.model(model_id);
  const double eps = cfg.epsilon.visual;
  const ImageShape shape = test.image_shape();
  const std::size_t w = shape.width, h = shape.height, plane = w * h, gap = 2;

  const std::size_t grid_w = 4 * w + 3 * gap;
  const std::size_t grid_h = indices.size() * h + (indices.empty() ? 0 : (indices.size() - 1) * gap);
  Image8 grid{grid_w, std::max<std::size_t>(grid_h, 1), 3, std::vector<std::uint8_t>(grid_w * std::max<std::size_t>(grid_h, 1) * 3, 255)};

  state.pixel_summary.clear();
  const std::filesystem::path dir = cfg.output / "visuals";
  for (std::size_t row = 0; row < indices.size(); ++row) {
    const std::size_t idx = indices[row];
    const std::vector<std::size_t> one{idx};
    Tensor clean = test.batch(one);
    Tensor noisy = fgsm_perturb(clean, input_gradient(model, clean, test.batch_labels(one)), AttackConfig{eps});
    const std::span<const float> clean_px(clean.data().data(), shape.numel());
    const std::span<const float> noisy_px(noisy.data().data(), shape.numel());
    const EdgeMap clean_edges = canny(clean_px, shape, cfg.canny_low, cfg.canny_high, 1);
    const EdgeMap noisy_edges = canny(noisy_px, shape, cfg.canny_low, cfg.canny_high, 1);

    PixelSummary s{idx, test.label(idx), 0.0, 0.0};
    std::vector<float> pixel_diff(plane, 0.0f), edge_diff(plane, 0.0f);
    for (std::size_t c = 0; c < shape.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const float d = std::fabs(noisy_px[c * plane + p] - clean_px[c * plane + p]);
        s.mean_pixel_diff += d;
        pixel_diff[p] += d / static_cast<float>(shape.channels);
      }
    }
    s.mean_pixel_diff /= static_cast<double>(shape.numel());
    std::size_t differing = 0;
    for (std::size_t p = 0; p < plane; ++p) {
      const bool differs = clean_edges.values[p] != noisy_edges.values[p];
      differing += differs;
      edge_diff[p] = differs ? 1.0f : 0.0f;
      // Heatmap full scale is the attack budget.
      pixel_diff[p] = eps > 0.0 ? std::min(1.0f, pixel_diff[p] / static_cast<float>(eps)) : 0.0f;
    }
    s.edge_hamming_diff = static_cast<double>(differing) / static_cast<double>(plane);
    state.pixel_summary.push_back(s);

    const Image8 panels[4] = {to_rgb8(clean_px, shape), to_rgb8(clean_edges.values, ImageShape{1, h, w}),
                              to_rgb8(noisy_px, shape), to_rgb8(noisy_edges.values, ImageShape{1, h, w})};
    const char* names[4] = {"clean", "clean_edges", "noisy", "noisy_edges"};
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            grid.pixels[((row * (h + gap) + y) * grid_w + k * (w + gap) + x) * 3 + c] =
                panels[k].pixels[(y * w + x) * 3 + c];
          }
        }
      }
      const std::string stem = "image" + std::to_string(idx) + "_";
      const std::string file = stem + "patch_" + names[k] + ".png";
      write_image(dir / file, crop(panels[k], cfg.visualize.patch));
      state.manifest.push_back(ManifestEntry{"visuals/" + file, "image", file_checksum(dir / file), {}});
    }
    const std::string stem = "image" + std::to_string(idx) + "_";
    const std::pair<const char*, const std::vector<float>*> maps[2] = {{"pixel_diff", &pixel_diff},
                                                                       {"edge_diff", &edge_diff}};
    for (const auto& [name, values] : maps) {
      const std::string file = stem + name + ".png";
      write_image(dir / file, to_rgb8(*values, ImageShape{1, h, w}));
      state.manifest.push_back(ManifestEntry{"visuals/" + file, "image", file_checksum(dir / file), {}});
    }
  }
  if (!indices.empty()) {
    write_image(dir / "grid.png", grid);
    state.manifest.push_back(ManifestEntry{"visuals/grid.png", "image", file_checksum(dir / "grid.png"),
                                           {{"model", model_id}, {"epsilon", format_number(eps)}}});
  }
}

std::vector<ExperimentRow> experiment_rows(const ExperimentState& state) {
  std::vector<VariantResults> results;
  for (const auto& arch : state.config.models) {
    VariantResults v{arch, {}};
    for (Phase phase : {Phase::train, Phase::retrain}) {
      for (Track track : {Track::original, Track::edges}) {
        const std::string id = variant_id(arch, track, phase);
        const bool edges = track == Track::edges;
        const std::string prefix = to_string(phase) + "_" + to_string(track) + "_";
        for (const auto& r : state.records) {
          if (r.model_id != id) continue;
          const bool noisy = r.provenance == (edges ? Provenance::edges_noisy : Provenance::noisy);
          v.cells.emplace_back(prefix + (noisy ? "noisy" : "clean"), r);
        }
      }
    }
    results.push_back(std::move(v));
  }
  return experiment_table(results);
}

void write_reports(ExperimentState& state) {
  const auto& dir = state.config.output;
  std::vector<std::pair<std::string, Table>> tables;
  if (!state.impact_records.empty()) tables.emplace_back("impact", records_table(state.impact_records));
  if (state.matrix) tables.emplace_back("transfer_matrix", matrix_table(*state.matrix));
  if (!state.records.empty()) tables.emplace_back("records", records_table(state.records));
  try {
    tables.emplace_back("experiment_table", experiment_rows_table(experiment_rows(state)));
  } catch (const std::invalid_argument&) {
    // Not every phase has run.
  }
  if (!state.pixel_summary.empty()) tables.emplace_back("pixel_summary", pixel_table(state.pixel_summary));

  for (const auto& [name, table] : tables) emit_report(table, dir, name, state.config_hash, state.manifest);
  std::vector<ManifestEntry> full = state.manifest;
  for (const auto& [name, table] : tables) {
    for (const char* ext : {".csv", ".json"}) {
      const std::string file = name + ext;
      full.push_back(ManifestEntry{file, "report", file_checksum(dir / file), {}});
    }
  }
  atomic_write(dir / "config.yaml", serialize_config(state.config));
  atomic_write(dir / "manifest.json", manifest_json(state.config_hash, full));
}

ExperimentState run_all(const ExperimentConfig& config) {
  ExperimentState state = prepare(config);
  try {
    run_impact(state);
    run_edge_experiment(state);
    run_retrain(state);
    const std::string visual_model = variant_id(config.models.front(), Track::original, Phase::train);
    run_pixel_analysis(state, visual_model, config.visualize.indices);
    write_reports(state);
  } catch (const std::exception& e) {
    state.manifest.push_back(ManifestEntry{"", "failure", "", {{"error", e.what()}}});
    try {
      write_reports(state);
    } catch (const std::exception&) {
      // The original error is the one worth reporting.
    }
    throw;
  }
  return state;
}

}  // namespace edgeshield
