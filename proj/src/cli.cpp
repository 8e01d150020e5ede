#include "edgeshield/cli.hpp"

#include <cstdlib>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "edgeshield/canny.hpp"
#include "edgeshield/config_file.hpp"
#include "edgeshield/fgsm.hpp"
#include "edgeshield/image_io.hpp"
#include "edgeshield/model_io.hpp"
#include "edgeshield/pipeline.hpp"
#include "edgeshield/report.hpp"

namespace edgeshield {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (YAML)");
  app->add_option("--seed", c.seed, "overrides every seed in the config");
  app->add_option("--epsilon", c.epsilon, "FGSM budget on the [0, 1] scale");
  app->add_option("--out", c.out, "output path");
}

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + " must be a non-negative integer, got '" + text + "'");
  }
}

// Seed precedence: --seed, then EDGESHIELD_SEED, then the config file.
ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig config = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (const char* env = std::getenv("EDGESHIELD_SEED"); env && *env) {
    config.set_all_seeds(parse_seed(env, "EDGESHIELD_SEED"));
  }
  if (c.seed) config.set_all_seeds(*c.seed);
  return config;
}

void require(bool condition, const std::string& message) {
  if (!condition) throw UsageError(message);
}

Track track_of(bool edges) { return edges ? Track::edges : Track::original; }

void print_record(std::ostream& out, const EvalRecord& r) {
  out << r.model_id << " " << to_string(r.provenance) << " loss=" << format_number(r.loss)
      << " accuracy=" << format_number(r.accuracy) << " n=" << r.count << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial robustness lab: CNN training, FGSM attacks and Canny edge defenses", "edgeshield"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "edgeshield 1.0");

  Common common;
  std::string arch, model_path, in_path, indices_text, models_text;
  bool edges = false;
  int label = -1;
  double low = kCannyLow, high = kCannyHigh;

  auto* train_cmd = app.add_subcommand("train", "train one model on the configured corpus");
  add_common(train_cmd, common);
  train_cmd->add_option("--arch", arch, "architecture (default: first configured model)");
  train_cmd->add_flag("--edges", edges, "train on Canny edge maps");

  auto* attack_cmd = app.add_subcommand("attack", "FGSM against a saved model");
  add_common(attack_cmd, common);
  attack_cmd->add_option("--model", model_path, "model file")->required();
  attack_cmd->add_option("--in", in_path, "single input image (PNG/PGM); omit to attack the test split");
  attack_cmd->add_option("--label", label, "true class of --in");
  attack_cmd->add_flag("--edges", edges, "the model takes edge maps");

  auto* edges_cmd = app.add_subcommand("edges", "Canny edge map of one image");
  edges_cmd->add_option("--in", in_path, "input image")->required();
  edges_cmd->add_option("--out", common.out, "output image")->required();
  edges_cmd->add_option("--low", low, "low hysteresis threshold");
  edges_cmd->add_option("--high", high, "high hysteresis threshold");

  auto* eval_cmd = app.add_subcommand("evaluate", "loss and accuracy of a saved model on the test split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--model", model_path, "model file")->required();
  eval_cmd->add_flag("--edges", edges, "the model takes edge maps");

  auto* matrix_cmd = app.add_subcommand("matrix", "fooling-rate transfer matrix");
  add_common(matrix_cmd, common);
  matrix_cmd->add_option("--models", models_text, "comma-separated model files")->required();

  auto* retrain_cmd = app.add_subcommand("retrain", "fine-tune a saved model on a 1:1 clean/FGSM mix");
  add_common(retrain_cmd, common);
  retrain_cmd->add_option("--model", model_path, "model file")->required();
  retrain_cmd->add_flag("--edges", edges, "the model takes edge maps");

  auto* run_cmd = app.add_subcommand("run-all", "full protocol: impact, edges, retrain, visuals, reports");
  add_common(run_cmd, common);

  auto* vis_cmd = app.add_subcommand("visualize", "clean/noisy image and edge panels for test images");
  add_common(vis_cmd, common);
  vis_cmd->add_option("--model", model_path, "model file")->required();
  vis_cmd->add_option("--indices", indices_text, "comma-separated test indices");

  if (argc <= 1) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "edgeshield 1.0\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'edgeshield --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (edges_cmd->parsed()) {
      const Image8 img = read_image(in_path);
      const ImageShape shape{img.channels, img.height, img.width};
      const EdgeMap map = canny(to_planar_unit(img), shape, low, high, 1);
      write_image(common.out, from_planar_unit(map.values, ImageShape{1, img.height, img.width}));
      out << "wrote " << common.out << " (" << map.count() << " edge pixels)\n";
      return kExitOk;
    }

    ExperimentConfig config = resolve_config(common);
    if (!common.out.empty() && (run_cmd->parsed() || vis_cmd->parsed())) config.output = common.out;

    if (run_cmd->parsed()) {
      if (common.epsilon) config.epsilon = EpsilonConfig{*common.epsilon, *common.epsilon, *common.epsilon, *common.epsilon};
      const ExperimentState state = run_all(config);
      for (const auto& r : state.impact_records) print_record(out, r);
      for (const auto& r : state.records) print_record(out, r);
      out << "reports in " << config.output.string() << "\n";
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      require(!common.out.empty(), "train needs --out <model file>");
      if (arch.empty()) arch = config.models.front();
      if (std::find(config.models.begin(), config.models.end(), arch) == config.models.end()) {
        config.models.push_back(arch);
      }
      ExperimentState state = prepare(config);
      const Track track = track_of(edges);
      Model<float> model = build_model<float>(arch, config.input_shape(), state.train().num_classes(),
                                              derive_seed(config.seeds.init, 0));
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seeds.init, 1);
      const TrainHistory h = train(model, state.train_set_for(track), tc);
      save_model(model, common.out);
      out << "trained " << arch << " (" << to_string(track) << ") for " << h.epochs.size() << " epochs, "
          << h.stop_reason << "\n";
      print_record(out, evaluate(model, state.test_set_for(track), arch));
      return kExitOk;
    }

    if (attack_cmd->parsed()) {
      Model<float> model = load_model(model_path);
      const double eps = common.epsilon.value_or(config.epsilon.impact);
      if (!in_path.empty()) {
        require(!common.out.empty(), "attack --in needs --out <image>");
        require(label >= 0, "attack --in needs --label <class>");
        const Image8 img = read_image(in_path);
        require(img.channels == model.input_shape().channels && img.height == model.input_shape().height &&
                    img.width == model.input_shape().width,
                "image does not match the model input " + model.input_shape().str());
        Tensor x(Shape{1, img.channels, img.height, img.width}, to_planar_unit(img));
        Tensor adv = fgsm_perturb(x, input_gradient(model, x, {label}), AttackConfig{eps});
        write_image(common.out, from_planar_unit(adv.data(), model.input_shape()));
        out << "wrote " << common.out << "\n";
        return kExitOk;
      }
      require(!common.out.empty(), "attack needs --out <report directory>");
      ExperimentState state = prepare(config);
      const ImageDataset& test = state.test_set_for(track_of(edges));
      const ImageDataset noisy = edges ? attack_edge_model(model, state.test(), test, eps, config)
                                       : attack_dataset(model, test, AttackConfig{eps});
      const std::vector<EvalRecord> records{evaluate(model, test, model.architecture()),
                                            evaluate(model, noisy, model.architecture())};
      const double rate = fooling_rate(model, test, noisy);
      Table t = records_table(records);
      t.columns.push_back("fooling_rate");
      for (auto& row : t.rows) row.emplace_back(rate);
      emit_report(t, common.out, "attack", state.config_hash, {});
      for (const auto& r : records) print_record(out, r);
      out << "fooling_rate=" << format_number(rate) << "\n";
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      Model<float> model = load_model(model_path);
      ExperimentState state = prepare(config);
      const ImageDataset& test = state.test_set_for(track_of(edges));
      std::vector<EvalRecord> records{evaluate(model, test, model.architecture())};
      if (common.epsilon) {
        const ImageDataset noisy = edges ? attack_edge_model(model, state.test(), test, *common.epsilon, config)
                                         : attack_dataset(model, test, AttackConfig{*common.epsilon});
        records.push_back(evaluate(model, noisy, model.architecture()));
      }
      if (!common.out.empty()) emit_report(records_table(records), common.out, "evaluate", state.config_hash, {});
      for (const auto& r : records) print_record(out, r);
      return kExitOk;
    }

    if (matrix_cmd->parsed()) {
      require(!common.out.empty(), "matrix needs --out <report directory>");
      std::vector<Model<float>> models;
      std::vector<NamedModel> named;
      std::stringstream list(models_text);
      for (std::string path; std::getline(list, path, ',');) {
        if (!path.empty()) models.push_back(load_model(path));
      }
      require(!models.empty(), "matrix needs at least one model file");
      for (std::size_t i = 0; i < models.size(); ++i) {
        named.push_back(NamedModel{models[i].architecture() + "#" + std::to_string(i), &models[i]});
      }
      ExperimentState state = prepare(config);
      const FoolingMatrix m = transfer_matrix(named, state.test(), common.epsilon.value_or(config.epsilon.impact));
      emit_report(matrix_table(m), common.out, "transfer_matrix", state.config_hash, {});
      out << to_csv(matrix_table(m));
      return kExitOk;
    }

    if (retrain_cmd->parsed()) {
      require(!common.out.empty(), "retrain needs --out <model file>");
      Model<float> source = load_model(model_path);
      ExperimentState state = prepare(config);
      const Track track = track_of(edges);
      const double eps = common.epsilon.value_or(config.epsilon.retrain);
      const ImageDataset& clean = state.train_set_for(track);
      const ImageDataset noisy = edges ? attack_edge_model(source, state.train(), clean, eps, config)
                                       : attack_dataset(source, clean, AttackConfig{eps});
      Model<float> retrained = retrain_model(source, clean, noisy, config, derive_seed(config.seeds.sampling, 0));
      save_model(retrained, common.out);
      const ImageDataset& test = state.test_set_for(track);
      const ImageDataset fresh = edges ? attack_edge_model(retrained, state.test(), test, eps, config)
                                       : attack_dataset(retrained, test, AttackConfig{eps});
      print_record(out, evaluate(retrained, test, retrained.architecture()));
      print_record(out, evaluate(retrained, fresh, retrained.architecture()));
      return kExitOk;
    }

    if (vis_cmd->parsed()) {
      if (common.epsilon) config.epsilon.visual = *common.epsilon;
      std::vector<std::size_t> indices = config.visualize.indices;
      if (!indices_text.empty()) {
        indices.clear();
        std::stringstream list(indices_text);
        for (std::string item; std::getline(list, item, ',');) {
          indices.push_back(static_cast<std::size_t>(parse_seed(item, "--indices entry")));
        }
      }
      ExperimentState state = prepare(config);
      Model<float> model = load_model(model_path);
      const std::string id = model.architecture();
      state.models.emplace(id, std::move(model));
      run_pixel_analysis(state, id, indices);
      emit_report(pixel_table(state.pixel_summary), config.output, "pixel_summary", state.config_hash,
                  state.manifest);
      out << to_csv(pixel_table(state.pixel_summary));
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace edgeshield
