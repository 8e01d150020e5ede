// Runs the nine acceptance criteria and prints one PASS/FAIL line per
// criterion. Exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "canny_reference.hpp"
#include "edgeshield/canny.hpp"
#include "edgeshield/cli.hpp"
#include "edgeshield/dataset.hpp"
#include "edgeshield/evaluation.hpp"
#include "edgeshield/fgsm.hpp"
#include "edgeshield/pipeline.hpp"
#include "edgeshield/train.hpp"

using namespace edgeshield;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

fs::path scratch_root() {
  const fs::path root = fs::temp_directory_path() / "edgeshield_acceptance";
  return root;
}

// ---------------------------------------------------------------- criterion 1

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  const ImageShape shape{3, 32, 32};
  auto model = build_paper_cnn<double>(shape, 2, 101);
  model.set_mode(Mode::infer);
  Rng rng(102);
  BasicTensor<double> x(Shape{2, 3, 32, 32});
  for (auto& v : x.data()) v = rng.uniform(0.0, 1.0);
  const std::vector<int> labels{0, 1};
  const BasicTensor<double> g = input_gradient(model, x, labels);
  auto loss = [&](const BasicTensor<double>& in) {
    NoGradScope<double> off;
    return softmax_cross_entropy(model.logits(in), one_hot<double>(labels, 2)).item();
  };
  // Wider steps straddle ReLU and max-pool switches on a few pixels of a net
  // this size; in double, cancellation at this step stays near 1e-11.
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t floored = 0;
  for (int k = 0; k < 500; ++k) {
    const std::size_t i = rng.below(x.size());
    auto up = x.clone(), down = x.clone();
    up[i] += h;
    down[i] -= h;
    const double fd = (loss(up) - loss(down)) / (2 * h);
    const double scale = std::max(std::fabs(fd), std::fabs(g[i]));
    if (scale < 1e-12) {
      ++floored;
      continue;
    }
    worst = std::max(worst, std::fabs(fd - g[i]) / scale);
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-3 && elapsed < 120.0,
          "500 pixels, h 1e-5, max rel error " + fmt("%.3g", worst) + " (< 1e-3), " + std::to_string(floored) +
              " below 1e-12 in both, " + fmt("%.1f", elapsed) + " s (< 120 s)"};
}

// ---------------------------------------------------------------- criterion 2

Outcome fgsm_bound() {
  const ImageDataset images = synth_shapes(SynthSpec{500, 32, 3, 0.03, 201});
  auto model = build_paper_cnn<float>(images.image_shape(), 2, 202);
  bool ok = images.size() == 1000;
  std::string detail = std::to_string(images.size()) + " images";
  for (double eps : {0.015, 0.04, 0.05}) {
    const ImageDataset noisy = attack_dataset(model, images, AttackConfig{eps});
    double worst = 0.0;
    bool in_range = true;
    for (std::size_t i = 0; i < images.pixels().size(); ++i) {
      const float v = noisy.pixels()[i];
      worst = std::max(worst, static_cast<double>(std::fabs(v - images.pixels()[i])));
      in_range = in_range && v >= 0.0f && v <= 1.0f;
    }
    ok = ok && worst <= eps + 1e-7 && in_range;
    detail += ", eps " + fmt("%g", eps) + " max " + fmt("%.7f", worst) + (in_range ? "" : " OUT OF RANGE");
  }
  const ImageDataset same = attack_dataset(model, images, AttackConfig{0.0});
  const bool identical = same.pixels().size() == images.pixels().size() &&
                         std::memcmp(same.pixels().data(), images.pixels().data(),
                                     images.pixels().size() * sizeof(float)) == 0;
  ok = ok && identical;
  detail += identical ? ", eps 0 bitwise identical" : ", eps 0 NOT identical";
  return {ok, detail};
}

// ---------------------------------------------------------------- criterion 3

Outcome canny_oracle() {
  Rng rng(301);
  const ImageShape shape{3, 32, 32};
  std::size_t agree = 0, total = 0;
  bool monotone = true;
  for (int n = 0; n < 20; ++n) {
    // Alternate blocky scenes (long edges) with uniform noise (dense, broken edges).
    std::vector<float> img;
    if (n % 2 == 0) {
      img = edgeshield::testing::random_scene(rng, 32, 32);
    } else {
      img.resize(shape.numel());
      for (auto& v : img) v = static_cast<float>(rng.uniform());
    }
    const EdgeMap got = canny(img, shape, 100, 200, 1);
    const auto want = edgeshield::testing::reference_canny(img, 32, 32, 100, 200);
    for (std::size_t i = 0; i < want.size(); ++i) agree += (got.values[i] != 0.0f) == (want[i] != 0);
    total += want.size();

    const FloatImage thin = non_max_suppress(sobel_gradients(gaussian_blur(to_gray8(img, shape))).magnitude,
                                             sobel_gradients(gaussian_blur(to_gray8(img, shape))).direction);
    const auto strong150 = strong_mask(thin, 150), strong200 = strong_mask(thin, 200);
    const EdgeMap loose = canny(img, shape, 100, 150, 1);
    for (std::size_t i = 0; i < strong200.size(); ++i) {
      if (strong200[i] && !strong150[i]) monotone = false;
      if (got.values[i] != 0.0f && loose.values[i] == 0.0f) monotone = false;
    }
  }
  const double rate = static_cast<double>(agree) / static_cast<double>(total);
  return {rate >= 0.99 && monotone, "agreement " + fmt("%.4f", rate) + " over 20 images (>= 0.99), monotonicity " +
                                        (monotone ? "holds" : "violated")};
}

// ------------------------------------------------------------ criteria 4 - 7

struct SeedRun {
  std::uint64_t seed = 0;
  double impact_seconds = 0;
  double clean = 0, noisy = 0;  // paper CNN at the impact epsilon
  std::vector<std::vector<double>> matrix;
  double drop_raw = 0, drop_edges = 0;  // at the edge epsilon
  double retrain_pre = 0, retrain_post = 0;
  bool fresh_noise_logged = false;
  std::vector<PixelSummary> pixels;
};

ExperimentConfig sweep_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.data.per_class = 200;
  c.models = {"paper_cnn", "resnet_s"};
  c.train.epochs = 10;
  c.retrain.per_side = 80;
  c.epsilon.impact = 0.05;
  c.epsilon.edge = 0.015;
  c.epsilon.retrain = 0.05;
  c.epsilon.visual = 0.05;
  c.set_all_seeds(seed);
  c.output = scratch_root() / ("seed" + std::to_string(seed));
  return c;
}

SeedRun run_seed(std::uint64_t seed) {
  const ExperimentConfig c = sweep_config(seed);
  fs::remove_all(c.output);
  SeedRun r;
  r.seed = seed;
  ExperimentState s = prepare(c);
  const auto t0 = Clock::now();
  run_impact(s);
  r.impact_seconds = seconds_since(t0);
  r.clean = s.impact_records.at(0).accuracy;
  r.noisy = s.impact_records.at(1).accuracy;
  r.matrix = s.matrix->rates;

  run_edge_experiment(s);
  const std::string a = variant_id("paper_cnn", Track::original, Phase::train);
  const std::string b = variant_id("paper_cnn", Track::edges, Phase::train);
  r.drop_raw = s.record(a, Provenance::clean).accuracy - s.record(a, Provenance::noisy).accuracy;
  r.drop_edges = s.record(b, Provenance::edges).accuracy - s.record(b, Provenance::edges_noisy).accuracy;

  // Baseline: the train-phase model against its own noise at the retrain epsilon.
  Model<float>& model_a = s.model(a);
  r.retrain_pre =
      evaluate(model_a, attack_dataset(model_a, s.test(), AttackConfig{c.epsilon.retrain}), a).accuracy;
  run_retrain(s);
  const std::string ra = variant_id("paper_cnn", Track::original, Phase::retrain);
  r.retrain_post = s.record(ra, Provenance::noisy).accuracy;
  for (const auto& e : s.manifest) {
    if (e.path == "retrain/" + ra + "/test-noisy" && e.attributes.count("generator") &&
        e.attributes.at("generator") == ra) {
      r.fresh_noise_logged = true;
    }
  }

  std::vector<std::size_t> idx(std::min<std::size_t>(40, s.test().size()));
  std::iota(idx.begin(), idx.end(), 0);
  run_pixel_analysis(s, a, idx);
  r.pixels = s.pixel_summary;
  return r;
}

const std::vector<SeedRun>& sweep() {
  static std::optional<std::vector<SeedRun>> runs;
  if (!runs) {
    runs.emplace();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto t0 = Clock::now();
      runs->push_back(run_seed(seed));
      std::printf("  seed %llu finished in %.0f s\n", static_cast<unsigned long long>(seed), seconds_since(t0));
      std::fflush(stdout);
    }
  }
  return *runs;
}

Outcome impact_replication() {
  const SeedRun& r = sweep().front();
  const double drop = r.clean - r.noisy;
  std::string detail = "seed " + std::to_string(r.seed) + ": clean " + fmt("%.3f", r.clean) + " (>= 0.90), noisy " +
                       fmt("%.3f", r.noisy) + ", drop " + fmt("%.1f", 100 * drop) + " pp (>= 20), impact phase " +
                       fmt("%.0f", r.impact_seconds) + " s (< 900 s); other seeds drop";
  for (std::size_t k = 1; k < sweep().size(); ++k) detail += " " + fmt("%.1f", 100 * (sweep()[k].clean - sweep()[k].noisy));
  return {r.clean >= 0.90 && drop >= 0.20 && r.impact_seconds < 900.0, detail};
}

Outcome transfer_pattern() {
  int good = 0;
  std::string detail;
  for (const auto& r : sweep()) {
    const auto& m = r.matrix;
    const bool ok = m.size() == 2 && m[0][0] > m[0][1] && m[1][1] > m[1][0];
    good += ok;
    detail += " [" + fmt("%.3f", m[0][0]) + " " + fmt("%.3f", m[0][1]) + " / " + fmt("%.3f", m[1][0]) + " " +
              fmt("%.3f", m[1][1]) + "]";
  }
  return {good >= 4, std::to_string(good) + "/5 seeds with both diagonals above their row (>= 4);" + detail};
}

Outcome edge_robustness() {
  int good = 0;
  std::string detail;
  for (const auto& r : sweep()) {
    good += r.drop_edges < r.drop_raw;
    detail += " (" + fmt("%.3f", r.drop_raw) + " vs " + fmt("%.3f", r.drop_edges) + ")";
  }
  return {good >= 4, std::to_string(good) + "/5 seeds with edge drop < raw drop at eps 0.015 (>= 4), raw vs edge:" + detail};
}

Outcome retraining_recovery() {
  int good = 0;
  bool fresh = true;
  std::string detail;
  for (const auto& r : sweep()) {
    good += r.retrain_post - r.retrain_pre >= 0.05;
    fresh = fresh && r.fresh_noise_logged;
    detail += " (" + fmt("%.3f", r.retrain_pre) + " -> " + fmt("%.3f", r.retrain_post) + ")";
  }
  return {good >= 4 && fresh, std::to_string(good) + "/5 seeds gain >= 5 pp at eps 0.05 (>= 4), fresh noise " +
                                  (fresh ? "logged" : "NOT logged") + ", noisy before -> after:" + detail};
}

// ---------------------------------------------------------------- criterion 8

std::map<std::string, std::string> report_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (!entry.is_regular_file() || (ext != ".csv" && ext != ".json")) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    out[fs::relative(entry.path(), dir).string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

Outcome reproducibility() {
  const fs::path root = scratch_root() / "repro";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "config.yaml") << "data: {per_class: 40}\n"
                                         "models: [paper_cnn, vgg_s]\n"
                                         "train: {epochs: 2}\n"
                                         "retrain: {per_side: 20}\n"
                                         "seeds: {data: 7, init: 8, sampling: 9}\n";
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    const std::string cfg = (root / "config.yaml").string(), out = (root / run).string();
    const char* argv[] = {"edgeshield", "run-all", "--config", cfg.c_str(), "--out", out.c_str()};
    const int code = run_cli(6, argv, sink, sink);
    if (code != 0) return {false, std::string("run-all exited ") + std::to_string(code) + ": " + sink.str()};
  }
  const auto a = report_files(root / "a"), b = report_files(root / "b");
  std::size_t same = 0;
  for (const auto& [name, bytes] : a) same += b.count(name) && b.at(name) == bytes;
  const bool ok = !a.empty() && a.size() == b.size() && same == a.size();
  return {ok, std::to_string(same) + "/" + std::to_string(a.size()) + " CSV/JSON files byte-identical across two runs"};
}

// ---------------------------------------------------------------- criterion 9

Outcome fooling_definition() {
  const ImageShape shape{3, 16, 16};
  // F = 0 on identical sets.
  const ImageDataset corpus = synth_shapes(SynthSpec{50, 16, 3, 0.03, 901});
  auto trained = build_paper_cnn<float>(shape, 2, 902);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 903;
  train(trained, corpus, tc);
  const double zero = fooling_rate(trained, corpus, corpus);

  // F = 1: a head that answers 0 for black images and 1 for anything brighter.
  auto switcher = build_paper_cnn<float>(shape, 2, 904);
  auto params = switcher.parameters();
  Tensor w = params[params.size() - 2], b = params.back();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i % 2 == 1) ? 1.0f : 0.0f;
  b[0] = 1e-3f;
  b[1] = 0.0f;
  const std::vector<int> labels(20, 0);
  const ImageDataset black(shape, std::vector<float>(20 * shape.numel(), 0.0f), labels, {"a", "b"}, Provenance::clean);
  const ImageDataset white(shape, std::vector<float>(20 * shape.numel(), 1.0f), labels, {"a", "b"}, Provenance::noisy);
  const double one = fooling_rate(switcher, black, white);

  // Brute force on 100 samples.
  const ImageDataset noisy = attack_dataset(trained, corpus, AttackConfig{0.1});
  std::size_t flips = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::vector<std::size_t> one_idx{i};
    const Tensor p = trained.forward(corpus.batch(one_idx)), q = trained.forward(noisy.batch(one_idx));
    flips += (p[1] > p[0]) != (q[1] > q[0]);
  }
  const double brute = static_cast<double>(flips) / static_cast<double>(corpus.size());
  const double rate = fooling_rate(trained, corpus, noisy);
  const bool ok = zero == 0.0 && one == 1.0 && corpus.size() == 100 && rate == brute && flips > 0 && flips < 100;
  return {ok, "identical " + fmt("%g", zero) + ", flipped " + fmt("%g", one) + ", " + std::to_string(flips) +
                  "/100 brute-force flips vs rate " + fmt("%.2f", rate)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"FGSM bound", fgsm_bound},
      {"Canny oracle", canny_oracle},
      {"impact replication", impact_replication},
      {"transfer pattern", transfer_pattern},
      {"edge robustness", edge_robustness},
      {"retraining recovery", retraining_recovery},
      {"reproducibility", reproducibility},
      {"fooling-rate definition", fooling_definition},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] criterion %zu: %s | %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }

  // Reported statistic, not a criterion.
  double pixel = 0, hamming = 0;
  std::size_t n = 0;
  for (const auto& r : sweep()) {
    for (const auto& p : r.pixels) {
      pixel += p.mean_pixel_diff;
      hamming += p.edge_hamming_diff;
      ++n;
    }
  }
  if (n > 0) {
    std::printf("[INFO] noise visibility at eps 0.05: mean edge Hamming %.4f, mean pixel diff %.4f, ratio %.2f\n",
                hamming / n, pixel / n, pixel > 0 ? hamming / pixel : 0.0);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
