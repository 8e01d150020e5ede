#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <cmath>

#include "edgeshield/dataset.hpp"
#include "edgeshield/image_io.hpp"

using namespace edgeshield;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("edgeshield_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ImageDataset tiny(std::vector<int> labels, std::size_t classes = 2) {
  const ImageShape shape{1, 2, 2};
  std::vector<float> px(labels.size() * shape.numel());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i / shape.numel()) / 1000.0f;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  return ImageDataset(shape, px, std::move(labels), names, Provenance::clean);
}

// The first pixel encodes the original sample index in tiny().
std::size_t tag(const ImageDataset& d, std::size_t i) {
  return static_cast<std::size_t>(std::lround(d.image(i)[0] * 1000.0f));
}

}  // namespace

TEST(Dataset, ConstructorEnforcesInvariants) {
  const ImageShape s{1, 2, 2};
  EXPECT_THROW(ImageDataset(s, std::vector<float>(7), {0, 1}, {"a", "b"}, Provenance::clean), DatasetError);
  EXPECT_THROW(ImageDataset(s, std::vector<float>(4), {2}, {"a", "b"}, Provenance::clean), DatasetError);
  EXPECT_THROW(ImageDataset(s, std::vector<float>(4, 1.5f), {0}, {"a", "b"}, Provenance::clean), DatasetError);
  EXPECT_NO_THROW(ImageDataset(s, {}, {}, {"a"}, Provenance::clean));
}

TEST(Dataset, ProvenanceNamesRoundTrip) {
  for (auto p : {Provenance::clean, Provenance::noisy, Provenance::edges, Provenance::edges_noisy, Provenance::mixed}) {
    EXPECT_EQ(provenance_from_string(to_string(p)), p);
  }
  EXPECT_EQ(to_string(Provenance::edges_noisy), "edges-noisy");
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth_shapes(SynthSpec{10, 16, 3, 0.03, 5});
  const auto b = synth_shapes(SynthSpec{10, 16, 3, 0.03, 5});
  const auto c = synth_shapes(SynthSpec{10, 16, 3, 0.03, 6});
  EXPECT_EQ(a.pixels(), b.pixels());
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_NE(a.pixels(), c.pixels());
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(a.class_histogram(), (std::vector<std::size_t>{10, 10}));
  EXPECT_EQ(a.class_names(), (std::vector<std::string>{"ellipse", "rectangle"}));
}

TEST(Synth, NoiseFreeImagesArePiecewiseConstant) {
  const auto d = synth_shapes(SynthSpec{5, 32, 3, 0.0, 1});
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::map<float, int> values;
    for (float v : d.image(i)) ++values[v];
    EXPECT_LE(values.size(), 6u);  // background and foreground per channel
  }
}

TEST(Synth, RejectsTinyImages) { EXPECT_THROW(synth_shapes(SynthSpec{1, 15, 3, 0.0, 1}), std::exception); }

TEST(Synth, NearestCentroidBeatsSeventyPercent) {
  const auto d = synth_shapes(SynthSpec{150, 32, 3, 0.03, 11});
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n_train = 200;
  const std::size_t dim = d.image_shape().numel();
  std::vector<std::vector<double>> centroid(2, std::vector<double>(dim, 0.0));
  std::vector<double> count(2, 0.0);
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto img = d.image(i);
    for (std::size_t k = 0; k < dim; ++k) centroid[d.label(i)][k] += img[k];
    count[d.label(i)] += 1;
  }
  for (int c = 0; c < 2; ++c)
    for (auto& v : centroid[c]) v /= count[c];
  std::size_t correct = 0;
  for (std::size_t i = n_train; i < d.size(); ++i) {
    const auto img = d.image(i);
    double dist[2] = {0, 0};
    for (int c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < dim; ++k) dist[c] += (img[k] - centroid[c][k]) * (img[k] - centroid[c][k]);
    correct += (dist[1] < dist[0] ? 1 : 0) == d.label(i);
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(d.size() - n_train), 0.70);
}

TEST(Split, EightyTwentyOnTen) {
  auto [train, test] = split(tiny({0, 1, 0, 1, 0, 1, 0, 1, 0, 1}), SplitSpec{0.8, 3});
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
}

TEST(Split, IsAPartitionAndSeeded) {
  const auto d = tiny(std::vector<int>(50, 0));
  auto [a, b] = split(d, SplitSpec{0.7, 9});
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < a.size(); ++i) seen.push_back(tag(a, i));
  for (std::size_t i = 0; i < b.size(); ++i) seen.push_back(tag(b, i));
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(50);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(seen, all);
  auto [a2, b2] = split(d, SplitSpec{0.7, 9});
  EXPECT_EQ(a.pixels(), a2.pixels());
  auto [a3, b3] = split(d, SplitSpec{0.7, 10});
  EXPECT_NE(a.pixels(), a3.pixels());
}

TEST(Split, RejectsEmptySides) {
  EXPECT_THROW(split(tiny({0, 1, 0}), SplitSpec{0.1, 1}), DatasetError);
  EXPECT_THROW(split(tiny({0}), SplitSpec{0.5, 1}), DatasetError);
  EXPECT_THROW(split(tiny({0, 1}), SplitSpec{1.0, 1}), std::exception);
}

TEST(Resize, ConstantStaysConstant) {
  const std::vector<float> plane(64 * 64, 0.42f);
  for (float v : resize_bilinear(plane, 64, 64, 32, 32)) EXPECT_FLOAT_EQ(v, 0.42f);
}

TEST(Resize, CheckerboardMatchesHandOracle) {
  // Corner-aligned: source coordinate = dst * (src - 1) / (dst - 1) = dst / 3.
  const std::vector<float> board{0, 1, 1, 0};
  const auto out = resize_bilinear(board, 2, 2, 4, 4);
  auto oracle = [&](int y, int x) {
    const double sy = y / 3.0, sx = x / 3.0;
    const double top = board[0] * (1 - sx) + board[1] * sx;
    const double bottom = board[2] * (1 - sx) + board[3] * sx;
    return top * (1 - sy) + bottom * sy;
  };
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(out[y * 4 + x], oracle(y, x), 1e-6) << y << "," << x;
  EXPECT_FLOAT_EQ(out[0], 0.0f);
  EXPECT_FLOAT_EQ(out[3], 1.0f);
  EXPECT_NEAR(out[5], 4.0 / 9.0, 1e-6);
}

TEST(ImageIo, PgmAndPngRoundTrip) {
  const fs::path dir = fresh_dir("io");
  Image8 gray{3, 2, 1, {0, 10, 20, 30, 40, 255}};
  write_image(dir / "g.pgm", gray);
  write_image(dir / "g.png", gray);
  Image8 rgb{2, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
  write_image(dir / "c.png", rgb);
  for (const char* f : {"g.pgm", "g.png"}) {
    const Image8 back = read_image(dir / f);
    EXPECT_EQ(back.pixels, gray.pixels) << f;
    EXPECT_EQ(back.width, 3u);
  }
  EXPECT_EQ(read_image(dir / "c.png").pixels, rgb.pixels);
  EXPECT_THROW(write_image(dir / "c.pgm", rgb), ImageIoError);
  EXPECT_THROW(write_image(dir / "c.bmp", gray), ImageIoError);
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(read_image(dir / "junk.png"), ImageIoError);
}

TEST(LoadImageDir, SortedClassesSkipsUnreadableAndResizes) {
  const fs::path root = fresh_dir("load");
  fs::create_directories(root / "yes");
  fs::create_directories(root / "no");
  write_image(root / "yes" / "b.png", Image8{64, 64, 1, std::vector<std::uint8_t>(64 * 64, 200)});
  write_image(root / "yes" / "a.pgm", Image8{8, 8, 1, std::vector<std::uint8_t>(64, 100)});
  write_image(root / "no" / "x.png", Image8{16, 16, 3, std::vector<std::uint8_t>(16 * 16 * 3, 50)});
  std::ofstream(root / "no" / "broken.png") << "garbage";
  const LoadResult r = load_image_dir(root, ImageShape{3, 32, 32});
  EXPECT_EQ(r.dataset.class_names(), (std::vector<std::string>{"no", "yes"}));
  EXPECT_EQ(r.dataset.labels(), (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.warnings.size(), 1u);
  for (float v : r.dataset.image(0)) EXPECT_NEAR(v, 50.0f / 255.0f, 1e-6);
  for (float v : r.dataset.image(1)) EXPECT_NEAR(v, 100.0f / 255.0f, 1e-6);  // a.pgm sorts first
  for (float v : r.dataset.image(2)) EXPECT_NEAR(v, 200.0f / 255.0f, 1e-6);

  fs::create_directories(root / "zzz_empty");
  EXPECT_THROW(load_image_dir(root, ImageShape{3, 32, 32}), DatasetError);
}

TEST(EdgeTransform, BinaryLabelsPreservedAndTagged) {
  const auto d = synth_shapes(SynthSpec{6, 32, 3, 0.03, 2});
  const auto e = edge_transform(d, 100, 200);
  EXPECT_EQ(e.labels(), d.labels());
  EXPECT_EQ(e.provenance(), Provenance::edges);
  for (float v : e.pixels()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  EXPECT_GT(std::accumulate(e.pixels().begin(), e.pixels().end(), 0.0), 0.0);
  EXPECT_EQ(edge_transform(d.with_provenance(Provenance::noisy), 100, 200).provenance(), Provenance::edges_noisy);
}

TEST(EdgeTransform, BlankImagesGiveEmptyMaps) {
  const ImageShape s{3, 16, 16};
  const ImageDataset blank(s, std::vector<float>(2 * s.numel(), 0.3f), {0, 1}, {"a", "b"}, Provenance::clean);
  const ImageDataset edges = edge_transform(blank, 100, 200);
  for (float v : edges.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(StratifiedSample, HistogramWithinOnePerClass) {
  std::vector<int> labels;
  for (int i = 0; i < 70; ++i) labels.push_back(i % 7 < 5 ? 0 : 1);  // 50 / 20
  const auto d = tiny(labels);
  for (std::size_t m : {1, 7, 13, 33, 70}) {
    const auto idx = stratified_sample(d, m, 4);
    ASSERT_EQ(idx.size(), m);
    std::set<std::size_t> unique(idx.begin(), idx.end());
    EXPECT_EQ(unique.size(), m);  // without replacement
    std::size_t zeros = 0;
    for (auto i : idx) zeros += d.label(i) == 0;
    const double expected = 50.0 * static_cast<double>(m) / 70.0;
    EXPECT_LE(std::fabs(static_cast<double>(zeros) - expected), 1.0) << m;
  }
  EXPECT_THROW(stratified_sample(d, 71, 4), DatasetError);
}

TEST(RetrainMix, SizeProvenanceAndSources) {
  const auto clean = tiny({0, 1, 0, 1, 0, 1, 0, 1});
  std::vector<float> px(clean.pixels());
  for (auto& v : px) v = std::min(1.0f, v + 0.5f);
  const ImageDataset noisy(clean.image_shape(), px, clean.labels(), clean.class_names(), Provenance::noisy);
  const auto mix = retrain_mix(clean, noisy, 3, 1);
  EXPECT_EQ(mix.size(), 6u);
  EXPECT_EQ(mix.provenance(), Provenance::mixed);
  std::size_t from_noisy = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) from_noisy += mix.image(i)[0] >= 0.5f;
  EXPECT_EQ(from_noisy, 3u);
  const auto one = retrain_mix(clean, noisy, 1, 2);
  EXPECT_EQ(one.size(), 2u);
  EXPECT_THROW(retrain_mix(clean, noisy, 9, 1), DatasetError);
}

TEST(RetrainMix, EightHundredPerSideGivesSixteenHundred) {
  const auto clean = synth_shapes(SynthSpec{400, 16, 3, 0.03, 12});
  const auto noisy = clean.with_provenance(Provenance::noisy);
  const auto mix = retrain_mix(clean, noisy, 800, 13);
  EXPECT_EQ(mix.size(), 1600u);
  const auto hist = mix.class_histogram();
  EXPECT_EQ(hist[0], 800u);
  EXPECT_EQ(hist[1], 800u);
}

TEST(RetrainMix, SingleDrawTakesOneFromEachSide) {
  const auto clean = tiny({0, 1, 0, 1});
  const ImageDataset noisy(clean.image_shape(), std::vector<float>(clean.pixels().size(), 1.0f), clean.labels(),
                           clean.class_names(), Provenance::noisy);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mix = retrain_mix(clean, noisy, 1, seed);
    ASSERT_EQ(mix.size(), 2u);
    const bool first_noisy = mix.image(0)[0] == 1.0f, second_noisy = mix.image(1)[0] == 1.0f;
    EXPECT_NE(first_noisy, second_noisy);
  }
}
