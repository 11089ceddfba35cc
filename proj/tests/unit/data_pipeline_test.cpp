#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "dggx/dataset.hpp"
#include "dggx/errors.hpp"
#include "dggx/image_io.hpp"
#include "dggx/preprocess.hpp"

using namespace dggx;
namespace fs = std::filesystem;

namespace {

Dataset sized_dataset(const std::vector<std::size_t>& sizes) {
  Dataset d;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    d.class_names.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      d.samples.push_back({Tensor({1, 1, 1}, 0.0), c, d.class_names[c] + "/" + std::to_string(i)});
    }
  }
  return d;
}

std::size_t count_label(const Dataset& d, const std::vector<std::size_t>& idx, std::size_t label) {
  return static_cast<std::size_t>(
      std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return d.samples[i].label == label; }));
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("dggx_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_gray(const fs::path& p, std::size_t w, std::size_t h, std::uint8_t base) {
  Image8 img{w, h, 1, std::vector<std::uint8_t>(w * h)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(base + i);
  write_pnm(p, img);
}

}  // namespace

TEST(Netpbm, RoundTripIsBitExact) {
  Image8 gray{3, 2, 1, {0, 1, 2, 253, 254, 255}};
  EXPECT_EQ(decode_pnm(encode_pnm(gray)).pixels, gray.pixels);
  Image8 color{2, 1, 3, {1, 2, 3, 4, 5, 6}};
  const Image8 back = decode_pnm(encode_pnm(color));
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.pixels, color.pixels);
  const auto bytes = encode_pnm(gray);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 11), "P5\n3 2\n255\n");
}

TEST(Netpbm, AcceptsCommentsAndRejectsGarbage) {
  const std::string text = "P5\n# made by hand\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.push_back(7);
  bytes.push_back(9);
  EXPECT_EQ(decode_pnm(bytes).pixels, (std::vector<std::uint8_t>{7, 9}));
  const std::string bad = "P2\n2 1\n255\n1 2";
  EXPECT_THROW(decode_pnm(std::vector<std::uint8_t>(bad.begin(), bad.end())), FormatError);
  bytes.pop_back();
  EXPECT_THROW(decode_pnm(bytes), FormatError);
}

TEST(Volume, RoundTripAndLayout) {
  Volume v{2, 1, 3, {0.f, 1.f, 2.f, 3.f, 4.5f, -1.f}};
  const auto bytes = encode_volume(v);
  EXPECT_EQ(bytes.size(), 4u + 12u + 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VOL1");
  EXPECT_EQ(bytes[4], 2);  // little-endian depth
  const Volume back = decode_volume(bytes);
  EXPECT_EQ(back.depth, 2u);
  EXPECT_EQ(back.voxels, v.voxels);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_volume(truncated), FormatError);
}

TEST(SliceIndices, MidpointRule) {
  EXPECT_EQ(axial_slice_indices(10, 5), (std::vector<std::size_t>{1, 3, 5, 7, 9}));
  std::vector<std::size_t> all(7);
  std::iota(all.begin(), all.end(), 0u);
  EXPECT_EQ(axial_slice_indices(7, 7), all);
  EXPECT_EQ(axial_slice_indices(11, 1), (std::vector<std::size_t>{5}));
  EXPECT_THROW(axial_slice_indices(4, 5), ParameterError);
  EXPECT_THROW(axial_slice_indices(4, 0), ParameterError);
}

TEST(SliceIndices, ExtractsMatchingPlanes) {
  Volume v{4, 1, 2, {0, 0, 1, 1, 2, 2, 3, 3}};
  const auto slices = extract_axial_slices(v, 2);
  ASSERT_EQ(slices.size(), 2u);
  EXPECT_EQ(slices[0].values, (std::vector<double>{1, 1}));
  EXPECT_EQ(slices[1].values, (std::vector<double>{3, 3}));
}

TEST(ResizeBilinear, HalfPixelCentres) {
  const GrayImage img{1, 2, {0.0, 1.0}};
  const auto out = resize_bilinear(img, 1, 4);
  ASSERT_EQ(out.values.size(), 4u);
  EXPECT_NEAR(out.values[0], 0.0, 1e-15);
  EXPECT_NEAR(out.values[1], 0.25, 1e-15);
  EXPECT_NEAR(out.values[2], 0.75, 1e-15);
  EXPECT_NEAR(out.values[3], 1.0, 1e-15);
}

TEST(ResizeBilinear, ConstantsAndIdentity) {
  const GrayImage c{3, 5, std::vector<double>(15, 0.4)};
  for (double v : resize_bilinear(c, 7, 2).values) EXPECT_NEAR(v, 0.4, 1e-15);
  GrayImage r{2, 3, {1, 2, 3, 4, 5, 6}};
  EXPECT_EQ(resize_bilinear(r, 2, 3).values, r.values);
  EXPECT_THROW(resize_bilinear(r, 0, 3), ParameterError);
}

TEST(NormalizeMinmax, Rules) {
  EXPECT_EQ(normalize_minmax(GrayImage{1, 3, {10, 20, 30}}).values, (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(normalize_minmax(GrayImage{1, 3, {4, 4, 4}}).values, (std::vector<double>{0, 0, 0}));
  const GrayImage unit{1, 4, {0, 0.3, 1, 0.7}};
  EXPECT_EQ(normalize_minmax(unit).values, unit.values);
}

TEST(NormalizeMinmax, BoundsProperty) {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    GrayImage img{3, 4, std::vector<double>(12)};
    for (auto& v : img.values) v = -50 + 100 * uniform01(rng);
    const auto out = normalize_minmax(img).values;
    EXPECT_EQ(*std::min_element(out.begin(), out.end()), 0.0);
    EXPECT_EQ(*std::max_element(out.begin(), out.end()), 1.0);
  }
}

TEST(ToModelChannels, Replicates) {
  const GrayImage g{2, 2, {0.1, 0.2, 0.3, 0.4}};
  const Tensor t3 = to_model_channels(g, 3);
  EXPECT_EQ(t3.shape(), (Shape{3, 2, 2}));
  double s = 0.0;
  for (double v : t3.data()) s += v;
  EXPECT_NEAR(s, 3.0, 1e-15);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t3.data()[c * 4 + i], g.values[i]);
  }
  const Tensor t1 = to_model_channels(g, 1);
  EXPECT_EQ(std::vector<double>(t1.data().begin(), t1.data().end()), g.values);
}

TEST(BalanceDownsample, ReducesToMinority) {
  const Dataset d = sized_dataset({800, 500, 1200});
  Rng rng = make_rng(3);
  const auto groups = balance_downsample(group_by_class(d), rng);
  for (const auto& [label, members] : groups) {
    EXPECT_EQ(members.size(), 500u);
    EXPECT_TRUE(std::is_sorted(members.begin(), members.end()));
    EXPECT_EQ(std::set<std::size_t>(members.begin(), members.end()).size(), 500u);
    for (auto i : members) EXPECT_EQ(d.samples[i].label, label);
  }
}

TEST(BalanceDownsample, BalancedInputUnchangedAndDeterministic) {
  const Dataset d = sized_dataset({5, 5, 5});
  Rng rng = make_rng(4);
  const auto groups = group_by_class(d);
  EXPECT_EQ(balance_downsample(groups, rng), groups);
  const Dataset e = sized_dataset({9, 4, 7});
  Rng r1 = make_rng(5), r2 = make_rng(5);
  EXPECT_EQ(balance_downsample(group_by_class(e), r1), balance_downsample(group_by_class(e), r2));
}

TEST(BalanceDownsample, EmptyClassIsRejected) {
  ClassGroups groups{{0, {0, 1}}, {1, {}}};
  Rng rng = make_rng(6);
  EXPECT_THROW(balance_downsample(groups, rng), ValidationError);
}

TEST(StratifiedSplit, SeventyTwentyTenOfImbalancedClasses) {
  Rng rng = make_rng(7);
  const Dataset d = stratified_split(balance_dataset(sized_dataset({800, 500, 1200}), rng), {}, rng);
  EXPECT_EQ(d.splits.train.size(), 1050u);
  EXPECT_EQ(d.splits.validation.size(), 300u);
  EXPECT_EQ(d.splits.test.size(), 150u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(count_label(d, d.splits.train, c), 350u);
    EXPECT_EQ(count_label(d, d.splits.validation, c), 100u);
    EXPECT_EQ(count_label(d, d.splits.test, c), 50u);
  }
}

TEST(StratifiedSplit, SmallExactFractionsAndDeterminism) {
  Rng r1 = make_rng(8), r2 = make_rng(8);
  const Dataset a = stratified_split(sized_dataset({10, 10}), {}, r1);
  const Dataset b = stratified_split(sized_dataset({10, 10}), {}, r2);
  EXPECT_EQ(count_label(a, a.splits.train, 0), 7u);
  EXPECT_EQ(count_label(a, a.splits.validation, 0), 2u);
  EXPECT_EQ(count_label(a, a.splits.test, 0), 1u);
  EXPECT_EQ(a.splits.train, b.splits.train);
  EXPECT_EQ(a.splits.validation, b.splits.validation);
  EXPECT_EQ(a.splits.test, b.splits.test);
}

TEST(StratifiedSplit, RejectsBadFractions) {
  Rng rng = make_rng(9);
  EXPECT_THROW(stratified_split(sized_dataset({4}), {1.2, -0.1, -0.1}, rng), ParameterError);
  EXPECT_THROW(stratified_split(sized_dataset({4}), {0.5, 0.2, 0.2}, rng), ParameterError);
}

TEST(StratifiedSplit, FloorAllocationProperty) {
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> sizes;
    const auto classes = 1 + uniform_index(rng, 4);
    for (std::size_t c = 0; c < classes; ++c) sizes.push_back(1 + uniform_index(rng, 60));
    const double fv = 0.05 * static_cast<double>(uniform_index(rng, 8));
    const double ft = 0.05 * static_cast<double>(uniform_index(rng, 8));
    const SplitFractions f{1.0 - fv - ft, fv, ft};
    const Dataset raw = sized_dataset(sizes);
    const Dataset balanced = balance_dataset(raw, rng);
    const Dataset d = stratified_split(balanced, f, rng);
    const auto n = *std::min_element(sizes.begin(), sizes.end());
    const auto nv = static_cast<std::size_t>(std::floor(fv * static_cast<double>(n) + 1e-9));
    const auto nt = static_cast<std::size_t>(std::floor(ft * static_cast<double>(n) + 1e-9));
    std::set<std::string> ids;
    for (std::size_t c = 0; c < classes; ++c) {
      EXPECT_EQ(count_label(d, d.splits.validation, c), nv);
      EXPECT_EQ(count_label(d, d.splits.test, c), nt);
      EXPECT_EQ(count_label(d, d.splits.train, c), n - nv - nt);
    }
    // disjoint and covering: the union has every retained source id once
    std::size_t total = 0;
    for (const auto* s : {&d.splits.train, &d.splits.validation, &d.splits.test}) {
      for (auto i : *s) ids.insert(d.samples[i].source_id);
      total += s->size();
    }
    EXPECT_EQ(total, d.samples.size());
    EXPECT_EQ(ids.size(), d.samples.size());
    EXPECT_EQ(d.samples.size(), n * classes);
  }
}

TEST(SyntheticData, CountsAndDeterminism) {
  SyntheticConfig c;
  c.per_class = 500;
  c.size = 32;
  c.seed = 3;
  const Dataset d = generate_synthetic_dataset(c);
  EXPECT_EQ(d.samples.size(), 1500u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(group_by_class(d).at(k).size(), 500u);
  c.per_class = 4;
  const Dataset a = generate_synthetic_dataset(c), b = generate_synthetic_dataset(c);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_TRUE(std::equal(a.samples[i].image.data().begin(), a.samples[i].image.data().end(),
                           b.samples[i].image.data().begin()));
    for (double v : a.samples[i].image.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(SyntheticData, NoiseFreeSamplesDifferOnlyByPlacement) {
  // With noise off a slice depends only on its placement jitter: the same
  // generator state renders the same image.
  for (std::size_t label = 0; label < 3; ++label) {
    Rng r1 = make_rng(11, label), r2 = make_rng(11, label);
    EXPECT_EQ(render_synthetic_slice(label, 32, 0.0, r1).values, render_synthetic_slice(label, 32, 0.0, r2).values);
  }
}

TEST(SyntheticData, LinearLeastSquaresSeparatesClasses) {
  SyntheticConfig c;
  c.per_class = 500;
  c.size = 32;
  c.noise = 0.1;
  c.seed = 21;
  Rng rng = make_rng(22);
  const Dataset d = stratified_split(generate_synthetic_dataset(c), {}, rng);
  const auto design = [&](const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), 32 * 32 + 1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto px = d.samples[idx[r]].image.data();
      for (std::size_t j = 0; j < px.size(); ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = px[j];
      x(static_cast<Eigen::Index>(r), 32 * 32) = 1.0;
    }
    return x;
  };
  const Eigen::MatrixXd xt = design(d.splits.train);
  Eigen::MatrixXd yt = Eigen::MatrixXd::Zero(xt.rows(), 3);
  for (std::size_t r = 0; r < d.splits.train.size(); ++r) {
    yt(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d.samples[d.splits.train[r]].label)) = 1.0;
  }
  const Eigen::MatrixXd gram = xt.transpose() * xt + 1.0 * Eigen::MatrixXd::Identity(xt.cols(), xt.cols());
  const Eigen::MatrixXd w = gram.ldlt().solve(xt.transpose() * yt);
  const Eigen::MatrixXd scores = design(d.splits.test) * w;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == d.samples[d.splits.test[static_cast<std::size_t>(r)]].label) ++correct;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(scores.rows()), 0.80);
}

TEST(LoadDatasetDir, SortedClassesAndSkippedFiles) {
  TempDir tmp;
  for (const char* cls : {"tumour", "alz", "normal"}) {
    fs::create_directories(tmp.path() / cls);
    write_gray(tmp.path() / cls / "b.pgm", 4, 4, 10);
    write_gray(tmp.path() / cls / "a.pgm", 4, 4, 50);
  }
  std::ofstream(tmp.path() / "normal" / "notes.txt") << "not an image";
  ::testing::internal::CaptureStderr();
  const Dataset d = load_dataset_dir(tmp.path(), {8, 1});
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("notes.txt"), std::string::npos);
  EXPECT_EQ(d.samples.size(), 6u);
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"alz", "normal", "tumour"}));
  EXPECT_EQ(d.samples[0].source_id, "alz/a.pgm");
  EXPECT_EQ(d.samples[0].image.shape(), (Shape{1, 8, 8}));
  const auto px = d.samples[0].image.data();
  EXPECT_EQ(*std::min_element(px.begin(), px.end()), 0.0);
  EXPECT_EQ(*std::max_element(px.begin(), px.end()), 1.0);
}

TEST(LoadDatasetDir, ErrorKinds) {
  TempDir tmp;
  EXPECT_THROW(load_dataset_dir(tmp.path() / "missing", {}), PathError);
  fs::create_directories(tmp.path() / "a");
  fs::create_directories(tmp.path() / "b");
  write_gray(tmp.path() / "a" / "x.pgm", 2, 2, 0);
  EXPECT_THROW(load_dataset_dir(tmp.path(), {}), ValidationError);  // b is empty
  std::ofstream(tmp.path() / "b" / "broken.pgm") << "P5\n9 9\n255\nxx";
  std::ofstream(tmp.path() / "b" / "broken2.ppm") << "junk";
  try {
    load_dataset_dir(tmp.path(), {});
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("broken.pgm"), std::string::npos);
    EXPECT_NE(msg.find("broken2.ppm"), std::string::npos);
  }
}

TEST(Manifest, RoundTrip) {
  TempDir tmp;
  const std::vector<ManifestRow> rows{{"a/1.pgm", "a", "train"}, {"b/2.pgm", "b", "test"}};
  write_manifest(tmp.path() / "m.csv", rows);
  const auto back = read_manifest(tmp.path() / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].path, "b/2.pgm");
  EXPECT_EQ(back[1].split, "test");
  EXPECT_THROW(write_manifest(tmp.path() / "n.csv", {{"a,b", "a", "train"}}), FormatError);
}

TEST(Splits, NamesParse) {
  EXPECT_EQ(parse_split("validation"), Split::Validation);
  EXPECT_EQ(parse_split("val"), Split::Validation);
  EXPECT_EQ(parse_split("test"), Split::Test);
  EXPECT_THROW(parse_split("holdout"), ParameterError);
}
