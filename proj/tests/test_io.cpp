#include "ssn/io.hpp"

#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "ssn/errors.hpp"
#include "test_support.hpp"

namespace ssn::io {
namespace {

namespace fs = std::filesystem;

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ssn_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(IoTest, SsntRoundTripIsBitExactAndByteIdentical) {
  std::mt19937_64 gen(1);
  const auto dist = ssn::testing::random_gaussian(gen, 7, 3, 2);
  save_ssnt(dir_ / "a.ssnt", dist);
  const auto back = load_ssnt(dir_ / "a.ssnt");
  EXPECT_EQ(back, dist);
  save_ssnt(dir_ / "b.ssnt", back);
  EXPECT_EQ(read_text(dir_ / "a.ssnt"), read_text(dir_ / "b.ssnt"));
  const Json doc = Json::parse(read_text(dir_ / "a.ssnt"));
  EXPECT_EQ(doc["format"], "SSNT");
  EXPECT_EQ(doc["version"], 1);
  EXPECT_EQ(doc["S"], 7);
  EXPECT_EQ(doc["factor"]["shape"], Json::array({21, 2}));
}

TEST_F(IoTest, SsntKeepsExtremeValues) {
  Tensor mean({2}, {1e-300, -0.1}), factor({2, 1}, {5e-324, 1.0 / 3.0}), raw({2}, {kDiagRawAtFloor, 1e300});
  const LowRankGaussian dist(mean, factor, raw, 2, 1, 1);
  EXPECT_EQ(ssnt_from_json(Json::parse(dump_ssnt(dist))), dist);
}

TEST_F(IoTest, MalformedSsntIsIoError) {
  write_text(dir_ / "bad.ssnt", "{not json");
  EXPECT_THROW(load_ssnt(dir_ / "bad.ssnt"), IoError);
  write_text(dir_ / "wrong.ssnt", R"({"format":"SSNT","version":1,"S":2,"C":1,"R":1,
    "mean":{"shape":[3],"data":[0,0,0]},"factor":{"shape":[2,1],"data":[0,0]},
    "diag_raw":{"shape":[2],"data":[0,0]}})");
  EXPECT_THROW(load_ssnt(dir_ / "wrong.ssnt"), IoError);
  write_text(dir_ / "fmt.ssnt", R"({"format":"XYZ"})");
  EXPECT_THROW(load_ssnt(dir_ / "fmt.ssnt"), IoError);
  EXPECT_THROW(load_ssnt(dir_ / "missing.ssnt"), IoError);
}

TEST_F(IoTest, LabelMapJsonRoundTrip) {
  const LabelMap plain({0, 2, 1, 1, 0, 2}, 3, std::nullopt, {2, 3});
  const LabelMap masked({1, 0, 1}, 1, std::vector<std::uint8_t>{1, 0, 1});
  for (const auto& m : {plain, masked}) {
    save_labelmap(dir_ / "m.json", m);
    const auto first = read_text(dir_ / "m.json");
    const auto back = load_labelmap(dir_ / "m.json");
    EXPECT_EQ(back, m);
    save_labelmap(dir_ / "m.json", back);
    EXPECT_EQ(read_text(dir_ / "m.json"), first);
  }
}

TEST_F(IoTest, LabelMapPgmRoundTrip) {
  const LabelMap m({0, 1, 1, 0, 1, 0}, 1, std::nullopt, {2, 3});
  save_labelmap(dir_ / "m.pgm", m);
  EXPECT_EQ(load_labelmap(dir_ / "m.pgm"), m);
  const auto img = read_pgm(dir_ / "m.pgm");
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.pixels[1], 255);
  EXPECT_THROW(save_labelmap(dir_ / "x.pgm", LabelMap({0, 2, 1}, 3)), ValidationError);
}

TEST_F(IoTest, LabelMapValidationAndDirectories) {
  write_text(dir_ / "bad.json", R"({"shape":[2],"num_classes":2,"labels":[0,5]})");
  EXPECT_THROW(load_labelmap(dir_ / "bad.json"), IoError);
  fs::remove(dir_ / "bad.json");
  save_labelmap(dir_ / "b.json", LabelMap({1, 0}, 1));
  save_labelmap(dir_ / "a.json", LabelMap({0, 1}, 1));
  write_text(dir_ / "notes.txt", "ignored");
  const auto maps = load_labelmap_dir(dir_);
  ASSERT_EQ(maps.size(), 2u);
  EXPECT_EQ(maps[0].labels(), (std::vector<int>{0, 1}));
  EXPECT_THROW(load_labelmap_dir(dir_ / "nope"), IoError);
}

TEST_F(IoTest, HeatmapWritesScaledPgmAndSidecar) {
  const std::vector<double> v{-1.0, 0.0, 1.0, 3.0};
  const auto scale = write_heatmap(dir_ / "h.pgm", 2, 2, v, 2, 1);
  EXPECT_EQ(scale.min, -1.0);
  EXPECT_EQ(scale.max, 3.0);
  const auto img = read_pgm(dir_ / "h.pgm");
  EXPECT_EQ(img.width, 4u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[1], 0);
  EXPECT_EQ(img.pixels[7], 255);
  const Json side = Json::parse(read_text(dir_ / "h.pgm.json"));
  EXPECT_EQ(side["min"], -1.0);
  EXPECT_EQ(side["max"], 3.0);
}

TEST_F(IoTest, DeviationScaleJson) {
  const auto s = deviation_scale_from_json(Json::parse(R"({"per_class":[1,-2.5],"temperature":0.5})"));
  EXPECT_EQ(s.per_class, (std::vector<double>{1.0, -2.5}));
  EXPECT_EQ(s.temperature, 0.5);
  EXPECT_EQ(deviation_scale_from_json(Json::parse(R"({"per_class":[1]})")).temperature, 1.0);
}

}  // namespace
}  // namespace ssn::io
