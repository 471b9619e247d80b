#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "msv/io/image_io.hpp"
#include "msv/io/json.hpp"
#include "msv/io/ply.hpp"
#include "support.hpp"

using namespace msv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "msv_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

MultispectralPointCloud sample_cloud(std::size_t n) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  MultispectralPointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    CloudPoint p;
    p.position = {u(rng), u(rng), 0.5 + std::abs(u(rng))};
    p.color = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())};
    p.thermal = static_cast<std::uint16_t>(rng());
    p.uv = static_cast<std::uint16_t>(rng() % 256);
    c.points.push_back(p);
  }
  return c;
}

template <typename T>
void expect_io_error_naming(const fs::path& p, T&& fn) {
  try {
    fn();
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(p.filename().string()), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Png, RgbRoundTrip) {
  Image8 img(37, 21, 3);
  std::mt19937_64 rng(1);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng());
  const auto p = scratch("rgb.png");
  io::write_png(p, img);
  EXPECT_TRUE(io::read_png_rgb(p) == img);
}

TEST(Png, GrayIsExpandedToRgb) {
  Image8 img(5, 4);
  img.at(2, 3) = 200;
  const auto p = scratch("gray.png");
  io::write_png(p, img);
  const auto back = io::read_png_rgb(p);
  ASSERT_EQ(back.channels(), 3);
  EXPECT_EQ(back.at(2, 3, 1), 200);
}

TEST(Png, CorruptFileNamesThePath) {
  const auto p = scratch("broken.png");
  std::ofstream(p) << "this is not an image";
  expect_io_error_naming(p, [&] { io::read_png_rgb(p); });
  const auto missing = scratch("missing.png");
  fs::remove(missing);
  expect_io_error_naming(missing, [&] { io::read_png_rgb(missing); });
}

TEST(Pgm, EightAndSixteenBitRoundTrip) {
  std::mt19937_64 rng(2);
  Image8 a(13, 7);
  for (auto& v : a.data()) v = static_cast<std::uint8_t>(rng());
  Image16 b(13, 7);
  for (auto& v : b.data()) v = static_cast<std::uint16_t>(rng());
  io::write_pgm(scratch("a.pgm"), a);
  io::write_pgm(scratch("b.pgm"), b);
  EXPECT_TRUE(io::read_pgm<std::uint8_t>(scratch("a.pgm")) == a);
  EXPECT_TRUE(io::read_pgm<std::uint16_t>(scratch("b.pgm")) == b);
}

TEST(Pgm, SixteenBitSamplesAreBigEndian) {
  Image16 img(2, 1);
  img.at(0, 0) = 0x1234;
  img.at(1, 0) = 0xABCD;
  const auto p = scratch("be.pgm");
  io::write_pgm(p, img);
  const auto bytes = slurp(p);
  EXPECT_EQ(bytes.rfind("P5\n2 1\n65535\n", 0), 0u);
  const auto tail = bytes.substr(bytes.size() - 4);
  EXPECT_EQ(static_cast<unsigned char>(tail[0]), 0x12);
  EXPECT_EQ(static_cast<unsigned char>(tail[1]), 0x34);
  EXPECT_EQ(static_cast<unsigned char>(tail[2]), 0xAB);
  EXPECT_EQ(static_cast<unsigned char>(tail[3]), 0xCD);
}

TEST(Pgm, CommentsAreSkipped) {
  const auto p = scratch("comment.pgm");
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n# made by hand\n3 1\n255\n";
    out.write("\x01\x02\x03", 3);
  }
  const auto img = io::read_pgm<std::uint8_t>(p);
  EXPECT_EQ(img.at(2, 0), 3);
}

TEST(Pgm, TruncatedOrOversizedFilesAreRejected) {
  const auto p = scratch("short.pgm");
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.write("\x01\x02", 2);
  }
  expect_io_error_naming(p, [&] { io::read_pgm<std::uint8_t>(p); });
  Image16 wide(2, 2, 1, 1000);
  io::write_pgm(scratch("wide.pgm"), wide);
  expect_io_error_naming(scratch("wide.pgm"), [&] { io::read_pgm<std::uint8_t>(scratch("wide.pgm")); });
}

TEST(Ply, BinaryRoundTripAndRecordSize) {
  const auto cloud = sample_cloud(50);
  std::ostringstream out;
  io::write_ply(out, cloud, io::PlyFormat::binary_little_endian);
  const std::string text = out.str();
  const auto body = text.size() - (text.find("end_header\n") + 11);
  EXPECT_EQ(body, 50u * 19u);
  std::istringstream in(text);
  const auto back = io::read_ply(in);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_LT((back.points[i].position - cloud.points[i].position).norm(), 1e-6);
    EXPECT_EQ(back.points[i].color, cloud.points[i].color);
    EXPECT_EQ(back.points[i].thermal, cloud.points[i].thermal);
    EXPECT_EQ(back.points[i].uv, cloud.points[i].uv);
  }
}

TEST(Ply, AsciiRoundTrip) {
  const auto cloud = sample_cloud(20);
  const auto p = scratch("cloud.ply");
  io::write_ply(p, cloud, io::PlyFormat::ascii);
  const auto back = io::read_ply(p);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_LT((back.points[i].position - cloud.points[i].position).norm(), 1e-6);
    EXPECT_EQ(back.points[i].thermal, cloud.points[i].thermal);
  }
}

TEST(Ply, EmptyCloudIsValid) {
  std::ostringstream out;
  io::write_ply(out, MultispectralPointCloud{}, io::PlyFormat::binary_little_endian);
  EXPECT_NE(out.str().find("element vertex 0\n"), std::string::npos);
  std::istringstream in(out.str());
  EXPECT_TRUE(io::read_ply(in).empty());
}

TEST(Ply, ParsesFormatNames) {
  EXPECT_EQ(io::parse_ply_format("ascii"), io::PlyFormat::ascii);
  EXPECT_EQ(io::parse_ply_format("binary"), io::PlyFormat::binary_little_endian);
  EXPECT_THROW(io::parse_ply_format("xml"), InvalidArgument);
}

TEST(Json, RigRoundTrip) {
  const auto rig = default_rig();
  const auto back = json(rig).get<RigConfig>();
  for (CameraId id : {CameraId::rgb, CameraId::thermal, CameraId::uv}) {
    const auto& a = rig.camera(id);
    const auto& b = back.camera(id);
    EXPECT_EQ(a.intrinsics.width, b.intrinsics.width);
    EXPECT_DOUBLE_EQ(a.intrinsics.fx, b.intrinsics.fx);
    EXPECT_DOUBLE_EQ(a.intrinsics.distortion.k1, b.intrinsics.distortion.k1);
    EXPECT_LT((a.pose.translation() - b.pose.translation()).norm(), 1e-15);
    EXPECT_LT((a.pose.rotation() - b.pose.rotation()).norm(), 1e-15);
  }
}

TEST(Json, CalibrationRoundTrip) {
  const auto& cal = test::default_rig_calibration();
  const auto back = json(cal).get<CalibrationResult>();
  ASSERT_EQ(back.cameras.size(), 3u);
  EXPECT_DOUBLE_EQ(back.camera(CameraId::thermal).intrinsics.cx, cal.camera(CameraId::thermal).intrinsics.cx);
  EXPECT_DOUBLE_EQ(back.camera(CameraId::uv).rms, cal.camera(CameraId::uv).rms);
  const auto& e = back.extrinsic(CameraId::rgb, CameraId::uv);
  EXPECT_LT((e.pose.translation() - cal.extrinsic(CameraId::rgb, CameraId::uv).pose.translation()).norm(),
            1e-15);
}

TEST(Json, MismatchedCameraKeyIsRejected) {
  json j = test::default_rig_calibration();
  std::swap(j["cameras"]["uv"], j["cameras"]["thermal"]);
  EXPECT_THROW(j.get<CalibrationResult>(), InvalidArgument);
}

TEST(Json, FusionConfigRoundTrip) {
  FusionConfig c;
  c.thermal = ThresholdSpec::absolute(40000);
  c.uv = ThresholdSpec::percentile(90);
  c.precedence = Precedence::uv_over_thermal;
  const json j = c;
  EXPECT_EQ(j.at("threshold_uv"), "90%");
  const auto back = j.get<FusionConfig>();
  EXPECT_EQ(back.thermal.kind, ThresholdSpec::Kind::absolute);
  EXPECT_EQ(back.thermal.value, 40000.0);
  EXPECT_EQ(back.uv.kind, ThresholdSpec::Kind::percentile);
  EXPECT_EQ(back.precedence, Precedence::uv_over_thermal);
}

TEST(Json, MalformedFileNamesThePath) {
  const auto p = scratch("bad.json");
  std::ofstream(p) << "{ \"rgb\": ";
  expect_io_error_naming(p, [&] { io::read_json(p); });
}

TEST(Json, InvalidIntrinsicsAreRejected) {
  json j = default_rig();
  j["uv"]["intrinsics"]["fx"] = -1.0;
  EXPECT_THROW(j.get<RigConfig>(), InvalidArgument);
}
