#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "stm/field_io.hpp"
#include "stm/image_io.hpp"
#include "test_util.hpp"

using namespace stm;

namespace {
std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("ply bytes round-trip bit-exactly") {
  const GaussianField f = test::random_field(42, 17, 3, false);
  const std::string bytes = field_to_ply_bytes(f);
  const GaussianField g = field_from_ply_bytes(bytes);
  CHECK(g.size() == f.size());
  CHECK(g.sh_degree == f.sh_degree);
  // float32 payload: a second serialization must reproduce the same bytes.
  CHECK(field_to_ply_bytes(g) == bytes);
  // And values survive exactly at float32 precision.
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    CHECK(g.positions(i, 0) == double(float(f.positions(i, 0))));
    CHECK(g.opacity_logits(i) == double(float(f.opacity_logits(i))));
    CHECK(g.rotations(i, 3) == double(float(f.rotations(i, 3))));
    CHECK(g.sh(i, 4) == double(float(f.sh(i, 4))));
  }
}

TEST_CASE("ply file round-trip") {
  const GaussianField f = test::random_field(7, 9, 1, false);
  const std::string path = temp_path("stm_test_field.ply");
  save_ply(f, path);
  const GaussianField g = load_ply(path);
  CHECK(field_to_ply_bytes(g) == field_to_ply_bytes(f));
  std::remove(path.c_str());
}

TEST_CASE("json field form is lossless") {
  const GaussianField f = test::random_field(3, 6, 2, false);
  const std::string path = temp_path("stm_test_field.json");
  save_field_json(f, path);
  const GaussianField g = load_field_json(path);
  CHECK((g.positions - f.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.rotations - f.rotations).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.log_scales - f.log_scales).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.opacity_logits - f.opacity_logits).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.sh - f.sh).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("png round-trip within quantization") {
  Image img(20, 13, 3);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<Scalar> uni(0, 1);
  for (auto& v : img.data) v = uni(rng);
  const std::string path = temp_path("stm_test.png");
  save_png(img, path);
  const Image back = load_png(path);
  REQUIRE(back.same_shape(img));
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
  // 8-bit payload: a second save/load is exact.
  save_png(back, path);
  const Image twice = load_png(path);
  for (size_t i = 0; i < back.data.size(); ++i) CHECK(twice.data[i] == back.data[i]);
  std::remove(path.c_str());
}

TEST_CASE("grayscale png round-trip") {
  Image img(8, 5, 1);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = (i % 2) ? 1.0 : 0.0;
  const std::string path = temp_path("stm_test_gray.png");
  save_png(img, path);
  const Image back = load_png(path);
  REQUIRE(back.channels == 1);
  for (size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
  std::remove(path.c_str());
}

TEST_CASE("pfm round-trip is float32 exact") {
  Image depth(11, 7, 1);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<Scalar> uni(-5, 40);
  for (auto& v : depth.data) v = uni(rng);
  const std::string path = temp_path("stm_test.pfm");
  save_pfm(depth, path);
  const Image back = load_pfm(path);
  REQUIRE(back.same_shape(depth));
  for (size_t i = 0; i < depth.data.size(); ++i)
    CHECK(back.data[i] == double(float(depth.data[i])));
  std::remove(path.c_str());
}
