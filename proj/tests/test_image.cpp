#include <doctest.h>

#include "segsel/error.hpp"
#include "segsel/image.hpp"
#include "test_util.hpp"

using namespace segsel;
using segsel::testing::TempDir;

TEST_CASE("ppm round trip") {
  TempDir dir;
  ImageRgb img = ImageRgb::constant(4, 6, 0.2f, 0.5f, 0.8f);
  img.r(1, 2) = 1.0f;
  save_image(dir.file("a.ppm"), img);
  ImageRgb back = load_image(dir.file("a.ppm"));
  REQUIRE(back.height() == 4);
  REQUIRE(back.width() == 6);
  CHECK(back.r(1, 2) == doctest::Approx(1.0f));
  CHECK(back.g(0, 0) == doctest::Approx(0.5f).epsilon(0.01));
}

TEST_CASE("png rgb round trip") {
  TempDir dir;
  ImageRgb img = ImageRgb::constant(3, 5, 0.1f, 0.9f, 0.4f);
  save_image(dir.file("a.png"), img);
  ImageRgb back = load_image(dir.file("a.png"));
  REQUIRE(back.height() == 3);
  CHECK(back.b(2, 4) == doctest::Approx(0.4f).epsilon(0.01));
}

TEST_CASE("gray png label raster round trip") {
  TempDir dir;
  PlaneU8 labels(2, 3);
  labels << 0, 1, 2, 3, 4, 255;
  save_label_raster(dir.file("l.png"), labels);
  PlaneU8 back = load_label_raster(dir.file("l.png"));
  REQUIRE(back.rows() == 2);
  CHECK((back == labels).all());
}

TEST_CASE("indexed png keeps palette indices") {
  TempDir dir;
  PlaneU8 labels(3, 3);
  labels << 0, 1, 2, 2, 1, 0, 3, 3, 3;
  save_label_raster(dir.file("l.png"), labels, make_label_palette(8));
  PlaneU8 back = load_label_raster(dir.file("l.png"));
  CHECK((back == labels).all());
}

TEST_CASE("pgm label raster and ascii variants") {
  TempDir dir;
  PlaneU8 labels(2, 2);
  labels << 7, 0, 1, 9;
  save_label_raster(dir.file("l.pgm"), labels);
  CHECK((load_label_raster(dir.file("l.pgm")) == labels).all());

  // hand-written ascii P2
  std::ofstream out(dir.file("a.pgm"));
  out << "P2\n# comment\n2 2\n255\n7 0\n1 9\n";
  out.close();
  CHECK((load_label_raster(dir.file("a.pgm")) == labels).all());
}

TEST_CASE("io errors") {
  TempDir dir;
  CHECK_THROWS_AS(load_image(dir.file("missing.ppm")), IoError);
  std::ofstream(dir.file("bad.pgm")) << "P5\n0 0\n255\n";
  CHECK_THROWS_AS(load_label_raster(dir.file("bad.pgm")), IoError);
}
