#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "segsel/error.hpp"
#include "segsel/region_props.hpp"

using namespace segsel;

namespace {

MaskPlane solid(Index h, Index w) { return MaskPlane::Ones(h, w); }

// Independent moment oracle: direct per-pixel summation, then the ellipse
// formulas, written out separately from the library path.
struct MomentOracle {
  double eccentricity, orientation_deg;
};

MomentOracle moments_oracle(const MaskPlane& mask) {
  double n = 0, sx = 0, sy = 0;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x)
      if (mask(y, x)) {
        n += 1;
        sx += x;
        sy += y;
      }
  const double cx = sx / n, cy = sy / n;
  double mxx = 0, myy = 0, mxy = 0;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x)
      if (mask(y, x)) {
        mxx += (x - cx) * (x - cx);
        myy += (y - cy) * (y - cy);
        mxy += (x - cx) * (y - cy);
      }
  mxx = mxx / n + 1.0 / 12.0;
  myy = myy / n + 1.0 / 12.0;
  mxy = -mxy / n;
  const double tr = mxx + myy;
  const double det = std::sqrt((mxx - myy) * (mxx - myy) + 4.0 * mxy * mxy);
  const double l1 = (tr + det) / 2.0, l2 = (tr - det) / 2.0;
  MomentOracle o;
  o.eccentricity = std::sqrt(1.0 - l2 / l1);
  o.orientation_deg = 0.5 * std::atan2(2.0 * mxy, mxx - myy) * 180.0 / std::numbers::pi;
  if (o.orientation_deg <= -90.0) o.orientation_deg += 180.0;
  return o;
}

}  // namespace

TEST_CASE("solid square") {
  const auto a = extract_region_attributes(solid(10, 10));
  CHECK(a.area == 100.0);
  CHECK(a.extent == doctest::Approx(1.0));
  CHECK(a.eccentricity == doctest::Approx(0.0).epsilon(1e-12));
  // closed form: sqrt(4*100/pi)
  CHECK(a.equivalent_diameter == doctest::Approx(std::sqrt(400.0 / std::numbers::pi)).epsilon(1e-9));
  CHECK(a.equivalent_diameter == doctest::Approx(11.2838).epsilon(1e-4));
  CHECK(a.perimeter == 40.0);
  CHECK(a.solidity == doctest::Approx(1.0));
  CHECK(a.euler_number == 1.0);
  CHECK(a.centroid_x == doctest::Approx(4.5));
}

TEST_CASE("single pixel") {
  const auto a = extract_region_attributes(solid(1, 1));
  CHECK(a.area == 1.0);
  CHECK(a.perimeter == 4.0);  // exposed-edge convention
  CHECK(a.solidity == doctest::Approx(1.0));
  CHECK(a.eccentricity == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("2x20 bar: closed-form eccentricity, orientation 0") {
  // Unit-square pixel moments: variance n^2/12 along each axis.
  const auto a = extract_region_attributes(solid(2, 20));
  CHECK(a.orientation_deg == doctest::Approx(0.0).epsilon(1e-9));
  const double expect = std::sqrt(1.0 - (4.0 / 12.0) / (400.0 / 12.0));
  CHECK(a.eccentricity == doctest::Approx(expect).epsilon(1e-9));

  const auto o = moments_oracle(solid(2, 20));
  CHECK(a.eccentricity == doctest::Approx(o.eccentricity).epsilon(1e-12));
}

TEST_CASE("diagonal bar leans at -45 degrees") {
  MaskPlane m = MaskPlane::Zero(12, 12);
  for (Index i = 0; i < 12; ++i) m(i, i) = 1;
  const auto a = extract_region_attributes(m);
  CHECK(a.orientation_deg == doctest::Approx(-45.0).epsilon(1e-6));
  const auto o = moments_oracle(m);
  CHECK(a.orientation_deg == doctest::Approx(o.orientation_deg).epsilon(1e-9));
  CHECK(a.eccentricity == doctest::Approx(o.eccentricity).epsilon(1e-12));
}

TEST_CASE("ring has a hole") {
  MaskPlane m = MaskPlane::Ones(5, 5);
  for (Index y = 1; y < 4; ++y)
    for (Index x = 1; x < 4; ++x) m(y, x) = 0;
  const auto a = extract_region_attributes(m);
  CHECK(a.area == 16.0);
  CHECK(a.euler_number == 0.0);
  // filled area 25 over hull area 25
  CHECK(a.solidity == doctest::Approx(1.0));
}

TEST_CASE("triangle is not convex-solid") {
  MaskPlane m = MaskPlane::Zero(8, 8);
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x <= y; ++x) m(y, x) = 1;
  const auto a = extract_region_attributes(m);
  CHECK(a.solidity < 1.0);
  CHECK(a.solidity > 0.5);
  CHECK(a.euler_number == 1.0);
}

TEST_CASE("translation invariance") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> bit(0, 1);
  MaskPlane blob = MaskPlane::Zero(9, 9);
  for (Index y = 2; y < 7; ++y)
    for (Index x = 2; x < 7; ++x) blob(y, x) = static_cast<std::uint8_t>(bit(rng));
  blob(4, 4) = 1;
  // keep it connected enough to stay one region: fill the middle row
  for (Index x = 2; x < 7; ++x) blob(4, x) = 1;

  MaskPlane shifted = MaskPlane::Zero(9, 9);
  shifted.block(1, 2, 7, 7) = blob.block(0, 0, 7, 7);

  const auto a = extract_region_attributes(blob);
  const auto b = extract_region_attributes(shifted);
  CHECK(a.area == b.area);
  CHECK(a.perimeter == b.perimeter);
  CHECK(a.eccentricity == doctest::Approx(b.eccentricity).epsilon(1e-12));
  CHECK(a.orientation_deg == doctest::Approx(b.orientation_deg).epsilon(1e-9));
  CHECK(a.solidity == doctest::Approx(b.solidity).epsilon(1e-12));
  CHECK(a.extent == doctest::Approx(b.extent).epsilon(1e-12));
  CHECK(a.centroid_y == doctest::Approx(b.centroid_y - 1.0).epsilon(1e-9));
}

TEST_CASE("offsets shift centroid and bbox into image coordinates") {
  const auto a = extract_region_attributes(solid(4, 4), 10, 20);
  CHECK(a.bbox_x == 10.0);
  CHECK(a.bbox_y == 20.0);
  CHECK(a.centroid_x == doctest::Approx(11.5));
  CHECK(a.centroid_y == doctest::Approx(21.5));
}

TEST_CASE("empty mask throws") {
  CHECK_THROWS_AS(extract_region_attributes(MaskPlane::Zero(3, 3)), ConfigError);
}

TEST_CASE("attribute array round trip") {
  const auto a = extract_region_attributes(solid(3, 7), 2, 5);
  const auto arr = a.to_array();
  const auto b = RegionAttributes::from_array(arr);
  CHECK(b.area == a.area);
  CHECK(b.orientation_deg == a.orientation_deg);
  CHECK(b.euler_number == a.euler_number);
  CHECK(RegionAttributes::field_names()[0] == std::string("area"));
}
