#pragma once

#include <array>

#include "segsel/types.hpp"

namespace segsel {

// Geometric attributes of a binary region mask.
//
// Conventions: pixel (y, x) is the point (x, y); second central moments carry
// the 1/12 unit-square correction so a wxh solid block matches the continuous
// rectangle; orientation is measured counterclockwise from the x axis with y
// pointing up, in (-90, 90] degrees; perimeter counts exposed 4-neighbor pixel
// edges; solidity is filled area over convex hull area.
struct RegionAttributes {
  double area = 0.0;
  double centroid_x = 0.0, centroid_y = 0.0;
  double bbox_x = 0.0, bbox_y = 0.0, bbox_w = 0.0, bbox_h = 0.0;
  double perimeter = 0.0;
  double eccentricity = 0.0;       // in [0, 1]
  double orientation_deg = 0.0;    // in (-90, 90]
  double solidity = 1.0;           // in (0, 1]
  double extent = 1.0;             // area / (bbox_w * bbox_h)
  double equivalent_diameter = 0.0;
  double euler_number = 1.0;       // 1 - number of holes

  static constexpr int kDim = 14;
  using Array = std::array<double, kDim>;
  Array to_array() const;
  static RegionAttributes from_array(const Array& a);
  static const std::array<const char*, kDim>& field_names();
};

// Computes the attributes of a 0/1 mask. Offsets shift the reported centroid
// and bbox into image coordinates when the mask is a bbox crop.
RegionAttributes extract_region_attributes(const MaskPlane& mask, Index offset_x = 0,
                                           Index offset_y = 0);

}  // namespace segsel
