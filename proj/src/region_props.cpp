#include "segsel/region_props.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "segsel/error.hpp"

namespace segsel {
namespace {

struct Pt {
  double x, y;
};

double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain over the corner points of the mask pixels.
double convex_hull_area(const MaskPlane& mask) {
  std::vector<Pt> pts;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x)) continue;
      // Interior corners never end up on the hull; boundary pixels suffice.
      const bool boundary = y == 0 || y == mask.rows() - 1 || x == 0 || x == mask.cols() - 1 ||
                            !mask(y - 1, x) || !mask(y + 1, x) || !mask(y, x - 1) || !mask(y, x + 1);
      if (!boundary) continue;
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      pts.push_back({fx, fy});
      pts.push_back({fx + 1.0, fy});
      pts.push_back({fx, fy + 1.0});
      pts.push_back({fx + 1.0, fy + 1.0});
    }
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Pt& a, const Pt& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return static_cast<double>(pts.size() > 1);

  std::vector<Pt> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);

  double area2 = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Pt& a = hull[i];
    const Pt& b = hull[(i + 1) % hull.size()];
    area2 += a.x * b.y - b.x * a.y;
  }
  return std::abs(area2) / 2.0;
}

struct HoleStats {
  long count = 0;   // distinct holes
  long pixels = 0;  // total enclosed background pixels
};

// Holes: 8-connected background components inside the padded bbox that never
// reach the pad ring (the dual of 4-connected foreground).
HoleStats find_holes(const MaskPlane& mask) {
  const Index h = mask.rows() + 2, w = mask.cols() + 2;
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(h * w), 0);
  auto is_bg = [&](Index y, Index x) {
    if (y <= 0 || y >= h - 1 || x <= 0 || x >= w - 1) return true;  // pad ring
    return mask(y - 1, x - 1) == 0;
  };

  std::vector<Index> stack;
  auto flood = [&](Index start_y, Index start_x) {
    long size = 0;
    stack.clear();
    stack.push_back(start_y * w + start_x);
    visited[static_cast<std::size_t>(start_y * w + start_x)] = 1;
    while (!stack.empty()) {
      const Index p = stack.back();
      stack.pop_back();
      ++size;
      const Index py = p / w, px = p % w;
      for (Index dy = -1; dy <= 1; ++dy)
        for (Index dx = -1; dx <= 1; ++dx) {
          const Index ny = py + dy, nx = px + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::size_t q = static_cast<std::size_t>(ny * w + nx);
          if (visited[q] || !is_bg(ny, nx)) continue;
          visited[q] = 1;
          stack.push_back(ny * w + nx);
        }
    }
    return size;
  };

  flood(0, 0);  // outer background, reached through the pad ring

  HoleStats holes;
  for (Index y = 1; y < h - 1; ++y)
    for (Index x = 1; x < w - 1; ++x)
      if (is_bg(y, x) && !visited[static_cast<std::size_t>(y * w + x)]) {
        ++holes.count;
        holes.pixels += flood(y, x);
      }
  return holes;
}

}  // namespace

RegionAttributes extract_region_attributes(const MaskPlane& mask, Index offset_x, Index offset_y) {
  const long area = static_cast<long>((mask != 0).count());
  if (area == 0) throw ConfigError("extract_region_attributes: empty mask");

  RegionAttributes a;
  a.area = static_cast<double>(area);

  Index min_x = mask.cols(), max_x = -1, min_y = mask.rows(), max_y = -1;
  double sx = 0.0, sy = 0.0;
  long perimeter = 0;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x)) continue;
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
      if (y == 0 || !mask(y - 1, x)) ++perimeter;
      if (y == mask.rows() - 1 || !mask(y + 1, x)) ++perimeter;
      if (x == 0 || !mask(y, x - 1)) ++perimeter;
      if (x == mask.cols() - 1 || !mask(y, x + 1)) ++perimeter;
    }

  const double cx = sx / a.area, cy = sy / a.area;
  a.centroid_x = cx + static_cast<double>(offset_x);
  a.centroid_y = cy + static_cast<double>(offset_y);
  a.bbox_x = static_cast<double>(min_x + offset_x);
  a.bbox_y = static_cast<double>(min_y + offset_y);
  a.bbox_w = static_cast<double>(max_x - min_x + 1);
  a.bbox_h = static_cast<double>(max_y - min_y + 1);
  a.perimeter = static_cast<double>(perimeter);
  a.extent = a.area / (a.bbox_w * a.bbox_h);
  a.equivalent_diameter = std::sqrt(4.0 * a.area / std::numbers::pi);

  double cxx = 0.0, cyy = 0.0, cxy = 0.0;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x)) continue;
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      cxx += dx * dx;
      cyy += dy * dy;
      cxy += dx * dy;
    }
  cxx = cxx / a.area + 1.0 / 12.0;
  cyy = cyy / a.area + 1.0 / 12.0;
  cxy = -cxy / a.area;  // flip to the y-up convention

  const double common = std::sqrt((cxx - cyy) * (cxx - cyy) / 4.0 + cxy * cxy);
  const double l1 = (cxx + cyy) / 2.0 + common;
  const double l2 = (cxx + cyy) / 2.0 - common;
  a.eccentricity = l1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
  double theta = 0.5 * std::atan2(2.0 * cxy, cxx - cyy) * 180.0 / std::numbers::pi;
  if (theta <= -90.0) theta += 180.0;
  a.orientation_deg = theta;

  const HoleStats holes = find_holes(mask);
  const double filled = a.area + static_cast<double>(holes.pixels);
  const double hull = convex_hull_area(mask);
  a.solidity = hull > 0.0 ? std::min(1.0, filled / hull) : 1.0;
  a.euler_number = 1.0 - static_cast<double>(holes.count);
  return a;
}

const std::array<const char*, RegionAttributes::kDim>& RegionAttributes::field_names() {
  static const std::array<const char*, kDim> names = {
      "area",        "centroid_x", "centroid_y",   "bbox_x",       "bbox_y",
      "bbox_w",      "bbox_h",     "perimeter",    "eccentricity", "orientation_deg",
      "solidity",    "extent",     "equivalent_diameter", "euler_number"};
  return names;
}

RegionAttributes::Array RegionAttributes::to_array() const {
  return {area,   centroid_x, centroid_y,   bbox_x,       bbox_y,          bbox_w,   bbox_h,
          perimeter, eccentricity, orientation_deg, solidity, extent, equivalent_diameter,
          euler_number};
}

RegionAttributes RegionAttributes::from_array(const Array& v) {
  RegionAttributes a;
  a.area = v[0];
  a.centroid_x = v[1];
  a.centroid_y = v[2];
  a.bbox_x = v[3];
  a.bbox_y = v[4];
  a.bbox_w = v[5];
  a.bbox_h = v[6];
  a.perimeter = v[7];
  a.eccentricity = v[8];
  a.orientation_deg = v[9];
  a.solidity = v[10];
  a.extent = v[11];
  a.equivalent_diameter = v[12];
  a.euler_number = v[13];
  return a;
}

}  // namespace segsel
