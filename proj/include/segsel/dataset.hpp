#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "segsel/types.hpp"

namespace segsel {

// Ordered category set. Index 0 is background by convention; a manifest may
// override that with an explicit `#background` line.
struct LabelVocabulary {
  std::vector<std::string> names;
  std::uint8_t background_id = 0;

  std::size_t size() const { return names.size(); }
  const std::string& name(std::size_t id) const { return names.at(id); }
  // Returns -1 when the name is unknown.
  int index_of(const std::string& name) const;

  void validate() const;  // throws ConfigError on duplicate names etc.
};

using VocabPtr = std::shared_ptr<const LabelVocabulary>;

// Per-pixel category grid. The one currency every segmenter, the refinement
// loop and the scorer trade in.
struct LabelMap {
  PlaneU8 labels;  // labels(y, x) < vocab->size()
  VocabPtr vocab;

  Index height() const { return labels.rows(); }
  Index width() const { return labels.cols(); }

  void validate() const;  // range check against the vocabulary
};

LabelMap load_label_map(const std::string& path, VocabPtr vocab);
void save_label_map(const std::string& path, const LabelMap& map);

// One 4-connected component of a non-background category.
struct Region {
  int id = 0;
  std::uint8_t category = 0;
  Index bbox_x = 0, bbox_y = 0, bbox_w = 0, bbox_h = 0;
  MaskPlane mask;  // bbox_h x bbox_w, values 0/1
  long area = 0;
  long border_contact = 0;  // mask pixels lying on the image border
  double centroid_x = 0.0, centroid_y = 0.0;

  long mask_origin_linear(Index image_width) const;  // top-left set pixel, row-major
};

// All 4-connected non-background components, in deterministic id order
// (category, then top-left pixel). Components below `min_region_px` are
// dropped; the default keeps everything so that region areas add up to the
// non-background pixel count.
std::vector<Region> extract_regions(const LabelMap& map, long min_region_px = 0);

struct ManifestEntry {
  std::string image_path;
  std::string gt_path;
  std::string split;  // "train" | "val"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  VocabPtr vocab;

  std::vector<ManifestEntry> split(const std::string& tag) const;
};

// Line-oriented manifest: a `#categories` block with one name per line,
// then `image<TAB>gt<TAB>split` entries (optionally after `#entries`).
// Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Keeps exactly the entries whose ground truth has >= 2 distinct
// non-background components of at least `min_region_px` pixels.
DatasetManifest filter_multi_object(const DatasetManifest& manifest, long min_region_px = 25);

}  // namespace segsel
