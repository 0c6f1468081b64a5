#include "segsel/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "segsel/error.hpp"
#include "segsel/image.hpp"

namespace fs = std::filesystem;

namespace segsel {

int LabelVocabulary::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

void LabelVocabulary::validate() const {
  if (names.size() < 2) throw ConfigError("vocabulary needs at least 2 categories");
  if (names.size() > 256) throw ConfigError("vocabulary exceeds 8-bit label range");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ConfigError("empty category name");
    if (n.find('\t') != std::string::npos) throw ConfigError("category name contains a tab: " + n);
    if (!seen.insert(n).second) throw ConfigError("duplicate category name: " + n);
  }
  if (background_id >= names.size()) throw ConfigError("background id out of range");
}

void LabelMap::validate() const {
  if (!vocab) throw ConfigError("label map without vocabulary");
  if (labels.size() == 0) throw ConfigError("empty label map");
  const auto limit = static_cast<std::uint8_t>(vocab->size() - 1);
  if ((labels > limit).any())
    throw ParseError("label map contains values outside the vocabulary");
}

LabelMap load_label_map(const std::string& path, VocabPtr vocab) {
  LabelMap map;
  map.labels = load_label_raster(path);
  map.vocab = std::move(vocab);
  try {
    map.validate();
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return map;
}

void save_label_map(const std::string& path, const LabelMap& map) {
  // Indexed output keeps labels bit-exact while staying viewable.
  std::optional<Palette> palette;
  if (path.size() > 4 && path.substr(path.size() - 4) == ".png")
    palette = make_label_palette(256);
  save_label_raster(path, map.labels, palette);
}

long Region::mask_origin_linear(Index image_width) const {
  for (Index y = 0; y < bbox_h; ++y)
    for (Index x = 0; x < bbox_w; ++x)
      if (mask(y, x)) return static_cast<long>(bbox_y + y) * image_width + (bbox_x + x);
  return -1;
}

std::vector<Region> extract_regions(const LabelMap& map, long min_region_px) {
  map.validate();
  const Index h = map.height(), w = map.width();
  const std::uint8_t bg = map.vocab->background_id;

  std::vector<int> component(static_cast<std::size_t>(h * w), -1);
  std::vector<Region> regions;
  std::vector<Index> stack;

  auto lin = [w](Index y, Index x) { return static_cast<std::size_t>(y * w + x); };

  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const std::uint8_t cat = map.labels(y, x);
      if (cat == bg || component[lin(y, x)] >= 0) continue;

      const int comp_id = static_cast<int>(regions.size());
      Region region;
      region.category = cat;
      Index min_x = x, max_x = x, min_y = y, max_y = y;
      double sum_x = 0.0, sum_y = 0.0;
      long area = 0, border = 0;

      stack.clear();
      stack.push_back(y * w + x);
      component[lin(y, x)] = comp_id;
      while (!stack.empty()) {
        const Index p = stack.back();
        stack.pop_back();
        const Index py = p / w, px = p % w;
        ++area;
        sum_x += static_cast<double>(px);
        sum_y += static_cast<double>(py);
        min_x = std::min(min_x, px);
        max_x = std::max(max_x, px);
        min_y = std::min(min_y, py);
        max_y = std::max(max_y, py);
        if (px == 0 || px == w - 1 || py == 0 || py == h - 1) ++border;

        const Index ny[4] = {py - 1, py + 1, py, py};
        const Index nx[4] = {px, px, px - 1, px + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          if (map.labels(ny[k], nx[k]) != cat) continue;
          if (component[lin(ny[k], nx[k])] >= 0) continue;
          component[lin(ny[k], nx[k])] = comp_id;
          stack.push_back(ny[k] * w + nx[k]);
        }
      }

      region.bbox_x = min_x;
      region.bbox_y = min_y;
      region.bbox_w = max_x - min_x + 1;
      region.bbox_h = max_y - min_y + 1;
      region.area = area;
      region.border_contact = border;
      region.centroid_x = sum_x / static_cast<double>(area);
      region.centroid_y = sum_y / static_cast<double>(area);
      region.mask = MaskPlane::Zero(region.bbox_h, region.bbox_w);
      regions.push_back(std::move(region));
    }
  }

  // Fill masks in one pass now that every pixel knows its component.
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const int c = component[lin(y, x)];
      if (c >= 0) regions[static_cast<std::size_t>(c)].mask(y - regions[static_cast<std::size_t>(c)].bbox_y,
                                                            x - regions[static_cast<std::size_t>(c)].bbox_x) = 1;
    }

  if (min_region_px > 0) {
    std::erase_if(regions, [min_region_px](const Region& r) { return r.area < min_region_px; });
  }

  std::sort(regions.begin(), regions.end(), [w](const Region& a, const Region& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.mask_origin_linear(w) < b.mask_origin_linear(w);
  });
  for (std::size_t i = 0; i < regions.size(); ++i) regions[i].id = static_cast<int>(i);
  return regions;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == tag) out.push_back(e);
  return out;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();

  auto vocab = std::make_shared<LabelVocabulary>();
  DatasetManifest manifest;
  enum class Mode { preamble, categories, entries } mode = Mode::preamble;

  std::string line;
  std::size_t line_no = 0, entry_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "#categories") {
      mode = Mode::categories;
      continue;
    }
    if (line == "#entries") {
      mode = Mode::entries;
      continue;
    }
    if (line.rfind("#background", 0) == 0) {
      std::istringstream ls(line.substr(11));
      std::string token;
      ls >> token;
      if (token.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": #background needs a name");
      const int idx = vocab->index_of(token);
      if (idx < 0) throw ParseError(path + ":" + std::to_string(line_no) + ": unknown background category " + token);
      vocab->background_id = static_cast<std::uint8_t>(idx);
      continue;
    }
    if (line[0] == '#') continue;  // comment

    const bool has_tab = line.find('\t') != std::string::npos;
    if (mode == Mode::categories && !has_tab) {
      vocab->names.push_back(line);
      continue;
    }
    if (!has_tab)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected TAB-separated entry");

    ++entry_no;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!std::getline(ls, e.image_path, '\t') || !std::getline(ls, e.gt_path, '\t') ||
        !std::getline(ls, e.split))
      throw ParseError(path + ": entry " + std::to_string(entry_no) + ": malformed line");
    if (e.split != "train" && e.split != "val")
      throw ParseError(path + ": entry " + std::to_string(entry_no) + ": unknown split '" + e.split + "'");
    e.image_path = (base / e.image_path).lexically_normal().string();
    e.gt_path = (base / e.gt_path).lexically_normal().string();
    if (!fs::exists(e.image_path))
      throw ParseError(path + ": entry " + std::to_string(entry_no) + ": missing image " + e.image_path);
    if (!fs::exists(e.gt_path))
      throw ParseError(path + ": entry " + std::to_string(entry_no) + ": missing label map " + e.gt_path);
    manifest.entries.push_back(std::move(e));
  }

  try {
    vocab->validate();
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (manifest.entries.empty()) throw ParseError(path + ": empty dataset");
  manifest.vocab = std::move(vocab);
  return manifest;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  out << "#categories\n";
  for (const auto& n : manifest.vocab->names) out << n << '\n';
  if (manifest.vocab->background_id != 0)
    out << "#background " << manifest.vocab->name(manifest.vocab->background_id) << '\n';
  out << "#entries\n";
  const fs::path base = fs::path(path).parent_path();
  for (const auto& e : manifest.entries) {
    out << fs::path(e.image_path).lexically_proximate(base).string() << '\t'
        << fs::path(e.gt_path).lexically_proximate(base).string() << '\t' << e.split << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

DatasetManifest filter_multi_object(const DatasetManifest& manifest, long min_region_px) {
  DatasetManifest out;
  out.vocab = manifest.vocab;
  for (const auto& e : manifest.entries) {
    const LabelMap gt = load_label_map(e.gt_path, manifest.vocab);
    if (extract_regions(gt, min_region_px).size() >= 2) out.entries.push_back(e);
  }
  return out;
}

}  // namespace segsel
