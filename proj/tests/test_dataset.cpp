#include <doctest.h>

#include <fstream>

#include "segsel/dataset.hpp"
#include "segsel/error.hpp"
#include "segsel/image.hpp"
#include "test_util.hpp"

using namespace segsel;
using namespace segsel::testing;

namespace {

// Writes a dataset of (image, gt) pairs and a manifest referencing them.
std::string write_dataset(const TempDir& dir, const std::vector<LabelMap>& gts,
                          const std::vector<std::string>& splits) {
  std::ofstream m(dir.file("manifest.txt"));
  m << "#categories\n";
  for (const auto& n : gts.front().vocab->names) m << n << '\n';
  m << "#entries\n";
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const std::string img = "img" + std::to_string(i) + ".ppm";
    const std::string gt = "gt" + std::to_string(i) + ".pgm";
    save_image(dir.file(img), ImageRgb::constant(gts[i].height(), gts[i].width(), 0.5f, 0.5f, 0.5f));
    save_label_map(dir.file(gt), gts[i]);
    m << img << '\t' << gt << '\t' << splits[i] << '\n';
  }
  m.close();
  return dir.file("manifest.txt");
}

}  // namespace

TEST_CASE("load_manifest parses entries and vocabulary") {
  TempDir dir;
  auto vocab = make_vocab(4);
  std::vector<LabelMap> gts;
  for (int i = 0; i < 3; ++i) {
    LabelMap m = make_map(8, 8, vocab);
    fill_rect(m, 0, 0, 3, 3, 1);
    gts.push_back(m);
  }
  const auto path = write_dataset(dir, gts, {"train", "train", "val"});

  DatasetManifest manifest = load_manifest(path);
  REQUIRE(manifest.entries.size() == 3);
  CHECK(manifest.vocab->size() == 4);
  CHECK(manifest.vocab->background_id == 0);
  CHECK(manifest.split("train").size() == 2);
  CHECK(manifest.split("val").size() == 1);
}

TEST_CASE("load_manifest reports dangling paths with the entry index") {
  TempDir dir;
  std::ofstream m(dir.file("manifest.txt"));
  m << "#categories\nbackground\ncow\n#entries\nnope.ppm\tnope.pgm\ttrain\n";
  m.close();
  try {
    load_manifest(dir.file("manifest.txt"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("entry 1") != std::string::npos);
  }
}

TEST_CASE("load_manifest rejects an empty dataset") {
  TempDir dir;
  std::ofstream m(dir.file("manifest.txt"));
  m << "#categories\nbackground\ncow\n#entries\n";
  m.close();
  try {
    load_manifest(dir.file("manifest.txt"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("empty dataset") != std::string::npos);
  }
}

TEST_CASE("extract_regions basics") {
  auto vocab = make_vocab(5);

  SUBCASE("all background yields no regions") {
    LabelMap m = make_map(6, 6, vocab);
    CHECK(extract_regions(m).empty());
  }

  SUBCASE("solid block is one region") {
    LabelMap m = make_map(12, 12, vocab);
    fill_rect(m, 1, 1, 10, 10, 3);
    auto regions = extract_regions(m);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].category == 3);
    CHECK(regions[0].area == 100);
    CHECK(regions[0].bbox_w == 10);
  }

  SUBCASE("diagonal touch splits under 4-connectivity") {
    LabelMap m = make_map(8, 8, vocab);
    fill_rect(m, 0, 0, 3, 3, 2);
    fill_rect(m, 3, 3, 3, 3, 2);
    auto regions = extract_regions(m);
    CHECK(static_cast<int>(regions.size()) == count_components_oracle(m, 2));
    CHECK(regions.size() == 2);
  }
}

TEST_CASE("extract_regions properties") {
  auto vocab = make_vocab(6);

  // Pseudo-random maps: region areas must add up to non-background pixels and
  // ids must be invariant to traversal order (checked via transpose).
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    LabelMap m = make_map(16, 16, vocab);
    std::uniform_int_distribution<int> cat(0, 5), coord(0, 11), size(1, 5);
    for (int b = 0; b < 6; ++b)
      fill_rect(m, coord(rng) % 12, coord(rng) % 12, size(rng), size(rng),
                static_cast<std::uint8_t>(cat(rng)));

    auto regions = extract_regions(m);
    long total = 0;
    for (const auto& r : regions) {
      total += r.area;
      CHECK(static_cast<long>((r.mask != 0).count()) == r.area);
    }
    long non_bg = 0;
    for (Index y = 0; y < 16; ++y)
      for (Index x = 0; x < 16; ++x)
        if (m.labels(y, x) != 0) ++non_bg;
    CHECK(total == non_bg);

    // Same component structure on the transposed map.
    LabelMap t = make_map(16, 16, vocab);
    for (Index y = 0; y < 16; ++y)
      for (Index x = 0; x < 16; ++x) t.labels(x, y) = m.labels(y, x);
    CHECK(extract_regions(t).size() == regions.size());
  }
}

TEST_CASE("region ids are deterministic and ordered") {
  auto vocab = make_vocab(5);
  LabelMap m = make_map(10, 10, vocab);
  fill_rect(m, 6, 6, 3, 3, 1);
  fill_rect(m, 0, 0, 3, 3, 2);
  fill_rect(m, 0, 6, 3, 3, 1);
  auto regions = extract_regions(m);
  REQUIRE(regions.size() == 3);
  CHECK(regions[0].category == 1);  // category ties broken by top-left pixel
  CHECK(regions[0].bbox_y == 0);
  CHECK(regions[1].category == 1);
  CHECK(regions[1].bbox_y == 6);
  CHECK(regions[2].category == 2);
}

TEST_CASE("filter_multi_object") {
  TempDir dir;
  auto vocab = make_vocab(4);

  LabelMap one = make_map(10, 10, vocab);
  fill_rect(one, 0, 0, 6, 6, 1);  // a single cow-sized region

  LabelMap two_cats = make_map(12, 14, vocab);
  fill_rect(two_cats, 0, 0, 6, 6, 1);
  fill_rect(two_cats, 0, 7, 6, 6, 2);

  LabelMap two_same = make_map(16, 16, vocab);  // two disjoint person regions
  fill_rect(two_same, 0, 0, 6, 6, 1);
  fill_rect(two_same, 9, 9, 6, 6, 1);

  const auto path = write_dataset(dir, {one, two_cats, two_same}, {"train", "train", "train"});
  DatasetManifest manifest = load_manifest(path);

  DatasetManifest filtered = filter_multi_object(manifest, 25);
  REQUIRE(filtered.entries.size() == 2);
  CHECK(filtered.entries[0].gt_path == manifest.entries[1].gt_path);

  CHECK(count_components_oracle(two_same, 1) == 2);

  // Idempotence.
  DatasetManifest again = filter_multi_object(filtered, 25);
  CHECK(again.entries.size() == filtered.entries.size());
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  auto vocab = make_vocab(3);
  LabelMap m = make_map(8, 8, vocab);
  fill_rect(m, 0, 0, 4, 4, 1);
  const auto path = write_dataset(dir, {m, m}, {"train", "val"});
  DatasetManifest manifest = load_manifest(path);
  save_manifest(dir.file("copy.txt"), manifest);
  DatasetManifest back = load_manifest(dir.file("copy.txt"));
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].split == "val");
  CHECK(back.vocab->names == manifest.vocab->names);
}
