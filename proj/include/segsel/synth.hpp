#pragma once

#include <string>
#include <vector>

#include "segsel/dataset.hpp"
#include "segsel/image.hpp"
#include "segsel/segmenters.hpp"
#include "segsel/types.hpp"

namespace segsel {

// Desk-scale scene generator. Scenes follow strict compositional rules
// (category order fixes the vertical layout, category index fixes object
// size), so relation statistics are sharp and portfolio strengths are
// decidable by construction.
struct SynthSpec {
  Index width = 128, height = 96;
  int n_images = 60;
  int n_backends = 3;
  std::size_t n_categories = 21;  // including background
  int min_objects = 2, max_objects = 4;
  std::uint64_t seed = 7;
  double val_fraction = 0.5;
  std::string image_format = "png";  // "ppm" trades size for speed
};

VocabPtr synth_vocabulary(std::size_t n_categories);

struct SynthScene {
  ImageRgb image;
  LabelMap gt;
  int archetype = 0;  // backend index this scene favors
};

// Deterministic in (spec.seed, image_index).
SynthScene generate_scene(const SynthSpec& spec, VocabPtr vocab, int image_index);

// Writes images, ground-truth rasters and the manifest under out_dir and
// returns the loaded manifest.
DatasetManifest write_synth_dataset(const SynthSpec& spec, const std::string& out_dir);

// Scenes built around a fixed category triple for contradiction experiments:
// the paired "corrupt" backend relabels the top object into the bottom
// object's category, which the learned statistics reject.
struct ScenarioSpec {
  Index width = 128, height = 96;
  int n_train_scenes = 30;  // clean corpus for co-occurrence learning
  int n_eval_scenes = 20;
  std::uint64_t seed = 11;
  std::size_t n_categories = 21;
  // Same shape family (ellipses) so object area tracks the radius alone and
  // the size relations stay strict.
  int category_top = 3, category_mid = 9, category_bottom = 15;
};

SynthScene generate_scenario_scene(const ScenarioSpec& spec, VocabPtr vocab, int image_index);

// Two-backend portfolio: "corrupt" flips top -> bottom category, "fix" is a
// clean oracle.
PortfolioSpec scenario_portfolio(const ScenarioSpec& spec);

}  // namespace segsel
