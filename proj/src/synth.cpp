#include "segsel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "segsel/error.hpp"

namespace fs = std::filesystem;

namespace segsel {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Rgb {
  float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  double r = v, g = t, b = p;
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

Rgb category_color(std::size_t category, std::size_t n_categories) {
  return hsv_to_rgb(static_cast<double>(category) / static_cast<double>(n_categories), 0.75, 0.85);
}

// Shape family cycles with the category so outlines are category-specific.
bool inside_shape(std::size_t category, double dx, double dy, double radius) {
  switch (category % 3) {
    case 0:  // ellipse, slightly wider than tall
      return (dx * dx) / (1.44 * radius * radius) + (dy * dy) / (0.81 * radius * radius) <= 1.0;
    case 1:  // rectangle
      return std::abs(dx) <= 1.2 * radius && std::abs(dy) <= 0.8 * radius;
    default:  // diamond
      return std::abs(dx) / 1.3 + std::abs(dy) / 0.9 <= radius;
  }
}

struct ObjectPlan {
  std::size_t category;
  double cx, cy, radius;
};

void render(SynthScene& scene, const std::vector<ObjectPlan>& objects, int archetype,
            std::uint64_t noise_seed, std::size_t n_categories) {
  const Index h = scene.gt.height(), w = scene.gt.width();
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<float> noise(0.0f, 0.02f);

  // Archetype-keyed background: tint plus a horizontal wave whose frequency
  // identifies the scene family to the feature bank.
  const Rgb bg = hsv_to_rgb(0.55 + 0.13 * archetype, 0.25, 0.30 + 0.12 * archetype);
  const double freq = 2.0 * std::numbers::pi * (2.0 + 3.0 * archetype);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const float wave = 0.06f * static_cast<float>(std::sin(freq * x / static_cast<double>(w)));
      scene.image.r(y, x) = std::clamp(bg.r + wave + noise(rng), 0.0f, 1.0f);
      scene.image.g(y, x) = std::clamp(bg.g + wave + noise(rng), 0.0f, 1.0f);
      scene.image.b(y, x) = std::clamp(bg.b + wave + noise(rng), 0.0f, 1.0f);
    }

  for (const auto& obj : objects) {
    const Rgb color = category_color(obj.category, n_categories);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        if (!inside_shape(obj.category, x - obj.cx, y - obj.cy, obj.radius)) continue;
        scene.gt.labels(y, x) = static_cast<std::uint8_t>(obj.category);
        scene.image.r(y, x) = std::clamp(color.r + noise(rng), 0.0f, 1.0f);
        scene.image.g(y, x) = std::clamp(color.g + noise(rng), 0.0f, 1.0f);
        scene.image.b(y, x) = std::clamp(color.b + noise(rng), 0.0f, 1.0f);
      }
  }
}

}  // namespace

VocabPtr synth_vocabulary(std::size_t n_categories) {
  static const char* kNames[] = {
      "aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",    "car",
      "cat",       "chair",   "cow",   "diningtable", "dog",    "horse",  "motorbike",
      "person",    "pottedplant", "sheep", "sofa",    "train",  "tvmonitor"};
  auto vocab = std::make_shared<LabelVocabulary>();
  vocab->names.push_back("background");
  for (std::size_t c = 1; c < n_categories; ++c) {
    if (c - 1 < std::size(kNames))
      vocab->names.push_back(kNames[c - 1]);
    else
      vocab->names.push_back("object" + std::to_string(c));
  }
  vocab->validate();
  return vocab;
}

SynthScene generate_scene(const SynthSpec& spec, VocabPtr vocab, int image_index) {
  if (spec.n_categories < 4) throw ConfigError("synth: need at least 4 categories");
  if (spec.min_objects < 2 || spec.max_objects < spec.min_objects)
    throw ConfigError("synth: bad object count range");

  SynthScene scene;
  scene.archetype = image_index % spec.n_backends;
  scene.gt.vocab = vocab;
  scene.gt.labels = PlaneU8::Constant(spec.height, spec.width, vocab->background_id);
  scene.image.r.resize(spec.height, spec.width);
  scene.image.g.resize(spec.height, spec.width);
  scene.image.b.resize(spec.height, spec.width);

  std::mt19937_64 rng(mix(spec.seed, static_cast<std::uint64_t>(image_index)));

  // Categories this archetype's backend is strong on (round-robin pools,
  // mirroring make_synthetic_portfolio).
  std::vector<std::size_t> pool;
  for (std::size_t c = 1; c < spec.n_categories; ++c)
    if (static_cast<int>((c - 1) % static_cast<std::size_t>(spec.n_backends)) == scene.archetype)
      pool.push_back(c);

  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  const int n_objects = std::min<int>(count_dist(rng), static_cast<int>(pool.size()));

  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> cats(pool.begin(), pool.begin() + n_objects);
  std::sort(cats.begin(), cats.end());  // low category on top: fixed layout rule

  std::vector<ObjectPlan> objects;
  const double band_h = static_cast<double>(spec.height) / n_objects;
  std::uniform_real_distribution<double> jitter(-0.08, 0.08);
  for (int k = 0; k < n_objects; ++k) {
    ObjectPlan obj;
    obj.category = cats[static_cast<std::size_t>(k)];
    // Size grows with the category index; the band caps it.
    const double scale = 0.10 + 0.16 * static_cast<double>(obj.category) / spec.n_categories;
    obj.radius = std::min(scale * spec.width, band_h / 2.0 - 3.0);
    obj.cx = spec.width * (0.5 + jitter(rng));
    obj.cy = band_h * (k + 0.5) + band_h * 0.2 * jitter(rng);
    objects.push_back(obj);
  }

  render(scene, objects, scene.archetype, mix(spec.seed, mix(97, image_index)), spec.n_categories);
  return scene;
}

DatasetManifest write_synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.n_images < 2) throw ConfigError("synth: need at least 2 images");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "gt");

  auto vocab = synth_vocabulary(spec.n_categories);
  DatasetManifest manifest;
  manifest.vocab = vocab;

  const int n_train = std::max(1, static_cast<int>(spec.n_images * (1.0 - spec.val_fraction)));
  for (int i = 0; i < spec.n_images; ++i) {
    const SynthScene scene = generate_scene(spec, vocab, i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene%04d", i);
    const std::string img_path =
        (fs::path(out_dir) / "images" / (std::string(stem) + "." + spec.image_format)).string();
    const std::string gt_path =
        (fs::path(out_dir) / "gt" / (std::string(stem) + ".png")).string();
    save_image(img_path, scene.image);
    save_label_map(gt_path, scene.gt);
    manifest.entries.push_back({img_path, gt_path, i < n_train ? "train" : "val"});
  }
  save_manifest((fs::path(out_dir) / "manifest.txt").string(), manifest);
  return manifest;
}

SynthScene generate_scenario_scene(const ScenarioSpec& spec, VocabPtr vocab, int image_index) {
  SynthScene scene;
  scene.archetype = 0;
  scene.gt.vocab = vocab;
  scene.gt.labels = PlaneU8::Constant(spec.height, spec.width, vocab->background_id);
  scene.image.r.resize(spec.height, spec.width);
  scene.image.g.resize(spec.height, spec.width);
  scene.image.b.resize(spec.height, spec.width);

  std::mt19937_64 rng(mix(spec.seed, static_cast<std::uint64_t>(image_index)));
  std::uniform_real_distribution<double> jitter(-0.06, 0.06);

  const std::size_t cats[3] = {static_cast<std::size_t>(spec.category_top),
                               static_cast<std::size_t>(spec.category_mid),
                               static_cast<std::size_t>(spec.category_bottom)};
  std::vector<ObjectPlan> objects;
  const double band_h = static_cast<double>(spec.height) / 3.0;
  for (int k = 0; k < 3; ++k) {
    ObjectPlan obj;
    obj.category = cats[k];
    // strictly growing radii, scaled to the band so nothing gets clipped
    obj.radius = (0.21 + 0.12 * k) * band_h;
    obj.cx = spec.width * (0.5 + jitter(rng));
    obj.cy = band_h * (k + 0.5) + band_h * 0.10 * jitter(rng);
    objects.push_back(obj);
  }
  render(scene, objects, 0, mix(spec.seed, mix(131, image_index)), spec.n_categories);
  return scene;
}

PortfolioSpec scenario_portfolio(const ScenarioSpec& spec) {
  PortfolioSpec portfolio;

  NoisyOracleParams corrupt;
  corrupt.miss_rate = 0.0;
  // Strong on everything but the top category, which it flips into the
  // bottom one; relations then disagree with every clean training scene.
  for (std::size_t c = 1; c < spec.n_categories; ++c)
    if (static_cast<int>(c) != spec.category_top) corrupt.strong_categories.push_back(static_cast<int>(c));
  corrupt.confusions.emplace_back(spec.category_top, spec.category_bottom);
  portfolio.backends.push_back({"corrupt", "noisy_oracle", corrupt.to_json()});

  NoisyOracleParams fix;  // clean oracle
  portfolio.backends.push_back({"fix", "noisy_oracle", fix.to_json()});
  portfolio.validate();
  return portfolio;
}

}  // namespace segsel
