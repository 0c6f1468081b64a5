#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "segsel/dataset.hpp"
#include "segsel/image.hpp"
#include "segsel/types.hpp"

namespace segsel {

// One segmentation backend. `kind` is "external", "noisy_oracle" or
// "color_kmeans"; `params` holds kind-specific settings.
struct BackendSpec {
  AlgorithmId id;
  std::string kind;
  nlohmann::ordered_json params;
};

struct PortfolioSpec {
  std::vector<BackendSpec> backends;

  std::size_t size() const { return backends.size(); }
  int index_of(const AlgorithmId& id) const;  // -1 when unknown
  const BackendSpec& backend(const AlgorithmId& id) const;
  std::vector<AlgorithmId> ids() const;
  void validate() const;  // >= 2 backends, unique ids
};

void save_portfolio(const std::string& path, const PortfolioSpec& portfolio);
PortfolioSpec load_portfolio(const std::string& path);

// What a backend gets to see. Oracle-family backends corrupt the ground
// truth, so it rides along where available; external processes only ever
// receive the image file.
struct SegmenterInput {
  ImageRgb image;
  std::optional<LabelMap> ground_truth;
  std::string image_id;  // stable identity, seeds synthetic backends
};

struct BackendRuntime {
  std::string work_dir;            // staging area for external backends
  double timeout_seconds = 300.0;  // per invocation
  std::uint64_t seed = 0;          // mixed into synthetic backends
  std::string* stderr_capture = nullptr;
};

// Runs one backend on one image. The output is validated: its dimensions
// must match the input and every label must be in-vocabulary.
LabelMap run_segmenter(const PortfolioSpec& portfolio, const AlgorithmId& id,
                       const SegmenterInput& input, VocabPtr vocab,
                       const BackendRuntime& runtime);

// Parameters of the built-in noisy-oracle family: reproduce the ground truth
// faithfully on `strong` categories, degrade everything else.
struct NoisyOracleParams {
  std::vector<int> strong_categories;
  double miss_rate = 0.0;                         // chance a weak region is dropped
  std::vector<std::pair<int, int>> confusions;    // weak category relabeling
  int erode_px = 0;                               // applied to weak regions
  int dilate_px = 0;
  std::uint64_t base_seed = 0;

  nlohmann::ordered_json to_json() const;
  static NoisyOracleParams from_json(const nlohmann::ordered_json& j);
};

struct SyntheticPortfolioSpec {
  int n_backends = 3;
  std::size_t n_categories = 21;  // including background
  double weak_miss_rate = 0.5;
  int weak_erode_px = 1;
  bool confuse_weak = true;  // weak categories get a wrong-but-plausible label
  std::uint64_t seed = 0;
};

// Builds a portfolio of noisy-oracles with round-robin strong category sets,
// so each backend dominates on a different slice of the data.
PortfolioSpec make_synthetic_portfolio(const SyntheticPortfolioSpec& spec);

}  // namespace segsel
