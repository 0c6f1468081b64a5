#pragma once

#include <optional>
#include <string>
#include <vector>

#include "segsel/bayes_net.hpp"
#include "segsel/dataset.hpp"
#include "segsel/features.hpp"
#include "segsel/reasoning.hpp"
#include "segsel/segmenters.hpp"
#include "segsel/types.hpp"

namespace segsel {

struct TrainingSample {
  FeatureVector features;
  std::optional<VectorD> attributes;  // RegionAttributes::kDim entries
  AlgorithmId label;
  double gap = 0.0;  // f-value margin between the best and second-best backend
  std::string source_id;  // image id, or image:region for box samples
};

struct TrainingSetOptions {
  double theta = 0.5;  // minimum gap for a sample to be kept
  long min_region_px = 25;
  // Training also needs one backend that sees two or more objects, otherwise
  // the verification cycle can never start on that image.
  bool require_multi_detection = true;
  FeatureConfig features;
  GraphOptions graph;
};

struct TrainingSets {
  std::vector<TrainingSample> t_f;  // whole-image features only
  std::vector<TrainingSample> t_a;  // bounding-box features plus attributes
  std::vector<std::string> skipped;  // image ids dropped with the reason
};

// Runs every backend over the training images and labels each sample with the
// backend that maximizes the (image or region) f-value. Samples with a gap
// below theta, and exact ties, are dropped.
TrainingSets build_training_sets(const DatasetManifest& manifest, const PortfolioSpec& portfolio,
                                 const TrainingSetOptions& options, const BackendRuntime& runtime);

struct SelectorConfig {
  std::string variant = "margin";  // "margin" | "bn"
  // margin
  int n_pca = 3;
  double regularization = 1e-3;
  int margin_iterations = 800;
  bool two_model_mode = false;  // ablation: separate with/without-attribute models
  // bn
  int bn_bins = 3;
  int bn_feature_nodes = 6;
  int bn_attribute_nodes = 6;
  int bn_hidden_card = 0;      // 0 -> number of algorithms
  int max_feature_nodes = 10;  // hard cap on observed feature variables
  double em_tolerance = 1e-6;
  int em_max_iterations = 200;

  std::uint64_t seed = 1;
};

class SelectorModel {
 public:
  std::string variant;  // "margin" | "bn"
  std::vector<AlgorithmId> algorithms;
  std::string feature_schema;
  // The bank configuration behind feature_schema, when known; lets a run
  // reproduce exactly the features the model was trained on.
  std::optional<FeatureConfig> features;
  CategoryAttributeMeans attribute_means;  // per-category table + patch source

  // margin variant
  PcaModel pca;
  VectorD attr_patch;              // imputed attribute vector
  VectorD input_mean, input_scale; // standardization of [pca | attributes]
  MatrixD weights;                 // n_algorithms x input dim
  VectorD bias;
  bool two_model = false;
  MatrixD weights_no_attr;  // second model of the ablation mode
  VectorD bias_no_attr;
  PcaModel pca_no_attr;
  VectorD input_mean_no_attr, input_scale_no_attr;

  // bn variant
  DiscreteBayesNet net;
  std::vector<int> feature_dims;  // feature vector positions used as nodes
  std::vector<int> attribute_dims;
  VectorD feature_min, feature_max;  // per selected dim
  VectorD attribute_min, attribute_max;
  int bins = 0;
  int app_node = -1, algorithm_node = -1;
  std::vector<int> feature_nodes, attribute_nodes, hidden_nodes;
  bool em_converged = true;
  int em_iterations = 0;
};

struct SelectionResult {
  AlgorithmId algorithm;
  VectorD scores;  // per algorithm, portfolio order
};

// Max-margin variant: one-vs-rest linear scorers over standardized
// [PCA(features) | attributes], missing attributes patched with the training
// mean. Needs two or more distinct labels.
SelectorModel train_margin(const std::vector<TrainingSample>& samples,
                           const std::vector<AlgorithmId>& algorithms,
                           const SelectorConfig& config);

// Discrete-BN variant over T_a: top-MI feature and attribute dimensions are
// discretized into observed input nodes, grouped behind hidden nodes that
// feed the algorithm node. Parameters are fit with EM; missing observations
// (queries without attributes) are marginalized at selection time.
SelectorModel train_bn(const std::vector<TrainingSample>& samples,
                       const std::vector<AlgorithmId>& algorithms, const SelectorConfig& config);

// Scores every algorithm and returns the argmax; ties break by portfolio
// order. Throws SchemaError-style ConfigError when the feature schema does
// not match the model.
SelectionResult select(const SelectorModel& model, const FeatureVector& features,
                       const std::optional<VectorD>& attributes);

void save_selector(const std::string& path, const SelectorModel& model);
SelectorModel load_selector(const std::string& path);

}  // namespace segsel
