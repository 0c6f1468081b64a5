#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "segsel/image.hpp"
#include "segsel/region_props.hpp"
#include "segsel/types.hpp"

namespace segsel {

// Layout of the global image feature vector. Every histogram is normalized to
// sum 1; blocks are concatenated in the declaration order below.
struct FeatureConfig {
  int hist_bins = 64;          // brightness + per-channel rgb
  int fft_bins = 32;           // radial log-magnitude spectrum
  int gabor_orientations = 4;
  int gabor_scales = 3;
  double gabor_lambda0 = 2.0;  // wavelength of scale s is lambda0 * 2^s
  int gabor_bins = 16;
  int wavelet_bins = 16;       // single-level Haar, 4 subbands
  int acutance_bins = 16;      // Sobel gradient magnitude

  Index dim() const;
  std::string schema_id() const;
  void validate() const;
};

nlohmann::ordered_json feature_config_to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const nlohmann::ordered_json& j);
void save_feature_config(const std::string& path, const FeatureConfig& config);
FeatureConfig load_feature_config(const std::string& path);

struct FeatureVector {
  VectorD values;
  std::string schema_id;
};

FeatureVector extract_image_features(const ImageRgb& image, const FeatureConfig& config);

// Equal-width bin index in 1..k: x <= min_f maps to bin 1, x > max_f clamps
// to k, interval i covers ](max_f-min_f)/k*(i-1), (max_f-min_f)/k*i] above
// min_f (right-closed).
int discretize(double x, int k, double min_f, double max_f);

// Per-category arithmetic means of region attribute vectors.
struct CategoryAttributeMeans {
  std::vector<long> counts;                       // one per category
  std::vector<RegionAttributes::Array> means;     // defined where count > 0

  std::size_t n_categories() const { return counts.size(); }
  bool has(std::size_t category) const { return counts[category] > 0; }
  VectorD mean_vector(std::size_t category) const;

  // Mean over all samples regardless of category; the patch vector for
  // queries that carry no attributes.
  VectorD overall_mean() const;
};

CategoryAttributeMeans category_attribute_means(
    const std::vector<std::pair<std::uint8_t, RegionAttributes>>& samples,
    std::size_t n_categories);

struct PcaModel {
  VectorD mean;
  MatrixD components;          // n_components x dim, orthonormal rows
  VectorD explained_variance;  // descending

  Index n_components() const { return components.rows(); }
  Index input_dim() const { return components.cols(); }
};

// Principal axes of the sample covariance (rows of `samples` are points).
// Throws ConfigError on fewer than 2 samples or an all-identical cloud.
PcaModel fit_pca(const MatrixD& samples, Index n_components);

VectorD pca_project(const PcaModel& model, const VectorD& v);

nlohmann::ordered_json pca_to_json(const PcaModel& model);
PcaModel pca_from_json(const nlohmann::ordered_json& j);
void save_pca(const std::string& path, const PcaModel& model);
PcaModel load_pca(const std::string& path);

}  // namespace segsel
