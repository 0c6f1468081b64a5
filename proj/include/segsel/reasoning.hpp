#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "segsel/dataset.hpp"
#include "segsel/region_props.hpp"
#include "segsel/types.hpp"

namespace segsel {

// Pairwise relations, always stated for the edge's first region relative to
// the second.
enum class PositionRel : int { left = 0, right = 1, above = 2, below = 3 };
enum class SizeRel : int { larger = 0, smaller = 1, same = 2 };
enum class DepthRel : int { in_front = 0, back = 1 };

PositionRel inverse(PositionRel r);
SizeRel inverse(SizeRel r);
DepthRel inverse(DepthRel r);

const char* to_string(PositionRel r);
const char* to_string(SizeRel r);
const char* to_string(DepthRel r);

struct GraphNode {
  int region_id = 0;
  std::uint8_t category = 0;
  RegionAttributes attributes;
  VectorD shape;          // normalized orientation histogram
  long border_contact = 0;
  long area = 0;
  MaskPlane mask;         // bbox crop, for merge geometry
  Index bbox_x = 0, bbox_y = 0;
};

struct GraphEdge {
  int i = 0, j = 0;  // node region ids, i < j
  PositionRel position;
  SizeRel size;
  DepthRel depth;
};

// The high-level description: complete graph over detected regions.
struct RelationalGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  Index image_width = 0, image_height = 0;

  const GraphNode& node(int region_id) const;
};

struct GraphOptions {
  int shape_bins = 8;
  double size_epsilon = 0.2;  // half-width of the "same" area-ratio band
  long min_region_px = 25;
};

// Builds the relational graph of a label map. Position follows the dominant
// centroid displacement axis; size compares areas with a symmetric "same"
// band; the region with more image-border contact is "back" (area breaks
// ties). Throws ConfigError when the map has no usable region.
RelationalGraph build_graph(const LabelMap& map, const GraphOptions& options = {});

// Orientation histogram from a Hough line accumulator over the mask boundary:
// theta is quantized into `bins` over [0, pi), rho is marginalized by taking
// each orientation's strongest line.
VectorD shape_descriptor(const MaskPlane& mask, int bins = 8);

// Learned relation statistics, conditioned on the ordered category pair.
class CooccurrenceModel {
 public:
  CooccurrenceModel() = default;
  CooccurrenceModel(std::size_t n_categories, int shape_bins, double alpha);

  std::size_t n_categories() const { return n_categories_; }
  int shape_bins() const { return shape_bins_; }
  double alpha() const { return alpha_; }

  double p_position(std::uint8_t ci, std::uint8_t cj, PositionRel r) const;
  double p_size(std::uint8_t ci, std::uint8_t cj, SizeRel r) const;
  double p_depth(std::uint8_t ci, std::uint8_t cj, DepthRel r) const;
  const VectorD& shape_mean(std::uint8_t category) const;

  void add_observation(std::uint8_t ci, std::uint8_t cj, PositionRel pos, SizeRel size,
                       DepthRel depth);
  void add_shape(std::uint8_t category, const VectorD& descriptor);
  // Laplace-smooths the raw counts into distributions. Families with no
  // observations fall back to uniform when alpha is 0.
  void finalize();

  // Raw distribution access for serialization and hygiene checks.
  const std::vector<double>& position_table() const { return pos_; }
  const std::vector<double>& size_table() const { return size_; }
  const std::vector<double>& depth_table() const { return depth_; }

  friend CooccurrenceModel cooccurrence_from_tables(std::size_t, int, double,
                                                    std::vector<double>, std::vector<double>,
                                                    std::vector<double>, std::vector<VectorD>);

 private:
  std::size_t index(std::uint8_t ci, std::uint8_t cj, int rel, int arity) const;

  std::size_t n_categories_ = 0;
  int shape_bins_ = 0;
  double alpha_ = 0.0;
  bool finalized_ = false;
  std::vector<double> pos_, size_, depth_;  // counts, then probabilities
  std::vector<VectorD> shape_sum_;
  std::vector<long> shape_n_;
  std::vector<VectorD> shape_mean_;
};

CooccurrenceModel learn_cooccurrence(const std::vector<LabelMap>& gt_maps, double alpha,
                                     const GraphOptions& options = {});

void save_cooccurrence(const std::string& path, const CooccurrenceModel& model,
                       const std::vector<std::string>& category_names);
CooccurrenceModel load_cooccurrence(const std::string& path,
                                    std::vector<std::string>* category_names = nullptr);

struct ScoreOptions {
  bool include_shape = true;    // fold per-node shape terms into the scores
  bool geometric_mean = true;   // false: raw product
};

struct ConsistencyScores {
  std::vector<double> region;  // aligned with graph.nodes
  double global = 1.0;
};

// Every edge contributes its three relation probabilities; every node its
// shape similarity. Scores are geometric means (or raw products) in (0, 1].
// Requires at least two nodes.
ConsistencyScores consistency_scores(const RelationalGraph& graph, const CooccurrenceModel& model,
                                     const ScoreOptions& options = {});

// Lowest-scoring region below the threshold that has not been tried yet.
std::optional<int> detect_contradiction(const ConsistencyScores& scores,
                                        const RelationalGraph& graph, double threshold,
                                        const std::set<int>& tried);

struct Hypothesis {
  int region_id = 0;
  std::uint8_t category = 0;  // proposed replacement, never the current one
  double score = 0.0;
};

// Best replacement category for one region, all other regions held fixed:
// argmax over categories of the region's consistency score under the swap.
// Background and the current category are not candidates.
Hypothesis generate_hypothesis(const RelationalGraph& graph, const CooccurrenceModel& model,
                               int region_id, std::uint8_t background_id,
                               const ScoreOptions& options = {});

}  // namespace segsel
