#include "segsel/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "segsel/error.hpp"

namespace segsel {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kTermFloor = 1e-12;  // keeps log-space scoring finite

double shape_similarity(const VectorD& a, const VectorD& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1e-6;
  const double cosine = a.dot(b) / (na * nb);
  // Rescaled to (0,1] so it composes with probabilities inside the mean.
  return std::max(1e-6, (1.0 + cosine) / 2.0);
}

struct TermAccumulator {
  double log_sum = 0.0;
  long n = 0;

  void add(double term) {
    log_sum += std::log(std::max(term, kTermFloor));
    ++n;
  }
  double value(bool geometric) const {
    if (n == 0) return 1.0;
    const double e = geometric ? log_sum / static_cast<double>(n) : log_sum;
    return std::min(1.0, std::exp(e));
  }
};

}  // namespace

PositionRel inverse(PositionRel r) {
  switch (r) {
    case PositionRel::left: return PositionRel::right;
    case PositionRel::right: return PositionRel::left;
    case PositionRel::above: return PositionRel::below;
    case PositionRel::below: return PositionRel::above;
  }
  return PositionRel::left;
}

SizeRel inverse(SizeRel r) {
  switch (r) {
    case SizeRel::larger: return SizeRel::smaller;
    case SizeRel::smaller: return SizeRel::larger;
    case SizeRel::same: return SizeRel::same;
  }
  return SizeRel::same;
}

DepthRel inverse(DepthRel r) {
  return r == DepthRel::back ? DepthRel::in_front : DepthRel::back;
}

const char* to_string(PositionRel r) {
  switch (r) {
    case PositionRel::left: return "left";
    case PositionRel::right: return "right";
    case PositionRel::above: return "above";
    case PositionRel::below: return "below";
  }
  return "?";
}

const char* to_string(SizeRel r) {
  switch (r) {
    case SizeRel::larger: return "larger";
    case SizeRel::smaller: return "smaller";
    case SizeRel::same: return "same";
  }
  return "?";
}

const char* to_string(DepthRel r) { return r == DepthRel::back ? "back" : "in_front"; }

const GraphNode& RelationalGraph::node(int region_id) const {
  for (const auto& n : nodes)
    if (n.region_id == region_id) return n;
  throw ConfigError("graph has no region " + std::to_string(region_id));
}

VectorD shape_descriptor(const MaskPlane& mask, int bins) {
  if (bins < 2) throw ConfigError("shape_descriptor: need >= 2 bins");
  const Index h = mask.rows(), w = mask.cols();

  std::vector<std::pair<Index, Index>> boundary;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 || !mask(y - 1, x) ||
                        !mask(y + 1, x) || !mask(y, x - 1) || !mask(y, x + 1);
      if (edge) boundary.emplace_back(y, x);
    }
  if (boundary.empty()) throw ConfigError("shape_descriptor: empty mask");

  double cx = 0.0, cy = 0.0;
  for (const auto& [y, x] : boundary) {
    cx += static_cast<double>(x);
    cy += static_cast<double>(y);
  }
  cx /= static_cast<double>(boundary.size());
  cy /= static_cast<double>(boundary.size());

  double rho_max = 1.0;
  for (const auto& [y, x] : boundary)
    rho_max = std::max(rho_max, std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy));

  const double rho_bin = 1.0;
  const int n_rho = static_cast<int>(std::ceil(2.0 * rho_max / rho_bin)) + 1;
  MatrixD accumulator = MatrixD::Zero(bins, n_rho);
  for (const auto& [y, x] : boundary) {
    const double px = static_cast<double>(x) - cx;
    const double py = static_cast<double>(y) - cy;
    for (int t = 0; t < bins; ++t) {
      const double theta = std::numbers::pi * t / bins;
      const double rho = px * std::cos(theta) + py * std::sin(theta);
      int rb = static_cast<int>(std::floor((rho + rho_max) / rho_bin));
      rb = rb < 0 ? 0 : (rb >= n_rho ? n_rho - 1 : rb);
      accumulator(t, rb) += 1.0;
    }
  }

  VectorD descriptor(bins);
  for (int t = 0; t < bins; ++t) descriptor[t] = accumulator.row(t).maxCoeff();
  const double total = descriptor.sum();
  if (total > 0.0) descriptor /= total;
  return descriptor;
}

RelationalGraph build_graph(const LabelMap& map, const GraphOptions& options) {
  const auto regions = extract_regions(map, options.min_region_px);
  if (regions.empty()) throw ConfigError("build_graph: no non-background region");

  RelationalGraph graph;
  graph.image_width = map.width();
  graph.image_height = map.height();
  graph.nodes.reserve(regions.size());
  for (const auto& r : regions) {
    GraphNode n;
    n.region_id = r.id;
    n.category = r.category;
    n.attributes = extract_region_attributes(r.mask, r.bbox_x, r.bbox_y);
    n.shape = shape_descriptor(r.mask, options.shape_bins);
    n.border_contact = r.border_contact;
    n.area = r.area;
    n.mask = r.mask;
    n.bbox_x = r.bbox_x;
    n.bbox_y = r.bbox_y;
    graph.nodes.push_back(std::move(n));
  }

  for (std::size_t a = 0; a < graph.nodes.size(); ++a)
    for (std::size_t b = a + 1; b < graph.nodes.size(); ++b) {
      const GraphNode& ni = graph.nodes[a];
      const GraphNode& nj = graph.nodes[b];
      GraphEdge e;
      e.i = ni.region_id;
      e.j = nj.region_id;

      const double dx = nj.attributes.centroid_x - ni.attributes.centroid_x;
      const double dy = nj.attributes.centroid_y - ni.attributes.centroid_y;
      if (std::abs(dx) >= std::abs(dy))
        e.position = dx >= 0.0 ? PositionRel::left : PositionRel::right;
      else
        e.position = dy >= 0.0 ? PositionRel::above : PositionRel::below;

      // Symmetric band: compare the larger-to-smaller ratio so that
      // "i same j" always implies "j same i".
      const double hi = static_cast<double>(std::max(ni.area, nj.area));
      const double lo = static_cast<double>(std::min(ni.area, nj.area));
      if (hi / lo <= 1.0 + options.size_epsilon)
        e.size = SizeRel::same;
      else
        e.size = ni.area > nj.area ? SizeRel::larger : SizeRel::smaller;

      if (ni.border_contact != nj.border_contact)
        e.depth = ni.border_contact > nj.border_contact ? DepthRel::back : DepthRel::in_front;
      else if (ni.area != nj.area)
        e.depth = ni.area > nj.area ? DepthRel::back : DepthRel::in_front;
      else
        e.depth = DepthRel::back;  // identical twins: lower id recedes
      graph.edges.push_back(e);
    }
  return graph;
}

CooccurrenceModel::CooccurrenceModel(std::size_t n_categories, int shape_bins, double alpha)
    : n_categories_(n_categories), shape_bins_(shape_bins), alpha_(alpha) {
  if (n_categories < 2) throw ConfigError("cooccurrence model needs >= 2 categories");
  if (alpha < 0.0) throw ConfigError("negative smoothing constant");
  pos_.assign(n_categories * n_categories * 4, 0.0);
  size_.assign(n_categories * n_categories * 3, 0.0);
  depth_.assign(n_categories * n_categories * 2, 0.0);
  shape_sum_.assign(n_categories, VectorD::Zero(shape_bins));
  shape_n_.assign(n_categories, 0);
}

std::size_t CooccurrenceModel::index(std::uint8_t ci, std::uint8_t cj, int rel, int arity) const {
  return (static_cast<std::size_t>(ci) * n_categories_ + cj) * static_cast<std::size_t>(arity) +
         static_cast<std::size_t>(rel);
}

void CooccurrenceModel::add_observation(std::uint8_t ci, std::uint8_t cj, PositionRel pos,
                                        SizeRel size, DepthRel depth) {
  if (finalized_) throw ConfigError("cooccurrence model already finalized");
  // Count both directions so lookups are orientation independent.
  pos_[index(ci, cj, static_cast<int>(pos), 4)] += 1.0;
  pos_[index(cj, ci, static_cast<int>(inverse(pos)), 4)] += 1.0;
  size_[index(ci, cj, static_cast<int>(size), 3)] += 1.0;
  size_[index(cj, ci, static_cast<int>(inverse(size)), 3)] += 1.0;
  depth_[index(ci, cj, static_cast<int>(depth), 2)] += 1.0;
  depth_[index(cj, ci, static_cast<int>(inverse(depth)), 2)] += 1.0;
}

void CooccurrenceModel::add_shape(std::uint8_t category, const VectorD& descriptor) {
  if (finalized_) throw ConfigError("cooccurrence model already finalized");
  shape_sum_[category] += descriptor;
  ++shape_n_[category];
}

void CooccurrenceModel::finalize() {
  if (finalized_) return;
  auto normalize = [this](std::vector<double>& table, int arity) {
    for (std::size_t ci = 0; ci < n_categories_; ++ci)
      for (std::size_t cj = 0; cj < n_categories_; ++cj) {
        double total = 0.0;
        for (int r = 0; r < arity; ++r)
          total += table[index(static_cast<std::uint8_t>(ci), static_cast<std::uint8_t>(cj), r, arity)];
        const double denom = total + alpha_ * arity;
        for (int r = 0; r < arity; ++r) {
          auto& cell = table[index(static_cast<std::uint8_t>(ci), static_cast<std::uint8_t>(cj), r, arity)];
          cell = denom > 0.0 ? (cell + alpha_) / denom : 1.0 / arity;
        }
      }
  };
  normalize(pos_, 4);
  normalize(size_, 3);
  normalize(depth_, 2);

  shape_mean_.assign(n_categories_, VectorD::Constant(shape_bins_, 1.0 / shape_bins_));
  for (std::size_t c = 0; c < n_categories_; ++c)
    if (shape_n_[c] > 0) shape_mean_[c] = shape_sum_[c] / static_cast<double>(shape_n_[c]);
  finalized_ = true;
}

double CooccurrenceModel::p_position(std::uint8_t ci, std::uint8_t cj, PositionRel r) const {
  return pos_[index(ci, cj, static_cast<int>(r), 4)];
}

double CooccurrenceModel::p_size(std::uint8_t ci, std::uint8_t cj, SizeRel r) const {
  return size_[index(ci, cj, static_cast<int>(r), 3)];
}

double CooccurrenceModel::p_depth(std::uint8_t ci, std::uint8_t cj, DepthRel r) const {
  return depth_[index(ci, cj, static_cast<int>(r), 2)];
}

const VectorD& CooccurrenceModel::shape_mean(std::uint8_t category) const {
  return shape_mean_.at(category);
}

CooccurrenceModel learn_cooccurrence(const std::vector<LabelMap>& gt_maps, double alpha,
                                     const GraphOptions& options) {
  if (gt_maps.empty()) throw ConfigError("learn_cooccurrence: no training maps");
  const std::size_t n_categories = gt_maps.front().vocab->size();
  CooccurrenceModel model(n_categories, options.shape_bins, alpha);

  bool saw_pair = false;
  for (const auto& map : gt_maps) {
    RelationalGraph graph;
    try {
      graph = build_graph(map, options);
    } catch (const ConfigError&) {
      continue;  // background-only maps contribute nothing
    }
    for (const auto& n : graph.nodes) model.add_shape(n.category, n.shape);
    for (const auto& e : graph.edges) {
      saw_pair = true;
      model.add_observation(graph.node(e.i).category, graph.node(e.j).category, e.position, e.size,
                            e.depth);
    }
  }
  if (!saw_pair) throw ConfigError("learn_cooccurrence: no map with two or more regions");
  model.finalize();
  return model;
}

ConsistencyScores consistency_scores(const RelationalGraph& graph, const CooccurrenceModel& model,
                                     const ScoreOptions& options) {
  if (graph.nodes.size() < 2)
    throw ConfigError("consistency_scores: needs two or more regions");

  std::vector<TermAccumulator> per_region(graph.nodes.size());
  TermAccumulator global;
  std::vector<std::size_t> node_pos(graph.nodes.size());
  std::vector<int> ids;
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) ids.push_back(graph.nodes[k].region_id);
  auto slot = [&](int region_id) {
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), region_id) - ids.begin());
  };

  for (const auto& e : graph.edges) {
    const std::uint8_t ci = graph.node(e.i).category;
    const std::uint8_t cj = graph.node(e.j).category;
    const double terms[3] = {model.p_position(ci, cj, e.position), model.p_size(ci, cj, e.size),
                             model.p_depth(ci, cj, e.depth)};
    for (double t : terms) {
      per_region[slot(e.i)].add(t);
      per_region[slot(e.j)].add(t);
      global.add(t);
    }
  }
  if (options.include_shape) {
    for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
      const double t = shape_similarity(graph.nodes[k].shape, model.shape_mean(graph.nodes[k].category));
      per_region[k].add(t);
      global.add(t);
    }
  }

  ConsistencyScores scores;
  scores.region.resize(graph.nodes.size());
  for (std::size_t k = 0; k < graph.nodes.size(); ++k)
    scores.region[k] = per_region[k].value(options.geometric_mean);
  scores.global = global.value(options.geometric_mean);
  return scores;
}

std::optional<int> detect_contradiction(const ConsistencyScores& scores,
                                        const RelationalGraph& graph, double threshold,
                                        const std::set<int>& tried) {
  std::optional<int> worst;
  double worst_score = threshold;
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
    const int id = graph.nodes[k].region_id;
    if (tried.count(id)) continue;
    if (scores.region[k] < worst_score ||
        (worst && scores.region[k] == worst_score && id < *worst)) {
      worst = id;
      worst_score = scores.region[k];
    }
  }
  return worst;
}

Hypothesis generate_hypothesis(const RelationalGraph& graph, const CooccurrenceModel& model,
                               int region_id, std::uint8_t background_id,
                               const ScoreOptions& options) {
  if (graph.nodes.size() < 2) throw ConfigError("generate_hypothesis: needs two or more regions");
  const GraphNode& target = graph.node(region_id);

  Hypothesis best;
  best.region_id = region_id;
  bool found = false;
  for (std::size_t c = 0; c < model.n_categories(); ++c) {
    const auto candidate = static_cast<std::uint8_t>(c);
    if (candidate == target.category || candidate == background_id) continue;

    TermAccumulator acc;
    for (const auto& e : graph.edges) {
      if (e.i != region_id && e.j != region_id) continue;
      // Keep the stored geometry, swap only the target's category.
      if (e.i == region_id) {
        const std::uint8_t cj = graph.node(e.j).category;
        acc.add(model.p_position(candidate, cj, e.position));
        acc.add(model.p_size(candidate, cj, e.size));
        acc.add(model.p_depth(candidate, cj, e.depth));
      } else {
        const std::uint8_t ci = graph.node(e.i).category;
        acc.add(model.p_position(ci, candidate, e.position));
        acc.add(model.p_size(ci, candidate, e.size));
        acc.add(model.p_depth(ci, candidate, e.depth));
      }
    }
    if (options.include_shape) acc.add(shape_similarity(target.shape, model.shape_mean(candidate)));

    const double score = acc.value(options.geometric_mean);
    if (!found || score > best.score) {  // ties keep the lower category index
      best.category = candidate;
      best.score = score;
      found = true;
    }
  }
  if (!found) throw ConfigError("generate_hypothesis: no candidate category");
  return best;
}

void save_cooccurrence(const std::string& path, const CooccurrenceModel& model,
                       const std::vector<std::string>& category_names) {
  ordered_json j;
  j["format"] = "segsel-cooccurrence";
  j["version"] = 1;
  j["categories"] = category_names;
  j["alpha"] = model.alpha();
  j["shape_bins"] = model.shape_bins();
  j["position"] = model.position_table();
  j["size"] = model.size_table();
  j["depth"] = model.depth_table();
  std::vector<std::vector<double>> shapes;
  for (std::size_t c = 0; c < model.n_categories(); ++c) {
    const VectorD& m = model.shape_mean(static_cast<std::uint8_t>(c));
    shapes.emplace_back(m.data(), m.data() + m.size());
  }
  j["shape_means"] = shapes;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

CooccurrenceModel cooccurrence_from_tables(std::size_t n_categories, int shape_bins, double alpha,
                                           std::vector<double> pos, std::vector<double> size,
                                           std::vector<double> depth,
                                           std::vector<VectorD> shape_means) {
  CooccurrenceModel model(n_categories, shape_bins, alpha);
  if (pos.size() != model.pos_.size() || size.size() != model.size_.size() ||
      depth.size() != model.depth_.size() || shape_means.size() != n_categories)
    throw ParseError("cooccurrence tables have inconsistent dimensions");
  model.pos_ = std::move(pos);
  model.size_ = std::move(size);
  model.depth_ = std::move(depth);
  model.shape_mean_ = std::move(shape_means);
  model.finalized_ = true;
  return model;
}

CooccurrenceModel load_cooccurrence(const std::string& path,
                                    std::vector<std::string>* category_names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("format", "") != "segsel-cooccurrence")
    throw ParseError(path + ": not a cooccurrence model file");

  const auto names = j.at("categories").get<std::vector<std::string>>();
  if (category_names) *category_names = names;
  std::vector<VectorD> shapes;
  for (const auto& s : j.at("shape_means")) {
    const auto v = s.get<std::vector<double>>();
    shapes.push_back(Eigen::Map<const VectorD>(v.data(), static_cast<Index>(v.size())));
  }
  return cooccurrence_from_tables(names.size(), j.at("shape_bins").get<int>(),
                                  j.at("alpha").get<double>(),
                                  j.at("position").get<std::vector<double>>(),
                                  j.at("size").get<std::vector<double>>(),
                                  j.at("depth").get<std::vector<double>>(), std::move(shapes));
}

}  // namespace segsel
