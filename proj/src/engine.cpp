#include "segsel/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "segsel/error.hpp"
#include "segsel/eval.hpp"

namespace segsel {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
  return buf;
}

// (category, bbox quantized to 8 px) keys the tried-algorithm bookkeeping, so
// a re-segmented region still maps onto its predecessor.
std::string region_signature(const GraphNode& node) {
  const auto& a = node.attributes;
  const long qx = static_cast<long>(a.bbox_x) / 8, qy = static_cast<long>(a.bbox_y) / 8;
  const long qw = static_cast<long>(a.bbox_w) / 8, qh = static_cast<long>(a.bbox_h) / 8;
  return std::to_string(node.category) + ":" + std::to_string(qx) + "," + std::to_string(qy) +
         "," + std::to_string(qw) + "," + std::to_string(qh);
}

ImageRgb crop_image(const ImageRgb& img, Index x, Index y, Index w, Index h) {
  ImageRgb out;
  out.r = img.r.block(y, x, h, w);
  out.g = img.g.block(y, x, h, w);
  out.b = img.b.block(y, x, h, w);
  return out;
}

ordered_json scores_json(const VectorD& scores, const std::vector<AlgorithmId>& ids) {
  ordered_json j = ordered_json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) j[ids[i]] = scores[static_cast<Index>(i)];
  return j;
}

}  // namespace

void Trace::add(ordered_json event, bool with_timestamp) {
  if (with_timestamp) {
    ordered_json stamped;
    stamped["ts"] = iso_timestamp();
    for (auto& [k, v] : event.items()) stamped[k] = v;
    events.push_back(std::move(stamped));
    return;
  }
  events.push_back(std::move(event));
}

std::string Trace::to_jsonl() const {
  std::string out;
  for (const auto& e : events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

void save_trace(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << trace.to_jsonl();
}

LabelMap merge_region(const LabelMap& current, const LabelMap& replacement,
                      const MaskPlane& region_mask, Index mask_x, Index mask_y, int dilation_px) {
  if (current.height() != replacement.height() || current.width() != replacement.width())
    throw ConfigError("merge_region: dimension mismatch");
  if (current.vocab->names != replacement.vocab->names)
    throw ConfigError("merge_region: vocabulary mismatch");

  LabelMap merged = current;
  const Index h = current.height(), w = current.width();
  const int r = std::max(0, dilation_px);
  const int r2 = r * r;
  for (Index my = 0; my < region_mask.rows(); ++my)
    for (Index mx = 0; mx < region_mask.cols(); ++mx) {
      if (!region_mask(my, mx)) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (dy * dy + dx * dx > r2) continue;
          const Index y = mask_y + my + dy, x = mask_x + mx + dx;
          if (y < 0 || y >= h || x < 0 || x >= w) continue;
          merged.labels(y, x) = replacement.labels(y, x);
        }
    }
  return merged;
}

IaResult run_ia(const SegmenterInput& input, const SelectorModel& selector,
                const CooccurrenceModel& cooccurrence, const PortfolioSpec& portfolio,
                VocabPtr vocab, const EngineConfig& config, const BackendRuntime& runtime,
                bool timestamps) {
  // A one-backend portfolio degenerates to plain segmentation: the first
  // contradiction finds no untried alternative and the loop stops.
  if (portfolio.size() == 0) throw ConfigError("run_ia: empty portfolio");
  const auto ids = portfolio.ids();
  const int max_iterations =
      config.max_iterations > 0 ? config.max_iterations : static_cast<int>(portfolio.size());
  const ScoreOptions score_options{config.include_shape_terms, config.geometric_mean};

  // Shape descriptors must share the model's bin count or the similarity
  // terms are meaningless.
  EngineConfig effective = config;
  effective.graph.shape_bins = cooccurrence.shape_bins();

  IaResult result;
  auto trace = [&](ordered_json j) { result.trace.add(std::move(j), timestamps); };

  // Initial selection on whole-image features, attributes unavailable.
  const FeatureVector image_features = extract_image_features(input.image, config.features);
  const SelectionResult first = select(selector, image_features, std::nullopt);
  trace({{"kind", "selection"},
         {"stage", "initial"},
         {"scores", scores_json(first.scores, ids)},
         {"algorithm", first.algorithm}});

  // Run the selected backend; on failure fall through the ranking.
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return first.scores[static_cast<Index>(a)] > first.scores[static_cast<Index>(b)];
  });

  LabelMap current;
  bool have_map = false;
  for (std::size_t oi : order) {
    try {
      current = run_segmenter(portfolio, ids[oi], input, vocab, runtime);
      result.initial_algorithm = ids[oi];
      have_map = true;
      break;
    } catch (const BackendError& e) {
      trace({{"kind", "backend_failure"}, {"algorithm", ids[oi]}, {"error", e.what()}});
    }
  }
  if (!have_map) throw BackendError(BackendError::Kind::launch_failure,
                                    "every backend failed on " + input.image_id);
  trace({{"kind", "segmentation"}, {"algorithm", result.initial_algorithm}});

  // Track which backend owns each pixel, so a contradicted region knows whose
  // output it came from.
  PlaneU8 producer = PlaneU8::Constant(current.height(), current.width(),
                                       static_cast<std::uint8_t>(portfolio.index_of(result.initial_algorithm)));

  std::map<std::string, std::set<int>> tried;  // region signature -> backend indices

  int iteration = 0;
  while (true) {
    RelationalGraph graph;
    try {
      graph = build_graph(current, effective.graph);
    } catch (const ConfigError&) {
      result.stop_reason = "no_regions";
      break;
    }
    if (graph.nodes.size() < 2) {
      // Relational verification needs at least two regions.
      result.stop_reason = "single_region";
      break;
    }

    const ConsistencyScores scores = consistency_scores(graph, cooccurrence, score_options);
    {
      ordered_json region_scores = ordered_json::array();
      for (std::size_t k = 0; k < graph.nodes.size(); ++k)
        region_scores.push_back({{"region", graph.nodes[k].region_id},
                                 {"category", vocab->name(graph.nodes[k].category)},
                                 {"score", scores.region[k]}});
      trace({{"kind", "verification"},
             {"iteration", iteration},
             {"global", scores.global},
             {"regions", region_scores}});
    }

    // Regions whose signature has exhausted the portfolio are out of play.
    std::set<int> exhausted;
    for (const auto& node : graph.nodes) {
      const auto it = tried.find(region_signature(node));
      if (it != tried.end() && it->second.size() >= portfolio.size())
        exhausted.insert(node.region_id);
    }

    const auto contradiction =
        detect_contradiction(scores, graph, config.contradiction_threshold, exhausted);
    if (!contradiction) {
      result.stop_reason = "no_contradiction";
      break;
    }
    if (iteration >= max_iterations) {
      result.stop_reason = "max_iterations";
      break;
    }

    const GraphNode& region = graph.node(*contradiction);
    const std::string signature = region_signature(region);
    const std::size_t slot = static_cast<std::size_t>(
        std::find_if(graph.nodes.begin(), graph.nodes.end(),
                     [&](const GraphNode& n) { return n.region_id == *contradiction; }) -
        graph.nodes.begin());
    trace({{"kind", "contradiction"},
           {"iteration", iteration},
           {"region", *contradiction},
           {"category", vocab->name(region.category)},
           {"score", scores.region[slot]}});

    // The backend that wrote this region has had its chance.
    {
      std::map<int, long> votes;
      for (Index my = 0; my < region.mask.rows(); ++my)
        for (Index mx = 0; mx < region.mask.cols(); ++mx)
          if (region.mask(my, mx)) ++votes[producer(region.bbox_y + my, region.bbox_x + mx)];
      int owner = 0;
      long best = -1;
      for (const auto& [idx, n] : votes)
        if (n > best) {
          best = n;
          owner = idx;
        }
      tried[signature].insert(owner);
    }

    const Hypothesis hypothesis =
        generate_hypothesis(graph, cooccurrence, *contradiction, vocab->background_id, score_options);
    trace({{"kind", "hypothesis"},
           {"region", *contradiction},
           {"category", vocab->name(hypothesis.category)},
           {"score", hypothesis.score}});

    // Re-select with features from the contradiction region and the
    // hypothesized category's attribute profile. The crop keeps a minimum
    // extent so every filter bank stays applicable.
    const auto& a = region.attributes;
    Index bx = static_cast<Index>(a.bbox_x), by = static_cast<Index>(a.bbox_y);
    Index bw = static_cast<Index>(a.bbox_w), bh = static_cast<Index>(a.bbox_h);
    const Index min_side = std::min<Index>({Index{8}, current.width(), current.height()});
    if (bw < min_side) {
      bx = std::max<Index>(0, std::min(bx - (min_side - bw) / 2, current.width() - min_side));
      bw = min_side;
    }
    if (bh < min_side) {
      by = std::max<Index>(0, std::min(by - (min_side - bh) / 2, current.height() - min_side));
      bh = min_side;
    }
    const FeatureVector box_features =
        extract_image_features(crop_image(input.image, bx, by, bw, bh), config.features);
    std::optional<VectorD> hypothesis_attributes;
    if (selector.attribute_means.n_categories() > hypothesis.category &&
        selector.attribute_means.has(hypothesis.category))
      hypothesis_attributes = selector.attribute_means.mean_vector(hypothesis.category);

    const SelectionResult reselect = select(selector, box_features, hypothesis_attributes);
    int next = -1;
    double next_score = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (tried[signature].count(static_cast<int>(i))) continue;
      if (next < 0 || reselect.scores[static_cast<Index>(i)] > next_score) {
        next = static_cast<int>(i);
        next_score = reselect.scores[static_cast<Index>(i)];
      }
    }
    trace({{"kind", "selection"},
           {"stage", "refine"},
           {"iteration", iteration},
           {"scores", scores_json(reselect.scores, ids)},
           {"algorithm", next >= 0 ? ids[static_cast<std::size_t>(next)] : "none"}});
    if (next < 0) {
      result.stop_reason = "algorithms_exhausted";
      break;
    }

    ++iteration;
    tried[signature].insert(next);

    LabelMap replacement;
    try {
      replacement = run_segmenter(portfolio, ids[static_cast<std::size_t>(next)], input, vocab, runtime);
    } catch (const BackendError& e) {
      trace({{"kind", "backend_failure"},
             {"algorithm", ids[static_cast<std::size_t>(next)]},
             {"error", e.what()}});
      if (iteration >= max_iterations) {
        result.stop_reason = "max_iterations";
        break;
      }
      continue;  // backend marked tried, look again
    }

    LabelMap merged = merge_region(current, replacement, region.mask, region.bbox_x,
                                   region.bbox_y, config.merge_dilation_px);

    bool accepted = true;
    if (config.oracle_guard && input.ground_truth) {
      accepted = image_score(merged, *input.ground_truth) >=
                 image_score(current, *input.ground_truth);
    }
    trace({{"kind", "merge"},
           {"iteration", iteration},
           {"region", *contradiction},
           {"algorithm", ids[static_cast<std::size_t>(next)]},
           {"accepted", accepted}});

    if (accepted) {
      current = std::move(merged);
      const int r = std::max(0, config.merge_dilation_px);
      for (Index my = 0; my < region.mask.rows(); ++my)
        for (Index mx = 0; mx < region.mask.cols(); ++mx) {
          if (!region.mask(my, mx)) continue;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              if (dy * dy + dx * dx > r * r) continue;
              const Index y = region.bbox_y + my + dy, x = region.bbox_x + mx + dx;
              if (y >= 0 && y < producer.rows() && x >= 0 && x < producer.cols())
                producer(y, x) = static_cast<std::uint8_t>(next);
            }
        }
      result.merged_algorithms.push_back(ids[static_cast<std::size_t>(next)]);
    }

    if (iteration >= max_iterations) {
      result.stop_reason = "max_iterations";
      break;
    }
  }

  result.iterations_run = iteration;
  trace({{"kind", "stop"}, {"reason", result.stop_reason}, {"iterations", iteration}});
  result.map = std::move(current);
  return result;
}

}  // namespace segsel
