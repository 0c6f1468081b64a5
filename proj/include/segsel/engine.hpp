#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "segsel/reasoning.hpp"
#include "segsel/segmenters.hpp"
#include "segsel/selector.hpp"

namespace segsel {

struct EngineConfig {
  double contradiction_threshold = 0.15;
  int max_iterations = 0;   // 0 -> portfolio size
  int merge_dilation_px = 2;
  bool include_shape_terms = true;
  bool geometric_mean = true;
  // Evaluation-only guard: reject merges that lower the score against the
  // ground truth. Never meaningful in blind runs.
  bool oracle_guard = false;
  GraphOptions graph;
  FeatureConfig features;
};

// Append-only event log; one JSON object per event.
struct Trace {
  std::vector<nlohmann::ordered_json> events;

  void add(nlohmann::ordered_json event, bool with_timestamp);
  std::string to_jsonl() const;
};

void save_trace(const std::string& path, const Trace& trace);

struct IaResult {
  LabelMap map;
  Trace trace;
  AlgorithmId initial_algorithm;
  std::vector<AlgorithmId> merged_algorithms;  // accepted merges, in order
  int iterations_run = 0;
  std::string stop_reason;
};

// Replacement labels take over inside the dilated region mask; everything
// else keeps the current labels. Maps must share shape and vocabulary.
LabelMap merge_region(const LabelMap& current, const LabelMap& replacement,
                      const MaskPlane& region_mask, Index mask_x, Index mask_y, int dilation_px);

// One full selection / verification / refinement cycle over a single image:
// select, segment, build the graph, hunt contradictions, hypothesize, pick a
// fresh backend for the offending region, merge its whole-image output back,
// repeat until clean or out of options.
IaResult run_ia(const SegmenterInput& input, const SelectorModel& selector,
                const CooccurrenceModel& cooccurrence, const PortfolioSpec& portfolio,
                VocabPtr vocab, const EngineConfig& config, const BackendRuntime& runtime,
                bool timestamps = false);

}  // namespace segsel
