#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "segsel/engine.hpp"
#include "segsel/eval.hpp"
#include "segsel/selector.hpp"

namespace segsel {

// Index-parallel loop with a fixed worker count; results keyed by index stay
// deterministic regardless of scheduling. Worker exceptions rethrow here.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

struct TrainSelectorOutcome {
  SelectorModel model;
  nlohmann::ordered_json summary;  // label distribution, holdout error, ...
};

// Builds T_f/T_a over the train split, trains the requested variant (margin
// uses both sets through patching, bn uses T_a), attaches the per-category
// attribute table and reports a holdout error estimate.
TrainSelectorOutcome train_selector_pipeline(const DatasetManifest& manifest,
                                             const PortfolioSpec& portfolio,
                                             const TrainingSetOptions& set_options,
                                             const SelectorConfig& selector_config,
                                             const BackendRuntime& runtime);

CooccurrenceModel train_cooc_pipeline(const DatasetManifest& manifest, double alpha,
                                      const GraphOptions& options);

struct RunOutcome {
  std::vector<std::string> image_ids;
  std::vector<LabelMap> gts;
  std::vector<MethodResults> methods;  // one standalone column per backend
  std::vector<LabelMap> ia_maps;
  std::vector<Trace> traces;
  std::vector<AlgorithmId> initial;  // initially selected backend per image
};

// Runs every backend standalone plus the full refinement loop over a split.
// When output_dir is set, label maps land under maps/ and traces under
// traces/.
RunOutcome run_over_split(const DatasetManifest& manifest, const std::string& split,
                          const SelectorModel& selector, const CooccurrenceModel& cooccurrence,
                          const PortfolioSpec& portfolio, const EngineConfig& config,
                          const BackendRuntime& runtime, int parallelism,
                          const std::string& output_dir = "", bool timestamps = false);

// IA column first, then the portfolio columns.
EvalReport report_from_outcome(const RunOutcome& outcome, Pooling pooling = Pooling::micro);

// A margin-shaped model that always scores one backend highest; handy as a
// controlled starting point for refinement experiments.
SelectorModel make_constant_selector(const std::vector<AlgorithmId>& algorithms,
                                     std::size_t preferred, const FeatureConfig& features);

}  // namespace segsel
