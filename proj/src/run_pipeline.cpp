#include "segsel/run_pipeline.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "segsel/error.hpp"

namespace fs = std::filesystem;

namespace segsel {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::size_t> holdout_indices(std::size_t n) {
  // Every fifth sample, as long as enough remain for training.
  std::vector<std::size_t> held;
  if (n < 10) return held;
  for (std::size_t i = 0; i < n; i += 5) held.push_back(i);
  return held;
}

}  // namespace

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body) {
  workers = std::max(1, workers);
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(workers, static_cast<int>(count)); ++t)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

TrainSelectorOutcome train_selector_pipeline(const DatasetManifest& manifest,
                                             const PortfolioSpec& portfolio,
                                             const TrainingSetOptions& set_options,
                                             const SelectorConfig& selector_config,
                                             const BackendRuntime& runtime) {
  const TrainingSets sets = build_training_sets(manifest, portfolio, set_options, runtime);

  std::vector<TrainingSample> pool;
  if (selector_config.variant == "margin") {
    pool = sets.t_f;
    pool.insert(pool.end(), sets.t_a.begin(), sets.t_a.end());
  } else {
    pool = sets.t_a;
  }
  if (pool.size() < 4)
    throw ConfigError("training produced only " + std::to_string(pool.size()) +
                      " samples; lower theta or add data");

  const auto held = holdout_indices(pool.size());
  std::vector<TrainingSample> train_pool;
  std::vector<TrainingSample> hold_pool;
  std::size_t hi = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (hi < held.size() && held[hi] == i) {
      hold_pool.push_back(pool[i]);
      ++hi;
    } else {
      train_pool.push_back(pool[i]);
    }
  }
  if (train_pool.empty()) train_pool = pool;

  TrainSelectorOutcome outcome;
  try {
    outcome.model = selector_config.variant == "margin"
                        ? train_margin(train_pool, portfolio.ids(), selector_config)
                        : train_bn(train_pool, portfolio.ids(), selector_config);
  } catch (const ConfigError&) {
    // Holdout split may have eaten a whole class; retrain on everything.
    outcome.model = selector_config.variant == "margin"
                        ? train_margin(pool, portfolio.ids(), selector_config)
                        : train_bn(pool, portfolio.ids(), selector_config);
    hold_pool.clear();
  }

  outcome.model.features = set_options.features;

  // Per-category attribute profile from the ground truth of the train split.
  std::vector<std::pair<std::uint8_t, RegionAttributes>> attr_samples;
  for (const auto& entry : manifest.split("train")) {
    const LabelMap gt = load_label_map(entry.gt_path, manifest.vocab);
    for (const auto& region : extract_regions(gt, set_options.min_region_px))
      attr_samples.emplace_back(region.category,
                                extract_region_attributes(region.mask, region.bbox_x, region.bbox_y));
  }
  outcome.model.attribute_means = category_attribute_means(attr_samples, manifest.vocab->size());

  ordered_json label_counts = ordered_json::object();
  for (const auto& id : portfolio.ids()) label_counts[id] = 0;
  for (const auto& s : pool) label_counts[s.label] = label_counts[s.label].get<int>() + 1;

  long correct = 0;
  for (const auto& s : hold_pool)
    if (select(outcome.model, s.features, s.attributes).algorithm == s.label) ++correct;

  outcome.summary["variant"] = selector_config.variant;
  outcome.summary["samples_t_f"] = sets.t_f.size();
  outcome.summary["samples_t_a"] = sets.t_a.size();
  outcome.summary["skipped"] = sets.skipped;
  outcome.summary["label_distribution"] = label_counts;
  outcome.summary["holdout_size"] = hold_pool.size();
  outcome.summary["holdout_error"] =
      hold_pool.empty() ? ordered_json(nullptr)
                        : ordered_json(1.0 - static_cast<double>(correct) /
                                                 static_cast<double>(hold_pool.size()));
  if (selector_config.variant == "bn") {
    outcome.summary["bins"] = selector_config.bn_bins;
    outcome.summary["em_iterations"] = outcome.model.em_iterations;
    outcome.summary["em_converged"] = outcome.model.em_converged;
  }
  return outcome;
}

CooccurrenceModel train_cooc_pipeline(const DatasetManifest& manifest, double alpha,
                                      const GraphOptions& options) {
  std::vector<LabelMap> gts;
  for (const auto& entry : manifest.split("train"))
    gts.push_back(load_label_map(entry.gt_path, manifest.vocab));
  if (gts.empty()) throw ConfigError("train split is empty");
  return learn_cooccurrence(gts, alpha, options);
}

RunOutcome run_over_split(const DatasetManifest& manifest, const std::string& split,
                          const SelectorModel& selector, const CooccurrenceModel& cooccurrence,
                          const PortfolioSpec& portfolio, const EngineConfig& config,
                          const BackendRuntime& runtime, int parallelism,
                          const std::string& output_dir, bool timestamps) {
  const auto entries = manifest.split(split);
  if (entries.empty()) throw ConfigError("split '" + split + "' is empty");

  RunOutcome outcome;
  outcome.image_ids.resize(entries.size());
  outcome.gts.resize(entries.size());
  outcome.ia_maps.resize(entries.size());
  outcome.traces.resize(entries.size());
  outcome.initial.resize(entries.size());
  outcome.methods.resize(portfolio.size());
  for (std::size_t a = 0; a < portfolio.size(); ++a) {
    outcome.methods[a].name = portfolio.backends[a].id;
    outcome.methods[a].maps.resize(entries.size());
  }

  if (!output_dir.empty()) {
    fs::create_directories(fs::path(output_dir) / "maps");
    fs::create_directories(fs::path(output_dir) / "traces");
  }

  parallel_for(entries.size(), parallelism, [&](std::size_t i) {
    const auto& entry = entries[i];
    SegmenterInput input{load_image(entry.image_path),
                         load_label_map(entry.gt_path, manifest.vocab),
                         fs::path(entry.image_path).stem().string()};
    outcome.image_ids[i] = input.image_id;
    outcome.gts[i] = *input.ground_truth;

    for (std::size_t a = 0; a < portfolio.size(); ++a)
      outcome.methods[a].maps[i] =
          run_segmenter(portfolio, portfolio.backends[a].id, input, manifest.vocab, runtime);

    IaResult ia = run_ia(input, selector, cooccurrence, portfolio, manifest.vocab, config,
                         runtime, timestamps);
    outcome.initial[i] = ia.initial_algorithm;
    outcome.ia_maps[i] = std::move(ia.map);
    outcome.traces[i] = std::move(ia.trace);

    if (!output_dir.empty()) {
      save_label_map((fs::path(output_dir) / "maps" / ("ia_" + input.image_id + ".png")).string(),
                     outcome.ia_maps[i]);
      for (std::size_t a = 0; a < portfolio.size(); ++a)
        save_label_map((fs::path(output_dir) / "maps" /
                        (portfolio.backends[a].id + "_" + input.image_id + ".png"))
                           .string(),
                       outcome.methods[a].maps[i]);
      save_trace((fs::path(output_dir) / "traces" / (input.image_id + ".jsonl")).string(),
                 outcome.traces[i]);
    }
  });
  return outcome;
}

EvalReport report_from_outcome(const RunOutcome& outcome, Pooling pooling) {
  std::vector<MethodResults> methods;
  methods.push_back({"IA", outcome.ia_maps});
  for (const auto& m : outcome.methods) methods.push_back(m);
  return portfolio_report(outcome.gts, methods, pooling);
}

SelectorModel make_constant_selector(const std::vector<AlgorithmId>& algorithms,
                                     std::size_t preferred, const FeatureConfig& features) {
  if (preferred >= algorithms.size()) throw ConfigError("preferred backend out of range");
  SelectorModel model;
  model.variant = "margin";
  model.algorithms = algorithms;
  model.feature_schema = features.schema_id();

  const Index dim = features.dim();
  model.features = features;
  model.pca.mean = VectorD::Zero(dim);
  model.pca.components = MatrixD::Zero(1, dim);
  model.pca.explained_variance = VectorD::Zero(1);
  model.attr_patch = VectorD::Zero(RegionAttributes::kDim);
  model.input_mean = VectorD::Zero(1 + RegionAttributes::kDim);
  model.input_scale = VectorD::Ones(1 + RegionAttributes::kDim);
  model.weights = MatrixD::Zero(static_cast<Index>(algorithms.size()), 1 + RegionAttributes::kDim);
  model.bias = VectorD::Zero(static_cast<Index>(algorithms.size()));
  model.bias[static_cast<Index>(preferred)] = 1.0;
  return model;
}

}  // namespace segsel
