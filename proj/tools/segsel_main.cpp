// segsel: per-image segmentation-algorithm selection with relational
// verification. Subcommands: synth-gen, train-selector, train-cooc, run,
// report.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "segsel/error.hpp"
#include "segsel/run_pipeline.hpp"
#include "segsel/synth.hpp"

namespace fs = std::filesystem;
using namespace segsel;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Flag defaults may come from a JSON config file; explicit flags win.
ordered_json load_config_file(const std::string& path) {
  if (path.empty()) return ordered_json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ordered_json j;
  in >> j;
  return j;
}

template <typename T>
void apply_config(const CLI::Option* opt, const ordered_json& config, const char* key, T& value) {
  if (opt->count() > 0) return;  // explicit flag wins
  if (config.contains(key)) value = config.at(key).get<T>();
}

void write_json(const std::string& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

ordered_json feature_config_json(const FeatureConfig& f) {
  return {{"hist_bins", f.hist_bins},
          {"fft_bins", f.fft_bins},
          {"gabor_orientations", f.gabor_orientations},
          {"gabor_scales", f.gabor_scales},
          {"gabor_lambda0", f.gabor_lambda0},
          {"gabor_bins", f.gabor_bins},
          {"wavelet_bins", f.wavelet_bins},
          {"acutance_bins", f.acutance_bins},
          {"schema", f.schema_id()}};
}

struct SynthGenArgs {
  std::string out_dir;
  SynthSpec spec;
  double miss_rate = 0.55;
  int erode = 1;
};

int cmd_synth_gen(const SynthGenArgs& args) {
  const DatasetManifest manifest = write_synth_dataset(args.spec, args.out_dir);

  SyntheticPortfolioSpec pspec;
  pspec.n_backends = args.spec.n_backends;
  pspec.n_categories = args.spec.n_categories;
  pspec.weak_miss_rate = args.miss_rate;
  pspec.weak_erode_px = args.erode;
  pspec.seed = args.spec.seed;
  const PortfolioSpec portfolio = make_synthetic_portfolio(pspec);
  save_portfolio((fs::path(args.out_dir) / "portfolio.json").string(), portfolio);

  std::cout << "wrote " << manifest.entries.size() << " scenes and a " << portfolio.size()
            << "-backend portfolio under " << args.out_dir << "\n";
  return kExitOk;
}

struct TrainSelectorArgs {
  std::string manifest_path, portfolio_path, model_out, summary_out;
  TrainingSetOptions set_options;
  SelectorConfig config;
  double timeout = 300.0;
};

int cmd_train_selector(const TrainSelectorArgs& args) {
  args.set_options.features.validate();
  const DatasetManifest manifest = load_manifest(args.manifest_path);
  const PortfolioSpec portfolio = load_portfolio(args.portfolio_path);

  BackendRuntime runtime;
  runtime.timeout_seconds = args.timeout;
  runtime.seed = args.config.seed;
  runtime.work_dir = (fs::path(args.model_out).parent_path() / "backend_work").string();

  TrainSelectorOutcome outcome =
      train_selector_pipeline(manifest, portfolio, args.set_options, args.config, runtime);
  save_selector(args.model_out, outcome.model);

  outcome.summary["theta"] = args.set_options.theta;
  outcome.summary["features"] = feature_config_json(args.set_options.features);
  const std::string summary_path =
      args.summary_out.empty() ? args.model_out + ".summary.json" : args.summary_out;
  write_json(summary_path, outcome.summary);

  std::cout << "selector written to " << args.model_out << "\n"
            << outcome.summary.dump(2) << "\n";
  return kExitOk;
}

struct TrainCoocArgs {
  std::string manifest_path, model_out;
  double alpha = 0.5;
  GraphOptions graph;
};

int cmd_train_cooc(const TrainCoocArgs& args) {
  const DatasetManifest manifest = load_manifest(args.manifest_path);
  const CooccurrenceModel model = train_cooc_pipeline(manifest, args.alpha, args.graph);
  save_cooccurrence(args.model_out, model, manifest.vocab->names);
  std::cout << "cooccurrence model (" << model.n_categories() << " categories, alpha "
            << model.alpha() << ") written to " << args.model_out << "\n";
  return kExitOk;
}

struct RunArgs {
  std::string manifest_path, portfolio_path, selector_path, cooc_path, out_dir;
  std::string split = "val";
  EngineConfig engine;
  int parallelism = 1;
  std::uint64_t seed = 1;
  double timeout = 300.0;
  bool timestamps = true;
  bool multi_object_only = true;  // evaluate only multi-object ground truth
};

int cmd_run(RunArgs args) {
  DatasetManifest manifest = load_manifest(args.manifest_path);
  if (args.multi_object_only)
    manifest = filter_multi_object(manifest, args.engine.graph.min_region_px);
  const PortfolioSpec portfolio = load_portfolio(args.portfolio_path);
  const SelectorModel selector = load_selector(args.selector_path);
  const CooccurrenceModel cooccurrence = load_cooccurrence(args.cooc_path);
  if (cooccurrence.n_categories() != manifest.vocab->size())
    throw ConfigError("cooccurrence model and manifest disagree on the category count");
  // The selector dictates the feature bank it was trained with.
  if (selector.features) args.engine.features = *selector.features;

  fs::create_directories(args.out_dir);
  BackendRuntime runtime;
  runtime.timeout_seconds = args.timeout;
  runtime.seed = args.seed;
  runtime.work_dir = (fs::path(args.out_dir) / "backend_work").string();

  // Effective settings, for provenance and replay.
  ordered_json provenance{{"command", "run"},
                          {"split", args.split},
                          {"tau", args.engine.contradiction_threshold},
                          {"max_iterations", args.engine.max_iterations},
                          {"merge_dilation_px", args.engine.merge_dilation_px},
                          {"include_shape_terms", args.engine.include_shape_terms},
                          {"geometric_mean", args.engine.geometric_mean},
                          {"oracle_guard", args.engine.oracle_guard},
                          {"min_region_px", args.engine.graph.min_region_px},
                          {"size_epsilon", args.engine.graph.size_epsilon},
                          {"shape_bins", args.engine.graph.shape_bins},
                          {"seed", args.seed},
                          {"parallelism", args.parallelism},
                          {"multi_object_only", args.multi_object_only},
                          {"features", feature_config_json(args.engine.features)}};
  write_json((fs::path(args.out_dir) / "run_config.json").string(), provenance);

  const RunOutcome outcome =
      run_over_split(manifest, args.split, selector, cooccurrence, portfolio, args.engine,
                     runtime, args.parallelism, args.out_dir, args.timestamps);

  ordered_json summary;
  summary["images"] = outcome.image_ids;
  ordered_json initial = ordered_json::object();
  for (std::size_t i = 0; i < outcome.image_ids.size(); ++i)
    initial[outcome.image_ids[i]] = outcome.initial[i];
  summary["initial_selection"] = initial;
  write_json((fs::path(args.out_dir) / "run_summary.json").string(), summary);

  std::cout << "processed " << outcome.image_ids.size() << " images into " << args.out_dir << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::string manifest_path, portfolio_path, run_dir, out_csv;
  std::string split = "val";
  std::string pooling = "micro";
  long min_region_px = 25;
  bool multi_object_only = true;
};

int cmd_report(const ReportArgs& args) {
  DatasetManifest manifest = load_manifest(args.manifest_path);
  if (args.multi_object_only) manifest = filter_multi_object(manifest, args.min_region_px);
  const PortfolioSpec portfolio = load_portfolio(args.portfolio_path);
  const auto entries = manifest.split(args.split);
  if (entries.empty()) throw ConfigError("split '" + args.split + "' is empty");

  std::vector<LabelMap> gts;
  std::vector<MethodResults> methods;
  methods.push_back({"IA", {}});
  for (const auto& b : portfolio.backends) methods.push_back({b.id, {}});

  for (const auto& entry : entries) {
    gts.push_back(load_label_map(entry.gt_path, manifest.vocab));
    const std::string id = fs::path(entry.image_path).stem().string();
    const fs::path maps = fs::path(args.run_dir) / "maps";
    methods[0].maps.push_back(load_label_map((maps / ("ia_" + id + ".png")).string(), manifest.vocab));
    for (std::size_t a = 0; a < portfolio.size(); ++a) {
      const fs::path p = maps / (portfolio.backends[a].id + "_" + id + ".png");
      if (!fs::exists(p))
        throw ConfigError("missing result for (" + id + ", " + portfolio.backends[a].id + ")");
      methods[a + 1].maps.push_back(load_label_map(p.string(), manifest.vocab));
    }
  }

  const EvalReport report = portfolio_report(
      gts, methods, args.pooling == "macro" ? Pooling::macro : Pooling::micro);
  write_report_csv(args.out_csv, report);

  ordered_json wins = ordered_json::object();
  for (std::size_t m = 0; m < report.methods.size(); ++m) wins[report.methods[m]] = report.wins[m];
  ordered_json averages = ordered_json::object();
  for (std::size_t m = 0; m < report.methods.size(); ++m)
    averages[report.methods[m]] = report.averages[m];
  write_json(args.out_csv + ".summary.json",
             {{"pooling", args.pooling}, {"averages", averages}, {"wins", wins}});

  std::cout << report_to_csv(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segmentation algorithm selection with relational verification"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default option values");

  // synth-gen ---------------------------------------------------------------
  SynthGenArgs synth_args;
  auto* synth = app.add_subcommand("synth-gen", "emit a synthetic dataset and portfolio");
  synth->fallthrough();
  auto* sg_out = synth->add_option("--out", synth_args.out_dir, "output directory")->required();
  auto* sg_images = synth->add_option("--images", synth_args.spec.n_images, "scene count");
  auto* sg_seed = synth->add_option("--seed", synth_args.spec.seed, "generator seed");
  auto* sg_backends = synth->add_option("--backends", synth_args.spec.n_backends, "portfolio size");
  auto* sg_width = synth->add_option("--width", synth_args.spec.width, "scene width");
  auto* sg_height = synth->add_option("--height", synth_args.spec.height, "scene height");
  auto* sg_cats = synth->add_option("--categories", synth_args.spec.n_categories,
                                    "category count incl. background");
  auto* sg_val = synth->add_option("--val-fraction", synth_args.spec.val_fraction,
                                   "fraction of scenes in the val split");
  auto* sg_miss = synth->add_option("--miss-rate", synth_args.miss_rate,
                                    "weak-category miss rate of the backends");
  auto* sg_erode = synth->add_option("--erode", synth_args.erode, "weak-category erosion radius");
  auto* sg_format = synth->add_option("--format", synth_args.spec.image_format, "png or ppm");

  // train-selector ----------------------------------------------------------
  TrainSelectorArgs ts_args;
  auto* ts = app.add_subcommand("train-selector", "build T_f/T_a and train a selector");
  ts->fallthrough();
  auto* ts_manifest = ts->add_option("--manifest", ts_args.manifest_path, "dataset manifest")->required();
  auto* ts_portfolio = ts->add_option("--portfolio", ts_args.portfolio_path, "portfolio spec")->required();
  auto* ts_out = ts->add_option("--out", ts_args.model_out, "model output path")->required();
  auto* ts_summary = ts->add_option("--summary", ts_args.summary_out, "summary output path");
  auto* ts_variant = ts->add_option("--variant", ts_args.config.variant, "margin or bn")
                         ->check(CLI::IsMember({"margin", "bn"}));
  auto* ts_theta = ts->add_option("--theta", ts_args.set_options.theta,
                                  "minimum best-vs-second f-value gap in [0,1]");
  auto* ts_pca = ts->add_option("--n-pca", ts_args.config.n_pca, "PCA components (margin)");
  auto* ts_reg = ts->add_option("--regularization", ts_args.config.regularization, "hinge L2");
  auto* ts_iter = ts->add_option("--iterations", ts_args.config.margin_iterations, "descent steps");
  auto* ts_two = ts->add_flag("--two-model", ts_args.config.two_model_mode,
                              "ablation: separate with/without-attribute models");
  auto* ts_bins = ts->add_option("--bn-bins", ts_args.config.bn_bins, "discretization bins k (bn)");
  auto* ts_fnodes = ts->add_option("--bn-feature-nodes", ts_args.config.bn_feature_nodes,
                                   "observed feature variables (bn)");
  auto* ts_anodes = ts->add_option("--bn-attribute-nodes", ts_args.config.bn_attribute_nodes,
                                   "observed attribute variables (bn)");
  auto* ts_seed = ts->add_option("--seed", ts_args.config.seed, "training seed");
  auto* ts_minpx = ts->add_option("--min-region-px", ts_args.set_options.min_region_px,
                                  "minimum region size in pixels");
  auto* ts_nomulti = ts->add_flag("!--no-require-multi-detection",
                                  ts_args.set_options.require_multi_detection,
                                  "drop the >=2-detections training filter");
  auto* ts_timeout = ts->add_option("--timeout", ts_args.timeout, "backend timeout seconds");

  // train-cooc ----------------------------------------------------------------
  TrainCoocArgs tc_args;
  auto* tc = app.add_subcommand("train-cooc", "learn co-occurrence statistics from ground truth");
  tc->fallthrough();
  auto* tc_manifest = tc->add_option("--manifest", tc_args.manifest_path, "dataset manifest")->required();
  auto* tc_out = tc->add_option("--out", tc_args.model_out, "model output path")->required();
  auto* tc_alpha = tc->add_option("--alpha", tc_args.alpha, "Laplace smoothing constant");
  auto* tc_bins = tc->add_option("--shape-bins", tc_args.graph.shape_bins, "orientation bins");
  auto* tc_eps = tc->add_option("--size-epsilon", tc_args.graph.size_epsilon, "same-size band");
  auto* tc_minpx = tc->add_option("--min-region-px", tc_args.graph.min_region_px,
                                  "minimum region size in pixels");

  // run -----------------------------------------------------------------------
  RunArgs run_args;
  auto* run = app.add_subcommand("run", "refine a split with the full selection loop");
  run->fallthrough();
  auto* r_manifest = run->add_option("--manifest", run_args.manifest_path, "dataset manifest")->required();
  auto* r_portfolio = run->add_option("--portfolio", run_args.portfolio_path, "portfolio spec")->required();
  auto* r_selector = run->add_option("--selector", run_args.selector_path, "selector model")->required();
  auto* r_cooc = run->add_option("--cooc", run_args.cooc_path, "cooccurrence model")->required();
  auto* r_out = run->add_option("--out", run_args.out_dir, "output directory")->required();
  auto* r_split = run->add_option("--split", run_args.split, "train or val");
  auto* r_tau = run->add_option("--tau", run_args.engine.contradiction_threshold,
                                "contradiction threshold");
  auto* r_maxit = run->add_option("--max-iterations", run_args.engine.max_iterations,
                                  "0 means portfolio size");
  auto* r_dilate = run->add_option("--merge-dilation", run_args.engine.merge_dilation_px,
                                   "merge mask dilation radius");
  auto* r_noshape = run->add_flag("!--no-shape-terms", run_args.engine.include_shape_terms,
                                  "drop per-region shape terms from scoring");
  auto* r_rawprod = run->add_flag("!--raw-product", run_args.engine.geometric_mean,
                                  "score with raw probability products instead of geometric means");
  auto* r_guard = run->add_flag("--oracle-guard", run_args.engine.oracle_guard,
                                "evaluation only: reject merges that lower the true score");
  auto* r_minpx = run->add_option("--min-region-px", run_args.engine.graph.min_region_px,
                                  "minimum region size in pixels");
  auto* r_eps = run->add_option("--size-epsilon", run_args.engine.graph.size_epsilon,
                                "same-size band");
  auto* r_sbins = run->add_option("--shape-bins", run_args.engine.graph.shape_bins,
                                  "orientation bins");
  auto* r_seed = run->add_option("--seed", run_args.seed, "run seed");
  auto* r_par = run->add_option("--parallelism", run_args.parallelism, "worker threads");
  auto* r_timeout = run->add_option("--timeout", run_args.timeout, "backend timeout seconds");
  auto* r_nots = run->add_flag("!--no-timestamps", run_args.timestamps,
                               "omit wall-clock timestamps from traces");
  auto* r_all = run->add_flag("!--all-images", run_args.multi_object_only,
                              "process every image, not just multi-object ones");

  // report ----------------------------------------------------------------------
  ReportArgs rep_args;
  auto* rep = app.add_subcommand("report", "aggregate run results into a per-category table");
  rep->fallthrough();
  auto* p_manifest = rep->add_option("--manifest", rep_args.manifest_path, "dataset manifest")->required();
  auto* p_portfolio = rep->add_option("--portfolio", rep_args.portfolio_path, "portfolio spec")->required();
  auto* p_run = rep->add_option("--run", rep_args.run_dir, "run output directory")->required();
  auto* p_out = rep->add_option("--out", rep_args.out_csv, "CSV output path")->required();
  auto* p_split = rep->add_option("--split", rep_args.split, "train or val");
  auto* p_pool = rep->add_option("--pooling", rep_args.pooling, "micro or macro")
                     ->check(CLI::IsMember({"micro", "macro"}));
  auto* p_minpx = rep->add_option("--min-region-px", rep_args.min_region_px,
                                  "minimum region size in pixels");
  auto* p_all = rep->add_flag("!--all-images", rep_args.multi_object_only,
                              "report every image, not just multi-object ones");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const ordered_json config = load_config_file(config_path);

    if (synth->parsed()) {
      apply_config(sg_out, config, "out", synth_args.out_dir);
      apply_config(sg_images, config, "images", synth_args.spec.n_images);
      apply_config(sg_seed, config, "seed", synth_args.spec.seed);
      apply_config(sg_backends, config, "backends", synth_args.spec.n_backends);
      apply_config(sg_width, config, "width", synth_args.spec.width);
      apply_config(sg_height, config, "height", synth_args.spec.height);
      apply_config(sg_cats, config, "categories", synth_args.spec.n_categories);
      apply_config(sg_val, config, "val_fraction", synth_args.spec.val_fraction);
      apply_config(sg_miss, config, "miss_rate", synth_args.miss_rate);
      apply_config(sg_erode, config, "erode", synth_args.erode);
      apply_config(sg_format, config, "format", synth_args.spec.image_format);
      return cmd_synth_gen(synth_args);
    }
    if (ts->parsed()) {
      apply_config(ts_manifest, config, "manifest", ts_args.manifest_path);
      apply_config(ts_portfolio, config, "portfolio", ts_args.portfolio_path);
      apply_config(ts_out, config, "out", ts_args.model_out);
      apply_config(ts_summary, config, "summary", ts_args.summary_out);
      apply_config(ts_variant, config, "variant", ts_args.config.variant);
      apply_config(ts_theta, config, "theta", ts_args.set_options.theta);
      apply_config(ts_pca, config, "n_pca", ts_args.config.n_pca);
      apply_config(ts_reg, config, "regularization", ts_args.config.regularization);
      apply_config(ts_iter, config, "iterations", ts_args.config.margin_iterations);
      apply_config(ts_two, config, "two_model", ts_args.config.two_model_mode);
      apply_config(ts_bins, config, "bn_bins", ts_args.config.bn_bins);
      apply_config(ts_fnodes, config, "bn_feature_nodes", ts_args.config.bn_feature_nodes);
      apply_config(ts_anodes, config, "bn_attribute_nodes", ts_args.config.bn_attribute_nodes);
      apply_config(ts_seed, config, "seed", ts_args.config.seed);
      apply_config(ts_minpx, config, "min_region_px", ts_args.set_options.min_region_px);
      apply_config(ts_nomulti, config, "require_multi_detection",
                   ts_args.set_options.require_multi_detection);
      apply_config(ts_timeout, config, "timeout", ts_args.timeout);
      if (config.contains("features"))
        ts_args.set_options.features = feature_config_from_json(config.at("features"));
      if (ts_args.set_options.theta < 0.0 || ts_args.set_options.theta > 1.0)
        throw CLI::ValidationError("--theta", "theta must lie in [0,1]");
      return cmd_train_selector(ts_args);
    }
    if (tc->parsed()) {
      apply_config(tc_manifest, config, "manifest", tc_args.manifest_path);
      apply_config(tc_out, config, "out", tc_args.model_out);
      apply_config(tc_alpha, config, "alpha", tc_args.alpha);
      apply_config(tc_bins, config, "shape_bins", tc_args.graph.shape_bins);
      apply_config(tc_eps, config, "size_epsilon", tc_args.graph.size_epsilon);
      apply_config(tc_minpx, config, "min_region_px", tc_args.graph.min_region_px);
      if (tc_args.alpha < 0.0) throw CLI::ValidationError("--alpha", "alpha must be >= 0");
      return cmd_train_cooc(tc_args);
    }
    if (run->parsed()) {
      apply_config(r_manifest, config, "manifest", run_args.manifest_path);
      apply_config(r_portfolio, config, "portfolio", run_args.portfolio_path);
      apply_config(r_selector, config, "selector", run_args.selector_path);
      apply_config(r_cooc, config, "cooc", run_args.cooc_path);
      apply_config(r_out, config, "out", run_args.out_dir);
      apply_config(r_split, config, "split", run_args.split);
      apply_config(r_tau, config, "tau", run_args.engine.contradiction_threshold);
      apply_config(r_maxit, config, "max_iterations", run_args.engine.max_iterations);
      apply_config(r_dilate, config, "merge_dilation", run_args.engine.merge_dilation_px);
      apply_config(r_noshape, config, "include_shape_terms", run_args.engine.include_shape_terms);
      apply_config(r_rawprod, config, "geometric_mean", run_args.engine.geometric_mean);
      apply_config(r_guard, config, "oracle_guard", run_args.engine.oracle_guard);
      apply_config(r_minpx, config, "min_region_px", run_args.engine.graph.min_region_px);
      apply_config(r_eps, config, "size_epsilon", run_args.engine.graph.size_epsilon);
      apply_config(r_sbins, config, "shape_bins", run_args.engine.graph.shape_bins);
      apply_config(r_seed, config, "seed", run_args.seed);
      apply_config(r_par, config, "parallelism", run_args.parallelism);
      apply_config(r_timeout, config, "timeout", run_args.timeout);
      apply_config(r_nots, config, "timestamps", run_args.timestamps);
      apply_config(r_all, config, "multi_object_only", run_args.multi_object_only);
      if (run_args.engine.contradiction_threshold < 0.0 ||
          run_args.engine.contradiction_threshold > 1.0)
        throw CLI::ValidationError("--tau", "tau must lie in [0,1]");
      return cmd_run(run_args);
    }
    if (rep->parsed()) {
      apply_config(p_manifest, config, "manifest", rep_args.manifest_path);
      apply_config(p_portfolio, config, "portfolio", rep_args.portfolio_path);
      apply_config(p_run, config, "run", rep_args.run_dir);
      apply_config(p_out, config, "out", rep_args.out_csv);
      apply_config(p_split, config, "split", rep_args.split);
      apply_config(p_pool, config, "pooling", rep_args.pooling);
      apply_config(p_minpx, config, "min_region_px", rep_args.min_region_px);
      apply_config(p_all, config, "multi_object_only", rep_args.multi_object_only);
      return cmd_report(rep_args);
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
