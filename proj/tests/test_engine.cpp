#include <doctest.h>

#include <fstream>

#include "segsel/engine.hpp"
#include "segsel/error.hpp"
#include "segsel/eval.hpp"
#include "segsel/run_pipeline.hpp"
#include "segsel/synth.hpp"
#include "test_util.hpp"

using namespace segsel;
using namespace segsel::testing;

namespace {

FeatureConfig tiny_features() {
  FeatureConfig f;
  f.hist_bins = 8;
  f.fft_bins = 8;
  f.gabor_orientations = 2;
  f.gabor_scales = 1;
  f.gabor_bins = 6;
  f.wavelet_bins = 6;
  f.acutance_bins = 6;
  return f;
}

// Shared fixture for the seeded contradiction scenario.
struct ScenarioFixture {
  ScenarioSpec spec;
  VocabPtr vocab;
  PortfolioSpec portfolio;
  CooccurrenceModel cooc;
  SelectorModel selector;
  EngineConfig config;

  ScenarioFixture() {
    spec.width = 96;
    spec.height = 72;
    spec.n_train_scenes = 30;
    vocab = synth_vocabulary(spec.n_categories);
    portfolio = scenario_portfolio(spec);

    std::vector<LabelMap> corpus;
    for (int i = 0; i < spec.n_train_scenes; ++i)
      corpus.push_back(generate_scenario_scene(spec, vocab, i).gt);
    GraphOptions graph;
    graph.min_region_px = 20;
    cooc = learn_cooccurrence(corpus, 0.25, graph);

    config.features = tiny_features();
    config.graph = graph;
    config.contradiction_threshold = 0.15;
    // Always start with the corrupting backend.
    selector = make_constant_selector(portfolio.ids(), 0, config.features);
  }
};

}  // namespace

TEST_CASE("merge_region") {
  auto vocab = make_vocab(4);
  LabelMap a = make_map(12, 12, vocab);
  fill_rect(a, 0, 0, 12, 12, 1);
  LabelMap b = make_map(12, 12, vocab);
  fill_rect(b, 0, 0, 12, 12, 2);

  SUBCASE("identity replacement changes nothing") {
    MaskPlane mask = MaskPlane::Ones(4, 4);
    const LabelMap merged = merge_region(a, a, mask, 2, 2, 2);
    CHECK((merged.labels == a.labels).all());
  }

  SUBCASE("whole-image mask yields the replacement") {
    MaskPlane mask = MaskPlane::Ones(12, 12);
    const LabelMap merged = merge_region(a, b, mask, 0, 0, 0);
    CHECK((merged.labels == b.labels).all());
  }

  SUBCASE("per-pixel oracle on a half mask, zero dilation") {
    MaskPlane mask = MaskPlane::Ones(12, 6);
    const LabelMap merged = merge_region(a, b, mask, 0, 0, 0);
    for (Index y = 0; y < 12; ++y)
      for (Index x = 0; x < 12; ++x)
        CHECK(merged.labels(y, x) == (x < 6 ? b.labels(y, x) : a.labels(y, x)));
  }

  SUBCASE("nothing changes outside the dilated mask") {
    MaskPlane mask = MaskPlane::Ones(3, 3);
    const int dilation = 2;
    const LabelMap merged = merge_region(a, b, mask, 5, 5, dilation);
    for (Index y = 0; y < 12; ++y)
      for (Index x = 0; x < 12; ++x) {
        double d2 = 1e18;
        for (Index my = 0; my < 3; ++my)
          for (Index mx = 0; mx < 3; ++mx) {
            const double dy = static_cast<double>(y - (5 + my));
            const double dx = static_cast<double>(x - (5 + mx));
            d2 = std::min(d2, dy * dy + dx * dx);
          }
        if (d2 > dilation * dilation) CHECK(merged.labels(y, x) == a.labels(y, x));
      }
  }

  SUBCASE("shape and vocabulary mismatches") {
    LabelMap small = make_map(6, 6, vocab);
    CHECK_THROWS_AS(merge_region(a, small, MaskPlane::Ones(2, 2), 0, 0, 0), ConfigError);
    LabelMap other = make_map(12, 12, make_vocab(5));
    CHECK_THROWS_AS(merge_region(a, other, MaskPlane::Ones(2, 2), 0, 0, 0), ConfigError);
  }
}

TEST_CASE("run_ia fixes a seeded contradiction") {
  ScenarioFixture fx;
  int improved = 0, total = 0;
  for (int i = 100; i < 106; ++i) {
    const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, i);
    SegmenterInput input{scene.image, scene.gt, "scene" + std::to_string(i)};

    BackendRuntime runtime;
    const IaResult result =
        run_ia(input, fx.selector, fx.cooc, fx.portfolio, fx.vocab, fx.config, runtime);

    CHECK(result.initial_algorithm == "corrupt");
    CHECK(result.iterations_run <= static_cast<int>(fx.portfolio.size()));

    const LabelMap corrupted =
        run_segmenter(fx.portfolio, "corrupt", input, fx.vocab, runtime);
    const double before = image_score(corrupted, scene.gt);
    const double after = image_score(result.map, scene.gt);
    ++total;
    if (after >= before) ++improved;

    // the loop should mention a contradiction and a merge in the trace
    bool saw_contradiction = false, saw_merge = false;
    for (const auto& e : result.trace.events) {
      if (e.value("kind", "") == "contradiction") saw_contradiction = true;
      if (e.value("kind", "") == "merge") saw_merge = true;
    }
    CHECK(saw_contradiction);
    CHECK(saw_merge);
  }
  CHECK(improved == total);
}

TEST_CASE("run_ia stops immediately on clean or single-region input") {
  ScenarioFixture fx;

  SUBCASE("clean scene: the fix backend output has no contradiction") {
    SelectorModel prefer_fix = make_constant_selector(fx.portfolio.ids(), 1, fx.config.features);
    const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, 200);
    SegmenterInput input{scene.image, scene.gt, "clean"};
    BackendRuntime runtime;
    const IaResult result =
        run_ia(input, prefer_fix, fx.cooc, fx.portfolio, fx.vocab, fx.config, runtime);
    CHECK(result.stop_reason == "no_contradiction");
    CHECK(result.iterations_run == 0);
    CHECK((result.map.labels == scene.gt.labels).all());
  }

  SUBCASE("single-region map exits before verification") {
    auto vocab = fx.vocab;
    LabelMap gt = make_map(48, 48, vocab);
    fill_rect(gt, 10, 10, 20, 20, 3);
    SegmenterInput input;
    input.image = ImageRgb::constant(48, 48, 0.3f, 0.5f, 0.2f);
    input.ground_truth = gt;
    input.image_id = "solo";
    BackendRuntime runtime;
    const IaResult result =
        run_ia(input, fx.selector, fx.cooc, fx.portfolio, fx.vocab, fx.config, runtime);
    CHECK(result.stop_reason == "single_region");
  }
}

TEST_CASE("run_ia replays identically with the same seed") {
  ScenarioFixture fx;
  const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, 300);
  SegmenterInput input{scene.image, scene.gt, "replay"};
  BackendRuntime runtime;
  runtime.seed = 42;
  const IaResult a = run_ia(input, fx.selector, fx.cooc, fx.portfolio, fx.vocab, fx.config, runtime);
  const IaResult b = run_ia(input, fx.selector, fx.cooc, fx.portfolio, fx.vocab, fx.config, runtime);
  CHECK((a.map.labels == b.map.labels).all());
  CHECK(a.trace.to_jsonl() == b.trace.to_jsonl());
}

TEST_CASE("backend failure mid-loop marks the backend tried and continues") {
  ScenarioFixture fx;
  // swap the fixer for an external backend that always fails
  PortfolioSpec portfolio = fx.portfolio;
  nlohmann::ordered_json params;
  params["cmd"] = std::vector<std::string>{"/bin/sh", "-c", "exit 9"};
  portfolio.backends[1] = {"broken", "external", params};

  const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, 400);
  SegmenterInput input{scene.image, scene.gt, "brokenrun"};
  BackendRuntime runtime;
  SelectorModel selector = make_constant_selector(portfolio.ids(), 0, fx.config.features);
  const IaResult result =
      run_ia(input, selector, fx.cooc, portfolio, fx.vocab, fx.config, runtime);
  // the corrupted map stays, but the loop must terminate cleanly
  CHECK(result.iterations_run <= static_cast<int>(portfolio.size()));
  bool saw_failure = false;
  for (const auto& e : result.trace.events)
    if (e.value("kind", "") == "backend_failure") saw_failure = true;
  CHECK(saw_failure);
}

TEST_CASE("oracle guard rejects merges that lower the score") {
  ScenarioFixture fx;
  // corrupting "fixer": relabels the top object into the mid category and
  // bloats it, which dents the mid category's f-value inside the merge mask
  PortfolioSpec portfolio = fx.portfolio;
  NoisyOracleParams wreck;
  wreck.confusions = {{fx.spec.category_top, fx.spec.category_mid}};
  wreck.dilate_px = 3;
  portfolio.backends[1] = {"wreck", "noisy_oracle", wreck.to_json()};

  EngineConfig config = fx.config;
  config.oracle_guard = true;
  const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, 500);
  SegmenterInput input{scene.image, scene.gt, "guarded"};
  BackendRuntime runtime;
  SelectorModel selector = make_constant_selector(portfolio.ids(), 0, config.features);
  const IaResult result = run_ia(input, selector, fx.cooc, portfolio, fx.vocab, config, runtime);

  const LabelMap corrupted = run_segmenter(portfolio, "corrupt", input, fx.vocab, runtime);
  CHECK(image_score(result.map, scene.gt) >= image_score(corrupted, scene.gt));
  bool saw_rejection = false;
  for (const auto& e : result.trace.events)
    if (e.value("kind", "") == "merge" && e.value("accepted", true) == false) saw_rejection = true;
  CHECK(saw_rejection);
}

TEST_CASE("single-backend portfolio degenerates to plain segmentation") {
  ScenarioFixture fx;
  PortfolioSpec solo;
  solo.backends.push_back(fx.portfolio.backends[0]);  // only the corrupter

  const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, 600);
  SegmenterInput input{scene.image, scene.gt, "solo_backend"};
  BackendRuntime runtime;
  SelectorModel selector = make_constant_selector(solo.ids(), 0, fx.config.features);
  const IaResult result = run_ia(input, selector, fx.cooc, solo, fx.vocab, fx.config, runtime);

  // the contradiction is found but no second backend exists
  const LabelMap direct = run_segmenter(solo, "corrupt", input, fx.vocab, runtime);
  CHECK((result.map.labels == direct.labels).all());
  CHECK(result.stop_reason == "algorithms_exhausted");
  CHECK(result.merged_algorithms.empty());
}

TEST_CASE("shape-bin mismatch between config and model is reconciled") {
  ScenarioFixture fx;
  EngineConfig config = fx.config;
  config.graph.shape_bins = 12;  // model was learned with 8
  const SynthScene scene = generate_scenario_scene(fx.spec, fx.vocab, 700);
  SegmenterInput input{scene.image, scene.gt, "shapebins"};
  BackendRuntime runtime;
  const IaResult result =
      run_ia(input, fx.selector, fx.cooc, fx.portfolio, fx.vocab, config, runtime);
  CHECK(!result.stop_reason.empty());  // no crash, loop completes
}

TEST_CASE("parallel runs match serial runs byte for byte") {
  using segsel::testing::TempDir;
  TempDir dir;
  SynthSpec spec;
  spec.width = 64;
  spec.height = 48;
  spec.n_images = 8;
  spec.n_backends = 2;
  spec.n_categories = 7;
  spec.seed = 21;
  spec.val_fraction = 0.5;
  spec.image_format = "ppm";
  const DatasetManifest manifest = write_synth_dataset(spec, dir.file("data"));

  SyntheticPortfolioSpec pspec;
  pspec.n_backends = 2;
  pspec.n_categories = 7;
  pspec.seed = 23;
  const PortfolioSpec portfolio = make_synthetic_portfolio(pspec);

  std::vector<LabelMap> gts;
  for (const auto& e : manifest.split("train"))
    gts.push_back(load_label_map(e.gt_path, manifest.vocab));
  GraphOptions graph;
  graph.min_region_px = 15;
  const CooccurrenceModel cooc = learn_cooccurrence(gts, 0.5, graph);

  FeatureConfig features;
  features.hist_bins = 8;
  features.fft_bins = 8;
  features.gabor_orientations = 2;
  features.gabor_scales = 1;
  features.gabor_bins = 6;
  features.wavelet_bins = 6;
  features.acutance_bins = 6;
  EngineConfig config;
  config.features = features;
  config.graph = graph;
  const SelectorModel selector = make_constant_selector(portfolio.ids(), 0, features);

  BackendRuntime runtime;
  runtime.seed = 3;
  const RunOutcome serial = run_over_split(manifest, "val", selector, cooc, portfolio, config,
                                           runtime, /*parallelism=*/1);
  const RunOutcome parallel = run_over_split(manifest, "val", selector, cooc, portfolio, config,
                                             runtime, /*parallelism=*/3);
  REQUIRE(serial.image_ids == parallel.image_ids);
  for (std::size_t i = 0; i < serial.ia_maps.size(); ++i) {
    CHECK((serial.ia_maps[i].labels == parallel.ia_maps[i].labels).all());
    CHECK(serial.traces[i].to_jsonl() == parallel.traces[i].to_jsonl());
    for (std::size_t a = 0; a < serial.methods.size(); ++a)
      CHECK((serial.methods[a].maps[i].labels == parallel.methods[a].maps[i].labels).all());
  }
}

TEST_CASE("trace serialization writes one event per line") {
  TempDir dir;
  Trace trace;
  trace.add({{"kind", "stop"}, {"reason", "test"}}, false);
  trace.add({{"kind", "merge"}, {"accepted", true}}, true);
  save_trace(dir.file("t.jsonl"), trace);
  std::ifstream in(dir.file("t.jsonl"));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("\"kind\":\"stop\"") != std::string::npos);
  REQUIRE(std::getline(in, line));
  CHECK(line.find("\"ts\":") != std::string::npos);
  CHECK_FALSE(std::getline(in, line));
}
