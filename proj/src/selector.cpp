#include "segsel/selector.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "segsel/error.hpp"
#include "segsel/eval.hpp"

namespace segsel {
namespace {

using ordered_json = nlohmann::ordered_json;

ImageRgb crop_image(const ImageRgb& img, Index x, Index y, Index w, Index h) {
  ImageRgb out;
  out.r = img.r.block(y, x, h, w);
  out.g = img.g.block(y, x, h, w);
  out.b = img.b.block(y, x, h, w);
  return out;
}

LabelMap crop_map(const LabelMap& map, Index x, Index y, Index w, Index h) {
  LabelMap out;
  out.vocab = map.vocab;
  out.labels = map.labels.block(y, x, h, w);
  return out;
}

// Ranks backend scores and keeps the sample only when the winner is clear of
// the runner-up by theta.
std::optional<std::pair<std::size_t, double>> pick_label(const std::vector<double>& scores,
                                                         const std::vector<bool>& valid,
                                                         double theta) {
  std::size_t best = scores.size();
  double best_score = -1.0, second = -1.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!valid[i]) continue;
    if (best == scores.size() || scores[i] > best_score) {
      if (best != scores.size()) second = std::max(second, best_score);
      best = i;
      best_score = scores[i];
    } else {
      second = std::max(second, scores[i]);
    }
  }
  if (best == scores.size() || second < 0.0) return std::nullopt;
  const double gap = best_score - second;
  if (gap <= 0.0 || gap < theta) return std::nullopt;
  return std::make_pair(best, gap);
}

VectorD standardize(const VectorD& v, const VectorD& mean, const VectorD& scale) {
  return ((v - mean).array() / scale.array()).matrix();
}

// Margin-variant input: standardized [PCA(features) | attributes] plus a
// trailing constant that plays the bias role.
VectorD margin_input(const PcaModel& pca, const VectorD& mean, const VectorD& scale,
                     const VectorD& features, const VectorD& attributes, bool with_attrs) {
  VectorD projected = pca.components * (features - pca.mean);
  VectorD z(projected.size() + (with_attrs ? attributes.size() : 0));
  z.head(projected.size()) = projected;
  if (with_attrs) z.tail(attributes.size()) = attributes;
  return standardize(z, mean, scale);
}

struct MarginFit {
  MatrixD weights;
  VectorD bias;
};

// Deterministic full-batch subgradient descent on the L2-regularized hinge
// loss, one-vs-rest. The bias rides as an unregularized extra coordinate with
// a damped step.
MarginFit fit_one_vs_rest(const MatrixD& inputs, const std::vector<int>& labels, int n_classes,
                          double lambda, int iterations) {
  const Index n = inputs.rows(), d = inputs.cols();
  MarginFit fit;
  fit.weights = MatrixD::Zero(n_classes, d);
  fit.bias = VectorD::Zero(n_classes);

  for (int cls = 0; cls < n_classes; ++cls) {
    VectorD w = VectorD::Zero(d);
    double b = 0.0;
    for (int t = 1; t <= iterations; ++t) {
      const double eta = 1.0 / (lambda * (t + 10.0));
      VectorD grad_w = lambda * w;
      double grad_b = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double y = labels[static_cast<std::size_t>(i)] == cls ? 1.0 : -1.0;
        if (y * (w.dot(inputs.row(i)) + b) < 1.0) {
          grad_w -= (y / static_cast<double>(n)) * inputs.row(i).transpose();
          grad_b -= y / static_cast<double>(n);
        }
      }
      w -= eta * grad_w;
      b -= 0.1 * eta * grad_b;
    }
    fit.weights.row(cls) = w.transpose();
    fit.bias[cls] = b;
  }
  return fit;
}

void compute_standardization(const MatrixD& z, VectorD& mean, VectorD& scale) {
  mean = z.colwise().mean();
  scale.resize(z.cols());
  for (Index c = 0; c < z.cols(); ++c) {
    const double var = (z.col(c).array() - mean[c]).square().mean();
    scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

int argmax_first(const VectorD& scores) {
  int best = 0;
  for (Index i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  return best;
}

double mutual_information(const std::vector<int>& x, const std::vector<int>& y, int kx, int ky) {
  MatrixD joint = MatrixD::Zero(kx, ky);
  for (std::size_t i = 0; i < x.size(); ++i) joint(x[i], y[i]) += 1.0;
  joint /= static_cast<double>(x.size());
  const VectorD px = joint.rowwise().sum();
  const VectorD py = joint.colwise().sum();
  double mi = 0.0;
  for (int a = 0; a < kx; ++a)
    for (int b = 0; b < ky; ++b)
      if (joint(a, b) > 0.0) mi += joint(a, b) * std::log(joint(a, b) / (px[a] * py[b]));
  return mi;
}

std::vector<int> top_mi_dims(const MatrixD& values, const std::vector<int>& labels, int n_labels,
                             int bins, int want, VectorD& mins, VectorD& maxs) {
  const Index dim = values.cols();
  std::vector<std::pair<double, int>> ranked;
  VectorD all_min = values.colwise().minCoeff();
  VectorD all_max = values.colwise().maxCoeff();
  for (Index d = 0; d < dim; ++d) {
    if (!(all_max[d] > all_min[d])) continue;  // constant dimension
    std::vector<int> x(static_cast<std::size_t>(values.rows()));
    for (Index i = 0; i < values.rows(); ++i)
      x[static_cast<std::size_t>(i)] = discretize(values(i, d), bins, all_min[d], all_max[d]) - 1;
    ranked.emplace_back(mutual_information(x, labels, bins, n_labels), static_cast<int>(d));
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (static_cast<int>(ranked.size()) > want) ranked.resize(static_cast<std::size_t>(want));

  std::vector<int> dims;
  for (const auto& [mi, d] : ranked) dims.push_back(d);
  std::sort(dims.begin(), dims.end());
  mins.resize(static_cast<Index>(dims.size()));
  maxs.resize(static_cast<Index>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    mins[static_cast<Index>(i)] = all_min[dims[i]];
    maxs[static_cast<Index>(i)] = all_max[dims[i]];
  }
  return dims;
}

std::vector<int> label_indices(const std::vector<TrainingSample>& samples,
                               const std::vector<AlgorithmId>& algorithms) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  std::set<int> distinct;
  for (const auto& s : samples) {
    const auto it = std::find(algorithms.begin(), algorithms.end(), s.label);
    if (it == algorithms.end()) throw ConfigError("sample labeled with unknown algorithm " + s.label);
    const int idx = static_cast<int>(it - algorithms.begin());
    labels.push_back(idx);
    distinct.insert(idx);
  }
  if (distinct.size() < 2) throw ConfigError("training set has fewer than 2 distinct labels");
  return labels;
}

std::vector<double> to_std(const VectorD& v) { return {v.data(), v.data() + v.size()}; }
std::vector<double> to_std(const MatrixD& m) { return {m.data(), m.data() + m.size()}; }

VectorD vec_from(const ordered_json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorD>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

TrainingSets build_training_sets(const DatasetManifest& manifest, const PortfolioSpec& portfolio,
                                 const TrainingSetOptions& options, const BackendRuntime& runtime) {
  portfolio.validate();
  if (options.theta < 0.0 || options.theta > 1.0)
    throw ConfigError("theta must lie in [0,1]");

  TrainingSets sets;
  const auto train = manifest.split("train");
  const auto ids = portfolio.ids();

  for (const auto& entry : train) {
    const LabelMap gt = load_label_map(entry.gt_path, manifest.vocab);
    SegmenterInput input{load_image(entry.image_path), gt,
                         std::filesystem::path(entry.image_path).stem().string()};

    const auto gt_regions = extract_regions(gt, options.min_region_px);
    if (gt_regions.size() < 2) {
      sets.skipped.push_back(input.image_id + ": fewer than two objects");
      continue;
    }

    std::vector<LabelMap> maps(portfolio.size());
    std::vector<bool> ok(portfolio.size(), false);
    std::size_t n_ok = 0, multi = 0;
    for (std::size_t a = 0; a < portfolio.size(); ++a) {
      try {
        maps[a] = run_segmenter(portfolio, ids[a], input, manifest.vocab, runtime);
        ok[a] = true;
        ++n_ok;
        if (extract_regions(maps[a], options.min_region_px).size() >= 2) ++multi;
      } catch (const BackendError& e) {
        sets.skipped.push_back(input.image_id + "/" + ids[a] + ": " + e.what());
      }
    }
    if (n_ok < 2) {
      sets.skipped.push_back(input.image_id + ": fewer than two backends succeeded");
      continue;
    }
    if (options.require_multi_detection && multi == 0) {
      sets.skipped.push_back(input.image_id + ": no backend detected two objects");
      continue;
    }

    // T_f: whole-image sample.
    std::vector<double> image_scores(portfolio.size(), -1.0);
    for (std::size_t a = 0; a < portfolio.size(); ++a)
      if (ok[a]) image_scores[a] = image_score(maps[a], gt);
    if (const auto win = pick_label(image_scores, ok, options.theta)) {
      TrainingSample s;
      s.features = extract_image_features(input.image, options.features);
      s.label = ids[win->first];
      s.gap = win->second;
      s.source_id = input.image_id;
      sets.t_f.push_back(std::move(s));
    }

    // T_a: one sample per ground-truth region, from its bounding box.
    for (const auto& region : gt_regions) {
      const LabelMap gt_box = crop_map(gt, region.bbox_x, region.bbox_y, region.bbox_w, region.bbox_h);
      std::vector<double> region_scores(portfolio.size(), -1.0);
      for (std::size_t a = 0; a < portfolio.size(); ++a) {
        if (!ok[a]) continue;
        const LabelMap pred_box =
            crop_map(maps[a], region.bbox_x, region.bbox_y, region.bbox_w, region.bbox_h);
        region_scores[a] = fvalue(pred_box, gt_box, region.category).value_or(0.0);
      }
      const auto win = pick_label(region_scores, ok, options.theta);
      if (!win) continue;

      TrainingSample s;
      try {
        s.features = extract_image_features(
            crop_image(input.image, region.bbox_x, region.bbox_y, region.bbox_w, region.bbox_h),
            options.features);
      } catch (const ConfigError& e) {
        // degenerate crop (thinner than the filter banks allow)
        sets.skipped.push_back(input.image_id + ":" + std::to_string(region.id) + ": " + e.what());
        continue;
      }
      const auto attrs = extract_region_attributes(region.mask, region.bbox_x, region.bbox_y);
      const auto arr = attrs.to_array();
      s.attributes = Eigen::Map<const VectorD>(arr.data(), RegionAttributes::kDim);
      s.label = ids[win->first];
      s.gap = win->second;
      s.source_id = input.image_id + ":" + std::to_string(region.id);
      sets.t_a.push_back(std::move(s));
    }
  }
  return sets;
}

SelectorModel train_margin(const std::vector<TrainingSample>& samples,
                           const std::vector<AlgorithmId>& algorithms,
                           const SelectorConfig& config) {
  if (samples.size() < 2) throw ConfigError("train_margin: need at least 2 samples");
  const auto labels = label_indices(samples, algorithms);

  SelectorModel model;
  model.variant = "margin";
  model.algorithms = algorithms;
  model.feature_schema = samples.front().features.schema_id;

  const Index feat_dim = samples.front().features.values.size();
  MatrixD features(samples.size(), feat_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.schema_id != model.feature_schema)
      throw ConfigError("train_margin: mixed feature schemas");
    features.row(static_cast<Index>(i)) = samples[i].features.values.transpose();
  }

  // Patch vector: mean of the attribute vectors that exist.
  VectorD patch = VectorD::Zero(RegionAttributes::kDim);
  long n_attr = 0;
  for (const auto& s : samples)
    if (s.attributes) {
      patch += *s.attributes;
      ++n_attr;
    }
  if (n_attr > 0) patch /= static_cast<double>(n_attr);
  model.attr_patch = patch;

  const Index n_pca = std::min<Index>(config.n_pca, feat_dim);
  model.pca = fit_pca(features, n_pca);

  MatrixD inputs(samples.size(), n_pca + RegionAttributes::kDim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    inputs.row(static_cast<Index>(i)).head(n_pca) =
        pca_project(model.pca, samples[i].features.values).transpose();
    inputs.row(static_cast<Index>(i)).tail(RegionAttributes::kDim) =
        (samples[i].attributes ? *samples[i].attributes : patch).transpose();
  }
  compute_standardization(inputs, model.input_mean, model.input_scale);
  for (Index i = 0; i < inputs.rows(); ++i)
    inputs.row(i) = standardize(inputs.row(i).transpose(), model.input_mean, model.input_scale)
                        .transpose();

  const auto fit = fit_one_vs_rest(inputs, labels, static_cast<int>(algorithms.size()),
                                   config.regularization, config.margin_iterations);
  model.weights = fit.weights;
  model.bias = fit.bias;

  if (config.two_model_mode) {
    model.two_model = true;
    model.pca_no_attr = model.pca;
    MatrixD fo(samples.size(), n_pca);
    for (std::size_t i = 0; i < samples.size(); ++i)
      fo.row(static_cast<Index>(i)) =
          pca_project(model.pca_no_attr, samples[i].features.values).transpose();
    compute_standardization(fo, model.input_mean_no_attr, model.input_scale_no_attr);
    for (Index i = 0; i < fo.rows(); ++i)
      fo.row(i) = standardize(fo.row(i).transpose(), model.input_mean_no_attr,
                              model.input_scale_no_attr)
                      .transpose();
    const auto fit2 = fit_one_vs_rest(fo, labels, static_cast<int>(algorithms.size()),
                                      config.regularization, config.margin_iterations);
    model.weights_no_attr = fit2.weights;
    model.bias_no_attr = fit2.bias;
  }
  return model;
}

SelectorModel train_bn(const std::vector<TrainingSample>& samples,
                       const std::vector<AlgorithmId>& algorithms, const SelectorConfig& config) {
  if (config.bn_bins < 2) throw ConfigError("train_bn: bins must be >= 2");
  if (config.bn_feature_nodes > config.max_feature_nodes ||
      config.bn_attribute_nodes > config.max_feature_nodes)
    throw ConfigError("train_bn: node count exceeds the max_feature_nodes cap");
  if (samples.size() < 2) throw ConfigError("train_bn: need at least 2 samples");
  const auto labels = label_indices(samples, algorithms);
  const int n_alg = static_cast<int>(algorithms.size());

  SelectorModel model;
  model.variant = "bn";
  model.algorithms = algorithms;
  model.feature_schema = samples.front().features.schema_id;
  model.bins = config.bn_bins;

  const Index feat_dim = samples.front().features.values.size();
  MatrixD features(samples.size(), feat_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.schema_id != model.feature_schema)
      throw ConfigError("train_bn: mixed feature schemas");
    features.row(static_cast<Index>(i)) = samples[i].features.values.transpose();
  }
  model.feature_dims = top_mi_dims(features, labels, n_alg, config.bn_bins,
                                   config.bn_feature_nodes, model.feature_min, model.feature_max);
  if (model.feature_dims.empty()) throw ConfigError("train_bn: no usable feature dimension");

  // Attribute dimensions come from the samples that actually carry them.
  std::vector<std::size_t> with_attrs;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].attributes) with_attrs.push_back(i);
  if (!with_attrs.empty()) {
    MatrixD attrs(with_attrs.size(), RegionAttributes::kDim);
    std::vector<int> attr_labels;
    for (std::size_t k = 0; k < with_attrs.size(); ++k) {
      attrs.row(static_cast<Index>(k)) = samples[with_attrs[k]].attributes->transpose();
      attr_labels.push_back(labels[with_attrs[k]]);
    }
    model.attribute_dims = top_mi_dims(attrs, attr_labels, n_alg, config.bn_bins,
                                       config.bn_attribute_nodes, model.attribute_min,
                                       model.attribute_max);
  }

  const int hidden_card = config.bn_hidden_card > 0 ? config.bn_hidden_card : n_alg;

  // Structure: observed inputs -> one hidden node per input group -> algorithm.
  DiscreteBayesNet net;
  model.app_node = net.add_node("app", 1);
  for (std::size_t k = 0; k < model.feature_dims.size(); ++k)
    model.feature_nodes.push_back(
        net.add_node("feat" + std::to_string(model.feature_dims[k]), config.bn_bins));
  for (std::size_t k = 0; k < model.attribute_dims.size(); ++k)
    model.attribute_nodes.push_back(
        net.add_node("attr" + std::to_string(model.attribute_dims[k]), config.bn_bins));

  const int h_app = net.add_node("h_app", hidden_card, {model.app_node});
  const int h_feat = net.add_node("h_feat", hidden_card, model.feature_nodes);
  model.hidden_nodes = {h_app, h_feat};
  std::vector<int> alg_parents = {h_app, h_feat};
  if (!model.attribute_nodes.empty()) {
    const int h_attr = net.add_node("h_attr", hidden_card, model.attribute_nodes);
    model.hidden_nodes.push_back(h_attr);
    alg_parents.push_back(h_attr);
  }
  model.algorithm_node = net.add_node("algorithm", n_alg, alg_parents);

  std::vector<std::vector<int>> data;
  data.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::vector<int> row(net.size(), kMissing);
    row[static_cast<std::size_t>(model.app_node)] = 0;
    for (std::size_t k = 0; k < model.feature_dims.size(); ++k)
      row[static_cast<std::size_t>(model.feature_nodes[k])] =
          discretize(samples[i].features.values[model.feature_dims[k]], config.bn_bins,
                     model.feature_min[static_cast<Index>(k)],
                     model.feature_max[static_cast<Index>(k)]) -
          1;
    if (samples[i].attributes)
      for (std::size_t k = 0; k < model.attribute_dims.size(); ++k)
        row[static_cast<std::size_t>(model.attribute_nodes[k])] =
            discretize((*samples[i].attributes)[model.attribute_dims[k]], config.bn_bins,
                       model.attribute_min[static_cast<Index>(k)],
                       model.attribute_max[static_cast<Index>(k)]) -
            1;
    row[static_cast<std::size_t>(model.algorithm_node)] = labels[i];
    data.push_back(std::move(row));
  }

  DiscreteBayesNet::EmOptions em;
  em.tolerance = config.em_tolerance;
  em.max_iterations = config.em_max_iterations;
  em.seed = config.seed;
  const auto result = net.fit_em(data, em);
  model.em_converged = result.converged;
  model.em_iterations = result.iterations;
  model.net = std::move(net);
  return model;
}

SelectionResult select(const SelectorModel& model, const FeatureVector& features,
                       const std::optional<VectorD>& attributes) {
  if (features.schema_id != model.feature_schema)
    throw ConfigError("select: feature schema mismatch (" + features.schema_id + " vs model " +
                      model.feature_schema + ")");
  if (attributes && attributes->size() != RegionAttributes::kDim)
    throw ConfigError("select: attribute vector dimension mismatch");

  SelectionResult result;
  if (model.variant == "margin") {
    if (model.two_model && !attributes) {
      const VectorD z = margin_input(model.pca_no_attr, model.input_mean_no_attr,
                                     model.input_scale_no_attr, features.values, VectorD(), false);
      result.scores = model.weights_no_attr * z + model.bias_no_attr;
    } else {
      const VectorD& attrs = attributes ? *attributes : model.attr_patch;
      const VectorD z = margin_input(model.pca, model.input_mean, model.input_scale,
                                     features.values, attrs, true);
      result.scores = model.weights * z + model.bias;
    }
  } else if (model.variant == "bn") {
    std::vector<int> evidence(model.net.size(), kMissing);
    evidence[static_cast<std::size_t>(model.app_node)] = 0;
    for (std::size_t k = 0; k < model.feature_dims.size(); ++k)
      evidence[static_cast<std::size_t>(model.feature_nodes[k])] =
          discretize(features.values[model.feature_dims[k]], model.bins,
                     model.feature_min[static_cast<Index>(k)],
                     model.feature_max[static_cast<Index>(k)]) -
          1;
    if (attributes)
      for (std::size_t k = 0; k < model.attribute_dims.size(); ++k)
        evidence[static_cast<std::size_t>(model.attribute_nodes[k])] =
            discretize((*attributes)[model.attribute_dims[k]], model.bins,
                       model.attribute_min[static_cast<Index>(k)],
                       model.attribute_max[static_cast<Index>(k)]) -
            1;
    result.scores = model.net.posterior(model.algorithm_node, evidence);
  } else {
    throw ConfigError("unknown selector variant " + model.variant);
  }

  result.algorithm = model.algorithms[static_cast<std::size_t>(argmax_first(result.scores))];
  return result;
}

void save_selector(const std::string& path, const SelectorModel& model) {
  ordered_json j;
  j["format"] = "segsel-selector";
  j["version"] = 1;
  j["variant"] = model.variant;
  j["algorithms"] = model.algorithms;
  j["feature_schema"] = model.feature_schema;

  if (model.features) j["features"] = feature_config_to_json(*model.features);

  ordered_json means;
  means["counts"] = model.attribute_means.counts;
  ordered_json mrows = ordered_json::array();
  for (const auto& m : model.attribute_means.means)
    mrows.push_back(std::vector<double>(m.begin(), m.end()));
  means["means"] = mrows;
  j["attribute_means"] = means;

  if (model.variant == "margin") {
    j["pca"] = pca_to_json(model.pca);
    j["attr_patch"] = to_std(model.attr_patch);
    j["input_mean"] = to_std(model.input_mean);
    j["input_scale"] = to_std(model.input_scale);
    j["weights"] = to_std(model.weights);
    j["weights_rows"] = model.weights.rows();
    j["bias"] = to_std(model.bias);
    j["two_model"] = model.two_model;
    if (model.two_model) {
      j["pca_no_attr"] = pca_to_json(model.pca_no_attr);
      j["input_mean_no_attr"] = to_std(model.input_mean_no_attr);
      j["input_scale_no_attr"] = to_std(model.input_scale_no_attr);
      j["weights_no_attr"] = to_std(model.weights_no_attr);
      j["bias_no_attr"] = to_std(model.bias_no_attr);
    }
  } else {
    j["bins"] = model.bins;
    j["feature_dims"] = model.feature_dims;
    j["attribute_dims"] = model.attribute_dims;
    j["feature_min"] = to_std(model.feature_min);
    j["feature_max"] = to_std(model.feature_max);
    j["attribute_min"] = to_std(model.attribute_min);
    j["attribute_max"] = to_std(model.attribute_max);
    j["app_node"] = model.app_node;
    j["algorithm_node"] = model.algorithm_node;
    j["feature_nodes"] = model.feature_nodes;
    j["attribute_nodes"] = model.attribute_nodes;
    j["hidden_nodes"] = model.hidden_nodes;
    j["em_converged"] = model.em_converged;
    j["em_iterations"] = model.em_iterations;
    ordered_json nodes = ordered_json::array();
    for (std::size_t i = 0; i < model.net.size(); ++i) {
      const auto& n = model.net.node(static_cast<int>(i));
      nodes.push_back({{"name", n.name},
                       {"cardinality", n.cardinality},
                       {"parents", n.parents},
                       {"cpt", to_std(n.cpt)},
                       {"cpt_rows", n.cpt.rows()}});
    }
    j["nodes"] = nodes;
  }

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

SelectorModel load_selector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("format", "") != "segsel-selector")
    throw ParseError(path + ": not a selector model file");

  SelectorModel model;
  model.variant = j.at("variant").get<std::string>();
  model.algorithms = j.at("algorithms").get<std::vector<AlgorithmId>>();
  model.feature_schema = j.at("feature_schema").get<std::string>();
  if (j.contains("features")) model.features = feature_config_from_json(j.at("features"));

  const auto& means = j.at("attribute_means");
  model.attribute_means.counts = means.at("counts").get<std::vector<long>>();
  for (const auto& row : means.at("means")) {
    const auto v = row.get<std::vector<double>>();
    RegionAttributes::Array a{};
    std::copy(v.begin(), v.end(), a.begin());
    model.attribute_means.means.push_back(a);
  }

  if (model.variant == "margin") {
    model.pca = pca_from_json(j.at("pca"));
    model.attr_patch = vec_from(j.at("attr_patch"));
    model.input_mean = vec_from(j.at("input_mean"));
    model.input_scale = vec_from(j.at("input_scale"));
    const auto w = j.at("weights").get<std::vector<double>>();
    const Index rows = j.at("weights_rows").get<Index>();
    model.weights = Eigen::Map<const MatrixD>(w.data(), rows, static_cast<Index>(w.size()) / rows);
    model.bias = vec_from(j.at("bias"));
    model.two_model = j.value("two_model", false);
    if (model.two_model) {
      model.pca_no_attr = pca_from_json(j.at("pca_no_attr"));
      model.input_mean_no_attr = vec_from(j.at("input_mean_no_attr"));
      model.input_scale_no_attr = vec_from(j.at("input_scale_no_attr"));
      const auto w2 = j.at("weights_no_attr").get<std::vector<double>>();
      model.weights_no_attr =
          Eigen::Map<const MatrixD>(w2.data(), rows, static_cast<Index>(w2.size()) / rows);
      model.bias_no_attr = vec_from(j.at("bias_no_attr"));
    }
  } else if (model.variant == "bn") {
    model.bins = j.at("bins").get<int>();
    model.feature_dims = j.at("feature_dims").get<std::vector<int>>();
    model.attribute_dims = j.at("attribute_dims").get<std::vector<int>>();
    model.feature_min = vec_from(j.at("feature_min"));
    model.feature_max = vec_from(j.at("feature_max"));
    model.attribute_min = vec_from(j.at("attribute_min"));
    model.attribute_max = vec_from(j.at("attribute_max"));
    model.app_node = j.at("app_node").get<int>();
    model.algorithm_node = j.at("algorithm_node").get<int>();
    model.feature_nodes = j.at("feature_nodes").get<std::vector<int>>();
    model.attribute_nodes = j.at("attribute_nodes").get<std::vector<int>>();
    model.hidden_nodes = j.at("hidden_nodes").get<std::vector<int>>();
    model.em_converged = j.value("em_converged", true);
    model.em_iterations = j.value("em_iterations", 0);
    for (const auto& n : j.at("nodes")) {
      const int id = model.net.add_node(n.at("name").get<std::string>(),
                                        n.at("cardinality").get<int>(),
                                        n.at("parents").get<std::vector<int>>());
      const auto flat = n.at("cpt").get<std::vector<double>>();
      const Index rows = n.at("cpt_rows").get<Index>();
      model.net.set_cpt(id, Eigen::Map<const MatrixD>(flat.data(), rows,
                                                      static_cast<Index>(flat.size()) / rows));
    }
    model.net.validate();
  } else {
    throw ParseError(path + ": unknown selector variant " + model.variant);
  }
  return model;
}

}  // namespace segsel
