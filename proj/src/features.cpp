#include "segsel/features.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

#include "segsel/error.hpp"

namespace segsel {
namespace {

constexpr double kSobelMax = 4.0 * std::numbers::sqrt2;  // peak response on [0,1] input

void append_histogram(VectorD& out, Index& cursor, const PlaneF& values, double lo, double hi,
                      int bins) {
  VectorD hist = VectorD::Zero(bins);
  const double scale = static_cast<double>(bins) / (hi - lo);
  const float* p = values.data();
  for (Index i = 0; i < values.size(); ++i) {
    int b = static_cast<int>((static_cast<double>(p[i]) - lo) * scale);
    b = b < 0 ? 0 : (b >= bins ? bins - 1 : b);
    hist[b] += 1.0;
  }
  hist /= static_cast<double>(values.size());
  out.segment(cursor, bins) = hist;
  cursor += bins;
}

// Reflected index for out-of-range taps (border handling for convolutions).
// Folds repeatedly, so kernels wider than the raster stay in range.
inline Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

PlaneF convolve_reflect(const PlaneF& src, const MatrixD& kernel) {
  const Index h = src.rows(), w = src.cols();
  const Index kr = kernel.rows() / 2, kc = kernel.cols() / 2;
  PlaneF out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Index ky = 0; ky < kernel.rows(); ++ky) {
        const Index sy = reflect(y + ky - kr, h);
        for (Index kx = 0; kx < kernel.cols(); ++kx)
          acc += kernel(ky, kx) * static_cast<double>(src(sy, reflect(x + kx - kc, w)));
      }
      out(y, x) = static_cast<float>(acc);
    }
  return out;
}

// Zero-mean, L1-normalized even Gabor kernel: |response| stays within [0,1]
// for [0,1] inputs, so histogram ranges are image-independent.
MatrixD gabor_kernel(double lambda, double theta) {
  const double sigma = 0.56 * lambda;
  const double gamma = 0.5;
  const Index radius = std::max<Index>(2, static_cast<Index>(std::ceil(2.5 * sigma)));
  MatrixD k(2 * radius + 1, 2 * radius + 1);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (Index y = -radius; y <= radius; ++y)
    for (Index x = -radius; x <= radius; ++x) {
      const double xr = x * ct + y * st;
      const double yr = -x * st + y * ct;
      const double envelope = std::exp(-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma));
      k(y + radius, x + radius) = envelope * std::cos(2.0 * std::numbers::pi * xr / lambda);
    }
  k.array() -= k.mean();
  const double l1 = k.array().abs().sum();
  if (l1 > 0.0) k /= l1;
  return k;
}

Matrix<std::complex<double>> fft2(const PlaneF& img) {
  const Index h = img.rows(), w = img.cols();
  Eigen::FFT<double> fft;
  Matrix<std::complex<double>> stage(h, w);
  std::vector<double> row(static_cast<std::size_t>(w));
  std::vector<std::complex<double>> row_out(static_cast<std::size_t>(w));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = img(y, x);
    fft.fwd(row_out, row);
    for (Index x = 0; x < w; ++x) stage(y, x) = row_out[static_cast<std::size_t>(x)];
  }
  std::vector<std::complex<double>> col(static_cast<std::size_t>(h)), col_out(static_cast<std::size_t>(h));
  for (Index x = 0; x < w; ++x) {
    for (Index y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = stage(y, x);
    fft.fwd(col_out, col);
    for (Index y = 0; y < h; ++y) stage(y, x) = col_out[static_cast<std::size_t>(y)];
  }
  return stage;
}

void append_fft_radial(VectorD& out, Index& cursor, const PlaneF& lum, int bins) {
  const Index h = lum.rows(), w = lum.cols();
  const auto spectrum = fft2(lum);
  VectorD hist = VectorD::Zero(bins);
  VectorD count = VectorD::Zero(bins);
  const double norm = 1.0 / std::numbers::sqrt2;  // max radial frequency is sqrt(0.5)
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double fy = static_cast<double>(std::min(y, h - y)) / static_cast<double>(h);
      const double fx = static_cast<double>(std::min(x, w - x)) / static_cast<double>(w);
      const double r = std::sqrt(fx * fx + fy * fy) / norm;
      int b = static_cast<int>(r * bins);
      b = b >= bins ? bins - 1 : b;
      hist[b] += std::log1p(std::abs(spectrum(y, x)));
      count[b] += 1.0;
    }
  // Mean per annulus, so outer bins do not dominate by pixel count alone.
  for (int b = 0; b < bins; ++b)
    if (count[b] > 0.0) hist[b] /= count[b];
  const double total = hist.sum();
  if (total > 0.0) hist /= total;
  out.segment(cursor, bins) = hist;
  cursor += bins;
}

void append_wavelet(VectorD& out, Index& cursor, const PlaneF& lum, int bins) {
  const Index h2 = lum.rows() / 2, w2 = lum.cols() / 2;
  if (h2 == 0 || w2 == 0) throw ConfigError("image too small for wavelet block");
  PlaneF ll(h2, w2), lh(h2, w2), hl(h2, w2), hh(h2, w2);
  for (Index y = 0; y < h2; ++y)
    for (Index x = 0; x < w2; ++x) {
      const float a = lum(2 * y, 2 * x), b = lum(2 * y, 2 * x + 1);
      const float c = lum(2 * y + 1, 2 * x), d = lum(2 * y + 1, 2 * x + 1);
      ll(y, x) = (a + b + c + d) / 2.0f;
      lh(y, x) = std::abs(a - b + c - d) / 2.0f;
      hl(y, x) = std::abs(a + b - c - d) / 2.0f;
      hh(y, x) = std::abs(a - b - c + d) / 2.0f;
    }
  append_histogram(out, cursor, ll, 0.0, 2.0, bins);
  append_histogram(out, cursor, lh, 0.0, 1.0, bins);
  append_histogram(out, cursor, hl, 0.0, 1.0, bins);
  append_histogram(out, cursor, hh, 0.0, 1.0, bins);
}

void append_acutance(VectorD& out, Index& cursor, const PlaneF& lum, int bins) {
  MatrixD gx(3, 3), gy(3, 3);
  gx << -1, 0, 1, -2, 0, 2, -1, 0, 1;
  gy << -1, -2, -1, 0, 0, 0, 1, 2, 1;
  const PlaneF rx = convolve_reflect(lum, gx);
  const PlaneF ry = convolve_reflect(lum, gy);
  const PlaneF mag = (rx.square() + ry.square()).sqrt();
  append_histogram(out, cursor, mag, 0.0, kSobelMax, bins);
}

}  // namespace

Index FeatureConfig::dim() const {
  return static_cast<Index>(hist_bins) * 4 + fft_bins +
         static_cast<Index>(gabor_orientations) * gabor_scales * gabor_bins + 4 * wavelet_bins +
         acutance_bins;
}

std::string FeatureConfig::schema_id() const {
  std::ostringstream os;
  os << "img-v1:h" << hist_bins << ":f" << fft_bins << ":g" << gabor_orientations << "x"
     << gabor_scales << "x" << gabor_bins << "@" << gabor_lambda0 << ":w" << wavelet_bins << ":a"
     << acutance_bins;
  return os.str();
}

void FeatureConfig::validate() const {
  if (hist_bins < 2 || fft_bins < 2 || gabor_bins < 2 || wavelet_bins < 2 || acutance_bins < 2)
    throw ConfigError("feature config: all histogram sizes need >= 2 bins");
  if (gabor_orientations < 1 || gabor_scales < 1 || gabor_lambda0 <= 0.0)
    throw ConfigError("feature config: invalid gabor bank");
}

FeatureVector extract_image_features(const ImageRgb& image, const FeatureConfig& config) {
  config.validate();
  if (image.empty()) throw ConfigError("extract_image_features: empty image");

  FeatureVector fv;
  fv.schema_id = config.schema_id();
  fv.values = VectorD::Zero(config.dim());
  Index cursor = 0;

  const PlaneF lum = image.luminance();
  append_histogram(fv.values, cursor, lum, 0.0, 1.0, config.hist_bins);
  append_histogram(fv.values, cursor, image.r, 0.0, 1.0, config.hist_bins);
  append_histogram(fv.values, cursor, image.g, 0.0, 1.0, config.hist_bins);
  append_histogram(fv.values, cursor, image.b, 0.0, 1.0, config.hist_bins);

  append_fft_radial(fv.values, cursor, lum, config.fft_bins);

  for (int s = 0; s < config.gabor_scales; ++s) {
    const double lambda = config.gabor_lambda0 * std::pow(2.0, s);
    for (int o = 0; o < config.gabor_orientations; ++o) {
      const double theta = std::numbers::pi * o / config.gabor_orientations;
      const PlaneF resp = convolve_reflect(lum, gabor_kernel(lambda, theta)).abs();
      append_histogram(fv.values, cursor, resp, 0.0, 1.0, config.gabor_bins);
    }
  }

  append_wavelet(fv.values, cursor, lum, config.wavelet_bins);
  append_acutance(fv.values, cursor, lum, config.acutance_bins);

  if (cursor != config.dim()) throw Error("feature schema dimension bookkeeping is off");
  if (!fv.values.allFinite()) throw Error("non-finite feature value");
  return fv;
}

int discretize(double x, int k, double min_f, double max_f) {
  if (k < 2) throw ConfigError("discretize: k must be >= 2");
  if (!(max_f > min_f)) throw ConfigError("discretize: max_f must exceed min_f");
  if (x <= min_f) return 1;
  if (x > max_f) return k;
  const double step = (max_f - min_f) / static_cast<double>(k);
  const int bin = static_cast<int>(std::ceil((x - min_f) / step));
  return bin < 1 ? 1 : (bin > k ? k : bin);
}

VectorD CategoryAttributeMeans::mean_vector(std::size_t category) const {
  if (!has(category)) throw ConfigError("no attribute mean for category " + std::to_string(category));
  const auto& m = means[category];
  return Eigen::Map<const VectorD>(m.data(), RegionAttributes::kDim);
}

VectorD CategoryAttributeMeans::overall_mean() const {
  VectorD acc = VectorD::Zero(RegionAttributes::kDim);
  long total = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    acc += static_cast<double>(counts[c]) * mean_vector(c);
    total += counts[c];
  }
  if (total == 0) throw ConfigError("attribute mean table is empty");
  return acc / static_cast<double>(total);
}

CategoryAttributeMeans category_attribute_means(
    const std::vector<std::pair<std::uint8_t, RegionAttributes>>& samples,
    std::size_t n_categories) {
  CategoryAttributeMeans out;
  out.counts.assign(n_categories, 0);
  out.means.assign(n_categories, RegionAttributes::Array{});
  for (const auto& [cat, attrs] : samples) {
    if (cat >= n_categories) throw ConfigError("attribute sample category out of range");
    const auto v = attrs.to_array();
    auto& m = out.means[cat];
    for (int i = 0; i < RegionAttributes::kDim; ++i) m[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
    ++out.counts[cat];
  }
  for (std::size_t c = 0; c < n_categories; ++c) {
    if (out.counts[c] == 0) continue;
    for (auto& x : out.means[c]) x /= static_cast<double>(out.counts[c]);
  }
  return out;
}

PcaModel fit_pca(const MatrixD& samples, Index n_components) {
  if (samples.rows() < 2) throw ConfigError("fit_pca: need at least 2 samples");
  if (n_components < 1 || n_components > samples.cols())
    throw ConfigError("fit_pca: invalid component count");

  PcaModel model;
  model.mean = samples.colwise().mean();
  const MatrixD centered = samples.rowwise() - model.mean.transpose();
  const MatrixD cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  if (cov.diagonal().maxCoeff() <= 0.0)
    throw ConfigError("fit_pca: degenerate sample cloud (zero variance)");

  Eigen::SelfAdjointEigenSolver<MatrixD> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("fit_pca: eigensolver failed");

  // SelfAdjointEigenSolver sorts ascending; take the trailing columns.
  model.components.resize(n_components, samples.cols());
  model.explained_variance.resize(n_components);
  for (Index i = 0; i < n_components; ++i) {
    const Index src = samples.cols() - 1 - i;
    VectorD axis = solver.eigenvectors().col(src);
    // Deterministic sign: largest-magnitude coefficient is positive.
    Index imax = 0;
    axis.cwiseAbs().maxCoeff(&imax);
    if (axis[imax] < 0.0) axis = -axis;
    model.components.row(i) = axis.transpose();
    model.explained_variance[i] = std::max(0.0, solver.eigenvalues()[src]);
  }
  return model;
}

VectorD pca_project(const PcaModel& model, const VectorD& v) {
  if (v.size() != model.input_dim()) throw ConfigError("pca_project: dimension mismatch");
  return model.components * (v - model.mean);
}

using ordered_json = nlohmann::ordered_json;

namespace {

void write_json_file(const std::string& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

ordered_json read_json_file(const std::string& path, const char* expected_format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("format", "") != expected_format)
    throw ParseError(path + ": expected a " + std::string(expected_format) + " file");
  return j;
}

}  // namespace

ordered_json feature_config_to_json(const FeatureConfig& config) {
  return {{"format", "segsel-features"},
          {"version", 1},
          {"schema", config.schema_id()},
          {"dim", config.dim()},
          {"hist_bins", config.hist_bins},
          {"fft_bins", config.fft_bins},
          {"gabor_orientations", config.gabor_orientations},
          {"gabor_scales", config.gabor_scales},
          {"gabor_lambda0", config.gabor_lambda0},
          {"gabor_bins", config.gabor_bins},
          {"wavelet_bins", config.wavelet_bins},
          {"acutance_bins", config.acutance_bins}};
}

FeatureConfig feature_config_from_json(const ordered_json& j) {
  FeatureConfig config;
  config.hist_bins = j.value("hist_bins", config.hist_bins);
  config.fft_bins = j.value("fft_bins", config.fft_bins);
  config.gabor_orientations = j.value("gabor_orientations", config.gabor_orientations);
  config.gabor_scales = j.value("gabor_scales", config.gabor_scales);
  config.gabor_lambda0 = j.value("gabor_lambda0", config.gabor_lambda0);
  config.gabor_bins = j.value("gabor_bins", config.gabor_bins);
  config.wavelet_bins = j.value("wavelet_bins", config.wavelet_bins);
  config.acutance_bins = j.value("acutance_bins", config.acutance_bins);
  config.validate();
  if (j.contains("schema") && j.at("schema").get<std::string>() != config.schema_id())
    throw ParseError("feature config schema id does not match its parameters");
  return config;
}

void save_feature_config(const std::string& path, const FeatureConfig& config) {
  write_json_file(path, feature_config_to_json(config));
}

FeatureConfig load_feature_config(const std::string& path) {
  return feature_config_from_json(read_json_file(path, "segsel-features"));
}

ordered_json pca_to_json(const PcaModel& model) {
  return {{"format", "segsel-pca"},
          {"version", 1},
          {"dim", model.input_dim()},
          {"n_components", model.n_components()},
          {"mean", std::vector<double>(model.mean.data(), model.mean.data() + model.mean.size())},
          {"components",
           std::vector<double>(model.components.data(),
                               model.components.data() + model.components.size())},
          {"explained_variance",
           std::vector<double>(model.explained_variance.data(),
                               model.explained_variance.data() + model.explained_variance.size())}};
}

PcaModel pca_from_json(const ordered_json& j) {
  PcaModel model;
  const auto mean = j.at("mean").get<std::vector<double>>();
  model.mean = Eigen::Map<const VectorD>(mean.data(), static_cast<Index>(mean.size()));
  const auto comp = j.at("components").get<std::vector<double>>();
  const Index rows = j.at("n_components").get<Index>();
  const Index cols = j.at("dim").get<Index>();
  if (static_cast<Index>(comp.size()) != rows * cols || model.mean.size() != cols)
    throw ParseError("pca model has inconsistent dimensions");
  model.components = Eigen::Map<const MatrixD>(comp.data(), rows, cols);
  const auto var = j.at("explained_variance").get<std::vector<double>>();
  model.explained_variance = Eigen::Map<const VectorD>(var.data(), static_cast<Index>(var.size()));
  return model;
}

void save_pca(const std::string& path, const PcaModel& model) {
  write_json_file(path, pca_to_json(model));
}

PcaModel load_pca(const std::string& path) {
  return pca_from_json(read_json_file(path, "segsel-pca"));
}

}  // namespace segsel
