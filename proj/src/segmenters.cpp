#include "segsel/segmenters.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "segsel/error.hpp"

namespace fs = std::filesystem;

namespace segsel {
namespace {

using ordered_json = nlohmann::ordered_json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 step over the combined state
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t string_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// --- noisy oracle ------------------------------------------------------------

// Disc structuring element; outside the crop counts as background.
MaskPlane morph(const MaskPlane& mask, int radius, bool dilate) {
  if (radius <= 0) return mask;
  const Index h = mask.rows(), w = mask.cols();
  MaskPlane out = MaskPlane::Zero(h, w);
  const int r2 = radius * radius;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (!dilate && !mask(y, x)) continue;
      bool hit = false;
      for (int dy = -radius; dy <= radius && !hit; ++dy)
        for (int dx = -radius; dx <= radius && !hit; ++dx) {
          if (dy * dy + dx * dx > r2) continue;
          const Index ny = y + dy, nx = x + dx;
          const bool inside = ny >= 0 && ny < h && nx >= 0 && nx < w && mask(ny, nx) != 0;
          if (dilate ? inside : !inside) hit = true;
        }
      out(y, x) = dilate ? (hit ? 1 : 0) : (hit ? 0 : 1);
    }
  return out;
}

LabelMap run_noisy_oracle(const NoisyOracleParams& params, const SegmenterInput& input,
                          VocabPtr vocab, const BackendRuntime& runtime) {
  if (!input.ground_truth)
    throw BackendError(BackendError::Kind::launch_failure,
                       "noisy_oracle needs ground truth for " + input.image_id);
  const LabelMap& gt = *input.ground_truth;
  const std::uint8_t bg = vocab->background_id;

  std::set<int> strong(params.strong_categories.begin(), params.strong_categories.end());
  std::mt19937_64 rng(mix_seed(mix_seed(params.base_seed, runtime.seed), string_hash(input.image_id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  LabelMap out;
  out.vocab = vocab;
  out.labels = PlaneU8::Constant(gt.height(), gt.width(), bg);

  for (const auto& region : extract_regions(gt)) {
    const bool is_strong = strong.count(region.category) != 0;
    std::uint8_t label = region.category;
    MaskPlane mask = region.mask;

    if (!is_strong) {
      if (unit(rng) < params.miss_rate) continue;  // dropped entirely
      for (const auto& [from, to] : params.confusions)
        if (from == region.category) label = static_cast<std::uint8_t>(to);
      if (params.erode_px > 0) mask = morph(mask, params.erode_px, false);
      if (params.dilate_px > 0) mask = morph(mask, params.dilate_px, true);
    }

    for (Index y = 0; y < mask.rows(); ++y)
      for (Index x = 0; x < mask.cols(); ++x)
        if (mask(y, x)) out.labels(region.bbox_y + y, region.bbox_x + x) = label;
  }
  return out;
}

// --- color k-means -----------------------------------------------------------

LabelMap run_color_kmeans(const ordered_json& params, const SegmenterInput& input, VocabPtr vocab,
                          const BackendRuntime& runtime) {
  const int k = params.value("k", 4);
  const int iterations = params.value("iterations", 15);
  const double threshold = params.value("threshold", 1e9);
  if (k < 1) throw BackendError(BackendError::Kind::launch_failure, "color_kmeans: k < 1");
  if (!params.contains("palette"))
    throw BackendError(BackendError::Kind::launch_failure, "color_kmeans: missing palette");
  const auto palette = params.at("palette").get<std::vector<std::vector<double>>>();

  const ImageRgb& img = input.image;
  const Index n = img.r.size();
  MatrixD pixels(n, 3);
  for (Index i = 0; i < n; ++i) {
    pixels(i, 0) = img.r.data()[i];
    pixels(i, 1) = img.g.data()[i];
    pixels(i, 2) = img.b.data()[i];
  }

  std::mt19937_64 rng(mix_seed(runtime.seed, string_hash(input.image_id)));
  std::uniform_int_distribution<Index> pick(0, n - 1);
  MatrixD centroids(k, 3);
  for (int c = 0; c < k; ++c) centroids.row(c) = pixels.row(pick(rng));

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    for (Index i = 0; i < n; ++i) {
      double best = 1e18;
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d = (pixels.row(i) - centroids.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = arg;
    }
    MatrixD sums = MatrixD::Zero(k, 3);
    VectorD counts = VectorD::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += pixels.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0.0) centroids.row(c) = sums.row(c) / counts[c];
  }

  // Clusters map to the nearest palette color, far ones to background.
  std::vector<std::uint8_t> cluster_label(static_cast<std::size_t>(k), vocab->background_id);
  for (int c = 0; c < k; ++c) {
    double best = 1e18;
    std::size_t arg = 0;
    for (std::size_t p = 0; p < palette.size(); ++p) {
      const double d = std::pow(centroids(c, 0) - palette[p][0], 2) +
                       std::pow(centroids(c, 1) - palette[p][1], 2) +
                       std::pow(centroids(c, 2) - palette[p][2], 2);
      if (d < best) {
        best = d;
        arg = p;
      }
    }
    if (best <= threshold && arg < vocab->size())
      cluster_label[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(arg);
  }

  LabelMap out;
  out.vocab = vocab;
  out.labels.resize(img.height(), img.width());
  for (Index i = 0; i < n; ++i)
    out.labels.data()[i] = cluster_label[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
  return out;
}

// --- external process --------------------------------------------------------

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stderr_text;
};

ProcessResult run_process(const std::vector<std::string>& argv, double timeout_seconds) {
  int err_pipe[2];
  if (pipe(err_pipe) != 0)
    throw BackendError(BackendError::Kind::launch_failure, "pipe() failed");

  const pid_t pid = fork();
  if (pid < 0) {
    close(err_pipe[0]);
    close(err_pipe[1]);
    throw BackendError(BackendError::Kind::launch_failure, "fork() failed");
  }
  if (pid == 0) {
    close(err_pipe[0]);
    dup2(err_pipe[1], STDERR_FILENO);
    close(err_pipe[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }

  close(err_pipe[1]);
  fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

  ProcessResult result;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  char buf[4096];
  int status = 0;
  bool finished = false;
  while (!finished) {
    ssize_t got;
    while ((got = read(err_pipe[0], buf, sizeof buf)) > 0)
      result.stderr_text.append(buf, static_cast<std::size_t>(got));

    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      finished = true;
      break;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      result.timed_out = true;
      finished = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ssize_t got;
  while ((got = read(err_pipe[0], buf, sizeof buf)) > 0)
    result.stderr_text.append(buf, static_cast<std::size_t>(got));
  close(err_pipe[0]);

  if (!result.timed_out && WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

LabelMap run_external(const BackendSpec& spec, const SegmenterInput& input, VocabPtr vocab,
                      const BackendRuntime& runtime) {
  std::vector<std::string> cmd;
  const auto& jcmd = spec.params.at("cmd");
  if (jcmd.is_string())
    cmd.push_back(jcmd.get<std::string>());
  else
    cmd = jcmd.get<std::vector<std::string>>();
  if (cmd.empty())
    throw BackendError(BackendError::Kind::launch_failure, spec.id + ": empty command");

  fs::path work = runtime.work_dir.empty() ? fs::temp_directory_path() : fs::path(runtime.work_dir);
  fs::create_directories(work);
  const std::string stem = input.image_id + "_" + spec.id;
  const std::string in_path = (work / (stem + "_in.png")).string();
  const std::string out_path = (work / (stem + "_out.png")).string();
  const std::string vocab_path = (work / (stem + "_vocab.txt")).string();

  save_image(in_path, input.image);
  {
    std::ofstream v(vocab_path);
    for (const auto& n : vocab->names) v << n << '\n';
  }
  std::error_code ec;
  fs::remove(out_path, ec);

  cmd.push_back(in_path);
  cmd.push_back(out_path);
  cmd.push_back(vocab_path);

  const ProcessResult proc = run_process(cmd, runtime.timeout_seconds);
  if (runtime.stderr_capture) *runtime.stderr_capture += proc.stderr_text;
  if (proc.timed_out)
    throw BackendError(BackendError::Kind::timeout,
                       spec.id + " timed out on " + input.image_id);
  if (proc.exit_code != 0)
    throw BackendError(BackendError::Kind::nonzero_exit,
                       spec.id + " exited with " + std::to_string(proc.exit_code) + " on " +
                           input.image_id + (proc.stderr_text.empty() ? "" : ": " + proc.stderr_text));

  LabelMap out;
  out.vocab = vocab;
  try {
    out.labels = load_label_raster(out_path);
  } catch (const Error& e) {
    throw BackendError(BackendError::Kind::bad_output, spec.id + ": " + e.what());
  }
  return out;
}

}  // namespace

int PortfolioSpec::index_of(const AlgorithmId& id) const {
  for (std::size_t i = 0; i < backends.size(); ++i)
    if (backends[i].id == id) return static_cast<int>(i);
  return -1;
}

const BackendSpec& PortfolioSpec::backend(const AlgorithmId& id) const {
  const int i = index_of(id);
  if (i < 0) throw ConfigError("portfolio has no backend " + id);
  return backends[static_cast<std::size_t>(i)];
}

std::vector<AlgorithmId> PortfolioSpec::ids() const {
  std::vector<AlgorithmId> out;
  for (const auto& b : backends) out.push_back(b.id);
  return out;
}

void PortfolioSpec::validate() const {
  if (backends.size() < 2) throw ConfigError("portfolio needs at least 2 algorithms");
  std::set<std::string> seen;
  for (const auto& b : backends) {
    if (b.id.empty()) throw ConfigError("backend with empty id");
    if (!seen.insert(b.id).second) throw ConfigError("duplicate backend id " + b.id);
    if (b.kind != "external" && b.kind != "noisy_oracle" && b.kind != "color_kmeans")
      throw ConfigError("unknown backend kind " + b.kind);
  }
}

void save_portfolio(const std::string& path, const PortfolioSpec& portfolio) {
  ordered_json j;
  j["format"] = "segsel-portfolio";
  j["version"] = 1;
  auto& arr = j["backends"] = ordered_json::array();
  for (const auto& b : portfolio.backends)
    arr.push_back({{"id", b.id}, {"kind", b.kind}, {"params", b.params}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

PortfolioSpec load_portfolio(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("format", "") != "segsel-portfolio")
    throw ParseError(path + ": not a portfolio file");
  PortfolioSpec p;
  for (const auto& b : j.at("backends"))
    p.backends.push_back({b.at("id").get<std::string>(), b.at("kind").get<std::string>(),
                          b.value("params", ordered_json::object())});
  p.validate();
  return p;
}

LabelMap run_segmenter(const PortfolioSpec& portfolio, const AlgorithmId& id,
                       const SegmenterInput& input, VocabPtr vocab,
                       const BackendRuntime& runtime) {
  if (input.image.empty()) throw ConfigError("run_segmenter: empty image");
  const BackendSpec& spec = portfolio.backend(id);

  LabelMap out;
  if (spec.kind == "noisy_oracle")
    out = run_noisy_oracle(NoisyOracleParams::from_json(spec.params), input, vocab, runtime);
  else if (spec.kind == "color_kmeans")
    out = run_color_kmeans(spec.params, input, vocab, runtime);
  else if (spec.kind == "external")
    out = run_external(spec, input, vocab, runtime);
  else
    throw ConfigError("unknown backend kind " + spec.kind);

  if (out.height() != input.image.height() || out.width() != input.image.width())
    throw BackendError(BackendError::Kind::dimension_mismatch,
                       id + " produced a " + std::to_string(out.width()) + "x" +
                           std::to_string(out.height()) + " map for a " +
                           std::to_string(input.image.width()) + "x" +
                           std::to_string(input.image.height()) + " image");
  const auto limit = static_cast<std::uint8_t>(vocab->size() - 1);
  if ((out.labels > limit).any())
    throw BackendError(BackendError::Kind::label_out_of_vocab,
                       id + " produced labels outside the vocabulary");
  return out;
}

ordered_json NoisyOracleParams::to_json() const {
  ordered_json confusion_pairs = ordered_json::array();
  for (const auto& [from, to] : confusions) confusion_pairs.push_back({from, to});
  return {{"strong", strong_categories}, {"miss_rate", miss_rate},
          {"confusions", confusion_pairs}, {"erode", erode_px},
          {"dilate", dilate_px},          {"base_seed", base_seed}};
}

NoisyOracleParams NoisyOracleParams::from_json(const ordered_json& j) {
  NoisyOracleParams p;
  p.strong_categories = j.value("strong", std::vector<int>{});
  p.miss_rate = j.value("miss_rate", 0.0);
  if (p.miss_rate < 0.0 || p.miss_rate > 1.0)
    throw ConfigError("noisy_oracle: miss_rate outside [0,1]");
  p.erode_px = j.value("erode", 0);
  p.dilate_px = j.value("dilate", 0);
  if (p.erode_px < 0 || p.dilate_px < 0)
    throw ConfigError("noisy_oracle: negative morphology radius");
  p.base_seed = j.value("base_seed", std::uint64_t{0});
  if (j.contains("confusions"))
    for (const auto& c : j.at("confusions"))
      p.confusions.emplace_back(c.at(0).get<int>(), c.at(1).get<int>());
  return p;
}

PortfolioSpec make_synthetic_portfolio(const SyntheticPortfolioSpec& spec) {
  if (spec.n_backends < 2) throw ConfigError("synthetic portfolio needs >= 2 backends");
  if (spec.n_categories < 3) throw ConfigError("synthetic portfolio needs >= 3 categories");

  PortfolioSpec portfolio;
  for (int b = 0; b < spec.n_backends; ++b) {
    NoisyOracleParams params;
    params.miss_rate = spec.weak_miss_rate;
    params.erode_px = spec.weak_erode_px;
    params.base_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(b));

    std::vector<int> strong;
    for (std::size_t c = 1; c < spec.n_categories; ++c)
      if (static_cast<int>((c - 1) % static_cast<std::size_t>(spec.n_backends)) == b)
        strong.push_back(static_cast<int>(c));
    params.strong_categories = strong;

    if (spec.confuse_weak && !strong.empty()) {
      // Weak categories get relabeled to this backend's nearest strong one.
      for (std::size_t c = 1; c < spec.n_categories; ++c) {
        if (std::find(strong.begin(), strong.end(), static_cast<int>(c)) != strong.end()) continue;
        int target = strong.front();
        for (int s : strong)
          if (std::abs(s - static_cast<int>(c)) < std::abs(target - static_cast<int>(c))) target = s;
        params.confusions.emplace_back(static_cast<int>(c), target);
      }
    }

    portfolio.backends.push_back(
        {"synth" + std::string(1, static_cast<char>('A' + b)), "noisy_oracle", params.to_json()});
  }
  portfolio.validate();
  return portfolio;
}

}  // namespace segsel
