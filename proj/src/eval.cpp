#include "segsel/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "segsel/error.hpp"

namespace segsel {
namespace {

void require_same_shape(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ConfigError("label map dimension mismatch");
}

}  // namespace

std::optional<double> CategoryCounts::fvalue() const {
  if (absent()) return std::nullopt;
  if (tp == 0) return 0.0;  // P + R == 0 only when there are no true positives
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

CategoryCounts count_category(const LabelMap& pred, const LabelMap& gt, std::uint8_t category) {
  require_same_shape(pred, gt);
  CategoryCounts c;
  const std::uint8_t* pp = pred.labels.data();
  const std::uint8_t* pg = gt.labels.data();
  for (Index i = 0; i < pred.labels.size(); ++i) {
    const bool in_pred = pp[i] == category;
    const bool in_gt = pg[i] == category;
    c.tp += in_pred && in_gt;
    c.fp += in_pred && !in_gt;
    c.fn += !in_pred && in_gt;
  }
  return c;
}

std::optional<double> fvalue(const LabelMap& pred, const LabelMap& gt, std::uint8_t category) {
  return count_category(pred, gt, category).fvalue();
}

double image_score(const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred, gt);
  const std::size_t n_cats = gt.vocab->size();
  std::vector<char> present(n_cats, 0);
  const std::uint8_t* pg = gt.labels.data();
  for (Index i = 0; i < gt.labels.size(); ++i) present[pg[i]] = 1;

  double sum = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < n_cats; ++c) {
    if (!present[c]) continue;
    sum += *fvalue(pred, gt, static_cast<std::uint8_t>(c));
    ++n;
  }
  if (n == 0) throw ConfigError("image_score: ground truth has no pixels");
  return sum / n;
}

EvalReport portfolio_report(const std::vector<LabelMap>& gts,
                            const std::vector<MethodResults>& methods, Pooling pooling) {
  if (gts.empty()) throw ConfigError("portfolio_report: empty dataset");
  if (methods.empty()) throw ConfigError("portfolio_report: no methods");
  for (const auto& m : methods)
    if (m.maps.size() != gts.size())
      throw ConfigError("portfolio_report: method " + m.name + " is missing results");

  const auto vocab = gts.front().vocab;
  const std::size_t n_cats = vocab->size();
  const std::size_t n_methods = methods.size();

  EvalReport report;
  report.categories = vocab->names;
  report.f.assign(n_methods, std::vector<std::optional<double>>(n_cats));
  report.averages.assign(n_methods, 0.0);
  report.wins.assign(n_methods, 0);
  report.per_image.assign(n_methods, std::vector<double>(gts.size(), 0.0));
  for (const auto& m : methods) report.methods.push_back(m.name);

  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    std::vector<CategoryCounts> pooled(n_cats);
    std::vector<double> macro_sum(n_cats, 0.0);
    std::vector<long> macro_n(n_cats, 0);
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const LabelMap& pred = methods[mi].maps[i];
      report.per_image[mi][i] = image_score(pred, gts[i]);
      for (std::size_t c = 0; c < n_cats; ++c) {
        const CategoryCounts counts = count_category(pred, gts[i], static_cast<std::uint8_t>(c));
        pooled[c].tp += counts.tp;
        pooled[c].fp += counts.fp;
        pooled[c].fn += counts.fn;
        if (const auto f = counts.fvalue()) {
          macro_sum[c] += *f;
          ++macro_n[c];
        }
      }
    }
    double avg = 0.0;
    int n_present = 0;
    for (std::size_t c = 0; c < n_cats; ++c) {
      std::optional<double> f;
      if (pooling == Pooling::micro) {
        f = pooled[c].fvalue();
      } else if (macro_n[c] > 0) {
        f = macro_sum[c] / static_cast<double>(macro_n[c]);
      }
      report.f[mi][c] = f;
      if (f) {
        avg += *f;
        ++n_present;
      }
    }
    report.averages[mi] = n_present > 0 ? avg / n_present : 0.0;
  }

  for (std::size_t i = 0; i < gts.size(); ++i) {
    double best = -1.0;
    for (std::size_t mi = 0; mi < n_methods; ++mi) best = std::max(best, report.per_image[mi][i]);
    for (std::size_t mi = 0; mi < n_methods; ++mi)
      if (report.per_image[mi][i] == best) ++report.wins[mi];
  }
  return report;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "category";
  for (const auto& m : report.methods) os << ',' << m;
  os << '\n';
  for (std::size_t c = 0; c < report.categories.size(); ++c) {
    os << report.categories[c];
    for (std::size_t mi = 0; mi < report.methods.size(); ++mi) {
      os << ',';
      if (report.f[mi][c]) os << *report.f[mi][c] * 100.0;
    }
    os << '\n';
  }
  os << "average";
  for (double a : report.averages) os << ',' << a * 100.0;
  os << '\n';
  return os.str();
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << report_to_csv(report);
  if (!out) throw IoError("short write to " + path);
}

}  // namespace segsel
