#pragma once

#include <optional>
#include <string>
#include <vector>

#include "segsel/dataset.hpp"
#include "segsel/types.hpp"

namespace segsel {

// Pixel confusion counts for one category.
struct CategoryCounts {
  long tp = 0, fp = 0, fn = 0;

  bool absent() const { return tp + fp + fn == 0; }
  // F = 2PR/(P+R); 0 when P+R is 0; nullopt when the category shows up in
  // neither map.
  std::optional<double> fvalue() const;
};

CategoryCounts count_category(const LabelMap& pred, const LabelMap& gt, std::uint8_t category);

std::optional<double> fvalue(const LabelMap& pred, const LabelMap& gt, std::uint8_t category);

// Mean f-value over the categories present in the ground truth.
double image_score(const LabelMap& pred, const LabelMap& gt);

struct MethodResults {
  std::string name;
  std::vector<LabelMap> maps;  // aligned with the ground-truth list
};

enum class Pooling { micro, macro };

struct EvalReport {
  std::vector<std::string> methods;
  std::vector<std::string> categories;
  // f[method][category]; nullopt where the category is absent from both the
  // predictions and the ground truth across the whole dataset.
  std::vector<std::vector<std::optional<double>>> f;
  std::vector<double> averages;                // per method, over present categories
  std::vector<long> wins;                      // images where the method's score was maximal
  std::vector<std::vector<double>> per_image;  // per_image[method][image]
};

// Per-category f aggregated over the dataset per method. Micro pooling sums
// pixel counts globally; macro averages per-image f-values where defined.
EvalReport portfolio_report(const std::vector<LabelMap>& gts,
                            const std::vector<MethodResults>& methods,
                            Pooling pooling = Pooling::micro);

// One row per category, one column per method, then an average row. Absent
// cells stay empty. Values are percentages.
void write_report_csv(const std::string& path, const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

}  // namespace segsel
