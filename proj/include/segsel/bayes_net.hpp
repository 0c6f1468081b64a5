#pragma once

#include <string>
#include <vector>

#include "segsel/types.hpp"

namespace segsel {

// Observation vector for one case: node value, or kMissing.
inline constexpr int kMissing = -1;

struct BayesNode {
  std::string name;
  int cardinality = 0;
  std::vector<int> parents;  // indices of earlier nodes
  // Rows are parent configurations in mixed-radix order (last listed parent
  // varies fastest), columns are node states. Every row sums to 1.
  MatrixD cpt;

  Index n_parent_configs() const { return cpt.rows(); }
};

// A small discrete Bayesian network with exact inference (variable
// elimination) and EM parameter learning under missing observations.
class DiscreteBayesNet {
 public:
  int add_node(const std::string& name, int cardinality, std::vector<int> parents = {});
  void set_cpt(int node, MatrixD cpt);  // validates shape and row sums

  std::size_t size() const { return nodes_.size(); }
  const BayesNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  int node_index(const std::string& name) const;

  // Exact posterior over `query` given partial evidence. Returns the prior
  // marginal when nothing is observed; falls back to uniform when the
  // evidence has zero probability under the model.
  VectorD posterior(int query, const std::vector<int>& evidence) const;

  // Probability of one partially-observed case (missing values summed out).
  double case_probability(const std::vector<int>& evidence) const;

  struct EmOptions {
    double tolerance = 1e-6;
    int max_iterations = 200;
    std::uint64_t seed = 1;          // CPT initialization for hidden structure
    double pseudo_count = 0.0;       // optional Dirichlet smoothing
    bool randomize_init = true;      // false keeps the currently set CPTs
  };

  struct EmResult {
    int iterations = 0;
    double log_likelihood = 0.0;
    bool converged = false;
  };

  // Fits CPTs on rows of (possibly partial) observations. With complete data
  // this is a single maximum-likelihood counting pass. On non-convergence the
  // best iterate seen is kept and `converged` stays false.
  EmResult fit_em(const std::vector<std::vector<int>>& data, const EmOptions& options);
  EmResult fit_em(const std::vector<std::vector<int>>& data) { return fit_em(data, EmOptions{}); }

  void validate() const;  // CPT shapes and row sums

 private:
  std::vector<BayesNode> nodes_;
};

}  // namespace segsel
