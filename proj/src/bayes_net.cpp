#include "segsel/bayes_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "segsel/error.hpp"

namespace segsel {
namespace {

// Dense factor over a sorted list of variables, last variable fastest.
struct Factor {
  std::vector<int> vars;
  std::vector<Index> cards;
  VectorD table;

  Index size() const { return table.size(); }
};

Index linear_index(const std::vector<Index>& cards, const std::vector<int>& values) {
  Index idx = 0;
  for (std::size_t i = 0; i < cards.size(); ++i) idx = idx * cards[i] + values[i];
  return idx;
}

Factor join(const Factor& a, const Factor& b) {
  Factor out;
  out.vars = a.vars;
  for (std::size_t i = 0; i < b.vars.size(); ++i)
    if (std::find(out.vars.begin(), out.vars.end(), b.vars[i]) == out.vars.end())
      out.vars.push_back(b.vars[i]);
  std::sort(out.vars.begin(), out.vars.end());

  out.cards.resize(out.vars.size());
  auto card_of = [&](int v) {
    for (std::size_t i = 0; i < a.vars.size(); ++i)
      if (a.vars[i] == v) return a.cards[i];
    for (std::size_t i = 0; i < b.vars.size(); ++i)
      if (b.vars[i] == v) return b.cards[i];
    return Index{0};
  };
  Index total = 1;
  for (std::size_t i = 0; i < out.vars.size(); ++i) {
    out.cards[i] = card_of(out.vars[i]);
    total *= out.cards[i];
  }
  out.table.resize(total);

  std::vector<int> assignment(out.vars.size(), 0);
  std::vector<int> a_vals(a.vars.size()), b_vals(b.vars.size());
  for (Index idx = 0; idx < total; ++idx) {
    Index rem = idx;
    for (std::size_t i = out.vars.size(); i-- > 0;) {
      assignment[i] = static_cast<int>(rem % out.cards[i]);
      rem /= out.cards[i];
    }
    for (std::size_t i = 0; i < a.vars.size(); ++i)
      a_vals[i] = assignment[static_cast<std::size_t>(
          std::find(out.vars.begin(), out.vars.end(), a.vars[i]) - out.vars.begin())];
    for (std::size_t i = 0; i < b.vars.size(); ++i)
      b_vals[i] = assignment[static_cast<std::size_t>(
          std::find(out.vars.begin(), out.vars.end(), b.vars[i]) - out.vars.begin())];
    out.table[idx] = a.table[linear_index(a.cards, a_vals)] * b.table[linear_index(b.cards, b_vals)];
  }
  return out;
}

Factor marginalize(const Factor& f, int var) {
  const auto it = std::find(f.vars.begin(), f.vars.end(), var);
  if (it == f.vars.end()) return f;
  const std::size_t pos = static_cast<std::size_t>(it - f.vars.begin());

  Factor out;
  out.vars = f.vars;
  out.vars.erase(out.vars.begin() + static_cast<std::ptrdiff_t>(pos));
  out.cards = f.cards;
  const Index var_card = out.cards[pos];
  out.cards.erase(out.cards.begin() + static_cast<std::ptrdiff_t>(pos));

  Index inner = 1;  // stride of the eliminated variable
  for (std::size_t i = pos + 1; i < f.cards.size(); ++i) inner *= f.cards[i];

  out.table = VectorD::Zero(std::max<Index>(Index{1}, f.size() / var_card));
  for (Index idx = 0; idx < f.size(); ++idx) {
    const Index outer = idx / (inner * var_card);
    const Index rest = idx % inner;
    out.table[outer * inner + rest] += f.table[idx];
  }
  return out;
}

Factor reduce(const Factor& f, int var, int value) {
  const auto it = std::find(f.vars.begin(), f.vars.end(), var);
  if (it == f.vars.end()) return f;
  const std::size_t pos = static_cast<std::size_t>(it - f.vars.begin());

  Factor out;
  out.vars = f.vars;
  out.vars.erase(out.vars.begin() + static_cast<std::ptrdiff_t>(pos));
  out.cards = f.cards;
  const Index var_card = out.cards[pos];
  out.cards.erase(out.cards.begin() + static_cast<std::ptrdiff_t>(pos));

  Index inner = 1;
  for (std::size_t i = pos + 1; i < f.cards.size(); ++i) inner *= f.cards[i];

  out.table.resize(std::max<Index>(Index{1}, f.size() / var_card));
  Index w = 0;
  for (Index idx = 0; idx < f.size(); ++idx) {
    const Index v = (idx / inner) % var_card;
    if (v == value) out.table[w++] = f.table[idx];
  }
  return out;
}

}  // namespace

int DiscreteBayesNet::add_node(const std::string& name, int cardinality, std::vector<int> parents) {
  if (cardinality < 1) throw ConfigError("bayes node needs cardinality >= 1");
  const int id = static_cast<int>(nodes_.size());
  for (int p : parents)
    if (p < 0 || p >= id) throw ConfigError("bayes node parents must precede the node");

  BayesNode n;
  n.name = name;
  n.cardinality = cardinality;
  n.parents = std::move(parents);
  Index rows = 1;
  for (int p : n.parents) rows *= nodes_[static_cast<std::size_t>(p)].cardinality;
  n.cpt = MatrixD::Constant(rows, cardinality, 1.0 / cardinality);
  nodes_.push_back(std::move(n));
  return id;
}

void DiscreteBayesNet::set_cpt(int node, MatrixD cpt) {
  auto& n = nodes_.at(static_cast<std::size_t>(node));
  if (cpt.rows() != n.n_parent_configs() || cpt.cols() != n.cardinality)
    throw ConfigError("cpt shape mismatch for node " + n.name);
  for (Index r = 0; r < cpt.rows(); ++r)
    if (std::abs(cpt.row(r).sum() - 1.0) > 1e-9)
      throw ConfigError("cpt row does not sum to 1 for node " + n.name);
  n.cpt = std::move(cpt);
}

int DiscreteBayesNet::node_index(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return static_cast<int>(i);
  throw ConfigError("no bayes node named " + name);
}

void DiscreteBayesNet::validate() const {
  for (const auto& n : nodes_) {
    Index rows = 1;
    for (int p : n.parents) rows *= nodes_[static_cast<std::size_t>(p)].cardinality;
    if (n.cpt.rows() != rows || n.cpt.cols() != n.cardinality)
      throw ConfigError("cpt shape mismatch for node " + n.name);
    for (Index r = 0; r < n.cpt.rows(); ++r)
      if (std::abs(n.cpt.row(r).sum() - 1.0) > 1e-9)
        throw ConfigError("cpt row does not sum to 1 for node " + n.name);
  }
}

VectorD DiscreteBayesNet::posterior(int query, const std::vector<int>& evidence) const {
  if (evidence.size() != nodes_.size()) throw ConfigError("evidence size mismatch");
  if (query < 0 || static_cast<std::size_t>(query) >= nodes_.size())
    throw ConfigError("bad query node");

  // CPTs as factors, reduced by the evidence.
  std::vector<Factor> factors;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    Factor f;
    f.vars = n.parents;
    f.vars.push_back(static_cast<int>(i));
    std::sort(f.vars.begin(), f.vars.end());
    f.cards.resize(f.vars.size());
    for (std::size_t k = 0; k < f.vars.size(); ++k)
      f.cards[k] = nodes_[static_cast<std::size_t>(f.vars[k])].cardinality;

    Index total = 1;
    for (Index c : f.cards) total *= c;
    f.table.resize(total);
    std::vector<int> assignment(f.vars.size());
    std::vector<int> parent_vals(n.parents.size());
    for (Index idx = 0; idx < total; ++idx) {
      Index rem = idx;
      for (std::size_t k = f.vars.size(); k-- > 0;) {
        assignment[k] = static_cast<int>(rem % f.cards[k]);
        rem /= f.cards[k];
      }
      int own = 0;
      for (std::size_t k = 0; k < f.vars.size(); ++k)
        if (f.vars[k] == static_cast<int>(i)) own = assignment[k];
      Index row = 0;
      for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
        const auto it = std::find(f.vars.begin(), f.vars.end(), n.parents[pi]);
        parent_vals[pi] = assignment[static_cast<std::size_t>(it - f.vars.begin())];
        row = row * nodes_[static_cast<std::size_t>(n.parents[pi])].cardinality + parent_vals[pi];
      }
      f.table[idx] = n.cpt(row, own);
    }

    for (std::size_t v = 0; v < nodes_.size(); ++v)
      if (evidence[v] != kMissing) f = reduce(f, static_cast<int>(v), evidence[v]);
    factors.push_back(std::move(f));
  }

  // Eliminate unobserved non-query variables, smallest joined factor first.
  std::vector<int> to_eliminate;
  for (std::size_t v = 0; v < nodes_.size(); ++v)
    if (evidence[v] == kMissing && static_cast<int>(v) != query)
      to_eliminate.push_back(static_cast<int>(v));

  while (!to_eliminate.empty()) {
    int best_var = -1;
    Index best_size = std::numeric_limits<Index>::max();
    for (int v : to_eliminate) {
      Index joined = 1;
      std::vector<int> seen;
      for (const auto& f : factors) {
        if (std::find(f.vars.begin(), f.vars.end(), v) == f.vars.end()) continue;
        for (std::size_t k = 0; k < f.vars.size(); ++k)
          if (std::find(seen.begin(), seen.end(), f.vars[k]) == seen.end()) {
            seen.push_back(f.vars[k]);
            joined *= f.cards[k];
          }
      }
      if (joined < best_size) {
        best_size = joined;
        best_var = v;
      }
    }

    Factor merged;
    bool first = true;
    std::vector<Factor> rest;
    for (auto& f : factors) {
      if (std::find(f.vars.begin(), f.vars.end(), best_var) != f.vars.end()) {
        merged = first ? std::move(f) : join(merged, f);
        first = false;
      } else {
        rest.push_back(std::move(f));
      }
    }
    rest.push_back(marginalize(merged, best_var));
    factors = std::move(rest);
    to_eliminate.erase(std::remove(to_eliminate.begin(), to_eliminate.end(), best_var),
                       to_eliminate.end());
  }

  Factor result;
  result.table = VectorD::Ones(1);
  bool first = true;
  for (auto& f : factors) {
    result = first ? std::move(f) : join(result, f);
    first = false;
  }

  const int card = nodes_[static_cast<std::size_t>(query)].cardinality;
  if (evidence[query] != kMissing) {
    VectorD out = VectorD::Zero(card);
    out[evidence[query]] = 1.0;
    return out;
  }
  // Scalar stray factors only rescale; hunt for the query-variable factor.
  if (result.vars.size() != 1 || result.vars[0] != query)
    throw Error("variable elimination left an unexpected factor");
  const double total = result.table.sum();
  if (total <= 0.0) return VectorD::Constant(card, 1.0 / card);
  return (result.table / total).eval();
}

double DiscreteBayesNet::case_probability(const std::vector<int>& evidence) const {
  if (evidence.size() != nodes_.size()) throw ConfigError("evidence size mismatch");
  // Sum the joint over all missing variables by enumeration.
  std::vector<int> missing;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (evidence[i] == kMissing) missing.push_back(static_cast<int>(i));

  double configs = 1.0;
  for (int v : missing) configs *= nodes_[static_cast<std::size_t>(v)].cardinality;
  if (configs > 2e6) throw ConfigError("too many missing values to sum out exactly");

  std::vector<int> values(evidence);
  double total = 0.0;
  const auto n_configs = static_cast<long>(configs);
  for (long c = 0; c < n_configs; ++c) {
    long rem = c;
    for (int v : missing) {
      const int card = nodes_[static_cast<std::size_t>(v)].cardinality;
      values[static_cast<std::size_t>(v)] = static_cast<int>(rem % card);
      rem /= card;
    }
    double w = 1.0;
    for (std::size_t i = 0; i < nodes_.size() && w > 0.0; ++i) {
      const auto& n = nodes_[i];
      Index row = 0;
      for (int p : n.parents) row = row * nodes_[static_cast<std::size_t>(p)].cardinality +
                                    values[static_cast<std::size_t>(p)];
      w *= n.cpt(row, values[i]);
    }
    total += w;
  }
  return total;
}

DiscreteBayesNet::EmResult DiscreteBayesNet::fit_em(const std::vector<std::vector<int>>& data,
                                                    const EmOptions& options) {
  if (data.empty()) throw ConfigError("fit_em: no data");
  for (const auto& row : data)
    if (row.size() != nodes_.size()) throw ConfigError("fit_em: row size mismatch");

  if (options.randomize_init) {
    // Hidden-node symmetry must be broken for EM to move at all.
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    for (auto& n : nodes_) {
      for (Index r = 0; r < n.cpt.rows(); ++r) {
        for (Index c = 0; c < n.cpt.cols(); ++c) n.cpt(r, c) *= jitter(rng);
        n.cpt.row(r) /= n.cpt.row(r).sum();
      }
    }
  }

  std::vector<MatrixD> best_cpts;
  double best_ll = -std::numeric_limits<double>::infinity();
  double prev_ll = -std::numeric_limits<double>::infinity();
  EmResult result;

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    std::vector<MatrixD> counts;
    counts.reserve(nodes_.size());
    for (const auto& n : nodes_)
      counts.push_back(MatrixD::Constant(n.cpt.rows(), n.cpt.cols(), options.pseudo_count));

    double ll = 0.0;
    std::vector<int> values;
    std::vector<int> missing;
    for (const auto& row : data) {
      missing.clear();
      for (std::size_t i = 0; i < row.size(); ++i)
        if (row[i] == kMissing) missing.push_back(static_cast<int>(i));

      double n_configs_d = 1.0;
      for (int v : missing) n_configs_d *= nodes_[static_cast<std::size_t>(v)].cardinality;
      if (n_configs_d > 2e6)
        throw ConfigError("fit_em: too many missing values in a training row");
      const long n_configs = static_cast<long>(n_configs_d);

      values = row;
      double total = 0.0;
      std::vector<double> weights(static_cast<std::size_t>(n_configs));
      for (long c = 0; c < n_configs; ++c) {
        long rem = c;
        for (int v : missing) {
          const int card = nodes_[static_cast<std::size_t>(v)].cardinality;
          values[static_cast<std::size_t>(v)] = static_cast<int>(rem % card);
          rem /= card;
        }
        double w = 1.0;
        for (std::size_t i = 0; i < nodes_.size() && w > 0.0; ++i) {
          const auto& n = nodes_[i];
          Index r = 0;
          for (int p : n.parents) r = r * nodes_[static_cast<std::size_t>(p)].cardinality +
                                      values[static_cast<std::size_t>(p)];
          w *= n.cpt(r, values[i]);
        }
        weights[static_cast<std::size_t>(c)] = w;
        total += w;
      }

      if (total <= 0.0) continue;  // impossible case under current parameters
      ll += std::log(total);

      for (long c = 0; c < n_configs; ++c) {
        const double w = weights[static_cast<std::size_t>(c)] / total;
        if (w == 0.0) continue;
        long rem = c;
        for (int v : missing) {
          const int card = nodes_[static_cast<std::size_t>(v)].cardinality;
          values[static_cast<std::size_t>(v)] = static_cast<int>(rem % card);
          rem /= card;
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
          const auto& n = nodes_[i];
          Index r = 0;
          for (int p : n.parents) r = r * nodes_[static_cast<std::size_t>(p)].cardinality +
                                      values[static_cast<std::size_t>(p)];
          counts[i](r, values[i]) += w;
        }
      }
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      auto& cpt = nodes_[i].cpt;
      for (Index r = 0; r < cpt.rows(); ++r) {
        const double row_total = counts[i].row(r).sum();
        if (row_total > 0.0)
          cpt.row(r) = counts[i].row(r) / row_total;
        else
          cpt.row(r).setConstant(1.0 / cpt.cols());
      }
    }

    result.iterations = iter;
    result.log_likelihood = ll;
    if (ll > best_ll) {
      best_ll = ll;
      best_cpts.clear();
      for (const auto& n : nodes_) best_cpts.push_back(n.cpt);
    }
    if (iter > 1 && std::abs(ll - prev_ll) < options.tolerance) {
      result.converged = true;
      break;
    }
    prev_ll = ll;
  }

  if (!result.converged && !best_cpts.empty()) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].cpt = best_cpts[i];
    result.log_likelihood = best_ll;
  }
  return result;
}

}  // namespace segsel
