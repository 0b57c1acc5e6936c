#include "teamprod/panel_fe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include <Eigen/Dense>

#include "teamprod/csv.hpp"

namespace teamprod::fe {

namespace {

struct IndexedFactor {
  std::vector<std::string> labels;  // sorted
  std::vector<int> index;           // per row
  std::vector<double> count;        // per level
};

IndexedFactor index_factor(const std::vector<FeRow>& rows, std::size_t f) {
  std::map<std::string, int> ids;
  for (const auto& r : rows) ids.emplace(r.levels[f], 0);
  IndexedFactor out;
  int next = 0;
  for (auto& [label, id] : ids) {
    id = next++;
    out.labels.push_back(label);
  }
  out.count.assign(out.labels.size(), 0.0);
  out.index.reserve(rows.size());
  for (const auto& r : rows) {
    const int id = ids.at(r.levels[f]);
    out.index.push_back(id);
    out.count[id] += 1.0;
  }
  return out;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Dense rank check of [1, dummies without first level] for moderate designs;
// beyond that, pairwise connectivity of the level graphs.
void check_identified(const std::vector<IndexedFactor>& factors, std::size_t n) {
  std::size_t params = 1;
  for (const auto& f : factors) params += f.labels.size() - 1;
  if (params > n) {
    throw FeError(FeError::Kind::DegenerateDesign,
                  std::to_string(params) + " parameters for " + std::to_string(n) + " observations");
  }

  for (std::size_t a = 0; a < factors.size(); ++a) {
    for (std::size_t b = a + 1; b < factors.size(); ++b) {
      const auto na = factors[a].labels.size();
      UnionFind uf(na + factors[b].labels.size());
      for (std::size_t i = 0; i < n; ++i) {
        uf.unite(factors[a].index[i], static_cast<int>(na) + factors[b].index[i]);
      }
      std::set<int> roots;
      for (std::size_t k = 0; k < uf.parent.size(); ++k) roots.insert(uf.find(static_cast<int>(k)));
      if (roots.size() > 1) {
        throw FeError(FeError::Kind::DegenerateDesign,
                      "factor levels split into " + std::to_string(roots.size()) +
                          " disconnected groups; effects are not identified");
      }
    }
  }

  if (factors.size() < 3 || static_cast<double>(n) * static_cast<double>(params) > 2e7) return;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params));
  x.col(0).setOnes();
  Eigen::Index offset = 1;
  for (const auto& f : factors) {
    for (std::size_t i = 0; i < n; ++i) {
      if (f.index[i] > 0) x(static_cast<Eigen::Index>(i), offset + f.index[i] - 1) = 1.0;
    }
    offset += static_cast<Eigen::Index>(f.labels.size()) - 1;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw FeError(FeError::Kind::DegenerateDesign,
                  "design rank " + std::to_string(qr.rank()) + " < " + std::to_string(x.cols()) +
                      " parameters; effects are aliased");
  }
}

}  // namespace

std::string_view to_string(Factor f) {
  switch (f) {
    case Factor::athlete: return "athlete";
    case Factor::event: return "event";
    case Factor::starting_order: return "starting_order";
  }
  return "?";
}

std::optional<Factor> parse_factor(std::string_view text) {
  if (text == "athlete") return Factor::athlete;
  if (text == "event") return Factor::event;
  if (text == "starting_order") return Factor::starting_order;
  return std::nullopt;
}

void FixedEffectSpec::validate() const {
  if (factors.empty()) throw FeError(FeError::Kind::InvalidSpec, "no factors");
  std::set<Factor> unique(factors.begin(), factors.end());
  if (unique.size() != factors.size()) throw FeError(FeError::Kind::InvalidSpec, "duplicate factor");
  if (!(tolerance > 0.0)) throw FeError(FeError::Kind::InvalidSpec, "tolerance must be positive");
  if (max_iterations < 1) throw FeError(FeError::Kind::InvalidSpec, "max_iterations must be >= 1");
}

double FixedEffectFit::fitted(const FeRow& row) const {
  double v = intercept;
  for (std::size_t f = 0; f < factors.size(); ++f) v += coefficients.at(factors[f]).at(row.levels[f]);
  return v;
}

FixedEffectFit estimate_fixed_effects(const std::vector<FeRow>& rows, const FixedEffectSpec& spec) {
  spec.validate();
  if (rows.empty()) throw FeError(FeError::Kind::EmptyInput, "no observations");
  const std::size_t n = rows.size();
  const std::size_t nf = spec.factors.size();
  for (const auto& r : rows) {
    if (r.levels.size() != nf) throw FeError(FeError::Kind::InvalidSpec, "row level count != factor count");
    if (!std::isfinite(r.outcome)) throw FeError(FeError::Kind::InvalidSpec, "non-finite outcome");
  }

  std::vector<IndexedFactor> factors;
  for (std::size_t f = 0; f < nf; ++f) factors.push_back(index_factor(rows, f));
  check_identified(factors, n);

  double intercept = 0.0;
  for (const auto& r : rows) intercept += r.outcome;
  intercept /= static_cast<double>(n);

  std::vector<std::vector<double>> effects(nf);
  for (std::size_t f = 0; f < nf; ++f) effects[f].assign(factors[f].labels.size(), 0.0);

  // Working residual y - intercept - sum of current effects.
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = rows[i].outcome - intercept;

  FixedEffectFit fit;
  std::vector<double> sums;
  for (int iter = 1; iter <= spec.max_iterations; ++iter) {
    double max_change = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& fac = factors[f];
      auto& eff = effects[f];
      sums.assign(eff.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) sums[fac.index[i]] += resid[i];
      // sums / count is the change to this factor's effects
      double centre = 0.0;
      for (std::size_t l = 0; l < eff.size(); ++l) {
        sums[l] /= fac.count[l];
        centre += fac.count[l] * (eff[l] + sums[l]);
      }
      centre /= static_cast<double>(n);
      for (std::size_t l = 0; l < eff.size(); ++l) {
        const double delta = sums[l] - centre;
        eff[l] += delta;
        max_change = std::max(max_change, std::abs(delta));
      }
      intercept += centre;
      max_change = std::max(max_change, std::abs(centre));
      for (std::size_t i = 0; i < n; ++i) resid[i] -= sums[fac.index[i]];
    }
    fit.iterations_used = iter;
    if (max_change < spec.tolerance) {
      fit.converged = true;
      break;
    }
  }

  if (spec.reference_policy == ReferencePolicy::first_level_zero) {
    for (auto& eff : effects) {
      const double shift = eff.front();
      for (double& e : eff) e -= shift;
      intercept += shift;
    }
  }

  fit.outcome = spec.outcome;
  fit.factors = spec.factors;
  fit.intercept = intercept;
  fit.n_obs = n;
  for (std::size_t f = 0; f < nf; ++f) {
    auto& coef = fit.coefficients[spec.factors[f]];
    for (std::size_t l = 0; l < effects[f].size(); ++l) coef[factors[f].labels[l]] = effects[f][l];
  }
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = rows[i].outcome - intercept;
    for (std::size_t f = 0; f < nf; ++f) v -= effects[f][factors[f].index[i]];
    fit.residuals[i] = v;
  }
  return fit;
}

SkillResult athlete_skill(const FixedEffectFit& fit, const std::map<std::string, int>& run_counts) {
  SkillResult result;
  auto it = fit.coefficients.find(Factor::athlete);
  if (it == fit.coefficients.end()) return result;
  if (!fit.converged) throw FeError(FeError::Kind::NotConverged, "athlete_skill needs a converged fit");
  for (const auto& [athlete, effect] : it->second) {
    auto rc = run_counts.find(athlete);
    const int runs = rc == run_counts.end() ? 0 : rc->second;
    if (runs < kMinRunsForSkill) {
      result.dropped.emplace_back(athlete, runs);
      continue;
    }
    result.profiles.push_back({athlete, fit.outcome, effect, 0.0, runs});
  }
  return result;
}

std::vector<double> residualize_team(const std::vector<TeamOutcomeRow>& rows, double tolerance,
                                     int max_iterations) {
  FixedEffectSpec spec;
  spec.factors = {Factor::event, Factor::starting_order};
  spec.tolerance = tolerance;
  spec.max_iterations = max_iterations;
  std::vector<FeRow> fe_rows;
  fe_rows.reserve(rows.size());
  for (const auto& r : rows) fe_rows.push_back({r.outcome, {r.event, std::to_string(r.starting_order)}});
  auto fit = estimate_fixed_effects(fe_rows, spec);
  if (!fit.converged) {
    throw FeError(FeError::Kind::NotConverged,
                  "team residualization did not converge in " + std::to_string(max_iterations) + " sweeps");
  }
  return std::move(fit.residuals);
}

void write_coefficients_csv(std::ostream& out, const FixedEffectFit& fit) {
  out << "factor,level,estimate\n";
  out << "intercept,," << csv::format_double(fit.intercept) << '\n';
  for (Factor f : fit.factors) {
    for (const auto& [level, value] : fit.coefficients.at(f)) {
      out << csv::join_line({std::string(to_string(f)), level, csv::format_double(value)}) << '\n';
    }
  }
}

}  // namespace teamprod::fe
