#include "teamprod/elasticity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>

#include "teamprod/csv.hpp"

namespace teamprod::elasticity {

double PolyFit::predict(double ax, double y) const {
  return intercept + beta[0] * ax + beta[1] * ax * y + beta[2] * y + beta[3] * ax * ax + beta[4] * y * y;
}

PolyFit fit_production_polynomial(std::span<const ProductionPoint> points, Slice slice, FitOptions options) {
  const Eigen::Index k = options.intercept ? 6 : 5;
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < k + 1) {
    throw ElasticityError(ElasticityError::Kind::InsufficientData,
                          "need at least " + std::to_string(k + 1) + " points, got " + std::to_string(n));
  }
  Eigen::MatrixXd design(n, k);
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    if (!std::isfinite(p.ax) || !std::isfinite(p.y) || !std::isfinite(p.h)) {
      throw ElasticityError(ElasticityError::Kind::NonPositiveInput, "non-finite production point");
    }
    design(i, 0) = p.ax;
    design(i, 1) = p.ax * p.y;
    design(i, 2) = p.y;
    design(i, 3) = p.ax * p.ax;
    design(i, 4) = p.y * p.y;
    if (options.intercept) design(i, 5) = 1.0;
    h(i) = p.h;
  }

  // Scale columns to unit norm so the rank threshold is relative per column.
  Eigen::VectorXd norms = design.colwise().norm();
  for (Eigen::Index c = 0; c < k; ++c) {
    if (!(norms(c) > 0.0)) {
      throw ElasticityError(ElasticityError::Kind::RankDeficient, "regressor column is identically zero");
    }
    design.col(c) /= norms(c);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    throw ElasticityError(ElasticityError::Kind::RankDeficient,
                          "collinear regressors (rank " + std::to_string(qr.rank()) + " of " + std::to_string(k) + ")");
  }
  Eigen::VectorXd coef = qr.solve(h);
  const Eigen::VectorXd resid = h - design * coef;
  coef = coef.cwiseQuotient(norms);

  PolyFit fit;
  for (int c = 0; c < 5; ++c) fit.beta[static_cast<std::size_t>(c)] = coef(c);
  if (options.intercept) fit.intercept = coef(5);
  fit.n_obs = points.size();
  fit.slice = slice;
  const double tss = (h.array() - h.mean()).square().sum();
  fit.r_squared = tss > 0.0 ? std::clamp(1.0 - resid.squaredNorm() / tss, 0.0, 1.0) : 0.0;
  return fit;
}

ElasticityPoint elasticity_at(const PolyFit& fit, double ax, double y, double x, double h, Variant variant) {
  if (!(h > 0.0)) throw ElasticityError(ElasticityError::Kind::NonPositiveOutput, "elasticity needs h > 0");
  if (!(ax > 0.0) || !(y > 0.0) || !(x > 0.0)) {
    throw ElasticityError(ElasticityError::Kind::NonPositiveInput, "elasticity needs positive ax, y, x");
  }
  ElasticityPoint p;
  p.slice = fit.slice;
  p.ax = ax;
  p.y = y;
  p.x = x;
  p.h = h;
  const double leader_scale = variant == Variant::chain_rule ? ax : x;
  p.elasticity_x = fit.d_ax(ax, y) * leader_scale / h;
  p.elasticity_y = fit.d_y(ax, y) * y / h;
  return p;
}

void write_coefficients_csv(std::ostream& out, std::span<const PolyFit> fits) {
  out << "slice,beta1,beta2,beta3,beta4,beta5,r2,n\n";
  for (const auto& f : fits) {
    std::vector<std::string> row = {slice_label(f.slice)};
    for (double b : f.beta) row.push_back(csv::format_double(b));
    row.push_back(csv::format_double(f.r_squared));
    row.push_back(std::to_string(f.n_obs));
    out << csv::join_line(row) << '\n';
  }
}

void write_elasticities_csv(std::ostream& out, std::span<const ElasticityPoint> points) {
  out << "team_id,slice,elasticity_x,elasticity_y\n";
  for (const auto& p : points) {
    out << csv::join_line({p.team_id, slice_label(p.slice), csv::format_double(p.elasticity_x),
                           csv::format_double(p.elasticity_y)})
        << '\n';
  }
}

}  // namespace teamprod::elasticity
