#pragma once

// Quadratic production surface m = b1 ax + b2 ax y + b3 y + b4 ax^2 + b5 y^2
// (no intercept) fitted by OLS on effective inputs, and the output
// elasticities it implies.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "teamprod/types.hpp"

namespace teamprod::elasticity {

class ElasticityError : public std::runtime_error {
 public:
  enum class Kind { InsufficientData, RankDeficient, NonPositiveOutput, NonPositiveInput };
  ElasticityError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ProductionPoint {
  double ax = 0.0;  // effective leader input A * X
  double y = 0.0;
  double h = 0.0;
};

struct FitOptions {
  bool intercept = false;
};

struct PolyFit {
  std::array<double, 5> beta{};  // ax, ax*y, y, ax^2, y^2
  double intercept = 0.0;        // zero unless fitted with FitOptions::intercept
  double r_squared = 0.0;
  std::size_t n_obs = 0;
  Slice slice;

  double predict(double ax, double y) const;
  double d_ax(double ax, double y) const { return beta[0] + beta[1] * y + 2.0 * beta[3] * ax; }
  double d_y(double ax, double y) const { return beta[1] * ax + beta[2] + 2.0 * beta[4] * y; }
};

// Throws InsufficientData below coefficient count + 1 points and
// RankDeficient for collinear regressors. R^2 is the centered one,
// clamped to [0, 1].
PolyFit fit_production_polynomial(std::span<const ProductionPoint> points, Slice slice, FitOptions options = {});

enum class Variant {
  chain_rule,  // d log m / d log(AX): scale by ax / h
  literal,     // scale by x / h as the closed form is sometimes written
};

struct ElasticityPoint {
  std::string team_id;
  Slice slice;
  double elasticity_x = 0.0;
  double elasticity_y = 0.0;
  double ax = 0.0, y = 0.0, x = 0.0, h = 0.0;
};

ElasticityPoint elasticity_at(const PolyFit& fit, double ax, double y, double x, double h,
                              Variant variant = Variant::chain_rule);

void write_coefficients_csv(std::ostream& out, std::span<const PolyFit> fits);
void write_elasticities_csv(std::ostream& out, std::span<const ElasticityPoint> points);

}  // namespace teamprod::elasticity
