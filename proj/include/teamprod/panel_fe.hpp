#pragma once

// Multi-way additive fixed-effects regression solved by alternating
// projections, plus the two uses the pipeline makes of it: athlete skill from
// solo runs and residualized team outcomes.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "teamprod/types.hpp"

namespace teamprod::fe {

enum class Factor { athlete, event, starting_order };
enum class ReferencePolicy { first_level_zero, mean_zero };

std::string_view to_string(Factor f);
std::optional<Factor> parse_factor(std::string_view text);

class FeError : public std::runtime_error {
 public:
  enum class Kind { InvalidSpec, EmptyInput, DegenerateDesign, NotConverged };
  FeError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct FixedEffectSpec {
  Dimension outcome = Dimension::start;
  std::vector<Factor> factors;
  ReferencePolicy reference_policy = ReferencePolicy::mean_zero;
  double tolerance = 1e-10;
  int max_iterations = 10000;

  // Throws FeError::InvalidSpec on empty/duplicate factors or bad limits.
  void validate() const;
};

// One observation: outcome plus one level label per factor, in spec order.
struct FeRow {
  double outcome = 0.0;
  std::vector<std::string> levels;
};

struct FixedEffectFit {
  Dimension outcome = Dimension::start;
  std::vector<Factor> factors;
  std::map<Factor, std::map<std::string, double>> coefficients;
  double intercept = 0.0;
  std::vector<double> residuals;
  std::size_t n_obs = 0;
  int iterations_used = 0;
  bool converged = false;

  double fitted(const FeRow& row) const;
};

// Least squares for y = intercept + sum_f effect_f[level_f] + e. Each sweep
// replaces one factor's effects by the level means of the partial residual;
// iteration stops once the largest coefficient change drops below the
// tolerance. A fit that hits max_iterations is returned with
// converged = false. Throws DegenerateDesign when the design is not
// identified beyond one normalization per factor.
FixedEffectFit estimate_fixed_effects(const std::vector<FeRow>& rows, const FixedEffectSpec& spec);

struct SkillProfile {
  std::string athlete_id;
  Dimension dimension = Dimension::start;
  double raw_fe = 0.0;             // seconds, lower is faster
  double transformed_skill = 0.0;  // positive, higher is better; set by transform
  int n_runs = 0;
};

struct SkillResult {
  std::vector<SkillProfile> profiles;
  std::vector<std::pair<std::string, int>> dropped;  // athlete, run count
};

inline constexpr int kMinRunsForSkill = 2;

// One profile per athlete level of a converged fit; athletes with fewer than
// kMinRunsForSkill runs (or absent from run_counts) are dropped.
SkillResult athlete_skill(const FixedEffectFit& fit, const std::map<std::string, int>& run_counts);

struct TeamOutcomeRow {
  double outcome = 0.0;
  std::string event;
  int starting_order = 1;
};

// Residuals of the event + starting-order regression, aligned to input.
std::vector<double> residualize_team(const std::vector<TeamOutcomeRow>& rows, double tolerance = 1e-10,
                                     int max_iterations = 10000);

// factor,level,estimate with a leading intercept row.
void write_coefficients_csv(std::ostream& out, const FixedEffectFit& fit);

}  // namespace teamprod::fe
