#pragma once

// Synthetic race panels with a fully known data-generating process.
//
// Athletes carry a start skill and a riding skill (positive, higher = better).
// Solo runs: phase time = base - skill + event effect + order effect + noise.
// Team runs: for each task k and attempt t the team's phase output is
//   h = (A * x)^theta * y^(1 - theta)
// with x the driver's and y the brakeman's skill in that task and A drawn
// independently of everything else; phase time = base - (h + e) + event
// effect + order effect, e ~ N(0, noise_sd).

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "teamprod/affinity.hpp"
#include "teamprod/elasticity.hpp"
#include "teamprod/ingest.hpp"

namespace teamprod::synth {

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SparseCell : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Law {
  enum class Kind { constant, uniform, lognormal, grid };
  Kind kind = Kind::uniform;
  double a = 0.5;  // constant value | uniform lo | lognormal mu | grid lo
  double b = 2.0;  // uniform hi | lognormal sigma | grid hi
  int levels = 5;  // grid only

  static Law constant(double v) { return {Kind::constant, v, v, 1}; }
  static Law uniform(double lo, double hi) { return {Kind::uniform, lo, hi, 1}; }
  static Law lognormal(double mu, double sigma) { return {Kind::lognormal, mu, sigma, 1}; }
  static Law grid(double lo, double hi, int levels) { return {Kind::grid, lo, hi, levels}; }
};

struct DGPConfig {
  int n_drivers = 23;
  int n_brakemen = 22;
  int n_teams = 80;  // team entries; each races `attempts` runs
  int n_pairs = 47;  // distinct driver-brakeman pairs; 0 = fresh random pair per entry
  int n_events = 12;
  int attempts = 2;
  int mono_events_per_athlete = 3;
  double theta = 0.4;
  Law affinity_law = Law::lognormal(0.0, 0.3);
  Law skill_law_x = Law::uniform(0.5, 2.0);
  Law skill_law_y = Law::uniform(0.5, 2.0);
  double event_effect_sd = 0.1;
  double order_effect_sd = 0.02;
  double noise_sd = 0.02;
  double base_start_time = 5.0;
  double base_riding_time = 50.0;
  std::uint64_t seed = 1;

  void validate() const;

  // One-season schema: 45 athletes, 47 pairs, 160 team runs.
  static DGPConfig season_scale();
  // n team entries per slice with fresh random pairs.
  static DGPConfig large(int n_teams);
};

DGPConfig config_from_json(const nlohmann::json& j, DGPConfig base = {});
nlohmann::json to_json(const DGPConfig& cfg);

struct AthleteTruth {
  bool driver = true;
  double start_skill = 0.0;
  double riding_skill = 0.0;
  std::string nationality;

  // Additive solo effect in seconds: minus the skill (finish sums both).
  double effect(Dimension d) const;
};

struct TeamTaskTruth {
  std::size_t run_index = 0;  // into SyntheticDataset::runs
  std::string team_id;
  Task task = Task::start;
  int attempt = 1;
  double true_a = 0.0;
  double true_x = 0.0;
  double true_y = 0.0;
  double true_h_noiseless = 0.0;
  double noise = 0.0;  // observed output = true_h_noiseless + noise

  double observed_h() const { return true_h_noiseless + noise; }
};

struct SyntheticTruth {
  double theta = 0.0;
  std::vector<TeamTaskTruth> team;
  std::map<std::string, AthleteTruth> athletes;
  std::map<std::string, std::array<double, 2>> event_effects;  // [start, riding]
  std::map<int, std::array<double, 2>> order_effects;          // by starting number

  double event_effect(const std::string& event, Dimension d) const;
  double order_effect(int starting_number, Dimension d) const;
};

struct SyntheticDataset {
  std::vector<ingest::RunRecord> runs;  // monobob runs first, then team runs
  SyntheticTruth truth;
};

SyntheticDataset generate(const DGPConfig& cfg);

// Team-task observations straight from the truth: (x, y, observed h).
std::vector<affinity::TeamTaskObservation> oracle_observations(const SyntheticTruth& truth);

// Planted effective inputs (A x, y, observed h) for one slice.
std::vector<elasticity::ProductionPoint> oracle_production_points(const SyntheticTruth& truth, Slice slice);

inline constexpr std::size_t kMinCellSize = 10;

// Exact empirical CDF (<=) of h among observations with the same (x, y) as
// the target. Meant for gridded skill laws. Throws SparseCell when the cell
// has fewer than min_cell_size members.
double oracle_conditional_rank(const affinity::TeamTaskObservation& target,
                               std::span<const affinity::TeamTaskObservation> slice,
                               std::size_t min_cell_size = kMinCellSize);

void write_truth(std::ostream& out, const SyntheticTruth& truth);

}  // namespace teamprod::synth
