#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "teamprod/affinity.hpp"
#include "teamprod/panel_fe.hpp"
#include "teamprod/report.hpp"

namespace fixtures {

using Matrix3 = std::array<std::array<int, 3>, 3>;

// Published skill-pairing counts (driver tercile rows, brakeman columns).
inline constexpr Matrix3 kStartPairing = {{{31, 7, 15}, {7, 19, 27}, {15, 27, 12}}};
inline constexpr Matrix3 kRidingPairing = {{{6, 33, 14}, {33, 16, 4}, {14, 4, 36}}};
inline constexpr Matrix3 kP1StartP2Riding = {{{18, 19, 16}, {11, 8, 34}, {24, 26, 4}}};
inline constexpr Matrix3 kP1RidingP2Start = {{{29, 19, 5}, {17, 13, 23}, {7, 21, 26}}};

// counts[i][j] runs placed in bin (i+1, j+1), shuffled by seed.
std::vector<teamprod::report::BinnedRun> runs_from_counts(const Matrix3& counts, std::uint64_t seed = 1);

// Team runs whose (P1 start, P2 riding) and (P1 riding, P2 start) bins follow
// the two given matrices. Both matrices must share the same total.
std::vector<teamprod::report::TeamRunSkills> cross_runs(const Matrix3& start_riding, const Matrix3& riding_start);

struct PlantedFe {
  std::vector<teamprod::fe::FeRow> rows;
  // factor index -> level -> planted effect
  std::vector<std::map<std::string, double>> effects;
  double intercept = 0.0;
};

// Three-way (athlete, event, starting order) design with n rows; every level
// appears at least twice and the design is connected.
PlantedFe planted_three_way(std::size_t n, std::uint64_t seed, double noise_sd = 0.0, std::size_t n_athletes = 40,
                            std::size_t n_events = 15, std::size_t n_orders = 8);

// Cobb-Douglas team outputs h = (A x)^theta y^(1-theta) with A lognormal.
struct CobbDouglas {
  std::vector<teamprod::affinity::TeamTaskObservation> obs;
  std::vector<double> true_a;
};
CobbDouglas cobb_douglas(std::size_t n, std::uint64_t seed, teamprod::Task task = teamprod::Task::start,
                         int attempt = 1, double theta = 0.4, double sigma = 0.3, double noise_sd = 0.0);

// Fresh empty directory under the system temp path.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace fixtures
