#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <unistd.h>

#include "teamprod/rng.hpp"

namespace fixtures {

std::vector<teamprod::report::BinnedRun> runs_from_counts(const Matrix3& counts, std::uint64_t seed) {
  std::vector<teamprod::report::BinnedRun> runs;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < counts[i][j]; ++k) runs.push_back({i + 1, j + 1, 0.0});
    }
  }
  teamprod::Rng rng(seed);
  rng.shuffle(runs);
  return runs;
}

std::vector<teamprod::report::TeamRunSkills> cross_runs(const Matrix3& start_riding, const Matrix3& riding_start) {
  std::vector<std::pair<int, int>> a, b;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < start_riding[i][j]; ++k) a.emplace_back(i + 1, j + 1);
      for (int k = 0; k < riding_start[i][j]; ++k) b.emplace_back(i + 1, j + 1);
    }
  }
  if (a.size() != b.size()) throw std::invalid_argument("cross_runs: totals differ");
  std::vector<teamprod::report::TeamRunSkills> runs;
  for (std::size_t k = 0; k < a.size(); ++k) {
    teamprod::report::TeamRunSkills r;
    r.p1.start = a[k].first;
    r.p2.riding = a[k].second;
    r.p1.riding = b[k].first;
    r.p2.start = b[k].second;
    runs.push_back(r);
  }
  return runs;
}

PlantedFe planted_three_way(std::size_t n, std::uint64_t seed, double noise_sd, std::size_t n_athletes,
                            std::size_t n_events, std::size_t n_orders) {
  teamprod::Rng rng(seed);
  PlantedFe out;
  out.intercept = 60.0;
  const std::size_t sizes[3] = {n_athletes, n_events, n_orders};
  const char* prefix[3] = {"ath", "ev", "ord"};
  out.effects.resize(3);
  for (int f = 0; f < 3; ++f) {
    for (std::size_t l = 0; l < sizes[f]; ++l) {
      out.effects[f][prefix[f] + std::to_string(l)] = rng.normal(0.0, 0.5);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    // Two deterministic passes over the athletes; the second shifts the other
    // factors by one so every level appears twice and the design is connected.
    std::size_t lv[3];
    if (i < 2 * n_athletes) {
      const std::size_t shift = i / n_athletes;
      lv[0] = i % n_athletes;
      lv[1] = (i % n_athletes + shift) % n_events;
      lv[2] = (i % n_athletes + shift) % n_orders;
    } else {
      for (int f = 0; f < 3; ++f) lv[f] = static_cast<std::size_t>(rng.below(sizes[f]));
    }
    teamprod::fe::FeRow row;
    row.outcome = out.intercept;
    for (int f = 0; f < 3; ++f) {
      const std::string level = prefix[f] + std::to_string(lv[f]);
      row.levels.push_back(level);
      row.outcome += out.effects[f].at(level);
    }
    if (noise_sd > 0.0) row.outcome += rng.normal(0.0, noise_sd);
    out.rows.push_back(std::move(row));
  }
  return out;
}

CobbDouglas cobb_douglas(std::size_t n, std::uint64_t seed, teamprod::Task task, int attempt, double theta,
                         double sigma, double noise_sd) {
  teamprod::Rng rng(seed);
  CobbDouglas out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(0.5, 2.0);
    const double y = rng.uniform(0.5, 2.0);
    const double a = std::exp(rng.normal(0.0, sigma));
    double h = std::pow(a * x, theta) * std::pow(y, 1.0 - theta);
    if (noise_sd > 0.0) h = std::max(h + rng.normal(0.0, noise_sd), 1e-3);
    out.obs.push_back({"t" + std::to_string(i), task, attempt, x, y, h});
    out.true_a.push_back(a);
  }
  return out;
}

std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto p = std::filesystem::temp_directory_path() /
           ("teamprod_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
