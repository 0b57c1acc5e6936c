#include "teamprod/transform.hpp"

#include <algorithm>
#include <cmath>

namespace teamprod::transform {

ShiftedSeries positive_shift(std::span<const double> source, double floor, std::string source_tag) {
  if (source.empty()) throw std::invalid_argument("positive_shift: empty source");
  if (!(floor > 0.0) || !std::isfinite(floor)) throw std::invalid_argument("positive_shift: floor must be positive");
  for (double v : source) {
    if (!std::isfinite(v)) throw NonFiniteError("positive_shift: non-finite input");
  }
  ShiftedSeries out;
  out.floor = floor;
  out.source_tag = std::move(source_tag);
  out.shift_constant = *std::max_element(source.begin(), source.end());
  out.values.reserve(source.size());
  // (max - s) is exactly 0 for the maximum, so the worst value maps to floor.
  for (double v : source) out.values.push_back((out.shift_constant - v) + floor);
  return out;
}

std::vector<int> tercile_bins(std::span<const double> skills) {
  if (skills.empty()) throw std::invalid_argument("tercile_bins: empty input");
  std::vector<double> sorted(skills.begin(), skills.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double low_cut = sorted[(n + 2) / 3 - 1];
  const double high_cut = sorted[(2 * n + 2) / 3 - 1];
  std::vector<int> bins;
  bins.reserve(n);
  for (double v : skills) bins.push_back(v <= low_cut ? 1 : (v <= high_cut ? 2 : 3));
  return bins;
}

}  // namespace teamprod::transform
