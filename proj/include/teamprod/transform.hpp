#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace teamprod::transform {

inline constexpr double kDefaultFloor = 1e-6;

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ShiftedSeries {
  std::vector<double> values;
  double shift_constant = 0.0;  // max(source), i.e. -min(-source)
  double floor = kDefaultFloor;
  std::string source_tag;
};

// Order-reversing map from "lower is better" to strictly positive "higher is
// better": shifted_i = -source_i - min(-source) + floor. The largest source
// value lands on floor exactly.
ShiftedSeries positive_shift(std::span<const double> source, double floor = kDefaultFloor,
                             std::string source_tag = {});

// Empirical terciles, 1 = lowest third, 3 = highest. Cut points are the
// ceil(n/3)-th and ceil(2n/3)-th order statistics; values equal to a cut go
// to the lower bin.
std::vector<int> tercile_bins(std::span<const double> skills);

}  // namespace teamprod::transform
