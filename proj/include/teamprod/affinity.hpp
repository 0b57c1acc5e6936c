#pragma once

// Latent team-task efficiency recovery.
//
// For each observation the conditional rank tau = G(h | x, y) is a
// kernel-weighted empirical CDF of team output among observations with
// similar inputs. Under constant returns to scale h / x = m(A, y / x), so the
// efficiency scale is read off a reference distribution of h / x built around
// a fixed input point (x_ref, y_baseline): a_raw is its tau-quantile. Because
// every observation is mapped through the same reference distribution, a_raw
// is a common monotone transform of the conditional rank.
//
// Normalization is a per-slice affine map: smallest a_raw -> 1 and the
// reference distribution's anchor quantile (default median) -> 100.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "teamprod/types.hpp"

namespace teamprod::affinity {

struct TeamTaskObservation {
  std::string team_id;
  Task task = Task::start;
  int attempt = 1;
  double x = 0.0;  // Player 1 (driver) transformed skill
  double y = 0.0;  // Player 2 (brakeman) transformed skill
  double h = 0.0;  // transformed residualized team output

  Slice slice() const { return {task, attempt}; }
  bool operator==(const TeamTaskObservation&) const = default;
};

inline constexpr double kMinInput = 1e-6;
inline constexpr std::size_t kMinSliceSize = 5;
inline constexpr double kMinTotalWeight = 1e-12;

enum class KernelType { gaussian, epanechnikov };
enum class BandwidthRule { manual, silverman };
// less_equal: tau = 1 reachable at the slice maximum; strict_less: tau = 0
// reachable at the minimum.
enum class TieMode { less_equal, strict_less };
enum class ReferenceX { slice_median, observation };

struct KernelConfig {
  KernelType kernel = KernelType::gaussian;
  BandwidthRule bandwidth_rule = BandwidthRule::silverman;
  double bandwidth_x = 0.0;
  double bandwidth_y = 0.0;
  int quantile_grid_size = 256;
  std::optional<double> baseline_y;  // unset: median y of the slice
  TieMode tie_mode = TieMode::less_equal;
  bool leave_one_out = false;
  double anchor_tau = 0.5;
  ReferenceX reference_x = ReferenceX::slice_median;

  void validate() const;
};

class AffinityError : public std::runtime_error {
 public:
  enum class Kind { InvalidConfig, InvalidObservation, EmptyTaskSlice, InsufficientData, InsufficientSupport };
  AffinityError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Bandwidths {
  double x = 0.0;
  double y = 0.0;
};

// 1.06 * sd * n^(-1/5) with the sample sd. A constant series gets bandwidth
// 1: any positive value gives equal weights there.
double silverman_bandwidth(std::span<const double> values);

double kernel_value(KernelType kernel, double u);

// Weighted distribution of h / x around a fixed input point, discretized on
// an equally spaced tau grid of quantile_grid_size points.
class ReferenceDistribution {
 public:
  ReferenceDistribution(std::vector<double> support, std::vector<double> weights, int grid_size);

  // Weighted share of support values <= value.
  double cdf(double value) const;
  // Linear interpolation on the tau grid; tau is clamped to [0, 1].
  double quantile(double tau) const;

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& support() const { return support_; }

 private:
  std::vector<double> support_;  // sorted, positive weight only
  std::vector<double> cumulative_;
  std::vector<double> grid_;
};

// One (task, attempt) slice with resolved bandwidths and baseline.
class KernelSlice {
 public:
  KernelSlice(std::vector<TeamTaskObservation> observations, const KernelConfig& cfg);

  const std::vector<TeamTaskObservation>& observations() const { return obs_; }
  const Bandwidths& bandwidths() const { return bw_; }
  double baseline_y() const { return baseline_y_; }
  double median_x() const { return median_x_; }
  const KernelConfig& config() const { return cfg_; }

  double weight(std::size_t i, double x0, double y0) const;

  // Kernel conditional CDF of h at (x, y, h) of the target. skip_index drops
  // one observation from the sums (leave-one-out).
  double conditional_rank(const TeamTaskObservation& target,
                          std::optional<std::size_t> skip_index = std::nullopt) const;
  double conditional_rank_of(std::size_t i) const;

  ReferenceDistribution reference(double x_target) const;

 private:
  std::vector<TeamTaskObservation> obs_;
  KernelConfig cfg_;
  Bandwidths bw_;
  double baseline_y_ = 0.0;
  double median_x_ = 0.0;
};

double conditional_rank(const TeamTaskObservation& target, std::span<const TeamTaskObservation> slice,
                        const KernelConfig& cfg);
double reference_quantile(double tau, double x_target, std::span<const TeamTaskObservation> slice,
                          const KernelConfig& cfg);

struct EfficiencyEstimate {
  std::string team_id;
  Task task = Task::start;
  int attempt = 1;
  double tau = 0.0;
  double a_raw = 0.0;
  double a_normalized = 0.0;

  Slice slice() const { return {task, attempt}; }
};

struct ScaleInfo {
  double min_raw = 0.0;
  double anchor_raw = 0.0;
  bool degenerate = false;
};

// a_normalized = 1 + 99 (a_raw - min) / (anchor - min). When the anchor does
// not exceed the minimum the slice falls back to 1 + (a_raw - min) and is
// flagged degenerate.
ScaleInfo normalize_efficiency(std::span<EfficiencyEstimate> slice_estimates, double anchor_raw);

struct SliceReport {
  Slice slice;
  std::size_t n = 0;
  Bandwidths bandwidths;
  double baseline_y = 0.0;
  double reference_x = 0.0;
  ScaleInfo scale;
  std::optional<std::string> error;
};

struct RecoveryResult {
  // Aligned with the input; empty where the observation's slice failed.
  std::vector<std::optional<EfficiencyEstimate>> estimates;
  std::vector<SliceReport> slices;
};

RecoveryResult recover_efficiency(const std::vector<TeamTaskObservation>& dataset, const KernelConfig& cfg);

struct SummaryRow {
  Slice slice;
  std::size_t n = 0;  // unique teams
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;

  bool operator==(const SummaryRow&) const = default;
};

// Team means of a_normalized per slice, then moments across teams. SD is the
// sample SD (n - 1), 0 for a single team. Rows ordered start_1, start_2,
// riding_1, riding_2.
std::vector<SummaryRow> summarize_efficiency(std::span<const EfficiencyEstimate> estimates);

std::string summary_row_label(const Slice& s);  // "Start-phase (1st attempt)"

void write_estimates_csv(std::ostream& out, std::span<const EfficiencyEstimate> estimates);
std::vector<EfficiencyEstimate> read_estimates_csv(std::istream& in);
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in);

nlohmann::json to_json(const TeamTaskObservation& o);
TeamTaskObservation observation_from_json(const nlohmann::json& j);
void write_observations(std::ostream& out, std::span<const TeamTaskObservation> obs);
std::vector<TeamTaskObservation> read_observations(std::istream& in);

}  // namespace teamprod::affinity
