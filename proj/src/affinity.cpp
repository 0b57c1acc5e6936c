#include "teamprod/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>

#include "teamprod/csv.hpp"

namespace teamprod::affinity {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_observation(const TeamTaskObservation& o) {
  const bool ok = std::isfinite(o.x) && std::isfinite(o.y) && std::isfinite(o.h) && o.x >= kMinInput &&
                  o.y >= kMinInput && o.h >= kMinInput && (o.attempt == 1 || o.attempt == 2);
  if (!ok) {
    throw AffinityError(AffinityError::Kind::InvalidObservation,
                        "observation " + o.team_id + " has inputs/output below 1e-6 or a bad attempt");
  }
}

const std::string kTableHeader[] = {"slice", "N", "Mean", "SD", "Min", "Max"};

}  // namespace

void KernelConfig::validate() const {
  auto invalid = [](const std::string& m) { return AffinityError(AffinityError::Kind::InvalidConfig, m); };
  if (quantile_grid_size < 64) throw invalid("quantile_grid_size must be >= 64");
  if (bandwidth_rule == BandwidthRule::manual && !(bandwidth_x > 0.0 && bandwidth_y > 0.0)) {
    throw invalid("manual bandwidths must be positive");
  }
  if (!(anchor_tau >= 0.0 && anchor_tau <= 1.0)) throw invalid("anchor_tau must lie in [0, 1]");
  if (baseline_y && !(*baseline_y > 0.0 && std::isfinite(*baseline_y))) throw invalid("baseline_y must be positive");
}

double silverman_bandwidth(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  if (values.size() < 2) return 1.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) return 1.0;
  return 1.06 * sd * std::pow(n, -0.2);
}

double kernel_value(KernelType kernel, double u) {
  if (kernel == KernelType::gaussian) return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

ReferenceDistribution::ReferenceDistribution(std::vector<double> support, std::vector<double> weights,
                                             int grid_size) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (weights[i] > 0.0) order.push_back(i);
  }
  if (order.empty()) {
    throw AffinityError(AffinityError::Kind::InsufficientSupport, "reference distribution has no weight");
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return support[a] < support[b]; });
  double total = 0.0;
  for (auto i : order) {
    total += weights[i];
    support_.push_back(support[i]);
    cumulative_.push_back(total);
  }
  if (total < kMinTotalWeight) {
    throw AffinityError(AffinityError::Kind::InsufficientSupport, "reference kernel weight below 1e-12");
  }
  for (double& c : cumulative_) c /= total;

  grid_.resize(static_cast<std::size_t>(grid_size));
  std::size_t k = 0;
  for (int j = 0; j < grid_size; ++j) {
    const double p = static_cast<double>(j) / static_cast<double>(grid_size - 1);
    while (k + 1 < cumulative_.size() && cumulative_[k] < p) ++k;
    grid_[static_cast<std::size_t>(j)] = support_[k];
  }
}

double ReferenceDistribution::cdf(double value) const {
  auto it = std::upper_bound(support_.begin(), support_.end(), value);
  if (it == support_.begin()) return 0.0;
  return cumulative_[static_cast<std::size_t>(it - support_.begin()) - 1];
}

double ReferenceDistribution::quantile(double tau) const {
  tau = std::clamp(tau, 0.0, 1.0);
  const double pos = tau * static_cast<double>(grid_.size() - 1);
  const auto j = std::min(static_cast<std::size_t>(pos), grid_.size() - 2);
  const double frac = pos - static_cast<double>(j);
  return grid_[j] + frac * (grid_[j + 1] - grid_[j]);
}

KernelSlice::KernelSlice(std::vector<TeamTaskObservation> observations, const KernelConfig& cfg)
    : obs_(std::move(observations)), cfg_(cfg) {
  cfg_.validate();
  if (obs_.empty()) throw AffinityError(AffinityError::Kind::EmptyTaskSlice, "empty task slice");
  const Slice s = obs_.front().slice();
  for (const auto& o : obs_) {
    check_observation(o);
    if (o.slice() != s) {
      throw AffinityError(AffinityError::Kind::InvalidObservation, "observations from different slices");
    }
  }
  if (obs_.size() < kMinSliceSize) {
    throw AffinityError(AffinityError::Kind::InsufficientData,
                        "slice " + slice_label(s) + " has " + std::to_string(obs_.size()) +
                            " observations, needs " + std::to_string(kMinSliceSize));
  }
  std::vector<double> xs, ys;
  xs.reserve(obs_.size());
  ys.reserve(obs_.size());
  for (const auto& o : obs_) {
    xs.push_back(o.x);
    ys.push_back(o.y);
  }
  if (cfg_.bandwidth_rule == BandwidthRule::manual) {
    bw_ = {cfg_.bandwidth_x, cfg_.bandwidth_y};
  } else {
    bw_ = {silverman_bandwidth(xs), silverman_bandwidth(ys)};
  }
  median_x_ = median_of(xs);
  baseline_y_ = cfg_.baseline_y ? *cfg_.baseline_y : median_of(ys);
}

double KernelSlice::weight(std::size_t i, double x0, double y0) const {
  const auto& o = obs_[i];
  return kernel_value(cfg_.kernel, (o.x - x0) / bw_.x) * kernel_value(cfg_.kernel, (o.y - y0) / bw_.y);
}

double KernelSlice::conditional_rank(const TeamTaskObservation& target, std::optional<std::size_t> skip_index) const {
  double below = 0.0;
  double total = 0.0;
  const bool strict = cfg_.tie_mode == TieMode::strict_less;
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    if (skip_index && *skip_index == i) continue;
    const double w = weight(i, target.x, target.y);
    total += w;
    if (strict ? obs_[i].h < target.h : obs_[i].h <= target.h) below += w;
  }
  if (total < kMinTotalWeight) {
    throw AffinityError(AffinityError::Kind::InsufficientSupport,
                        "kernel weight below 1e-12 at target " + target.team_id);
  }
  return std::clamp(below / total, 0.0, 1.0);
}

double KernelSlice::conditional_rank_of(std::size_t i) const {
  return conditional_rank(obs_.at(i), cfg_.leave_one_out ? std::optional<std::size_t>(i) : std::nullopt);
}

ReferenceDistribution KernelSlice::reference(double x_target) const {
  std::vector<double> ratio(obs_.size());
  std::vector<double> w(obs_.size());
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    ratio[i] = obs_[i].h / obs_[i].x;
    w[i] = weight(i, x_target, baseline_y_);
  }
  return ReferenceDistribution(std::move(ratio), std::move(w), cfg_.quantile_grid_size);
}

double conditional_rank(const TeamTaskObservation& target, std::span<const TeamTaskObservation> slice,
                        const KernelConfig& cfg) {
  KernelSlice ks({slice.begin(), slice.end()}, cfg);
  std::optional<std::size_t> skip;
  if (cfg.leave_one_out) {
    for (std::size_t i = 0; i < slice.size(); ++i) {
      if (slice[i] == target) {
        skip = i;
        break;
      }
    }
  }
  return ks.conditional_rank(target, skip);
}

double reference_quantile(double tau, double x_target, std::span<const TeamTaskObservation> slice,
                          const KernelConfig& cfg) {
  KernelSlice ks({slice.begin(), slice.end()}, cfg);
  return ks.reference(x_target).quantile(tau);
}

ScaleInfo normalize_efficiency(std::span<EfficiencyEstimate> slice_estimates, double anchor_raw) {
  ScaleInfo info;
  info.anchor_raw = anchor_raw;
  if (slice_estimates.empty()) throw std::invalid_argument("normalize_efficiency: empty slice");
  info.min_raw = slice_estimates.front().a_raw;
  for (const auto& e : slice_estimates) info.min_raw = std::min(info.min_raw, e.a_raw);
  const double span = anchor_raw - info.min_raw;
  info.degenerate = !(span > 0.0);
  const double slope = info.degenerate ? 1.0 : 99.0 / span;
  for (auto& e : slice_estimates) e.a_normalized = 1.0 + slope * (e.a_raw - info.min_raw);
  return info;
}

RecoveryResult recover_efficiency(const std::vector<TeamTaskObservation>& dataset, const KernelConfig& cfg) {
  cfg.validate();
  RecoveryResult result;
  result.estimates.resize(dataset.size());

  std::map<Slice, std::vector<std::size_t>> by_slice;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_slice[dataset[i].slice()].push_back(i);

  for (const auto& [slice, rows] : by_slice) {
    SliceReport report;
    report.slice = slice;
    report.n = rows.size();
    try {
      std::vector<TeamTaskObservation> obs;
      obs.reserve(rows.size());
      for (auto r : rows) obs.push_back(dataset[r]);
      KernelSlice ks(std::move(obs), cfg);
      report.bandwidths = ks.bandwidths();
      report.baseline_y = ks.baseline_y();
      report.reference_x = ks.median_x();

      const auto common_ref = ks.reference(ks.median_x());
      std::vector<EfficiencyEstimate> est;
      est.reserve(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& o = ks.observations()[k];
        EfficiencyEstimate e{o.team_id, o.task, o.attempt, ks.conditional_rank_of(k), 0.0, 0.0};
        e.a_raw = cfg.reference_x == ReferenceX::slice_median ? common_ref.quantile(e.tau)
                                                              : ks.reference(o.x).quantile(e.tau);
        est.push_back(std::move(e));
      }
      report.scale = normalize_efficiency(est, common_ref.quantile(cfg.anchor_tau));
      for (std::size_t k = 0; k < rows.size(); ++k) result.estimates[rows[k]] = std::move(est[k]);
    } catch (const AffinityError& e) {
      if (e.kind() == AffinityError::Kind::InvalidConfig) throw;
      report.error = e.what();
    }
    result.slices.push_back(std::move(report));
  }
  return result;
}

std::string summary_row_label(const Slice& s) {
  std::string label = s.task == Task::start ? "Start-phase" : "Riding-phase";
  label += s.attempt == 1 ? " (1st attempt)" : s.attempt == 2 ? " (2nd attempt)"
                                                             : " (attempt " + std::to_string(s.attempt) + ")";
  return label;
}

std::vector<SummaryRow> summarize_efficiency(std::span<const EfficiencyEstimate> estimates) {
  // slice -> team -> (sum, count)
  std::map<Slice, std::map<std::string, std::pair<double, int>>> teams;
  for (const auto& e : estimates) {
    auto& acc = teams[e.slice()][e.team_id];
    acc.first += e.a_normalized;
    acc.second += 1;
  }
  std::vector<SummaryRow> rows;
  for (Task task : {Task::start, Task::riding}) {
    for (auto it = teams.lower_bound({task, 0}); it != teams.end() && it->first.task == task; ++it) {
      std::vector<double> means;
      for (const auto& [team, acc] : it->second) means.push_back(acc.first / acc.second);
      SummaryRow row;
      row.slice = it->first;
      row.n = means.size();
      row.mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(row.n);
      double ss = 0.0;
      for (double m : means) ss += (m - row.mean) * (m - row.mean);
      row.sd = row.n > 1 ? std::sqrt(ss / static_cast<double>(row.n - 1)) : 0.0;
      row.min = *std::min_element(means.begin(), means.end());
      row.max = *std::max_element(means.begin(), means.end());
      rows.push_back(row);
    }
  }
  return rows;
}

void write_estimates_csv(std::ostream& out, std::span<const EfficiencyEstimate> estimates) {
  out << "team_id,task,attempt,tau,a_raw,a_normalized\n";
  for (const auto& e : estimates) {
    out << csv::join_line({e.team_id, std::string(to_string(e.task)), std::to_string(e.attempt),
                           csv::format_double(e.tau), csv::format_double(e.a_raw),
                           csv::format_double(e.a_normalized)})
        << '\n';
  }
}

std::vector<EfficiencyEstimate> read_estimates_csv(std::istream& in) {
  const auto table = csv::read_table(in);
  const std::vector<std::string> expected = {"team_id", "task", "attempt", "tau", "a_raw", "a_normalized"};
  if (table.header != expected) throw std::runtime_error("estimates file: unexpected header");
  std::vector<EfficiencyEstimate> out;
  for (const auto& row : table.rows) {
    EfficiencyEstimate e;
    long long attempt = 0;
    auto task = row.size() == 6 ? parse_task(row[1]) : std::nullopt;
    if (!task || !csv::parse_int(row[2], attempt) || !csv::parse_double(row[3], e.tau) ||
        !csv::parse_double(row[4], e.a_raw) || !csv::parse_double(row[5], e.a_normalized)) {
      throw std::runtime_error("estimates file: malformed row for team '" + row.front() + "'");
    }
    e.team_id = row[0];
    e.task = *task;
    e.attempt = static_cast<int>(attempt);
    out.push_back(std::move(e));
  }
  return out;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  csv::Table table;
  table.header.assign(std::begin(kTableHeader), std::end(kTableHeader));
  for (const auto& r : rows) {
    table.rows.push_back({summary_row_label(r.slice), std::to_string(r.n), csv::format_double(r.mean),
                          csv::format_double(r.sd), csv::format_double(r.min), csv::format_double(r.max)});
  }
  csv::write_table(out, table);
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  const auto table = csv::read_table(in);
  if (!std::equal(table.header.begin(), table.header.end(), std::begin(kTableHeader), std::end(kTableHeader))) {
    throw std::runtime_error("summary file: unexpected header");
  }
  std::vector<SummaryRow> out;
  for (const auto& row : table.rows) {
    SummaryRow r;
    bool matched = false;
    for (Task t : {Task::start, Task::riding}) {
      for (int a : {1, 2}) {
        if (summary_row_label({t, a}) == row.at(0)) {
          r.slice = {t, a};
          matched = true;
        }
      }
    }
    long long n = 0;
    if (!matched || row.size() != 6 || !csv::parse_int(row[1], n) || !csv::parse_double(row[2], r.mean) ||
        !csv::parse_double(row[3], r.sd) || !csv::parse_double(row[4], r.min) ||
        !csv::parse_double(row[5], r.max)) {
      throw std::runtime_error("summary file: malformed row '" + row.at(0) + "'");
    }
    r.n = static_cast<std::size_t>(n);
    out.push_back(r);
  }
  return out;
}

nlohmann::json to_json(const TeamTaskObservation& o) {
  return {{"team_id", o.team_id}, {"task", to_string(o.task)}, {"attempt", o.attempt},
          {"x", o.x},             {"y", o.y},                  {"h", o.h}};
}

TeamTaskObservation observation_from_json(const nlohmann::json& j) {
  TeamTaskObservation o;
  o.team_id = j.at("team_id").get<std::string>();
  auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw AffinityError(AffinityError::Kind::InvalidObservation, "unknown task");
  o.task = *task;
  o.attempt = j.at("attempt").get<int>();
  o.x = j.at("x").get<double>();
  o.y = j.at("y").get<double>();
  o.h = j.at("h").get<double>();
  return o;
}

void write_observations(std::ostream& out, std::span<const TeamTaskObservation> obs) {
  for (const auto& o : obs) out << to_json(o).dump() << '\n';
}

std::vector<TeamTaskObservation> read_observations(std::istream& in) {
  std::vector<TeamTaskObservation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    out.push_back(observation_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace teamprod::affinity
