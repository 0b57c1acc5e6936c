// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "teamprod/affinity.hpp"
#include "teamprod/elasticity.hpp"
#include "teamprod/pipeline.hpp"
#include "teamprod/report.hpp"
#include "teamprod/rng.hpp"
#include "teamprod/synth.hpp"
#include "teamprod/transform.hpp"

using namespace teamprod;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string slice_name(const Slice& s) { return std::string(to_string(s.task)) + "_" + std::to_string(s.attempt); }

std::map<Slice, std::vector<std::size_t>> group_by_slice(const std::vector<affinity::TeamTaskObservation>& obs) {
  std::map<Slice, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < obs.size(); ++i) out[obs[i].slice()].push_back(i);
  return out;
}

// 1. Spearman(a_raw, true A) per slice on the oracle observations.
Outcome affinity_recovery() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = synth::DGPConfig::large(2000);
  cfg.theta = 0.4;
  cfg.affinity_law = synth::Law::lognormal(0.0, 0.3);
  cfg.noise_sd = 0.02;
  cfg.seed = 2024;
  const auto data = synth::generate(cfg);
  const auto obs = synth::oracle_observations(data.truth);
  const auto res = affinity::recover_efficiency(obs, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream d;
  for (const auto& [slice, rows] : group_by_slice(obs)) {
    std::vector<double> est, truth;
    for (auto i : rows) {
      if (!res.estimates[i]) continue;
      est.push_back(res.estimates[i]->a_raw);
      truth.push_back(data.truth.team[i].true_a);
    }
    const double rho = oracle::spearman(est, truth);
    d << slice_name(slice) << " n=" << rows.size() << " rho=" << fmt(rho) << "; ";
    o.require(rows.size() == 2000, "slice size " + std::to_string(rows.size()));
    o.require(est.size() == rows.size(), "missing estimates in " + slice_name(slice));
    o.require(rho >= 0.90, slice_name(slice) + " rho " + fmt(rho));
  }
  d << "runtime " << fmt(secs) << " s";
  o.require(secs < 120.0, "runtime " + fmt(secs));
  if (o.pass) o.detail = d.str();
  else o.detail += " (" + d.str() + ")";
  return o;
}

// 2. Kernel conditional rank against the exact per-cell CDF on gridded skills.
Outcome kernel_vs_oracle() {
  Outcome o;
  auto cfg = synth::DGPConfig::large(5000);
  cfg.skill_law_x = synth::Law::grid(0.5, 2.0, 3);
  cfg.skill_law_y = synth::Law::grid(0.5, 2.0, 3);
  cfg.seed = 99;
  const auto data = synth::generate(cfg);
  const auto obs = synth::oracle_observations(data.truth);
  std::ostringstream d;
  for (const auto& [slice, rows] : group_by_slice(obs)) {
    std::vector<affinity::TeamTaskObservation> s;
    for (auto i : rows) s.push_back(obs[i]);
    const affinity::KernelSlice ks(s, {});
    double ss = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double diff = ks.conditional_rank_of(k) - synth::oracle_conditional_rank(s[k], s);
      ss += diff * diff;
    }
    const double rmse = std::sqrt(ss / static_cast<double>(s.size()));
    d << slice_name(slice) << " rmse=" << fmt(rmse) << "; ";
    o.require(s.size() == 5000, "slice size");
    o.require(rmse < 0.05, slice_name(slice) + " rmse " + fmt(rmse));
  }
  if (o.pass) o.detail = d.str();
  return o;
}

// 3. Mean elasticities on the planted effective inputs of a CRS DGP.
Outcome elasticity_recovery() {
  Outcome o;
  auto cfg = synth::DGPConfig::large(2000);
  cfg.seed = 7;
  const auto data = synth::generate(cfg);
  std::ostringstream d;
  for (Task task : {Task::start, Task::riding}) {
    for (int attempt : {1, 2}) {
      const Slice slice{task, attempt};
      const auto pts = synth::oracle_production_points(data.truth, slice);
      const auto fit = elasticity::fit_production_polynomial(pts, slice);
      double ex = 0.0, ey = 0.0;
      for (const auto& p : pts) {
        const auto e = elasticity::elasticity_at(fit, p.ax, p.y, p.ax, p.h);
        ex += e.elasticity_x;
        ey += e.elasticity_y;
      }
      ex /= static_cast<double>(pts.size());
      ey /= static_cast<double>(pts.size());
      d << slice_name(slice) << " ex=" << fmt(ex) << " ey=" << fmt(ey) << "; ";
      o.require(ex >= 0.35 && ex <= 0.45, slice_name(slice) + " ex " + fmt(ex));
      o.require(ey >= 0.55 && ey <= 0.65, slice_name(slice) + " ey " + fmt(ey));
      o.require(ex + ey >= 0.95 && ex + ey <= 1.05, slice_name(slice) + " sum " + fmt(ex + ey));
    }
  }
  if (o.pass) o.detail = d.str();
  return o;
}

double contrast_rmse(const std::vector<std::map<std::string, double>>& a,
                     const std::vector<std::map<std::string, double>>& b) {
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    for (const auto& [lvl, v] : a[f]) {
      const double diff = v - b.at(f).at(lvl);
      ss += diff * diff;
      ++n;
    }
  }
  return std::sqrt(ss / static_cast<double>(n));
}

// 4. Alternating projections: exact on planted data, equal to the dense oracle.
Outcome fe_exactness() {
  Outcome o;
  fe::FixedEffectSpec spec;
  spec.factors = {fe::Factor::athlete, fe::Factor::event, fe::Factor::starting_order};

  const auto planted = fixtures::planted_three_way(500, 11, 0.0);
  const auto fit = fe::estimate_fixed_effects(planted.rows, spec);
  std::vector<std::map<std::string, double>> truth(3);
  for (std::size_t f = 0; f < 3; ++f) {
    const double first = planted.effects[f].begin()->second;
    for (const auto& [lvl, v] : planted.effects[f]) truth[f][lvl] = v - first;
  }
  const double planted_rmse = contrast_rmse(oracle::contrasts_of(fit), truth);
  o.require(fit.converged, "n=500 fit did not converge");
  o.require(planted_rmse < 1e-8, "planted rmse " + fmt(planted_rmse));

  double worst = 0.0;
  int designs = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n = 40 + 8 * seed;  // 48..200 rows
    const std::size_t athletes = std::min<std::size_t>(n / 2, 10 + seed);
    const auto p = fixtures::planted_three_way(n, 100 + seed, 0.5, athletes, 4 + seed % 5, 3 + seed % 4);
    const auto ap = fe::estimate_fixed_effects(p.rows, spec);
    const auto dense = oracle::dense_fe(p.rows, 3);
    o.require(dense.rank == dense.columns, "oracle design rank deficient at seed " + std::to_string(seed));
    worst = std::max(worst, contrast_rmse(oracle::contrasts_of(ap), dense.contrasts));
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(ap.fitted(p.rows[i]) - dense.fitted[i]));
    ++designs;
  }
  o.require(worst < 1e-7, "dense oracle gap " + fmt(worst));
  if (o.pass) o.detail = "planted rmse " + fmt(planted_rmse) + "; dense gap " + fmt(worst) + " over " +
                         std::to_string(designs) + " designs";
  return o;
}

// 5. Positive shift floor and order reversal.
Outcome transform_contracts() {
  Outcome o;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<double> src(100);
    for (auto& v : src) v = rng.normal(0.0, 2.0);
    const auto shifted = transform::positive_shift(src);
    const double mn = *std::min_element(shifted.values.begin(), shifted.values.end());
    o.require(mn == 1e-6, "min " + fmt(mn) + " at seed " + std::to_string(seed));
    const double rho = oracle::spearman(src, shifted.values);
    o.require(rho == -1.0, "spearman " + fmt(rho) + " at seed " + std::to_string(seed));
  }
  if (o.pass) o.detail = "10 seeds x 100 points";
  return o;
}

std::vector<double> taus_of(const affinity::RecoveryResult& r) {
  std::vector<double> t;
  for (const auto& e : r.estimates) t.push_back(e ? e->tau : NAN);
  return t;
}

// 6. CDF and quantile properties.
Outcome cdf_quantile_properties() {
  Outcome o;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::string at = " at seed " + std::to_string(seed);
    const auto cd = fixtures::cobb_douglas(300, 500 + seed);
    const affinity::KernelSlice ks(cd.obs, {});

    // tau nondecreasing in h at a fixed input point.
    auto probe = cd.obs[seed % cd.obs.size()];
    double prev = -1.0;
    for (int k = 0; k <= 60; ++k) {
      probe.h = 0.1 + 0.05 * k;
      const double tau = ks.conditional_rank(probe);
      o.require(tau >= prev, "tau decreased in h" + at);
      prev = tau;
    }

    // quantile nondecreasing in tau; cdf -> quantile round trip within a grid step.
    const auto ref = ks.reference(ks.median_x());
    double q_prev = -INFINITY;
    for (int k = 0; k <= 1000; ++k) {
      const double q = ref.quantile(k / 1000.0);
      o.require(q >= q_prev, "quantile decreased in tau" + at);
      q_prev = q;
    }
    const auto& g = ref.grid();
    const double last = static_cast<double>(g.size() - 1);
    for (double v : ref.support()) {
      const double tau = ref.cdf(v);
      const double q = ref.quantile(tau);
      const auto j = std::min(static_cast<std::size_t>(tau * last), g.size() - 2);
      double step = g[j + 1] - g[j];
      if (j > 0) step = std::max(step, g[j] - g[j - 1]);
      if (j + 2 < g.size()) step = std::max(step, g[j + 2] - g[j + 1]);
      o.require(std::abs(q - v) <= step + 1e-12, "round trip off by " + fmt(std::abs(q - v)) + at);
    }

    // tau unchanged under output scaling.
    const auto base = taus_of(affinity::recover_efficiency(cd.obs, {}));
    for (double c : {0.1, 10.0}) {
      auto scaled = cd.obs;
      for (auto& s : scaled) s.h *= c;
      const auto t = taus_of(affinity::recover_efficiency(scaled, {}));
      for (std::size_t i = 0; i < t.size(); ++i) {
        o.require(std::abs(t[i] - base[i]) <= 1e-12, "tau moved under scaling by " + fmt(c) + at);
      }
    }
  }
  if (o.pass) o.detail = "20 seeds";
  return o;
}

// 7. Per-slice minimum 1 and anchor 100.
void check_normalization(Outcome& o, const std::vector<affinity::TeamTaskObservation>& obs, const std::string& tag) {
  const auto res = affinity::recover_efficiency(obs, {});
  const auto groups = group_by_slice(obs);
  for (const auto& rep : res.slices) {
    const std::string where = tag + " " + slice_name(rep.slice);
    o.require(!rep.error, where + " failed: " + rep.error.value_or(""));
    if (rep.error) continue;
    std::vector<affinity::TeamTaskObservation> s;
    for (auto i : groups.at(rep.slice)) s.push_back(obs[i]);
    const affinity::KernelSlice ks(s, {});
    const double anchor_raw = ks.reference(ks.median_x()).quantile(0.5);

    const affinity::EfficiencyEstimate* lo = nullptr;
    const affinity::EfficiencyEstimate* hi = nullptr;
    for (auto i : groups.at(rep.slice)) {
      const auto& e = *res.estimates[i];
      if (!lo || e.a_raw < lo->a_raw) lo = &e;
      if (!hi || e.a_raw > hi->a_raw) hi = &e;
    }
    o.require(!rep.scale.degenerate && hi->a_raw > lo->a_raw, where + " degenerate scale");
    o.require(std::abs(lo->a_normalized - 1.0) <= 1e-9, where + " min " + fmt(lo->a_normalized));
    // The affine map fixed by the two extremes, evaluated at the anchor.
    const double slope = (hi->a_normalized - lo->a_normalized) / (hi->a_raw - lo->a_raw);
    const double at_anchor = lo->a_normalized + slope * (anchor_raw - lo->a_raw);
    o.require(std::abs(at_anchor - 100.0) <= 1e-9, where + " anchor " + fmt(at_anchor));
  }
}

Outcome normalization_contract() {
  Outcome o;
  check_normalization(o, fixtures::cobb_douglas(400, 3).obs, "cobb-douglas");
  auto cfg = synth::DGPConfig::large(500);
  cfg.seed = 5;
  check_normalization(o, synth::oracle_observations(synth::generate(cfg).truth), "synth");
  if (o.pass) o.detail = "cobb-douglas and 4 synth slices";
  return o;
}

// 8. Published table rows and the summary column set.
Outcome report_fidelity() {
  Outcome o;
  const auto a2 = report::pairing_crosstab(fixtures::runs_from_counts(fixtures::kStartPairing),
                                           report::CellKind::count);
  o.require(a2.cells[0] == std::array<double, 3>{31, 7, 15}, "start pairing row 1");
  const auto [a3, other] =
      report::cross_skill_crosstab(fixtures::cross_runs(fixtures::kP1StartP2Riding, fixtures::kP1RidingP2Start));
  o.require(a3.cells[0] == std::array<double, 3>{18, 19, 16}, "cross-skill row 1");

  const auto cd = fixtures::cobb_douglas(50, 1);
  std::vector<affinity::EfficiencyEstimate> flat;
  for (const auto& e : affinity::recover_efficiency(cd.obs, {}).estimates) flat.push_back(*e);
  std::stringstream ss;
  affinity::write_summary_csv(ss, affinity::summarize_efficiency(flat));
  std::string header;
  std::getline(ss, header);
  o.require(header == "slice,N,Mean,SD,Min,Max", "summary header " + header);
  if (o.pass) o.detail = "[31, 7, 15], [18, 19, 16], " + header;
  return o;
}

// 9. Two pipeline runs on the same synthetic data give identical hashes.
Outcome determinism() {
  Outcome o;
  const auto dir = fixtures::temp_dir("acceptance_det");
  std::vector<pipeline::PipelineResult> results;
  for (const char* run : {"a", "b"}) {
    auto cfg = synth::DGPConfig::season_scale();
    cfg.seed = 314;
    const auto data = synth::generate(cfg);
    const auto input = dir / (std::string(run) + ".csv");
    {
      std::ofstream f(input, std::ios::binary);
      ingest::write_results_csv(f, data.runs);
    }
    pipeline::PipelineConfig pc;
    pc.input = input;
    pc.output_dir = dir / run;
    results.push_back(pipeline::run_pipeline(pc));
    o.require(results.back().ok, std::string("run ") + run + " failed: " + results.back().error);
  }
  if (o.pass) {
    const auto& a = results[0].artifacts;
    const auto& b = results[1].artifacts;
    o.require(a.size() == b.size() && !a.empty(), "artifact lists differ");
    for (std::size_t i = 0; o.pass && i < a.size(); ++i) {
      o.require(a[i].name == b[i].name && a[i].sha256 == b[i].sha256, "hash differs: " + a[i].name);
    }
    o.require(pipeline::sha256_file(dir / "a" / "manifest.json") == pipeline::sha256_file(dir / "b" / "manifest.json"),
              "manifest differs");
    if (o.pass) o.detail = std::to_string(a.size()) + " artifacts identical";
  }
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 affinity recovery", affinity_recovery},
      {"2 kernel vs oracle rank", kernel_vs_oracle},
      {"3 elasticity recovery", elasticity_recovery},
      {"4 fixed-effects exactness", fe_exactness},
      {"5 transform contracts", transform_contracts},
      {"6 cdf/quantile properties", cdf_quantile_properties},
      {"7 normalization contract", normalization_contract},
      {"8 report fidelity", report_fidelity},
      {"9 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %s  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
