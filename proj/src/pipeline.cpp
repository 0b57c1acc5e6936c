#include "teamprod/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "teamprod/csv.hpp"
#include "teamprod/report.hpp"

namespace teamprod::pipeline {

namespace fs = std::filesystem;

namespace {

using affinity::EfficiencyEstimate;
using affinity::TeamTaskObservation;
using ingest::RunRecord;

void log_line(std::ostream* log, const std::string& msg) {
  if (log) *log << "[teamprod] " << msg << '\n';
}

// Opens a file for writing in binary mode so bytes do not depend on the
// platform's newline convention.
std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

struct Moments {
  std::size_t n = 0;
  double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(m.n);
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = m.n > 1 ? std::sqrt(ss / static_cast<double>(m.n - 1)) : 0.0;
  m.min = *std::min_element(v.begin(), v.end());
  m.max = *std::max_element(v.begin(), v.end());
  return m;
}

std::string ordinal(int attempt) {
  return attempt == 1 ? "1st" : attempt == 2 ? "2nd" : std::to_string(attempt) + "th";
}

std::string capitalized(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

template <class Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

}  // namespace

affinity::KernelConfig kernel_config_from_json(const nlohmann::json& j, affinity::KernelConfig k) {
  using namespace affinity;
  if (j.contains("kernel")) {
    const auto s = j.at("kernel").get<std::string>();
    if (s == "gaussian") k.kernel = KernelType::gaussian;
    else if (s == "epanechnikov") k.kernel = KernelType::epanechnikov;
    else throw ConfigError("unknown kernel '" + s + "'");
  }
  if (j.contains("bandwidth")) {
    const auto& b = j.at("bandwidth");
    if (b.is_string() && (b == "auto" || b == "silverman")) {
      k.bandwidth_rule = BandwidthRule::silverman;
    } else if (b.is_number()) {
      k.bandwidth_rule = BandwidthRule::manual;
      k.bandwidth_x = k.bandwidth_y = b.get<double>();
    } else if (b.is_array() && b.size() == 2) {
      k.bandwidth_rule = BandwidthRule::manual;
      k.bandwidth_x = b[0].get<double>();
      k.bandwidth_y = b[1].get<double>();
    } else {
      throw ConfigError("bandwidth must be \"auto\", a number or [bx, by]");
    }
  }
  if (j.contains("grid")) k.quantile_grid_size = j.at("grid").get<int>();
  if (j.contains("baseline_y")) {
    const auto& b = j.at("baseline_y");
    if (b.is_string() && b == "median") k.baseline_y.reset();
    else if (b.is_number()) k.baseline_y = b.get<double>();
    else throw ConfigError("baseline_y must be \"median\" or a number");
  }
  if (j.contains("tie_mode")) {
    const auto s = j.at("tie_mode").get<std::string>();
    if (s == "le") k.tie_mode = TieMode::less_equal;
    else if (s == "lt") k.tie_mode = TieMode::strict_less;
    else throw ConfigError("tie_mode must be \"le\" or \"lt\"");
  }
  if (j.contains("leave_one_out")) k.leave_one_out = j.at("leave_one_out").get<bool>();
  if (j.contains("anchor_tau")) k.anchor_tau = j.at("anchor_tau").get<double>();
  if (j.contains("reference_x")) {
    const auto s = j.at("reference_x").get<std::string>();
    if (s == "slice_median") k.reference_x = ReferenceX::slice_median;
    else if (s == "observation") k.reference_x = ReferenceX::observation;
    else throw ConfigError("reference_x must be \"slice_median\" or \"observation\"");
  }
  try {
    k.validate();
  } catch (const AffinityError& e) {
    throw ConfigError(e.what());
  }
  return k;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  PipelineConfig cfg;
  try {
    if (j.contains("ingest")) {
      const auto& s = j.at("ingest");
      if (s.contains("input")) cfg.input = resolve(s.at("input").get<std::string>(), base_dir);
      if (s.contains("schema")) {
        const auto& schema = s.at("schema");
        if (schema.is_string()) {
          const auto path = resolve(schema.get<std::string>(), base_dir);
          std::ifstream in(path);
          if (!in) throw ConfigError("cannot open schema " + path.string());
          cfg.schema = ingest::ColumnSchema::from_json(nlohmann::json::parse(in));
        } else {
          cfg.schema = ingest::ColumnSchema::from_json(schema);
        }
      }
      if (s.contains("max_attempts")) cfg.max_attempts = s.at("max_attempts").get<int>();
    }
    if (j.contains("fe")) {
      const auto& s = j.at("fe");
      if (s.contains("tolerance")) cfg.fe.tolerance = s.at("tolerance").get<double>();
      if (s.contains("max_iterations")) cfg.fe.max_iterations = s.at("max_iterations").get<int>();
      if (s.contains("reference_policy")) {
        const auto p = s.at("reference_policy").get<std::string>();
        if (p == "mean_zero") cfg.fe.reference_policy = fe::ReferencePolicy::mean_zero;
        else if (p == "first_level_zero") cfg.fe.reference_policy = fe::ReferencePolicy::first_level_zero;
        else throw ConfigError("unknown reference_policy '" + p + "'");
      }
    }
    if (j.contains("transform") && j.at("transform").contains("floor")) {
      cfg.floor = j.at("transform").at("floor").get<double>();
    }
    if (j.contains("estimate")) cfg.kernel = kernel_config_from_json(j.at("estimate"));
    if (j.contains("elasticity")) {
      const auto& s = j.at("elasticity");
      if (s.contains("variant")) {
        const auto v = s.at("variant").get<std::string>();
        if (v == "chain_rule") cfg.elasticity.variant = elasticity::Variant::chain_rule;
        else if (v == "literal") cfg.elasticity.variant = elasticity::Variant::literal;
        else throw ConfigError("unknown elasticity variant '" + v + "'");
      }
      if (s.contains("intercept")) cfg.elasticity.intercept = s.at("intercept").get<bool>();
    }
    if (j.contains("output") && j.at("output").contains("dir")) {
      cfg.output_dir = resolve(j.at("output").at("dir").get<std::string>(), base_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (!(cfg.floor > 0.0)) throw ConfigError("transform floor must be positive");
  if (!(cfg.fe.tolerance > 0.0) || cfg.fe.max_iterations < 1) throw ConfigError("bad fe tolerance/max_iterations");
  return cfg;
}

std::vector<RunRecord> IngestOutput::dataset() const {
  std::vector<RunRecord> out = monobob;
  out.insert(out.end(), linked.team_runs.begin(), linked.team_runs.end());
  return out;
}

IngestOutput run_ingest(std::istream& source, const ingest::ColumnSchema& schema, int max_attempts) {
  IngestOutput out;
  auto dedup = ingest::drop_duplicates(ingest::parse_results(source, schema));
  out.exclusions = std::move(dedup.dropped);
  std::vector<RunRecord> kept;
  for (auto& r : dedup.kept) {
    if (r.attempt_index > max_attempts) {
      out.exclusions.push_back({r, "attempt beyond the first " + std::to_string(max_attempts)});
    } else {
      kept.push_back(std::move(r));
    }
  }
  std::vector<RunRecord> mono, team;
  for (auto& r : kept) (r.discipline == ingest::Discipline::monobob ? mono : team).push_back(std::move(r));
  out.linked = ingest::link_athletes(mono, team);
  for (auto& r : mono) {
    if (out.linked.monobob_runs.at(r.athlete1_id) >= ingest::kMinMonobobRuns) {
      out.monobob.push_back(std::move(r));
    } else {
      out.exclusions.push_back({r, "athlete has fewer than 2 monobob runs"});
    }
  }
  out.exclusions.insert(out.exclusions.end(), out.linked.exclusions.begin(), out.linked.exclusions.end());
  return out;
}

SkillOutput estimate_skills(const IngestOutput& ingested, const FeOptions& options, double floor) {
  SkillOutput out;
  for (Dimension d : {Dimension::start, Dimension::riding, Dimension::finish}) {
    fe::FixedEffectSpec spec;
    spec.outcome = d;
    spec.factors = {fe::Factor::athlete, fe::Factor::event, fe::Factor::starting_order};
    spec.reference_policy = options.reference_policy;
    spec.tolerance = options.tolerance;
    spec.max_iterations = options.max_iterations;
    std::vector<fe::FeRow> rows;
    for (const auto& r : ingested.monobob) {
      rows.push_back({r.outcome(d), {r.athlete1_id, r.event_id, std::to_string(r.starting_number)}});
    }
    auto fit = fe::estimate_fixed_effects(rows, spec);
    if (!fit.converged) {
      throw StageError("fe", std::string("solo ") + std::string(to_string(d)) + " fit did not converge");
    }
    auto skills = fe::athlete_skill(fit, ingested.linked.monobob_runs);
    std::vector<fe::SkillProfile> linked;
    for (auto& p : skills.profiles) {
      if (ingested.linked.eligible_athletes.count(p.athlete_id)) linked.push_back(std::move(p));
    }
    if (linked.empty()) throw StageError("transform", "no linked athlete has a skill estimate");
    std::vector<double> raw;
    for (const auto& p : linked) raw.push_back(p.raw_fe);
    const auto shifted = transform::positive_shift(raw, floor, "solo_" + std::string(to_string(d)));
    for (std::size_t i = 0; i < linked.size(); ++i) linked[i].transformed_skill = shifted.values[i];
    out.profiles.insert(out.profiles.end(), linked.begin(), linked.end());
    out.dropped.insert(out.dropped.end(), skills.dropped.begin(), skills.dropped.end());
    out.fits.emplace(d, std::move(fit));
  }
  return out;
}

TeamOutput build_observations(const std::vector<RunRecord>& team_runs, const std::vector<fe::SkillProfile>& profiles,
                              const FeOptions& options, double floor) {
  TeamOutput out;
  std::map<std::pair<std::string, Dimension>, double> skill;
  for (const auto& p : profiles) skill[{p.athlete_id, p.dimension}] = p.transformed_skill;

  std::set<int> attempts;
  for (const auto& r : team_runs) attempts.insert(r.attempt_index);
  for (int attempt : attempts) {
    if (attempt > 2) continue;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < team_runs.size(); ++i) {
      if (team_runs[i].attempt_index == attempt) idx.push_back(i);
    }
    for (Dimension d : {Dimension::start, Dimension::riding, Dimension::finish}) {
      std::vector<fe::TeamOutcomeRow> rows;
      for (auto i : idx) rows.push_back({team_runs[i].outcome(d), team_runs[i].event_id, team_runs[i].starting_number});
      const auto resid = fe::residualize_team(rows, options.tolerance, options.max_iterations);
      const auto shifted = transform::positive_shift(resid, floor);
      auto& series = out.shifted_outcomes[{d, attempt}];
      for (std::size_t k = 0; k < idx.size(); ++k) series[idx[k]] = shifted.values[k];
    }
  }

  for (Task task : {Task::start, Task::riding}) {
    const Dimension d = dimension_of(task);
    for (int attempt : attempts) {
      if (attempt > 2) continue;
      for (const auto& [i, h] : out.shifted_outcomes.at({d, attempt})) {
        const auto& r = team_runs[i];
        out.observations.push_back({r.team_key(), task, attempt, skill.at({r.athlete1_id, d}),
                                    skill.at({*r.athlete2_id, d}), h});
      }
    }
  }
  return out;
}

ElasticityOutput compute_elasticities(const std::vector<TeamTaskObservation>& observations,
                                      const std::vector<std::optional<EfficiencyEstimate>>& estimates,
                                      const ElasticityOptions& options) {
  ElasticityOutput out;
  std::map<Slice, std::vector<std::size_t>> by_slice;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (estimates.at(i)) by_slice[observations[i].slice()].push_back(i);
  }
  for (const auto& [slice, rows] : by_slice) {
    std::vector<elasticity::ProductionPoint> pts;
    for (auto i : rows) {
      const auto& o = observations[i];
      pts.push_back({estimates[i]->a_raw * o.x, o.y, o.h});
    }
    try {
      auto fit = elasticity::fit_production_polynomial(pts, slice, {options.intercept});
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& o = observations[rows[k]];
        auto p = elasticity::elasticity_at(fit, pts[k].ax, o.y, o.x, o.h, options.variant);
        p.team_id = o.team_id;
        out.points.push_back(std::move(p));
      }
      out.fits.push_back(fit);
    } catch (const elasticity::ElasticityError& e) {
      out.errors[slice] = e.what();
    }
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::vector<Artifact> write_reports(const fs::path& dir, const std::vector<RunRecord>& team_runs,
                                    const std::vector<fe::SkillProfile>& profiles,
                                    const std::vector<TeamTaskObservation>& observations,
                                    const std::vector<EfficiencyEstimate>& estimates) {
  std::vector<Artifact> written;
  auto emit = [&](const std::string& name, auto&& writer) {
    {
      auto out = open_out(dir / name);
      writer(out);
    }
    written.push_back({name, "report", sha256_file(dir / name)});
  };

  // Terciles over the pooled linked athletes of each dimension.
  std::map<Dimension, std::map<std::string, int>> bins;
  std::map<Dimension, std::vector<fe::SkillProfile>> by_dim;
  for (const auto& p : profiles) by_dim[p.dimension].push_back(p);
  for (const auto& [d, ps] : by_dim) {
    std::vector<double> values;
    for (const auto& p : ps) values.push_back(p.transformed_skill);
    const auto b = transform::tercile_bins(values);
    for (std::size_t i = 0; i < ps.size(); ++i) bins[d][ps[i].athlete_id] = b[i];
  }
  auto bin_of = [&](const std::string& id, Dimension d) { return bins.at(d).at(id); };

  report::TeamMembers members;
  std::vector<report::BinnedRun> start_runs, riding_runs;
  std::vector<report::TeamRunSkills> cross_runs;
  for (const auto& r : team_runs) {
    members[r.team_key()] = {r.athlete1_id, *r.athlete2_id};
    const report::SkillBins p1{bin_of(r.athlete1_id, Dimension::start), bin_of(r.athlete1_id, Dimension::riding)};
    const report::SkillBins p2{bin_of(*r.athlete2_id, Dimension::start), bin_of(*r.athlete2_id, Dimension::riding)};
    start_runs.push_back({p1.start, p2.start, 0.0});
    riding_runs.push_back({p1.riding, p2.riding, 0.0});
    cross_runs.push_back({p1, p2});
  }

  emit("crosstab_within_skill.csv", [&](std::ostream& out) {
    report::write_crosstabs_csv(
        out, {{"start_skill", report::pairing_crosstab(start_runs, report::CellKind::count, "P1 Start-skill Bin",
                                                       "P2 Start-skill Bin")},
              {"riding_skill", report::pairing_crosstab(riding_runs, report::CellKind::count, "P1 Riding-skill Bin",
                                                        "P2 Riding-skill Bin")}});
  });
  emit("crosstab_cross_skill.csv", [&](std::ostream& out) {
    auto [a, b] = report::cross_skill_crosstab(cross_runs);
    report::write_crosstabs_csv(out, {{"p1_start_vs_p2_riding", a}, {"p1_riding_vs_p2_start", b}});
  });

  emit("performance_by_bins.csv", [&](std::ostream& out) {
    std::map<Slice, std::vector<report::BinnedRun>> per_slice;
    for (const auto& o : observations) {
      const auto& [p1, p2] = members.at(o.team_id);
      const Dimension d = dimension_of(o.task);
      per_slice[o.slice()].push_back({bin_of(p1, d), bin_of(p2, d), o.h});
    }
    std::vector<std::pair<std::string, report::CrossTab3x3>> tables;
    for (const auto& [slice, runs] : per_slice) {
      const std::string dim = capitalized(to_string(slice.task));
      tables.emplace_back(slice_label(slice), report::pairing_crosstab(runs, report::CellKind::mean,
                                                                       "P1 " + dim + "-skill Bin",
                                                                       "P2 " + dim + "-skill Bin"));
    }
    report::write_crosstabs_csv(out, tables);
  });

  emit("efficiency_heatmap.csv", [&](std::ostream& out) {
    std::vector<report::HeatmapCell> cells;
    for (Task task : {Task::start, Task::riding}) {
      const Dimension d = dimension_of(task);
      std::set<std::string> drivers, brakemen;
      for (const auto& [team, m] : members) {
        drivers.insert(m.first);
        brakemen.insert(m.second);
      }
      std::vector<fe::SkillProfile> p1s, p2s;
      for (const auto& p : by_dim[d]) {
        if (drivers.count(p.athlete_id)) p1s.push_back(p);
        if (brakemen.count(p.athlete_id)) p2s.push_back(p);
      }
      std::vector<EfficiencyEstimate> task_est;
      for (const auto& e : estimates) {
        if (e.task == task) task_est.push_back(e);
      }
      auto c = report::efficiency_heatmap_cells(task_est, members, report::skill_ranks(p1s), report::skill_ranks(p2s));
      cells.insert(cells.end(), c.begin(), c.end());
    }
    report::write_heatmap_csv(out, cells);
  });

  emit("descriptive_summary.csv", [&](std::ostream& out) {
    csv::Table t;
    t.header = {"panel", "variable", "N", "mean", "sd", "min", "max"};
    auto add = [&](const std::string& panel, const std::string& label, const std::vector<double>& v) {
      const auto m = moments(v);
      t.rows.push_back({panel, label, std::to_string(m.n), csv::format_double(m.mean), csv::format_double(m.sd),
                        csv::format_double(m.min), csv::format_double(m.max)});
    };
    for (Dimension d : {Dimension::finish, Dimension::start, Dimension::riding}) {
      std::vector<double> v;
      for (const auto& p : by_dim[d]) v.push_back(p.transformed_skill);
      add("player", "Residualized Solo " + capitalized(to_string(d)) + " Outcome", v);
    }
    std::map<Slice, std::vector<double>> team_h;
    for (const auto& o : observations) team_h[o.slice()].push_back(o.h);
    for (Task task : {Task::start, Task::riding}) {
      for (int a : {1, 2}) {
        if (auto it = team_h.find({task, a}); it != team_h.end()) {
          add("team", "Residualized Team " + capitalized(to_string(task)) + " Outcome " + ordinal(a) + " attempt",
              it->second);
        }
      }
    }
    std::vector<double> orders;
    for (const auto& r : team_runs) orders.push_back(r.starting_number);
    add("team", "Starting No", orders);
    csv::write_table(out, t);
  });

  emit("nationality.csv", [&](std::ostream& out) {
    std::map<std::string, std::set<std::string>> players;
    std::map<std::string, int> participations;
    for (const auto& r : team_runs) {
      players[r.nationality].insert(r.athlete1_id);
      players[r.nationality].insert(*r.athlete2_id);
      ++participations[r.nationality];
    }
    out << "nationality,players,team_participations\n";
    for (const auto& [nat, ids] : players) {
      out << nat << ',' << ids.size() << ',' << participations[nat] << '\n';
    }
  });

  return written;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult result;
  const fs::path dir = cfg.output_dir;
  auto record = [&](const std::string& name, const std::string& stage_name) {
    result.artifacts.push_back({name, stage_name, sha256_file(dir / name)});
  };

  try {
    stage("output", [&] {
      fs::create_directories(dir);
      return 0;
    });

    auto ingested = stage("ingest", [&] {
      std::ifstream in(cfg.input, std::ios::binary);
      if (!in) throw std::runtime_error("cannot open input " + cfg.input.string());
      auto out = run_ingest(in, cfg.schema, cfg.max_attempts);
      {
        auto f = open_out(dir / "dataset.jsonl");
        ingest::write_dataset(f, out.dataset());
      }
      {
        auto f = open_out(dir / "exclusions.txt");
        ingest::write_exclusions(f, out.exclusions);
      }
      record("dataset.jsonl", "ingest");
      record("exclusions.txt", "ingest");
      log_line(cfg.log, "ingest: " + std::to_string(out.monobob.size()) + " solo runs, " +
                            std::to_string(out.linked.team_runs.size()) + " team runs, " +
                            std::to_string(out.exclusions.size()) + " exclusions");
      return out;
    });

    auto skills = stage("fe", [&] {
      auto out = estimate_skills(ingested, cfg.fe, cfg.floor);
      for (const auto& [d, fit] : out.fits) {
        const std::string name = "fe_solo_" + std::string(to_string(d)) + ".csv";
        {
          auto f = open_out(dir / name);
          fe::write_coefficients_csv(f, fit);
        }
        record(name, "fe");
        const std::string resid = "fe_solo_" + std::string(to_string(d)) + "_residuals.jsonl";
        {
          auto f = open_out(dir / resid);
          for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
            f << nlohmann::json{{"row", i}, {"residual", fit.residuals[i]}}.dump() << '\n';
          }
        }
        record(resid, "fe");
      }
      {
        auto f = open_out(dir / "skills.csv");
        report::write_skills_csv(f, out.profiles);
      }
      record("skills.csv", "fe");
      log_line(cfg.log, "fe: " + std::to_string(out.profiles.size() / 3) + " linked athletes with skills");
      return out;
    });

    auto team = stage("transform", [&] {
      auto out = build_observations(ingested.linked.team_runs, skills.profiles, cfg.fe, cfg.floor);
      {
        auto f = open_out(dir / "team_outcomes.jsonl");
        for (const auto& [key, series] : out.shifted_outcomes) {
          for (const auto& [row, value] : series) {
            f << nlohmann::json{{"row", ingested.monobob.size() + row},
                                {"outcome", to_string(key.first)},
                                {"attempt", key.second},
                                {"shifted", value}}
                     .dump()
              << '\n';
          }
        }
      }
      {
        auto f = open_out(dir / "observations.jsonl");
        affinity::write_observations(f, out.observations);
      }
      record("team_outcomes.jsonl", "transform");
      record("observations.jsonl", "transform");
      return out;
    });

    auto recovery = stage("estimate", [&] {
      auto out = affinity::recover_efficiency(team.observations, cfg.kernel);
      std::vector<EfficiencyEstimate> flat;
      for (const auto& e : out.estimates) {
        if (e) flat.push_back(*e);
      }
      for (const auto& s : out.slices) {
        if (s.error) log_line(cfg.log, "estimate: slice " + slice_label(s.slice) + " failed: " + *s.error);
      }
      if (flat.empty()) throw std::runtime_error("no slice produced estimates");
      {
        auto f = open_out(dir / "estimates.csv");
        affinity::write_estimates_csv(f, flat);
      }
      {
        auto f = open_out(dir / "efficiency_summary.csv");
        affinity::write_summary_csv(f, affinity::summarize_efficiency(flat));
      }
      record("estimates.csv", "estimate");
      record("efficiency_summary.csv", "estimate");
      return std::make_pair(std::move(out), std::move(flat));
    });

    stage("elasticity", [&] {
      auto out = compute_elasticities(team.observations, recovery.first.estimates, cfg.elasticity);
      for (const auto& [slice, err] : out.errors) {
        log_line(cfg.log, "elasticity: slice " + slice_label(slice) + ": " + err);
      }
      {
        auto f = open_out(dir / "elasticity_coefficients.csv");
        elasticity::write_coefficients_csv(f, out.fits);
      }
      {
        auto f = open_out(dir / "elasticities.csv");
        elasticity::write_elasticities_csv(f, out.points);
      }
      record("elasticity_coefficients.csv", "elasticity");
      record("elasticities.csv", "elasticity");
      return 0;
    });

    stage("report", [&] {
      auto written = write_reports(dir, ingested.linked.team_runs, skills.profiles, team.observations,
                                   recovery.second);
      result.artifacts.insert(result.artifacts.end(), written.begin(), written.end());
      return 0;
    });
    result.ok = true;
  } catch (const StageError& e) {
    result.failed_stage = e.stage();
    result.error = e.what();
    log_line(cfg.log, e.what());
  }

  nlohmann::json manifest;
  manifest["status"] = result.ok ? "ok" : "failed";
  if (!result.ok) {
    manifest["failed_stage"] = result.failed_stage;
    manifest["error"] = result.error;
  }
  manifest["hash"] = "sha256";
  manifest["artifacts"] = nlohmann::json::array();
  for (const auto& a : result.artifacts) {
    manifest["artifacts"].push_back({{"name", a.name}, {"stage", a.stage}, {"sha256", a.sha256}});
  }
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
  }
  return result;
}

}  // namespace teamprod::pipeline
