// teamprod command-line front end.
//
//   teamprod [--config cfg.json] [--seed N] [--out PATH] [--verbose] <command> [options]
//
// Config lookup: --config, else $TEAMPROD_CONFIG, else none. Flags override
// the matching config entries. Exit status: 0 ok, 1 stage error, 2 config
// or usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "teamprod/affinity.hpp"
#include "teamprod/csv.hpp"
#include "teamprod/elasticity.hpp"
#include "teamprod/ingest.hpp"
#include "teamprod/panel_fe.hpp"
#include "teamprod/pipeline.hpp"
#include "teamprod/report.hpp"
#include "teamprod/synth.hpp"
#include "teamprod/transform.hpp"

namespace fs = std::filesystem;
using namespace teamprod;
using pipeline::ConfigError;
using pipeline::StageError;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
  nlohmann::json config = nlohmann::json::object();
  fs::path config_dir;
};

nlohmann::json section(const Globals& g, const char* name) {
  return g.config.contains(name) ? g.config.at(name) : nlohmann::json::object();
}

std::ifstream open_in(const fs::path& path, const char* stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(stage, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, const char* stage) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StageError(stage, "cannot write " + path.string());
  return out;
}

fs::path config_path_or(const Globals& g, const nlohmann::json& sec, const char* key, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (sec.contains(key)) {
    fs::path p = sec.at(key).get<std::string>();
    return p.is_absolute() ? p : g.config_dir / p;
  }
  return {};
}

fs::path require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what);
  return p;
}

std::vector<ingest::RunRecord> load_dataset(const fs::path& path, const char* stage) {
  auto in = open_in(path, stage);
  try {
    return ingest::read_dataset(in);
  } catch (const std::exception& e) {
    throw StageError(stage, path.string() + ": " + e.what());
  }
}

std::vector<affinity::TeamTaskObservation> load_observations(const fs::path& path, const char* stage) {
  auto in = open_in(path, stage);
  try {
    return affinity::read_observations(in);
  } catch (const std::exception& e) {
    throw StageError(stage, path.string() + ": " + e.what());
  }
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string input, schema;
  std::optional<int> max_attempts;
};

void cmd_ingest(const Globals& g, const IngestArgs& a) {
  auto j = nlohmann::json{{"ingest", section(g, "ingest")}};
  if (!a.input.empty()) j["ingest"]["input"] = fs::absolute(a.input).string();
  if (!a.schema.empty()) j["ingest"]["schema"] = fs::absolute(a.schema).string();
  if (a.max_attempts) j["ingest"]["max_attempts"] = *a.max_attempts;
  const auto cfg = pipeline::PipelineConfig::from_json(j, g.config_dir);
  require_path(cfg.input, "--input");
  const fs::path out = require_path(g.out, "--out (dataset path)");

  auto in = open_in(cfg.input, "ingest");
  pipeline::IngestOutput res;
  try {
    res = pipeline::run_ingest(in, cfg.schema, cfg.max_attempts);
  } catch (const std::exception& e) {
    throw StageError("ingest", e.what());
  }
  {
    auto f = open_out(out, "ingest");
    ingest::write_dataset(f, res.dataset());
  }
  fs::path excl = out;
  excl.replace_extension(".exclusions.txt");
  auto f = open_out(excl, "ingest");
  ingest::write_exclusions(f, res.exclusions);
  if (g.verbose) {
    std::cerr << "ingest: " << res.monobob.size() << " solo runs, " << res.linked.team_runs.size()
              << " team runs, " << res.exclusions.size() << " exclusions -> " << excl.string() << '\n';
  }
}

// --- fe -------------------------------------------------------------------

struct FeArgs {
  std::string dataset, outcome, factors, skills;
};

std::vector<fe::Factor> parse_factor_list(const std::string& text) {
  std::vector<fe::Factor> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto f = fe::parse_factor(item);
    if (!f) throw ConfigError("unknown factor '" + item + "'");
    out.push_back(*f);
  }
  return out;
}

std::string level_of(const ingest::RunRecord& r, fe::Factor f) {
  switch (f) {
    case fe::Factor::athlete: return r.athlete1_id;
    case fe::Factor::event: return r.event_id;
    case fe::Factor::starting_order: return std::to_string(r.starting_number);
  }
  return {};
}

void cmd_fe(const Globals& g, const FeArgs& a) {
  const auto sec = section(g, "fe");
  const fs::path dataset = require_path(config_path_or(g, sec, "dataset", a.dataset), "--dataset");
  const fs::path out = require_path(g.out, "--out (coefficients path)");
  std::string outcome_text = !a.outcome.empty() ? a.outcome : sec.value("outcome", std::string());
  std::string factor_text = !a.factors.empty() ? a.factors : sec.value("factors", std::string("athlete,event,starting_order"));
  auto outcome = parse_dimension(outcome_text);
  if (!outcome) throw ConfigError("--outcome must be start, riding or finish");
  const auto base = pipeline::PipelineConfig::from_json(g.config, g.config_dir);

  fe::FixedEffectSpec spec;
  spec.outcome = *outcome;
  spec.factors = parse_factor_list(factor_text);
  spec.tolerance = base.fe.tolerance;
  spec.max_iterations = base.fe.max_iterations;
  spec.reference_policy = base.fe.reference_policy;
  try {
    spec.validate();
  } catch (const fe::FeError& e) {
    throw ConfigError(e.what());
  }

  const auto records = load_dataset(dataset, "fe");
  std::vector<fe::FeRow> rows;
  std::vector<std::size_t> row_ids;
  std::map<std::string, int> counts;
  std::set<std::string> linked;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (r.discipline != ingest::Discipline::monobob) {
      linked.insert(r.athlete1_id);
      if (r.athlete2_id) linked.insert(*r.athlete2_id);
      continue;
    }
    fe::FeRow row{r.outcome(*outcome), {}};
    for (auto f : spec.factors) row.levels.push_back(level_of(r, f));
    rows.push_back(std::move(row));
    row_ids.push_back(k);
    ++counts[r.athlete1_id];
  }

  fe::FixedEffectFit fit;
  try {
    fit = fe::estimate_fixed_effects(rows, spec);
  } catch (const std::exception& e) {
    throw StageError("fe", e.what());
  }
  if (!fit.converged) throw StageError("fe", "alternating projections did not converge");
  {
    auto f = open_out(out, "fe");
    fe::write_coefficients_csv(f, fit);
  }
  {
    fs::path resid = out;
    resid.replace_extension(".residuals.jsonl");
    auto f = open_out(resid, "fe");
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
      f << nlohmann::json{{"row", row_ids[i]}, {"residual", fit.residuals[i]}}.dump() << '\n';
    }
  }
  if (g.verbose) std::cerr << "fe: " << fit.n_obs << " rows, " << fit.iterations_used << " sweeps\n";

  if (a.skills.empty()) return;
  auto skills = fe::athlete_skill(fit, counts);
  std::vector<fe::SkillProfile> kept;
  for (auto& p : skills.profiles) {
    if (linked.empty() || linked.count(p.athlete_id)) kept.push_back(std::move(p));
  }
  if (kept.empty()) throw StageError("transform", "no athlete has a skill estimate");
  std::vector<double> raw;
  for (const auto& p : kept) raw.push_back(p.raw_fe);
  const auto shifted = transform::positive_shift(raw, base.floor);
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i].transformed_skill = shifted.values[i];
  auto f = open_out(a.skills, "fe");
  report::write_skills_csv(f, kept);
}

// --- estimate -------------------------------------------------------------

struct EstimateArgs {
  std::string dataset, task, kernel, bandwidth, summary;
  std::optional<int> grid;
};

void cmd_estimate(const Globals& g, const EstimateArgs& a) {
  auto sec = section(g, "estimate");
  const fs::path dataset = require_path(config_path_or(g, sec, "dataset", a.dataset), "--dataset (observations)");
  const fs::path out = require_path(g.out, "--out (estimates path)");
  if (!a.kernel.empty()) sec["kernel"] = a.kernel;
  if (!a.bandwidth.empty()) {
    double bw = 0.0;
    if (a.bandwidth == "auto" || a.bandwidth == "silverman") sec["bandwidth"] = "auto";
    else if (csv::parse_double(a.bandwidth, bw)) sec["bandwidth"] = bw;
    else throw ConfigError("--bandwidth must be auto or a positive number");
  }
  if (a.grid) sec["grid"] = *a.grid;
  const auto kcfg = pipeline::kernel_config_from_json(sec);
  std::string task_text = !a.task.empty() ? a.task : sec.value("task", std::string());
  std::optional<Task> task;
  if (!task_text.empty() && task_text != "all") {
    task = parse_task(task_text);
    if (!task) throw ConfigError("--task must be start, riding or all");
  }

  auto obs = load_observations(dataset, "estimate");
  if (task) std::erase_if(obs, [&](const auto& o) { return o.task != *task; });
  affinity::RecoveryResult res;
  try {
    res = affinity::recover_efficiency(obs, kcfg);
  } catch (const std::exception& e) {
    throw StageError("estimate", e.what());
  }
  std::vector<affinity::EfficiencyEstimate> flat;
  for (const auto& e : res.estimates) {
    if (e) flat.push_back(*e);
  }
  for (const auto& s : res.slices) {
    if (s.error) std::cerr << "estimate: slice " << slice_label(s.slice) << " skipped: " << *s.error << '\n';
  }
  if (flat.empty()) throw StageError("estimate", "no slice produced estimates");
  {
    auto f = open_out(out, "estimate");
    affinity::write_estimates_csv(f, flat);
  }
  if (!a.summary.empty()) {
    auto f = open_out(a.summary, "estimate");
    affinity::write_summary_csv(f, affinity::summarize_efficiency(flat));
  }
  if (g.verbose) std::cerr << "estimate: " << flat.size() << " of " << obs.size() << " observations\n";
}

// Estimates are written in observation order; walk both lists together.
std::vector<std::optional<affinity::EfficiencyEstimate>> align_estimates(
    const std::vector<affinity::TeamTaskObservation>& obs, const std::vector<affinity::EfficiencyEstimate>& est) {
  std::vector<std::optional<affinity::EfficiencyEstimate>> out(obs.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < obs.size() && k < est.size(); ++i) {
    const auto& e = est[k];
    if (e.team_id == obs[i].team_id && e.task == obs[i].task && e.attempt == obs[i].attempt) {
      out[i] = e;
      ++k;
    }
  }
  if (k != est.size()) throw StageError("elasticity", "estimates do not line up with the observations file");
  return out;
}

// --- elasticity -----------------------------------------------------------

struct ElasticityArgs {
  std::string estimates, dataset, variant, points;
};

void cmd_elasticity(const Globals& g, const ElasticityArgs& a) {
  auto j = g.config;
  if (!a.variant.empty()) j["elasticity"]["variant"] = a.variant;
  const auto cfg = pipeline::PipelineConfig::from_json(j, g.config_dir);
  const auto sec = section(g, "elasticity");
  const fs::path est_path = require_path(config_path_or(g, sec, "estimates", a.estimates), "--estimates");
  const fs::path obs_path = require_path(config_path_or(g, sec, "dataset", a.dataset), "--dataset (observations)");
  const fs::path out = require_path(g.out, "--out (coefficients path)");

  const auto obs = load_observations(obs_path, "elasticity");
  std::vector<affinity::EfficiencyEstimate> est;
  {
    auto in = open_in(est_path, "elasticity");
    try {
      est = affinity::read_estimates_csv(in);
    } catch (const std::exception& e) {
      throw StageError("elasticity", e.what());
    }
  }
  const auto res = pipeline::compute_elasticities(obs, align_estimates(obs, est), cfg.elasticity);
  for (const auto& [slice, err] : res.errors) std::cerr << "elasticity: slice " << slice_label(slice) << ": " << err << '\n';
  if (res.fits.empty()) throw StageError("elasticity", "no slice could be fitted");
  {
    auto f = open_out(out, "elasticity");
    elasticity::write_coefficients_csv(f, res.fits);
  }
  if (!a.points.empty()) {
    auto f = open_out(a.points, "elasticity");
    elasticity::write_elasticities_csv(f, res.points);
  }
}

// --- synth ----------------------------------------------------------------

void cmd_synth(const Globals& g) {
  synth::DGPConfig cfg;
  try {
    cfg = synth::config_from_json(section(g, "synth"));
    if (g.seed) cfg.seed = *g.seed;
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  const fs::path dir = require_path(g.out, "--out (directory)");
  fs::create_directories(dir);
  const auto data = synth::generate(cfg);
  {
    auto f = open_out(dir / "runs.csv", "synth");
    ingest::write_results_csv(f, data.runs);
  }
  {
    auto f = open_out(dir / "dataset.jsonl", "synth");
    ingest::write_dataset(f, data.runs);
  }
  {
    auto f = open_out(dir / "truth.jsonl", "synth");
    synth::write_truth(f, data.truth);
  }
  {
    auto f = open_out(dir / "oracle_observations.jsonl", "synth");
    affinity::write_observations(f, synth::oracle_observations(data.truth));
  }
  auto f = open_out(dir / "synth_config.json", "synth");
  f << synth::to_json(cfg).dump(2) << '\n';
  if (g.verbose) std::cerr << "synth: " << data.runs.size() << " runs -> " << dir.string() << '\n';
}

// --- report ---------------------------------------------------------------

struct ReportArgs {
  std::string dataset, skills, observations, estimates;
};

void cmd_report(const Globals& g, const ReportArgs& a) {
  const auto sec = section(g, "report");
  const fs::path ds = require_path(config_path_or(g, sec, "dataset", a.dataset), "--dataset");
  const fs::path sk = require_path(config_path_or(g, sec, "skills", a.skills), "--skills");
  const fs::path ob = require_path(config_path_or(g, sec, "observations", a.observations), "--observations");
  const fs::path es = require_path(config_path_or(g, sec, "estimates", a.estimates), "--estimates");
  const fs::path dir = require_path(g.out, "--out (directory)");

  auto records = load_dataset(ds, "report");
  std::erase_if(records, [](const auto& r) { return r.discipline != ingest::Discipline::two_woman; });
  std::vector<fe::SkillProfile> profiles;
  std::vector<affinity::EfficiencyEstimate> estimates;
  try {
    auto in = open_in(sk, "report");
    profiles = report::read_skills_csv(in);
    auto in2 = open_in(es, "report");
    estimates = affinity::read_estimates_csv(in2);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("report", e.what());
  }
  const auto obs = load_observations(ob, "report");
  fs::create_directories(dir);
  try {
    pipeline::write_reports(dir, records, profiles, obs, estimates);
  } catch (const std::exception& e) {
    throw StageError("report", e.what());
  }
}

// --- pipeline -------------------------------------------------------------

struct PipelineArgs {
  std::string input, schema;
};

int cmd_pipeline(const Globals& g, const PipelineArgs& a) {
  auto j = g.config;
  if (!a.input.empty()) j["ingest"]["input"] = fs::absolute(a.input).string();
  if (!a.schema.empty()) j["ingest"]["schema"] = fs::absolute(a.schema).string();
  if (!g.out.empty()) j["output"]["dir"] = fs::absolute(g.out).string();
  auto cfg = pipeline::PipelineConfig::from_json(j, g.config_dir);
  require_path(cfg.input, "--input");
  if (g.verbose) cfg.log = &std::cerr;
  const auto res = pipeline::run_pipeline(cfg);
  if (!res.ok) {
    std::cerr << "error: " << res.error << '\n';
    return 1;
  }
  if (g.verbose) std::cerr << "pipeline: " << res.artifacts.size() << " artifacts in " << cfg.output_dir.string() << '\n';
  return 0;
}

void load_config(Globals& g) {
  std::string path = g.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("TEAMPROD_CONFIG"); env && *env) path = env;
  }
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    g.config = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!g.config.is_object()) throw ConfigError("config " + path + ": top level must be an object");
  g.config_dir = fs::absolute(path).parent_path();
  if (!g.seed && g.config.contains("seed")) g.seed = g.config.at("seed").get<std::uint64_t>();
  if (g.out.empty() && g.config.contains("output") && g.config["output"].contains("dir")) {
    fs::path p = g.config["output"]["dir"].get<std::string>();
    g.out = (p.is_absolute() ? p : g.config_dir / p).string();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Team production analysis: skills, efficiency and elasticities"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config (default: $TEAMPROD_CONFIG)");
  app.add_option("--seed", g.seed, "random seed (synth)");
  app.add_option("--out", g.out, "output file or directory");
  app.add_flag("--verbose,-v", g.verbose, "progress on stderr");

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "parse race results into the canonical dataset");
  ingest_cmd->add_option("--input", ia.input, "results CSV");
  ingest_cmd->add_option("--schema", ia.schema, "column schema JSON");
  ingest_cmd->add_option("--max-attempts", ia.max_attempts, "attempts kept per event");

  FeArgs fa;
  auto* fe_cmd = app.add_subcommand("fe", "solo fixed effects for one outcome");
  fe_cmd->add_option("--dataset", fa.dataset, "canonical dataset (JSON lines)");
  fe_cmd->add_option("--outcome", fa.outcome, "start|riding|finish");
  fe_cmd->add_option("--factors", fa.factors, "comma list of athlete,event,starting_order");
  fe_cmd->add_option("--skills", fa.skills, "also write transformed athlete skills here");

  EstimateArgs ea;
  auto* est_cmd = app.add_subcommand("estimate", "recover team-task efficiency");
  est_cmd->add_option("--dataset", ea.dataset, "team-task observations (JSON lines)");
  est_cmd->add_option("--task", ea.task, "start|riding|all");
  est_cmd->add_option("--kernel", ea.kernel, "gaussian|epanechnikov");
  est_cmd->add_option("--bandwidth", ea.bandwidth, "auto or a number");
  est_cmd->add_option("--grid", ea.grid, "quantile grid size");
  est_cmd->add_option("--summary", ea.summary, "also write the summary table here");

  ElasticityArgs la;
  auto* el_cmd = app.add_subcommand("elasticity", "fit production polynomials and elasticities");
  el_cmd->add_option("--estimates", la.estimates, "estimates CSV");
  el_cmd->add_option("--dataset", la.dataset, "team-task observations (JSON lines)");
  el_cmd->add_option("--variant", la.variant, "chain_rule|literal");
  el_cmd->add_option("--points", la.points, "also write per-observation elasticities here");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic panel with known truth");

  ReportArgs ra;
  auto* rep_cmd = app.add_subcommand("report", "descriptive tables from pipeline outputs");
  rep_cmd->add_option("--dataset", ra.dataset, "canonical dataset");
  rep_cmd->add_option("--skills", ra.skills, "skills CSV");
  rep_cmd->add_option("--observations", ra.observations, "team-task observations");
  rep_cmd->add_option("--estimates", ra.estimates, "estimates CSV");

  PipelineArgs pa;
  auto* pipe_cmd = app.add_subcommand("pipeline", "run every stage and write a manifest");
  pipe_cmd->add_option("--input", pa.input, "results CSV");
  pipe_cmd->add_option("--schema", pa.schema, "column schema JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    load_config(g);
    if (*ingest_cmd) cmd_ingest(g, ia);
    else if (*fe_cmd) cmd_fe(g, fa);
    else if (*est_cmd) cmd_estimate(g, ea);
    else if (*el_cmd) cmd_elasticity(g, la);
    else if (*synth_cmd) cmd_synth(g);
    else if (*rep_cmd) cmd_report(g, ra);
    else if (*pipe_cmd) return cmd_pipeline(g, pa);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
