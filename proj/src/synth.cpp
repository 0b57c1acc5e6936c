#include "teamprod/synth.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "teamprod/rng.hpp"

namespace teamprod::synth {

namespace {

constexpr const char* kNations[] = {"AUS", "AUT", "CAN", "GBR", "GER", "ITA",
                                    "KOR", "POL", "ROU", "RUS", "SVK", "USA"};

double draw(const Law& law, Rng& rng) {
  switch (law.kind) {
    case Law::Kind::constant: return law.a;
    case Law::Kind::uniform: return rng.uniform(law.a, law.b);
    case Law::Kind::lognormal: return std::exp(rng.normal(law.a, law.b));
    case Law::Kind::grid: {
      const auto k = static_cast<double>(rng.below(static_cast<std::uint64_t>(law.levels)));
      return law.a + k * (law.b - law.a) / static_cast<double>(law.levels - 1);
    }
  }
  return law.a;
}

void validate_law(const Law& law, const char* name) {
  const std::string n = name;
  switch (law.kind) {
    case Law::Kind::constant:
      if (!(law.a > 0.0)) throw InvalidConfig(n + ": constant must be positive");
      break;
    case Law::Kind::uniform:
    case Law::Kind::grid:
      if (!(law.a > 0.0 && law.b > law.a)) throw InvalidConfig(n + ": need 0 < lo < hi");
      if (law.kind == Law::Kind::grid && law.levels < 2) throw InvalidConfig(n + ": grid needs >= 2 levels");
      break;
    case Law::Kind::lognormal:
      if (!(law.b >= 0.0) || !std::isfinite(law.a)) throw InvalidConfig(n + ": bad lognormal parameters");
      break;
  }
}

// Days since 1970-01-01 to civil date (proleptic Gregorian).
std::string iso_date(long days) {
  days += 719468;
  const long era = (days >= 0 ? days : days - 146096) / 146097;
  const long doe = days - era * 146097;
  const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  long y = yoe + era * 400;
  const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const long mp = (5 * doy + 2) / 153;
  const long d = doy - (153 * mp + 2) / 5 + 1;
  const long m = mp < 10 ? mp + 3 : mp - 9;
  if (m <= 2) ++y;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04ld-%02ld-%02ld", y, m, d);
  return buf;
}

constexpr long kFirstEventDay = 18932;  // 2021-11-01

std::string make_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%03d", prefix, i + 1);
  return buf;
}

Law law_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "constant") return Law::constant(j.at("value").get<double>());
  if (kind == "uniform") return Law::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  if (kind == "lognormal") return Law::lognormal(j.at("mu").get<double>(), j.at("sigma").get<double>());
  if (kind == "grid") return Law::grid(j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("levels").get<int>());
  throw InvalidConfig("unknown law kind '" + kind + "'");
}

nlohmann::json law_to_json(const Law& law) {
  switch (law.kind) {
    case Law::Kind::constant: return {{"kind", "constant"}, {"value", law.a}};
    case Law::Kind::uniform: return {{"kind", "uniform"}, {"lo", law.a}, {"hi", law.b}};
    case Law::Kind::lognormal: return {{"kind", "lognormal"}, {"mu", law.a}, {"sigma", law.b}};
    case Law::Kind::grid: return {{"kind", "grid"}, {"lo", law.a}, {"hi", law.b}, {"levels", law.levels}};
  }
  return {};
}

}  // namespace

void DGPConfig::validate() const {
  if (n_teams < 5) throw InvalidConfig("n_teams must be >= 5");
  if (n_drivers < 1 || n_brakemen < 1) throw InvalidConfig("need at least one driver and one brakeman");
  if (n_events < 1) throw InvalidConfig("n_events must be >= 1");
  if (attempts < 1) throw InvalidConfig("attempts must be >= 1");
  if (mono_events_per_athlete < 1 || mono_events_per_athlete > n_events) {
    throw InvalidConfig("mono_events_per_athlete must lie in [1, n_events]");
  }
  if (mono_events_per_athlete * attempts < 2) throw InvalidConfig("athletes need at least two solo runs");
  if (n_pairs < 0 || n_pairs > n_teams) throw InvalidConfig("n_pairs must lie in [0, n_teams]");
  if (static_cast<long>(n_pairs) > static_cast<long>(n_drivers) * n_brakemen) {
    throw InvalidConfig("more pairs requested than driver-brakeman combinations");
  }
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidConfig("theta must lie in (0, 1)");
  if (!(event_effect_sd >= 0.0 && order_effect_sd >= 0.0 && noise_sd >= 0.0)) {
    throw InvalidConfig("standard deviations must be >= 0");
  }
  if (!(base_start_time > 0.0 && base_riding_time > 0.0)) throw InvalidConfig("base times must be positive");
  validate_law(affinity_law, "affinity_law");
  validate_law(skill_law_x, "skill_law_x");
  validate_law(skill_law_y, "skill_law_y");
}

DGPConfig DGPConfig::season_scale() { return DGPConfig{}; }

DGPConfig DGPConfig::large(int n_teams) {
  DGPConfig cfg;
  cfg.n_drivers = 100;
  cfg.n_brakemen = 100;
  cfg.n_teams = n_teams;
  cfg.n_pairs = 0;
  cfg.n_events = 40;
  return cfg;
}

DGPConfig config_from_json(const nlohmann::json& j, DGPConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_drivers", c.n_drivers);
  get("n_brakemen", c.n_brakemen);
  get("n_teams", c.n_teams);
  get("n_pairs", c.n_pairs);
  get("n_events", c.n_events);
  get("attempts", c.attempts);
  get("mono_events_per_athlete", c.mono_events_per_athlete);
  get("theta", c.theta);
  get("event_effect_sd", c.event_effect_sd);
  get("order_effect_sd", c.order_effect_sd);
  get("noise_sd", c.noise_sd);
  get("base_start_time", c.base_start_time);
  get("base_riding_time", c.base_riding_time);
  get("seed", c.seed);
  if (j.contains("affinity_law")) c.affinity_law = law_from_json(j.at("affinity_law"));
  if (j.contains("skill_law_x")) c.skill_law_x = law_from_json(j.at("skill_law_x"));
  if (j.contains("skill_law_y")) c.skill_law_y = law_from_json(j.at("skill_law_y"));
  return c;
}

nlohmann::json to_json(const DGPConfig& c) {
  return {{"n_drivers", c.n_drivers},
          {"n_brakemen", c.n_brakemen},
          {"n_teams", c.n_teams},
          {"n_pairs", c.n_pairs},
          {"n_events", c.n_events},
          {"attempts", c.attempts},
          {"mono_events_per_athlete", c.mono_events_per_athlete},
          {"theta", c.theta},
          {"affinity_law", law_to_json(c.affinity_law)},
          {"skill_law_x", law_to_json(c.skill_law_x)},
          {"skill_law_y", law_to_json(c.skill_law_y)},
          {"event_effect_sd", c.event_effect_sd},
          {"order_effect_sd", c.order_effect_sd},
          {"noise_sd", c.noise_sd},
          {"base_start_time", c.base_start_time},
          {"base_riding_time", c.base_riding_time},
          {"seed", c.seed}};
}

double AthleteTruth::effect(Dimension d) const {
  switch (d) {
    case Dimension::start: return -start_skill;
    case Dimension::riding: return -riding_skill;
    case Dimension::finish: return -(start_skill + riding_skill);
  }
  return 0.0;
}

double SyntheticTruth::event_effect(const std::string& event, Dimension d) const {
  const auto& e = event_effects.at(event);
  return d == Dimension::start ? e[0] : d == Dimension::riding ? e[1] : e[0] + e[1];
}

double SyntheticTruth::order_effect(int starting_number, Dimension d) const {
  const auto& e = order_effects.at(starting_number);
  return d == Dimension::start ? e[0] : d == Dimension::riding ? e[1] : e[0] + e[1];
}

SyntheticDataset generate(const DGPConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticDataset out;
  auto& truth = out.truth;
  truth.theta = cfg.theta;

  std::vector<std::string> drivers, brakemen;
  for (int i = 0; i < cfg.n_drivers; ++i) drivers.push_back(make_id('D', i));
  for (int i = 0; i < cfg.n_brakemen; ++i) brakemen.push_back(make_id('B', i));
  for (const auto& id : drivers) {
    auto& a = truth.athletes[id];
    a.driver = true;
    a.start_skill = draw(cfg.skill_law_x, rng);
    a.riding_skill = draw(cfg.skill_law_x, rng);
    a.nationality = kNations[rng.below(std::size(kNations))];
  }
  for (const auto& id : brakemen) {
    auto& a = truth.athletes[id];
    a.driver = false;
    a.start_skill = draw(cfg.skill_law_y, rng);
    a.riding_skill = draw(cfg.skill_law_y, rng);
    a.nationality = kNations[rng.below(std::size(kNations))];
  }

  std::vector<std::string> events;
  std::vector<std::string> dates;
  for (int e = 0; e < cfg.n_events; ++e) {
    events.push_back(make_id('E', e));
    dates.push_back(iso_date(kFirstEventDay + 7L * e));
    truth.event_effects[events.back()] = {rng.normal(0.0, cfg.event_effect_sd),
                                          rng.normal(0.0, cfg.event_effect_sd)};
  }

  // Solo participation: each athlete races at distinct random events.
  std::vector<std::vector<std::string>> mono_field(events.size());
  std::vector<std::string> everyone = drivers;
  everyone.insert(everyone.end(), brakemen.begin(), brakemen.end());
  std::vector<int> event_index(events.size());
  for (const auto& id : everyone) {
    for (std::size_t e = 0; e < event_index.size(); ++e) event_index[e] = static_cast<int>(e);
    for (int k = 0; k < cfg.mono_events_per_athlete; ++k) {
      const auto pick = k + static_cast<int>(rng.below(event_index.size() - static_cast<std::size_t>(k)));
      std::swap(event_index[static_cast<std::size_t>(k)], event_index[static_cast<std::size_t>(pick)]);
      mono_field[static_cast<std::size_t>(event_index[static_cast<std::size_t>(k)])].push_back(id);
    }
  }

  std::vector<std::pair<int, int>> pairs;
  std::set<std::pair<int, int>> pair_set;
  while (static_cast<int>(pairs.size()) < cfg.n_pairs) {
    std::pair<int, int> p{static_cast<int>(rng.below(drivers.size())), static_cast<int>(rng.below(brakemen.size()))};
    if (pair_set.insert(p).second) pairs.push_back(p);
  }

  // Team entries; a pair enters an event at most once.
  std::vector<std::vector<std::pair<int, int>>> team_field(events.size());
  std::set<std::tuple<std::size_t, int, int>> entered;
  for (int i = 0; i < cfg.n_teams; ++i) {
    const auto e = static_cast<std::size_t>(i % cfg.n_events);
    std::pair<int, int> p;
    for (int tries = 0;; ++tries) {
      if (cfg.n_pairs == 0) {
        p = {static_cast<int>(rng.below(drivers.size())), static_cast<int>(rng.below(brakemen.size()))};
      } else if (i < cfg.n_pairs && tries == 0) {
        p = pairs[static_cast<std::size_t>(i)];
      } else {
        p = pairs[rng.below(pairs.size())];
      }
      if (entered.emplace(e, p.first, p.second).second) break;
      if (tries > 10000) throw InvalidConfig("cannot place team entries without repeating a pair in an event");
    }
    team_field[e].push_back(p);
  }

  std::size_t max_order = 0;
  for (std::size_t e = 0; e < events.size(); ++e) {
    rng.shuffle(mono_field[e]);
    rng.shuffle(team_field[e]);
    max_order = std::max({max_order, mono_field[e].size(), team_field[e].size()});
  }
  for (std::size_t s = 1; s <= max_order; ++s) {
    truth.order_effects[static_cast<int>(s)] = {rng.normal(0.0, cfg.order_effect_sd),
                                                rng.normal(0.0, cfg.order_effect_sd)};
  }

  for (std::size_t e = 0; e < events.size(); ++e) {
    for (std::size_t k = 0; k < mono_field[e].size(); ++k) {
      const auto& id = mono_field[e][k];
      const auto& a = truth.athletes.at(id);
      const int order = static_cast<int>(k) + 1;
      for (int t = 1; t <= cfg.attempts; ++t) {
        ingest::RunRecord r;
        r.event_id = events[e];
        r.date = dates[e];
        r.discipline = ingest::Discipline::monobob;
        r.athlete1_id = id;
        r.nationality = a.nationality;
        r.attempt_index = t;
        r.starting_number = order;
        const double start = cfg.base_start_time + a.effect(Dimension::start) +
                             truth.event_effect(events[e], Dimension::start) +
                             truth.order_effect(order, Dimension::start) + rng.normal(0.0, cfg.noise_sd);
        const double riding = cfg.base_riding_time + a.effect(Dimension::riding) +
                              truth.event_effect(events[e], Dimension::riding) +
                              truth.order_effect(order, Dimension::riding) + rng.normal(0.0, cfg.noise_sd);
        r.start_time = start;
        r.finish_time = start + riding;
        r.riding_time = r.finish_time - r.start_time;
        out.runs.push_back(std::move(r));
      }
    }
  }

  for (std::size_t e = 0; e < events.size(); ++e) {
    for (std::size_t k = 0; k < team_field[e].size(); ++k) {
      const auto& driver = drivers[static_cast<std::size_t>(team_field[e][k].first)];
      const auto& brakeman = brakemen[static_cast<std::size_t>(team_field[e][k].second)];
      const auto& p1 = truth.athletes.at(driver);
      const auto& p2 = truth.athletes.at(brakeman);
      const int order = static_cast<int>(k) + 1;
      for (int t = 1; t <= cfg.attempts; ++t) {
        ingest::RunRecord r;
        r.event_id = events[e];
        r.date = dates[e];
        r.discipline = ingest::Discipline::two_woman;
        r.athlete1_id = driver;
        r.athlete2_id = brakeman;
        r.nationality = p1.nationality;
        r.attempt_index = t;
        r.starting_number = order;
        double phase[2] = {0.0, 0.0};
        for (Task task : {Task::start, Task::riding}) {
          TeamTaskTruth tt;
          tt.run_index = out.runs.size();
          tt.team_id = r.team_key();
          tt.task = task;
          tt.attempt = t;
          tt.true_a = draw(cfg.affinity_law, rng);
          tt.true_x = task == Task::start ? p1.start_skill : p1.riding_skill;
          tt.true_y = task == Task::start ? p2.start_skill : p2.riding_skill;
          tt.true_h_noiseless = std::pow(tt.true_a * tt.true_x, cfg.theta) * std::pow(tt.true_y, 1.0 - cfg.theta);
          tt.noise = rng.normal(0.0, cfg.noise_sd);
          const Dimension d = dimension_of(task);
          const double base = task == Task::start ? cfg.base_start_time : cfg.base_riding_time;
          phase[task == Task::start ? 0 : 1] = base - tt.observed_h() + truth.event_effect(events[e], d) +
                                               truth.order_effect(order, d);
          truth.team.push_back(std::move(tt));
        }
        r.start_time = phase[0];
        r.finish_time = phase[0] + phase[1];
        r.riding_time = r.finish_time - r.start_time;
        out.runs.push_back(std::move(r));
      }
    }
  }

  for (const auto& r : out.runs) {
    if (!(r.start_time > 0.0) || !(r.finish_time > r.start_time)) {
      throw InvalidConfig("generated a non-positive phase time; lower the skill scale or raise base times");
    }
  }
  return out;
}

std::vector<affinity::TeamTaskObservation> oracle_observations(const SyntheticTruth& truth) {
  std::vector<affinity::TeamTaskObservation> out;
  out.reserve(truth.team.size());
  for (const auto& t : truth.team) {
    const double h = t.observed_h();
    if (!(h >= affinity::kMinInput)) {
      throw InvalidConfig("noise drove a team output below 1e-6; reduce noise_sd");
    }
    out.push_back({t.team_id, t.task, t.attempt, t.true_x, t.true_y, h});
  }
  return out;
}

std::vector<elasticity::ProductionPoint> oracle_production_points(const SyntheticTruth& truth, Slice slice) {
  std::vector<elasticity::ProductionPoint> out;
  for (const auto& t : truth.team) {
    if (t.task == slice.task && t.attempt == slice.attempt) {
      out.push_back({t.true_a * t.true_x, t.true_y, t.observed_h()});
    }
  }
  return out;
}

double oracle_conditional_rank(const affinity::TeamTaskObservation& target,
                               std::span<const affinity::TeamTaskObservation> slice, std::size_t min_cell_size) {
  std::size_t members = 0;
  std::size_t below = 0;
  for (const auto& o : slice) {
    if (o.x == target.x && o.y == target.y) {
      ++members;
      if (o.h <= target.h) ++below;
    }
  }
  if (members < min_cell_size) {
    throw SparseCell("cell (" + std::to_string(target.x) + ", " + std::to_string(target.y) + ") has " +
                     std::to_string(members) + " observations");
  }
  return static_cast<double>(below) / static_cast<double>(members);
}

void write_truth(std::ostream& out, const SyntheticTruth& truth) {
  out << nlohmann::json{{"kind", "meta"}, {"theta", truth.theta}}.dump() << '\n';
  for (const auto& [id, a] : truth.athletes) {
    out << nlohmann::json{{"kind", "athlete"},
                          {"athlete_id", id},
                          {"role", a.driver ? "driver" : "brakeman"},
                          {"start_skill", a.start_skill},
                          {"riding_skill", a.riding_skill},
                          {"nationality", a.nationality}}
               .dump()
        << '\n';
  }
  for (const auto& [id, e] : truth.event_effects) {
    out << nlohmann::json{{"kind", "event"}, {"event_id", id}, {"start", e[0]}, {"riding", e[1]}}.dump() << '\n';
  }
  for (const auto& [s, e] : truth.order_effects) {
    out << nlohmann::json{{"kind", "order"}, {"starting_number", s}, {"start", e[0]}, {"riding", e[1]}}.dump()
        << '\n';
  }
  for (const auto& t : truth.team) {
    out << nlohmann::json{{"kind", "team_task"},
                          {"run_index", t.run_index},
                          {"team_id", t.team_id},
                          {"task", to_string(t.task)},
                          {"attempt", t.attempt},
                          {"true_a", t.true_a},
                          {"true_x", t.true_x},
                          {"true_y", t.true_y},
                          {"true_h_noiseless", t.true_h_noiseless},
                          {"noise", t.noise}}
               .dump()
        << '\n';
  }
}

}  // namespace teamprod::synth
