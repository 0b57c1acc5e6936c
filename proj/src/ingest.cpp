#include "teamprod/ingest.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "teamprod/csv.hpp"

namespace teamprod::ingest {

namespace {

bool valid_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  long long y = 0, m = 0, d = 0;
  if (!csv::parse_int(s.substr(0, 4), y) || !csv::parse_int(s.substr(5, 2), m) ||
      !csv::parse_int(s.substr(8, 2), d)) {
    return false;
  }
  if (m < 1 || m > 12 || d < 1) return false;
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  const int max_day = kDays[m - 1] + ((m == 2 && leap) ? 1 : 0);
  return d <= max_day;
}

// Riding column, when supplied, must agree with finish - start.
constexpr double kRidingTolerance = 1e-9;

std::string competitor_key(const RunRecord& r) {
  return std::string(to_string(r.discipline)) + "|" + r.team_key();
}

}  // namespace

std::string_view to_string(Discipline d) {
  return d == Discipline::monobob ? "monobob" : "two_woman";
}

std::optional<Discipline> parse_discipline(std::string_view text) {
  if (text == "monobob") return Discipline::monobob;
  if (text == "two_woman") return Discipline::two_woman;
  return std::nullopt;
}

std::string RunRecord::team_key() const {
  return athlete2_id ? athlete1_id + "+" + *athlete2_id : athlete1_id;
}

double RunRecord::outcome(Dimension d) const {
  switch (d) {
    case Dimension::start: return start_time;
    case Dimension::riding: return riding_time;
    case Dimension::finish: return finish_time;
  }
  return 0.0;
}

IngestError::IngestError(Kind kind, std::string message, std::optional<std::size_t> line)
    : std::runtime_error(line ? "line " + std::to_string(*line) + ": " + message : message),
      kind_(kind),
      line_(line) {}

ColumnSchema ColumnSchema::identity() {
  ColumnSchema s;
  for (const char* c : kRequiredColumns) s.columns[c] = c;
  s.columns["riding_time"] = "riding_time";
  return s;
}

ColumnSchema ColumnSchema::from_json(const nlohmann::json& j) {
  ColumnSchema s = identity();
  if (j.contains("delimiter")) {
    const auto d = j.at("delimiter").get<std::string>();
    if (d.size() != 1) throw std::invalid_argument("schema delimiter must be a single character");
    s.delimiter = d[0];
  }
  if (j.contains("columns")) {
    for (const auto& [logical, header] : j.at("columns").items()) {
      s.columns[logical] = header.get<std::string>();
    }
  }
  return s;
}

const std::string& ColumnSchema::header_for(const std::string& logical) const {
  auto it = columns.find(logical);
  return it == columns.end() ? logical : it->second;
}

std::vector<RunRecord> parse_results(std::istream& source, const ColumnSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(source, line)) {
    ++line_no;
    if (!csv::trim(line).empty()) {
      header = csv::split_line(line, schema.delimiter);
      break;
    }
  }
  if (header.empty()) throw IngestError(IngestError::Kind::MissingColumn, "no header row");

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position[std::string(csv::trim(header[i]))] = i;

  std::unordered_map<std::string, std::size_t> col;
  for (const char* logical : kRequiredColumns) {
    const auto& label = schema.header_for(logical);
    auto it = position.find(label);
    if (it == position.end()) {
      throw IngestError(IngestError::Kind::MissingColumn,
                        "missing column '" + label + "' (" + logical + ")");
    }
    col[logical] = it->second;
  }
  std::optional<std::size_t> riding_col;
  if (auto it = position.find(schema.header_for("riding_time")); it != position.end()) {
    riding_col = it->second;
  }

  std::vector<RunRecord> out;
  while (std::getline(source, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_line(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw IngestError(IngestError::Kind::MalformedRow,
                        "expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);
    }
    auto field = [&](const char* logical) { return csv::trim(fields[col.at(logical)]); };
    auto malformed = [&](const std::string& what) {
      return IngestError(IngestError::Kind::MalformedRow, what, line_no);
    };

    RunRecord r;
    r.event_id = std::string(field("event_id"));
    if (r.event_id.empty()) throw malformed("empty event_id");
    r.date = std::string(field("date"));
    if (!valid_iso_date(r.date)) throw malformed("bad date '" + r.date + "'");
    auto disc = parse_discipline(field("discipline"));
    if (!disc) throw malformed("unknown discipline '" + std::string(field("discipline")) + "'");
    r.discipline = *disc;
    r.athlete1_id = std::string(field("athlete1_id"));
    if (r.athlete1_id.empty()) throw malformed("empty athlete1_id");
    const auto a2 = field("athlete2_id");
    if (!a2.empty()) r.athlete2_id = std::string(a2);
    if (r.discipline == Discipline::two_woman && !r.athlete2_id) {
      throw malformed("two_woman run without athlete2_id");
    }
    if (r.discipline == Discipline::monobob && r.athlete2_id) {
      throw malformed("monobob run with athlete2_id");
    }
    r.nationality = std::string(field("nationality"));
    if (r.nationality.size() != 3) throw malformed("nationality must be a 3-letter code");

    long long attempt = 0, order = 0;
    if (!csv::parse_int(field("attempt"), attempt) || attempt < 1) throw malformed("bad attempt");
    if (!csv::parse_int(field("starting_number"), order) || order < 1) {
      throw malformed("bad starting_number");
    }
    r.attempt_index = static_cast<int>(attempt);
    r.starting_number = static_cast<int>(order);

    if (!csv::parse_double(field("start_time"), r.start_time) || !std::isfinite(r.start_time)) {
      throw malformed("bad start_time");
    }
    if (!csv::parse_double(field("finish_time"), r.finish_time) || !std::isfinite(r.finish_time)) {
      throw malformed("bad finish_time");
    }
    if (r.start_time <= 0.0 || r.finish_time <= 0.0) {
      throw IngestError(IngestError::Kind::NonPositiveTime, "start/finish must be positive", line_no);
    }
    if (r.finish_time <= r.start_time) {
      throw IngestError(IngestError::Kind::InvertedSplit, "finish_time <= start_time", line_no);
    }
    r.riding_time = r.finish_time - r.start_time;
    if (riding_col) {
      const auto text = csv::trim(fields[*riding_col]);
      if (!text.empty()) {
        double given = 0.0;
        if (!csv::parse_double(text, given)) throw malformed("bad riding_time");
        if (std::abs(given - r.riding_time) > kRidingTolerance) {
          throw malformed("riding_time disagrees with finish_time - start_time");
        }
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  std::vector<std::string> header(std::begin(kRequiredColumns), std::end(kRequiredColumns));
  header.emplace_back("riding_time");
  out << csv::join_line(header) << '\n';
  for (const auto& r : records) {
    out << csv::join_line({r.event_id, r.date, std::string(to_string(r.discipline)), r.athlete1_id,
                           r.athlete2_id.value_or(""), r.nationality, std::to_string(r.attempt_index),
                           std::to_string(r.starting_number), csv::format_double(r.start_time),
                           csv::format_double(r.finish_time), csv::format_double(r.riding_time)})
        << '\n';
  }
}

std::vector<RunRecord> truncate_attempts(const std::vector<RunRecord>& records, int max_attempts) {
  std::vector<RunRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.attempt_index <= max_attempts) out.push_back(r);
  }
  return out;
}

DedupResult drop_duplicates(const std::vector<RunRecord>& records) {
  DedupResult result;
  std::set<std::tuple<std::string, std::string, int>> seen;
  for (const auto& r : records) {
    if (seen.emplace(r.event_id, competitor_key(r), r.attempt_index).second) {
      result.kept.push_back(r);
    } else {
      result.dropped.push_back({r, "duplicate (event, competitor, attempt)"});
    }
  }
  return result;
}

LinkedDataset link_athletes(const std::vector<RunRecord>& mono, const std::vector<RunRecord>& team) {
  LinkedDataset linked;
  for (const auto& r : mono) {
    if (r.discipline == Discipline::monobob) ++linked.monobob_runs[r.athlete1_id];
  }
  auto runs_of = [&](const std::string& id) {
    auto it = linked.monobob_runs.find(id);
    return it == linked.monobob_runs.end() ? 0 : it->second;
  };

  for (const auto& r : team) {
    if (r.discipline != Discipline::two_woman || !r.athlete2_id) {
      linked.exclusions.push_back({r, "not a two_woman run"});
      continue;
    }
    std::string reason;
    for (const auto* id : {&r.athlete1_id, &*r.athlete2_id}) {
      const int n = runs_of(*id);
      if (n >= kMinMonobobRuns) {
        linked.eligible_athletes.insert(*id);
      } else {
        if (!reason.empty()) reason += "; ";
        reason += "athlete " + *id + " has " + std::to_string(n) + " monobob run(s), needs " +
                  std::to_string(kMinMonobobRuns);
      }
    }
    if (reason.empty()) {
      linked.team_runs.push_back(r);
    } else {
      linked.exclusions.push_back({r, std::move(reason)});
    }
  }
  if (linked.team_runs.empty()) {
    throw IngestError(IngestError::Kind::EmptyIntersection,
                      "no team run has both athletes with >= 2 monobob runs");
  }
  return linked;
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j = {
      {"event_id", r.event_id},
      {"date", r.date},
      {"discipline", to_string(r.discipline)},
      {"athlete1_id", r.athlete1_id},
      {"athlete2_id", r.athlete2_id ? nlohmann::json(*r.athlete2_id) : nlohmann::json(nullptr)},
      {"nationality", r.nationality},
      {"attempt", r.attempt_index},
      {"starting_number", r.starting_number},
      {"start_time", r.start_time},
      {"finish_time", r.finish_time},
      {"riding_time", r.riding_time},
  };
  return j;
}

RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.event_id = j.at("event_id").get<std::string>();
  r.date = j.at("date").get<std::string>();
  auto disc = parse_discipline(j.at("discipline").get<std::string>());
  if (!disc) throw IngestError(IngestError::Kind::MalformedRow, "unknown discipline in dataset");
  r.discipline = *disc;
  r.athlete1_id = j.at("athlete1_id").get<std::string>();
  if (const auto& a2 = j.at("athlete2_id"); !a2.is_null()) r.athlete2_id = a2.get<std::string>();
  r.nationality = j.at("nationality").get<std::string>();
  r.attempt_index = j.at("attempt").get<int>();
  r.starting_number = j.at("starting_number").get<int>();
  r.start_time = j.at("start_time").get<double>();
  r.finish_time = j.at("finish_time").get<double>();
  r.riding_time = j.at("riding_time").get<double>();
  return r;
}

void write_dataset(std::ostream& out, const std::vector<RunRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<RunRecord> read_dataset(std::istream& in) {
  std::vector<RunRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(IngestError::Kind::MalformedRow, e.what(), line_no);
    }
  }
  return out;
}

void write_exclusions(std::ostream& out, const std::vector<Exclusion>& exclusions) {
  for (const auto& e : exclusions) {
    out << e.record.event_id << '\t' << e.record.team_key() << '\t' << e.record.attempt_index << '\t'
        << e.reason << '\n';
  }
}

}  // namespace teamprod::ingest
