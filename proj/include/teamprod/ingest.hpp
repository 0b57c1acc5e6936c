#pragma once

// Race-result ingestion: parsing delimiter-separated result panels into
// RunRecords, sample rules (attempt truncation, duplicate removal) and the
// linkage between solo (monobob) and two-person runs.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "teamprod/types.hpp"

namespace teamprod::ingest {

enum class Discipline { monobob, two_woman };

std::string_view to_string(Discipline d);
std::optional<Discipline> parse_discipline(std::string_view text);

struct RunRecord {
  std::string event_id;
  std::string date;  // ISO-8601 calendar date, YYYY-MM-DD
  Discipline discipline = Discipline::monobob;
  std::string athlete1_id;  // driver, or the solo athlete
  std::optional<std::string> athlete2_id;  // brakeman; absent for monobob
  std::string nationality;
  int attempt_index = 1;
  int starting_number = 1;
  double start_time = 0.0;
  double finish_time = 0.0;
  double riding_time = 0.0;

  // Identifies the competitor within an event: the solo athlete or the pair.
  std::string team_key() const;
  double outcome(Dimension d) const;

  bool operator==(const RunRecord&) const = default;
};

class IngestError : public std::runtime_error {
 public:
  enum class Kind { MissingColumn, MalformedRow, NonPositiveTime, InvertedSplit, EmptyIntersection };

  IngestError(Kind kind, std::string message, std::optional<std::size_t> line = std::nullopt);

  Kind kind() const noexcept { return kind_; }
  // 1-based line in the source text (the header is line 1).
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::optional<std::size_t> line_;
};

// Maps logical column names to the header labels used by a particular source.
struct ColumnSchema {
  char delimiter = ',';
  std::map<std::string, std::string> columns;

  // Header labels equal to the logical names.
  static ColumnSchema identity();
  // {"delimiter": ",", "columns": {"event_id": "Race", ...}}; unmapped
  // logical columns keep their own name.
  static ColumnSchema from_json(const nlohmann::json& j);

  const std::string& header_for(const std::string& logical) const;
};

inline constexpr const char* kRequiredColumns[] = {
    "event_id", "date", "discipline", "athlete1_id", "athlete2_id", "nationality",
    "attempt", "starting_number", "start_time", "finish_time"};

std::vector<RunRecord> parse_results(std::istream& source, const ColumnSchema& schema);

// Writes records as CSV under the identity schema; parse_results reads it back.
void write_results_csv(std::ostream& out, const std::vector<RunRecord>& records);

// Keeps attempt_index <= max_attempts within each (event, competitor) group.
std::vector<RunRecord> truncate_attempts(const std::vector<RunRecord>& records, int max_attempts = 2);

struct Exclusion {
  RunRecord record;
  std::string reason;
};

struct DedupResult {
  std::vector<RunRecord> kept;
  std::vector<Exclusion> dropped;
};

// Same (event, competitor, attempt) seen again: first occurrence wins.
DedupResult drop_duplicates(const std::vector<RunRecord>& records);

struct LinkedDataset {
  // Athletes appearing in team runs that have at least kMinMonobobRuns solo runs.
  std::set<std::string> eligible_athletes;
  std::map<std::string, int> monobob_runs;
  std::vector<RunRecord> team_runs;
  std::vector<Exclusion> exclusions;
};

inline constexpr int kMinMonobobRuns = 2;

LinkedDataset link_athletes(const std::vector<RunRecord>& mono, const std::vector<RunRecord>& team);

// Canonical dataset: one JSON object per line.
nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);
void write_dataset(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_dataset(std::istream& in);

// One excluded run per line: "<event_id>\t<competitor>\t<attempt>\t<reason>".
void write_exclusions(std::ostream& out, const std::vector<Exclusion>& exclusions);

}  // namespace teamprod::ingest
