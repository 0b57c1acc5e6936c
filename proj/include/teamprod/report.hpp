#pragma once

// Descriptive tables: skill-bin cross-tabulations of team runs, heatmap cell
// tables of recovered efficiency, and the CSV forms of both.

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "teamprod/affinity.hpp"
#include "teamprod/panel_fe.hpp"

namespace teamprod::report {

enum class CellKind { count, mean };

struct CrossTab3x3 {
  std::string row_label;
  std::string col_label;
  CellKind cell_kind = CellKind::count;
  std::array<std::array<double, 3>, 3> cells{};
  // Mean tables only: false where no run fell into the cell.
  std::array<std::array<bool, 3>, 3> present{};

  double total() const;
  bool operator==(const CrossTab3x3&) const = default;
};

// One team run placed in the bin grid; value is ignored for count tables.
struct BinnedRun {
  int p1_bin = 1;
  int p2_bin = 1;
  double value = 0.0;
};

// Throws std::invalid_argument for a bin outside {1, 2, 3}.
CrossTab3x3 pairing_crosstab(std::span<const BinnedRun> runs, CellKind kind, std::string row_label = "P1 bin",
                             std::string col_label = "P2 bin");

struct SkillBins {
  int start = 1;
  int riding = 1;
};

struct TeamRunSkills {
  SkillBins p1;
  SkillBins p2;
};

// (P1 start vs P2 riding, P1 riding vs P2 start) count tables.
std::pair<CrossTab3x3, CrossTab3x3> cross_skill_crosstab(std::span<const TeamRunSkills> runs);

struct HeatmapCell {
  Slice slice;
  int p1_rank = 0;
  int p2_rank = 0;
  std::string p1_id;
  std::string p2_id;
  double mean_efficiency = 0.0;
  int n = 0;
};

using TeamMembers = std::map<std::string, std::pair<std::string, std::string>>;

// Mean a_normalized per observed (driver, brakeman) pair and slice. Ranks come
// from the supplied orders (1 = lowest skill); unobserved pairs emit no row.
std::vector<HeatmapCell> efficiency_heatmap_cells(std::span<const affinity::EfficiencyEstimate> estimates,
                                                  const TeamMembers& members,
                                                  const std::map<std::string, int>& p1_rank,
                                                  const std::map<std::string, int>& p2_rank);

// Rank 1 = lowest transformed skill; ties broken by athlete id.
std::map<std::string, int> skill_ranks(std::span<const fe::SkillProfile> profiles);

// Long format: table,kind,row_label,col_label,p1_bin,p2_bin,value ("NA" for
// empty mean cells). Several tables may share one file.
void write_crosstabs_csv(std::ostream& out, const std::vector<std::pair<std::string, CrossTab3x3>>& tables);
std::vector<std::pair<std::string, CrossTab3x3>> read_crosstabs_csv(std::istream& in);

void write_heatmap_csv(std::ostream& out, std::span<const HeatmapCell> cells);

void write_skills_csv(std::ostream& out, std::span<const fe::SkillProfile> profiles);
std::vector<fe::SkillProfile> read_skills_csv(std::istream& in);

}  // namespace teamprod::report
