#include "teamprod/report.hpp"

#include <algorithm>
#include <tuple>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "teamprod/csv.hpp"

namespace teamprod::report {

namespace {

void check_bin(int b) {
  if (b < 1 || b > 3) throw std::invalid_argument("skill bin " + std::to_string(b) + " outside {1,2,3}");
}

const std::vector<std::string> kCrosstabHeader = {"table", "kind", "row_label", "col_label",
                                                  "p1_bin", "p2_bin", "value"};

}  // namespace

double CrossTab3x3::total() const {
  double t = 0.0;
  for (const auto& row : cells) {
    for (double v : row) t += v;
  }
  return t;
}

CrossTab3x3 pairing_crosstab(std::span<const BinnedRun> runs, CellKind kind, std::string row_label,
                             std::string col_label) {
  CrossTab3x3 tab;
  tab.row_label = std::move(row_label);
  tab.col_label = std::move(col_label);
  tab.cell_kind = kind;
  std::array<std::array<int, 3>, 3> counts{};
  std::array<std::array<double, 3>, 3> sums{};
  for (const auto& r : runs) {
    check_bin(r.p1_bin);
    check_bin(r.p2_bin);
    ++counts[r.p1_bin - 1][r.p2_bin - 1];
    sums[r.p1_bin - 1][r.p2_bin - 1] += r.value;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (kind == CellKind::count) {
        tab.cells[i][j] = counts[i][j];
        tab.present[i][j] = true;
      } else {
        tab.present[i][j] = counts[i][j] > 0;
        tab.cells[i][j] = counts[i][j] > 0 ? sums[i][j] / counts[i][j] : 0.0;
      }
    }
  }
  return tab;
}

std::pair<CrossTab3x3, CrossTab3x3> cross_skill_crosstab(std::span<const TeamRunSkills> runs) {
  std::vector<BinnedRun> start_riding, riding_start;
  for (const auto& r : runs) {
    start_riding.push_back({r.p1.start, r.p2.riding, 0.0});
    riding_start.push_back({r.p1.riding, r.p2.start, 0.0});
  }
  return {pairing_crosstab(start_riding, CellKind::count, "P1 Start-skill Bin", "P2 Riding-skill Bin"),
          pairing_crosstab(riding_start, CellKind::count, "P1 Riding-skill Bin", "P2 Start-skill Bin")};
}

std::vector<HeatmapCell> efficiency_heatmap_cells(std::span<const affinity::EfficiencyEstimate> estimates,
                                                  const TeamMembers& members,
                                                  const std::map<std::string, int>& p1_rank,
                                                  const std::map<std::string, int>& p2_rank) {
  struct Acc {
    double sum = 0.0;
    int n = 0;
    std::string p1, p2;
  };
  std::map<std::tuple<Slice, int, int, std::string, std::string>, Acc> cells;
  for (const auto& e : estimates) {
    const auto& [p1, p2] = members.at(e.team_id);
    const int r1 = p1_rank.at(p1);
    const int r2 = p2_rank.at(p2);
    auto& acc = cells[{e.slice(), r1, r2, p1, p2}];
    acc.sum += e.a_normalized;
    ++acc.n;
  }
  std::vector<HeatmapCell> out;
  out.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    const auto& [slice, r1, r2, p1, p2] = key;
    out.push_back({slice, r1, r2, p1, p2, acc.sum / acc.n, acc.n});
  }
  return out;
}

std::map<std::string, int> skill_ranks(std::span<const fe::SkillProfile> profiles) {
  std::vector<const fe::SkillProfile*> sorted;
  for (const auto& p : profiles) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    if (a->transformed_skill != b->transformed_skill) return a->transformed_skill < b->transformed_skill;
    return a->athlete_id < b->athlete_id;
  });
  std::map<std::string, int> ranks;
  for (std::size_t i = 0; i < sorted.size(); ++i) ranks[sorted[i]->athlete_id] = static_cast<int>(i) + 1;
  return ranks;
}

void write_crosstabs_csv(std::ostream& out, const std::vector<std::pair<std::string, CrossTab3x3>>& tables) {
  out << csv::join_line(kCrosstabHeader) << '\n';
  for (const auto& [name, tab] : tables) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const std::string value = tab.present[i][j] ? csv::format_double(tab.cells[i][j]) : "NA";
        out << csv::join_line({name, tab.cell_kind == CellKind::count ? "count" : "mean", tab.row_label,
                               tab.col_label, std::to_string(i + 1), std::to_string(j + 1), value})
            << '\n';
      }
    }
  }
}

std::vector<std::pair<std::string, CrossTab3x3>> read_crosstabs_csv(std::istream& in) {
  const auto table = csv::read_table(in);
  if (table.header != kCrosstabHeader) throw std::runtime_error("crosstab file: unexpected header");
  std::vector<std::pair<std::string, CrossTab3x3>> out;
  for (const auto& row : table.rows) {
    if (row.size() != kCrosstabHeader.size()) throw std::runtime_error("crosstab file: short row");
    if (out.empty() || out.back().first != row[0]) {
      CrossTab3x3 tab;
      tab.cell_kind = row[1] == "count" ? CellKind::count : CellKind::mean;
      tab.row_label = row[2];
      tab.col_label = row[3];
      out.emplace_back(row[0], tab);
    }
    long long i = 0, j = 0;
    if (!csv::parse_int(row[4], i) || !csv::parse_int(row[5], j) || i < 1 || i > 3 || j < 1 || j > 3) {
      throw std::runtime_error("crosstab file: bad bin index");
    }
    auto& tab = out.back().second;
    if (row[6] == "NA") {
      tab.present[i - 1][j - 1] = false;
      tab.cells[i - 1][j - 1] = 0.0;
    } else {
      double v = 0.0;
      if (!csv::parse_double(row[6], v)) throw std::runtime_error("crosstab file: bad value");
      tab.present[i - 1][j - 1] = true;
      tab.cells[i - 1][j - 1] = v;
    }
  }
  return out;
}

void write_heatmap_csv(std::ostream& out, std::span<const HeatmapCell> cells) {
  out << "slice,p1_rank,p2_rank,p1_id,p2_id,mean_a_normalized,n\n";
  for (const auto& c : cells) {
    out << csv::join_line({slice_label(c.slice), std::to_string(c.p1_rank), std::to_string(c.p2_rank), c.p1_id,
                           c.p2_id, csv::format_double(c.mean_efficiency), std::to_string(c.n)})
        << '\n';
  }
}

void write_skills_csv(std::ostream& out, std::span<const fe::SkillProfile> profiles) {
  out << "athlete_id,dimension,raw_fe,transformed_skill,n_runs\n";
  for (const auto& p : profiles) {
    out << csv::join_line({p.athlete_id, std::string(to_string(p.dimension)), csv::format_double(p.raw_fe),
                           csv::format_double(p.transformed_skill), std::to_string(p.n_runs)})
        << '\n';
  }
}

std::vector<fe::SkillProfile> read_skills_csv(std::istream& in) {
  const auto table = csv::read_table(in);
  const std::vector<std::string> expected = {"athlete_id", "dimension", "raw_fe", "transformed_skill", "n_runs"};
  if (table.header != expected) throw std::runtime_error("skills file: unexpected header");
  std::vector<fe::SkillProfile> out;
  for (const auto& row : table.rows) {
    fe::SkillProfile p;
    long long runs = 0;
    auto dim = row.size() == 5 ? parse_dimension(row[1]) : std::nullopt;
    if (!dim || !csv::parse_double(row[2], p.raw_fe) || !csv::parse_double(row[3], p.transformed_skill) ||
        !csv::parse_int(row[4], runs)) {
      throw std::runtime_error("skills file: malformed row");
    }
    p.athlete_id = row[0];
    p.dimension = *dim;
    p.n_runs = static_cast<int>(runs);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace teamprod::report
