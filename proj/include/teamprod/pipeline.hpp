#pragma once

// End-to-end orchestration: ingest -> fe -> transform -> estimate ->
// elasticity -> reports, writing every artifact into one directory together
// with a manifest of SHA-256 content hashes.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "teamprod/affinity.hpp"
#include "teamprod/elasticity.hpp"
#include "teamprod/ingest.hpp"
#include "teamprod/panel_fe.hpp"
#include "teamprod/transform.hpp"

namespace teamprod::pipeline {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct FeOptions {
  double tolerance = 1e-10;
  int max_iterations = 10000;
  fe::ReferencePolicy reference_policy = fe::ReferencePolicy::mean_zero;
};

struct ElasticityOptions {
  elasticity::Variant variant = elasticity::Variant::chain_rule;
  bool intercept = false;
};

struct PipelineConfig {
  std::filesystem::path input;
  ingest::ColumnSchema schema = ingest::ColumnSchema::identity();
  int max_attempts = 2;
  FeOptions fe;
  double floor = transform::kDefaultFloor;
  affinity::KernelConfig kernel;
  ElasticityOptions elasticity;
  std::filesystem::path output_dir = "out";
  std::ostream* log = nullptr;

  // Sections: ingest{input, schema, max_attempts}, fe{...}, transform{floor},
  // estimate{...}, elasticity{variant, intercept}, output{dir}. Relative paths
  // resolve against base_dir. Throws ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

affinity::KernelConfig kernel_config_from_json(const nlohmann::json& j, affinity::KernelConfig base = {});

struct IngestOutput {
  std::vector<ingest::RunRecord> monobob;  // athletes with enough solo runs
  ingest::LinkedDataset linked;
  std::vector<ingest::Exclusion> exclusions;  // duplicates + linkage drops

  std::vector<ingest::RunRecord> dataset() const;  // monobob then linked team runs
};

IngestOutput run_ingest(std::istream& source, const ingest::ColumnSchema& schema, int max_attempts);

struct SkillOutput {
  std::map<Dimension, fe::FixedEffectFit> fits;
  std::vector<fe::SkillProfile> profiles;  // linked athletes, transformed_skill filled
  std::vector<std::pair<std::string, int>> dropped;
};

// Solo fixed effects per dimension (athlete + event + starting order), then
// the positive shift over the linked athletes of each dimension.
SkillOutput estimate_skills(const IngestOutput& ingested, const FeOptions& options, double floor);

struct TeamOutput {
  std::vector<affinity::TeamTaskObservation> observations;
  // (dimension, attempt) -> shifted team outcome per linked team run index.
  std::map<std::pair<Dimension, int>, std::map<std::size_t, double>> shifted_outcomes;
};

TeamOutput build_observations(const std::vector<ingest::RunRecord>& team_runs,
                              const std::vector<fe::SkillProfile>& profiles, const FeOptions& options, double floor);

struct ElasticityOutput {
  std::vector<elasticity::PolyFit> fits;
  std::vector<elasticity::ElasticityPoint> points;
  std::map<Slice, std::string> errors;
};

// Effective leader input a_raw * x per observation, one fit per slice.
ElasticityOutput compute_elasticities(const std::vector<affinity::TeamTaskObservation>& observations,
                                      const std::vector<std::optional<affinity::EfficiencyEstimate>>& estimates,
                                      const ElasticityOptions& options);

struct Artifact {
  std::string name;  // file name relative to the output directory
  std::string stage;
  std::string sha256;
};

std::string sha256_file(const std::filesystem::path& path);

// Writes the descriptive and pairing tables; returns the files written.
std::vector<Artifact> write_reports(const std::filesystem::path& dir, const std::vector<ingest::RunRecord>& team_runs,
                                    const std::vector<fe::SkillProfile>& profiles,
                                    const std::vector<affinity::TeamTaskObservation>& observations,
                                    const std::vector<affinity::EfficiencyEstimate>& estimates);

struct PipelineResult {
  bool ok = false;
  std::string failed_stage;
  std::string error;
  std::vector<Artifact> artifacts;
};

PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace teamprod::pipeline
