#pragma once
// Pipeline stages behind the `cmag` command line.
//
// Each stage reads its inputs from the run config and writes one document
// into the output directory:
//   ingest       ingest_report.json
//   build-index  <index_dir>/<category>.idx, <index_dir>/subspaces.json
//   route        routing_plan.json
//   retrieve     pools.json
//   assemble     look.json
//   synth        a complete synthetic run directory with config.json
//   eval         eval_<ablation>.json
// Failures surface as StageError, whose code reads "<stage>.<ErrorName>".

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmag/assembly.hpp"
#include "cmag/catalog.hpp"
#include "cmag/error.hpp"
#include "cmag/evidence.hpp"
#include "cmag/index.hpp"
#include "cmag/retrieval.hpp"
#include "cmag/router.hpp"
#include "cmag/vecmath.hpp"

namespace cmag {

struct RunPaths {
  std::filesystem::path catalog;
  std::filesystem::path taxonomy;
  std::filesystem::path evidence;
  std::filesystem::path index_dir = "index";
  std::filesystem::path out_dir = "out";
};

struct RunConfig {
  RunPaths paths;
  RetrievalConfig retrieval;
  GenerationBudget budget;
  RankPolicy subspace_policy;
  // "scripted:<path>", "http:<url>" or "heuristic" (in-process judge).
  std::string judge = "heuristic";
  // Same forms as `judge`; empty disables the advisor. "heuristic" is not valid here.
  std::string advisor;
  std::chrono::milliseconds judge_timeout{10000};
  bool filter_passthrough = false;
  std::uint64_t seed = 0;
  std::size_t eval_scenarios = 100;

  // Relative paths resolve against `base_dir`.
  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // CMAG_JUDGE_URL and CMAG_JUDGE_TIMEOUT_MS.
  void apply_env();
  // CRC-32 of the canonical config document, as 8 hex digits.
  std::string hash() const;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& message);

  const std::string& stage() const { return stage_; }
  ErrorCode code() const { return code_; }
  // "<stage>.<ErrorName>"
  std::string qualified_code() const;
  nlohmann::json to_json() const;

 private:
  std::string stage_;
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// In-memory building blocks shared by the stages and the evaluator.
// ---------------------------------------------------------------------------

IndexMap build_indices(const Catalog& catalog);
SubspaceMap build_subspaces(const Catalog& catalog, const RankPolicy& policy);

nlohmann::json subspaces_to_json(const SubspaceMap& subspaces);
SubspaceMap subspaces_from_json(const nlohmann::json& doc);

struct RetrievalRun {
  std::map<std::string, CandidatePool> pools;
  std::vector<std::string> warnings;
};

RetrievalRun retrieve_all(const RoutingPlan& plan, const EvidenceStore& store, const Taxonomy& taxonomy,
                          const RetrievalConfig& cfg, const IndexMap& indices, const SubspaceMap& subspaces);

struct AssemblyRun {
  AvatarLook winner;
  std::vector<AvatarLook> candidates;
  std::vector<std::string> log;
  std::set<std::string> at_risk;
  std::size_t tournament_calls = 0;
};

AssemblyRun assemble_all(const std::map<std::string, CandidatePool>& pools, const RoutingPlan& plan,
                         const Taxonomy& taxonomy, const std::map<std::string, std::string>& bundle_ids,
                         JudgeClient& judge, const RunConfig& cfg);

std::map<std::string, std::string> bundle_ids_of(const Catalog& catalog);

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

CatalogStats cmd_ingest(const RunConfig& cfg);
void cmd_build_index(const RunConfig& cfg);
RoutingPlan cmd_route(const RunConfig& cfg);
RetrievalRun cmd_retrieve(const RunConfig& cfg);
// Returns the final look document that was written.
nlohmann::json cmd_assemble(const RunConfig& cfg);
// Writes a synthetic world plus a config.json wired to it; returns that config.
RunConfig cmd_synth(const RunConfig& cfg);

enum class Ablation { kNone, kSuppression, kRouter, kScaffold };

std::string_view ablation_name(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view s);

struct EvalMetrics {
  Ablation ablation = Ablation::kNone;
  std::size_t scenarios = 0;
  double top1_accuracy = 0.0;     // target-category pool top-1 is the planted asset
  double pool_recall = 0.0;       // planted asset anywhere in the target pool
  double look_accuracy = 0.0;     // final look wears the planted asset
  double category_coverage = 0.0; // planted categories that were routed
  double mean_iterations = 0.0;   // verifications spent on the winning look
  std::size_t assembly_failures = 0;

  nlohmann::json to_json() const;
};

EvalMetrics run_eval(const RunConfig& cfg, Ablation ablation);
std::string format_metrics_table(const std::vector<EvalMetrics>& rows);

// Runs the ablations and writes eval_<name>.json for each.
std::vector<EvalMetrics> cmd_eval(const RunConfig& cfg, const std::vector<Ablation>& ablations);

}  // namespace cmag
