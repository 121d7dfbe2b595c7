#pragma once
// Judge-driven avatar assembly: grid filtering, outfit selection, the
// verify/edit loop, usage-capped candidate generation and the batched
// tournament that picks the final look.
//
// The judge is advisory. Every answer is checked against the pools and the
// taxonomy; picks that break a platform constraint are corrected or skipped
// and the correction is logged.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmag/catalog.hpp"
#include "cmag/retrieval.hpp"
#include "cmag/router.hpp"

namespace cmag {

enum class LookStatus { kDraft, kVerified, kRejected };
enum class EditAction { kAdd, kRemove, kSubstitute };
enum class IssueKind { kMissingCategory, kIllFitting, kClipping, kOffPrompt };

std::string_view look_status_name(LookStatus s);

struct Edit {
  EditAction action = EditAction::kAdd;
  std::string category_id;
  std::string asset_id;  // empty for remove

  static Edit from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct Issue {
  IssueKind kind = IssueKind::kOffPrompt;
  std::optional<std::string> category_id;
};

struct VerificationReport {
  bool pass = false;
  std::vector<Issue> issues;
  std::vector<Edit> edits;

  static VerificationReport from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct AvatarLook {
  std::uint32_t look_id = 0;
  std::map<std::string, std::string> selections;  // category -> asset
  std::string body_bundle_id;
  std::vector<Edit> history;
  LookStatus status = LookStatus::kDraft;
  std::optional<VerificationReport> last_report;
  std::size_t verifications = 0;

  nlohmann::json to_json() const;
};

// What the judge sees of a look: selections with their retrieval scores.
nlohmann::json describe_look(const AvatarLook& look, const std::map<std::string, CandidatePool>& pools);

struct JudgeContext {
  PromptSpec prompt;
  nlohmann::json concept_context = nlohmann::json::object();  // e.g. routed queries
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  // Each call throws Error(kJudgeUnavailable) when the judge cannot answer.
  virtual std::vector<std::string> filter_grid(const CandidatePool& pool, const JudgeContext& ctx) = 0;
  virtual std::map<std::string, std::string> select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                           const JudgeContext& ctx) = 0;
  virtual VerificationReport verify(const nlohmann::json& look_descriptor, const JudgeContext& ctx) = 0;
  // Index of the best look within the batch.
  virtual std::size_t compare_batch(const std::vector<nlohmann::json>& look_descriptors, const JudgeContext& ctx) = 0;
};

struct GenerationBudget {
  std::size_t n_candidates = 6;
  std::size_t per_asset_cap = 2;
  std::size_t per_bundle_cap = 2;
  std::size_t bundle_rotation = 3;
  std::size_t max_refine_iters = 3;
  std::size_t batch_size = 4;

  void validate() const;
  static GenerationBudget from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct AssemblyContext {
  const Taxonomy* taxonomy = nullptr;
  JudgeContext judge;
  // asset_id -> bundle_id for assets of the bundle category; missing entries
  // use the asset_id itself.
  std::map<std::string, std::string> bundle_ids;
  std::vector<std::string>* log = nullptr;

  std::string bundle_of(const std::string& asset_id) const;
  void note(std::string message) const;
};

struct FilterResult {
  std::map<std::string, CandidatePool> pools;
  std::set<std::string> at_risk;  // categories the judge emptied
};

// Judge-kept ids intersected with the pool, pool order preserved, truncated
// to gate_k. With passthrough set, an unavailable judge keeps every pool.
FilterResult filter_pools(const std::map<std::string, CandidatePool>& pools, JudgeClient& judge,
                          const RetrievalConfig& cfg, const AssemblyContext& ctx, bool passthrough = false);

// Checks ≤1 asset per category, exclusion safety and pool membership.
std::vector<std::string> look_violations(const AvatarLook& look, const std::map<std::string, CandidatePool>& pools,
                                         const Taxonomy& taxonomy);

AvatarLook assemble_initial(const std::map<std::string, CandidatePool>& filtered, JudgeClient& judge,
                            const AssemblyContext& ctx);

// Per-asset and per-bundle usage across generated candidates.
class UsageLedger {
 public:
  UsageLedger(std::size_t per_asset_cap, std::size_t per_bundle_cap, std::string bundle_category)
      : asset_cap_(per_asset_cap), bundle_cap_(per_bundle_cap), bundle_category_(std::move(bundle_category)) {}

  bool asset_available(const std::string& asset_id) const;
  bool bundle_available(const std::string& bundle_id) const;
  // Whether `asset_id` may be placed in `category_id`.
  bool allows(const std::string& category_id, const std::string& asset_id, const AssemblyContext& ctx) const;
  void commit(const AvatarLook& look);

  const std::map<std::string, std::size_t>& asset_uses() const { return asset_uses_; }
  const std::map<std::string, std::size_t>& bundle_uses() const { return bundle_uses_; }

 private:
  std::size_t asset_cap_;
  std::size_t bundle_cap_;
  std::string bundle_category_;
  std::map<std::string, std::size_t> asset_uses_;
  std::map<std::string, std::size_t> bundle_uses_;
};

// verify -> edit -> re-verify, at most budget.max_refine_iters verifications.
// Edits that break an invariant (or a ledger cap, when given) are skipped.
AvatarLook refine(AvatarLook look, const std::map<std::string, CandidatePool>& filtered, JudgeClient& judge,
                  const GenerationBudget& budget, const AssemblyContext& ctx, const UsageLedger* ledger = nullptr);

struct BodyBundle {
  std::string bundle_id;
  std::string asset_id;
};

// Bundles in bundle-category pool order, one entry per distinct bundle_id.
std::vector<BodyBundle> rank_body_bundles(const std::map<std::string, CandidatePool>& filtered,
                                          const AssemblyContext& ctx);

struct GenerationResult {
  std::vector<AvatarLook> looks;
  UsageLedger ledger;
};

// Candidate i starts from `base`, takes bundle (i mod rotation), swaps capped
// assets for the next unblocked pool entry, and is refined.
GenerationResult generate_candidates(const AvatarLook& base, const std::map<std::string, CandidatePool>& filtered,
                                     const std::vector<BodyBundle>& bundles, JudgeClient& judge,
                                     const GenerationBudget& budget, const AssemblyContext& ctx);

struct TournamentResult {
  AvatarLook winner;
  std::size_t judge_calls = 0;
  std::size_t rounds = 0;
};

// Batches of ≤ batch_size in insertion order; batch winners advance until one
// look remains. A batch of one advances without a judge call.
TournamentResult tournament(const std::vector<AvatarLook>& looks, const std::map<std::string, CandidatePool>& filtered,
                            JudgeClient& judge, const GenerationBudget& budget, const AssemblyContext& ctx);

}  // namespace cmag
