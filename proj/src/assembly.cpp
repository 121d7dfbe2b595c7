#include "cmag/assembly.hpp"

#include <algorithm>

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

namespace {

std::string_view edit_action_name(EditAction a) {
  switch (a) {
    case EditAction::kAdd: return "add";
    case EditAction::kRemove: return "remove";
    case EditAction::kSubstitute: return "substitute";
  }
  return "add";
}

std::string_view issue_kind_name(IssueKind k) {
  switch (k) {
    case IssueKind::kMissingCategory: return "missing_category";
    case IssueKind::kIllFitting: return "ill_fitting";
    case IssueKind::kClipping: return "clipping";
    case IssueKind::kOffPrompt: return "off_prompt";
  }
  return "off_prompt";
}

IssueKind parse_issue_kind(const std::string& s) {
  if (s == "missing_category") return IssueKind::kMissingCategory;
  if (s == "ill_fitting") return IssueKind::kIllFitting;
  if (s == "clipping") return IssueKind::kClipping;
  if (s == "off_prompt") return IssueKind::kOffPrompt;
  throw Error(ErrorCode::kMalformedRecord, "unknown issue kind '" + s + "'");
}

std::string describe(const Edit& e) {
  std::string s = std::string(edit_action_name(e.action)) + " " + e.category_id;
  if (!e.asset_id.empty()) s += "=" + e.asset_id;
  return s;
}

const CandidatePool* pool_of(const std::map<std::string, CandidatePool>& pools, const std::string& category) {
  auto it = pools.find(category);
  return it == pools.end() ? nullptr : &it->second;
}

bool conflicts_with_selection(const AvatarLook& look, const std::string& category, const Taxonomy& taxonomy) {
  return std::any_of(look.selections.begin(), look.selections.end(),
                     [&](const auto& sel) { return taxonomy.excludes(category, sel.first); });
}

void refresh_bundle(AvatarLook& look, const AssemblyContext& ctx) {
  const std::string& bundle_cat = ctx.taxonomy->bundle_category;
  auto it = look.selections.find(bundle_cat);
  look.body_bundle_id = (bundle_cat.empty() || it == look.selections.end()) ? std::string() : ctx.bundle_of(it->second);
}

void require_valid(const AvatarLook& look, const std::map<std::string, CandidatePool>& pools, const Taxonomy& taxonomy) {
  const auto violations = look_violations(look, pools, taxonomy);
  if (!violations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "look " + std::to_string(look.look_id) + " violates: " + violations.front());
  }
}

}  // namespace

std::string_view look_status_name(LookStatus s) {
  switch (s) {
    case LookStatus::kDraft: return "draft";
    case LookStatus::kVerified: return "verified";
    case LookStatus::kRejected: return "rejected";
  }
  return "draft";
}

Edit Edit::from_json(const json& doc) {
  Edit e;
  const auto action = doc.at("action").get<std::string>();
  if (action == "add") {
    e.action = EditAction::kAdd;
  } else if (action == "remove") {
    e.action = EditAction::kRemove;
  } else if (action == "substitute") {
    e.action = EditAction::kSubstitute;
  } else {
    throw Error(ErrorCode::kMalformedRecord, "unknown edit action '" + action + "'");
  }
  e.category_id = doc.at("category_id").get<std::string>();
  if (doc.contains("asset_id") && !doc.at("asset_id").is_null()) e.asset_id = doc.at("asset_id").get<std::string>();
  return e;
}

json Edit::to_json() const {
  json doc = {{"action", std::string(edit_action_name(action))}, {"category_id", category_id}};
  if (!asset_id.empty()) doc["asset_id"] = asset_id;
  return doc;
}

VerificationReport VerificationReport::from_json(const json& doc) {
  VerificationReport r;
  try {
    const auto verdict = doc.at("verdict").get<std::string>();
    if (verdict != "pass" && verdict != "fail") throw Error(ErrorCode::kMalformedRecord, "verdict '" + verdict + "'");
    r.pass = verdict == "pass";
    if (doc.contains("issues")) {
      for (const auto& i : doc.at("issues")) {
        Issue issue{parse_issue_kind(i.at("kind").get<std::string>()), std::nullopt};
        if (i.contains("category_id") && !i.at("category_id").is_null()) issue.category_id = i.at("category_id").get<std::string>();
        r.issues.push_back(std::move(issue));
      }
    }
    if (doc.contains("edits")) {
      for (const auto& e : doc.at("edits")) r.edits.push_back(Edit::from_json(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("verification report: ") + e.what());
  }
  return r;
}

json VerificationReport::to_json() const {
  json issues_doc = json::array();
  for (const auto& i : issues) {
    json item = {{"kind", std::string(issue_kind_name(i.kind))}};
    if (i.category_id) item["category_id"] = *i.category_id;
    issues_doc.push_back(item);
  }
  json edits_doc = json::array();
  for (const auto& e : edits) edits_doc.push_back(e.to_json());
  return {{"verdict", pass ? "pass" : "fail"}, {"issues", issues_doc}, {"edits", edits_doc}};
}

json AvatarLook::to_json() const {
  json history_doc = json::array();
  for (const auto& e : history) history_doc.push_back(e.to_json());
  json doc = {{"look_id", look_id},
              {"status", std::string(look_status_name(status))},
              {"selections", selections},
              {"body_bundle_id", body_bundle_id},
              {"history", history_doc},
              {"verifications", verifications}};
  doc["last_report"] = last_report ? last_report->to_json() : json(nullptr);
  return doc;
}

json describe_look(const AvatarLook& look, const std::map<std::string, CandidatePool>& pools) {
  json selections = json::object();
  for (const auto& [cat, asset] : look.selections) {
    json entry = {{"asset_id", asset}};
    const CandidatePool* pool = pool_of(pools, cat);
    const Candidate* c = pool ? pool->find(asset) : nullptr;
    entry["score"] = c ? json(c->score) : json(nullptr);
    selections[cat] = entry;
  }
  return {{"look_id", look.look_id}, {"body_bundle_id", look.body_bundle_id}, {"selections", selections}};
}

void GenerationBudget::validate() const {
  if (n_candidates < 1 || per_asset_cap < 1 || per_bundle_cap < 1 || bundle_rotation < 1 || max_refine_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "generation budget fields must be >= 1");
  }
  if (batch_size < 2) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 2");
}

GenerationBudget GenerationBudget::from_json(const json& doc) {
  GenerationBudget b;
  try {
    b.n_candidates = doc.value("n_candidates", b.n_candidates);
    b.per_asset_cap = doc.value("per_asset_cap", b.per_asset_cap);
    b.per_bundle_cap = doc.value("per_bundle_cap", b.per_bundle_cap);
    b.bundle_rotation = doc.value("bundle_rotation", b.bundle_rotation);
    b.max_refine_iters = doc.value("max_refine_iters", b.max_refine_iters);
    b.batch_size = doc.value("batch_size", b.batch_size);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("generation budget: ") + e.what());
  }
  b.validate();
  return b;
}

json GenerationBudget::to_json() const {
  return {{"n_candidates", n_candidates},         {"per_asset_cap", per_asset_cap},
          {"per_bundle_cap", per_bundle_cap},     {"bundle_rotation", bundle_rotation},
          {"max_refine_iters", max_refine_iters}, {"batch_size", batch_size}};
}

std::string AssemblyContext::bundle_of(const std::string& asset_id) const {
  auto it = bundle_ids.find(asset_id);
  return it == bundle_ids.end() ? asset_id : it->second;
}

void AssemblyContext::note(std::string message) const {
  if (log != nullptr) log->push_back(std::move(message));
}

// ---------------------------------------------------------------------------
// Filtering and initial selection
// ---------------------------------------------------------------------------

FilterResult filter_pools(const std::map<std::string, CandidatePool>& pools, JudgeClient& judge,
                          const RetrievalConfig& cfg, const AssemblyContext& ctx, bool passthrough) {
  FilterResult out;
  for (const auto& [cat, pool] : pools) {
    std::set<std::string> kept;
    try {
      for (auto& id : judge.filter_grid(pool, ctx.judge)) {
        if (!pool.contains(id)) {
          ctx.note("filter_grid: ignored foreign asset '" + id + "' for " + cat);
          continue;
        }
        kept.insert(std::move(id));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kJudgeUnavailable || !passthrough) throw;
      ctx.note("filter_grid: judge unavailable for " + cat + ", passing pool through");
      for (const auto& c : pool.candidates) kept.insert(c.asset_id);
    }

    CandidatePool filtered{cat, {}};
    for (const auto& c : pool.candidates) {
      if (filtered.candidates.size() >= cfg.gate_k) break;
      if (kept.count(c.asset_id)) filtered.candidates.push_back(c);
    }
    if (filtered.candidates.empty()) {
      out.at_risk.insert(cat);
      ctx.note("filter_grid: category " + cat + " has no surviving candidates");
    }
    out.pools[cat] = std::move(filtered);
  }
  return out;
}

std::vector<std::string> look_violations(const AvatarLook& look, const std::map<std::string, CandidatePool>& pools,
                                         const Taxonomy& taxonomy) {
  std::vector<std::string> out;
  for (auto a = look.selections.begin(); a != look.selections.end(); ++a) {
    const CandidatePool* pool = pool_of(pools, a->first);
    if (pool == nullptr || !pool->contains(a->second)) {
      out.push_back(a->second + " is not in the " + a->first + " pool");
    }
    for (auto b = std::next(a); b != look.selections.end(); ++b) {
      if (taxonomy.excludes(a->first, b->first)) out.push_back(a->first + " and " + b->first + " are mutually exclusive");
    }
  }
  return out;
}

AvatarLook assemble_initial(const std::map<std::string, CandidatePool>& filtered, JudgeClient& judge,
                            const AssemblyContext& ctx) {
  const Taxonomy& taxonomy = *ctx.taxonomy;
  for (const auto& core : taxonomy.required_core) {
    const CandidatePool* pool = pool_of(filtered, core);
    if (pool == nullptr || pool->candidates.empty()) {
      throw Error(ErrorCode::kMissingCoreCategory, "required category " + core + " has no candidates");
    }
  }

  const auto picks = judge.select_outfit(filtered, ctx.judge);

  // Core categories claim their exclusion groups first.
  std::vector<std::string> order;
  for (const auto& [cat, _] : picks) {
    if (taxonomy.required_core.count(cat)) order.push_back(cat);
  }
  for (const auto& [cat, _] : picks) {
    if (!taxonomy.required_core.count(cat)) order.push_back(cat);
  }

  AvatarLook look;
  for (const auto& cat : order) {
    const std::string& asset = picks.at(cat);
    const CandidatePool* pool = pool_of(filtered, cat);
    if (pool == nullptr || pool->candidates.empty()) {
      ctx.note("select_outfit: ignored pick for unavailable category " + cat);
      continue;
    }
    if (conflicts_with_selection(look, cat, taxonomy)) {
      ctx.note("select_outfit: dropped " + cat + " (exclusion conflict with an earlier pick)");
      continue;
    }
    if (pool->contains(asset)) {
      look.selections[cat] = asset;
    } else {
      look.selections[cat] = pool->candidates.front().asset_id;
      ctx.note("select_outfit: replaced foreign pick '" + asset + "' for " + cat + " with top candidate");
    }
  }
  for (const auto& core : taxonomy.required_core) {
    if (!look.selections.count(core)) {
      look.selections[core] = filtered.at(core).candidates.front().asset_id;
      ctx.note("select_outfit: filled required category " + core + " with top candidate");
    }
  }
  refresh_bundle(look, ctx);
  look.status = LookStatus::kDraft;
  require_valid(look, filtered, taxonomy);
  return look;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

bool UsageLedger::asset_available(const std::string& asset_id) const {
  auto it = asset_uses_.find(asset_id);
  return it == asset_uses_.end() || it->second < asset_cap_;
}

bool UsageLedger::bundle_available(const std::string& bundle_id) const {
  auto it = bundle_uses_.find(bundle_id);
  return it == bundle_uses_.end() || it->second < bundle_cap_;
}

bool UsageLedger::allows(const std::string& category_id, const std::string& asset_id, const AssemblyContext& ctx) const {
  if (!bundle_category_.empty() && category_id == bundle_category_) return bundle_available(ctx.bundle_of(asset_id));
  return asset_available(asset_id);
}

void UsageLedger::commit(const AvatarLook& look) {
  for (const auto& [cat, asset] : look.selections) {
    if (!bundle_category_.empty() && cat == bundle_category_) {
      ++bundle_uses_[look.body_bundle_id];
    } else {
      ++asset_uses_[asset];
    }
  }
}

namespace {

// Empty string when the edit is applicable, otherwise the reason it is not.
std::string edit_rejection(const Edit& edit, const AvatarLook& look, const std::map<std::string, CandidatePool>& pools,
                           const AssemblyContext& ctx, const UsageLedger* ledger) {
  const Taxonomy& taxonomy = *ctx.taxonomy;
  const bool selected = look.selections.count(edit.category_id) > 0;
  const CandidatePool* pool = pool_of(pools, edit.category_id);

  if (edit.action == EditAction::kRemove) {
    if (!selected) return "category not selected";
    if (taxonomy.required_core.count(edit.category_id)) return "category is required";
    return {};
  }
  if (pool == nullptr) return "category has no filtered pool";
  if (!pool->contains(edit.asset_id)) return "asset not in the category pool";
  if (ledger != nullptr && !ledger->allows(edit.category_id, edit.asset_id, ctx)) return "usage cap reached";
  if (edit.action == EditAction::kAdd) {
    if (selected) return "category already selected";
    if (conflicts_with_selection(look, edit.category_id, taxonomy)) return "exclusion conflict";
    return {};
  }
  if (!selected) return "substitute targets an unselected category";
  if (look.selections.at(edit.category_id) == edit.asset_id) return "asset already selected";
  return {};
}

void apply_edit(AvatarLook& look, const Edit& edit, const AssemblyContext& ctx) {
  if (edit.action == EditAction::kRemove) {
    look.selections.erase(edit.category_id);
  } else {
    look.selections[edit.category_id] = edit.asset_id;
  }
  refresh_bundle(look, ctx);
  look.history.push_back(edit);
}

}  // namespace

AvatarLook refine(AvatarLook look, const std::map<std::string, CandidatePool>& filtered, JudgeClient& judge,
                  const GenerationBudget& budget, const AssemblyContext& ctx, const UsageLedger* ledger) {
  for (std::size_t iter = 1; iter <= budget.max_refine_iters; ++iter) {
    VerificationReport report = judge.verify(describe_look(look, filtered), ctx.judge);
    ++look.verifications;
    if (!report.pass && report.edits.empty() && report.issues.empty()) {
      ctx.note("verify: failing report without issues or edits for look " + std::to_string(look.look_id));
    }
    const bool pass = report.pass;
    look.last_report = report;
    if (pass) {
      look.status = LookStatus::kVerified;
      return look;
    }
    if (iter == budget.max_refine_iters) break;

    for (const auto& edit : report.edits) {
      const std::string why = edit_rejection(edit, look, filtered, ctx, ledger);
      if (!why.empty()) {
        ctx.note("refine: skipped edit '" + describe(edit) + "' on look " + std::to_string(look.look_id) + ": " + why);
        continue;
      }
      apply_edit(look, edit, ctx);
      require_valid(look, filtered, *ctx.taxonomy);
    }
  }
  look.status = LookStatus::kDraft;
  return look;
}

// ---------------------------------------------------------------------------
// Candidate generation and tournament
// ---------------------------------------------------------------------------

std::vector<BodyBundle> rank_body_bundles(const std::map<std::string, CandidatePool>& filtered,
                                          const AssemblyContext& ctx) {
  std::vector<BodyBundle> out;
  const CandidatePool* pool = pool_of(filtered, ctx.taxonomy->bundle_category);
  if (pool == nullptr) return out;
  std::set<std::string> seen;
  for (const auto& c : pool->candidates) {
    std::string bundle = ctx.bundle_of(c.asset_id);
    if (seen.insert(bundle).second) out.push_back({std::move(bundle), c.asset_id});
  }
  return out;
}

GenerationResult generate_candidates(const AvatarLook& base, const std::map<std::string, CandidatePool>& filtered,
                                     const std::vector<BodyBundle>& bundles, JudgeClient& judge,
                                     const GenerationBudget& budget, const AssemblyContext& ctx) {
  budget.validate();
  const Taxonomy& taxonomy = *ctx.taxonomy;
  const std::string& bundle_cat = taxonomy.bundle_category;
  const bool uses_bundles = !bundle_cat.empty() && filtered.count(bundle_cat) > 0;
  if (uses_bundles && bundles.empty()) {
    throw Error(ErrorCode::kBudgetInfeasible, "no body bundles available for " + bundle_cat);
  }

  GenerationResult result{{}, UsageLedger(budget.per_asset_cap, budget.per_bundle_cap, bundle_cat)};
  UsageLedger& ledger = result.ledger;
  const std::size_t rotation = std::min(budget.bundle_rotation, bundles.size());

  for (std::size_t i = 0; i < budget.n_candidates; ++i) {
    AvatarLook look;
    look.look_id = static_cast<std::uint32_t>(i);
    look.selections = base.selections;

    if (uses_bundles) {
      const std::size_t preferred = i % rotation;
      std::optional<std::size_t> chosen;
      for (std::size_t step = 0; step < bundles.size() && !chosen; ++step) {
        const std::size_t j = (preferred + step) % bundles.size();
        if (ledger.bundle_available(bundles[j].bundle_id)) chosen = j;
      }
      if (!chosen) {
        if (taxonomy.required_core.count(bundle_cat)) {
          throw Error(ErrorCode::kBudgetInfeasible, "every body bundle hit its usage cap at candidate " + std::to_string(i));
        }
        look.selections.erase(bundle_cat);
        ctx.note("generate: candidate " + std::to_string(i) + " has no bundle left");
      } else {
        if (*chosen != preferred) {
          ctx.note("generate: candidate " + std::to_string(i) + " bundle " + bundles[preferred].bundle_id +
                   " capped, using " + bundles[*chosen].bundle_id);
        }
        look.selections[bundle_cat] = bundles[*chosen].asset_id;
      }
    }

    for (auto it = look.selections.begin(); it != look.selections.end();) {
      const std::string& cat = it->first;
      if (uses_bundles && cat == bundle_cat) {
        ++it;
        continue;
      }
      if (ledger.asset_available(it->second)) {
        ++it;
        continue;
      }
      const auto& candidates = filtered.at(cat).candidates;
      auto pos = std::find_if(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.asset_id == it->second; });
      std::optional<std::string> replacement;
      for (auto c = pos == candidates.end() ? candidates.begin() : std::next(pos); c != candidates.end() && !replacement; ++c) {
        if (ledger.asset_available(c->asset_id)) replacement = c->asset_id;
      }
      for (auto c = candidates.begin(); c != pos && c != candidates.end() && !replacement; ++c) {
        if (ledger.asset_available(c->asset_id)) replacement = c->asset_id;
      }
      if (replacement) {
        ctx.note("generate: candidate " + std::to_string(i) + " swapped capped " + it->second + " for " + *replacement);
        it->second = *replacement;
        ++it;
      } else if (taxonomy.required_core.count(cat)) {
        throw Error(ErrorCode::kBudgetInfeasible, "required category " + cat + " is exhausted at candidate " + std::to_string(i));
      } else {
        ctx.note("generate: candidate " + std::to_string(i) + " omits " + cat + " (usage caps exhausted)");
        it = look.selections.erase(it);
      }
    }
    refresh_bundle(look, ctx);
    require_valid(look, filtered, taxonomy);

    look = refine(std::move(look), filtered, judge, budget, ctx, &ledger);
    ledger.commit(look);
    result.looks.push_back(std::move(look));
  }
  return result;
}

TournamentResult tournament(const std::vector<AvatarLook>& looks, const std::map<std::string, CandidatePool>& filtered,
                            JudgeClient& judge, const GenerationBudget& budget, const AssemblyContext& ctx) {
  if (looks.empty()) throw Error(ErrorCode::kInvalidArgument, "tournament needs at least one look");
  if (budget.batch_size < 2) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 2");

  TournamentResult result;
  std::vector<std::size_t> alive(looks.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;

  while (alive.size() > 1) {
    ++result.rounds;
    std::vector<std::size_t> next;
    for (std::size_t start = 0; start < alive.size(); start += budget.batch_size) {
      const std::size_t end = std::min(start + budget.batch_size, alive.size());
      if (end - start == 1) {
        next.push_back(alive[start]);
        continue;
      }
      std::vector<json> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(describe_look(looks[alive[k]], filtered));
      std::size_t winner = judge.compare_batch(batch, ctx.judge);
      ++result.judge_calls;
      if (winner >= batch.size()) {
        ctx.note("compare_batch: winner index " + std::to_string(winner) + " out of range, taking first look");
        winner = 0;
      }
      next.push_back(alive[start + winner]);
    }
    alive = std::move(next);
  }
  result.winner = looks[alive.front()];
  return result;
}

}  // namespace cmag
