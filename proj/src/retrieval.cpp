#include "cmag/retrieval.hpp"

#include <algorithm>
#include <unordered_map>

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

void RetrievalConfig::validate() const {
  weights.validate();
  if (branch_k < 1) throw Error(ErrorCode::kInvalidArgument, "branch_k must be >= 1");
  if (gate_k > pool_k) throw Error(ErrorCode::kInvalidArgument, "gate_k must not exceed pool_k");
  if (collapse_eps < 0.0) throw Error(ErrorCode::kInvalidArgument, "collapse_eps must be >= 0");
}

RetrievalConfig RetrievalConfig::from_json(const json& doc) {
  RetrievalConfig cfg;
  try {
    cfg.weights.alpha = doc.value("alpha", cfg.weights.alpha);
    cfg.weights.beta = doc.value("beta", cfg.weights.beta);
    cfg.branch_k = doc.value("branch_k", cfg.branch_k);
    cfg.pool_k = doc.value("pool_k", cfg.pool_k);
    cfg.gate_k = doc.value("gate_k", cfg.gate_k);
    cfg.suppression = doc.value("suppression", cfg.suppression);
    cfg.use_scaffold = doc.value("use_scaffold", cfg.use_scaffold);
    cfg.collapse_eps = doc.value("collapse_eps", cfg.collapse_eps);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("retrieval config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json RetrievalConfig::to_json() const {
  return {{"alpha", weights.alpha},       {"beta", weights.beta},         {"branch_k", branch_k},
          {"pool_k", pool_k},             {"gate_k", gate_k},             {"suppression", suppression},
          {"use_scaffold", use_scaffold}, {"collapse_eps", collapse_eps}};
}

std::string_view candidate_source_name(CandidateSource s) {
  switch (s) {
    case CandidateSource::kPart: return "part";
    case CandidateSource::kConceptResidual: return "concept_residual";
    case CandidateSource::kBoth: return "both";
  }
  return "part";
}

CandidateSource parse_candidate_source(std::string_view s) {
  if (s == "part") return CandidateSource::kPart;
  if (s == "concept_residual") return CandidateSource::kConceptResidual;
  if (s == "both") return CandidateSource::kBoth;
  throw Error(ErrorCode::kMalformedRecord, "unknown candidate source '" + std::string(s) + "'");
}

const Candidate* CandidatePool::find(const std::string& asset_id) const {
  auto it = std::find_if(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.asset_id == asset_id; });
  return it == candidates.end() ? nullptr : &*it;
}

namespace {

std::vector<Candidate> tag(const std::vector<SearchHit>& hits, CandidateSource source) {
  std::vector<Candidate> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.asset_id, h.score, source});
  return out;
}

}  // namespace

BranchResult retrieve_part(const std::string& category_id, std::span<const double> part_embedding,
                           std::span<const double> text_prior, const RetrievalConfig& cfg, const CategoryIndex& index) {
  if (index.category_id() != category_id) {
    throw Error(ErrorCode::kCategoryMismatch, "index " + index.category_id() + " queried for " + category_id);
  }
  const EmbeddingVector q = fuse(part_embedding, text_prior, cfg.weights.alpha);
  return {tag(index.search(q, cfg.branch_k), CandidateSource::kPart), {}};
}

BranchResult retrieve_concept_residual(const std::string& category_id, std::span<const double> global_embedding,
                                       const SubspaceMap& subspaces, std::span<const double> text_prior,
                                       const RetrievalConfig& cfg, const CategoryIndex& index) {
  if (index.category_id() != category_id) {
    throw Error(ErrorCode::kCategoryMismatch, "index " + index.category_id() + " queried for " + category_id);
  }
  BranchResult result;

  EmbeddingVector residual(global_embedding.begin(), global_embedding.end());
  if (cfg.suppression) {
    std::vector<CategorySubspace> others;
    others.reserve(subspaces.size());
    for (const auto& [id, s] : subspaces) {
      if (id != category_id) others.push_back(s);
    }
    residual = suppress(global_embedding, others);
  }

  EmbeddingVector q;
  if (norm(residual) <= cfg.collapse_eps) {
    result.warnings.push_back("SuppressionCollapse: residual for " + category_id + " vanished, using text prior only");
    q.assign(text_prior.begin(), text_prior.end());
  } else {
    q = fuse(normalize(residual), text_prior, cfg.weights.beta);
  }
  result.candidates = tag(index.search(q, cfg.branch_k), CandidateSource::kConceptResidual);
  return result;
}

CandidatePool build_pool(const std::string& category_id, const std::vector<std::vector<Candidate>>& branches,
                         const RetrievalConfig& cfg) {
  std::unordered_map<std::string, Candidate> merged;
  for (const auto& branch : branches) {
    for (const auto& c : branch) {
      auto [it, inserted] = merged.try_emplace(c.asset_id, c);
      if (inserted) continue;
      Candidate& existing = it->second;
      if (existing.source != c.source) existing.source = CandidateSource::kBoth;
      existing.score = std::max(existing.score, c.score);
    }
  }

  CandidatePool pool{category_id, {}};
  pool.candidates.reserve(merged.size());
  for (auto& [_, c] : merged) pool.candidates.push_back(std::move(c));
  std::sort(pool.candidates.begin(), pool.candidates.end(), [](const Candidate& a, const Candidate& b) {
    return hit_precedes(a.score, a.asset_id, b.score, b.asset_id);
  });
  if (pool.candidates.size() > cfg.pool_k) pool.candidates.resize(cfg.pool_k);
  return pool;
}

CategoryRetrieval retrieve_category(const std::string& category_id, const RoutingPlan& plan, const EvidenceStore& store,
                                    const Taxonomy& taxonomy, const RetrievalConfig& cfg, const IndexMap& indices,
                                    const SubspaceMap& subspaces) {
  if (!plan.target_categories.count(category_id)) {
    throw Error(ErrorCode::kInvalidArgument, category_id + " is not a routed category");
  }
  const EmbeddingVector* text_prior = store.text_prior(category_id);
  if (text_prior == nullptr) throw Error(ErrorCode::kMissingTextPrior, category_id);
  auto idx = indices.find(category_id);
  if (idx == indices.end()) throw Error(ErrorCode::kUnknownCategory, "no index for " + category_id);
  const CategoryIndex& index = idx->second;

  CategoryRetrieval out;
  if (index.empty()) {
    out.pool.category_id = category_id;
    return out;
  }

  std::vector<std::vector<Candidate>> branches;
  if (!cfg.use_scaffold) {
    auto hits = index.search(*text_prior, cfg.branch_k);
    std::vector<Candidate> text_only;
    for (const auto& h : hits) text_only.push_back({h.asset_id, h.score, CandidateSource::kConceptResidual});
    branches.push_back(std::move(text_only));
  } else {
    const QueryEvidence evidence = resolve_part_or_global(category_id, store, taxonomy);
    if (const auto* part = std::get_if<PartQuery>(&evidence)) {
      out.used_part_branch = true;
      branches.push_back(retrieve_part(category_id, part->embedding, *text_prior, cfg, index).candidates);
    }
    const GlobalQuery global = select_global_view(category_id, store, taxonomy);
    if (global.low_confidence) {
      out.warnings.push_back("LowConfidenceView: preferred views for " + category_id + " unavailable, using " +
                             std::string(view_name(global.source_view)));
    }
    BranchResult residual = retrieve_concept_residual(category_id, global.embedding, subspaces, *text_prior, cfg, index);
    out.warnings.insert(out.warnings.end(), residual.warnings.begin(), residual.warnings.end());
    branches.push_back(std::move(residual.candidates));
  }
  out.pool = build_pool(category_id, branches, cfg);
  return out;
}

json pools_to_json(const std::map<std::string, CandidatePool>& pools) {
  json doc = {{"schema", "cmag.pools"}, {"version", 1}};
  json body = json::object();
  for (const auto& [cat, pool] : pools) {
    json list = json::array();
    for (const auto& c : pool.candidates) {
      list.push_back({{"asset_id", c.asset_id}, {"score", c.score}, {"source", std::string(candidate_source_name(c.source))}});
    }
    body[cat] = list;
  }
  doc["pools"] = body;
  return doc;
}

std::map<std::string, CandidatePool> pools_from_json(const json& doc) {
  std::map<std::string, CandidatePool> pools;
  try {
    for (const auto& [cat, list] : doc.at("pools").items()) {
      CandidatePool pool{cat, {}};
      for (const auto& c : list) {
        pool.candidates.push_back({c.at("asset_id").get<std::string>(), c.at("score").get<double>(),
                                   parse_candidate_source(c.at("source").get<std::string>())});
      }
      pools[cat] = std::move(pool);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("pool dump: ") + e.what());
  }
  return pools;
}

}  // namespace cmag
