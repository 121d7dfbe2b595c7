#pragma once
// Hybrid category-wise retrieval.
//
// Part branch:     q = normalize(alpha * p_c + (1 - alpha) * t_c)
// Residual branch: r = g with every other category subspace projected out,
//                  q = normalize(beta * r/|r| + (1 - beta) * t_c)
// The two result lists are merged by asset_id keeping the larger score and
// truncated to pool_k.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmag/evidence.hpp"
#include "cmag/index.hpp"
#include "cmag/router.hpp"
#include "cmag/vecmath.hpp"

namespace cmag {

struct RetrievalConfig {
  FusionWeights weights;
  std::size_t branch_k = 40;
  std::size_t pool_k = 40;
  std::size_t gate_k = 20;
  bool suppression = true;       // off: residual branch queries with raw g
  bool use_scaffold = true;      // off: text-prior-only query, no part / global evidence
  double collapse_eps = 1e-6;    // |r| at or below this falls back to t_c

  void validate() const;
  static RetrievalConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

enum class CandidateSource { kPart, kConceptResidual, kBoth };

std::string_view candidate_source_name(CandidateSource s);
CandidateSource parse_candidate_source(std::string_view s);

struct Candidate {
  std::string asset_id;
  double score = 0.0;
  CandidateSource source = CandidateSource::kPart;
};

struct CandidatePool {
  std::string category_id;
  std::vector<Candidate> candidates;

  const Candidate* find(const std::string& asset_id) const;
  bool contains(const std::string& asset_id) const { return find(asset_id) != nullptr; }
};

struct BranchResult {
  std::vector<Candidate> candidates;
  std::vector<std::string> warnings;
};

using SubspaceMap = std::map<std::string, CategorySubspace>;
using IndexMap = std::map<std::string, CategoryIndex>;

BranchResult retrieve_part(const std::string& category_id, std::span<const double> part_embedding,
                           std::span<const double> text_prior, const RetrievalConfig& cfg, const CategoryIndex& index);

// `subspaces` may include the target category; it is skipped.
BranchResult retrieve_concept_residual(const std::string& category_id, std::span<const double> global_embedding,
                                       const SubspaceMap& subspaces, std::span<const double> text_prior,
                                       const RetrievalConfig& cfg, const CategoryIndex& index);

CandidatePool build_pool(const std::string& category_id, const std::vector<std::vector<Candidate>>& branches,
                         const RetrievalConfig& cfg);

struct CategoryRetrieval {
  CandidatePool pool;
  bool used_part_branch = false;
  std::vector<std::string> warnings;
};

CategoryRetrieval retrieve_category(const std::string& category_id, const RoutingPlan& plan, const EvidenceStore& store,
                                    const Taxonomy& taxonomy, const RetrievalConfig& cfg, const IndexMap& indices,
                                    const SubspaceMap& subspaces);

// Pool dump: {"schema": "cmag.pools", "version": 1, "pools": {cat: [{asset_id, score, source}]}}
nlohmann::json pools_to_json(const std::map<std::string, CandidatePool>& pools);
std::map<std::string, CandidatePool> pools_from_json(const nlohmann::json& doc);

}  // namespace cmag
