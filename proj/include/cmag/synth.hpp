#pragma once
// Synthetic catalogs and evidence with planted ground truth.
//
// Category bases are sampled orthonormal; an interference entry {a, b, coef}
// tilts b's leading directions toward a's so the two spans overlap. Assets
// are unit in-subspace vectors plus isotropic noise of total scale
// noise_sigma. A fixed seed reproduces every output on the same build.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cmag/catalog.hpp"
#include "cmag/evidence.hpp"
#include "cmag/retrieval.hpp"
#include "cmag/router.hpp"

namespace cmag {

struct SynthCategory {
  std::string category_id;
  std::size_t rank = 4;
  std::size_t n_assets = 50;
};

struct Interference {
  std::string from;  // source of the shared directions
  std::string to;    // category whose basis is tilted
  double coef = 0.0; // in [0, 1]
};

struct SynthSpec {
  std::size_t d = 64;
  std::vector<SynthCategory> categories;
  std::vector<Interference> interference;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Category that carries bundle ids ("bundle-NNNN", two assets per bundle).
  std::string bundle_category;

  // Throws InvalidArgument / InfeasibleSpec.
  void validate() const;
};

struct SynthCatalog {
  std::vector<Asset> assets;                        // storage-normalized
  std::map<std::string, Eigen::MatrixXd> bases;     // planted orthonormal d x rank
};

SynthCatalog generate_catalog(const SynthSpec& spec);

// Taxonomy declaring just the SynthSpec categories.
Taxonomy synth_taxonomy(const SynthSpec& spec);
Catalog make_catalog(const SynthCatalog& synth, const Taxonomy& taxonomy);

void write_catalog_jsonl(const std::vector<Asset>& assets, std::ostream& out);

// Full scan with the index ordering contract: cosine against the normalized
// query, score descending, asset_id ascending.
std::vector<std::string> brute_force_rank(const Catalog& catalog, const std::string& category_id,
                                          std::span<const double> query, std::size_t k);

struct ScenarioOptions {
  std::string target_category;
  std::optional<std::string> interfering_category;  // random overlapping category if unset
  std::uint64_t seed = 0;
  double lambda = 1.5;
  double alpha = 0.7;
  double beta = 0.7;
  double text_noise = 0.5;   // in-subspace perturbation of t_c
  double part_noise = 0.1;   // isotropic perturbation of p_c
  std::size_t max_retries = 100;
};

struct PlantedTruth {
  std::string target_category;
  std::string interfering_category;
  std::string target_asset_id;
  EmbeddingVector g;
  EmbeddingVector p_c;
  EmbeddingVector t_c;
  double lambda = 0.0;
  std::size_t attempts = 0;

  nlohmann::json to_json() const;
};

// g = normalize(v_target + lambda * v_interfere) with v_interfere inside the
// interfering category's subspace. Accepted only when brute force confirms:
// the fused part query and the suppressed residual query rank the target
// first, and the unsuppressed query does not (for lambda > 0) or does (for
// lambda = 0). Throws ScenarioConstructionFailed after max_retries.
PlantedTruth generate_interference_scenario(const Catalog& catalog, const SubspaceMap& subspaces,
                                            const ScenarioOptions& options);

// ---------------------------------------------------------------------------
// End-to-end synthetic world used by `cmag synth` and `cmag eval`.
// ---------------------------------------------------------------------------

struct WorldOptions {
  std::uint64_t seed = 0;
  std::size_t d = 64;
  std::size_t n_assets = 60;
  double noise_sigma = 0.05;
  double lambda = 1.5;
  RetrievalConfig retrieval;
  RankPolicy subspace_policy;
};

struct SynthWorld {
  Taxonomy taxonomy;
  std::vector<Asset> assets;
  PromptSpec prompt;
  EvidenceStore evidence;
  PlantedTruth truth;                              // for the bundle category
  std::map<std::string, std::string> planted;      // category -> planted asset
  nlohmann::json judge_script;

  nlohmann::json truth_json() const;
};

// The default avatar taxonomy (body, garments, accessories) with the hoodie
// ambiguity between sweater and jacket.
Taxonomy default_taxonomy();

SynthWorld generate_world(const WorldOptions& options);

}  // namespace cmag
