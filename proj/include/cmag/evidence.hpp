#pragma once
// Per-prompt visual evidence: global view embeddings of the concept scaffold,
// per-category part embeddings and text priors, all produced upstream.
//
// Evidence file (JSON, schema "cmag.evidence", version 1):
//   {"prompt_text": "...", "concepts": [...],
//    "views": {"front": [...], "back": [...]},
//    "parts": [{"category_id": "...", "view": "back", "status": "valid", "embedding": [...]}],
//    "text_priors": {"pants": [...]}}

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cmag/catalog.hpp"
#include "cmag/router.hpp"
#include "cmag/vecmath.hpp"

namespace cmag {

enum class PartStatus { kValid, kFallbackKeyword, kFailed };

std::string_view part_status_name(PartStatus s);

struct PartEvidence {
  std::string category_id;
  std::optional<EmbeddingVector> embedding;
  View source_view = View::kFront;
  PartStatus status = PartStatus::kFailed;

  bool usable() const { return status != PartStatus::kFailed; }
};

class EvidenceStore {
 public:
  EvidenceStore() = default;

  void set_prompt(PromptSpec prompt);
  void set_view(View v, std::span<const double> embedding);
  void set_part(PartEvidence part);
  void set_text_prior(const std::string& category_id, std::span<const double> embedding);

  // Validates the store and makes it read-only.
  void freeze();
  bool frozen() const { return frozen_; }

  const std::optional<PromptSpec>& prompt() const { return prompt_; }
  const std::map<View, EmbeddingVector>& views() const { return views_; }
  std::set<View> available_views() const;
  const std::map<std::string, PartEvidence>& parts() const { return parts_; }
  const PartEvidence* part(const std::string& category_id) const;
  const std::map<std::string, EmbeddingVector>& text_priors() const { return text_priors_; }
  const EmbeddingVector* text_prior(const std::string& category_id) const;
  std::size_t dimension() const { return dim_; }

  static EvidenceStore from_json(const nlohmann::json& doc);
  static EvidenceStore load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  void ensure_mutable() const;
  EmbeddingVector checked(std::span<const double> embedding, const std::string& what);

  std::optional<PromptSpec> prompt_;
  std::map<View, EmbeddingVector> views_;
  std::map<std::string, PartEvidence> parts_;
  std::map<std::string, EmbeddingVector> text_priors_;
  std::size_t dim_ = 0;
  bool frozen_ = false;
};

struct ViewSelection {
  std::vector<View> views;
  bool low_confidence = false;  // preferred views unavailable, default order used
};

// Taxonomy-preferred views that are available, in preference order; falls
// back to front/back/left/right. Throws NoViewsAvailable.
ViewSelection select_views(const std::string& category_id, const Taxonomy& taxonomy, const std::set<View>& available);

struct PartQuery {
  EmbeddingVector embedding;
  View source_view;
};

struct GlobalQuery {
  EmbeddingVector embedding;
  View source_view;
  bool low_confidence = false;
};

using QueryEvidence = std::variant<PartQuery, GlobalQuery>;

QueryEvidence resolve_part_or_global(const std::string& category_id, const EvidenceStore& store,
                                     const Taxonomy& taxonomy);

// Global view embedding for the residual branch, chosen with the same view
// preferences as part segmentation.
GlobalQuery select_global_view(const std::string& category_id, const EvidenceStore& store, const Taxonomy& taxonomy);

}  // namespace cmag
