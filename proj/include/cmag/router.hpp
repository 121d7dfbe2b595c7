#pragma once
// Prompt-conditioned taxonomy routing.
//
// A deterministic rule engine produces the target category set and one text
// query per category. An optional advisor may add categories or rewrite
// queries; its proposals are checked against the taxonomy before use.

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmag/catalog.hpp"

namespace cmag {

struct Concept {
  std::string keyword;
  std::vector<std::string> modifiers;  // material / color / theme
};

struct PromptSpec {
  std::string prompt_text;
  std::vector<Concept> concepts;

  static PromptSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

enum class Provenance { kConceptExpanded, kRequiredCore, kAdvisorAdded };

std::string_view provenance_name(Provenance p);

struct ExclusionResolution {
  std::string kept;
  std::string dropped;
  std::string reason;
};

struct RoutingPlan {
  PromptSpec prompt;
  std::set<std::string> target_categories;
  std::map<std::string, std::string> queries;
  std::map<std::string, Provenance> provenance;
  std::vector<ExclusionResolution> resolved_exclusions;
  std::vector<std::string> warnings;

  static RoutingPlan from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct ConceptExpansion {
  std::set<std::string> categories;
  // category -> indices into PromptSpec::concepts that produced it, ascending
  std::map<std::string, std::vector<std::size_t>> sources;
  std::vector<std::string> warnings;
};

// Case-insensitive, longest-keyword-first, whole-word matching of each
// concept against the taxonomy concept map.
ConceptExpansion expand_concepts(const PromptSpec& spec, const Taxonomy& taxonomy);

struct ExclusionOutcome {
  std::set<std::string> categories;
  std::vector<ExclusionResolution> resolutions;
};

// Keeps exactly one member per exclusion group: a required_core member if
// present, else the one with the most modifier-keyword support, ties to the
// smallest category_id.
ExclusionOutcome resolve_exclusions(const std::set<std::string>& categories, const PromptSpec& spec,
                                    const Taxonomy& taxonomy);

// "<key noun>, <modifiers...>, <display name>"; categories without a source
// concept get the first twelve words of the prompt.
std::map<std::string, std::string> build_queries(const std::set<std::string>& categories, const PromptSpec& spec,
                                                 const Taxonomy& taxonomy);

std::string prompt_theme_summary(const std::string& prompt_text, std::size_t max_words = 12);

struct AdvisorResponse {
  std::vector<std::string> added_categories;
  std::map<std::string, std::string> query_rewrites;
  std::vector<std::string> removed_categories;

  static AdvisorResponse from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

// Request document: {"prompt": PromptSpec, "taxonomy": summary, "plan": RoutingPlan}.
nlohmann::json make_advisor_request(const PromptSpec& spec, const Taxonomy& taxonomy, const RoutingPlan& plan);

class AdvisorClient {
 public:
  virtual ~AdvisorClient() = default;
  // Throws Error(kAdvisorUnavailable) when the advisor cannot answer.
  virtual AdvisorResponse advise(const PromptSpec& spec, const Taxonomy& taxonomy, const RoutingPlan& plan) = 0;
};

RoutingPlan route(const PromptSpec& spec, const Taxonomy& taxonomy, AdvisorClient* advisor = nullptr);

// Ablation baseline: one best-guess category per concept (first listed
// target of the longest matching keyword), no required_core, no exclusion
// handling.
RoutingPlan route_single_guess(const PromptSpec& spec, const Taxonomy& taxonomy);

}  // namespace cmag
