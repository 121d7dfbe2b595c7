#include "cmag/router.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '\'';
}

// Finds whole-word occurrences of `key` in `text` that do not touch any
// occupied character; marks them occupied. Returns true on any match.
bool claim_matches(const std::string& text, const std::string& key, std::vector<bool>& occupied) {
  bool matched = false;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    const std::size_t end = pos + key.size();
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const bool right_ok = end == text.size() || !is_word_char(text[end]);
    const bool free = std::none_of(occupied.begin() + static_cast<std::ptrdiff_t>(pos),
                                   occupied.begin() + static_cast<std::ptrdiff_t>(end), [](bool b) { return b; });
    if (left_ok && right_ok && free) {
      std::fill(occupied.begin() + static_cast<std::ptrdiff_t>(pos), occupied.begin() + static_cast<std::ptrdiff_t>(end), true);
      matched = true;
    }
    pos += 1;
  }
  return matched;
}

bool contains_word(const std::string& text, const std::string& key) {
  std::vector<bool> occupied(text.size(), false);
  return !key.empty() && claim_matches(text, key, occupied);
}

// Concept-map keys matched by one concept, longest key first.
std::vector<std::string> match_keys(const std::string& concept_text, const Taxonomy& taxonomy) {
  std::vector<std::string> keys;
  keys.reserve(taxonomy.concept_map.size());
  for (const auto& [key, _] : taxonomy.concept_map) keys.push_back(key);
  std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });

  const std::string text = lowercase(concept_text);
  std::vector<bool> occupied(text.size(), false);
  std::vector<std::string> hits;
  for (const auto& key : keys) {
    if (claim_matches(text, key, occupied)) hits.push_back(key);
  }
  return hits;
}

std::size_t modifier_support(const std::string& category, const Concept& c, const Taxonomy& taxonomy) {
  auto kw = taxonomy.modifier_keywords.find(category);
  if (kw == taxonomy.modifier_keywords.end()) return 0;
  std::size_t support = 0;
  for (const auto& modifier : c.modifiers) {
    const std::string m = lowercase(modifier);
    if (std::any_of(kw->second.begin(), kw->second.end(),
                    [&](const std::string& k) { return contains_word(m, lowercase(k)); })) {
      ++support;
    }
  }
  return support;
}

Provenance parse_provenance(const std::string& s) {
  if (s == "concept-expanded") return Provenance::kConceptExpanded;
  if (s == "required-core") return Provenance::kRequiredCore;
  if (s == "advisor-added") return Provenance::kAdvisorAdded;
  throw Error(ErrorCode::kMalformedRecord, "unknown provenance '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

PromptSpec PromptSpec::from_json(const json& doc) {
  PromptSpec spec;
  try {
    spec.prompt_text = doc.at("prompt_text").get<std::string>();
    if (doc.contains("concepts")) {
      for (const auto& c : doc.at("concepts")) {
        Concept item;
        item.keyword = c.at("keyword").get<std::string>();
        if (c.contains("modifiers")) item.modifiers = c.at("modifiers").get<std::vector<std::string>>();
        spec.concepts.push_back(std::move(item));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("prompt spec: ") + e.what());
  }
  if (trim(spec.prompt_text).empty()) throw Error(ErrorCode::kInvalidArgument, "prompt text is empty");
  return spec;
}

json PromptSpec::to_json() const {
  json concepts_doc = json::array();
  for (const auto& c : concepts) concepts_doc.push_back({{"keyword", c.keyword}, {"modifiers", c.modifiers}});
  return {{"prompt_text", prompt_text}, {"concepts", concepts_doc}};
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kConceptExpanded: return "concept-expanded";
    case Provenance::kRequiredCore: return "required-core";
    case Provenance::kAdvisorAdded: return "advisor-added";
  }
  return "concept-expanded";
}

RoutingPlan RoutingPlan::from_json(const json& doc) {
  RoutingPlan plan;
  try {
    plan.prompt = PromptSpec::from_json(doc.at("prompt"));
    for (const auto& c : doc.at("target_categories")) plan.target_categories.insert(c.get<std::string>());
    plan.queries = doc.at("queries").get<std::map<std::string, std::string>>();
    for (const auto& [cat, p] : doc.at("provenance").items()) plan.provenance[cat] = parse_provenance(p.get<std::string>());
    for (const auto& r : doc.at("resolved_exclusions")) {
      plan.resolved_exclusions.push_back(
          {r.at("kept").get<std::string>(), r.at("dropped").get<std::string>(), r.at("reason").get<std::string>()});
    }
    if (doc.contains("warnings")) plan.warnings = doc.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("routing plan: ") + e.what());
  }
  return plan;
}

json RoutingPlan::to_json() const {
  json provenance_doc = json::object();
  for (const auto& [cat, p] : provenance) provenance_doc[cat] = std::string(provenance_name(p));
  json resolutions = json::array();
  for (const auto& r : resolved_exclusions) resolutions.push_back({{"kept", r.kept}, {"dropped", r.dropped}, {"reason", r.reason}});
  return {{"schema", "cmag.routing_plan"},
          {"version", 1},
          {"prompt", prompt.to_json()},
          {"target_categories", target_categories},
          {"queries", queries},
          {"provenance", provenance_doc},
          {"resolved_exclusions", resolutions},
          {"warnings", warnings}};
}

AdvisorResponse AdvisorResponse::from_json(const json& doc) {
  AdvisorResponse r;
  try {
    if (doc.contains("added_categories")) r.added_categories = doc.at("added_categories").get<std::vector<std::string>>();
    if (doc.contains("query_rewrites")) r.query_rewrites = doc.at("query_rewrites").get<std::map<std::string, std::string>>();
    if (doc.contains("removed_categories")) r.removed_categories = doc.at("removed_categories").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kAdvisorUnavailable, std::string("malformed advisor response: ") + e.what());
  }
  return r;
}

json AdvisorResponse::to_json() const {
  return {{"added_categories", added_categories},
          {"query_rewrites", query_rewrites},
          {"removed_categories", removed_categories}};
}

json make_advisor_request(const PromptSpec& spec, const Taxonomy& taxonomy, const RoutingPlan& plan) {
  json groups = json::array();
  for (const auto& g : taxonomy.exclusion_groups) groups.push_back(g);
  json summary = {{"categories", taxonomy.categories},
                  {"exclusion_groups", groups},
                  {"required_core", taxonomy.required_core}};
  return {{"prompt", spec.to_json()}, {"taxonomy", summary}, {"plan", plan.to_json()}};
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

ConceptExpansion expand_concepts(const PromptSpec& spec, const Taxonomy& taxonomy) {
  ConceptExpansion out;
  for (std::size_t i = 0; i < spec.concepts.size(); ++i) {
    const auto keys = match_keys(spec.concepts[i].keyword, taxonomy);
    if (keys.empty()) {
      out.warnings.push_back("unmatched concept '" + spec.concepts[i].keyword + "'");
      continue;
    }
    for (const auto& key : keys) {
      for (const auto& cat : taxonomy.concept_map.at(key)) {
        out.categories.insert(cat);
        auto& src = out.sources[cat];
        if (src.empty() || src.back() != i) src.push_back(i);
      }
    }
  }
  return out;
}

ExclusionOutcome resolve_exclusions(const std::set<std::string>& categories, const PromptSpec& spec,
                                    const Taxonomy& taxonomy) {
  ExclusionOutcome out{categories, {}};
  const ConceptExpansion expansion = expand_concepts(spec, taxonomy);

  auto support_of = [&](const std::string& cat) {
    std::size_t total = 0;
    if (auto it = expansion.sources.find(cat); it != expansion.sources.end()) {
      for (std::size_t idx : it->second) total += modifier_support(cat, spec.concepts[idx], taxonomy);
    }
    return total;
  };

  for (const auto& group : taxonomy.exclusion_groups) {
    std::vector<std::string> present;
    for (const auto& m : group) {
      if (out.categories.count(m)) present.push_back(m);  // std::set iteration: id ascending
    }
    if (present.size() < 2) continue;

    std::string kept;
    std::string why;
    auto core = std::find_if(present.begin(), present.end(), [&](const auto& m) { return taxonomy.required_core.count(m) > 0; });
    if (core != present.end()) {
      kept = *core;
      why = "required_core";
    } else {
      std::size_t best = 0;
      bool tie = false;
      for (const auto& m : present) {
        const std::size_t s = support_of(m);
        if (kept.empty() || s > best) {
          kept = m;
          best = s;
          tie = false;
        } else if (s == best) {
          tie = true;
        }
      }
      why = tie ? "tie_break_category_id" : "modifier_support=" + std::to_string(best);
    }
    for (const auto& m : present) {
      if (m == kept) continue;
      out.categories.erase(m);
      out.resolutions.push_back({kept, m, why});
    }
  }
  return out;
}

std::string prompt_theme_summary(const std::string& prompt_text, std::size_t max_words) {
  std::istringstream in(prompt_text);
  std::string word;
  std::string out;
  for (std::size_t n = 0; n < max_words && in >> word; ++n) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::map<std::string, std::string> build_queries(const std::set<std::string>& categories, const PromptSpec& spec,
                                                 const Taxonomy& taxonomy) {
  const ConceptExpansion expansion = expand_concepts(spec, taxonomy);
  std::map<std::string, std::string> queries;
  for (const auto& cat : categories) {
    auto src = expansion.sources.find(cat);
    if (src == expansion.sources.end()) {
      std::string fallback = prompt_theme_summary(spec.prompt_text);
      queries[cat] = fallback.empty() ? taxonomy.display_name(cat) : fallback;
      continue;
    }
    const Concept& c = spec.concepts[src->second.front()];
    std::vector<std::string> parts;
    if (auto noun = trim(c.keyword); !noun.empty()) parts.push_back(noun);
    for (const auto& m : c.modifiers) {
      if (auto t = trim(m); !t.empty()) parts.push_back(t);
    }
    parts.push_back(taxonomy.display_name(cat));
    std::string q;
    for (const auto& p : parts) {
      if (!q.empty()) q += ", ";
      q += p;
    }
    queries[cat] = q;
  }
  return queries;
}

namespace {

void apply_advice(RoutingPlan& plan, const AdvisorResponse& advice, const Taxonomy& taxonomy) {
  std::vector<std::string> candidates;
  for (const auto& cat : advice.added_categories) {
    if (!taxonomy.has_category(cat)) {
      plan.warnings.push_back("advisor: rejected addition '" + cat + "' (unknown_category)");
    } else if (!plan.target_categories.count(cat) &&
               std::find(candidates.begin(), candidates.end(), cat) == candidates.end()) {
      candidates.push_back(cat);
    }
  }
  for (const auto& cat : candidates) {
    const auto clash_plan = std::find_if(plan.target_categories.begin(), plan.target_categories.end(),
                                         [&](const auto& t) { return taxonomy.excludes(cat, t); });
    if (clash_plan != plan.target_categories.end()) {
      plan.warnings.push_back("advisor: rejected addition '" + cat + "' (exclusion_conflict with '" + *clash_plan + "')");
      continue;
    }
    const auto clash_peer =
        std::find_if(candidates.begin(), candidates.end(), [&](const auto& o) { return taxonomy.excludes(cat, o); });
    if (clash_peer != candidates.end()) {
      plan.warnings.push_back("advisor: rejected addition '" + cat + "' (exclusion_conflict with proposed '" +
                              *clash_peer + "')");
      continue;
    }
    plan.target_categories.insert(cat);
    plan.provenance[cat] = Provenance::kAdvisorAdded;
    plan.queries[cat] = build_queries({cat}, plan.prompt, taxonomy).at(cat);
  }

  for (const auto& cat : advice.removed_categories) {
    const char* reason = taxonomy.required_core.count(cat) ? "required_core" : "removal_not_permitted";
    plan.warnings.push_back("advisor: rejected removal '" + cat + "' (" + reason + ")");
  }

  for (const auto& [cat, text] : advice.query_rewrites) {
    if (!plan.target_categories.count(cat)) {
      plan.warnings.push_back("advisor: rejected rewrite for '" + cat + "' (not_in_plan)");
    } else if (trim(text).empty()) {
      plan.warnings.push_back("advisor: rejected rewrite for '" + cat + "' (empty_query)");
    } else {
      plan.queries[cat] = trim(text);
    }
  }
}

}  // namespace

RoutingPlan route(const PromptSpec& spec, const Taxonomy& taxonomy, AdvisorClient* advisor) {
  RoutingPlan plan;
  plan.prompt = spec;

  ConceptExpansion expansion = expand_concepts(spec, taxonomy);
  plan.warnings = expansion.warnings;
  std::set<std::string> categories = expansion.categories;
  for (const auto& cat : expansion.categories) plan.provenance[cat] = Provenance::kConceptExpanded;
  for (const auto& core : taxonomy.required_core) {
    if (categories.insert(core).second) plan.provenance[core] = Provenance::kRequiredCore;
  }

  ExclusionOutcome resolved = resolve_exclusions(categories, spec, taxonomy);
  plan.target_categories = std::move(resolved.categories);
  plan.resolved_exclusions = std::move(resolved.resolutions);
  for (auto it = plan.provenance.begin(); it != plan.provenance.end();) {
    it = plan.target_categories.count(it->first) ? std::next(it) : plan.provenance.erase(it);
  }
  plan.queries = build_queries(plan.target_categories, spec, taxonomy);

  if (advisor != nullptr) {
    try {
      apply_advice(plan, advisor->advise(spec, taxonomy, plan), taxonomy);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAdvisorUnavailable && e.code() != ErrorCode::kTransportError) throw;
      plan.warnings.push_back(std::string("advisor unavailable, using rule-based plan: ") + e.what());
    }
  }
  return plan;
}

RoutingPlan route_single_guess(const PromptSpec& spec, const Taxonomy& taxonomy) {
  RoutingPlan plan;
  plan.prompt = spec;
  for (const auto& c : spec.concepts) {
    const auto keys = match_keys(c.keyword, taxonomy);
    if (keys.empty()) {
      plan.warnings.push_back("unmatched concept '" + c.keyword + "'");
      continue;
    }
    const std::string& guess = taxonomy.concept_map.at(keys.front()).front();
    plan.target_categories.insert(guess);
    plan.provenance[guess] = Provenance::kConceptExpanded;
  }
  plan.queries = build_queries(plan.target_categories, spec, taxonomy);
  return plan;
}

}  // namespace cmag
