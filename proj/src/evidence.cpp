#include "cmag/evidence.hpp"

#include <algorithm>
#include <fstream>

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

std::string_view part_status_name(PartStatus s) {
  switch (s) {
    case PartStatus::kValid: return "valid";
    case PartStatus::kFallbackKeyword: return "fallback_keyword";
    case PartStatus::kFailed: return "failed";
  }
  return "failed";
}

namespace {

PartStatus parse_part_status(const std::string& s) {
  if (s == "valid") return PartStatus::kValid;
  if (s == "fallback_keyword") return PartStatus::kFallbackKeyword;
  if (s == "failed") return PartStatus::kFailed;
  throw Error(ErrorCode::kMalformedRecord, "unknown part status '" + s + "'");
}

View require_view(const std::string& name) {
  auto v = parse_view(name);
  if (!v) throw Error(ErrorCode::kMalformedRecord, "unknown view '" + name + "'");
  return *v;
}

json floats(const EmbeddingVector& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(static_cast<float>(x));
  return arr;
}

}  // namespace

void EvidenceStore::ensure_mutable() const {
  if (frozen_) throw Error(ErrorCode::kInvalidArgument, "evidence store is frozen");
}

EmbeddingVector EvidenceStore::checked(std::span<const double> embedding, const std::string& what) {
  if (dim_ == 0) dim_ = embedding.size();
  if (embedding.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, what + ": d=" + std::to_string(embedding.size()) +
                                                   ", evidence d=" + std::to_string(dim_));
  }
  return normalize_for_storage(embedding);
}

void EvidenceStore::set_prompt(PromptSpec prompt) {
  ensure_mutable();
  prompt_ = std::move(prompt);
}

void EvidenceStore::set_view(View v, std::span<const double> embedding) {
  ensure_mutable();
  views_[v] = checked(embedding, "view " + std::string(view_name(v)));
}

void EvidenceStore::set_part(PartEvidence part) {
  ensure_mutable();
  if (part.status == PartStatus::kFailed && part.embedding) {
    throw Error(ErrorCode::kMalformedRecord, "failed part for " + part.category_id + " carries an embedding");
  }
  if (part.status != PartStatus::kFailed && !part.embedding) {
    throw Error(ErrorCode::kMalformedRecord, "usable part for " + part.category_id + " lacks an embedding");
  }
  if (part.embedding) part.embedding = checked(*part.embedding, "part " + part.category_id);
  const std::string key = part.category_id;
  parts_[key] = std::move(part);
}

void EvidenceStore::set_text_prior(const std::string& category_id, std::span<const double> embedding) {
  ensure_mutable();
  text_priors_[category_id] = checked(embedding, "text prior " + category_id);
}

void EvidenceStore::freeze() {
  if (frozen_) return;
  if (views_.empty()) throw Error(ErrorCode::kNoViewsAvailable, "evidence has no view embeddings");
  frozen_ = true;
}

std::set<View> EvidenceStore::available_views() const {
  std::set<View> out;
  for (const auto& [v, _] : views_) out.insert(v);
  return out;
}

const PartEvidence* EvidenceStore::part(const std::string& category_id) const {
  auto it = parts_.find(category_id);
  return it == parts_.end() ? nullptr : &it->second;
}

const EmbeddingVector* EvidenceStore::text_prior(const std::string& category_id) const {
  auto it = text_priors_.find(category_id);
  return it == text_priors_.end() ? nullptr : &it->second;
}

EvidenceStore EvidenceStore::from_json(const json& doc) {
  EvidenceStore store;
  try {
    if (doc.contains("version") && doc.at("version").get<int>() != 1) {
      throw Error(ErrorCode::kVersionMismatch, "evidence version " + doc.at("version").dump());
    }
    if (doc.contains("prompt_text")) {
      json prompt = {{"prompt_text", doc.at("prompt_text")}};
      if (doc.contains("concepts")) prompt["concepts"] = doc.at("concepts");
      store.set_prompt(PromptSpec::from_json(prompt));
    }
    for (const auto& [name, emb] : doc.at("views").items()) {
      store.set_view(require_view(name), emb.get<std::vector<double>>());
    }
    if (doc.contains("parts")) {
      for (const auto& p : doc.at("parts")) {
        PartEvidence part;
        part.category_id = p.at("category_id").get<std::string>();
        part.source_view = require_view(p.value("view", std::string("front")));
        part.status = parse_part_status(p.at("status").get<std::string>());
        if (p.contains("embedding") && !p.at("embedding").is_null()) {
          part.embedding = p.at("embedding").get<std::vector<double>>();
        }
        store.set_part(std::move(part));
      }
    }
    if (doc.contains("text_priors")) {
      for (const auto& [cat, emb] : doc.at("text_priors").items()) store.set_text_prior(cat, emb.get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("evidence: ") + e.what());
  }
  store.freeze();
  return store;
}

EvidenceStore EvidenceStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json EvidenceStore::to_json() const {
  json doc = {{"schema", "cmag.evidence"}, {"version", 1}};
  if (prompt_) {
    const json p = prompt_->to_json();
    doc["prompt_text"] = p.at("prompt_text");
    doc["concepts"] = p.at("concepts");
  }
  json views = json::object();
  for (const auto& [v, emb] : views_) views[std::string(view_name(v))] = floats(emb);
  doc["views"] = views;
  json parts = json::array();
  for (const auto& [cat, part] : parts_) {
    json p = {{"category_id", cat},
              {"view", std::string(view_name(part.source_view))},
              {"status", std::string(part_status_name(part.status))}};
    if (part.embedding) p["embedding"] = floats(*part.embedding);
    parts.push_back(p);
  }
  doc["parts"] = parts;
  json priors = json::object();
  for (const auto& [cat, emb] : text_priors_) priors[cat] = floats(emb);
  doc["text_priors"] = priors;
  return doc;
}

ViewSelection select_views(const std::string& category_id, const Taxonomy& taxonomy, const std::set<View>& available) {
  if (available.empty()) throw Error(ErrorCode::kNoViewsAvailable, "no views available for " + category_id);

  auto intersect = [&](const auto& preference) {
    std::vector<View> out;
    for (View v : preference) {
      if (available.count(v)) out.push_back(v);
    }
    return out;
  };

  ViewSelection sel;
  if (auto it = taxonomy.view_map.find(category_id); it != taxonomy.view_map.end()) {
    sel.views = intersect(it->second);
    if (!sel.views.empty()) return sel;
    sel.low_confidence = true;
  }
  sel.views = intersect(kDefaultViewOrder);
  return sel;
}

GlobalQuery select_global_view(const std::string& category_id, const EvidenceStore& store, const Taxonomy& taxonomy) {
  const ViewSelection sel = select_views(category_id, taxonomy, store.available_views());
  const View v = sel.views.front();
  return GlobalQuery{store.views().at(v), v, sel.low_confidence};
}

QueryEvidence resolve_part_or_global(const std::string& category_id, const EvidenceStore& store,
                                     const Taxonomy& taxonomy) {
  if (const PartEvidence* p = store.part(category_id); p != nullptr && p->usable()) {
    return PartQuery{*p->embedding, p->source_view};
  }
  return select_global_view(category_id, store, taxonomy);
}

}  // namespace cmag
