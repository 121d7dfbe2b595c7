#include "cmag/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <variant>

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

std::string_view view_name(View v) {
  switch (v) {
    case View::kFront: return "front";
    case View::kBack: return "back";
    case View::kLeft: return "left";
    case View::kRight: return "right";
  }
  return "front";
}

std::optional<View> parse_view(std::string_view name) {
  for (View v : kDefaultViewOrder) {
    if (view_name(v) == name) return v;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

std::string Taxonomy::display_name(const std::string& category_id) const {
  if (auto it = display_names.find(category_id); it != display_names.end()) return it->second;
  std::string name = category_id;
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

std::optional<std::size_t> Taxonomy::exclusion_group_of(const std::string& category_id) const {
  for (std::size_t i = 0; i < exclusion_groups.size(); ++i) {
    if (exclusion_groups[i].count(category_id)) return i;
  }
  return std::nullopt;
}

bool Taxonomy::excludes(const std::string& a, const std::string& b) const {
  if (a == b) return false;
  return std::any_of(exclusion_groups.begin(), exclusion_groups.end(),
                     [&](const auto& g) { return g.count(a) && g.count(b); });
}

Taxonomy Taxonomy::from_json(const json& doc) {
  Taxonomy t;
  try {
    for (const auto& c : doc.at("categories")) t.categories.insert(c.get<std::string>());
    if (doc.contains("concept_map")) {
      for (const auto& [key, targets] : doc.at("concept_map").items()) {
        std::string lowered = key;
        std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char ch) { return std::tolower(ch); });
        auto& list = t.concept_map[lowered];
        for (const auto& target : targets) list.push_back(target.get<std::string>());
      }
    }
    if (doc.contains("exclusion_groups")) {
      for (const auto& group : doc.at("exclusion_groups")) {
        std::set<std::string> members;
        for (const auto& m : group) members.insert(m.get<std::string>());
        t.exclusion_groups.push_back(std::move(members));
      }
    }
    if (doc.contains("view_map")) {
      for (const auto& [cat, views] : doc.at("view_map").items()) {
        auto& list = t.view_map[cat];
        for (const auto& v : views) {
          auto parsed = parse_view(v.get<std::string>());
          if (!parsed) throw Error(ErrorCode::kInvalidTaxonomy, "view_map." + cat + ": unknown view " + v.dump());
          list.push_back(*parsed);
        }
      }
    }
    if (doc.contains("required_core")) {
      for (const auto& c : doc.at("required_core")) t.required_core.insert(c.get<std::string>());
    }
    if (doc.contains("display_names")) t.display_names = doc.at("display_names").get<std::map<std::string, std::string>>();
    if (doc.contains("modifier_keywords")) {
      t.modifier_keywords = doc.at("modifier_keywords").get<std::map<std::string, std::vector<std::string>>>();
    }
    if (doc.contains("bundle_category")) t.bundle_category = doc.at("bundle_category").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidTaxonomy, e.what());
  }
  return t;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidTaxonomy, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json Taxonomy::to_json() const {
  json doc;
  doc["categories"] = categories;
  doc["concept_map"] = concept_map;
  json groups = json::array();
  for (const auto& g : exclusion_groups) groups.push_back(g);
  doc["exclusion_groups"] = groups;
  json views = json::object();
  for (const auto& [cat, list] : view_map) {
    json arr = json::array();
    for (View v : list) arr.push_back(std::string(view_name(v)));
    views[cat] = arr;
  }
  doc["view_map"] = views;
  doc["required_core"] = required_core;
  doc["display_names"] = display_names;
  doc["modifier_keywords"] = modifier_keywords;
  doc["bundle_category"] = bundle_category;
  return doc;
}

std::vector<TaxonomyViolation> validate_taxonomy(const Taxonomy& t) {
  std::vector<TaxonomyViolation> out;
  auto report = [&](std::string field, std::string id, std::string message) {
    out.push_back({std::move(field), std::move(id), std::move(message)});
  };

  for (const auto& [keyword, targets] : t.concept_map) {
    if (targets.empty()) report("concept_map", keyword, "concept maps to no category");
    for (const auto& target : targets) {
      if (!t.has_category(target)) report("concept_map", target, "undeclared category for concept '" + keyword + "'");
    }
  }

  for (std::size_t i = 0; i < t.exclusion_groups.size(); ++i) {
    std::size_t core_members = 0;
    for (const auto& member : t.exclusion_groups[i]) {
      if (!t.has_category(member)) report("exclusion_groups", member, "undeclared category in group " + std::to_string(i));
      if (t.required_core.count(member)) ++core_members;
      for (std::size_t j = i + 1; j < t.exclusion_groups.size(); ++j) {
        if (t.exclusion_groups[j].count(member)) {
          report("exclusion_groups", member,
                 "category appears in groups " + std::to_string(i) + " and " + std::to_string(j));
        }
      }
    }
    if (core_members > 1) {
      report("exclusion_groups", std::to_string(i), "group contains more than one required_core category");
    }
  }

  for (const auto& [cat, views] : t.view_map) {
    if (!t.has_category(cat)) report("view_map", cat, "undeclared category");
    if (views.empty()) report("view_map", cat, "empty view preference list");
    std::set<View> seen(views.begin(), views.end());
    if (seen.size() != views.size()) report("view_map", cat, "duplicate view in preference list");
  }

  for (const auto& cat : t.required_core) {
    if (!t.has_category(cat)) report("required_core", cat, "undeclared category");
  }
  for (const auto& [cat, _] : t.display_names) {
    if (!t.has_category(cat)) report("display_names", cat, "undeclared category");
  }
  for (const auto& [cat, _] : t.modifier_keywords) {
    if (!t.has_category(cat)) report("modifier_keywords", cat, "undeclared category");
  }
  if (!t.bundle_category.empty() && !t.has_category(t.bundle_category)) {
    report("bundle_category", t.bundle_category, "undeclared category");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

json Asset::to_json() const {
  json doc;
  doc["asset_id"] = asset_id;
  doc["category_id"] = category_id;
  json emb = json::array();
  for (double x : embedding) emb.push_back(static_cast<float>(x));
  doc["embedding"] = std::move(emb);
  doc["title"] = title;
  doc["quality_flag"] = quality_flag == QualityFlag::kCurated ? "curated" : "unfiltered";
  if (bundle_id) doc["bundle_id"] = *bundle_id;
  return doc;
}

std::size_t CatalogStats::accepted() const {
  std::size_t n = 0;
  for (const auto& [_, count] : per_category_counts) n += count;
  return n;
}

json CatalogStats::to_json() const {
  json rejected = json::array();
  for (const auto& r : rejected_records) rejected.push_back({{"line", r.line}, {"reason", r.reason}, {"detail", r.detail}});
  return {{"total_assets", total_assets},
          {"accepted", accepted()},
          {"per_category_counts", per_category_counts},
          {"rejected_records", rejected}};
}

EmbeddingVector normalize_for_storage(std::span<const double> v) {
  // Already-unit input is only rounded, which makes storage idempotent on
  // float32 files.
  EmbeddingVector out = all_finite(v) && std::abs(norm(v) - 1.0) <= kUnitNormTol
                            ? EmbeddingVector(v.begin(), v.end())
                            : normalize(v);
  for (double& x : out) x = static_cast<double>(static_cast<float>(x));
  return out;
}

namespace {

struct ParseFailure {
  std::string reason;
  std::string detail;
};

std::variant<Asset, ParseFailure> try_parse(std::string_view line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::out_of_range& e) {
    // A literal such as 1e400 overflows to infinity; the embedding is the only numeric field.
    if (e.id == 406) return ParseFailure{"non_finite_embedding", e.what()};
    return ParseFailure{"malformed_json", e.what()};
  } catch (const json::exception& e) {
    return ParseFailure{"malformed_json", e.what()};
  }
  if (!doc.is_object()) return ParseFailure{"malformed_json", "record is not an object"};

  for (const char* key : {"asset_id", "category_id", "embedding"}) {
    if (!doc.contains(key)) return ParseFailure{"missing_field", key};
  }

  Asset a;
  try {
    a.asset_id = doc.at("asset_id").get<std::string>();
    a.category_id = doc.at("category_id").get<std::string>();
    const auto& emb = doc.at("embedding");
    if (!emb.is_array()) return ParseFailure{"invalid_field", "embedding is not an array"};
    a.embedding.reserve(emb.size());
    for (const auto& x : emb) {
      if (!x.is_number()) return ParseFailure{"invalid_field", "embedding holds a non-number"};
      a.embedding.push_back(x.get<double>());
    }
    if (doc.contains("title")) a.title = doc.at("title").get<std::string>();
    if (doc.contains("quality_flag")) {
      const auto flag = doc.at("quality_flag").get<std::string>();
      if (flag == "curated") {
        a.quality_flag = QualityFlag::kCurated;
      } else if (flag == "unfiltered") {
        a.quality_flag = QualityFlag::kUnfiltered;
      } else {
        return ParseFailure{"invalid_field", "quality_flag '" + flag + "'"};
      }
    }
    if (doc.contains("bundle_id") && !doc.at("bundle_id").is_null()) a.bundle_id = doc.at("bundle_id").get<std::string>();
  } catch (const json::exception& e) {
    return ParseFailure{"invalid_field", e.what()};
  }
  if (a.asset_id.empty()) return ParseFailure{"invalid_field", "empty asset_id"};
  if (a.embedding.empty()) return ParseFailure{"invalid_field", "empty embedding"};
  return a;
}

}  // namespace

Asset parse_asset_record(std::string_view line) {
  auto parsed = try_parse(line);
  if (auto* failure = std::get_if<ParseFailure>(&parsed)) {
    throw Error(ErrorCode::kMalformedRecord, failure->reason + ": " + failure->detail);
  }
  return std::get<Asset>(std::move(parsed));
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

Catalog::Catalog(Taxonomy taxonomy, std::size_t expected_dim) : taxonomy_(std::move(taxonomy)), dim_(expected_dim) {
  for (const auto& c : taxonomy_.categories) by_category_[c];
}

CatalogStats Catalog::ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  return ingest(in);
}

CatalogStats Catalog::ingest(std::istream& in) {
  CatalogStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++stats.total_assets;
    auto reject = [&](std::string reason, std::string detail) {
      stats.rejected_records.push_back({line_no, std::move(reason), std::move(detail)});
    };

    auto parsed = try_parse(line);
    if (auto* failure = std::get_if<ParseFailure>(&parsed)) {
      reject(failure->reason, failure->detail);
      continue;
    }
    Asset asset = std::get<Asset>(std::move(parsed));

    if (dim_ == 0) dim_ = asset.embedding.size();
    if (asset.embedding.size() != dim_) {
      throw Error(ErrorCode::kDimensionMismatch, "line " + std::to_string(line_no) + ": record has d=" +
                                                     std::to_string(asset.embedding.size()) + ", catalog has d=" +
                                                     std::to_string(dim_));
    }
    if (!taxonomy_.has_category(asset.category_id)) {
      reject("unknown_category", asset.category_id);
      continue;
    }
    if (!all_finite(asset.embedding)) {
      reject("non_finite_embedding", asset.asset_id);
      continue;
    }
    if (norm(asset.embedding) <= kZeroNormEps) {
      reject("zero_embedding", asset.asset_id);
      continue;
    }
    if (locator_.count(asset.asset_id)) {
      reject("duplicate_asset_id", asset.asset_id);
      continue;
    }
    asset.embedding = normalize_for_storage(asset.embedding);
    ++stats.per_category_counts[asset.category_id];
    insert_validated(std::move(asset));
  }
  return stats;
}

void Catalog::add(Asset asset) {
  if (dim_ == 0) dim_ = asset.embedding.size();
  if (asset.embedding.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "asset " + asset.asset_id);
  if (!taxonomy_.has_category(asset.category_id)) throw Error(ErrorCode::kUnknownCategory, asset.category_id);
  if (locator_.count(asset.asset_id)) throw Error(ErrorCode::kMalformedRecord, "duplicate_asset_id: " + asset.asset_id);
  asset.embedding = normalize_for_storage(asset.embedding);
  insert_validated(std::move(asset));
}

void Catalog::insert_validated(Asset asset) {
  auto& bucket = by_category_[asset.category_id];
  auto pos = std::lower_bound(bucket.begin(), bucket.end(), asset.asset_id,
                              [](const Asset& a, const std::string& id) { return a.asset_id < id; });
  locator_[asset.asset_id] = asset.category_id;
  bucket.insert(pos, std::move(asset));
}

std::size_t Catalog::size() const { return locator_.size(); }

const std::vector<Asset>& Catalog::assets_of(const std::string& category_id) const {
  auto it = by_category_.find(category_id);
  if (it == by_category_.end()) throw Error(ErrorCode::kUnknownCategory, category_id);
  return it->second;
}

const Asset* Catalog::find(const std::string& asset_id) const {
  auto loc = locator_.find(asset_id);
  if (loc == locator_.end()) return nullptr;
  const auto& bucket = by_category_.at(loc->second);
  auto pos = std::lower_bound(bucket.begin(), bucket.end(), asset_id,
                              [](const Asset& a, const std::string& id) { return a.asset_id < id; });
  return pos != bucket.end() && pos->asset_id == asset_id ? &*pos : nullptr;
}

void Catalog::export_jsonl(std::ostream& out) const {
  for (const auto& [_, bucket] : by_category_) {
    for (const auto& a : bucket) out << a.to_json().dump() << '\n';
  }
}

}  // namespace cmag
