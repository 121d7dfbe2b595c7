#pragma once
// Asset catalog ingestion and the category taxonomy.
//
// Catalog files are line-delimited JSON, one asset per line:
//   {"asset_id": "...", "category_id": "...", "embedding": [f32, ...],
//    "title": "...", "quality_flag": "curated" | "unfiltered", "bundle_id": "..."?}
//
// Taxonomy files are a single JSON document; see docs/formats.md.

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cmag/vecmath.hpp"

namespace cmag {

enum class View { kFront, kBack, kLeft, kRight };

inline constexpr std::array<View, 4> kDefaultViewOrder{View::kFront, View::kBack, View::kLeft, View::kRight};

std::string_view view_name(View v);
std::optional<View> parse_view(std::string_view name);

struct Taxonomy {
  std::set<std::string> categories;
  // Keyword -> candidate categories. List order is the declared preference;
  // routing treats it as a set.
  std::map<std::string, std::vector<std::string>> concept_map;
  std::vector<std::set<std::string>> exclusion_groups;
  std::map<std::string, std::vector<View>> view_map;
  std::set<std::string> required_core;

  std::map<std::string, std::string> display_names;
  // Per-category modifier vocabulary used to settle exclusion conflicts.
  std::map<std::string, std::vector<std::string>> modifier_keywords;
  // Category whose assets are body bundles; empty when the taxonomy has none.
  std::string bundle_category = "body";

  bool has_category(std::string_view id) const { return categories.count(std::string(id)) > 0; }
  std::string display_name(const std::string& category_id) const;
  // Index into exclusion_groups, if the category belongs to one.
  std::optional<std::size_t> exclusion_group_of(const std::string& category_id) const;
  bool excludes(const std::string& a, const std::string& b) const;

  static Taxonomy from_json(const nlohmann::json& doc);
  static Taxonomy load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct TaxonomyViolation {
  std::string field;
  std::string id;
  std::string message;
};

std::vector<TaxonomyViolation> validate_taxonomy(const Taxonomy& t);

enum class QualityFlag { kCurated, kUnfiltered };

struct Asset {
  std::string asset_id;
  std::string category_id;
  EmbeddingVector embedding;
  std::string title;
  QualityFlag quality_flag = QualityFlag::kCurated;
  std::optional<std::string> bundle_id;

  nlohmann::json to_json() const;
};

struct RejectedRecord {
  std::size_t line = 0;  // 1-based
  std::string reason;    // e.g. "unknown_category"
  std::string detail;
};

struct CatalogStats {
  std::size_t total_assets = 0;
  std::map<std::string, std::size_t> per_category_counts;
  std::vector<RejectedRecord> rejected_records;

  std::size_t accepted() const;
  nlohmann::json to_json() const;
};

class Catalog {
 public:
  // expected_dim = 0 infers the dimension from the first record.
  explicit Catalog(Taxonomy taxonomy, std::size_t expected_dim = 0);

  // Validates, normalizes and stores every well-formed record. Malformed
  // records are reported in the returned stats; a dimension mismatch throws.
  CatalogStats ingest(const std::filesystem::path& path);
  CatalogStats ingest(std::istream& in);

  // Adds one asset, normalizing its embedding. Throws on any violation.
  void add(Asset asset);

  const Taxonomy& taxonomy() const { return taxonomy_; }
  std::size_t dimension() const { return dim_; }
  std::size_t size() const;

  // Assets of one category sorted by asset_id. Throws UnknownCategory.
  const std::vector<Asset>& assets_of(const std::string& category_id) const;
  const Asset* find(const std::string& asset_id) const;

  void export_jsonl(std::ostream& out) const;

 private:
  void insert_validated(Asset asset);

  Taxonomy taxonomy_;
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<Asset>> by_category_;
  std::map<std::string, std::string> locator_;  // asset_id -> category_id
};

// Parses one catalog line; throws MalformedRecord with the rejection reason
// as the message prefix ("missing_field: ...").
Asset parse_asset_record(std::string_view line);

// Normalizes and rounds every component to float32 so stored embeddings match
// index rows bit for bit.
EmbeddingVector normalize_for_storage(std::span<const double> v);

}  // namespace cmag
