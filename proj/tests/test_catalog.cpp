#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "cmag/catalog.hpp"
#include "cmag/error.hpp"
#include "cmag/synth.hpp"

using namespace cmag;

namespace {

Taxonomy small_taxonomy() {
  Taxonomy t;
  t.categories = {"hat", "pants", "body"};
  t.bundle_category = "body";
  return t;
}

std::string record(const std::string& id, const std::string& cat, const std::string& emb, const std::string& extra = "") {
  return R"({"asset_id": ")" + id + R"(", "category_id": ")" + cat + R"(", "embedding": )" + emb + extra + "}";
}

const RejectedRecord* rejection(const CatalogStats& s, const std::string& reason) {
  for (const auto& r : s.rejected_records) {
    if (r.reason == reason) return &r;
  }
  return nullptr;
}

}  // namespace

TEST(Taxonomy, FixtureFileIsValidAndMatchesBuiltIn) {
  const Taxonomy t = Taxonomy::load(CMAG_SOURCE_DIR "/data/taxonomy.json");
  EXPECT_TRUE(validate_taxonomy(t).empty());
  EXPECT_EQ(t.to_json(), default_taxonomy().to_json());
  EXPECT_EQ(t.concept_map.at("hoodie"), (std::vector<std::string>{"sweater", "jacket"}));
  EXPECT_TRUE(t.excludes("sweater", "jacket"));
  EXPECT_FALSE(t.excludes("sweater", "pants"));
  EXPECT_EQ(t.display_name("back_accessory"), "back accessory");
  EXPECT_EQ(t.display_name("pants"), "pants");
}

TEST(Taxonomy, AmbiguousConceptIsValid) {
  Taxonomy t;
  t.categories = {"sweater", "jacket"};
  t.concept_map["hoodie"] = {"sweater", "jacket"};
  t.bundle_category.clear();
  EXPECT_TRUE(validate_taxonomy(t).empty());
}

TEST(Taxonomy, UndeclaredExclusionMember) {
  Taxonomy t;
  t.categories = {"sweater", "jacket"};
  t.exclusion_groups = {{"sweater", "cape"}};
  t.bundle_category.clear();
  const auto v = validate_taxonomy(t);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "exclusion_groups");
  EXPECT_EQ(v[0].id, "cape");
}

TEST(Taxonomy, EachViolationNamesFieldAndId) {
  Taxonomy t;
  t.categories = {"a", "b", "c"};
  t.concept_map["x"] = {"zz"};
  t.concept_map["empty"] = {};
  t.exclusion_groups = {{"a", "b"}, {"b", "c"}};
  t.view_map["a"] = {};
  t.view_map["c"] = {View::kFront, View::kFront};
  t.view_map["q"] = {View::kBack};
  t.required_core = {"nope"};
  t.bundle_category = "ghost";
  const auto v = validate_taxonomy(t);
  auto has = [&](const std::string& field, const std::string& id) {
    return std::any_of(v.begin(), v.end(), [&](const auto& x) { return x.field == field && x.id == id; });
  };
  EXPECT_TRUE(has("concept_map", "zz"));
  EXPECT_TRUE(has("concept_map", "empty"));
  EXPECT_TRUE(has("exclusion_groups", "b"));
  EXPECT_TRUE(has("view_map", "a"));
  EXPECT_TRUE(has("view_map", "c"));
  EXPECT_TRUE(has("view_map", "q"));
  EXPECT_TRUE(has("required_core", "nope"));
  EXPECT_TRUE(has("bundle_category", "ghost"));
}

TEST(Taxonomy, JsonRoundTripAndLoadErrors) {
  const Taxonomy t = default_taxonomy();
  EXPECT_EQ(Taxonomy::from_json(t.to_json()).to_json(), t.to_json());
  try {
    Taxonomy::load("/nonexistent/taxonomy.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFileNotFound);
  }
  EXPECT_THROW(Taxonomy::from_json(nlohmann::json{{"categories", {"a"}}, {"view_map", {{"a", {"top"}}}}}), Error);
}

TEST(Ingest, HappyPath) {
  Catalog c(small_taxonomy());
  std::istringstream in(record("h1", "hat", "[1, 0, 0]") + "\n" + record("h2", "hat", "[0, 2, 0]") + "\n\n" +
                        record("p1", "pants", "[0, 0, 3]") + "\n");
  const auto stats = c.ingest(in);
  EXPECT_EQ(stats.total_assets, 3u);
  EXPECT_EQ(stats.accepted(), 3u);
  EXPECT_TRUE(stats.rejected_records.empty());
  EXPECT_EQ(stats.per_category_counts.at("hat"), 2u);
  EXPECT_EQ(c.assets_of("hat")[1].embedding, (EmbeddingVector{0, 1, 0}));
  EXPECT_EQ(c.dimension(), 3u);
}

TEST(Ingest, RejectionsAreCountedWithReasons) {
  Catalog c(small_taxonomy());
  std::istringstream in(record("ok", "hat", "[1, 0]") + "\n" +          // 1
                        record("u", "cape", "[1, 0]") + "\n" +           // 2
                        "{not json\n" +                                  // 3
                        R"({"asset_id": "m", "embedding": [1, 0]})" "\n" +  // 4
                        record("z", "hat", "[0, 0]") + "\n" +            // 5
                        record("ok", "pants", "[0, 1]") + "\n" +         // 6
                        record("s", "hat", R"([1, "x"])") + "\n" +      // 7
                        record("f", "hat", "[1e400, 0]") + "\n" +        // 8
                        record("q", "hat", "[1, 0]", R"(, "quality_flag": "great")") + "\n");  // 9
  const auto stats = c.ingest(in);
  EXPECT_EQ(stats.total_assets, 9u);
  EXPECT_EQ(stats.accepted(), 1u);
  EXPECT_EQ(stats.total_assets, stats.accepted() + stats.rejected_records.size());
  ASSERT_NE(rejection(stats, "unknown_category"), nullptr);
  EXPECT_EQ(rejection(stats, "unknown_category")->line, 2u);
  EXPECT_EQ(rejection(stats, "malformed_json")->line, 3u);
  EXPECT_EQ(rejection(stats, "missing_field")->line, 4u);
  EXPECT_EQ(rejection(stats, "zero_embedding")->line, 5u);
  EXPECT_EQ(rejection(stats, "duplicate_asset_id")->line, 6u);
  EXPECT_EQ(rejection(stats, "invalid_field")->line, 7u);
  EXPECT_EQ(rejection(stats, "non_finite_embedding")->line, 8u);
}

TEST(Ingest, DimensionMismatchIsFatal) {
  Catalog c(small_taxonomy(), 4);
  std::istringstream in(record("a", "hat", "[1, 0, 0, 0]") + "\n" + record("b", "hat", "[1, 0]") + "\n");
  try {
    c.ingest(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Ingest, MissingFile) {
  Catalog c(small_taxonomy());
  EXPECT_THROW(c.ingest(std::filesystem::path("/nonexistent/catalog.jsonl")), Error);
}

TEST(Catalog, AssetsOfIsSortedAndPartitioned) {
  Catalog c(small_taxonomy());
  c.add({"h9", "hat", {1, 0}, "", QualityFlag::kCurated, std::nullopt});
  c.add({"h1", "hat", {0, 1}, "", QualityFlag::kUnfiltered, std::nullopt});
  c.add({"b1", "body", {1, 1}, "", QualityFlag::kCurated, "bundle-0"});
  const auto& hats = c.assets_of("hat");
  ASSERT_EQ(hats.size(), 2u);
  EXPECT_EQ(hats[0].asset_id, "h1");
  EXPECT_EQ(hats[1].asset_id, "h9");
  EXPECT_TRUE(c.assets_of("pants").empty());
  EXPECT_THROW(c.assets_of("cape"), Error);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.find("b1")->category_id, "body");
  EXPECT_EQ(c.find("zz"), nullptr);
  EXPECT_THROW(c.add({"h1", "hat", {1, 0}, "", QualityFlag::kCurated, std::nullopt}), Error);
}

TEST(Catalog, ExportIngestRoundTrip) {
  Catalog a(small_taxonomy());
  a.add({"h1", "hat", {0.3, 0.4, 1.2}, "red hat", QualityFlag::kCurated, std::nullopt});
  a.add({"b1", "body", {1, -2, 0.5}, "base", QualityFlag::kUnfiltered, "bundle-7"});
  std::stringstream io;
  a.export_jsonl(io);

  Catalog b(small_taxonomy());
  const auto stats = b.ingest(io);
  EXPECT_EQ(stats.accepted(), 2u);
  for (const char* id : {"h1", "b1"}) {
    const Asset* x = a.find(id);
    const Asset* y = b.find(id);
    ASSERT_NE(y, nullptr);
    EXPECT_EQ(x->embedding, y->embedding);  // stored values survive float32 text exactly
    EXPECT_EQ(x->title, y->title);
    EXPECT_EQ(x->quality_flag, y->quality_flag);
    EXPECT_EQ(x->bundle_id, y->bundle_id);
  }
}

TEST(Catalog, StorageNormalization) {
  const auto v = normalize_for_storage(EmbeddingVector{3, 4});
  EXPECT_EQ(v[0], static_cast<double>(0.6f));
  EXPECT_EQ(v[1], static_cast<double>(0.8f));
  EXPECT_EQ(normalize_for_storage(v), v);
}

TEST(Catalog, ParseAssetRecord) {
  const Asset a = parse_asset_record(record("x", "hat", "[1, 2]", R"(, "bundle_id": "b")"));
  EXPECT_EQ(a.bundle_id, "b");
  try {
    parse_asset_record(R"({"asset_id": "x"})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedRecord);
    EXPECT_NE(std::string(e.what()).find("missing_field"), std::string::npos);
  }
}
