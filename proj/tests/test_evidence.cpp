#include <gtest/gtest.h>

#include "cmag/error.hpp"
#include "cmag/evidence.hpp"
#include "cmag/synth.hpp"

using namespace cmag;

namespace {

EvidenceStore sample_store() {
  EvidenceStore s;
  PromptSpec p;
  p.prompt_text = "a backpack";
  p.concepts = {{"backpack", {"red"}}};
  s.set_prompt(p);
  s.set_view(View::kFront, std::vector<double>{1, 0, 0});
  s.set_view(View::kLeft, std::vector<double>{0, 2, 0});
  s.set_part({"pants", EmbeddingVector{0, 0, 5}, View::kBack, PartStatus::kValid});
  s.set_part({"hat", EmbeddingVector{1, 1, 0}, View::kFront, PartStatus::kFallbackKeyword});
  s.set_part({"halo", std::nullopt, View::kFront, PartStatus::kFailed});
  s.set_text_prior("pants", std::vector<double>{3, 4, 0});
  return s;
}

}  // namespace

TEST(Views, PreferredOrderAndFallback) {
  const Taxonomy t = default_taxonomy();
  const std::set<View> all{View::kFront, View::kBack, View::kLeft, View::kRight};

  auto sel = select_views("back_accessory", t, all);
  EXPECT_EQ(sel.views, (std::vector<View>{View::kBack, View::kLeft}));
  EXPECT_FALSE(sel.low_confidence);

  sel = select_views("back_accessory", t, {View::kLeft, View::kFront});
  EXPECT_EQ(sel.views, (std::vector<View>{View::kLeft}));

  sel = select_views("back_accessory", t, {View::kRight, View::kFront});
  EXPECT_EQ(sel.views, (std::vector<View>{View::kFront, View::kRight}));
  EXPECT_TRUE(sel.low_confidence);

  sel = select_views("pants", t, {View::kRight, View::kBack});
  EXPECT_EQ(sel.views, (std::vector<View>{View::kBack, View::kRight}));
  EXPECT_FALSE(sel.low_confidence);

  EXPECT_THROW(select_views("pants", t, {}), Error);
  try {
    select_views("halo", t, {});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoViewsAvailable);
  }
}

TEST(Evidence, ResolvePartOrGlobal) {
  const Taxonomy t = default_taxonomy();
  EvidenceStore s = sample_store();
  s.freeze();

  auto q = resolve_part_or_global("pants", s, t);
  ASSERT_TRUE(std::holds_alternative<PartQuery>(q));
  EXPECT_EQ(std::get<PartQuery>(q).embedding, (EmbeddingVector{0, 0, 1}));
  EXPECT_EQ(std::get<PartQuery>(q).source_view, View::kBack);

  q = resolve_part_or_global("hat", s, t);
  EXPECT_TRUE(std::holds_alternative<PartQuery>(q));  // keyword fallback still usable

  q = resolve_part_or_global("halo", s, t);  // failed part, preferred view front available
  ASSERT_TRUE(std::holds_alternative<GlobalQuery>(q));
  EXPECT_EQ(std::get<GlobalQuery>(q).source_view, View::kFront);
  EXPECT_FALSE(std::get<GlobalQuery>(q).low_confidence);

  q = resolve_part_or_global("back_accessory", s, t);  // no part; prefers back, then left
  ASSERT_TRUE(std::holds_alternative<GlobalQuery>(q));
  EXPECT_EQ(std::get<GlobalQuery>(q).source_view, View::kLeft);
  EXPECT_EQ(std::get<GlobalQuery>(q).embedding, (EmbeddingVector{0, 1, 0}));
}

TEST(Evidence, ValidationOnInsert) {
  EvidenceStore s;
  s.set_view(View::kFront, std::vector<double>{1, 0});
  EXPECT_THROW(s.set_view(View::kBack, std::vector<double>{1, 0, 0}), Error);
  EXPECT_THROW(s.set_part({"hat", EmbeddingVector{1, 0}, View::kFront, PartStatus::kFailed}), Error);
  EXPECT_THROW(s.set_part({"hat", std::nullopt, View::kFront, PartStatus::kValid}), Error);
  EXPECT_THROW(s.set_text_prior("hat", std::vector<double>{0, 0}), Error);
}

TEST(Evidence, FreezeMakesReadOnly) {
  EvidenceStore empty;
  EXPECT_THROW(empty.freeze(), Error);

  EvidenceStore s = sample_store();
  s.freeze();
  EXPECT_TRUE(s.frozen());
  EXPECT_THROW(s.set_view(View::kBack, std::vector<double>{1, 0, 0}), Error);
  EXPECT_THROW(s.set_text_prior("hat", std::vector<double>{1, 0, 0}), Error);
  EXPECT_THROW(s.set_part({"hat", std::nullopt, View::kFront, PartStatus::kFailed}), Error);
}

TEST(Evidence, JsonRoundTrip) {
  EvidenceStore s = sample_store();
  s.freeze();
  const auto doc = s.to_json();
  EXPECT_EQ(doc.at("schema"), "cmag.evidence");
  const EvidenceStore back = EvidenceStore::from_json(doc);
  EXPECT_TRUE(back.frozen());
  EXPECT_EQ(back.to_json(), doc);
  EXPECT_EQ(back.views(), s.views());
  EXPECT_EQ(*back.text_prior("pants"), (EmbeddingVector{static_cast<double>(0.6f), static_cast<double>(0.8f), 0}));
  EXPECT_EQ(back.part("halo")->status, PartStatus::kFailed);
  EXPECT_EQ(back.part("hat")->status, PartStatus::kFallbackKeyword);
  EXPECT_EQ(back.prompt()->concepts.at(0).modifiers, (std::vector<std::string>{"red"}));
}

TEST(Evidence, BadDocuments) {
  auto code = [](const nlohmann::json& doc) {
    try {
      EvidenceStore::from_json(doc);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIoError;
  };
  EXPECT_EQ(code({{"version", 2}, {"views", {{"front", {1, 0}}}}}), ErrorCode::kVersionMismatch);
  EXPECT_EQ(code({{"views", {{"top", {1, 0}}}}}), ErrorCode::kMalformedRecord);
  EXPECT_EQ(code({{"views", nlohmann::json::object()}}), ErrorCode::kNoViewsAvailable);
  EXPECT_EQ(code({{"views", {{"front", {1, 0}}}}, {"parts", {{{"category_id", "x"}, {"status", "odd"}}}}}),
            ErrorCode::kMalformedRecord);
  EXPECT_THROW(EvidenceStore::load("/nonexistent/evidence.json"), Error);
}
