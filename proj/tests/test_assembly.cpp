#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <random>

#include "cmag/assembly.hpp"
#include "cmag/error.hpp"
#include "cmag/judge.hpp"
#include "cmag/synth.hpp"

using namespace cmag;
using nlohmann::json;

namespace {

CandidatePool make_pool(const std::string& cat, const std::vector<std::string>& ids) {
  CandidatePool p{cat, {}};
  double s = 0.9;
  for (const auto& id : ids) {
    p.candidates.push_back({id, s, CandidateSource::kPart});
    s -= 0.05;
  }
  return p;
}

struct Fixture {
  Taxonomy taxonomy = default_taxonomy();
  std::map<std::string, CandidatePool> pools;
  std::vector<std::string> log;
  AssemblyContext ctx;

  Fixture() {
    pools["body"] = make_pool("body", {"b1", "b2", "b3", "b4", "b5", "b6"});
    pools["jacket"] = make_pool("jacket", {"j1", "j2", "j3"});
    pools["sweater"] = make_pool("sweater", {"s1", "s2"});
    pools["pants"] = make_pool("pants", {"p1", "p2", "p3"});
    pools["hat"] = make_pool("hat", {"h1"});
    ctx.taxonomy = &taxonomy;
    ctx.log = &log;
    for (int i = 1; i <= 6; ++i) ctx.bundle_ids["b" + std::to_string(i)] = "bundle-" + std::to_string((i - 1) / 2);
  }
};

// Judge answering from per-operation queues; the last answer repeats.
class QueueJudge : public JudgeClient {
 public:
  std::deque<std::vector<std::string>> filters;
  std::deque<std::map<std::string, std::string>> picks;
  std::deque<VerificationReport> reports;
  std::deque<std::size_t> winners;
  std::vector<std::vector<json>> batches;
  std::size_t verify_calls = 0;

  std::vector<std::string> filter_grid(const CandidatePool& pool, const JudgeContext&) override {
    if (filters.empty()) {
      std::vector<std::string> all;
      for (const auto& c : pool.candidates) all.push_back(c.asset_id);
      return all;
    }
    return next(filters);
  }
  std::map<std::string, std::string> select_outfit(const std::map<std::string, CandidatePool>&, const JudgeContext&) override {
    return next(picks);
  }
  VerificationReport verify(const json&, const JudgeContext&) override {
    ++verify_calls;
    return next(reports);
  }
  std::size_t compare_batch(const std::vector<json>& looks, const JudgeContext&) override {
    batches.push_back(looks);
    return next(winners);
  }

 private:
  template <typename T>
  static T next(std::deque<T>& q) {
    if (q.empty()) throw Error(ErrorCode::kJudgeUnavailable, "queue empty");
    T v = q.front();
    if (q.size() > 1) q.pop_front();
    return v;
  }
};

VerificationReport fail_with(std::vector<Edit> edits) {
  VerificationReport r;
  r.pass = false;
  r.issues.push_back({IssueKind::kIllFitting, std::nullopt});
  r.edits = std::move(edits);
  return r;
}

VerificationReport pass() {
  VerificationReport r;
  r.pass = true;
  return r;
}

bool logged(const std::vector<std::string>& log, const std::string& needle) {
  return std::any_of(log.begin(), log.end(), [&](const auto& l) { return l.find(needle) != std::string::npos; });
}

}  // namespace

TEST(Filter, KeepsJudgeChoiceInPoolOrderUpToGate) {
  Fixture f;
  QueueJudge judge;
  judge.filters = {{"b6", "b2", "ghost"}};
  RetrievalConfig cfg;
  cfg.gate_k = 1;
  const auto out = filter_pools({{"body", f.pools["body"]}}, judge, cfg, f.ctx);
  ASSERT_EQ(out.pools.at("body").candidates.size(), 1u);
  EXPECT_EQ(out.pools.at("body").candidates[0].asset_id, "b2");
  EXPECT_TRUE(logged(f.log, "ignored foreign asset 'ghost'"));
  EXPECT_TRUE(out.at_risk.empty());
}

TEST(Filter, EmptiedCategoryIsAtRisk) {
  Fixture f;
  QueueJudge judge;
  judge.filters = {{}};
  const auto out = filter_pools({{"hat", f.pools["hat"]}}, judge, RetrievalConfig{}, f.ctx);
  EXPECT_TRUE(out.pools.at("hat").candidates.empty());
  EXPECT_EQ(out.at_risk, (std::set<std::string>{"hat"}));
}

TEST(Filter, UnavailableJudgePassthroughOnlyWhenAllowed) {
  Fixture f;
  ScriptedTransport empty(json{{"responses", json::object()}});
  TransportJudge judge(empty);
  EXPECT_THROW(filter_pools(f.pools, judge, RetrievalConfig{}, f.ctx), Error);
  const auto out = filter_pools(f.pools, judge, RetrievalConfig{}, f.ctx, true);
  EXPECT_EQ(out.pools.at("body").candidates.size(), 6u);
  EXPECT_TRUE(logged(f.log, "passing pool through"));
}

TEST(Initial, CorrectsJudgePicks) {
  Fixture f;
  QueueJudge judge;
  judge.picks = {{{"jacket", "j2"}, {"sweater", "s1"}, {"pants", "nope"}, {"halo", "x"}}};
  const auto look = assemble_initial(f.pools, judge, f.ctx);
  EXPECT_EQ(look.selections.at("jacket"), "j2");
  EXPECT_FALSE(look.selections.count("sweater"));
  EXPECT_EQ(look.selections.at("pants"), "p1");
  EXPECT_EQ(look.selections.at("body"), "b1");
  EXPECT_FALSE(look.selections.count("halo"));
  EXPECT_EQ(look.body_bundle_id, "bundle-0");
  EXPECT_TRUE(look_violations(look, f.pools, f.taxonomy).empty());
  EXPECT_TRUE(logged(f.log, "dropped sweater"));
  EXPECT_TRUE(logged(f.log, "replaced foreign pick 'nope'"));
  EXPECT_TRUE(logged(f.log, "filled required category body"));
}

TEST(Initial, MissingCoreThrows) {
  Fixture f;
  f.pools["body"].candidates.clear();
  QueueJudge judge;
  judge.picks = {{}};
  try {
    assemble_initial(f.pools, judge, f.ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingCoreCategory);
  }
}

TEST(Refine, StopsOnPass) {
  Fixture f;
  QueueJudge judge;
  judge.reports = {fail_with({{EditAction::kAdd, "hat", "h1"}}), pass()};
  AvatarLook look;
  look.selections = {{"body", "b1"}};
  const auto out = refine(look, f.pools, judge, GenerationBudget{}, f.ctx);
  EXPECT_EQ(out.status, LookStatus::kVerified);
  EXPECT_EQ(out.verifications, 2u);
  EXPECT_EQ(out.selections.at("hat"), "h1");
  ASSERT_EQ(out.history.size(), 1u);
}

TEST(Refine, TerminatesWithinBudgetAndSkipsLastEdits) {
  Fixture f;
  QueueJudge judge;
  judge.reports = {fail_with({{EditAction::kSubstitute, "pants", "p2"}}), fail_with({{EditAction::kSubstitute, "pants", "p3"}}),
                   fail_with({{EditAction::kAdd, "hat", "h1"}})};
  AvatarLook look;
  look.selections = {{"body", "b1"}, {"pants", "p1"}};
  GenerationBudget budget;
  const auto out = refine(look, f.pools, judge, budget, f.ctx);
  EXPECT_EQ(judge.verify_calls, 3u);
  EXPECT_EQ(out.verifications, 3u);
  EXPECT_EQ(out.status, LookStatus::kDraft);
  EXPECT_EQ(out.selections.at("pants"), "p3");
  EXPECT_FALSE(out.selections.count("hat"));
  ASSERT_TRUE(out.last_report.has_value());
  EXPECT_FALSE(out.last_report->pass);
}

TEST(Refine, InvalidEditsAreSkippedAndLogged) {
  Fixture f;
  QueueJudge judge;
  judge.reports = {fail_with({{EditAction::kRemove, "body", ""},
                              {EditAction::kAdd, "sweater", "s1"},
                              {EditAction::kAdd, "pants", "p1"},
                              {EditAction::kAdd, "hat", "zz"},
                              {EditAction::kAdd, "halo", "x"},
                              {EditAction::kSubstitute, "hat", "h1"},
                              {EditAction::kSubstitute, "jacket", "j1"},
                              {EditAction::kRemove, "hat", ""}}),
                   pass()};
  AvatarLook look;
  look.selections = {{"body", "b1"}, {"jacket", "j1"}, {"pants", "p2"}};
  const auto out = refine(look, f.pools, judge, GenerationBudget{}, f.ctx);
  EXPECT_EQ(out.selections, look.selections);
  EXPECT_TRUE(out.history.empty());
  for (const char* why : {"category is required", "exclusion conflict", "category already selected", "asset not in the category pool",
                          "category has no filtered pool", "substitute targets an unselected category", "asset already selected",
                          "category not selected"}) {
    EXPECT_TRUE(logged(f.log, why)) << why;
  }
}

TEST(Refine, RandomEditsPreserveInvariants) {
  Fixture f;
  std::mt19937_64 rng(99);
  const std::vector<std::string> cats = {"body", "jacket", "sweater", "pants", "hat", "halo"};
  const std::vector<std::string> ids = {"b1", "b3", "j1", "j3", "s2", "p1", "p3", "h1", "x"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<VerificationReport> reports;
    for (int r = 0; r < 3; ++r) {
      std::vector<Edit> edits;
      for (std::size_t e = rng() % 6; e > 0; --e) {
        edits.push_back({static_cast<EditAction>(rng() % 3), cats[rng() % cats.size()], ids[rng() % ids.size()]});
      }
      reports.push_back(fail_with(edits));
    }
    QueueJudge judge;
    judge.reports = {reports.begin(), reports.end()};
    AvatarLook look;
    look.selections = {{"body", "b1"}, {"pants", "p2"}};
    look.body_bundle_id = "bundle-0";
    const auto out = refine(look, f.pools, judge, GenerationBudget{}, f.ctx);
    EXPECT_LE(out.verifications, 3u);
    EXPECT_TRUE(look_violations(out, f.pools, f.taxonomy).empty());
    EXPECT_TRUE(out.selections.count("body"));
    EXPECT_EQ(out.body_bundle_id, f.ctx.bundle_of(out.selections.at("body")));
  }
}

TEST(Generation, UsageCapsHoldOverSixCandidates) {
  Fixture f;
  QueueJudge judge;
  // Every verification tries to push the same assets back in.
  judge.reports = {fail_with({{EditAction::kSubstitute, "pants", "p1"}, {EditAction::kSubstitute, "jacket", "j1"}})};
  AvatarLook base;
  base.selections = {{"body", "b1"}, {"jacket", "j1"}, {"pants", "p1"}, {"hat", "h1"}};
  GenerationBudget budget;
  const auto bundles = rank_body_bundles(f.pools, f.ctx);
  ASSERT_EQ(bundles.size(), 3u);
  EXPECT_EQ(bundles[1].bundle_id, "bundle-1");
  EXPECT_EQ(bundles[1].asset_id, "b3");

  const auto gen = generate_candidates(base, f.pools, bundles, judge, budget, f.ctx);
  ASSERT_EQ(gen.looks.size(), 6u);
  std::map<std::string, std::size_t> assets;
  std::map<std::string, std::size_t> bundle_uses;
  for (const auto& look : gen.looks) {
    EXPECT_TRUE(look_violations(look, f.pools, f.taxonomy).empty());
    EXPECT_LE(look.verifications, budget.max_refine_iters);
    for (const auto& [cat, a] : look.selections) {
      if (cat == "body") {
        ++bundle_uses[look.body_bundle_id];
      } else {
        ++assets[a];
      }
    }
  }
  for (const auto& [a, n] : assets) EXPECT_LE(n, budget.per_asset_cap) << a;
  for (const auto& [b, n] : bundle_uses) EXPECT_LE(n, budget.per_bundle_cap) << b;
  EXPECT_EQ(gen.looks[0].body_bundle_id, "bundle-0");
  EXPECT_EQ(gen.looks[1].body_bundle_id, "bundle-1");
  EXPECT_EQ(gen.looks[2].body_bundle_id, "bundle-2");
  // h1 is the only hat: used twice, then omitted.
  EXPECT_EQ(assets["h1"], 2u);
  EXPECT_EQ(gen.ledger.asset_uses(), assets);
  EXPECT_TRUE(logged(f.log, "usage cap reached"));
}

TEST(Generation, ExhaustedBundlesAreInfeasible) {
  Fixture f;
  QueueJudge judge;
  judge.reports = {pass()};
  AvatarLook base;
  base.selections = {{"body", "b1"}};
  GenerationBudget budget;
  budget.n_candidates = 7;  // 3 bundles x cap 2
  const auto bundles = rank_body_bundles(f.pools, f.ctx);
  try {
    generate_candidates(base, f.pools, bundles, judge, budget, f.ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBudgetInfeasible);
  }
}

namespace {

std::vector<AvatarLook> looks_n(std::size_t n) {
  std::vector<AvatarLook> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].look_id = static_cast<std::uint32_t>(i);
    out[i].selections = {{"body", "b1"}};
  }
  return out;
}

// Scripted preference: a total order over look ids; the judge returns the
// batch index of the most preferred look.
class RankingJudge : public QueueJudge {
 public:
  explicit RankingJudge(std::vector<std::uint32_t> pref) : pref_(std::move(pref)) {}
  std::size_t compare_batch(const std::vector<json>& looks, const JudgeContext&) override {
    ++calls;
    std::size_t best = 0;
    for (std::size_t i = 1; i < looks.size(); ++i) {
      if (rank(looks[i].at("look_id")) < rank(looks[best].at("look_id"))) best = i;
    }
    return best;
  }
  std::size_t calls = 0;

 private:
  std::size_t rank(std::uint32_t id) const {
    return static_cast<std::size_t>(std::find(pref_.begin(), pref_.end(), id) - pref_.begin());
  }
  std::vector<std::uint32_t> pref_;
};

}  // namespace

TEST(Tournament, EightLooksBatchFourThreeCalls) {
  Fixture f;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint32_t> pref = {0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(pref.begin(), pref.end(), rng);
    RankingJudge judge(pref);
    GenerationBudget budget;
    budget.batch_size = 4;
    const auto r = tournament(looks_n(8), f.pools, judge, budget, f.ctx);
    EXPECT_EQ(r.judge_calls, 3u);
    EXPECT_EQ(judge.calls, 3u);
    EXPECT_EQ(r.rounds, 2u);
    EXPECT_EQ(r.winner.look_id, pref.front());
  }
}

TEST(Tournament, ScriptedWinnersAndLoneBatch) {
  Fixture f;
  QueueJudge judge;
  judge.winners = {2, 1, 0};
  GenerationBudget budget;
  budget.batch_size = 4;
  // 9 looks: batches {0..3}, {4..7}, {8}; then {2, 5, 8}.
  const auto r = tournament(looks_n(9), f.pools, judge, budget, f.ctx);
  EXPECT_EQ(r.judge_calls, 3u);
  ASSERT_EQ(judge.batches.size(), 3u);
  EXPECT_EQ(judge.batches[2].size(), 3u);
  EXPECT_EQ(judge.batches[2][0].at("look_id"), 2);
  EXPECT_EQ(judge.batches[2][1].at("look_id"), 5);
  EXPECT_EQ(r.winner.look_id, 2u);

  QueueJudge unused;
  const auto one = tournament(looks_n(1), f.pools, unused, budget, f.ctx);
  EXPECT_EQ(one.judge_calls, 0u);
  EXPECT_TRUE(unused.batches.empty());
}

TEST(Tournament, OutOfRangeWinnerFallsBackToFirst) {
  Fixture f;
  QueueJudge judge;
  judge.winners = {17};
  GenerationBudget budget;
  const auto r = tournament(looks_n(3), f.pools, judge, budget, f.ctx);
  EXPECT_EQ(r.winner.look_id, 0u);
  EXPECT_TRUE(logged(f.log, "out of range"));
  EXPECT_THROW(tournament({}, f.pools, judge, budget, f.ctx), Error);
}

TEST(Documents, ReportAndBudgetJson) {
  const auto r = VerificationReport::from_json(
      json{{"verdict", "fail"}, {"issues", {{{"kind", "clipping"}, {"category_id", "hat"}}}}, {"edits", {{{"action", "remove"}, {"category_id", "hat"}}}}});
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.issues.at(0).category_id, "hat");
  EXPECT_EQ(VerificationReport::from_json(r.to_json()).to_json(), r.to_json());
  EXPECT_THROW(VerificationReport::from_json(json{{"verdict", "maybe"}}), Error);
  EXPECT_THROW(Edit::from_json(json{{"action", "swap"}, {"category_id", "hat"}}), Error);

  GenerationBudget b;
  EXPECT_EQ(GenerationBudget::from_json(b.to_json()).to_json(), b.to_json());
  EXPECT_THROW(GenerationBudget::from_json(json{{"batch_size", 1}}), Error);
}
