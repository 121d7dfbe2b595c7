#include <gtest/gtest.h>

#include <sstream>

#include "cmag/error.hpp"
#include "cmag/synth.hpp"
#include "oracles.hpp"

using namespace cmag;

namespace {

SynthSpec three(std::uint64_t seed, double sigma) {
  SynthSpec spec;
  spec.d = 64;
  spec.categories = {{"a", 4, 50}, {"b", 4, 50}, {"c", 4, 50}};
  spec.noise_sigma = sigma;
  spec.seed = seed;
  return spec;
}

double worst_recovery_angle(const SynthSpec& spec) {
  const auto synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, synth_taxonomy(spec));
  double worst = 0.0;
  for (const auto& c : spec.categories) {
    std::vector<EmbeddingVector> rows;
    for (const auto& a : catalog.assets_of(c.category_id)) rows.push_back(a.embedding);
    const auto s = compute_category_subspace(c.category_id, rows, RankPolicy::fixed(c.rank));
    worst = std::max(worst, oracle::max_principal_angle(s.basis, synth.bases.at(c.category_id)));
  }
  return worst;
}

SubspaceMap subspaces_of(const Catalog& catalog, const SynthSpec& spec) {
  SubspaceMap out;
  for (const auto& c : spec.categories) {
    std::vector<EmbeddingVector> rows;
    for (const auto& a : catalog.assets_of(c.category_id)) rows.push_back(a.embedding);
    out.emplace(c.category_id, compute_category_subspace(c.category_id, rows, RankPolicy::fixed(c.rank)));
  }
  return out;
}

ErrorCode code_of(const SynthSpec& spec) {
  try {
    spec.validate();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIoError;
}

}  // namespace

TEST(SynthCatalog, NoiselessRecoveryIsExact) {
  EXPECT_LE(worst_recovery_angle(three(1, 0.0)), 1e-4);
}

TEST(SynthCatalog, PlantedBasesAreOrthonormalAndSeparated) {
  const auto synth = generate_catalog(three(2, 0.0));
  for (const auto& [id, b] : synth.bases) {
    EXPECT_TRUE((b.transpose() * b).isIdentity(1e-10)) << id;
  }
  EXPECT_LE((synth.bases.at("a").transpose() * synth.bases.at("b")).norm(), 1e-10);
  for (const auto& a : synth.assets) {
    EXPECT_NEAR(norm(a.embedding), 1.0, 1e-6);
    const auto& b = synth.bases.at(a.category_id);
    const Eigen::VectorXd v = oracle::to_eigen(a.embedding);
    EXPECT_NEAR((b * (b.transpose() * v) - v).norm(), 0.0, 1e-6);
  }
}

TEST(SynthCatalog, RecoveryDegradesWithNoise) {
  const std::vector<double> sigmas = {0.0, 0.05, 0.1, 0.2, 0.3};
  std::vector<double> mean(sigmas.size(), 0.0);
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) mean[i] += worst_recovery_angle(three(seed, sigmas[i])) / 20.0;
  }
  for (std::size_t i = 1; i < sigmas.size(); ++i) EXPECT_GT(mean[i], mean[i - 1]) << "sigma " << sigmas[i];
  EXPECT_LE(mean[0], 1e-4);
}

TEST(SynthCatalog, InterferenceTiltsSpans) {
  SynthSpec spec = three(3, 0.0);
  spec.interference = {{"a", "b", 0.6}};
  const auto synth = generate_catalog(spec);
  const Eigen::MatrixXd& a = synth.bases.at("a");
  const Eigen::MatrixXd& b = synth.bases.at("b");
  EXPECT_TRUE((b.transpose() * b).isIdentity(1e-10));
  // Largest cosine between the spans is the overlap coefficient.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
  EXPECT_NEAR(svd.singularValues()(0), 0.6, 1e-9);
  EXPECT_LE((a.transpose() * synth.bases.at("c")).norm(), 1e-10);
}

TEST(SynthCatalog, InfeasibleSpecs) {
  SynthSpec spec = three(1, 0.0);
  spec.d = 10;
  EXPECT_EQ(code_of(spec), ErrorCode::kInfeasibleSpec);
  spec.interference = {{"a", "b", 0.3}};
  EXPECT_NO_THROW(spec.validate());
  EXPECT_NO_THROW(generate_catalog(spec));

  spec = three(1, 0.0);
  spec.categories[0].rank = 0;
  EXPECT_EQ(code_of(spec), ErrorCode::kInfeasibleSpec);
  spec = three(1, 0.0);
  spec.categories[1].rank = 65;
  EXPECT_EQ(code_of(spec), ErrorCode::kInfeasibleSpec);
  spec = three(1, 0.0);
  spec.interference = {{"a", "zz", 0.3}};
  EXPECT_EQ(code_of(spec), ErrorCode::kInvalidArgument);
  spec.interference = {{"a", "b", 1.5}};
  EXPECT_EQ(code_of(spec), ErrorCode::kInvalidArgument);
  spec = three(1, -0.1);
  EXPECT_EQ(code_of(spec), ErrorCode::kInvalidArgument);
  spec = three(1, 0.0);
  spec.categories[2].category_id = "a";
  EXPECT_EQ(code_of(spec), ErrorCode::kInvalidArgument);
}

TEST(SynthCatalog, SeedDeterminesBytes) {
  auto bytes = [](std::uint64_t seed) {
    SynthSpec spec = three(seed, 0.1);
    spec.bundle_category = "a";
    std::ostringstream out;
    write_catalog_jsonl(generate_catalog(spec).assets, out);
    return out.str();
  };
  EXPECT_EQ(bytes(9), bytes(9));
  EXPECT_NE(bytes(9), bytes(10));
}

TEST(SynthCatalog, BundlesPairAssets) {
  SynthSpec spec = three(4, 0.0);
  spec.bundle_category = "b";
  const auto synth = generate_catalog(spec);
  std::map<std::string, int> per_bundle;
  for (const auto& a : synth.assets) {
    if (a.category_id == "b") {
      ASSERT_TRUE(a.bundle_id.has_value());
      ++per_bundle[*a.bundle_id];
    } else {
      EXPECT_FALSE(a.bundle_id.has_value());
    }
  }
  EXPECT_EQ(per_bundle.size(), 25u);
  for (const auto& [_, n] : per_bundle) EXPECT_EQ(n, 2);
}

TEST(Scenario, PropertiesHoldAtDefaultLambda) {
  SynthSpec spec = three(23, 0.05);
  spec.interference = {{"a", "b", 0.6}};
  const auto synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, synth_taxonomy(spec));
  const auto subspaces = subspaces_of(catalog, spec);
  ScenarioOptions opt;
  opt.target_category = "b";
  opt.seed = 23;
  const auto truth = generate_interference_scenario(catalog, subspaces, opt);
  EXPECT_EQ(truth.lambda, 1.5);
  EXPECT_GE(truth.attempts, 1u);

  auto top1 = [&](const EmbeddingVector& q) { return brute_force_rank(catalog, "b", q, 1).at(0); };
  const std::vector<CategorySubspace> others = {subspaces.at("a"), subspaces.at("c")};
  EXPECT_EQ(top1(fuse(truth.p_c, truth.t_c, 0.7)), truth.target_asset_id);
  EXPECT_EQ(top1(fuse(normalize(suppress(truth.g, others)), truth.t_c, 0.7)), truth.target_asset_id);
  EXPECT_NE(top1(fuse(truth.g, truth.t_c, 0.7)), truth.target_asset_id);

  // The interference component lies in the interferer's span.
  const Eigen::MatrixXd& bi = subspaces.at(truth.interfering_category).basis;
  const Eigen::VectorXd g = oracle::to_eigen(truth.g);
  const auto doc = truth.to_json();
  EXPECT_EQ(doc.at("target_asset_id"), truth.target_asset_id);
  EXPECT_EQ(doc.at("g").size(), 64u);
  EXPECT_GT((bi.transpose() * g).norm(), 0.5);
}

TEST(Scenario, ZeroLambdaMeansNoInterference) {
  SynthSpec spec = three(5, 0.05);
  spec.interference = {{"a", "b", 0.6}};
  const auto synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, synth_taxonomy(spec));
  const auto subspaces = subspaces_of(catalog, spec);
  ScenarioOptions opt;
  opt.target_category = "b";
  opt.seed = 5;
  opt.lambda = 0.0;
  const auto truth = generate_interference_scenario(catalog, subspaces, opt);
  EXPECT_EQ(brute_force_rank(catalog, "b", fuse(truth.g, truth.t_c, 0.7), 1).at(0), truth.target_asset_id);
  EXPECT_NEAR(cosine(truth.g, catalog.find(truth.target_asset_id)->embedding), 1.0, 1e-6);
}

TEST(Scenario, NeedsTwoCategories) {
  SynthSpec spec;
  spec.d = 16;
  spec.categories = {{"solo", 4, 20}};
  spec.seed = 1;
  const auto synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, synth_taxonomy(spec));
  const auto subspaces = subspaces_of(catalog, spec);
  ScenarioOptions opt;
  opt.target_category = "solo";
  try {
    generate_interference_scenario(catalog, subspaces, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Scenario, ImpossibleRequestsFail) {
  SynthSpec spec = three(6, 0.05);
  const auto synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, synth_taxonomy(spec));
  const auto subspaces = subspaces_of(catalog, spec);
  ScenarioOptions opt;
  opt.target_category = "b";
  opt.interfering_category = "b";
  EXPECT_THROW(generate_interference_scenario(catalog, subspaces, opt), Error);

  // With no attempts allowed nothing can be accepted.
  opt.interfering_category.reset();
  opt.max_retries = 0;
  try {
    generate_interference_scenario(catalog, subspaces, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kScenarioConstructionFailed);
  }
}

TEST(BruteForce, EdgeCases) {
  SynthSpec spec = three(7, 0.1);
  spec.categories[2].n_assets = 0;
  const auto synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, synth_taxonomy(spec));
  const std::vector<double> q(64, 1.0);
  EXPECT_TRUE(brute_force_rank(catalog, "c", q, 5).empty());
  EXPECT_EQ(brute_force_rank(catalog, "a", q, 500).size(), 50u);
  EXPECT_TRUE(brute_force_rank(catalog, "a", q, 0).empty());
  EXPECT_THROW(brute_force_rank(catalog, "a", std::vector<double>(64, 0.0), 1), Error);
  EXPECT_THROW(brute_force_rank(catalog, "a", std::vector<double>(3, 1.0), 1), Error);
}

TEST(World, PlantsEveryRoutedCategory) {
  WorldOptions opt;
  opt.seed = 42;
  const SynthWorld w = generate_world(opt);
  EXPECT_TRUE(w.evidence.frozen());
  EXPECT_EQ(w.planted.size(), 4u);
  EXPECT_TRUE(w.planted.count("body"));
  EXPECT_TRUE(w.planted.count("pants"));
  EXPECT_TRUE(w.planted.count("back_accessory"));
  EXPECT_TRUE(w.planted.count("jacket") != w.planted.count("sweater"));
  for (const auto& c : w.taxonomy.categories) EXPECT_NE(w.evidence.text_prior(c), nullptr) << c;
  EXPECT_EQ(w.evidence.part("body")->status, PartStatus::kFailed);
  EXPECT_EQ(w.truth_json().at("schema"), "cmag.synth_truth");
  EXPECT_EQ(w.assets.size(), 7u * 60u);

  const SynthWorld again = generate_world(opt);
  EXPECT_EQ(again.evidence.to_json(), w.evidence.to_json());
  EXPECT_EQ(again.truth_json(), w.truth_json());
}
