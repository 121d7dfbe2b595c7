#include "cmag/commands.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cmag/judge.hpp"
#include "cmag/synth.hpp"

namespace cmag {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Run config
// ---------------------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

std::string resolve_mode(const std::string& mode, const fs::path& base) {
  if (mode.rfind("scripted:", 0) == 0) return "scripted:" + resolve(mode.substr(9), base).string();
  return mode;
}

json policy_to_json(const RankPolicy& p) {
  if (p.kind == RankPolicy::Kind::kFixed) return {{"policy", "fixed"}, {"rank", p.fixed_rank}, {"center", p.center}};
  return {{"policy", "variance"}, {"tau", p.tau}, {"max_rank", p.max_rank}, {"center", p.center}};
}

RankPolicy policy_from_json(const json& doc) {
  RankPolicy p;
  const auto kind = doc.value("policy", std::string("variance"));
  if (kind == "fixed") {
    p = RankPolicy::fixed(doc.at("rank").get<std::size_t>());
  } else if (kind == "variance") {
    p = RankPolicy::variance(doc.value("tau", p.tau), doc.value("max_rank", p.max_rank));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown subspace policy '" + kind + "'");
  }
  p.center = doc.value("center", false);
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// Runs `body`, re-raising any failure as a StageError tagged with `stage`.
template <class F>
auto staged(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.what());
  } catch (const json::exception& e) {
    throw StageError(stage, ErrorCode::kMalformedRecord, e.what());
  } catch (const fs::filesystem_error& e) {
    throw StageError(stage, ErrorCode::kIoError, e.what());
  }
}

Taxonomy load_taxonomy(const RunConfig& cfg) {
  Taxonomy t = Taxonomy::load(cfg.paths.taxonomy);
  const auto violations = validate_taxonomy(t);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(ErrorCode::kInvalidTaxonomy, v.field + " " + v.id + ": " + v.message + " (" +
                                                 std::to_string(violations.size()) + " violation(s))");
  }
  return t;
}

Catalog load_catalog(const RunConfig& cfg, const Taxonomy& taxonomy, CatalogStats* stats = nullptr) {
  Catalog catalog(taxonomy);
  CatalogStats s = catalog.ingest(cfg.paths.catalog);
  if (stats != nullptr) *stats = std::move(s);
  return catalog;
}

std::unique_ptr<JudgeClient> make_judge(const RunConfig& cfg, std::unique_ptr<Transport>& transport) {
  if (cfg.judge == "heuristic") return std::make_unique<HeuristicJudge>();
  transport = make_transport(cfg.judge, cfg.judge_timeout);
  return std::make_unique<TransportJudge>(*transport);
}

json stamp(json doc, const RunConfig& cfg) {
  doc["config_hash"] = cfg.hash();
  return doc;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc, const fs::path& base_dir) {
  RunConfig cfg;
  try {
    if (doc.contains("paths")) {
      const auto& p = doc.at("paths");
      cfg.paths.catalog = p.value("catalog", std::string());
      cfg.paths.taxonomy = p.value("taxonomy", std::string());
      cfg.paths.evidence = p.value("evidence", std::string());
      cfg.paths.index_dir = p.value("index_dir", cfg.paths.index_dir.string());
      cfg.paths.out_dir = p.value("out_dir", cfg.paths.out_dir.string());
    }
    for (fs::path* p : {&cfg.paths.catalog, &cfg.paths.taxonomy, &cfg.paths.evidence, &cfg.paths.index_dir,
                        &cfg.paths.out_dir}) {
      *p = resolve(*p, base_dir);
    }
    if (doc.contains("retrieval")) cfg.retrieval = RetrievalConfig::from_json(doc.at("retrieval"));
    if (doc.contains("budget")) cfg.budget = GenerationBudget::from_json(doc.at("budget"));
    if (doc.contains("subspace")) cfg.subspace_policy = policy_from_json(doc.at("subspace"));
    cfg.judge = resolve_mode(doc.value("judge", cfg.judge), base_dir);
    cfg.advisor = resolve_mode(doc.value("advisor", cfg.advisor), base_dir);
    cfg.judge_timeout = std::chrono::milliseconds(doc.value("judge_timeout_ms", cfg.judge_timeout.count()));
    cfg.filter_passthrough = doc.value("filter_passthrough", cfg.filter_passthrough);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.eval_scenarios = doc.value("eval_scenarios", cfg.eval_scenarios);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("run config: ") + e.what());
  }
  cfg.retrieval.validate();
  cfg.budget.validate();
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) { return from_json(read_json(path), path.parent_path()); }

json RunConfig::to_json() const {
  return {{"schema", "cmag.run_config"},
          {"version", 1},
          {"paths",
           {{"catalog", paths.catalog.generic_string()},
            {"taxonomy", paths.taxonomy.generic_string()},
            {"evidence", paths.evidence.generic_string()},
            {"index_dir", paths.index_dir.generic_string()},
            {"out_dir", paths.out_dir.generic_string()}}},
          {"retrieval", retrieval.to_json()},
          {"budget", budget.to_json()},
          {"subspace", policy_to_json(subspace_policy)},
          {"judge", judge},
          {"advisor", advisor},
          {"judge_timeout_ms", judge_timeout.count()},
          {"filter_passthrough", filter_passthrough},
          {"seed", seed},
          {"eval_scenarios", eval_scenarios}};
}

void RunConfig::apply_env() {
  if (const char* url = std::getenv("CMAG_JUDGE_URL"); url != nullptr && *url != '\0') {
    judge = std::string(url).rfind("http:", 0) == 0 ? std::string(url) : "http://" + std::string(url);
  }
  if (const char* ms = std::getenv("CMAG_JUDGE_TIMEOUT_MS"); ms != nullptr && *ms != '\0') {
    char* end = nullptr;
    const long long v = std::strtoll(ms, &end, 10);
    if (end == ms || *end != '\0' || v <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "CMAG_JUDGE_TIMEOUT_MS must be a positive integer");
    }
    judge_timeout = std::chrono::milliseconds(v);
  }
}

std::string RunConfig::hash() const {
  const std::string canonical = to_json().dump();
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(canonical.data()),
                          static_cast<uInt>(canonical.size()));
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

namespace {

// Error::what() already leads with the code name; keep it once.
std::string strip_code(ErrorCode code, const std::string& message) {
  const std::string prefix = std::string(error_code_name(code)) + ": ";
  return message.rfind(prefix, 0) == 0 ? message.substr(prefix.size()) : message;
}

}  // namespace

StageError::StageError(std::string stage, ErrorCode code, const std::string& message)
    : std::runtime_error(stage + "." + std::string(error_code_name(code)) + ": " + strip_code(code, message)),
      stage_(std::move(stage)),
      code_(code) {}

std::string StageError::qualified_code() const { return stage_ + "." + std::string(error_code_name(code_)); }

json StageError::to_json() const {
  return {{"schema", "cmag.error"},
          {"version", 1},
          {"stage", stage_},
          {"code", qualified_code()},
          {"message", what()}};
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

IndexMap build_indices(const Catalog& catalog) {
  IndexMap out;
  for (const auto& cat : catalog.taxonomy().categories) {
    out.emplace(cat, build_index(cat, catalog.assets_of(cat), catalog.dimension()));
  }
  return out;
}

SubspaceMap build_subspaces(const Catalog& catalog, const RankPolicy& policy) {
  SubspaceMap out;
  for (const auto& cat : catalog.taxonomy().categories) {
    const auto& assets = catalog.assets_of(cat);
    if (assets.empty()) continue;
    std::vector<EmbeddingVector> rows;
    rows.reserve(assets.size());
    for (const auto& a : assets) rows.push_back(a.embedding);
    out.emplace(cat, compute_category_subspace(cat, rows, policy));
  }
  return out;
}

json subspaces_to_json(const SubspaceMap& subspaces) {
  json cats = json::object();
  for (const auto& [id, s] : subspaces) {
    json cols = json::array();
    for (Eigen::Index c = 0; c < s.basis.cols(); ++c) {
      cols.push_back(std::vector<double>(s.basis.col(c).data(), s.basis.col(c).data() + s.basis.rows()));
    }
    cats[id] = {{"dim", s.dim()}, {"singular_values", s.singular_values}, {"basis_columns", cols}};
  }
  return {{"schema", "cmag.subspaces"}, {"version", 1}, {"categories", cats}};
}

SubspaceMap subspaces_from_json(const json& doc) {
  if (doc.value("version", 0) != 1) throw Error(ErrorCode::kVersionMismatch, "subspaces document version");
  SubspaceMap out;
  for (const auto& [id, s] : doc.at("categories").items()) {
    CategorySubspace sub;
    sub.category_id = id;
    const auto dim = s.at("dim").get<Eigen::Index>();
    const auto& cols = s.at("basis_columns");
    sub.basis.resize(dim, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto col = cols[c].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(col.size()) != dim) throw Error(ErrorCode::kDimensionMismatch, "subspace " + id);
      for (Eigen::Index i = 0; i < dim; ++i) sub.basis(i, static_cast<Eigen::Index>(c)) = col[static_cast<std::size_t>(i)];
    }
    sub.singular_values = s.at("singular_values").get<std::vector<double>>();
    out.emplace(id, std::move(sub));
  }
  return out;
}

RetrievalRun retrieve_all(const RoutingPlan& plan, const EvidenceStore& store, const Taxonomy& taxonomy,
                          const RetrievalConfig& cfg, const IndexMap& indices, const SubspaceMap& subspaces) {
  RetrievalRun run;
  for (const auto& cat : plan.target_categories) {
    CategoryRetrieval r = retrieve_category(cat, plan, store, taxonomy, cfg, indices, subspaces);
    run.pools.emplace(cat, std::move(r.pool));
    run.warnings.insert(run.warnings.end(), r.warnings.begin(), r.warnings.end());
  }
  return run;
}

std::map<std::string, std::string> bundle_ids_of(const Catalog& catalog) {
  std::map<std::string, std::string> out;
  const auto& cat = catalog.taxonomy().bundle_category;
  if (cat.empty() || !catalog.taxonomy().has_category(cat)) return out;
  for (const auto& a : catalog.assets_of(cat)) {
    if (a.bundle_id) out[a.asset_id] = *a.bundle_id;
  }
  return out;
}

AssemblyRun assemble_all(const std::map<std::string, CandidatePool>& pools, const RoutingPlan& plan,
                         const Taxonomy& taxonomy, const std::map<std::string, std::string>& bundle_ids,
                         JudgeClient& judge, const RunConfig& cfg) {
  AssemblyRun run;
  AssemblyContext ctx;
  ctx.taxonomy = &taxonomy;
  ctx.judge.prompt = plan.prompt;
  ctx.judge.concept_context = {{"categories", plan.target_categories}, {"queries", plan.queries}};
  ctx.bundle_ids = bundle_ids;
  ctx.log = &run.log;

  FilterResult filtered = filter_pools(pools, judge, cfg.retrieval, ctx, cfg.filter_passthrough);
  run.at_risk = filtered.at_risk;
  const AvatarLook base = assemble_initial(filtered.pools, judge, ctx);
  const auto bundles = rank_body_bundles(filtered.pools, ctx);
  GenerationResult generated = generate_candidates(base, filtered.pools, bundles, judge, cfg.budget, ctx);
  TournamentResult result = tournament(generated.looks, filtered.pools, judge, cfg.budget, ctx);
  run.winner = std::move(result.winner);
  run.candidates = std::move(generated.looks);
  run.tournament_calls = result.judge_calls;
  return run;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

CatalogStats cmd_ingest(const RunConfig& cfg) {
  return staged("ingest", [&] {
    const Taxonomy taxonomy = load_taxonomy(cfg);
    CatalogStats stats;
    load_catalog(cfg, taxonomy, &stats);
    json doc = stats.to_json();
    doc["schema"] = "cmag.ingest_report";
    doc["version"] = 1;
    write_json(cfg.paths.out_dir / "ingest_report.json", stamp(doc, cfg));
    return stats;
  });
}

void cmd_build_index(const RunConfig& cfg) {
  staged("build_index", [&] {
    const Taxonomy taxonomy = load_taxonomy(cfg);
    const Catalog catalog = load_catalog(cfg, taxonomy);
    fs::create_directories(cfg.paths.index_dir);
    for (const auto& [cat, index] : build_indices(catalog)) index.save(cfg.paths.index_dir / (cat + ".idx"));
    json doc = subspaces_to_json(build_subspaces(catalog, cfg.subspace_policy));
    doc["policy"] = policy_to_json(cfg.subspace_policy);
    write_json(cfg.paths.index_dir / "subspaces.json", stamp(doc, cfg));
  });
}

RoutingPlan cmd_route(const RunConfig& cfg) {
  return staged("route", [&] {
    const Taxonomy taxonomy = load_taxonomy(cfg);
    const EvidenceStore store = EvidenceStore::load(cfg.paths.evidence);
    if (!store.prompt()) throw Error(ErrorCode::kInvalidArgument, "evidence file has no prompt");

    std::unique_ptr<Transport> transport;
    std::unique_ptr<TransportAdvisor> advisor;
    if (!cfg.advisor.empty()) {
      transport = make_transport(cfg.advisor, cfg.judge_timeout);
      advisor = std::make_unique<TransportAdvisor>(*transport);
    }
    RoutingPlan plan = route(*store.prompt(), taxonomy, advisor.get());
    write_json(cfg.paths.out_dir / "routing_plan.json", stamp(plan.to_json(), cfg));
    return plan;
  });
}

RetrievalRun cmd_retrieve(const RunConfig& cfg) {
  return staged("retrieve", [&] {
    const Taxonomy taxonomy = load_taxonomy(cfg);
    const EvidenceStore store = EvidenceStore::load(cfg.paths.evidence);
    const RoutingPlan plan = RoutingPlan::from_json(read_json(cfg.paths.out_dir / "routing_plan.json"));
    IndexMap indices;
    for (const auto& cat : plan.target_categories) {
      indices.emplace(cat, CategoryIndex::load(cfg.paths.index_dir / (cat + ".idx")));
    }
    const SubspaceMap subspaces = subspaces_from_json(read_json(cfg.paths.index_dir / "subspaces.json"));

    RetrievalRun run = retrieve_all(plan, store, taxonomy, cfg.retrieval, indices, subspaces);
    json doc = pools_to_json(run.pools);
    doc["warnings"] = run.warnings;
    write_json(cfg.paths.out_dir / "pools.json", stamp(doc, cfg));
    return run;
  });
}

json cmd_assemble(const RunConfig& cfg) {
  return staged("assemble", [&] {
    const Taxonomy taxonomy = load_taxonomy(cfg);
    const Catalog catalog = load_catalog(cfg, taxonomy);
    const RoutingPlan plan = RoutingPlan::from_json(read_json(cfg.paths.out_dir / "routing_plan.json"));
    const auto pools = pools_from_json(read_json(cfg.paths.out_dir / "pools.json"));

    std::unique_ptr<Transport> transport;
    auto judge = make_judge(cfg, transport);
    const AssemblyRun run = assemble_all(pools, plan, taxonomy, bundle_ids_of(catalog), *judge, cfg);

    json assets = json::object();
    for (const auto& [cat, asset_id] : run.winner.selections) {
      const Candidate* c = pools.at(cat).find(asset_id);
      const Asset* a = catalog.find(asset_id);
      assets[cat] = {{"asset_id", asset_id},
                     {"score", c != nullptr ? c->score : 0.0},
                     {"source", c != nullptr ? std::string(candidate_source_name(c->source)) : std::string()},
                     {"title", a != nullptr ? a->title : std::string()}};
    }
    json candidates = json::array();
    for (const auto& look : run.candidates) candidates.push_back(look.to_json());

    json doc = {{"schema", "cmag.final_look"},
                {"version", 1},
                {"seed", cfg.seed},
                {"prompt", plan.prompt.to_json()},
                {"look", run.winner.to_json()},
                {"assets", assets},
                {"candidates", candidates},
                {"at_risk_categories", run.at_risk},
                {"tournament_judge_calls", run.tournament_calls},
                {"log", run.log}};
    doc = stamp(doc, cfg);
    write_json(cfg.paths.out_dir / "look.json", doc);
    return doc;
  });
}

RunConfig cmd_synth(const RunConfig& cfg) {
  return staged("synth", [&] {
    WorldOptions opt;
    opt.seed = cfg.seed;
    opt.retrieval = cfg.retrieval;
    opt.subspace_policy = cfg.subspace_policy;
    const SynthWorld world = generate_world(opt);

    const fs::path dir = cfg.paths.out_dir;
    fs::create_directories(dir);
    std::ostringstream catalog;
    write_catalog_jsonl(world.assets, catalog);
    write_text(dir / "catalog.jsonl", catalog.str());
    write_json(dir / "taxonomy.json", world.taxonomy.to_json());
    write_json(dir / "evidence.json", world.evidence.to_json());
    write_json(dir / "judge_script.json", world.judge_script);
    write_json(dir / "truth.json", world.truth_json());

    // Relative paths keep the directory relocatable.
    RunConfig run = cfg;
    run.paths = {"catalog.jsonl", "taxonomy.json", "evidence.json", "index", "results"};
    run.judge = "scripted:judge_script.json";
    run.advisor.clear();
    write_json(dir / "config.json", run.to_json());
    return RunConfig::load(dir / "config.json");
  });
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kSuppression: return "suppression";
    case Ablation::kRouter: return "router";
    case Ablation::kScaffold: return "scaffold";
  }
  return "none";
}

std::optional<Ablation> parse_ablation(std::string_view s) {
  for (Ablation a : {Ablation::kNone, Ablation::kSuppression, Ablation::kRouter, Ablation::kScaffold}) {
    if (ablation_name(a) == s) return a;
  }
  return std::nullopt;
}

json EvalMetrics::to_json() const {
  return {{"ablation", std::string(ablation_name(ablation))},
          {"scenarios", scenarios},
          {"top1_accuracy", top1_accuracy},
          {"pool_recall", pool_recall},
          {"look_accuracy", look_accuracy},
          {"category_coverage", category_coverage},
          {"mean_iterations", mean_iterations},
          {"assembly_failures", assembly_failures}};
}

namespace {

struct EvalWorld {
  SynthWorld world;
  IndexMap indices;
  SubspaceMap subspaces;
  std::map<std::string, std::string> bundle_ids;
};

std::vector<EvalWorld> make_eval_worlds(const RunConfig& cfg) {
  std::vector<EvalWorld> worlds;
  worlds.reserve(cfg.eval_scenarios);
  for (std::size_t i = 0; i < cfg.eval_scenarios; ++i) {
    WorldOptions opt;
    opt.seed = cfg.seed + i;
    opt.retrieval = cfg.retrieval;
    opt.subspace_policy = cfg.subspace_policy;
    EvalWorld w{generate_world(opt), {}, {}, {}};
    Catalog catalog(w.world.taxonomy);
    for (const auto& a : w.world.assets) catalog.add(a);
    w.indices = build_indices(catalog);
    w.subspaces = build_subspaces(catalog, cfg.subspace_policy);
    w.bundle_ids = bundle_ids_of(catalog);
    worlds.push_back(std::move(w));
  }
  return worlds;
}

EvalMetrics evaluate(const std::vector<EvalWorld>& worlds, const RunConfig& cfg, Ablation ablation) {
  RunConfig run = cfg;
  if (ablation == Ablation::kSuppression) run.retrieval.suppression = false;
  if (ablation == Ablation::kScaffold) run.retrieval.use_scaffold = false;

  EvalMetrics m;
  m.ablation = ablation;
  m.scenarios = worlds.size();
  if (worlds.empty()) return m;

  for (const auto& w : worlds) {
    const SynthWorld& world = w.world;
    const RoutingPlan plan = ablation == Ablation::kRouter ? route_single_guess(world.prompt, world.taxonomy)
                                                           : route(world.prompt, world.taxonomy);
    std::size_t covered = 0;
    for (const auto& [cat, _] : world.planted) covered += plan.target_categories.count(cat);
    m.category_coverage += static_cast<double>(covered) / static_cast<double>(world.planted.size());

    const RetrievalRun retrieved = retrieve_all(plan, world.evidence, world.taxonomy, run.retrieval, w.indices, w.subspaces);
    const std::string& target_cat = world.truth.target_category;
    const std::string& target = world.truth.target_asset_id;
    if (auto it = retrieved.pools.find(target_cat); it != retrieved.pools.end()) {
      const auto& cands = it->second.candidates;
      if (!cands.empty() && cands.front().asset_id == target) m.top1_accuracy += 1.0;
      if (it->second.contains(target)) m.pool_recall += 1.0;
    }

    HeuristicJudge judge;
    try {
      const AssemblyRun assembled = assemble_all(retrieved.pools, plan, world.taxonomy, w.bundle_ids, judge, run);
      auto sel = assembled.winner.selections.find(target_cat);
      if (sel != assembled.winner.selections.end() && sel->second == target) m.look_accuracy += 1.0;
      m.mean_iterations += static_cast<double>(assembled.winner.verifications);
    } catch (const Error&) {
      ++m.assembly_failures;
    }
  }
  const double n = static_cast<double>(worlds.size());
  m.top1_accuracy /= n;
  m.pool_recall /= n;
  m.look_accuracy /= n;
  m.category_coverage /= n;
  m.mean_iterations /= n;
  return m;
}

}  // namespace

EvalMetrics run_eval(const RunConfig& cfg, Ablation ablation) {
  return evaluate(make_eval_worlds(cfg), cfg, ablation);
}

std::string format_metrics_table(const std::vector<EvalMetrics>& rows) {
  std::string out = "ablation      n     top1   recall  look   coverage  iters  failures\n";
  for (const auto& m : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %4zu  %6.3f  %6.3f  %6.3f  %6.3f  %6.2f  %5zu\n",
                  std::string(ablation_name(m.ablation)).c_str(), m.scenarios, m.top1_accuracy, m.pool_recall,
                  m.look_accuracy, m.category_coverage, m.mean_iterations, m.assembly_failures);
    out += line;
  }
  return out;
}

std::vector<EvalMetrics> cmd_eval(const RunConfig& cfg, const std::vector<Ablation>& ablations) {
  return staged("eval", [&] {
    const auto worlds = make_eval_worlds(cfg);
    std::vector<EvalMetrics> rows;
    for (Ablation a : ablations) {
      rows.push_back(evaluate(worlds, cfg, a));
      json doc = {{"schema", "cmag.eval"}, {"version", 1}, {"seed", cfg.seed}, {"metrics", rows.back().to_json()}};
      write_json(cfg.paths.out_dir / ("eval_" + std::string(ablation_name(a)) + ".json"), stamp(doc, cfg));
    }
    return rows;
  });
}

}  // namespace cmag
