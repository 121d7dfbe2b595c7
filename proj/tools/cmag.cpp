// cmag: command-line driver for the retrieval and assembly pipeline.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cmag/commands.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string judge;
  std::string out;
  std::string ablate = "all";
};

cmag::RunConfig resolve_config(const Options& opt) {
  cmag::RunConfig cfg;
  try {
    if (!opt.config.empty()) cfg = cmag::RunConfig::load(opt.config);
    cfg.apply_env();
  } catch (const cmag::Error& e) {
    throw cmag::StageError("config", e.code(), e.what());
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.judge.empty()) cfg.judge = opt.judge;
  if (!opt.out.empty()) cfg.paths.out_dir = opt.out;
  return cfg;
}

int report(const cmag::StageError& e) {
  std::cerr << e.to_json().dump(2) << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-scaffolded asset retrieval and avatar assembly"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config, "Run config JSON");
  app.add_option("--seed", opt.seed, "Override the config seed");
  app.add_option("--judge", opt.judge, "heuristic | scripted:<path> | http:<url>");
  app.add_option("--out", opt.out, "Output directory");

  auto* ingest = app.add_subcommand("ingest", "Validate and normalize the catalog");
  auto* build = app.add_subcommand("build-index", "Write per-category indices and subspaces");
  auto* route = app.add_subcommand("route", "Produce the routing plan");
  auto* retrieve = app.add_subcommand("retrieve", "Build candidate pools");
  auto* assemble = app.add_subcommand("assemble", "Assemble, refine and select the final look");
  auto* run = app.add_subcommand("run", "build-index, route, retrieve and assemble in sequence");
  auto* synth = app.add_subcommand("synth", "Write a synthetic world with planted ground truth");
  auto* eval = app.add_subcommand("eval", "Run seeded ablations on synthetic worlds");
  eval->add_option("--ablate", opt.ablate, "none | suppression | router | scaffold | all")
      ->check(CLI::IsMember({"none", "suppression", "router", "scaffold", "all"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const cmag::RunConfig cfg = resolve_config(opt);

    if (ingest->parsed()) {
      const auto stats = cmag::cmd_ingest(cfg);
      std::cout << "ingested " << stats.accepted() << " assets, rejected " << stats.rejected_records.size() << '\n';
    } else if (build->parsed()) {
      cmag::cmd_build_index(cfg);
      std::cout << "indices written to " << cfg.paths.index_dir.string() << '\n';
    } else if (route->parsed()) {
      const auto plan = cmag::cmd_route(cfg);
      std::cout << "routed " << plan.target_categories.size() << " categories\n";
    } else if (retrieve->parsed()) {
      const auto r = cmag::cmd_retrieve(cfg);
      std::cout << "pools for " << r.pools.size() << " categories";
      if (!r.warnings.empty()) std::cout << ", " << r.warnings.size() << " warning(s)";
      std::cout << '\n';
    } else if (assemble->parsed() || run->parsed()) {
      if (run->parsed()) {
        cmag::cmd_build_index(cfg);
        cmag::cmd_route(cfg);
        cmag::cmd_retrieve(cfg);
      }
      const auto doc = cmag::cmd_assemble(cfg);
      std::cout << (cfg.paths.out_dir / "look.json").string() << '\n';
      for (const auto& [cat, a] : doc.at("assets").items()) {
        std::cout << "  " << cat << ": " << a.at("asset_id").get<std::string>() << '\n';
      }
    } else if (synth->parsed()) {
      const auto world = cmag::cmd_synth(cfg);
      std::cout << "synthetic world in " << cfg.paths.out_dir.string() << "; next: cmag run --config "
                << (cfg.paths.out_dir / "config.json").string() << '\n';
      (void)world;
    } else if (eval->parsed()) {
      std::vector<cmag::Ablation> ablations;
      if (opt.ablate == "all") {
        ablations = {cmag::Ablation::kNone, cmag::Ablation::kSuppression, cmag::Ablation::kRouter, cmag::Ablation::kScaffold};
      } else {
        ablations = {*cmag::parse_ablation(opt.ablate)};
      }
      std::cout << cmag::format_metrics_table(cmag::cmd_eval(cfg, ablations));
    }
  } catch (const cmag::StageError& e) {
    return report(e);
  }
  return 0;
}
