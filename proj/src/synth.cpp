#include "cmag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

namespace {

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::string numbered(const std::string& prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return prefix + "-" + buf;
}

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n01;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n01(rng);
  }
  return m;
}

Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

EmbeddingVector to_vec(const Eigen::VectorXd& v) { return EmbeddingVector(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Unit vector drawn uniformly from the column span of `basis`.
Eigen::VectorXd random_in_span(Rng& rng, const Eigen::MatrixXd& basis) {
  for (;;) {
    Eigen::VectorXd v = basis * gaussian(rng, basis.cols(), 1);
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

Eigen::VectorXd isotropic(Rng& rng, Eigen::Index d, double scale) {
  return gaussian(rng, d, 1) * (scale / std::sqrt(static_cast<double>(d)));
}

const std::string& top1(const Catalog& catalog, const std::string& category, std::span<const double> q,
                        std::vector<std::string>& scratch) {
  scratch = brute_force_rank(catalog, category, q, 1);
  return scratch.front();
}

}  // namespace

void SynthSpec::validate() const {
  if (d == 0) throw Error(ErrorCode::kInvalidArgument, "synth: d must be positive");
  if (categories.empty()) throw Error(ErrorCode::kInvalidArgument, "synth: no categories");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "synth: noise_sigma must be >= 0");
  std::set<std::string> ids;
  std::size_t rank_sum = 0;
  for (const auto& c : categories) {
    if (c.category_id.empty() || !ids.insert(c.category_id).second) {
      throw Error(ErrorCode::kInvalidArgument, "synth: duplicate or empty category id '" + c.category_id + "'");
    }
    if (c.rank == 0 || c.rank > d) throw Error(ErrorCode::kInfeasibleSpec, c.category_id + ": rank outside [1, d]");
    rank_sum += c.rank;
  }
  for (const auto& i : interference) {
    if (!ids.count(i.from) || !ids.count(i.to) || i.from == i.to) {
      throw Error(ErrorCode::kInvalidArgument, "synth: bad interference pair " + i.from + " -> " + i.to);
    }
    if (!(i.coef >= 0.0 && i.coef <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "synth: interference outside [0, 1]");
  }
  const bool overlap = std::any_of(interference.begin(), interference.end(), [](const auto& i) { return i.coef > 0.0; });
  if (rank_sum > d && !overlap) {
    throw Error(ErrorCode::kInfeasibleSpec,
                "rank sum " + std::to_string(rank_sum) + " exceeds d=" + std::to_string(d) + " without overlap");
  }
  if (!bundle_category.empty() && !ids.count(bundle_category)) {
    throw Error(ErrorCode::kInvalidArgument, "synth: bundle category " + bundle_category + " not declared");
  }
}

SynthCatalog generate_catalog(const SynthSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, 0);
  const auto d = static_cast<Eigen::Index>(spec.d);

  std::size_t rank_sum = 0;
  for (const auto& c : spec.categories) rank_sum += c.rank;

  // Untilted bases: mutually orthogonal when they fit, independent otherwise.
  std::map<std::string, Eigen::MatrixXd> fresh;
  if (rank_sum <= spec.d) {
    const Eigen::MatrixXd all = orthonormal_columns(gaussian(rng, d, static_cast<Eigen::Index>(rank_sum)));
    Eigen::Index col = 0;
    for (const auto& c : spec.categories) {
      const auto r = static_cast<Eigen::Index>(c.rank);
      fresh[c.category_id] = all.middleCols(col, r);
      col += r;
    }
  } else {
    for (const auto& c : spec.categories) {
      fresh[c.category_id] = orthonormal_columns(gaussian(rng, d, static_cast<Eigen::Index>(c.rank)));
    }
  }

  SynthCatalog out;
  out.bases = fresh;
  std::set<std::string> tilted;
  for (const auto& i : spec.interference) {
    Eigen::MatrixXd& to = out.bases[i.to];
    const Eigen::MatrixXd& from = fresh[i.from];
    const Eigen::Index shared = std::min(to.cols(), from.cols());
    const double keep = std::sqrt(1.0 - i.coef * i.coef);
    for (Eigen::Index k = 0; k < shared; ++k) to.col(k) = keep * to.col(k) + i.coef * from.col(k);
    tilted.insert(i.to);
  }
  for (const auto& id : tilted) out.bases[id] = orthonormal_columns(out.bases[id]);

  for (const auto& c : spec.categories) {
    const Eigen::MatrixXd& basis = out.bases[c.category_id];
    const bool bundled = c.category_id == spec.bundle_category;
    for (std::size_t j = 0; j < c.n_assets; ++j) {
      Eigen::VectorXd x = random_in_span(rng, basis);
      if (spec.noise_sigma > 0.0) x += isotropic(rng, d, spec.noise_sigma);
      Asset a;
      a.asset_id = numbered(c.category_id, j);
      a.category_id = c.category_id;
      a.embedding = normalize_for_storage(to_vec(x));
      a.title = "synthetic " + c.category_id + " " + std::to_string(j);
      if (bundled) a.bundle_id = numbered("bundle", j / 2);
      out.assets.push_back(std::move(a));
    }
  }
  return out;
}

Taxonomy synth_taxonomy(const SynthSpec& spec) {
  Taxonomy t;
  for (const auto& c : spec.categories) t.categories.insert(c.category_id);
  t.bundle_category = spec.bundle_category;
  return t;
}

Catalog make_catalog(const SynthCatalog& synth, const Taxonomy& taxonomy) {
  Catalog catalog(taxonomy);
  for (const auto& a : synth.assets) catalog.add(a);
  return catalog;
}

void write_catalog_jsonl(const std::vector<Asset>& assets, std::ostream& out) {
  for (const auto& a : assets) out << a.to_json().dump() << '\n';
}

std::vector<std::string> brute_force_rank(const Catalog& catalog, const std::string& category_id,
                                          std::span<const double> query, std::size_t k) {
  const auto& assets = catalog.assets_of(category_id);
  if (assets.empty()) return {};
  const EmbeddingVector q = normalize(query);

  std::vector<std::pair<double, const std::string*>> scored;
  scored.reserve(assets.size());
  for (const auto& a : assets) {
    if (a.embedding.size() != q.size()) throw Error(ErrorCode::kDimensionMismatch, "brute_force_rank");
    double acc = 0.0;
    double sq = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      acc += a.embedding[j] * q[j];
      sq += a.embedding[j] * a.embedding[j];
    }
    const double n = std::sqrt(sq);
    scored.emplace_back(n > 0.0 ? std::clamp(acc / n, -1.0, 1.0) : 0.0, &a.asset_id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return *x.second < *y.second;
  });

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) ids.push_back(*scored[i].second);
  return ids;
}

json PlantedTruth::to_json() const {
  return {{"target_category", target_category},
          {"interfering_category", interfering_category},
          {"target_asset_id", target_asset_id},
          {"lambda", lambda},
          {"attempts", attempts},
          {"g", g},
          {"p_c", p_c},
          {"t_c", t_c}};
}

PlantedTruth generate_interference_scenario(const Catalog& catalog, const SubspaceMap& subspaces,
                                            const ScenarioOptions& options) {
  const std::string& target = options.target_category;
  if (catalog.taxonomy().categories.size() < 2 || subspaces.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "interference scenario needs at least two categories");
  }
  auto target_space = subspaces.find(target);
  if (target_space == subspaces.end()) throw Error(ErrorCode::kUnknownCategory, "no subspace for " + target);
  const auto& assets = catalog.assets_of(target);
  if (assets.empty()) throw Error(ErrorCode::kEmptyCategory, target);

  std::vector<CategorySubspace> others;
  for (const auto& [id, s] : subspaces) {
    if (id != target) others.push_back(s);
  }

  // Default interferer: the category whose span overlaps the target most.
  std::string interferer;
  if (options.interfering_category) {
    interferer = *options.interfering_category;
    if (interferer == target || !subspaces.count(interferer)) {
      throw Error(ErrorCode::kInvalidArgument, "bad interfering category " + interferer);
    }
  } else {
    double best = -1.0;
    for (const auto& s : others) {
      const double overlap = (s.basis.transpose() * target_space->second.basis).norm();
      if (overlap > best) {
        best = overlap;
        interferer = s.category_id;
      }
    }
  }
  const Eigen::MatrixXd& b_target = target_space->second.basis;
  const Eigen::MatrixXd& b_other = subspaces.at(interferer).basis;
  const auto d = static_cast<Eigen::Index>(catalog.dimension());

  Rng rng = make_rng(options.seed, 1);
  std::uniform_int_distribution<std::size_t> pick(0, assets.size() - 1);
  std::vector<std::string> scratch;

  for (std::size_t attempt = 1; attempt <= options.max_retries; ++attempt) {
    const Asset& a_t = assets[pick(rng)];
    const Asset& a_j = assets[pick(rng)];
    const Eigen::VectorXd v_t = to_eigen(a_t.embedding);

    // Interference: the competitor's footprint inside the other category.
    Eigen::VectorXd v_i = b_other * (b_other.transpose() * to_eigen(a_j.embedding));
    if (&a_j == &a_t || v_i.norm() < 1e-6) v_i = random_in_span(rng, b_other);
    v_i.normalize();

    const Eigen::VectorXd mix = v_t + options.lambda * v_i;
    Eigen::VectorXd prior = b_target * (b_target.transpose() * v_t);
    prior += options.text_noise * random_in_span(rng, b_target);
    const Eigen::VectorXd part = v_t + isotropic(rng, d, options.part_noise);
    if (mix.norm() <= 1e-9 || prior.norm() <= 1e-9 || part.norm() <= 1e-9) continue;

    PlantedTruth truth;
    truth.target_category = target;
    truth.interfering_category = interferer;
    truth.target_asset_id = a_t.asset_id;
    truth.lambda = options.lambda;
    truth.attempts = attempt;
    truth.g = normalize_for_storage(to_vec(mix));
    truth.t_c = normalize_for_storage(to_vec(prior));
    truth.p_c = normalize_for_storage(to_vec(part));

    if (top1(catalog, target, fuse(truth.p_c, truth.t_c, options.alpha), scratch) != a_t.asset_id) continue;

    const EmbeddingVector r = suppress(truth.g, others);
    if (norm(r) <= 1e-6) continue;
    if (top1(catalog, target, fuse(normalize(r), truth.t_c, options.beta), scratch) != a_t.asset_id) continue;

    const bool plain_hit =
        top1(catalog, target, fuse(normalize(truth.g), truth.t_c, options.beta), scratch) == a_t.asset_id;
    if (options.lambda > 0.0 ? plain_hit : !plain_hit) continue;
    return truth;
  }
  throw Error(ErrorCode::kScenarioConstructionFailed,
              target + ": no valid scenario in " + std::to_string(options.max_retries) + " attempts");
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

Taxonomy default_taxonomy() {
  static const json doc = json::parse(R"({
    "categories": ["body", "sweater", "jacket", "pants", "hat", "back_accessory", "halo"],
    "concept_map": {
      "hoodie": ["sweater", "jacket"],
      "sweater": ["sweater"],
      "jacket": ["jacket"],
      "cargo pants": ["pants"],
      "pants": ["pants"],
      "jeans": ["pants"],
      "hat": ["hat"],
      "cap": ["hat"],
      "backpack": ["back_accessory"],
      "wings": ["back_accessory"],
      "halo": ["halo"]
    },
    "exclusion_groups": [["sweater", "jacket"]],
    "view_map": {"back_accessory": ["back", "left"], "halo": ["front"]},
    "required_core": ["body"],
    "display_names": {"back_accessory": "back accessory"},
    "modifier_keywords": {
      "jacket": ["zip-up", "zip", "leather", "denim", "bomber", "windbreaker"],
      "sweater": ["knit", "wool", "cable-knit", "cashmere", "pullover", "crewneck"]
    },
    "bundle_category": "body"
  })");
  return Taxonomy::from_json(doc);
}

json SynthWorld::truth_json() const {
  return {{"schema", "cmag.synth_truth"}, {"version", 1}, {"scenario", truth.to_json()}, {"planted", planted}};
}

SynthWorld generate_world(const WorldOptions& options) {
  SynthWorld world;
  world.taxonomy = default_taxonomy();
  const std::string target = world.taxonomy.bundle_category;
  Rng rng = make_rng(options.seed, 2);

  const bool zip = std::bernoulli_distribution(0.5)(rng);
  const std::string modifier = zip ? "zip-up" : "cable-knit";
  const std::string garment = zip ? "jacket" : "sweater";

  SynthSpec spec;
  spec.d = options.d;
  spec.noise_sigma = options.noise_sigma;
  spec.seed = options.seed;
  spec.bundle_category = target;
  for (const auto& c : world.taxonomy.categories) spec.categories.push_back({c, 4, options.n_assets});
  spec.interference = {{target, "jacket", 0.6}, {target, "sweater", 0.6}, {target, "pants", 0.5}};
  SynthCatalog synth = generate_catalog(spec);
  const Catalog catalog = make_catalog(synth, world.taxonomy);
  world.assets = synth.assets;

  SubspaceMap subspaces;
  for (const auto& c : world.taxonomy.categories) {
    const auto& assets = catalog.assets_of(c);
    std::vector<EmbeddingVector> rows;
    for (const auto& a : assets) rows.push_back(a.embedding);
    subspaces.emplace(c, compute_category_subspace(c, rows, options.subspace_policy));
  }

  ScenarioOptions scenario;
  scenario.target_category = target;
  scenario.seed = options.seed;
  scenario.lambda = options.lambda;
  scenario.alpha = options.retrieval.weights.alpha;
  scenario.beta = options.retrieval.weights.beta;
  world.truth = generate_interference_scenario(catalog, subspaces, scenario);
  world.planted[target] = world.truth.target_asset_id;

  world.prompt.prompt_text = "a " + modifier + " hoodie with cargo pants and a backpack";
  world.prompt.concepts = {{"hoodie", {modifier}}, {"cargo pants", {}}, {"backpack", {}}};

  EvidenceStore& ev = world.evidence;
  ev.set_prompt(world.prompt);
  for (View v : kDefaultViewOrder) ev.set_view(v, world.truth.g);
  ev.set_part({target, std::nullopt, View::kFront, PartStatus::kFailed});
  ev.set_text_prior(target, world.truth.t_c);

  std::vector<std::string> scratch;
  for (const std::string& cat : {garment, std::string("pants"), std::string("back_accessory")}) {
    const auto& assets = catalog.assets_of(cat);
    const Eigen::MatrixXd& basis = subspaces.at(cat).basis;
    std::uniform_int_distribution<std::size_t> pick(0, assets.size() - 1);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < 100 && !placed; ++attempt) {
      const Asset& a = assets[pick(rng)];
      const Eigen::VectorXd v = to_eigen(a.embedding);
      const EmbeddingVector part = normalize_for_storage(to_vec(v + isotropic(rng, v.size(), 0.1)));
      const EmbeddingVector prior =
          normalize_for_storage(to_vec(basis * (basis.transpose() * v) + 0.5 * random_in_span(rng, basis)));
      if (top1(catalog, cat, fuse(part, prior, options.retrieval.weights.alpha), scratch) != a.asset_id) continue;
      const auto view_it = world.taxonomy.view_map.find(cat);
      const View view = view_it == world.taxonomy.view_map.end() ? View::kFront : view_it->second.front();
      ev.set_part({cat, part, view, PartStatus::kValid});
      ev.set_text_prior(cat, prior);
      world.planted[cat] = a.asset_id;
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::kScenarioConstructionFailed, cat + ": no planted part found");
  }
  for (const auto& cat : world.taxonomy.categories) {
    if (ev.text_prior(cat) == nullptr) {
      ev.set_text_prior(cat, normalize_for_storage(to_vec(random_in_span(rng, subspaces.at(cat).basis))));
    }
  }
  ev.freeze();

  world.judge_script = {{"schema", "cmag.judge_script"},
                        {"version", 1},
                        {"repeat_last", true},
                        {"responses",
                         {{"filter_grid", json::array({{{"keep_all", true}}})},
                          {"select_outfit", json::array({{{"pick", "top"}}})},
                          {"verify", json::array({{{"verdict", "pass"}, {"issues", json::array()}, {"edits", json::array()}}})},
                          {"compare_batch", json::array({{{"prefer", "max_score"}}})}}}};
  return world;
}

}  // namespace cmag
