#include "cmag/vecmath.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmag/error.hpp"

namespace cmag {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

EmbeddingVector normalize(std::span<const double> v) {
  if (!all_finite(v)) throw Error(ErrorCode::kInvalidArgument, "normalize: non-finite component");
  const double n = norm(v);
  if (n <= kZeroNormEps) throw Error(ErrorCode::kZeroVector, "normalize: norm " + std::to_string(n));
  EmbeddingVector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "cosine");
  const double na = norm(a);
  const double nb = norm(b);
  if (na <= kZeroNormEps || nb <= kZeroNormEps) throw Error(ErrorCode::kZeroVector, "cosine of zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void FusionWeights::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(alpha) || !in_unit(beta)) {
    throw Error(ErrorCode::kInvalidArgument, "fusion weights must lie in [0, 1]");
  }
}

EmbeddingVector CategorySubspace::project(std::span<const double> v) const {
  require_same_dim(v.size(), dim(), "project");
  Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::VectorXd coeffs = basis.transpose() * x;
  const Eigen::VectorXd p = basis * coeffs;
  return EmbeddingVector(p.data(), p.data() + p.size());
}

CategorySubspace compute_category_subspace(std::string category_id,
                                           std::span<const EmbeddingVector> embeddings,
                                           const RankPolicy& policy) {
  if (embeddings.empty()) throw Error(ErrorCode::kEmptyCategory, "no embeddings for " + category_id);
  const std::size_t d = embeddings.front().size();
  if (d == 0) throw Error(ErrorCode::kDimensionMismatch, "zero-dimensional embeddings");
  const std::size_t n = embeddings.size();

  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    require_same_dim(embeddings[j].size(), d, "compute_category_subspace");
    for (std::size_t i = 0; i < d; ++i) stacked(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = embeddings[j][i];
  }
  if (policy.center) stacked.colwise() -= stacked.rowwise().mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const std::size_t available = static_cast<std::size_t>(sv.size());  // min(d, n)

  std::size_t r = 0;
  if (policy.kind == RankPolicy::Kind::kFixed) {
    if (policy.fixed_rank == 0) throw Error(ErrorCode::kInvalidArgument, "fixed rank must be >= 1");
    r = std::min(policy.fixed_rank, available);
  } else {
    if (!(policy.tau > 0.0 && policy.tau <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "variance threshold must lie in (0, 1]");
    }
    const double total = sv.squaredNorm();
    double cumulative = 0.0;
    r = available;
    for (std::size_t i = 0; i < available; ++i) {
      cumulative += sv[static_cast<Eigen::Index>(i)] * sv[static_cast<Eigen::Index>(i)];
      if (cumulative >= policy.tau * total) {
        r = i + 1;
        break;
      }
    }
    r = std::clamp<std::size_t>(r, 1, std::max<std::size_t>(1, std::min(policy.max_rank, available)));
  }

  CategorySubspace out;
  out.category_id = std::move(category_id);
  out.basis = svd.matrixU().leftCols(static_cast<Eigen::Index>(r));
  out.singular_values.assign(sv.data(), sv.data() + r);
  for (Eigen::Index c = 0; c < out.basis.cols(); ++c) {
    Eigen::Index arg = 0;
    out.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.basis(arg, c) < 0.0) out.basis.col(c) *= -1.0;
  }
  return out;
}

EmbeddingVector suppress(std::span<const double> g, std::span<const CategorySubspace> others) {
  std::vector<const CategorySubspace*> order;
  order.reserve(others.size());
  for (const auto& s : others) {
    require_same_dim(s.dim(), g.size(), "suppress");
    order.push_back(&s);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->category_id < b->category_id; });

  Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  for (const auto* s : order) {
    const Eigen::VectorXd coeffs = s->basis.transpose() * r;
    r.noalias() -= s->basis * coeffs;
  }
  return EmbeddingVector(r.data(), r.data() + r.size());
}

EmbeddingVector fuse(std::span<const double> primary, std::span<const double> text_prior, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "fusion weight outside [0, 1]");
  require_same_dim(primary.size(), text_prior.size(), "fuse");
  EmbeddingVector mixed(primary.size());
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = w * primary[i] + (1.0 - w) * text_prior[i];
  if (!all_finite(mixed)) throw Error(ErrorCode::kInvalidArgument, "fuse: non-finite input");
  if (norm(mixed) <= kZeroNormEps) throw Error(ErrorCode::kDegenerateFusion, "fused query has near-zero norm");
  return normalize(mixed);
}

}  // namespace cmag
