#pragma once
// Numeric kernel for the retrieval pipeline.
//
// Embeddings are carried as double-precision vectors so that projection and
// suppression laws hold to 1e-9; catalog storage and index rows are float32.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmag {

using EmbeddingVector = std::vector<double>;

inline constexpr double kZeroNormEps = 1e-12;
inline constexpr double kUnitNormTol = 1e-6;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

// Throws ZeroVector when ||v|| <= 1e-12, InvalidArgument on non-finite input.
EmbeddingVector normalize(std::span<const double> v);

double cosine(std::span<const double> a, std::span<const double> b);

struct FusionWeights {
  double alpha = 0.7;  // part branch: visual share
  double beta = 0.7;   // concept-residual branch: residual share

  void validate() const;
};

struct RankPolicy {
  enum class Kind { kFixed, kVariance };

  Kind kind = Kind::kVariance;
  std::size_t fixed_rank = 1;
  double tau = 0.90;
  std::size_t max_rank = 16;
  // Subtract the category mean before the decomposition. Off by default: the
  // projector acts on raw embeddings.
  bool center = false;

  static RankPolicy fixed(std::size_t r) {
    RankPolicy p;
    p.kind = Kind::kFixed;
    p.fixed_rank = r;
    return p;
  }
  static RankPolicy variance(double tau, std::size_t max_rank = 16) {
    RankPolicy p;
    p.kind = Kind::kVariance;
    p.tau = tau;
    p.max_rank = max_rank;
    return p;
  }
};

// Top-r orthonormal basis of one category's embedding span. Columns of
// `basis` are sign-normalized so the largest-magnitude entry is positive.
struct CategorySubspace {
  std::string category_id;
  Eigen::MatrixXd basis;               // d x r
  std::vector<double> singular_values;  // r values, non-increasing

  std::size_t dim() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(basis.cols()); }

  // P v = B (B^T v)
  EmbeddingVector project(std::span<const double> v) const;
};

CategorySubspace compute_category_subspace(std::string category_id,
                                           std::span<const EmbeddingVector> embeddings,
                                           const RankPolicy& policy = {});

// One sequential pass of r <- r - P_k r over `others` in ascending
// category_id order. The result is not renormalized.
EmbeddingVector suppress(std::span<const double> g, std::span<const CategorySubspace> others);

// normalize(w * primary + (1 - w) * text_prior); DegenerateFusion if the
// combination vanishes.
EmbeddingVector fuse(std::span<const double> primary, std::span<const double> text_prior, double w);

}  // namespace cmag
