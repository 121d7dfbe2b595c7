#pragma once
// Exact per-category cosine index with a versioned binary snapshot.
//
// Snapshot layout (all integers little-endian):
//   magic        8 bytes  "CMAGIDX\0"
//   version      u32      kSnapshotVersion
//   dim          u32
//   count        u64
//   category     u32 length + UTF-8 bytes
//   rows         count * dim float32 (IEEE-754, little-endian), row-major
//   ids          count * (u32 length + UTF-8 bytes)
//   crc32        u32      zlib CRC-32 over every preceding byte

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmag/catalog.hpp"
#include "cmag/vecmath.hpp"

namespace cmag {

inline constexpr std::uint32_t kSnapshotVersion = 1;

struct SearchHit {
  std::string asset_id;
  double score = 0.0;
  std::size_t rank = 0;
};

// Orders by score descending, then asset_id ascending.
bool hit_precedes(double score_a, const std::string& id_a, double score_b, const std::string& id_b);

class CategoryIndex {
 public:
  CategoryIndex() = default;
  CategoryIndex(std::string category_id, std::size_t dim);

  const std::string& category_id() const { return category_id_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }

  // Top-min(k, n) hits by cosine. Throws ZeroVector / DimensionMismatch.
  std::vector<SearchHit> search(std::span<const double> query, std::size_t k) const;

  std::vector<std::uint8_t> serialize() const;
  static CategoryIndex deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static CategoryIndex load(const std::filesystem::path& path);

 private:
  friend CategoryIndex build_index(const std::string& category_id, std::span<const Asset> assets, std::size_t dim);
  void append(const std::string& id, std::span<const double> embedding);

  std::string category_id_;
  std::size_t dim_ = 0;
  std::vector<float> rows_;
  std::vector<double> row_norms_;
  std::vector<std::string> ids_;
};

// Rows are laid out in asset_id order. `dim` is only consulted when `assets`
// is empty. Throws CategoryMismatch / DimensionMismatch.
CategoryIndex build_index(const std::string& category_id, std::span<const Asset> assets, std::size_t dim = 0);

}  // namespace cmag
