#include "cmag/index.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "cmag/error.hpp"

namespace cmag {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'A', 'G', 'I', 'D', 'X', '\0'};

class ByteWriter {
 public:
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float f) { put_u32(std::bit_cast<std::uint32_t>(f)); }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Any structural overrun means the payload is not what the writer produced.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get_u32()); }
  std::string get_string() {
    const std::uint32_t n = get_u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_bytes(const void* data, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, data, n) != 0) throw Error(ErrorCode::kChecksumMismatch, "bad snapshot magic");
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kChecksumMismatch, "snapshot truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

bool hit_precedes(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

CategoryIndex::CategoryIndex(std::string category_id, std::size_t dim)
    : category_id_(std::move(category_id)), dim_(dim) {}

void CategoryIndex::append(const std::string& id, std::span<const double> embedding) {
  double sq = 0.0;
  for (double x : embedding) {
    const float f = static_cast<float>(x);
    rows_.push_back(f);
    sq += static_cast<double>(f) * static_cast<double>(f);
  }
  row_norms_.push_back(std::sqrt(sq));
  ids_.push_back(id);
}

std::vector<SearchHit> CategoryIndex::search(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query d=" + std::to_string(query.size()) + ", index d=" + std::to_string(dim_));
  }
  const EmbeddingVector q = normalize(query);
  const std::size_t n = ids_.size();
  k = std::min(k, n);
  if (k == 0) return {};

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = rows_.data() + i * dim_;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) acc += static_cast<double>(r[j]) * q[j];
    scores[i] = row_norms_[i] > 0.0 ? std::clamp(acc / row_norms_[i], -1.0, 1.0) : 0.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto cmp = [&](std::size_t a, std::size_t b) { return hit_precedes(scores[a], ids_[a], scores[b], ids_[b]); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), cmp);

  std::vector<SearchHit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) hits.push_back({ids_[order[i]], scores[order[i]], i});
  return hits;
}

std::vector<std::uint8_t> CategoryIndex::serialize() const {
  ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put_u32(kSnapshotVersion);
  w.put_u32(static_cast<std::uint32_t>(dim_));
  w.put_u64(ids_.size());
  w.put_string(category_id_);
  for (float f : rows_) w.put_f32(f);
  for (const auto& id : ids_) w.put_string(id);
  const std::uint32_t crc = crc_of(w.bytes());
  w.put_u32(crc);
  return std::move(w.bytes());
}

CategoryIndex CategoryIndex::deserialize(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kFixedHeader = sizeof(kMagic) + 4;
  if (bytes.size() < kFixedHeader + 4) throw Error(ErrorCode::kChecksumMismatch, "snapshot truncated");

  ByteReader header(bytes);
  header.expect_bytes(kMagic, sizeof(kMagic));
  const std::uint32_t version = header.get_u32();
  if (version != kSnapshotVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "snapshot version " + std::to_string(version) + ", supported " + std::to_string(kSnapshotVersion));
  }

  const auto payload = bytes.first(bytes.size() - 4);
  ByteReader trailer(bytes.last(4));
  if (trailer.get_u32() != crc_of(payload)) throw Error(ErrorCode::kChecksumMismatch, "snapshot CRC-32 mismatch");

  ByteReader r(payload);
  r.expect_bytes(kMagic, sizeof(kMagic));
  r.get_u32();
  const std::uint32_t dim = r.get_u32();
  const std::uint64_t count = r.get_u64();
  CategoryIndex index(r.get_string(), dim);
  if (dim != 0 && count > r.remaining() / (4ULL * dim)) throw Error(ErrorCode::kChecksumMismatch, "row table overruns file");

  std::vector<float> rows(static_cast<std::size_t>(count) * dim);
  for (float& f : rows) f = r.get_f32();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::span<const float> row(rows.data() + i * dim, dim);
    double sq = 0.0;
    for (float f : row) sq += static_cast<double>(f) * static_cast<double>(f);
    index.row_norms_.push_back(std::sqrt(sq));
    index.ids_.push_back(r.get_string());
  }
  index.rows_ = std::move(rows);
  if (r.remaining() != 0) throw Error(ErrorCode::kChecksumMismatch, "trailing bytes after id table");
  return index;
}

void CategoryIndex::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

CategoryIndex CategoryIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

CategoryIndex build_index(const std::string& category_id, std::span<const Asset> assets, std::size_t dim) {
  if (!assets.empty()) dim = assets.front().embedding.size();
  std::vector<const Asset*> sorted;
  sorted.reserve(assets.size());
  for (const auto& a : assets) {
    if (a.category_id != category_id) {
      throw Error(ErrorCode::kCategoryMismatch, a.asset_id + " belongs to " + a.category_id + ", not " + category_id);
    }
    if (a.embedding.size() != dim) throw Error(ErrorCode::kDimensionMismatch, "asset " + a.asset_id);
    sorted.push_back(&a);
  }
  std::sort(sorted.begin(), sorted.end(), [](const Asset* a, const Asset* b) { return a->asset_id < b->asset_id; });

  CategoryIndex index(category_id, dim);
  for (const Asset* a : sorted) index.append(a->asset_id, a->embedding);
  return index;
}

}  // namespace cmag
