#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "reem/corpus.hpp"

namespace reem::embedding {

struct EmbeddingVector {
  std::vector<double> values;
  std::string provider_id;

  std::size_t dimension() const { return values.size(); }
};

/// One augmentation sample: a seeded shuffle of the POI's reviews packed
/// whole into a character budget.
struct ReviewSubsetSample {
  std::string poi_id;
  std::vector<std::string> review_ids;  // in packed order
  std::string concatenated_text;        // length <= budget
  bool truncated = false;  // a single review overflowed the budget alone
};

/// k seeded shuffle-and-pack samples over the POI's reviews. Samples may
/// overlap; the result is a pure function of (content, k, budget, seed).
/// When even the first shuffled review exceeds the budget it is cut to the
/// budget and the sample is flagged.
std::vector<ReviewSubsetSample> sample_review_subsets(
    const PoiContent& content, std::size_t k = 4,
    std::size_t char_budget = 8000, std::uint64_t seed = 20240601);

/// Text-embedding backend. Implementations raise TransportError on
/// transport failure and report a fixed dimension.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string provider_id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

/// Offline fallback embedder: seeded signed hashing of character n-grams
/// into D buckets, L2-normalized. No network, bit-reproducible across
/// machines for a given (dimension, seed, text).
class HashedNgramEmbedder : public EmbeddingProvider {
 public:
  explicit HashedNgramEmbedder(std::size_t dimension = 768,
                               std::uint64_t seed = 20240601,
                               std::size_t ngram = 3);

  std::string provider_id() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<double> embed(const std::string& text) override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
  std::size_t ngram_;
};

/// Caching front end that pins the run's embedding dimension at
/// construction. A provider reply of any other dimension is a hard error,
/// never a silent truncation.
class EmbeddingService {
 public:
  EmbeddingService(std::shared_ptr<EmbeddingProvider> provider,
                   std::filesystem::path cache_dir = {});

  std::size_t dimension() const { return dimension_; }
  const std::string& provider_id() const { return provider_id_; }

  EmbeddingVector embed_text(const std::string& text);

  /// Mean of the k subset embeddings.
  EmbeddingVector poi_embedding(const PoiContent& content, std::size_t k = 4,
                                std::size_t char_budget = 8000,
                                std::uint64_t seed = 20240601);

  std::uint64_t cache_hits() const { return cache_hits_; }

 private:
  std::string cache_key(const std::string& text) const;
  std::optional<std::vector<double>> try_load(const std::string& key);
  void store(const std::string& key, const std::vector<double>& values);

  std::shared_ptr<EmbeddingProvider> provider_;
  std::string provider_id_;
  std::size_t dimension_;
  std::filesystem::path cache_dir_;
  std::mutex mutex_;
  std::map<std::string, std::vector<double>> memory_;
  std::uint64_t cache_hits_ = 0;
};

/// All POI embeddings of one run: fixed dimension, one row per poi_id.
struct EmbeddingMatrix {
  std::string provider_id;
  std::size_t dimension = 0;
  std::vector<std::string> poi_ids;  // row order
  std::vector<double> values;        // row-major, poi_ids.size() x dimension

  std::size_t count() const { return poi_ids.size(); }
  const double* row(std::size_t index) const {
    return values.data() + index * dimension;
  }
  std::optional<std::size_t> row_of(const std::string& poi_id) const;

  /// Shapes agree, entries finite. Throws ValidationError.
  void validate() const;
};

/// embeddings.bin: header (dimension, count, provider_id) then row-major
/// 64-bit little-endian floats, digest-guarded. A JSON index file next to
/// it ("<file>.idx.json") maps poi_id to row.
void save_embedding_matrix(const std::filesystem::path& bin_path,
                           const EmbeddingMatrix& matrix);
EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& bin_path);

}  // namespace reem::embedding
