#include "reem/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "reem/digest.hpp"
#include "reem/errors.hpp"
#include "reem/rng.hpp"

namespace reem::embedding {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw IoError("corrupt embedding file (truncated)");
    }
  }

  const std::string& data_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[9] = "REEMEMB1";

}  // namespace

std::vector<ReviewSubsetSample> sample_review_subsets(const PoiContent& content,
                                                      std::size_t k,
                                                      std::size_t char_budget,
                                                      std::uint64_t seed) {
  if (content.reviews.empty()) {
    throw ValidationError("poi '" + content.poi.poi_id +
                          "' has no reviews to sample");
  }
  if (k < 1) throw ValidationError("subset count must be positive");
  if (char_budget < 1) throw ValidationError("char budget must be positive");

  std::vector<std::size_t> indices(content.reviews.size());
  std::iota(indices.begin(), indices.end(), 0);

  const DetRng base(seed);
  std::vector<ReviewSubsetSample> samples;
  samples.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    DetRng rng = base.fork("subset-" + std::to_string(j));
    std::vector<std::size_t> order = indices;
    rng.shuffle(order);

    ReviewSubsetSample sample;
    sample.poi_id = content.poi.poi_id;
    for (std::size_t index : order) {
      const Review& review = content.reviews[index];
      const std::size_t separator = sample.concatenated_text.empty() ? 0 : 1;
      if (sample.concatenated_text.size() + separator + review.text.size() >
          char_budget) {
        // A lone oversize review is cut to the budget; otherwise the pack
        // stops at the first review that no longer fits whole.
        if (sample.concatenated_text.empty()) {
          sample.concatenated_text = review.text.substr(0, char_budget);
          sample.review_ids.push_back(review.review_id);
          sample.truncated = true;
        }
        break;
      }
      if (separator != 0) sample.concatenated_text.push_back('\n');
      sample.concatenated_text += review.text;
      sample.review_ids.push_back(review.review_id);
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

HashedNgramEmbedder::HashedNgramEmbedder(std::size_t dimension,
                                         std::uint64_t seed, std::size_t ngram)
    : dimension_(dimension), seed_(seed), ngram_(ngram) {
  if (dimension_ < 1) throw ValidationError("embedding dimension must be >= 1");
  if (ngram_ < 1) throw ValidationError("ngram width must be >= 1");
}

std::string HashedNgramEmbedder::provider_id() const {
  return "hashed-ngram-" + std::to_string(dimension_) + "-s" +
         std::to_string(seed_);
}

std::vector<double> HashedNgramEmbedder::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");

  std::uint64_t state = seed_;
  const std::uint64_t basis = 0xcbf29ce484222325ULL ^ splitmix64(state);

  std::vector<double> values(dimension_, 0.0);
  const auto bump = [&](std::string_view gram) {
    const std::uint64_t h = fnv1a64(gram, basis);
    const std::size_t bucket = static_cast<std::size_t>(h % dimension_);
    values[bucket] += (h >> 63) ? 1.0 : -1.0;
  };
  if (text.size() < ngram_) {
    bump(text);
  } else {
    for (std::size_t i = 0; i + ngram_ <= text.size(); ++i) {
      bump(std::string_view(text).substr(i, ngram_));
    }
  }

  double norm = 0.0;
  for (double v : values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : values) v /= norm;
  }
  return values;
}

EmbeddingService::EmbeddingService(std::shared_ptr<EmbeddingProvider> provider,
                                   std::filesystem::path cache_dir)
    : provider_(std::move(provider)), cache_dir_(std::move(cache_dir)) {
  if (!provider_) throw ValidationError("embedding service needs a provider");
  provider_id_ = provider_->provider_id();
  dimension_ = provider_->dimension();
  if (dimension_ < 1) {
    throw ValidationError("provider '" + provider_id_ +
                          "' reports a zero dimension");
  }
  if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
}

std::string EmbeddingService::cache_key(const std::string& text) const {
  std::string canonical = "emb/1;";
  canonical += provider_id_;
  canonical += ';';
  canonical += std::to_string(dimension_);
  canonical += ';';
  canonical += text;
  return digest_of(canonical);
}

std::optional<std::vector<double>> EmbeddingService::try_load(
    const std::string& key) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = memory_.find(key);
    if (it != memory_.end()) {
      ++cache_hits_;
      return it->second;
    }
  }
  if (cache_dir_.empty()) return std::nullopt;
  const std::filesystem::path path = cache_dir_ / (key + ".json");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt embedding cache entry " + path.string() + ": " +
                  e.what());
  }
  std::vector<double> values = j.at("values").get<std::vector<double>>();
  if (values.size() != dimension_) {
    throw IoError("embedding cache entry " + path.string() + " has dimension " +
                  std::to_string(values.size()) + "; run dimension is " +
                  std::to_string(dimension_));
  }
  std::lock_guard<std::mutex> lock(mutex_);
  memory_[key] = values;
  ++cache_hits_;
  return values;
}

void EmbeddingService::store(const std::string& key,
                             const std::vector<double>& values) {
  std::lock_guard<std::mutex> lock(mutex_);
  memory_[key] = values;
  if (cache_dir_.empty()) return;
  nlohmann::json j;
  j["provider_id"] = provider_id_;
  j["dimension"] = dimension_;
  j["values"] = values;
  const std::filesystem::path path = cache_dir_ / (key + ".json");
  const std::filesystem::path tmp = cache_dir_ / (key + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingVector EmbeddingService::embed_text(const std::string& text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  const std::string key = cache_key(text);
  if (std::optional<std::vector<double>> cached = try_load(key)) {
    return {std::move(*cached), provider_id_};
  }
  std::vector<double> values = provider_->embed(text);
  if (values.size() != dimension_) {
    throw ValidationError("embedding dimension " +
                          std::to_string(values.size()) +
                          " does not match the run dimension " +
                          std::to_string(dimension_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ValidationError("provider '" + provider_id_ +
                            "' returned a non-finite embedding entry");
    }
  }
  store(key, values);
  return {std::move(values), provider_id_};
}

EmbeddingVector EmbeddingService::poi_embedding(const PoiContent& content,
                                                std::size_t k,
                                                std::size_t char_budget,
                                                std::uint64_t seed) {
  const std::vector<ReviewSubsetSample> samples =
      sample_review_subsets(content, k, char_budget, seed);
  std::vector<double> mean(dimension_, 0.0);
  for (const ReviewSubsetSample& sample : samples) {
    const EmbeddingVector v = embed_text(sample.concatenated_text);
    for (std::size_t i = 0; i < dimension_; ++i) mean[i] += v.values[i];
  }
  const double scale = 1.0 / static_cast<double>(samples.size());
  for (double& v : mean) v *= scale;
  return {std::move(mean), provider_id_};
}

std::optional<std::size_t> EmbeddingMatrix::row_of(
    const std::string& poi_id) const {
  const auto it = std::find(poi_ids.begin(), poi_ids.end(), poi_id);
  if (it == poi_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - poi_ids.begin());
}

void EmbeddingMatrix::validate() const {
  if (dimension < 1) throw ValidationError("embedding matrix needs dimension >= 1");
  if (values.size() != poi_ids.size() * dimension) {
    throw ValidationError("embedding matrix holds " +
                          std::to_string(values.size()) + " values for " +
                          std::to_string(poi_ids.size()) + " rows of " +
                          std::to_string(dimension));
  }
  std::set<std::string> seen;
  for (const std::string& poi_id : poi_ids) {
    if (poi_id.empty()) throw ValidationError("embedding row has an empty poi_id");
    if (!seen.insert(poi_id).second) {
      throw ValidationError("duplicate embedding row for poi '" + poi_id + "'");
    }
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ValidationError("embedding matrix contains a non-finite entry");
    }
  }
}

void save_embedding_matrix(const std::filesystem::path& bin_path,
                           const EmbeddingMatrix& matrix) {
  matrix.validate();

  std::string out;
  out.append(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(matrix.dimension));
  put_u64(out, matrix.count());
  put_u32(out, static_cast<std::uint32_t>(matrix.provider_id.size()));
  out += matrix.provider_id;
  for (double v : matrix.values) put_f64(out, v);
  put_u64(out, fnv1a64(out));

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot open " + bin_path.string() + " for writing");
  bin.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!bin) throw IoError("failed writing " + bin_path.string());
  bin.close();

  nlohmann::json rows = nlohmann::json::object();
  for (std::size_t i = 0; i < matrix.count(); ++i) {
    rows[matrix.poi_ids[i]] = i;
  }
  nlohmann::json index;
  index["provider_id"] = matrix.provider_id;
  index["dimension"] = matrix.dimension;
  index["count"] = matrix.count();
  index["rows"] = std::move(rows);

  const std::filesystem::path idx_path = bin_path.string() + ".idx.json";
  std::ofstream idx(idx_path, std::ios::binary | std::ios::trunc);
  if (!idx) throw IoError("cannot open " + idx_path.string() + " for writing");
  idx << index.dump(2) << '\n';
  if (!idx) throw IoError("failed writing " + idx_path.string());
}

EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& bin_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin_path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  if (data.size() < 8 + 4 + 8 + 4 + 8) {
    throw IoError("not an embedding file: " + bin_path.string());
  }
  if (data.compare(0, 8, kMagic, 8) != 0) {
    throw IoError("not an embedding file: " + bin_path.string());
  }
  const std::string body = data.substr(0, data.size() - 8);
  Reader trailer(data);
  trailer.bytes(data.size() - 8);
  if (trailer.u64() != fnv1a64(body)) {
    throw IoError("corrupt embedding file (digest mismatch): " +
                  bin_path.string());
  }

  Reader reader(body);
  reader.bytes(8);
  EmbeddingMatrix matrix;
  matrix.dimension = reader.u32();
  const std::uint64_t count = reader.u64();
  matrix.provider_id = reader.bytes(reader.u32());
  matrix.values.resize(count * matrix.dimension);
  for (double& v : matrix.values) v = reader.f64();

  const std::filesystem::path idx_path = bin_path.string() + ".idx.json";
  std::ifstream idx(idx_path, std::ios::binary);
  if (!idx) throw IoError("missing embedding index " + idx_path.string());
  nlohmann::json index;
  try {
    idx >> index;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed embedding index " + idx_path.string() + ": " +
                  e.what());
  }
  const nlohmann::json& rows = index.at("rows");
  if (rows.size() != count) {
    throw ValidationError("embedding index lists " +
                          std::to_string(rows.size()) + " rows; file holds " +
                          std::to_string(count));
  }
  matrix.poi_ids.assign(count, std::string{});
  for (const auto& [poi_id, row] : rows.items()) {
    const std::size_t r = row.get<std::size_t>();
    if (r >= count) {
      throw ValidationError("embedding index row " + std::to_string(r) +
                            " is out of range for poi '" + poi_id + "'");
    }
    if (!matrix.poi_ids[r].empty()) {
      throw ValidationError("embedding index assigns row " + std::to_string(r) +
                            " twice");
    }
    matrix.poi_ids[r] = poi_id;
  }
  matrix.validate();
  return matrix;
}

}  // namespace reem::embedding
