#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reem/geo.hpp"
#include "reem/metrics.hpp"
#include "reem/nn/dense.hpp"
#include "reem/nn/gat.hpp"

namespace reem::predictor {

enum class Channel { Reasoning = 0, Embedding = 1, Population = 2 };
inline constexpr std::size_t kChannelCount = 3;

const char* channel_name(Channel channel);
Channel parse_channel(const std::string& name);

/// Adapter output widths. The fusion input concatenates each active
/// channel's own representation with its neighbor aggregate, so the full
/// three-channel input is 64 + 128 + 128 + 128 + 30 + 30 = 508.
inline constexpr std::size_t kReasoningRepDim = 64;
inline constexpr std::size_t kEmbeddingRepDim = 128;
inline constexpr std::size_t kPopulationRepDim = 30;
inline constexpr std::size_t kReasoningAggDim = 128;
inline constexpr std::size_t kEmbeddingAggDim = 128;
inline constexpr std::size_t kPopulationAggDim = 30;
inline constexpr std::size_t kFullFusionInput = 508;

inline constexpr std::size_t kNeighborCount = 5;

/// Per-channel representations of one POI after adaptation.
struct ChannelRepresentation {
  nn::Vec reasoning;   // 64 when the channel is active, else empty
  nn::Vec embedding;   // 128
  nn::Vec population;  // 30
};

/// Raw per-POI features feeding the three channels. Ratings are the
/// flattened group-major matrix on the 0..10 scale; embedding subsets are
/// the augmentation views whose mean is the pooled embedding; population is
/// the five nearby shares.
struct PoiFeatures {
  std::string poi_id;
  nn::Vec ratings;
  std::vector<nn::Vec> embedding_subsets;
  nn::Vec embedding;
  nn::Vec population;
  GeoPoint location;
  double label = 0.0;
};

/// Feature table covering every POI a run touches.
struct FeatureStore {
  std::vector<PoiFeatures> pois;

  const PoiFeatures* find(const std::string& poi_id) const;
  const PoiFeatures& at(const std::string& poi_id) const;
  std::size_t rating_width() const;
  std::size_t embedding_width() const;

  /// Unique ids, consistent widths, finite values, labels in [0, 1].
  void validate() const;
};

struct DataSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Seeded shuffle split, 6:2:2 by default. Every part must end up
/// non-empty; ids within each part are sorted.
DataSplit split_dataset(const std::vector<std::string>& poi_ids,
                        std::uint64_t seed, double train_frac = 0.6,
                        double val_frac = 0.2);

struct TrainConfig {
  double lr = 1e-3;             // [5e-6, 5e-3]
  double weight_decay = 1e-4;   // [1e-5, 5e-4]
  std::size_t patience = 15;    // [10, 25]
  std::size_t max_epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 20240601;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

/// A channel stack trained against the segregation label with a temporary
/// scalar head, returned with the head removed. Embedding inputs carry the
/// training-split standardization; other channels leave mean/std empty.
struct TrainedAdapter {
  Channel channel = Channel::Population;
  nn::DenseStack stack;
  nn::Vec input_mean;
  nn::Vec input_std;
  std::vector<EpochStats> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Stage-one training: fit the channel stack + scalar head on MSE with Adam
/// and early stopping on validation loss, then drop the head. Rating inputs
/// are scaled by 1/10, population shares enter raw, and each embedding
/// augmentation subset is a separate training instance (validation uses the
/// pooled embedding the predictor will see).
TrainedAdapter train_adapter(Channel channel, const FeatureStore& features,
                             const DataSplit& split, const TrainConfig& config);

void save_adapter(const std::filesystem::path& path,
                  const TrainedAdapter& adapter);
TrainedAdapter load_adapter(const std::filesystem::path& path);

/// Up to k nearest candidates per space. Never contains the query POI.
struct NeighborSets {
  std::vector<std::string> reasoning_ids;
  std::vector<std::string> embedding_ids;
  std::vector<std::string> geo_ids;
};

/// Nearest neighbors by cosine similarity over raw rating vectors, cosine
/// over raw pooled embeddings, and haversine distance. Ties break toward
/// the smaller poi_id; a pool smaller than k is used whole.
NeighborSets build_neighbor_sets(const std::string& poi_id,
                                 const std::vector<std::string>& candidates,
                                 const FeatureStore& features,
                                 std::size_t k = kNeighborCount);

struct NeighborIndex {
  std::size_t k = kNeighborCount;
  std::map<std::string, NeighborSets> sets;
};

void save_neighbor_sets(const std::filesystem::path& path,
                        const NeighborIndex& index);
NeighborIndex load_neighbor_sets(const std::filesystem::path& path);

/// The full model: three frozen channel adapters, one graph-attention layer
/// per channel over that channel's neighbor set, and a fusion stack ending
/// in a raw scalar. Channels can be gated off for ablation variants; the
/// fusion input width shrinks accordingly.
struct ReemModel {
  std::array<bool, kChannelCount> active = {true, true, true};
  std::array<bool, kChannelCount> frozen = {false, false, false};

  nn::DenseStack rating_adapter;      // 5·width → 512 → 128 → 64
  nn::DenseStack embedding_adapter;   // D → 512 → 256 → 128
  nn::DenseStack population_adapter;  // 5 → 100 → 30
  nn::Vec embedding_mean;             // training-split standardization
  nn::Vec embedding_std;

  nn::GraphAttentionLayer gat_r;  // 64 → 128
  nn::GraphAttentionLayer gat_e;  // 128 → 128
  nn::GraphAttentionLayer gat_p;  // 30 → 30
  nn::DenseStack fusion;          // fusion_input() → 512 → 128 → 64 → 1

  std::size_t fusion_input() const;
  void validate() const;
};

/// Freshly initialized model of the stated shape (adapters included, so the
/// result is usable before stage-one weights are swapped in).
ReemModel make_reem_model(std::size_t rating_width,
                          std::size_t embedding_width,
                          const std::array<bool, kChannelCount>& active,
                          std::uint64_t seed);

/// Trainable views over the GATs and fusion stack; adapters are appended
/// only when include_adapters is set (checkpointing, never optimization).
std::vector<nn::ParamView> model_params(ReemModel& model,
                                        bool include_adapters);

/// Channel inputs after scaling (ratings ×1/10, embeddings standardized,
/// population raw) pushed through the adapters.
ChannelRepresentation adapt_poi(const ReemModel& model,
                                const PoiFeatures& features);

/// Raw fusion output for one POI. The reporting layer clips separately.
double predict(const std::string& poi_id, const ReemModel& model,
               const FeatureStore& features, const NeighborSets& neighbors);

inline double clip_unit(double y) { return y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y); }

/// Mean squared error over the ids; with write_grads, accumulates gradients
/// into the GAT and fusion buffers (callers zero them first). Adapters are
/// never touched.
double predictor_loss(ReemModel& model, const FeatureStore& features,
                      const std::vector<std::string>& ids,
                      const NeighborIndex& neighbors, bool write_grads);

struct PredictorResult {
  ReemModel model;
  NeighborIndex neighbors;  // every store POI, candidates = training split
  std::vector<EpochStats> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Stage-two training: adapters are copied in frozen, then the GATs and
/// fusion train on MSE with Adam and early stopping; the best validation
/// epoch is returned. Neighbor candidates are the training split for every
/// POI, keeping held-out compositions out of the graph. When out_dir is
/// set, writes adapter/*.ckpt, predictor.ckpt, neighbor_sets.json, and
/// train_log.csv there.
PredictorResult train_predictor(const FeatureStore& features,
                                const DataSplit& split,
                                const std::vector<TrainedAdapter>& adapters,
                                const TrainConfig& config,
                                const std::filesystem::path& out_dir = {});

/// Rebuilds the frozen model written by train_predictor(out_dir).
ReemModel load_model_dir(const std::filesystem::path& dir);

/// Clipped predictions for the ids, neighbors drawn from candidates.
std::vector<double> predict_ids(const ReemModel& model,
                                const FeatureStore& features,
                                const std::vector<std::string>& ids,
                                const std::vector<std::string>& candidates);

MetricsRecord evaluate_ids(const ReemModel& model,
                           const FeatureStore& features,
                           const std::vector<std::string>& ids,
                           const std::vector<std::string>& candidates);

enum class Variant {
  PopulationOnly,
  EmbeddingOnly,
  RatingOnly,
  NoCodebook,
  Full,
};

const char* variant_name(Variant variant);
Variant parse_variant(const std::string& name);

struct AblationResult {
  Variant variant = Variant::Full;
  MetricsRecord test_metrics;
  std::vector<TrainedAdapter> adapters;
  PredictorResult predictor;
};

/// Trains the variant's adapters and predictor with the shared protocol and
/// evaluates on the test split. The no-codebook variant keeps the full
/// architecture; it differs only in that the caller supplies a store whose
/// ratings came from the vanilla prompt.
AblationResult ablate(const FeatureStore& features, const DataSplit& split,
                      Variant variant, const TrainConfig& config);

/// Reference results for the Philadelphia study: the population-only MLP
/// against the full model.
inline constexpr double kReferencePopulationMse = 0.0075;
inline constexpr double kReferencePopulationR2 = 0.3164;
inline constexpr double kReferenceFullMse = 0.0068;
inline constexpr double kReferenceFullR2 = 0.3885;

}  // namespace reem::predictor
