#include "reem/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "reem/composition.hpp"
#include "reem/errors.hpp"
#include "reem/format.hpp"
#include "reem/nn/adam.hpp"
#include "reem/nn/checkpoint.hpp"
#include "reem/rng.hpp"

namespace reem::predictor {

namespace {

using RepMap = std::map<std::string, ChannelRepresentation>;

std::size_t channel_index(Channel channel) {
  return static_cast<std::size_t>(channel);
}

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw ValidationError("training loss became non-finite at epoch " +
                          std::to_string(epoch));
  }
}

double cosine_similarity(const nn::Vec& a, const nn::Vec& b) {
  double norm_a = 0.0;
  double norm_b = 0.0;
  double prod = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    prod += a[i] * b[i];
    norm_a += a[i] * a[i];
    norm_b += b[i] * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return prod / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

nn::Vec rating_input(const PoiFeatures& features) {
  nn::Vec x = features.ratings;
  for (double& v : x) v *= 0.1;
  return x;
}

nn::Vec standardize(const nn::Vec& x, const nn::Vec& mean, const nn::Vec& std) {
  if (mean.empty()) return x;
  if (mean.size() != x.size() || std.size() != x.size()) {
    throw ValidationError("standardization statistics cover " +
                          std::to_string(mean.size()) + " dimensions; input has " +
                          std::to_string(x.size()));
  }
  nn::Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean[i]) / std[i];
  }
  return out;
}

void append(nn::Vec& out, const nn::Vec& part) {
  out.insert(out.end(), part.begin(), part.end());
}

/// Per-example tapes for the trainable stage-two blocks.
struct ExampleTapes {
  nn::GraphAttentionLayer::Tape reasoning;
  nn::GraphAttentionLayer::Tape embedding;
  nn::GraphAttentionLayer::Tape population;
  nn::DenseStack::Tape fusion;
};

ChannelRepresentation compute_rep(const ReemModel& model,
                                  const PoiFeatures& features) {
  ChannelRepresentation rep;
  if (model.active[channel_index(Channel::Reasoning)]) {
    if (features.ratings.size() != model.rating_adapter.input_size()) {
      throw ValidationError("poi '" + features.poi_id + "' has " +
                            std::to_string(features.ratings.size()) +
                            " rating entries; the adapter expects " +
                            std::to_string(model.rating_adapter.input_size()));
    }
    rep.reasoning = model.rating_adapter.forward(rating_input(features));
  }
  if (model.active[channel_index(Channel::Embedding)]) {
    if (features.embedding.size() != model.embedding_adapter.input_size()) {
      throw ValidationError("poi '" + features.poi_id + "' has a " +
                            std::to_string(features.embedding.size()) +
                            "-dimensional embedding; the adapter expects " +
                            std::to_string(model.embedding_adapter.input_size()));
    }
    rep.embedding = model.embedding_adapter.forward(
        standardize(features.embedding, model.embedding_mean,
                    model.embedding_std));
  }
  if (model.active[channel_index(Channel::Population)]) {
    if (features.population.size() != model.population_adapter.input_size()) {
      throw ValidationError("poi '" + features.poi_id + "' has " +
                            std::to_string(features.population.size()) +
                            " population shares; the adapter expects " +
                            std::to_string(model.population_adapter.input_size()));
    }
    rep.population = model.population_adapter.forward(features.population);
  }
  return rep;
}

RepMap build_reps(const ReemModel& model, const FeatureStore& features) {
  RepMap reps;
  for (const PoiFeatures& poi : features.pois) {
    reps.emplace(poi.poi_id, compute_rep(model, poi));
  }
  return reps;
}

const ChannelRepresentation& rep_of(const RepMap& reps, const std::string& id,
                                    const std::string& owner) {
  const auto it = reps.find(id);
  if (it == reps.end()) {
    throw ValidationError("neighbor '" + id + "' of poi '" + owner +
                          "' has no stored features");
  }
  return it->second;
}

std::vector<nn::Vec> gather(const RepMap& reps,
                            const std::vector<std::string>& ids,
                            nn::Vec ChannelRepresentation::*field,
                            const std::string& owner) {
  std::vector<nn::Vec> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    out.push_back(rep_of(reps, id, owner).*field);
  }
  return out;
}

double forward_example(const ReemModel& model, const RepMap& reps,
                       const std::string& poi_id, const NeighborSets& neighbors,
                       ExampleTapes* tapes) {
  const auto self_it = reps.find(poi_id);
  if (self_it == reps.end()) {
    throw ValidationError("poi '" + poi_id + "' has no stored features");
  }
  const ChannelRepresentation& self = self_it->second;

  nn::Vec x;
  x.reserve(model.fusion_input());
  if (model.active[channel_index(Channel::Reasoning)]) {
    const auto feats = gather(reps, neighbors.reasoning_ids,
                              &ChannelRepresentation::reasoning, poi_id);
    const nn::Vec agg =
        tapes ? model.gat_r.forward(self.reasoning, feats, tapes->reasoning)
              : model.gat_r.forward(self.reasoning, feats);
    append(x, self.reasoning);
    append(x, agg);
  }
  if (model.active[channel_index(Channel::Embedding)]) {
    const auto feats = gather(reps, neighbors.embedding_ids,
                              &ChannelRepresentation::embedding, poi_id);
    const nn::Vec agg =
        tapes ? model.gat_e.forward(self.embedding, feats, tapes->embedding)
              : model.gat_e.forward(self.embedding, feats);
    append(x, self.embedding);
    append(x, agg);
  }
  if (model.active[channel_index(Channel::Population)]) {
    const auto feats = gather(reps, neighbors.geo_ids,
                              &ChannelRepresentation::population, poi_id);
    const nn::Vec agg =
        tapes ? model.gat_p.forward(self.population, feats, tapes->population)
              : model.gat_p.forward(self.population, feats);
    append(x, self.population);
    append(x, agg);
  }
  const nn::Vec y =
      tapes ? model.fusion.forward(x, tapes->fusion) : model.fusion.forward(x);
  return y[0];
}

void backward_example(ReemModel& model, ExampleTapes& tapes, double dy) {
  const nn::Vec dx = model.fusion.backward(tapes.fusion, {dy});
  std::size_t offset = 0;
  nn::Vec d_self;
  std::vector<nn::Vec> d_neighbors;
  const auto run = [&](nn::GraphAttentionLayer& gat,
                       nn::GraphAttentionLayer::Tape& tape,
                       std::size_t self_dim, std::size_t agg_dim) {
    offset += self_dim;  // gradients w.r.t. frozen adapter outputs are dropped
    const nn::Vec d_agg(dx.begin() + static_cast<std::ptrdiff_t>(offset),
                        dx.begin() + static_cast<std::ptrdiff_t>(offset + agg_dim));
    gat.backward(tape, d_agg, d_self, d_neighbors);
    offset += agg_dim;
  };
  if (model.active[channel_index(Channel::Reasoning)]) {
    run(model.gat_r, tapes.reasoning, kReasoningRepDim, kReasoningAggDim);
  }
  if (model.active[channel_index(Channel::Embedding)]) {
    run(model.gat_e, tapes.embedding, kEmbeddingRepDim, kEmbeddingAggDim);
  }
  if (model.active[channel_index(Channel::Population)]) {
    run(model.gat_p, tapes.population, kPopulationRepDim, kPopulationAggDim);
  }
}

const NeighborSets& neighbors_of(const NeighborIndex& index,
                                 const std::string& poi_id) {
  const auto it = index.sets.find(poi_id);
  if (it == index.sets.end()) {
    throw ValidationError("no neighbor sets for poi '" + poi_id + "'");
  }
  return it->second;
}

double loss_with_reps(ReemModel& model, const RepMap& reps,
                      const FeatureStore& features,
                      const std::vector<std::string>& ids,
                      const NeighborIndex& neighbors, bool write_grads) {
  if (ids.empty()) throw ValidationError("loss over an empty id list");
  double sq = 0.0;
  const double scale = 1.0 / static_cast<double>(ids.size());
  for (const std::string& id : ids) {
    const PoiFeatures& poi = features.at(id);
    ExampleTapes tapes;
    const double yhat =
        forward_example(model, reps, id, neighbors_of(neighbors, id),
                        write_grads ? &tapes : nullptr);
    const double err = yhat - poi.label;
    sq += err * err;
    if (write_grads) backward_example(model, tapes, 2.0 * err * scale);
  }
  return sq * scale;
}

void zero_views(const std::vector<nn::ParamView>& params) {
  for (const nn::ParamView& p : params) {
    std::fill(p.grad->begin(), p.grad->end(), 0.0);
  }
}

struct LoopResult {
  std::vector<EpochStats> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Mini-batch Adam loop with early stopping on validation MSE; restores the
/// best epoch's parameters before returning. train_batch receives instance
/// indices, accumulates gradients scaled by 1/batch, and returns the sum of
/// squared errors over the batch.
template <typename TrainBatch, typename ValLoss>
LoopResult run_training_loop(std::size_t n_train, const TrainConfig& config,
                             const std::vector<nn::ParamView>& params,
                             TrainBatch&& train_batch, ValLoss&& val_loss) {
  nn::Adam adam({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  LoopResult result;
  std::vector<nn::NamedArray> best = nn::snapshot_params(params);
  result.best_val_mse = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;

  const DetRng root(config.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    root.fork("epoch-" + std::to_string(epoch)).shuffle(order);
    double sq = 0.0;
    for (std::size_t start = 0; start < n_train; start += config.batch_size) {
      const std::size_t stop = std::min(n_train, start + config.batch_size);
      const std::vector<std::size_t> batch(order.begin() + start,
                                           order.begin() + stop);
      zero_views(params);
      sq += train_batch(batch);
      adam.step(params);
    }
    const double train_mse = sq / static_cast<double>(n_train);
    check_finite(train_mse, epoch);
    const double val_mse = val_loss();
    check_finite(val_mse, epoch);
    result.log.push_back({epoch, train_mse, val_mse});

    if (val_mse < result.best_val_mse) {
      result.best_val_mse = val_mse;
      result.best_epoch = epoch;
      best = nn::snapshot_params(params);
      stall = 0;
    } else if (++stall >= config.patience) {
      break;
    }
  }

  nn::Checkpoint snapshot;
  snapshot.arrays = std::move(best);
  nn::restore_params(snapshot, params);
  return result;
}

/// (input, label) instances for one channel over one id list.
struct Instances {
  std::vector<nn::Vec> x;
  std::vector<double> y;
};

double scalar_mse(const nn::DenseStack& stack, const Instances& data) {
  double sq = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double err = stack.forward(data.x[i])[0] - data.y[i];
    sq += err * err;
  }
  return sq / static_cast<double>(data.x.size());
}

std::vector<std::size_t> adapter_sizes(Channel channel, std::size_t input) {
  switch (channel) {
    case Channel::Reasoning:
      return {input, 512, 128, 64, 1};
    case Channel::Embedding:
      return {input, 512, 256, 128, 1};
    case Channel::Population:
      return {input, 100, 30, 10, 1};
  }
  throw ValidationError("unknown channel");
}

std::size_t head_layers_to_drop(Channel channel) {
  return channel == Channel::Population ? 2 : 1;
}

void require_non_empty(const std::vector<std::string>& ids, const char* what) {
  if (ids.empty()) {
    throw ValidationError(std::string(what) + " split is empty");
  }
}

std::array<bool, kChannelCount> active_of(
    const std::vector<TrainedAdapter>& adapters) {
  std::array<bool, kChannelCount> active = {false, false, false};
  for (const TrainedAdapter& adapter : adapters) {
    const std::size_t index = channel_index(adapter.channel);
    if (active[index]) {
      throw ValidationError(std::string("duplicate adapter for the ") +
                            channel_name(adapter.channel) + " channel");
    }
    active[index] = true;
  }
  if (adapters.empty()) throw ValidationError("no adapters given");
  return active;
}

void write_train_log(const std::filesystem::path& path,
                     const std::vector<EpochStats>& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,train_mse,val_mse\n";
  for (const EpochStats& row : log) {
    out << row.epoch << ',' << canonical_double(row.train_mse) << ','
        << canonical_double(row.val_mse) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

const char* channel_name(Channel channel) {
  switch (channel) {
    case Channel::Reasoning:
      return "reasoning";
    case Channel::Embedding:
      return "embedding";
    case Channel::Population:
      return "population";
  }
  throw ValidationError("unknown channel");
}

Channel parse_channel(const std::string& name) {
  if (name == "reasoning") return Channel::Reasoning;
  if (name == "embedding") return Channel::Embedding;
  if (name == "population") return Channel::Population;
  throw ValidationError("unknown channel '" + name + "'");
}

const char* variant_name(Variant variant) {
  switch (variant) {
    case Variant::PopulationOnly:
      return "population-only";
    case Variant::EmbeddingOnly:
      return "embedding-only";
    case Variant::RatingOnly:
      return "rating-only";
    case Variant::NoCodebook:
      return "no-codebook";
    case Variant::Full:
      return "full";
  }
  throw ValidationError("unknown variant");
}

Variant parse_variant(const std::string& name) {
  if (name == "population-only") return Variant::PopulationOnly;
  if (name == "embedding-only") return Variant::EmbeddingOnly;
  if (name == "rating-only") return Variant::RatingOnly;
  if (name == "no-codebook") return Variant::NoCodebook;
  if (name == "full") return Variant::Full;
  throw ValidationError("unknown variant '" + name + "'");
}

const PoiFeatures* FeatureStore::find(const std::string& poi_id) const {
  for (const PoiFeatures& poi : pois) {
    if (poi.poi_id == poi_id) return &poi;
  }
  return nullptr;
}

const PoiFeatures& FeatureStore::at(const std::string& poi_id) const {
  const PoiFeatures* poi = find(poi_id);
  if (!poi) {
    throw ValidationError("poi '" + poi_id + "' has no stored features");
  }
  return *poi;
}

std::size_t FeatureStore::rating_width() const {
  return pois.empty() ? 0 : pois.front().ratings.size();
}

std::size_t FeatureStore::embedding_width() const {
  return pois.empty() ? 0 : pois.front().embedding.size();
}

void FeatureStore::validate() const {
  if (pois.empty()) throw ValidationError("feature store is empty");
  std::set<std::string> seen;
  const std::size_t ratings = rating_width();
  const std::size_t dims = embedding_width();
  for (const PoiFeatures& poi : pois) {
    if (poi.poi_id.empty()) throw ValidationError("feature row has an empty poi_id");
    if (!seen.insert(poi.poi_id).second) {
      throw ValidationError("duplicate features for poi '" + poi.poi_id + "'");
    }
    if (poi.ratings.size() != ratings) {
      throw ValidationError("poi '" + poi.poi_id + "' has " +
                            std::to_string(poi.ratings.size()) +
                            " rating entries; the store width is " +
                            std::to_string(ratings));
    }
    if (poi.embedding.size() != dims) {
      throw ValidationError("poi '" + poi.poi_id + "' has a " +
                            std::to_string(poi.embedding.size()) +
                            "-dimensional embedding; the store width is " +
                            std::to_string(dims));
    }
    for (const nn::Vec& subset : poi.embedding_subsets) {
      if (subset.size() != dims) {
        throw ValidationError("poi '" + poi.poi_id +
                              "' has an embedding subset of dimension " +
                              std::to_string(subset.size()));
      }
    }
    if (!poi.population.empty() && poi.population.size() != kGroupCount) {
      throw ValidationError("poi '" + poi.poi_id + "' has " +
                            std::to_string(poi.population.size()) +
                            " population shares");
    }
    if (!(poi.label >= 0.0 && poi.label <= 1.0)) {
      throw ValidationError("poi '" + poi.poi_id + "' has label " +
                            canonical_double(poi.label) +
                            " outside [0, 1]");
    }
    const auto check = [&](const nn::Vec& v) {
      for (double value : v) {
        if (!std::isfinite(value)) {
          throw ValidationError("poi '" + poi.poi_id +
                                "' has a non-finite feature value");
        }
      }
    };
    check(poi.ratings);
    check(poi.embedding);
    check(poi.population);
    for (const nn::Vec& subset : poi.embedding_subsets) check(subset);
  }
}

DataSplit split_dataset(const std::vector<std::string>& poi_ids,
                        std::uint64_t seed, double train_frac,
                        double val_frac) {
  if (!(train_frac > 0.0) || !(val_frac > 0.0) ||
      !(train_frac + val_frac < 1.0)) {
    throw ValidationError("split fractions must be positive and leave a test share");
  }
  std::vector<std::string> ids = poi_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError("duplicate poi_id in the split input");
  }
  DetRng(seed).fork("split").shuffle(ids);

  const std::size_t n = ids.size();
  const std::size_t n_train =
      static_cast<std::size_t>(static_cast<double>(n) * train_frac);
  const std::size_t n_val =
      static_cast<std::size_t>(static_cast<double>(n) * val_frac);
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ValidationError("too few POIs to split: " + std::to_string(n));
  }

  DataSplit split;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                   ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                    ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void TrainConfig::validate() const {
  if (!(lr >= 5e-6 && lr <= 5e-3)) {
    throw ValidationError("learning rate " + canonical_double(lr) +
                          " is outside [5e-06, 0.005]");
  }
  if (!(weight_decay >= 1e-5 && weight_decay <= 5e-4)) {
    throw ValidationError("weight decay " + canonical_double(weight_decay) +
                          " is outside [1e-05, 0.0005]");
  }
  if (patience < 10 || patience > 25) {
    throw ValidationError("patience " + std::to_string(patience) +
                          " is outside [10, 25]");
  }
  if (max_epochs < 1) throw ValidationError("max_epochs must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
}

TrainedAdapter train_adapter(Channel channel, const FeatureStore& features,
                             const DataSplit& split,
                             const TrainConfig& config) {
  features.validate();
  config.validate();
  require_non_empty(split.train, "training");
  require_non_empty(split.val, "validation");

  TrainedAdapter adapter;
  adapter.channel = channel;

  Instances train;
  Instances val;
  const auto add = [](Instances& out, nn::Vec x, double y) {
    out.x.push_back(std::move(x));
    out.y.push_back(y);
  };

  std::size_t input = 0;
  switch (channel) {
    case Channel::Reasoning: {
      input = features.rating_width();
      if (input == 0) {
        throw ValidationError("feature store has no ratings for the reasoning channel");
      }
      for (const std::string& id : split.train) {
        const PoiFeatures& poi = features.at(id);
        add(train, rating_input(poi), poi.label);
      }
      for (const std::string& id : split.val) {
        const PoiFeatures& poi = features.at(id);
        add(val, rating_input(poi), poi.label);
      }
      break;
    }
    case Channel::Embedding: {
      input = features.embedding_width();
      if (input == 0) {
        throw ValidationError("feature store has no embeddings for the embedding channel");
      }
      // Each augmentation subset is its own training instance; statistics
      // come from those instances, validation sees the pooled embedding.
      std::vector<const nn::Vec*> raw;
      for (const std::string& id : split.train) {
        const PoiFeatures& poi = features.at(id);
        if (poi.embedding_subsets.empty()) {
          raw.push_back(&poi.embedding);
        } else {
          for (const nn::Vec& subset : poi.embedding_subsets) {
            raw.push_back(&subset);
          }
        }
      }
      adapter.input_mean.assign(input, 0.0);
      adapter.input_std.assign(input, 1.0);
      for (const nn::Vec* x : raw) {
        for (std::size_t i = 0; i < input; ++i) adapter.input_mean[i] += (*x)[i];
      }
      for (double& m : adapter.input_mean) {
        m /= static_cast<double>(raw.size());
      }
      if (raw.size() > 1) {
        nn::Vec ss(input, 0.0);
        for (const nn::Vec* x : raw) {
          for (std::size_t i = 0; i < input; ++i) {
            const double d = (*x)[i] - adapter.input_mean[i];
            ss[i] += d * d;
          }
        }
        for (std::size_t i = 0; i < input; ++i) {
          const double s = std::sqrt(ss[i] / static_cast<double>(raw.size() - 1));
          adapter.input_std[i] = s < 1e-12 ? 1.0 : s;
        }
      }
      for (const std::string& id : split.train) {
        const PoiFeatures& poi = features.at(id);
        if (poi.embedding_subsets.empty()) {
          add(train,
              standardize(poi.embedding, adapter.input_mean, adapter.input_std),
              poi.label);
        } else {
          for (const nn::Vec& subset : poi.embedding_subsets) {
            add(train, standardize(subset, adapter.input_mean, adapter.input_std),
                poi.label);
          }
        }
      }
      for (const std::string& id : split.val) {
        const PoiFeatures& poi = features.at(id);
        add(val, standardize(poi.embedding, adapter.input_mean, adapter.input_std),
            poi.label);
      }
      break;
    }
    case Channel::Population: {
      input = kGroupCount;
      for (const std::string& id : split.train) {
        const PoiFeatures& poi = features.at(id);
        if (poi.population.size() != kGroupCount) {
          throw ValidationError("poi '" + id +
                                "' has no population shares for the population channel");
        }
        add(train, poi.population, poi.label);
      }
      for (const std::string& id : split.val) {
        const PoiFeatures& poi = features.at(id);
        if (poi.population.size() != kGroupCount) {
          throw ValidationError("poi '" + id +
                                "' has no population shares for the population channel");
        }
        add(val, poi.population, poi.label);
      }
      break;
    }
  }

  DetRng rng = DetRng(config.seed).fork(std::string("adapter-") +
                                        channel_name(channel));
  nn::DenseStack stack(adapter_sizes(channel, input), rng);
  auto params = stack.params("stack");

  const LoopResult fitted = run_training_loop(
      train.x.size(), config, params,
      [&](const std::vector<std::size_t>& batch) {
        double sq = 0.0;
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (std::size_t index : batch) {
          nn::DenseStack::Tape tape;
          const double err =
              stack.forward(train.x[index], tape)[0] - train.y[index];
          sq += err * err;
          stack.backward(tape, {2.0 * err * scale});
        }
        return sq;
      },
      [&] { return scalar_mse(stack, val); });

  adapter.stack = stack;
  for (std::size_t i = 0; i < head_layers_to_drop(channel); ++i) {
    adapter.stack = adapter.stack.without_last_layer();
  }
  adapter.log = fitted.log;
  adapter.best_epoch = fitted.best_epoch;
  adapter.best_val_mse = fitted.best_val_mse;
  return adapter;
}

void save_adapter(const std::filesystem::path& path,
                  const TrainedAdapter& adapter) {
  TrainedAdapter copy = adapter;  // params() needs mutable storage
  std::vector<nn::NamedArray> arrays =
      nn::snapshot_params(copy.stack.params("stack"));
  nn::NamedArray sizes;
  sizes.name = "stack.sizes";
  sizes.shape = {copy.stack.sizes().size()};
  for (std::size_t s : copy.stack.sizes()) {
    sizes.data.push_back(static_cast<double>(s));
  }
  arrays.push_back(std::move(sizes));
  if (!adapter.input_mean.empty()) {
    arrays.push_back({"input_mean", {adapter.input_mean.size()}, adapter.input_mean});
    arrays.push_back({"input_std", {adapter.input_std.size()}, adapter.input_std});
  }

  nn::CheckpointMeta meta;
  meta.tag = channel_name(adapter.channel);
  meta.epoch = static_cast<std::int64_t>(adapter.best_epoch);
  meta.val_loss = adapter.best_val_mse;
  meta.extra["channel"] = static_cast<double>(channel_index(adapter.channel));
  nn::save_checkpoint(path, arrays, meta);
}

TrainedAdapter load_adapter(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  const nn::NamedArray* sizes = ckpt.find("stack.sizes");
  if (!sizes) {
    throw ValidationError("checkpoint " + path.string() +
                          " is not an adapter: no stack sizes");
  }
  std::vector<std::size_t> shape;
  for (double s : sizes->data) shape.push_back(static_cast<std::size_t>(s));

  TrainedAdapter adapter;
  const auto channel_it = ckpt.meta.extra.find("channel");
  if (channel_it == ckpt.meta.extra.end()) {
    throw ValidationError("checkpoint " + path.string() +
                          " does not name its channel");
  }
  adapter.channel = static_cast<Channel>(
      static_cast<std::size_t>(channel_it->second));
  if (channel_index(adapter.channel) >= kChannelCount) {
    throw ValidationError("checkpoint " + path.string() +
                          " names an unknown channel");
  }

  DetRng rng(0);
  adapter.stack = nn::DenseStack(shape, rng);
  nn::restore_params(ckpt, adapter.stack.params("stack"));
  if (const nn::NamedArray* mean = ckpt.find("input_mean")) {
    adapter.input_mean = mean->data;
    const nn::NamedArray* std_dev = ckpt.find("input_std");
    if (!std_dev || std_dev->data.size() != mean->data.size()) {
      throw ValidationError("checkpoint " + path.string() +
                            " has mismatched standardization arrays");
    }
    adapter.input_std = std_dev->data;
  }
  adapter.best_epoch = static_cast<std::size_t>(std::max<std::int64_t>(
      0, ckpt.meta.epoch));
  adapter.best_val_mse = ckpt.meta.val_loss;
  return adapter;
}

NeighborSets build_neighbor_sets(const std::string& poi_id,
                                 const std::vector<std::string>& candidates,
                                 const FeatureStore& features, std::size_t k) {
  const PoiFeatures& self = features.at(poi_id);
  std::vector<const PoiFeatures*> pool;
  pool.reserve(candidates.size());
  for (const std::string& id : candidates) {
    if (id == poi_id) continue;
    pool.push_back(&features.at(id));
  }
  if (pool.empty()) {
    throw ValidationError("no neighbor candidates for poi '" + poi_id + "'");
  }

  const auto top = [&](auto&& key_desc_is_better) {
    std::vector<const PoiFeatures*> ranked = pool;
    std::sort(ranked.begin(), ranked.end(),
              [&](const PoiFeatures* a, const PoiFeatures* b) {
                const double ka = key_desc_is_better(*a);
                const double kb = key_desc_is_better(*b);
                if (ka != kb) return ka > kb;
                return a->poi_id < b->poi_id;
              });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
      ids.push_back(ranked[i]->poi_id);
    }
    return ids;
  };

  NeighborSets sets;
  sets.reasoning_ids = top([&](const PoiFeatures& cand) {
    return cosine_similarity(self.ratings, cand.ratings);
  });
  sets.embedding_ids = top([&](const PoiFeatures& cand) {
    return cosine_similarity(self.embedding, cand.embedding);
  });
  sets.geo_ids = top([&](const PoiFeatures& cand) {
    return -haversine_meters(self.location, cand.location);
  });
  return sets;
}

void save_neighbor_sets(const std::filesystem::path& path,
                        const NeighborIndex& index) {
  nlohmann::json sets = nlohmann::json::object();
  for (const auto& [poi_id, ns] : index.sets) {
    sets[poi_id] = {{"reasoning", ns.reasoning_ids},
                    {"embedding", ns.embedding_ids},
                    {"geo", ns.geo_ids}};
  }
  nlohmann::json j;
  j["k"] = index.k;
  j["sets"] = std::move(sets);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

NeighborIndex load_neighbor_sets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed neighbor sets " + path.string() + ": " + e.what());
  }
  NeighborIndex index;
  try {
    index.k = j.at("k").get<std::size_t>();
    for (const auto& [poi_id, entry] : j.at("sets").items()) {
      NeighborSets sets;
      sets.reasoning_ids = entry.at("reasoning").get<std::vector<std::string>>();
      sets.embedding_ids = entry.at("embedding").get<std::vector<std::string>>();
      sets.geo_ids = entry.at("geo").get<std::vector<std::string>>();
      index.sets.emplace(poi_id, std::move(sets));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("neighbor sets " + path.string() +
                          " are malformed: " + e.what());
  }
  return index;
}

std::size_t ReemModel::fusion_input() const {
  std::size_t total = 0;
  if (active[channel_index(Channel::Reasoning)]) {
    total += kReasoningRepDim + kReasoningAggDim;
  }
  if (active[channel_index(Channel::Embedding)]) {
    total += kEmbeddingRepDim + kEmbeddingAggDim;
  }
  if (active[channel_index(Channel::Population)]) {
    total += kPopulationRepDim + kPopulationAggDim;
  }
  return total;
}

void ReemModel::validate() const {
  if (!active[0] && !active[1] && !active[2]) {
    throw ValidationError("model has no active channels");
  }
  const auto expect = [](const std::vector<std::size_t>& got,
                         const std::vector<std::size_t>& tail,
                         const char* what) {
    if (got.size() != tail.size() + 1 ||
        !std::equal(tail.begin(), tail.end(), got.begin() + 1)) {
      throw ValidationError(std::string(what) + " has the wrong shape");
    }
  };
  if (active[channel_index(Channel::Reasoning)]) {
    expect(rating_adapter.sizes(), {512, 128, 64}, "rating adapter");
    if (gat_r.in_dim() != kReasoningRepDim || gat_r.out_dim() != kReasoningAggDim) {
      throw ValidationError("reasoning attention has the wrong shape");
    }
  }
  if (active[channel_index(Channel::Embedding)]) {
    expect(embedding_adapter.sizes(), {512, 256, 128}, "embedding adapter");
    if (gat_e.in_dim() != kEmbeddingRepDim || gat_e.out_dim() != kEmbeddingAggDim) {
      throw ValidationError("embedding attention has the wrong shape");
    }
    if (!embedding_mean.empty() &&
        embedding_mean.size() != embedding_adapter.input_size()) {
      throw ValidationError("embedding standardization has the wrong width");
    }
  }
  if (active[channel_index(Channel::Population)]) {
    expect(population_adapter.sizes(), {100, 30}, "population adapter");
    if (population_adapter.input_size() != kGroupCount) {
      throw ValidationError("population adapter has the wrong shape");
    }
    if (gat_p.in_dim() != kPopulationRepDim || gat_p.out_dim() != kPopulationAggDim) {
      throw ValidationError("population attention has the wrong shape");
    }
  }
  const std::vector<std::size_t> want = {fusion_input(), 512, 128, 64, 1};
  if (fusion.sizes() != want) {
    throw ValidationError("fusion stack expects input " +
                          std::to_string(fusion_input()) + "; got shape of " +
                          std::to_string(fusion.input_size()));
  }
}

ReemModel make_reem_model(std::size_t rating_width,
                          std::size_t embedding_width,
                          const std::array<bool, kChannelCount>& active,
                          std::uint64_t seed) {
  ReemModel model;
  model.active = active;
  const DetRng root(seed);
  if (active[channel_index(Channel::Reasoning)]) {
    if (rating_width == 0) {
      throw ValidationError("reasoning channel is active but rating width is 0");
    }
    DetRng rng = root.fork("rating_adapter");
    model.rating_adapter =
        nn::DenseStack({rating_width, 512, 128, 64}, rng);
    DetRng grng = root.fork("gat_r");
    model.gat_r =
        nn::GraphAttentionLayer(kReasoningRepDim, kReasoningAggDim, grng);
  }
  if (active[channel_index(Channel::Embedding)]) {
    if (embedding_width == 0) {
      throw ValidationError("embedding channel is active but embedding width is 0");
    }
    DetRng rng = root.fork("embedding_adapter");
    model.embedding_adapter =
        nn::DenseStack({embedding_width, 512, 256, 128}, rng);
    DetRng grng = root.fork("gat_e");
    model.gat_e =
        nn::GraphAttentionLayer(kEmbeddingRepDim, kEmbeddingAggDim, grng);
  }
  if (active[channel_index(Channel::Population)]) {
    DetRng rng = root.fork("population_adapter");
    model.population_adapter = nn::DenseStack({kGroupCount, 100, 30}, rng);
    DetRng grng = root.fork("gat_p");
    model.gat_p =
        nn::GraphAttentionLayer(kPopulationRepDim, kPopulationAggDim, grng);
  }
  DetRng frng = root.fork("fusion");
  model.fusion = nn::DenseStack({model.fusion_input(), 512, 128, 64, 1}, frng);
  return model;
}

std::vector<nn::ParamView> model_params(ReemModel& model,
                                        bool include_adapters) {
  std::vector<nn::ParamView> params;
  const auto extend = [&](std::vector<nn::ParamView> views) {
    params.insert(params.end(), views.begin(), views.end());
  };
  if (model.active[channel_index(Channel::Reasoning)]) {
    extend(model.gat_r.params("gat_r"));
  }
  if (model.active[channel_index(Channel::Embedding)]) {
    extend(model.gat_e.params("gat_e"));
  }
  if (model.active[channel_index(Channel::Population)]) {
    extend(model.gat_p.params("gat_p"));
  }
  extend(model.fusion.params("fusion"));
  if (include_adapters) {
    if (model.active[channel_index(Channel::Reasoning)]) {
      extend(model.rating_adapter.params("adapter_rating"));
    }
    if (model.active[channel_index(Channel::Embedding)]) {
      extend(model.embedding_adapter.params("adapter_embedding"));
    }
    if (model.active[channel_index(Channel::Population)]) {
      extend(model.population_adapter.params("adapter_population"));
    }
  }
  return params;
}

ChannelRepresentation adapt_poi(const ReemModel& model,
                                const PoiFeatures& features) {
  return compute_rep(model, features);
}

double predict(const std::string& poi_id, const ReemModel& model,
               const FeatureStore& features, const NeighborSets& neighbors) {
  RepMap reps;
  const auto ensure = [&](const std::string& id) {
    if (reps.count(id)) return;
    const PoiFeatures* poi = features.find(id);
    if (!poi) {
      throw ValidationError(id == poi_id
                                ? "poi '" + id + "' has no stored features"
                                : "neighbor '" + id + "' of poi '" + poi_id +
                                      "' has no stored features");
    }
    reps.emplace(id, compute_rep(model, *poi));
  };
  ensure(poi_id);
  for (const std::string& id : neighbors.reasoning_ids) ensure(id);
  for (const std::string& id : neighbors.embedding_ids) ensure(id);
  for (const std::string& id : neighbors.geo_ids) ensure(id);

  return forward_example(model, reps, poi_id, neighbors, nullptr);
}

double predictor_loss(ReemModel& model, const FeatureStore& features,
                      const std::vector<std::string>& ids,
                      const NeighborIndex& neighbors, bool write_grads) {
  const RepMap reps = build_reps(model, features);
  return loss_with_reps(model, reps, features, ids, neighbors, write_grads);
}

PredictorResult train_predictor(const FeatureStore& features,
                                const DataSplit& split,
                                const std::vector<TrainedAdapter>& adapters,
                                const TrainConfig& config,
                                const std::filesystem::path& out_dir) {
  features.validate();
  config.validate();
  require_non_empty(split.train, "training");
  require_non_empty(split.val, "validation");
  const std::array<bool, kChannelCount> active = active_of(adapters);

  PredictorResult result;
  result.model = make_reem_model(
      active[channel_index(Channel::Reasoning)] ? features.rating_width() : 0,
      active[channel_index(Channel::Embedding)] ? features.embedding_width() : 0,
      active, config.seed);
  for (const TrainedAdapter& adapter : adapters) {
    switch (adapter.channel) {
      case Channel::Reasoning:
        result.model.rating_adapter = adapter.stack;
        break;
      case Channel::Embedding:
        result.model.embedding_adapter = adapter.stack;
        result.model.embedding_mean = adapter.input_mean;
        result.model.embedding_std = adapter.input_std;
        break;
      case Channel::Population:
        result.model.population_adapter = adapter.stack;
        break;
    }
    result.model.frozen[channel_index(adapter.channel)] = true;
  }
  result.model.validate();

  result.neighbors.k = kNeighborCount;
  for (const PoiFeatures& poi : features.pois) {
    result.neighbors.sets.emplace(
        poi.poi_id,
        build_neighbor_sets(poi.poi_id, split.train, features, kNeighborCount));
  }

  const RepMap reps = build_reps(result.model, features);
  auto params = model_params(result.model, false);

  const LoopResult fitted = run_training_loop(
      split.train.size(), config, params,
      [&](const std::vector<std::size_t>& batch) {
        std::vector<std::string> ids;
        ids.reserve(batch.size());
        for (std::size_t index : batch) ids.push_back(split.train[index]);
        const double mse = loss_with_reps(result.model, reps, features, ids,
                                          result.neighbors, true);
        return mse * static_cast<double>(ids.size());
      },
      [&] {
        return loss_with_reps(result.model, reps, features, split.val,
                              result.neighbors, false);
      });

  result.log = fitted.log;
  result.best_epoch = fitted.best_epoch;
  result.best_val_mse = fitted.best_val_mse;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "adapter");
    for (const TrainedAdapter& adapter : adapters) {
      save_adapter(out_dir / "adapter" /
                       (std::string(channel_name(adapter.channel)) + ".ckpt"),
                   adapter);
    }
    std::vector<nn::NamedArray> arrays = nn::snapshot_params(params);
    nn::CheckpointMeta meta;
    meta.tag = "predictor";
    meta.seed = config.seed;
    meta.epoch = static_cast<std::int64_t>(result.best_epoch);
    meta.val_loss = result.best_val_mse;
    meta.extra["active_reasoning"] = active[0] ? 1.0 : 0.0;
    meta.extra["active_embedding"] = active[1] ? 1.0 : 0.0;
    meta.extra["active_population"] = active[2] ? 1.0 : 0.0;
    meta.extra["rating_width"] = static_cast<double>(features.rating_width());
    meta.extra["embedding_width"] =
        static_cast<double>(features.embedding_width());
    nn::save_checkpoint(out_dir / "predictor.ckpt", arrays, meta);
    save_neighbor_sets(out_dir / "neighbor_sets.json", result.neighbors);
    write_train_log(out_dir / "train_log.csv", result.log);
  }
  return result;
}

ReemModel load_model_dir(const std::filesystem::path& dir) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(dir / "predictor.ckpt");
  const auto flag = [&](const char* key) {
    const auto it = ckpt.meta.extra.find(key);
    if (it == ckpt.meta.extra.end()) {
      throw ValidationError("predictor checkpoint is missing '" +
                            std::string(key) + "'");
    }
    return it->second;
  };
  const std::array<bool, kChannelCount> active = {
      flag("active_reasoning") != 0.0, flag("active_embedding") != 0.0,
      flag("active_population") != 0.0};

  ReemModel model = make_reem_model(
      static_cast<std::size_t>(flag("rating_width")),
      static_cast<std::size_t>(flag("embedding_width")), active,
      ckpt.meta.seed);
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    if (!active[c]) continue;
    const Channel channel = static_cast<Channel>(c);
    const TrainedAdapter adapter = load_adapter(
        dir / "adapter" / (std::string(channel_name(channel)) + ".ckpt"));
    if (adapter.channel != channel) {
      throw ValidationError(std::string("adapter file for the ") +
                            channel_name(channel) + " channel holds a " +
                            channel_name(adapter.channel) + " adapter");
    }
    switch (channel) {
      case Channel::Reasoning:
        model.rating_adapter = adapter.stack;
        break;
      case Channel::Embedding:
        model.embedding_adapter = adapter.stack;
        model.embedding_mean = adapter.input_mean;
        model.embedding_std = adapter.input_std;
        break;
      case Channel::Population:
        model.population_adapter = adapter.stack;
        break;
    }
    model.frozen[c] = true;
  }
  nn::restore_params(ckpt, model_params(model, false));
  model.validate();
  return model;
}

std::vector<double> predict_ids(const ReemModel& model,
                                const FeatureStore& features,
                                const std::vector<std::string>& ids,
                                const std::vector<std::string>& candidates) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const NeighborSets neighbors =
        build_neighbor_sets(id, candidates, features, kNeighborCount);
    out.push_back(clip_unit(predict(id, model, features, neighbors)));
  }
  return out;
}

MetricsRecord evaluate_ids(const ReemModel& model, const FeatureStore& features,
                           const std::vector<std::string>& ids,
                           const std::vector<std::string>& candidates) {
  const std::vector<double> predicted =
      predict_ids(model, features, ids, candidates);
  std::vector<double> actual;
  actual.reserve(ids.size());
  for (const std::string& id : ids) actual.push_back(features.at(id).label);
  return compute_metrics(actual, predicted);
}

AblationResult ablate(const FeatureStore& features, const DataSplit& split,
                      Variant variant, const TrainConfig& config) {
  require_non_empty(split.test, "test");

  std::vector<Channel> channels;
  switch (variant) {
    case Variant::PopulationOnly:
      channels = {Channel::Population};
      break;
    case Variant::EmbeddingOnly:
      channels = {Channel::Embedding};
      break;
    case Variant::RatingOnly:
      channels = {Channel::Reasoning};
      break;
    case Variant::NoCodebook:
    case Variant::Full:
      channels = {Channel::Reasoning, Channel::Embedding, Channel::Population};
      break;
  }

  AblationResult result;
  result.variant = variant;
  for (Channel channel : channels) {
    result.adapters.push_back(train_adapter(channel, features, split, config));
  }
  result.predictor = train_predictor(features, split, result.adapters, config);
  result.test_metrics =
      evaluate_ids(result.predictor.model, features, split.test, split.train);
  return result;
}

}  // namespace reem::predictor
