#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "reem/predictor.hpp"
#include "reem/rng.hpp"

namespace fixture {

/// Synthetic feature store around one latent visit pattern t per POI. The
/// ratings and embeddings both encode t, so label weights control which
/// channels carry recoverable signal.
struct StoreOptions {
  std::size_t n = 60;
  std::size_t codes = 2;   // rating width = 5 * codes
  std::size_t dims = 12;   // embedding dimension
  std::size_t subsets = 2;
  double population_signal = 0.0;  // label weight on (hispanic - white)
  double text_signal = 0.0;        // label weight on the latent t
  double noise = 0.01;
  std::uint64_t seed = 20240601;
};

inline reem::predictor::FeatureStore make_store(const StoreOptions& opts) {
  using reem::predictor::PoiFeatures;
  reem::DetRng rng(opts.seed);
  reem::predictor::FeatureStore store;
  for (std::size_t i = 0; i < opts.n; ++i) {
    PoiFeatures poi;
    poi.poi_id = "p" + std::string(i < 10 ? "0" : "") + std::to_string(i);

    poi.population.resize(5);
    double total = 0.0;
    for (double& share : poi.population) {
      share = rng.uniform(0.05, 1.0);
      total += share;
    }
    for (double& share : poi.population) share /= total;

    const double t = rng.uniform01();
    const std::size_t width = 5 * opts.codes;
    poi.ratings.resize(width);
    for (std::size_t j = 0; j < width; ++j) {
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      poi.ratings[j] = std::clamp(
          5.0 + 4.0 * (t - 0.5) * sign + rng.normal(0.0, 0.2), 0.0, 10.0);
    }

    poi.embedding_subsets.resize(opts.subsets);
    poi.embedding.assign(opts.dims, 0.0);
    for (auto& subset : poi.embedding_subsets) {
      subset.resize(opts.dims);
      subset[0] = t + rng.normal(0.0, 0.02);
      for (std::size_t d = 1; d < opts.dims; ++d) {
        subset[d] = rng.normal(0.0, 0.3);
      }
      for (std::size_t d = 0; d < opts.dims; ++d) {
        poi.embedding[d] += subset[d];
      }
    }
    for (double& v : poi.embedding) {
      v /= static_cast<double>(opts.subsets);
    }

    poi.location = reem::GeoPoint::make(33.3 + rng.uniform01() * 0.2,
                                        -112.1 + rng.uniform01() * 0.2);

    poi.label = std::clamp(
        0.5 + opts.population_signal * (poi.population[0] - poi.population[3]) +
            opts.text_signal * (t - 0.5) + rng.normal(0.0, opts.noise),
        0.0, 1.0);
    store.pois.push_back(std::move(poi));
  }
  return store;
}

inline std::vector<std::string> store_ids(
    const reem::predictor::FeatureStore& store) {
  std::vector<std::string> ids;
  for (const auto& poi : store.pois) ids.push_back(poi.poi_id);
  return ids;
}

}  // namespace fixture
