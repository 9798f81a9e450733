#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reem/coder/codebook.hpp"
#include "reem/metrics.hpp"
#include "reem/predictor.hpp"

namespace reem::eval {

/// Mean and sample standard deviation (n-1 denominator) of one metric over
/// the evaluation repetitions.
struct MetricStats {
  double mean = 0.0;
  double std_dev = 0.0;
};

/// Repeated-subsample evaluation: metrics over seeded half-sized subsamples
/// of the test set, reported as mean +/- sample std. per_rep keeps the raw
/// records so significance tests can compare per-repetition scores.
struct RepeatedEvalReport {
  MetricStats mse;
  MetricStats rmse;
  MetricStats mae;
  MetricStats r2;
  std::vector<MetricsRecord> per_rep;
  std::size_t reps = 0;
  double frac = 0.0;
  std::uint64_t seed = 0;
};

/// The ids drawn for one repetition: a seeded shuffle of the test ids,
/// truncated to floor(frac * n), without replacement. Exposed so reports
/// can be recomputed independently.
std::vector<std::string> eval_subsample(const std::vector<std::string>& test_ids,
                                        std::size_t rep, double frac,
                                        std::uint64_t seed);

/// Repeated evaluation over aligned label/prediction vectors. Requires at
/// least four test ids and frac in (0, 1].
RepeatedEvalReport repeated_evaluation(const std::vector<std::string>& test_ids,
                                       const std::vector<double>& labels,
                                       const std::vector<double>& predictions,
                                       std::size_t reps = 5, double frac = 0.5,
                                       std::uint64_t seed = 20240601);

/// Convenience overload: predicts the test ids with the model (neighbors
/// drawn from candidates, predictions clipped to the label range) and then
/// evaluates the pairs. Read-only on the model and features.
RepeatedEvalReport repeated_evaluation(const predictor::ReemModel& model,
                                       const predictor::FeatureStore& features,
                                       const std::vector<std::string>& test_ids,
                                       const std::vector<std::string>& candidates,
                                       std::size_t reps = 5, double frac = 0.5,
                                       std::uint64_t seed = 20240601);

/// Welch two-sample t-test on per-repetition scores. Elementwise-equal
/// arrays return exactly 1.0; zero variance on both sides with unequal
/// means returns the 0.0 sentinel. Both sides need at least two scores.
/// Sample sizes here are tiny, so treat the p-values as indicative.
double significance_test(const std::vector<double>& a_scores,
                         const std::vector<double>& b_scores);

/// Transfer run: the target city's reasoning channel reuses a codebook
/// derived elsewhere, so the feature store's rating width must equal five
/// rows times the source codebook size. Trains the full model on the
/// target's own 6:2:2 split and evaluates the test split repeatedly.
struct CrossCityResult {
  predictor::DataSplit split;
  std::vector<predictor::TrainedAdapter> adapters;
  predictor::PredictorResult predictor;
  RepeatedEvalReport report;
};

CrossCityResult cross_city_run(const coder::Codebook& source_codebook,
                               const predictor::FeatureStore& target_features,
                               const predictor::TrainConfig& config,
                               std::size_t reps = 5, double frac = 0.5);

/// Reference results for the Tucson transfer study: the model carrying a
/// Philadelphia-derived codebook against the strongest baseline trained
/// on Tucson alone.
inline constexpr double kTucsonTransferR2 = 0.3744;
inline constexpr double kTucsonBaselineR2 = 0.3147;

/// One row of a results table: a named model variant with its repeated
/// evaluation. p-values are computed against the baseline row's per-rep
/// scores (mse and r2), so the baseline row shows p = 1 against itself.
struct ReportRow {
  std::string name;
  RepeatedEvalReport eval;
};

struct EvalReport {
  std::string title;
  std::vector<ReportRow> rows;
  std::size_t baseline_row = 0;
};

/// Deterministic renderings of the same report. write_report writes
/// report.json and report.md into dir (creating it) and never mutates its
/// inputs.
std::string render_report_markdown(const EvalReport& report);
std::string render_report_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& dir);

/// Optional scatter data for external plotting: one "label,prediction"
/// line per pair.
void write_scatter_data(const std::vector<double>& labels,
                        const std::vector<double>& predictions,
                        const std::filesystem::path& file);

}  // namespace reem::eval
