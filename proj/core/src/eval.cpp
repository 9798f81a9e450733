#include "reem/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "reem/composition.hpp"
#include "reem/errors.hpp"
#include "reem/format.hpp"
#include "reem/rng.hpp"

namespace reem::eval {
namespace {

MetricStats stats_of(const std::vector<double>& xs) {
  MetricStats out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std_dev = std::sqrt(ss / (n - 1.0));
  return out;
}

void check_scores(const std::vector<double>& scores, const char* side) {
  if (scores.size() < 2) {
    throw ValidationError("significance test needs at least two " +
                          std::string(side) + " scores, got " +
                          std::to_string(scores.size()));
  }
  for (double x : scores) {
    if (!std::isfinite(x)) {
      throw ValidationError("significance test scores must be finite");
    }
  }
}

/// JSON has no literal for non-finite numbers, so the R^2 sentinel is
/// carried as a string instead of being collapsed to null.
nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

nlohmann::json record_to_json(const MetricsRecord& record) {
  return {{"mse", json_number(record.mse)},
          {"rmse", json_number(record.rmse)},
          {"mae", json_number(record.mae)},
          {"r2", json_number(record.r2)},
          {"n", record.n}};
}

nlohmann::json stats_to_json(const MetricStats& stats) {
  return {{"mean", json_number(stats.mean)}, {"std", json_number(stats.std_dev)}};
}

/// Markdown tables round to four significant digits for readability; the
/// json mirror keeps full precision.
std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string cell(const MetricStats& stats) {
  return short_double(stats.mean) + " +/- " + short_double(stats.std_dev);
}

std::vector<double> per_rep_of(const RepeatedEvalReport& report,
                               double MetricsRecord::*field) {
  std::vector<double> out;
  out.reserve(report.per_rep.size());
  for (const MetricsRecord& record : report.per_rep) out.push_back(record.*field);
  return out;
}

/// p-value of row vs baseline per-rep scores, or the empty value when a
/// side has fewer than two repetitions or carries a non-finite sentinel.
nlohmann::json row_p(const RepeatedEvalReport& row,
                     const RepeatedEvalReport& baseline,
                     double MetricsRecord::*field) {
  if (row.per_rep.size() < 2 || baseline.per_rep.size() < 2) return nullptr;
  const std::vector<double> a = per_rep_of(row, field);
  const std::vector<double> b = per_rep_of(baseline, field);
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(a.begin(), a.end(), finite) ||
      !std::all_of(b.begin(), b.end(), finite)) {
    return nullptr;
  }
  return significance_test(a, b);
}

std::string p_cell(const nlohmann::json& p) {
  if (p.is_null()) return "n/a";
  return short_double(p.get<double>());
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + file.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + file.string() + "'");
}

}  // namespace

std::vector<std::string> eval_subsample(const std::vector<std::string>& test_ids,
                                        std::size_t rep, double frac,
                                        std::uint64_t seed) {
  if (!(frac > 0.0) || frac > 1.0) {
    throw ValidationError("sample fraction " + canonical_double(frac) +
                          " is outside (0, 1]");
  }
  const auto count =
      static_cast<std::size_t>(frac * static_cast<double>(test_ids.size()));
  if (count == 0) {
    throw ValidationError("sample fraction " + canonical_double(frac) +
                          " leaves an empty subsample of " +
                          std::to_string(test_ids.size()) + " test ids");
  }
  std::vector<std::string> ids = test_ids;
  DetRng(seed).fork("rep-" + std::to_string(rep)).shuffle(ids);
  ids.resize(count);
  return ids;
}

RepeatedEvalReport repeated_evaluation(const std::vector<std::string>& test_ids,
                                       const std::vector<double>& labels,
                                       const std::vector<double>& predictions,
                                       std::size_t reps, double frac,
                                       std::uint64_t seed) {
  if (test_ids.size() < 4) {
    throw ValidationError("test set too small: " +
                          std::to_string(test_ids.size()) +
                          " ids, need at least 4");
  }
  if (labels.size() != test_ids.size() || predictions.size() != test_ids.size()) {
    throw ValidationError("repeated evaluation needs one label and one "
                          "prediction per test id");
  }
  if (reps == 0) throw ValidationError("repetition count must be positive");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < test_ids.size(); ++i) index[test_ids[i]] = i;
  if (index.size() != test_ids.size()) {
    throw ValidationError("test ids contain duplicates");
  }

  RepeatedEvalReport report;
  report.reps = reps;
  report.frac = frac;
  report.seed = seed;
  std::vector<double> mse, rmse, mae, r2;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const std::vector<std::string> ids = eval_subsample(test_ids, rep, frac, seed);
    std::vector<double> y, yhat;
    y.reserve(ids.size());
    yhat.reserve(ids.size());
    for (const std::string& id : ids) {
      const std::size_t i = index.at(id);
      y.push_back(labels[i]);
      yhat.push_back(predictions[i]);
    }
    const MetricsRecord record = compute_metrics(y, yhat);
    mse.push_back(record.mse);
    rmse.push_back(record.rmse);
    mae.push_back(record.mae);
    r2.push_back(record.r2);
    report.per_rep.push_back(record);
  }
  report.mse = stats_of(mse);
  report.rmse = stats_of(rmse);
  report.mae = stats_of(mae);
  report.r2 = stats_of(r2);
  return report;
}

RepeatedEvalReport repeated_evaluation(const predictor::ReemModel& model,
                                       const predictor::FeatureStore& features,
                                       const std::vector<std::string>& test_ids,
                                       const std::vector<std::string>& candidates,
                                       std::size_t reps, double frac,
                                       std::uint64_t seed) {
  const std::vector<double> predictions =
      predictor::predict_ids(model, features, test_ids, candidates);
  std::vector<double> labels;
  labels.reserve(test_ids.size());
  for (const std::string& id : test_ids) labels.push_back(features.at(id).label);
  return repeated_evaluation(test_ids, labels, predictions, reps, frac, seed);
}

double significance_test(const std::vector<double>& a_scores,
                         const std::vector<double>& b_scores) {
  check_scores(a_scores, "left-hand");
  check_scores(b_scores, "right-hand");
  if (a_scores == b_scores) return 1.0;

  const MetricStats a = stats_of(a_scores);
  const MetricStats b = stats_of(b_scores);
  const double var_a = a.std_dev * a.std_dev;
  const double var_b = b.std_dev * b.std_dev;
  if (var_a == 0.0 && var_b == 0.0) {
    return a.mean == b.mean ? 1.0 : 0.0;
  }

  const double na = static_cast<double>(a_scores.size());
  const double nb = static_cast<double>(b_scores.size());
  const double sa = var_a / na;
  const double sb = var_b / nb;
  const double se2 = sa + sb;
  const double t = (a.mean - b.mean) / std::sqrt(se2);
  const double df =
      se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  const boost::math::students_t_distribution<double> dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return std::clamp(p, 0.0, 1.0);
}

CrossCityResult cross_city_run(const coder::Codebook& source_codebook,
                               const predictor::FeatureStore& target_features,
                               const predictor::TrainConfig& config,
                               std::size_t reps, double frac) {
  if (source_codebook.empty()) {
    throw ValidationError("cross-city run needs a source codebook with at "
                          "least one code");
  }
  target_features.validate();
  const std::size_t expected = kGroupCount * source_codebook.size();
  if (target_features.rating_width() != expected) {
    throw ValidationError(
        "target rating width " + std::to_string(target_features.rating_width()) +
        " does not match the " + std::to_string(expected) +
        " columns implied by the source codebook");
  }

  CrossCityResult result;
  std::vector<std::string> ids;
  ids.reserve(target_features.pois.size());
  for (const auto& poi : target_features.pois) ids.push_back(poi.poi_id);
  result.split = predictor::split_dataset(ids, config.seed);

  for (predictor::Channel channel :
       {predictor::Channel::Reasoning, predictor::Channel::Embedding,
        predictor::Channel::Population}) {
    result.adapters.push_back(
        predictor::train_adapter(channel, target_features, result.split, config));
  }
  result.predictor = predictor::train_predictor(target_features, result.split,
                                                result.adapters, config);
  result.report =
      repeated_evaluation(result.predictor.model, target_features,
                          result.split.test, result.split.train, reps, frac,
                          config.seed);
  return result;
}

std::string render_report_markdown(const EvalReport& report) {
  if (report.rows.empty()) throw ValidationError("report has no rows");
  if (report.baseline_row >= report.rows.size()) {
    throw ValidationError("baseline row " + std::to_string(report.baseline_row) +
                          " is out of range");
  }
  const RepeatedEvalReport& baseline = report.rows[report.baseline_row].eval;

  std::ostringstream md;
  md << "# " << report.title << "\n\n";
  md << "Entries are mean +/- sample std over " << baseline.reps
     << " repetitions on " << canonical_double(baseline.frac * 100.0)
     << "% subsamples of the test set. p-values are Welch t-tests of "
        "per-repetition scores against `"
     << report.rows[report.baseline_row].name
     << "`; with so few repetitions they are indicative, not conclusive.\n\n";
  md << "| model | MSE | RMSE | MAE | R2 | p (MSE) | p (R2) |\n";
  md << "| --- | --- | --- | --- | --- | --- | --- |\n";
  for (const ReportRow& row : report.rows) {
    md << "| " << row.name << " | " << cell(row.eval.mse) << " | "
       << cell(row.eval.rmse) << " | " << cell(row.eval.mae) << " | "
       << cell(row.eval.r2) << " | "
       << p_cell(row_p(row.eval, baseline, &MetricsRecord::mse)) << " | "
       << p_cell(row_p(row.eval, baseline, &MetricsRecord::r2)) << " |\n";
  }
  return md.str();
}

std::string render_report_json(const EvalReport& report) {
  if (report.rows.empty()) throw ValidationError("report has no rows");
  if (report.baseline_row >= report.rows.size()) {
    throw ValidationError("baseline row " + std::to_string(report.baseline_row) +
                          " is out of range");
  }
  const RepeatedEvalReport& baseline = report.rows[report.baseline_row].eval;

  nlohmann::json rows = nlohmann::json::array();
  for (const ReportRow& row : report.rows) {
    nlohmann::json entry = {
        {"name", row.name},
        {"reps", row.eval.reps},
        {"frac", row.eval.frac},
        {"seed", row.eval.seed},
        {"mse", stats_to_json(row.eval.mse)},
        {"rmse", stats_to_json(row.eval.rmse)},
        {"mae", stats_to_json(row.eval.mae)},
        {"r2", stats_to_json(row.eval.r2)},
        {"p_mse", row_p(row.eval, baseline, &MetricsRecord::mse)},
        {"p_r2", row_p(row.eval, baseline, &MetricsRecord::r2)},
    };
    nlohmann::json per_rep = nlohmann::json::array();
    for (const MetricsRecord& record : row.eval.per_rep) {
      per_rep.push_back(record_to_json(record));
    }
    entry["per_rep"] = std::move(per_rep);
    rows.push_back(std::move(entry));
  }
  const nlohmann::json j = {{"title", report.title},
                            {"baseline", report.rows[report.baseline_row].name},
                            {"rows", std::move(rows)}};
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  const std::string json_text = render_report_json(report);
  const std::string md_text = render_report_markdown(report);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create report directory '" + dir.string() +
                  "': " + ec.message());
  }
  write_text_file(dir / "report.json", json_text);
  write_text_file(dir / "report.md", md_text);
}

void write_scatter_data(const std::vector<double>& labels,
                        const std::vector<double>& predictions,
                        const std::filesystem::path& file) {
  if (labels.size() != predictions.size()) {
    throw ValidationError("scatter data needs one prediction per label");
  }
  std::string text = "label,prediction\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    text += canonical_double(labels[i]) + "," + canonical_double(predictions[i]) +
            "\n";
  }
  write_text_file(file, text);
}

}  // namespace reem::eval
