#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairadapter/adapter_math.hpp"
#include "fairadapter/embedding_store.hpp"

namespace fairadapter {

struct PredictionRecord {
  std::string id;
  std::string category;
  int true_label = 0;
  double score = 0;
  int predicted_label = 0;
};

/// P(fake score > real score) with ties counted as one half, via midranks.
/// Throws UndefinedMetricError when either side is empty.
double auc_rank(std::span<const double> real_scores, std::span<const double> fake_scores);

/// Fraction of real records predicted fake.
double fpr(std::span<const PredictionRecord> records);

/// Sum over categories of |FPR(category) - FPR(all)|. Categories without real
/// records are skipped.
double f_fpr(std::span<const PredictionRecord> records);

/// Largest minus smallest per-category accuracy (fraction with predicted == true).
double f_auc(std::span<const PredictionRecord> records);

/// Largest minus smallest per-category auc_rank. Every category must hold both labels.
double f_auc_rank_gap(std::span<const PredictionRecord> records);

struct CategoryMetrics {
  std::string category;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  std::optional<double> auc;
  std::optional<double> fpr;
  double accuracy = 0;
};

struct FairnessReport {
  std::vector<CategoryMetrics> categories;
  std::optional<double> mean_category_auc;
  std::optional<double> pooled_auc;
  std::optional<double> overall_fpr;
  std::optional<double> f_fpr;
  double f_auc = 0;
  std::optional<double> f_auc_rank_gap;
  double threshold = 0.5;
};

/// Scores every record; predicted label is 1 iff score >= threshold.
std::vector<PredictionRecord> predict(const ModelParamsd& model, const EmbeddingSet& set, double threshold);

/// Metrics that cannot be defined on `records` are left empty.
FairnessReport build_report(std::span<const PredictionRecord> records, double threshold);

FairnessReport evaluate_report(const ModelParamsd& model, const EmbeddingSet& test, double threshold);

void write_report(const FairnessReport& report, const std::filesystem::path& path);
void write_category_table(const FairnessReport& report, const std::filesystem::path& path);
void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path);

}  // namespace fairadapter
