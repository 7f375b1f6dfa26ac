#include "fairadapter/fairness_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fairadapter/error.hpp"
#include "fairadapter/fair_training.hpp"

namespace fairadapter {

namespace {

struct GroupCounts {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t real = 0;
  std::size_t false_positive = 0;
  std::vector<double> real_scores;
  std::vector<double> fake_scores;
};

std::map<std::string, GroupCounts> group_by_category(std::span<const PredictionRecord> records) {
  std::map<std::string, GroupCounts> groups;
  for (const auto& r : records) {
    auto& g = groups[r.category];
    g.n += 1;
    g.correct += r.predicted_label == r.true_label ? 1 : 0;
    if (r.true_label == 0) {
      g.real += 1;
      g.false_positive += r.predicted_label == 1 ? 1 : 0;
      g.real_scores.push_back(r.score);
    } else {
      g.fake_scores.push_back(r.score);
    }
  }
  return groups;
}

template <typename T>
std::optional<double> defined_or_empty(T&& compute) {
  try {
    return compute();
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json percent_json(const std::optional<double>& v) {
  return v ? nlohmann::json(100.0 * *v) : nlohmann::json(nullptr);
}

std::string csv_field(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double auc_rank(std::span<const double> real_scores, std::span<const double> fake_scores) {
  if (real_scores.empty() || fake_scores.empty())
    throw UndefinedMetricError("AUC needs at least one real and one fake score");

  struct Entry {
    double score;
    bool fake;
  };
  std::vector<Entry> all;
  all.reserve(real_scores.size() + fake_scores.size());
  for (double s : real_scores) all.push_back({s, false});
  for (double s : fake_scores) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Twice the rank sum of the fake scores keeps midranks integral.
  long double twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t fakes_in_tie = 0;
    while (j < all.size() && all[j].score == all[i].score) fakes_in_tie += all[j++].fake ? 1 : 0;
    // ranks i+1 .. j share the midrank (i + 1 + j) / 2
    twice_rank_sum += static_cast<long double>(fakes_in_tie) * static_cast<long double>(i + 1 + j);
    i = j;
  }
  const long double n_fake = fake_scores.size();
  const long double n_real = real_scores.size();
  const long double u = twice_rank_sum / 2 - n_fake * (n_fake + 1) / 2;
  return static_cast<double>(u / (n_fake * n_real));
}

double fpr(std::span<const PredictionRecord> records) {
  std::size_t real = 0, false_positive = 0;
  for (const auto& r : records) {
    if (r.true_label != 0) continue;
    ++real;
    false_positive += r.predicted_label == 1 ? 1 : 0;
  }
  if (real == 0) throw UndefinedMetricError("FPR is undefined without real records");
  return static_cast<double>(false_positive) / static_cast<double>(real);
}

double f_fpr(std::span<const PredictionRecord> records) {
  const double overall = fpr(records);
  double total = 0;
  for (const auto& [name, g] : group_by_category(records)) {
    if (g.real == 0) continue;
    total += std::abs(static_cast<double>(g.false_positive) / static_cast<double>(g.real) - overall);
  }
  return total;
}

double f_auc(std::span<const PredictionRecord> records) {
  const auto groups = group_by_category(records);
  if (groups.empty()) throw UndefinedMetricError("accuracy gap needs at least one category");
  double lo = 1.0, hi = 0.0;
  for (const auto& [name, g] : groups) {
    const double acc = static_cast<double>(g.correct) / static_cast<double>(g.n);
    lo = std::min(lo, acc);
    hi = std::max(hi, acc);
  }
  return hi - lo;
}

double f_auc_rank_gap(std::span<const PredictionRecord> records) {
  const auto groups = group_by_category(records);
  if (groups.empty()) throw UndefinedMetricError("AUC gap needs at least one category");
  double lo = 1.0, hi = 0.0;
  for (const auto& [name, g] : groups) {
    if (g.real_scores.empty() || g.fake_scores.empty())
      throw UndefinedMetricError("category \"" + name + "\" lacks one of the labels; AUC gap undefined");
    const double auc = auc_rank(g.real_scores, g.fake_scores);
    lo = std::min(lo, auc);
    hi = std::max(hi, auc);
  }
  return hi - lo;
}

std::vector<PredictionRecord> predict(const ModelParamsd& model, const EmbeddingSet& set, double threshold) {
  if (model.dim() != set.dim())
    throw DimensionError("model dim " + std::to_string(model.dim()) + " does not match embedding dim " +
                         std::to_string(set.dim()));
  std::vector<PredictionRecord> out;
  out.reserve(set.size());
  for (const auto& r : set.records()) {
    const double s = score(model, r.vector);
    out.push_back({r.id, r.category, r.label, s, s >= threshold ? 1 : 0});
  }
  return out;
}

FairnessReport build_report(std::span<const PredictionRecord> records, double threshold) {
  if (records.empty()) throw DomainError("cannot build a report for an empty prediction set");
  FairnessReport report;
  report.threshold = threshold;

  std::vector<double> auc_values;
  for (const auto& [name, g] : group_by_category(records)) {
    CategoryMetrics m;
    m.category = name;
    m.n_real = g.real;
    m.n_fake = g.fake_scores.size();
    m.accuracy = static_cast<double>(g.correct) / static_cast<double>(g.n);
    if (g.real > 0) m.fpr = static_cast<double>(g.false_positive) / static_cast<double>(g.real);
    if (!g.real_scores.empty() && !g.fake_scores.empty()) {
      m.auc = auc_rank(g.real_scores, g.fake_scores);
      auc_values.push_back(*m.auc);
    }
    report.categories.push_back(std::move(m));
  }
  if (!auc_values.empty())
    report.mean_category_auc =
        std::accumulate(auc_values.begin(), auc_values.end(), 0.0) / static_cast<double>(auc_values.size());

  std::vector<double> real_scores, fake_scores;
  for (const auto& r : records) (r.true_label == 0 ? real_scores : fake_scores).push_back(r.score);
  report.pooled_auc = defined_or_empty([&] { return auc_rank(real_scores, fake_scores); });
  report.overall_fpr = defined_or_empty([&] { return fpr(records); });
  report.f_fpr = defined_or_empty([&] { return f_fpr(records); });
  report.f_auc = f_auc(records);
  report.f_auc_rank_gap = defined_or_empty([&] { return f_auc_rank_gap(records); });
  return report;
}

FairnessReport evaluate_report(const ModelParamsd& model, const EmbeddingSet& test, double threshold) {
  if (test.empty()) throw DomainError("cannot evaluate an empty test set");
  const auto records = predict(model, test, threshold);
  return build_report(records, threshold);
}

void write_report(const FairnessReport& report, const std::filesystem::path& path) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : report.categories) {
    cats.push_back({{"category", c.category},
                    {"n_real", c.n_real},
                    {"n_fake", c.n_fake},
                    {"auc", optional_json(c.auc)},
                    {"fpr", optional_json(c.fpr)},
                    {"accuracy", c.accuracy}});
  }
  nlohmann::json doc = {
      {"threshold", report.threshold},
      {"categories", std::move(cats)},
      {"aggregate",
       {{"mean_category_auc", optional_json(report.mean_category_auc)},
        {"pooled_auc", optional_json(report.pooled_auc)},
        {"overall_fpr", optional_json(report.overall_fpr)},
        {"f_fpr", optional_json(report.f_fpr)},
        {"f_auc", report.f_auc},
        {"f_auc_rank_gap", optional_json(report.f_auc_rank_gap)}}},
      {"percent",
       {{"mean_category_auc", percent_json(report.mean_category_auc)},
        {"pooled_auc", percent_json(report.pooled_auc)},
        {"overall_fpr", percent_json(report.overall_fpr)},
        {"f_fpr", percent_json(report.f_fpr)},
        {"f_auc", 100.0 * report.f_auc},
        {"f_auc_rank_gap", percent_json(report.f_auc_rank_gap)}}}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_category_table(const FairnessReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write table " + path.string());
  out << "category,n_real,n_fake,auc,fpr,accuracy\n";
  for (const auto& c : report.categories) {
    out << csv_quote(c.category) << ',' << c.n_real << ',' << c.n_fake << ',' << csv_field(c.auc) << ','
        << csv_field(c.fpr) << ',' << csv_field(c.accuracy) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write predictions " + path.string());
  out << "id,category,true_label,score,predicted_label\n";
  for (const auto& r : records) {
    out << csv_quote(r.id) << ',' << csv_quote(r.category) << ',' << r.true_label << ',' << csv_field(r.score) << ','
        << r.predicted_label << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fairadapter
