#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairadapter/adapter_math.hpp"
#include "fairadapter/embedding_store.hpp"

namespace fairadapter {

/// Falling-loss branch of the per-category weight. `as_printed` uses
/// 1 - L_pre / L (can go negative); `inverted_ratio` uses 1 - L / L_pre.
enum class LambdaRule { as_printed, inverted_ratio };

/// `pair` averages the fake and real halves of each pair; `fake_only` keeps
/// only the Cf term.
enum class ClassifyLossForm { pair, fake_only };

enum class Variant { full, no_fair_adapter, no_fair_loss, no_classify_loss };

const char* to_string(LambdaRule rule);
const char* to_string(ClassifyLossForm form);
const char* to_string(Variant variant);
std::optional<LambdaRule> parse_lambda_rule(const std::string& s);
std::optional<ClassifyLossForm> parse_classify_loss_form(const std::string& s);
std::optional<Variant> parse_variant(const std::string& s);

struct TrainConfig {
  int epochs = 40;
  double learning_rate = 2e-4;
  int pairs_per_round = 1;
  // 0 selects max(1, dim / 4).
  int hidden = 0;
  std::uint64_t seed = 0;
  bool lambda_clamp_nonnegative = false;
  LambdaRule lambda_rule = LambdaRule::as_printed;
  double threshold = 0.5;
  int others_per_category = 1;
  ClassifyLossForm classify_loss_form = ClassifyLossForm::pair;
  Variant variant = Variant::full;

  void validate() const;
  Eigen::Index hidden_for(Eigen::Index dim) const;
};

struct HybridRow {
  Eigen::VectorXd vector;
  int label = 0;
  std::string category;
};

/// Row 0 holds the enhanced anchor; the remaining rows are raw natural vectors
/// from other categories. Rows are scored independently by the fair head.
struct HybridBatch {
  std::vector<HybridRow> rows;
  std::string anchor_category;
};

struct OtherSample {
  Eigen::VectorXd vector;
  std::string category;
};

HybridBatch build_hybrid_batch(const Eigen::VectorXd& enhanced, int label, const std::string& anchor,
                               const std::vector<OtherSample>& others);

/// Raw inputs drawn for one category in one round: `pairs_per_round` fake/real
/// pairs and, per pair, natural vectors from every other category.
struct CategoryDraw {
  std::string category;
  std::vector<Eigen::VectorXd> fakes;
  std::vector<Eigen::VectorXd> reals;
  std::vector<std::vector<OtherSample>> others;
};

struct RoundSample {
  std::vector<CategoryDraw> draws;  // in category order
};

RoundSample sample_round(const EmbeddingSet& train, std::uint64_t round_seed, const TrainConfig& cfg);

struct RoundLosses {
  std::vector<double> losses;  // L_1 .. L_n
  RoundSample sample;
  std::vector<std::vector<HybridBatch>> batches;  // per category
};

/// Samples a round and evaluates every per-category hybrid loss with the
/// current model. Requires both labels in every category and n >= 2.
RoundLosses round_category_losses(const ModelParamsd& model, const EmbeddingSet& train, std::uint64_t round_seed,
                                  const TrainConfig& cfg);

/// Per-category hybrid losses of an already drawn round.
std::vector<double> category_losses(const ModelParamsd& model, const RoundSample& sample);

struct LossState {
  std::map<std::string, double> prev_loss;
  std::int64_t rounds = 0;
};

double lambda_weight(double loss, std::optional<double> prev_loss, bool clamp,
                     LambdaRule rule = LambdaRule::as_printed);

struct FairLoss {
  double value = 0;
  std::vector<double> lambdas;
  LossState state;
};

/// Weighted mean of per-category losses; the weights are constants and the
/// returned state remembers the current losses for the next round.
FairLoss fair_loss(const std::vector<double>& losses, const std::vector<std::string>& categories,
                   const LossState& state, bool clamp, LambdaRule rule = LambdaRule::as_printed);

/// Sum_j lambda_j * L_j / n for a fixed draw, as a function of the fair branch.
double fair_objective(const ModelParamsd& model, const RoundSample& sample, const std::vector<double>& lambdas);

/// Gradient of fair_objective with respect to the fair adapter and fair head.
AdapterBranchd fair_objective_gradient(const ModelParamsd& model, const RoundSample& sample,
                                       const std::vector<double>& lambdas);

Eigen::VectorXd enhance(const ModelParamsd& model, const Eigen::VectorXd& x);

struct ClassifySemantics {
  Eigen::VectorXd fake;
  Eigen::VectorXd real;
};

ClassifySemantics classify_forward(const ModelParamsd& model, const Eigen::VectorXd& enhanced_fake,
                                   const Eigen::VectorXd& enhanced_real);

struct EnhancedPair {
  Eigen::VectorXd fake;
  Eigen::VectorXd real;
};

double classify_loss(const ModelParamsd& model, const std::vector<EnhancedPair>& pairs,
                     ClassifyLossForm form = ClassifyLossForm::pair);

/// Gradient of classify_loss with respect to the classify adapter and head;
/// the enhanced inputs are constants.
AdapterBranchd classify_loss_gradient(const ModelParamsd& model, const std::vector<EnhancedPair>& pairs,
                                      ClassifyLossForm form = ClassifyLossForm::pair);

struct RoundRecord {
  double fair_loss = 0;
  double classify_loss = 0;
  std::vector<double> category_loss;
  std::vector<double> lambda;
};

struct TrainHistory {
  std::vector<std::string> categories;
  std::vector<RoundRecord> rounds;
};

/// Observer invoked after each optimizer step: phase 'a' after the fair step,
/// phase 'b' after the classify step.
using StepObserver = std::function<void(std::int64_t round, char phase, const ModelParamsd& model)>;

struct TrainResult {
  ModelParamsd model;
  TrainHistory history;
};

std::int64_t rounds_per_epoch(const EmbeddingSet& train, const TrainConfig& cfg);

TrainResult train(const EmbeddingSet& train_set, const TrainConfig& cfg, const StepObserver& observer = {});

/// Fake probability of one embedding along the full inference path.
double score(const ModelParamsd& model, const Eigen::VectorXd& x);

/// (natural, fake) probabilities.
Eigen::Vector2d class_probabilities(const ModelParamsd& model, const Eigen::VectorXd& x);

/// One JSON line per round: round, epoch, fair and classify loss, per-category loss and lambda.
void write_history(const TrainHistory& history, std::int64_t rounds_per_epoch, const std::filesystem::path& path);

}  // namespace fairadapter
