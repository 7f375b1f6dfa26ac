#include "fairadapter/fair_training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fairadapter/error.hpp"

namespace fairadapter {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t round_seed_for(std::uint64_t seed, std::int64_t round) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(round) + 1));
}

// Record indices per category and label, built once per training run.
struct CategoryIndex {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> fakes;
  std::vector<std::vector<std::size_t>> reals;

  explicit CategoryIndex(const EmbeddingSet& set) : names(set.categories()) {
    fakes.resize(names.size());
    reals.resize(names.size());
    const auto& records = set.records();
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto j = static_cast<std::size_t>(set.category_index(records[i].category));
      (records[i].label == 1 ? fakes : reals)[j].push_back(i);
    }
  }
};

void require_trainable(const EmbeddingSet& set) {
  const auto violations = validate_set(set, true);
  if (!violations.empty()) {
    std::string msg = "training set is invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw DomainError(msg);
  }
  if (set.categories().size() < 2)
    throw DomainError("training needs at least 2 categories to build hybrid samples");
}

RoundSample draw_round(const EmbeddingSet& set, const CategoryIndex& index, std::uint64_t round_seed,
                       const TrainConfig& cfg) {
  std::seed_seq seq{static_cast<std::uint32_t>(round_seed), static_cast<std::uint32_t>(round_seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  auto pick = [&](const std::vector<std::size_t>& pool) -> const Eigen::VectorXd& {
    std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
    return set.records()[pool[dist(rng)]].vector;
  };

  RoundSample sample;
  const std::size_t n = index.names.size();
  sample.draws.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    CategoryDraw draw;
    draw.category = index.names[c];
    for (int p = 0; p < cfg.pairs_per_round; ++p) {
      draw.fakes.push_back(pick(index.fakes[c]));
      draw.reals.push_back(pick(index.reals[c]));
      std::vector<OtherSample> others;
      for (std::size_t s = 0; s < n; ++s) {
        if (s == c) continue;
        for (int k = 0; k < cfg.others_per_category; ++k) others.push_back({pick(index.reals[s]), index.names[s]});
      }
      draw.others.push_back(std::move(others));
    }
    sample.draws.push_back(std::move(draw));
  }
  return sample;
}

std::size_t rows_per_category(const CategoryDraw& draw) {
  std::size_t rows = 0;
  for (const auto& others : draw.others) rows += 2 * (1 + others.size());
  return rows;
}

}  // namespace

const char* to_string(LambdaRule rule) {
  return rule == LambdaRule::as_printed ? "as-printed" : "inverted-ratio";
}

const char* to_string(ClassifyLossForm form) { return form == ClassifyLossForm::pair ? "pair" : "fake-only"; }

const char* to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_fair_adapter: return "no-fair-adapter";
    case Variant::no_fair_loss: return "no-fair-loss";
    case Variant::no_classify_loss: return "no-classify-loss";
  }
  return "?";
}

std::optional<LambdaRule> parse_lambda_rule(const std::string& s) {
  if (s == "as-printed") return LambdaRule::as_printed;
  if (s == "inverted-ratio") return LambdaRule::inverted_ratio;
  return std::nullopt;
}

std::optional<ClassifyLossForm> parse_classify_loss_form(const std::string& s) {
  if (s == "pair") return ClassifyLossForm::pair;
  if (s == "fake-only") return ClassifyLossForm::fake_only;
  return std::nullopt;
}

std::optional<Variant> parse_variant(const std::string& s) {
  for (auto v : {Variant::full, Variant::no_fair_adapter, Variant::no_fair_loss, Variant::no_classify_loss})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw DomainError("epochs must be non-negative");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be finite and >= 0");
  if (pairs_per_round < 1) throw DomainError("pairs per round must be positive");
  if (others_per_category < 1) throw DomainError("other-category samples per hybrid must be positive");
  if (hidden < 0) throw DomainError("hidden width must be positive (or 0 for the default)");
  if (!(threshold > 0 && threshold < 1)) throw DomainError("threshold must lie in (0,1)");
}

Eigen::Index TrainConfig::hidden_for(Eigen::Index dim) const {
  return hidden > 0 ? hidden : std::max<Eigen::Index>(1, dim / 4);
}

HybridBatch build_hybrid_batch(const Eigen::VectorXd& enhanced, int label, const std::string& anchor,
                               const std::vector<OtherSample>& others) {
  HybridBatch batch;
  batch.anchor_category = anchor;
  batch.rows.reserve(others.size() + 1);
  batch.rows.push_back({enhanced, label, anchor});
  for (const auto& o : others) {
    if (o.category == anchor)
      throw DomainError("hybrid sample for \"" + anchor + "\" cannot include a vector of the same category");
    if (o.vector.size() != enhanced.size()) throw DimensionError("hybrid rows must share one width");
    batch.rows.push_back({o.vector, 0, o.category});
  }
  return batch;
}

RoundSample sample_round(const EmbeddingSet& train, std::uint64_t round_seed, const TrainConfig& cfg) {
  cfg.validate();
  require_trainable(train);
  return draw_round(train, CategoryIndex(train), round_seed, cfg);
}

Eigen::VectorXd enhance(const ModelParamsd& model, const Eigen::VectorXd& x) {
  return adapter_forward(model.fair.adapter, x, true);
}

namespace {

std::vector<HybridBatch> category_batches(const ModelParamsd& model, const CategoryDraw& draw) {
  std::vector<HybridBatch> batches;
  for (std::size_t p = 0; p < draw.fakes.size(); ++p) {
    batches.push_back(build_hybrid_batch(enhance(model, draw.fakes[p]), 1, draw.category, draw.others[p]));
    batches.push_back(build_hybrid_batch(enhance(model, draw.reals[p]), 0, draw.category, draw.others[p]));
  }
  return batches;
}

double batches_loss(const HeadParamsd& head, const std::vector<HybridBatch>& batches) {
  double total = 0;
  std::size_t rows = 0;
  for (const auto& b : batches)
    for (const auto& row : b.rows) {
      total += softmax_ce(head_forward(head, row.vector), row.label);
      ++rows;
    }
  return total / static_cast<double>(rows);
}

}  // namespace

std::vector<double> category_losses(const ModelParamsd& model, const RoundSample& sample) {
  std::vector<double> losses;
  losses.reserve(sample.draws.size());
  for (const auto& draw : sample.draws) losses.push_back(batches_loss(model.fair.head, category_batches(model, draw)));
  return losses;
}

RoundLosses round_category_losses(const ModelParamsd& model, const EmbeddingSet& train, std::uint64_t round_seed,
                                  const TrainConfig& cfg) {
  RoundLosses out;
  out.sample = sample_round(train, round_seed, cfg);
  for (const auto& draw : out.sample.draws) {
    out.batches.push_back(category_batches(model, draw));
    out.losses.push_back(batches_loss(model.fair.head, out.batches.back()));
  }
  return out;
}

double lambda_weight(double loss, std::optional<double> prev_loss, bool clamp, LambdaRule rule) {
  if (!(loss >= 0) || !std::isfinite(loss)) throw DomainError("category loss must be finite and >= 0");
  if (!prev_loss) return 1.0;
  const double prev = *prev_loss;
  if (!(prev > 0) || !std::isfinite(prev)) throw DomainError("previous category loss must be finite and > 0");

  double lambda;
  if (prev < loss) {
    lambda = 1.0 + loss / prev;
  } else if (rule == LambdaRule::inverted_ratio) {
    lambda = 1.0 - loss / prev;
  } else if (loss == 0.0) {
    if (!clamp) throw DomainError("lambda is undefined: current loss is 0 while the previous loss is positive");
    return 0.0;
  } else {
    lambda = 1.0 - prev / loss;
  }
  return clamp ? std::max(0.0, lambda) : lambda;
}

FairLoss fair_loss(const std::vector<double>& losses, const std::vector<std::string>& categories,
                   const LossState& state, bool clamp, LambdaRule rule) {
  if (losses.empty()) throw DomainError("fair loss needs at least one category");
  if (losses.size() != categories.size()) throw DimensionError("one loss per category is required");
  FairLoss out;
  out.state = state;
  double total = 0;
  for (std::size_t j = 0; j < losses.size(); ++j) {
    auto it = state.prev_loss.find(categories[j]);
    const std::optional<double> prev = it == state.prev_loss.end() ? std::nullopt : std::optional<double>(it->second);
    const double lambda = lambda_weight(losses[j], prev, clamp, rule);
    out.lambdas.push_back(lambda);
    total += lambda * losses[j];
    out.state.prev_loss[categories[j]] = losses[j];
  }
  out.state.rounds += 1;
  out.value = total / static_cast<double>(losses.size());
  return out;
}

double fair_objective(const ModelParamsd& model, const RoundSample& sample, const std::vector<double>& lambdas) {
  const auto losses = category_losses(model, sample);
  if (lambdas.size() != losses.size()) throw DimensionError("one lambda per category is required");
  double total = 0;
  for (std::size_t j = 0; j < losses.size(); ++j) total += lambdas[j] * losses[j];
  return total / static_cast<double>(losses.size());
}

AdapterBranchd fair_objective_gradient(const ModelParamsd& model, const RoundSample& sample,
                                       const std::vector<double>& lambdas) {
  if (lambdas.size() != sample.draws.size()) throw DimensionError("one lambda per category is required");
  AdapterBranchd grad = zeros_like(model.fair);
  const auto& head = model.fair.head;
  const double n = static_cast<double>(sample.draws.size());

  for (std::size_t j = 0; j < sample.draws.size(); ++j) {
    const auto& draw = sample.draws[j];
    const double coef = lambdas[j] / (n * static_cast<double>(rows_per_category(draw)));
    if (coef == 0.0) continue;

    auto anchor = [&](const Eigen::VectorXd& raw, int label) {
      const Eigen::VectorXd enhanced = enhance(model, raw);
      const Eigen::Vector2d g = coef * softmax_ce_grad(head_forward(head, enhanced), label);
      const Eigen::VectorXd grad_enhanced = head_backward(head, enhanced, g, grad.head);
      adapter_backward(model.fair.adapter, raw, true, grad_enhanced, grad.adapter);
    };
    for (std::size_t p = 0; p < draw.fakes.size(); ++p) {
      anchor(draw.fakes[p], 1);
      anchor(draw.reals[p], 0);
      // Each natural vector of another category appears in both batches of the pair.
      for (const auto& other : draw.others[p]) {
        const Eigen::Vector2d g = 2.0 * coef * softmax_ce_grad(head_forward(head, other.vector), 0);
        head_backward(head, other.vector, g, grad.head);
      }
    }
  }
  return grad;
}

ClassifySemantics classify_forward(const ModelParamsd& model, const Eigen::VectorXd& enhanced_fake,
                                   const Eigen::VectorXd& enhanced_real) {
  return {adapter_forward(model.classify.adapter, enhanced_fake, false),
          adapter_forward(model.classify.adapter, enhanced_real, false)};
}

double classify_loss(const ModelParamsd& model, const std::vector<EnhancedPair>& pairs, ClassifyLossForm form) {
  if (pairs.empty()) throw DomainError("classify loss needs at least one pair");
  const auto& head = model.classify.head;
  double total = 0;
  for (const auto& pair : pairs) {
    const auto c = classify_forward(model, pair.fake, pair.real);
    const double fake_term = softmax_ce(head_forward(head, c.fake), 1);
    total += form == ClassifyLossForm::pair ? 0.5 * (fake_term + softmax_ce(head_forward(head, c.real), 0)) : fake_term;
  }
  return total / static_cast<double>(pairs.size());
}

AdapterBranchd classify_loss_gradient(const ModelParamsd& model, const std::vector<EnhancedPair>& pairs,
                                      ClassifyLossForm form) {
  if (pairs.empty()) throw DomainError("classify loss needs at least one pair");
  AdapterBranchd grad = zeros_like(model.classify);
  const auto& adapter = model.classify.adapter;
  const auto& head = model.classify.head;
  const double per_pair = 1.0 / static_cast<double>(pairs.size());

  auto term = [&](const Eigen::VectorXd& input, int label, double coef) {
    const Eigen::VectorXd semantics = adapter_forward(adapter, input, false);
    const Eigen::Vector2d g = coef * softmax_ce_grad(head_forward(head, semantics), label);
    const Eigen::VectorXd grad_semantics = head_backward(head, semantics, g, grad.head);
    adapter_backward(adapter, input, false, grad_semantics, grad.adapter);
  };
  for (const auto& pair : pairs) {
    if (form == ClassifyLossForm::pair) {
      term(pair.fake, 1, 0.5 * per_pair);
      term(pair.real, 0, 0.5 * per_pair);
    } else {
      term(pair.fake, 1, per_pair);
    }
  }
  return grad;
}

Eigen::Vector2d class_probabilities(const ModelParamsd& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd enhanced = enhance(model, x);
  const Eigen::Vector2d logits = model.score_path == ScorePath::classify_head
                                     ? head_forward(model.classify.head, adapter_forward(model.classify.adapter, enhanced, false))
                                     : head_forward(model.fair.head, enhanced);
  return softmax(logits);
}

double score(const ModelParamsd& model, const Eigen::VectorXd& x) { return class_probabilities(model, x)[1]; }

std::int64_t rounds_per_epoch(const EmbeddingSet& train, const TrainConfig& cfg) {
  const CategoryIndex index(train);
  std::size_t largest = 0;
  for (std::size_t c = 0; c < index.names.size(); ++c)
    largest = std::max({largest, index.fakes[c].size(), index.reals[c].size()});
  const auto pairs = static_cast<std::size_t>(std::max(1, cfg.pairs_per_round));
  return static_cast<std::int64_t>((largest + pairs - 1) / pairs);
}

TrainResult train(const EmbeddingSet& train_set, const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  require_trainable(train_set);

  const Eigen::Index dim = train_set.dim();
  TrainResult result;
  result.model = init_model<double>(dim, cfg.hidden_for(dim), InitScheme::uniform_fan_in, cfg.seed);
  if (cfg.variant == Variant::no_fair_adapter) result.model.fair.adapter = AdapterParamsd::Zero(dim, cfg.hidden_for(dim));
  if (cfg.variant == Variant::no_classify_loss) result.model.score_path = ScorePath::fair_head;
  result.history.categories = train_set.categories();

  ModelParamsd& model = result.model;
  const CategoryIndex index(train_set);
  const AdamConfig adam{cfg.learning_rate};
  AdamState<AdapterBranchd> fair_opt(model.fair, adam);
  AdamState<AdapterBranchd> classify_opt(model.classify, adam);
  LossState loss_state;

  const std::int64_t total_rounds = static_cast<std::int64_t>(cfg.epochs) * rounds_per_epoch(train_set, cfg);
  result.history.rounds.reserve(static_cast<std::size_t>(total_rounds));
  for (std::int64_t round = 0; round < total_rounds; ++round) {
    const RoundSample sample = draw_round(train_set, index, round_seed_for(cfg.seed, round), cfg);
    RoundRecord record;
    record.category_loss = category_losses(model, sample);
    for (double l : record.category_loss)
      if (!std::isfinite(l)) throw DomainError("non-finite category loss in round " + std::to_string(round + 1));

    // (a) fair branch
    FairLoss fair = fair_loss(record.category_loss, result.history.categories, loss_state,
                              cfg.lambda_clamp_nonnegative, cfg.lambda_rule);
    loss_state = fair.state;
    record.lambda = cfg.variant == Variant::no_fair_loss ? std::vector<double>(fair.lambdas.size(), 1.0) : fair.lambdas;
    double weighted = 0;
    for (std::size_t j = 0; j < record.lambda.size(); ++j) weighted += record.lambda[j] * record.category_loss[j];
    record.fair_loss = weighted / static_cast<double>(record.lambda.size());
    if (!std::isfinite(record.fair_loss)) throw DomainError("non-finite fair loss in round " + std::to_string(round + 1));

    AdapterBranchd fair_grad = fair_objective_gradient(model, sample, record.lambda);
    if (cfg.variant == Variant::no_fair_adapter) fair_grad.adapter = zeros_like(fair_grad.adapter);
    adam_step(fair_opt, model.fair, fair_grad);
    if (observer) observer(round, 'a', model);

    // (b) classify branch on the re-enhanced pairs, enhancement held constant
    std::vector<EnhancedPair> pairs;
    for (const auto& draw : sample.draws)
      for (std::size_t p = 0; p < draw.fakes.size(); ++p)
        pairs.push_back({enhance(model, draw.fakes[p]), enhance(model, draw.reals[p])});
    record.classify_loss = classify_loss(model, pairs, cfg.classify_loss_form);
    if (!std::isfinite(record.classify_loss))
      throw DomainError("non-finite classify loss in round " + std::to_string(round + 1));
    if (cfg.variant != Variant::no_classify_loss) {
      adam_step(classify_opt, model.classify, classify_loss_gradient(model, pairs, cfg.classify_loss_form));
      if (observer) observer(round, 'b', model);
    }

    result.history.rounds.push_back(std::move(record));
  }
  return result;
}

void write_history(const TrainHistory& history, std::int64_t rounds_per_epoch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write history file " + path.string());
  const std::int64_t per_epoch = std::max<std::int64_t>(1, rounds_per_epoch);
  for (std::size_t r = 0; r < history.rounds.size(); ++r) {
    const auto& rec = history.rounds[r];
    nlohmann::json cats = nlohmann::json::array();
    for (std::size_t j = 0; j < rec.category_loss.size(); ++j)
      cats.push_back({{"name", history.categories[j]}, {"loss", rec.category_loss[j]}, {"lambda", rec.lambda[j]}});
    nlohmann::json line = {{"round", r + 1},
                           {"epoch", static_cast<std::int64_t>(r) / per_epoch + 1},
                           {"l_fair", rec.fair_loss},
                           {"l_c", rec.classify_loss},
                           {"categories", std::move(cats)}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fairadapter
