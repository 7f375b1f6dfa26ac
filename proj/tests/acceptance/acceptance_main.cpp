// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairadapter/adapter_math.hpp"
#include "fairadapter/cli.hpp"
#include "fairadapter/embedding_store.hpp"
#include "fairadapter/error.hpp"
#include "fairadapter/fair_training.hpp"
#include "fairadapter/fairness_metrics.hpp"

using namespace fairadapter;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Brute-force metric oracles: exhaustive pairs and direct indicator sums.

std::optional<double> oracle_auc(const std::vector<PredictionRecord>& rs) {
  double wins = 0, pairs = 0;
  for (const auto& f : rs)
    for (const auto& r : rs) {
      if (f.true_label != 1 || r.true_label != 0) continue;
      pairs += 1;
      wins += f.score > r.score ? 1.0 : (f.score == r.score ? 0.5 : 0.0);
    }
  if (pairs == 0) return std::nullopt;
  return wins / pairs;
}

std::optional<double> oracle_fpr_where(const std::vector<PredictionRecord>& rs, const std::string* group) {
  double num = 0, den = 0;
  for (const auto& r : rs) {
    const bool in_group = group == nullptr || r.category == *group;
    num += (r.predicted_label == 1 && in_group && r.true_label == 0) ? 1 : 0;
    den += (in_group && r.true_label == 0) ? 1 : 0;
  }
  if (den == 0) return std::nullopt;
  return num / den;
}

std::optional<double> oracle_f_fpr(const std::vector<PredictionRecord>& rs) {
  const auto overall = oracle_fpr_where(rs, nullptr);
  if (!overall) return std::nullopt;
  std::set<std::string> groups;
  for (const auto& r : rs) groups.insert(r.category);
  double total = 0;
  for (const auto& g : groups) {
    const auto group_fpr = oracle_fpr_where(rs, &g);
    if (group_fpr) total += std::abs(*group_fpr - *overall);
  }
  return total;
}

std::optional<double> oracle_f_auc(const std::vector<PredictionRecord>& rs) {
  std::set<std::string> groups;
  for (const auto& r : rs) groups.insert(r.category);
  if (groups.empty()) return std::nullopt;
  double hi = -1, lo = 2;
  for (const auto& g : groups) {
    double num = 0, den = 0;
    for (const auto& r : rs) {
      num += (r.predicted_label == r.true_label && r.category == g) ? 1 : 0;
      den += r.category == g ? 1 : 0;
    }
    hi = std::max(hi, num / den);
    lo = std::min(lo, num / den);
  }
  return hi - lo;
}

template <typename F>
std::optional<double> defined(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

bool agree(const std::optional<double>& a, const std::optional<double>& b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::abs(*a - *b) <= tol;
}

Outcome metric_oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  int mismatches = 0, undefined_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const int groups = 1 + static_cast<int>(rng() % 3);
    const bool coarse = trial % 2 == 0;
    std::vector<PredictionRecord> rs;
    for (std::size_t i = 0; i < n; ++i) {
      PredictionRecord r;
      r.id = std::to_string(i);
      r.category = "g" + std::to_string(rng() % groups);
      r.true_label = static_cast<int>(rng() % 2);
      r.score = coarse ? static_cast<double>(rng() % 5) / 4.0 : std::uniform_real_distribution<double>(0, 1)(rng);
      r.predicted_label = r.score >= 0.5 ? 1 : 0;
      rs.push_back(r);
    }
    std::vector<double> real, fake;
    for (const auto& r : rs) (r.true_label == 0 ? real : fake).push_back(r.score);

    const auto auc = defined([&] { return auc_rank(real, fake); });
    const auto f = defined([&] { return fpr(rs); });
    const auto ff = defined([&] { return f_fpr(rs); });
    const auto fa = defined([&] { return f_auc(rs); });
    if (!auc || !f) ++undefined_cases;
    const bool ok = agree(auc, oracle_auc(rs), 1e-12) && agree(f, oracle_fpr_where(rs, nullptr), 1e-12) &&
                    agree(ff, oracle_f_fpr(rs), 1e-12) && agree(fa, oracle_f_auc(rs), 1e-12);
    mismatches += ok ? 0 : 1;
  }
  const double t = seconds_since(start);
  std::ostringstream os;
  os << "1000 sets, " << mismatches << " mismatches (" << undefined_cases << " with an undefined metric), " << t
     << " s";
  return {mismatches == 0 && t < 10.0, os.str()};
}

// ---------------------------------------------------------------------------

ModelParamsd perturbed_model(Eigen::Index dim, Eigen::Index hidden, std::uint64_t seed) {
  auto m = init_model<double>(dim, hidden, InitScheme::uniform_fan_in, seed);
  std::mt19937_64 rng(seed ^ 0xabcdefULL);
  std::normal_distribution<double> normal(0, 0.3);
  for (auto* branch : {&m.fair, &m.classify})
    zip_tensors(
        [&](auto& t) {
          for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] += normal(rng);
        },
        *branch);
  return m;
}

// Largest relative error |a - n| / max(|a|, |n|, 1e-6) over one branch.
template <typename Loss>
double worst_relative_error(ModelParamsd model, AdapterBranchd ModelParamsd::*which, AdapterBranchd analytic,
                            Loss loss) {
  constexpr double step = 1e-5;
  double worst = 0;
  zip_tensors(
      [&](auto& p, auto& g) {
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          const double saved = p.data()[k];
          p.data()[k] = saved + step;
          const double up = loss(model);
          p.data()[k] = saved - step;
          const double down = loss(model);
          p.data()[k] = saved;
          const double numeric = (up - down) / (2 * step);
          const double a = g.data()[k];
          worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
        }
      },
      model.*which, analytic);
  return worst;
}

Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  double worst_fair = 0, worst_classify = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index hidden = 1 + static_cast<Eigen::Index>(rng() % 4);
    SynthConfig sc;
    sc.n_categories = 2 + static_cast<int>(rng() % 3);
    sc.per_category_real = 3;
    sc.per_category_fake = 3;
    sc.dim = static_cast<int>(dim);
    sc.noise_sigma = 0.5;
    sc.seed = seed;
    const auto set = synth_generate(sc);
    TrainConfig cfg;
    cfg.pairs_per_round = 1 + static_cast<int>(rng() % 2);
    const auto sample = sample_round(set, rng(), cfg);
    const auto model = perturbed_model(dim, hidden, seed);

    std::vector<double> lambdas;
    std::uniform_real_distribution<double> lam(-2, 4);
    for (int j = 0; j < sc.n_categories; ++j) lambdas.push_back(lam(rng));
    worst_fair = std::max(worst_fair, worst_relative_error(model, &ModelParamsd::fair,
                                                           fair_objective_gradient(model, sample, lambdas),
                                                           [&](const ModelParamsd& m) {
                                                             return fair_objective(m, sample, lambdas);
                                                           }));

    std::vector<EnhancedPair> pairs;
    for (const auto& draw : sample.draws)
      for (std::size_t p = 0; p < draw.fakes.size(); ++p)
        pairs.push_back({enhance(model, draw.fakes[p]), enhance(model, draw.reals[p])});
    worst_classify = std::max(worst_classify, worst_relative_error(model, &ModelParamsd::classify,
                                                                   classify_loss_gradient(model, pairs),
                                                                   [&](const ModelParamsd& m) {
                                                                     return classify_loss(m, pairs);
                                                                   }));
  }
  const double t = seconds_since(start);
  std::ostringstream os;
  os << "100 models, worst rel. error L_fair " << worst_fair << ", L_c " << worst_classify << ", " << t << " s";
  return {worst_fair <= 1e-4 && worst_classify <= 1e-4 && t < 30.0, os.str()};
}

// ---------------------------------------------------------------------------

Outcome lambda_rule_suite() {
  bool ok = lambda_weight(2.0, 1.0, false) == 3.0 && lambda_weight(1.0, 1.0, false) == 0.0 &&
            lambda_weight(1.0, 2.0, false) == -1.0 && lambda_weight(0.7, std::nullopt, false) == 1.0;
  const bool examples = ok;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(1e-6, 20.0);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const double current = dist(rng), previous = dist(rng);
    const double lambda = lambda_weight(current, previous, false);
    if (previous < current && !(lambda > 2.0)) ++violations;
    if (previous > current && !(lambda < 0.0)) ++violations;
    if (lambda_weight(current, current, false) != 0.0) ++violations;
  }
  ok = ok && violations == 0;
  return {ok, std::string("examples ") + (examples ? "exact" : "WRONG") + ", " + std::to_string(violations) +
                  " sign violations over 1000 random pairs"};
}

// ---------------------------------------------------------------------------

Outcome zero_model_fixture() {
  SynthConfig sc;
  sc.n_categories = 5;
  sc.per_category_real = 10;
  sc.per_category_fake = 10;
  sc.dim = 16;
  const auto set = synth_generate(sc);
  const auto model = init_model<double>(16, 4, InitScheme::zeros, 0);
  const double ln2 = std::log(2.0);
  double worst_loss = 0;
  bool lambdas_one = true;
  double fair_value = 0;
  for (std::uint64_t round = 0; round < 20; ++round) {
    const auto losses = round_category_losses(model, set, round, TrainConfig{}).losses;
    for (double l : losses) worst_loss = std::max(worst_loss, std::abs(l - ln2));
    if (round == 0) {
      const auto fair = fair_loss(losses, set.categories(), LossState{}, false);
      for (double l : fair.lambdas) lambdas_one = lambdas_one && l == 1.0;
      fair_value = fair.value;
    }
  }
  bool all_half = true;
  for (const auto& r : set.records()) all_half = all_half && score(model, r.vector) == 0.5;
  std::ostringstream os;
  os << "max |L_j - ln2| " << worst_loss << ", first-round lambda all 1: " << lambdas_one << ", |L_fair - ln2| "
     << std::abs(fair_value - ln2) << ", score == 0.5: " << all_half;
  return {worst_loss <= 1e-12 && lambdas_one && std::abs(fair_value - ln2) <= 1e-12 && all_half, os.str()};
}

// ---------------------------------------------------------------------------

EmbeddingSet detection_data(std::uint64_t seed, std::vector<double> skew = {}) {
  SynthConfig sc;
  sc.n_categories = 4;
  sc.per_category_real = 100;
  sc.per_category_fake = 100;
  sc.dim = 64;
  sc.shared_fake_shift = 1.0;
  sc.noise_sigma = 0.3;
  sc.skew = std::move(skew);
  sc.seed = seed;
  return synth_generate(sc);
}

Outcome gradient_isolation() {
  const auto [train_set, test_set] = split_set(detection_data(0), 0.3, 0);
  TrainConfig cfg;
  ModelParamsd previous = init_model<double>(train_set.dim(), cfg.hidden_for(train_set.dim()),
                                             InitScheme::uniform_fan_in, cfg.seed);
  std::int64_t steps = 0, leaks = 0;
  train(train_set, cfg, [&](std::int64_t, char phase, const ModelParamsd& m) {
    const bool untouched = phase == 'a' ? m.classify == previous.classify : m.fair == previous.fair;
    leaks += untouched ? 0 : 1;
    previous = m;
    ++steps;
  });
  return {leaks == 0 && steps > 0,
          std::to_string(steps) + " optimizer steps checked bitwise, " + std::to_string(leaks) + " leaks"};
}

Outcome end_to_end_detection() {
  const auto start = Clock::now();
  const auto [train_set, test_set] = split_set(detection_data(0), 0.3, 0);
  const TrainConfig cfg;
  const auto result = train(train_set, cfg);
  const auto report = evaluate_report(result.model, test_set, cfg.threshold);
  const double t = seconds_since(start);
  const double auc = report.mean_category_auc.value_or(0.0);
  std::ostringstream os;
  os << "epochs " << cfg.epochs << ", lr " << cfg.learning_rate << ", train " << train_set.size() << " / test "
     << test_set.size() << ", mean per-category AUC " << auc << " (>= 0.95), " << t << " s";
  return {auc >= 0.95 && t < 120.0, os.str()};
}

// Seeds 1..10 each drive data generation, the split and model initialisation.
Outcome fairness_ablation_direction() {
  int wins = 0;
  std::ostringstream os;
  os << "accuracy gap full/uniform-lambda per seed:";
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [train_set, test_set] = split_set(detection_data(seed, {1.0, 1.0, 1.0, 0.4}), 0.3, seed);
    TrainConfig cfg;
    cfg.seed = seed;
    const double full = evaluate_report(train(train_set, cfg).model, test_set, cfg.threshold).f_auc;
    cfg.variant = Variant::no_fair_loss;
    const double uniform = evaluate_report(train(train_set, cfg).model, test_set, cfg.threshold).f_auc;
    wins += full <= uniform ? 1 : 0;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %.3f/%.3f", full, uniform);
    os << buf;
  }
  os << "; full <= uniform in " << wins << "/10 (need >= 7)";
  return {wins >= 7, os.str()};
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "fairadapter_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto path = [&](const std::string& name) { return (dir / name).string(); };
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };

  std::ostringstream sink;
  bool ok = run_cli({"synth", "--seed", "3", "--out", path("data.jsonl")}, sink) == 0;
  for (const char* tag : {"1", "2"}) {
    const std::string t = tag;
    ok = ok && run_cli({"train", "--data", path("data.jsonl"), "--subset", "train", "--seed", "3", "--out",
                        path("model" + t), "--history", path("history" + t)},
                       sink) == 0;
    ok = ok && run_cli({"eval", "--model", path("model" + t), "--data", path("data.jsonl"), "--subset", "test",
                        "--seed", "3", "--out", path("report" + t)},
                       sink) == 0;
  }
  const bool history_same = !slurp(path("history1")).empty() && slurp(path("history1")) == slurp(path("history2"));
  const bool report_same = !slurp(path("report1")).empty() && slurp(path("report1")) == slurp(path("report2"));
  std::filesystem::remove_all(dir);
  return {ok && history_same && report_same, std::string("cli runs ok: ") + (ok ? "yes" : "no") +
                                                 ", history identical: " + (history_same ? "yes" : "no") +
                                                 ", report identical: " + (report_same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric oracle equivalence", metric_oracle_equivalence},
      {"gradient correctness", gradient_correctness},
      {"lambda rule suite", lambda_rule_suite},
      {"zero-model fixture", zero_model_fixture},
      {"gradient isolation", gradient_isolation},
      {"end-to-end synthetic detection", end_to_end_detection},
      {"fairness ablation direction", fairness_ablation_direction},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "[PASS] " : "[FAIL] ") << name << ": " << outcome.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " acceptance criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
