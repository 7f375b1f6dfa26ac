#include "fairadapter/cli.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "fairadapter/checkpoint.hpp"
#include "fairadapter/embedding_store.hpp"
#include "fairadapter/error.hpp"
#include "fairadapter/fair_training.hpp"
#include "fairadapter/fairness_metrics.hpp"
#include "fairadapter/run_config.hpp"

namespace fairadapter {

namespace {

// Flags that map onto RunConfig keys. Values are kept as text and only
// forwarded when the flag was actually given, so the config file can fill the rest.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  bool lambda_clamp = false;
  CLI::Option* lambda_clamp_opt = nullptr;
  CLI::Option* config_opt = nullptr;

  void add(CLI::App* app, const std::string& key, const std::string& flag, const std::string& help) {
    options[key] = app->add_option(flag, values[key], help);
  }

  void add_common(CLI::App* app) {
    config_opt = app->add_option("--config", config_path, "JSON settings file (flags take precedence)");
    add(app, "seed", "--seed", "random seed");
  }

  void add_training(CLI::App* app) {
    add(app, "epochs", "--epochs", "training epochs (default 40)");
    add(app, "learning_rate", "--learning-rate,--lr", "Adam learning rate (default 0.0002)");
    add(app, "hidden", "--hidden", "adapter hidden width (default dim/4)");
    add(app, "pairs_per_round", "--pairs-per-round", "fake/real pairs per category per round (default 1)");
    add(app, "others_per_category", "--others-per-category",
        "natural samples per other category in each hybrid (default 1)");
    add(app, "lambda_rule", "--lambda-rule", "as-printed | inverted-ratio");
    add(app, "classify_loss", "--classify-loss", "pair | fake-only");
    add(app, "variant", "--variant", "full | no-fair-adapter | no-fair-loss | no-classify-loss");
    lambda_clamp_opt = app->add_flag("--lambda-clamp", lambda_clamp, "clamp per-category weights at zero");
  }

  void add_evaluation(CLI::App* app) { add(app, "threshold", "--threshold", "fake-probability threshold (default 0.5)"); }

  void add_split(CLI::App* app) { add(app, "test_fraction", "--test-fraction", "held-out fraction per stratum (default 0.3)"); }

  RunConfig resolve() const {
    std::map<std::string, std::string> given;
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) given[key] = values.at(key);
    if (lambda_clamp_opt && lambda_clamp_opt->count() > 0) given["lambda_clamp"] = lambda_clamp ? "true" : "false";
    std::optional<std::filesystem::path> path;
    if (config_opt && config_opt->count() > 0) path = config_path;
    return load_config(path, given);
  }
};

EmbeddingSet select_subset(const EmbeddingSet& data, const std::string& subset, const RunConfig& cfg) {
  if (subset == "all") return data;
  auto [train, test] = split_set(data, cfg.test_fraction, cfg.train.seed);
  return subset == "train" ? train : test;
}

void run_synth(const SynthConfig& synth, const std::string& out) { write_embedding_set(synth_generate(synth), out); }

void run_train(const RunConfig& cfg, const std::string& data_path, const std::string& subset, const std::string& out,
               std::string history_path, std::ostream& err) {
  const EmbeddingSet data = select_subset(read_embedding_set(data_path), subset, cfg);
  const auto result = train(data, cfg.train);
  write_checkpoint(result.model, out);
  if (history_path.empty()) history_path = out + ".history.jsonl";
  write_history(result.history, rounds_per_epoch(data, cfg.train), history_path);
  err << "trained " << result.history.rounds.size() << " rounds on " << data.size() << " records\n";
}

void run_eval(const RunConfig& cfg, const std::string& model_path, const std::string& data_path,
              const std::string& subset, const std::string& out, const std::string& table, const std::string& preds,
              std::ostream& err) {
  const ModelParamsd model = read_checkpoint(model_path);
  const EmbeddingSet data = select_subset(read_embedding_set(data_path), subset, cfg);
  if (model.dim() != data.dim())
    throw DimensionError("checkpoint dim " + std::to_string(model.dim()) + " does not match embedding dim " +
                         std::to_string(data.dim()));
  if (data.empty()) throw DomainError("no records to evaluate");
  const auto records = predict(model, data, cfg.train.threshold);
  const auto report = build_report(records, cfg.train.threshold);
  write_report(report, out);
  if (!table.empty()) write_category_table(report, table);
  if (!preds.empty()) write_predictions(records, preds);
  if (report.mean_category_auc) err << "mean per-category AUC " << *report.mean_category_auc << "\n";
}

std::string table_value(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

void run_ablate(const RunConfig& cfg, const std::string& data_path, const std::string& out, std::ostream& err) {
  const EmbeddingSet data = read_embedding_set(data_path);
  const auto [train_set, test_set] = split_set(data, cfg.test_fraction, cfg.train.seed);
  if (test_set.empty()) throw DomainError("ablation needs a non-empty test split");

  std::ostringstream table;
  table << "variant,f_fpr,f_auc,f_auc_rank_gap,mean_category_auc,pooled_auc\n";
  for (auto variant : {Variant::full, Variant::no_fair_adapter, Variant::no_fair_loss, Variant::no_classify_loss}) {
    TrainConfig tc = cfg.train;
    tc.variant = variant;
    const auto result = train(train_set, tc);
    const auto report = evaluate_report(result.model, test_set, tc.threshold);
    table << to_string(variant) << ',' << table_value(report.f_fpr) << ',' << table_value(report.f_auc) << ','
          << table_value(report.f_auc_rank_gap) << ',' << table_value(report.mean_category_auc) << ','
          << table_value(report.pooled_auc) << '\n';
    err << "variant " << to_string(variant) << " done\n";
  }
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write ablation table " + out);
  file << table.str();
  if (!file) throw IoError("write failed for " + out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"Fairness-aware adapter training and evaluation over frozen image embeddings", "fairadapter"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic embedding file");
  SynthConfig synth_cfg;
  ConfigFlags synth_flags;
  std::string synth_out;
  synth_flags.add_common(synth);
  synth->add_option("--categories", synth_cfg.n_categories, "number of categories")->capture_default_str();
  synth->add_option("--real", synth_cfg.per_category_real, "real records per category")->capture_default_str();
  synth->add_option("--fake", synth_cfg.per_category_fake, "fake records per category")->capture_default_str();
  synth->add_option("--dim", synth_cfg.dim, "embedding width")->capture_default_str();
  synth->add_option("--shift", synth_cfg.shared_fake_shift, "fake shift magnitude")->capture_default_str();
  synth->add_option("--nuisance", synth_cfg.nuisance_scale, "per-category mean offset magnitude")
      ->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise_sigma, "isotropic noise sigma")->capture_default_str();
  synth->add_option("--skew", synth_cfg.skew, "per-category multipliers on the fake shift");
  synth->add_option("--encoder", synth_cfg.encoder_tag, "encoder tag written to the header")->capture_default_str();
  synth->add_option("--out", synth_out, "output embedding file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on an embedding file");
  ConfigFlags train_flags;
  std::string train_data, train_out, train_history, train_subset = "all";
  train_flags.add_common(train_cmd);
  train_flags.add_training(train_cmd);
  train_flags.add_split(train_cmd);
  train_cmd->add_option("--data", train_data, "embedding file")->required();
  train_cmd->add_option("--out", train_out, "checkpoint file")->required();
  train_cmd->add_option("--history", train_history, "history file (default <out>.history.jsonl)");
  train_cmd->add_option("--subset", train_subset, "all | train | test split of --data")
      ->check(CLI::IsMember({"all", "train", "test"}));

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score an embedding file and write fairness reports");
  ConfigFlags eval_flags;
  std::string eval_model, eval_data, eval_out, eval_table, eval_preds, eval_subset = "all";
  eval_flags.add_common(eval_cmd);
  eval_flags.add_evaluation(eval_cmd);
  eval_flags.add_split(eval_cmd);
  eval_cmd->add_option("--model", eval_model, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "embedding file")->required();
  eval_cmd->add_option("--out", eval_out, "report file (JSON)")->required();
  eval_cmd->add_option("--table", eval_table, "per-category CSV table");
  eval_cmd->add_option("--predictions", eval_preds, "per-record prediction CSV");
  eval_cmd->add_option("--subset", eval_subset, "all | train | test split of --data")
      ->check(CLI::IsMember({"all", "train", "test"}));

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate the four ablation variants");
  ConfigFlags ablate_flags;
  std::string ablate_data, ablate_out;
  ablate_flags.add_common(ablate_cmd);
  ablate_flags.add_training(ablate_cmd);
  ablate_flags.add_evaluation(ablate_cmd);
  ablate_flags.add_split(ablate_cmd);
  ablate_cmd->add_option("--data", ablate_data, "embedding file")->required();
  ablate_cmd->add_option("--out", ablate_out, "comparison table (CSV)")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream ignored;
    const int code = app.exit(e, e.get_exit_code() == 0 ? err : ignored, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      synth_cfg.seed = synth_flags.resolve().train.seed;
      run_synth(synth_cfg, synth_out);
    } else if (*train_cmd) {
      run_train(train_flags.resolve(), train_data, train_subset, train_out, train_history, err);
    } else if (*eval_cmd) {
      run_eval(eval_flags.resolve(), eval_model, eval_data, eval_subset, eval_out, eval_table, eval_preds, err);
    } else if (*ablate_cmd) {
      run_ablate(ablate_flags.resolve(), ablate_data, ablate_out, err);
    }
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace fairadapter
