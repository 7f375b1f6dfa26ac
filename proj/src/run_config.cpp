#include "fairadapter/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "fairadapter/error.hpp"

namespace fairadapter {

using json = nlohmann::json;

namespace {

const std::vector<std::string> kStringKeys = {"lambda_rule", "classify_loss", "variant"};

long long as_integer(const std::string& key, const json& v) {
  if (!v.is_number_integer()) throw UsageError("config key \"" + key + "\" expects an integer, got " + v.dump());
  return v.get<long long>();
}

double as_real(const std::string& key, const json& v) {
  if (!v.is_number()) throw UsageError("config key \"" + key + "\" expects a number, got " + v.dump());
  return v.get<double>();
}

std::string as_text(const std::string& key, const json& v) {
  if (!v.is_string()) throw UsageError("config key \"" + key + "\" expects a string, got " + v.dump());
  return v.get<std::string>();
}

void apply(RunConfig& cfg, const std::string& key, const json& v) {
  auto& t = cfg.train;
  auto int_in_range = [&](long long lo) {
    const long long x = as_integer(key, v);
    if (x < lo || x > 1'000'000'000) throw UsageError("config key \"" + key + "\" out of range: " + v.dump());
    return static_cast<int>(x);
  };
  if (key == "seed") {
    const long long x = as_integer(key, v);
    if (x < 0) throw UsageError("seed must be non-negative");
    t.seed = static_cast<std::uint64_t>(x);
  } else if (key == "epochs") {
    t.epochs = int_in_range(0);
  } else if (key == "learning_rate") {
    t.learning_rate = as_real(key, v);
    if (!(t.learning_rate >= 0) || !std::isfinite(t.learning_rate))
      throw UsageError("learning_rate must be finite and >= 0");
  } else if (key == "hidden") {
    t.hidden = int_in_range(0);
  } else if (key == "threshold") {
    t.threshold = as_real(key, v);
    if (!(t.threshold > 0 && t.threshold < 1)) throw UsageError("threshold must lie in (0,1)");
  } else if (key == "lambda_clamp") {
    if (!v.is_boolean()) throw UsageError("config key \"lambda_clamp\" expects true or false");
    t.lambda_clamp_nonnegative = v.get<bool>();
  } else if (key == "lambda_rule") {
    auto rule = parse_lambda_rule(as_text(key, v));
    if (!rule) throw UsageError("lambda_rule must be as-printed or inverted-ratio");
    t.lambda_rule = *rule;
  } else if (key == "classify_loss") {
    auto form = parse_classify_loss_form(as_text(key, v));
    if (!form) throw UsageError("classify_loss must be pair or fake-only");
    t.classify_loss_form = *form;
  } else if (key == "pairs_per_round") {
    t.pairs_per_round = int_in_range(1);
  } else if (key == "others_per_category") {
    t.others_per_category = int_in_range(1);
  } else if (key == "variant") {
    auto variant = parse_variant(as_text(key, v));
    if (!variant) throw UsageError("variant must be one of full, no-fair-adapter, no-fair-loss, no-classify-loss");
    t.variant = *variant;
  } else if (key == "test_fraction") {
    cfg.test_fraction = as_real(key, v);
    if (!(cfg.test_fraction >= 0 && cfg.test_fraction <= 1)) throw UsageError("test_fraction must lie in [0,1]");
  } else {
    throw UsageError("unknown config key \"" + key + "\"");
  }
}

json override_value(const std::string& key, const std::string& text) {
  if (std::find(kStringKeys.begin(), kStringKeys.end(), key) != kStringKeys.end()) return json(text);
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    throw UsageError("invalid value \"" + text + "\" for " + key);
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed",          "epochs",          "learning_rate",       "hidden",  "threshold",     "lambda_clamp",
      "lambda_rule",   "classify_loss",   "pairs_per_round",     "others_per_category", "variant", "test_fraction"};
  return keys;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::map<std::string, std::string>& overrides) {
  RunConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config file " + path->string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      json doc;
      try {
        doc = json::parse(text);
      } catch (const json::parse_error& e) {
        throw UsageError("malformed config file " + path->string() + ": " + e.what());
      }
      if (!doc.is_object()) throw UsageError("config file " + path->string() + " must hold a JSON object");
      for (const auto& [key, value] : doc.items()) apply(cfg, key, value);
    }
  }
  for (const auto& [key, text] : overrides) apply(cfg, key, override_value(key, text));
  return cfg;
}

}  // namespace fairadapter
