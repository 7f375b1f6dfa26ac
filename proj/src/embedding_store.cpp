#include "fairadapter/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fairadapter/error.hpp"

namespace fairadapter {

using json = nlohmann::json;

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << path.string() << ":" << line << ": " << what;
  throw DomainError(os.str());
}

const json& require_field(const json& obj, const char* key, const std::filesystem::path& path,
                          std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) fail_at(path, line, std::string("missing field \"") + key + "\"");
  return *it;
}

}  // namespace

EmbeddingSet::EmbeddingSet(Eigen::Index dim, std::string encoder_tag, std::vector<EmbeddingRecord> records)
    : dim_(dim), encoder_tag_(std::move(encoder_tag)), records_(std::move(records)) {
  if (dim_ < 1) throw DomainError("embedding dim must be positive, got " + std::to_string(dim_));
  std::set<std::string> names;
  for (const auto& r : records_) names.insert(r.category);
  categories_.assign(names.begin(), names.end());
}

int EmbeddingSet::category_index(const std::string& category) const {
  auto it = std::lower_bound(categories_.begin(), categories_.end(), category);
  if (it == categories_.end() || *it != category) return -1;
  return static_cast<int>(it - categories_.begin());
}

EmbeddingSet read_embedding_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());

  std::string text;
  std::size_t line_no = 0;
  Eigen::Index dim = 0;
  std::string encoder;
  bool have_header = false;
  std::vector<EmbeddingRecord> records;

  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::exception& e) {
      fail_at(path, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) fail_at(path, line_no, "expected a JSON object");

    if (!have_header) {
      const auto& format = require_field(obj, "format", path, line_no);
      if (!format.is_string() || format.get<std::string>() != kEmbeddingFormat)
        fail_at(path, line_no, "unknown format " + format.dump());
      const auto& version = require_field(obj, "version", path, line_no);
      if (!version.is_number_integer() || version.get<int>() != kEmbeddingFormatVersion)
        fail_at(path, line_no, "unsupported version " + version.dump());
      const auto& d = require_field(obj, "dim", path, line_no);
      if (!d.is_number_integer() || d.get<long long>() < 1)
        fail_at(path, line_no, "dim must be a positive integer, got " + d.dump());
      dim = static_cast<Eigen::Index>(d.get<long long>());
      const auto& enc = require_field(obj, "encoder", path, line_no);
      if (!enc.is_string()) fail_at(path, line_no, "encoder must be a string");
      encoder = enc.get<std::string>();
      have_header = true;
      continue;
    }

    EmbeddingRecord rec;
    const auto& id = require_field(obj, "id", path, line_no);
    if (!id.is_string()) fail_at(path, line_no, "id must be a string");
    rec.id = id.get<std::string>();
    const auto& category = require_field(obj, "category", path, line_no);
    if (!category.is_string() || category.get<std::string>().empty())
      fail_at(path, line_no, "category must be a non-empty string");
    rec.category = category.get<std::string>();
    const auto& label = require_field(obj, "label", path, line_no);
    if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1))
      fail_at(path, line_no, "label must be 0 or 1, got " + label.dump());
    rec.label = label.get<int>();
    const auto& vec = require_field(obj, "vector", path, line_no);
    if (!vec.is_array()) fail_at(path, line_no, "vector must be an array");
    if (static_cast<Eigen::Index>(vec.size()) != dim) {
      fail_at(path, line_no,
              "vector length " + std::to_string(vec.size()) + " does not match header dim " + std::to_string(dim));
    }
    rec.vector.resize(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      const auto& v = vec[static_cast<std::size_t>(k)];
      if (!v.is_number()) fail_at(path, line_no, "vector entries must be numbers");
      const double value = v.get<double>();
      if (!std::isfinite(value)) fail_at(path, line_no, "non-finite vector entry in record " + rec.id);
      rec.vector[k] = value;
    }
    records.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("read error on " + path.string());
  if (!have_header) fail_at(path, line_no == 0 ? 1 : line_no, "missing header line");
  return EmbeddingSet(dim, std::move(encoder), std::move(records));
}

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  for (const auto& r : set.records()) {
    if (r.vector.size() != set.dim())
      throw DimensionError("record " + r.id + " has length " + std::to_string(r.vector.size()));
    if (!r.vector.allFinite()) throw DomainError("record " + r.id + " has a non-finite entry");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file " + path.string());

  json header = {{"format", kEmbeddingFormat},
                 {"version", kEmbeddingFormatVersion},
                 {"dim", set.dim()},
                 {"encoder", set.encoder_tag()}};
  out << header.dump() << '\n';
  for (const auto& r : set.records()) {
    json rec = {{"id", r.id},
                {"category", r.category},
                {"label", r.label},
                {"vector", std::vector<double>(r.vector.data(), r.vector.data() + r.vector.size())}};
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> validate_set(const EmbeddingSet& set, bool require_both_labels_per_category) {
  std::vector<std::string> violations;
  std::map<std::string, std::pair<int, int>> label_counts;
  for (const auto& r : set.records()) {
    const std::string who = "record \"" + r.id + "\"";
    if (r.category.empty()) violations.push_back(who + ": empty category");
    if (r.label != 0 && r.label != 1) violations.push_back(who + ": label " + std::to_string(r.label) + " not in {0,1}");
    if (r.vector.size() != set.dim()) {
      violations.push_back(who + ": vector length " + std::to_string(r.vector.size()) + " != dim " +
                           std::to_string(set.dim()));
    } else if (!r.vector.allFinite()) {
      violations.push_back(who + ": non-finite vector entry");
    }
    auto& counts = label_counts[r.category];
    (r.label == 1 ? counts.second : counts.first)++;
  }
  if (set.categories().empty()) violations.push_back("set has no categories");
  if (require_both_labels_per_category) {
    for (const auto& [name, counts] : label_counts) {
      if (counts.first == 0) violations.push_back("category \"" + name + "\" has no real records");
      if (counts.second == 0) violations.push_back("category \"" + name + "\" has no fake records");
    }
  }
  return violations;
}

Eigen::VectorXd synth_fake_direction(std::uint64_t seed, int dim) {
  if (dim < 1) throw DomainError("synthetic dim must be positive");
  auto rng = seeded_engine(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u(dim);
  do {
    for (int k = 0; k < dim; ++k) u[k] = normal(rng);
  } while (u.norm() == 0.0);
  return u.normalized();
}

EmbeddingSet synth_generate(const SynthConfig& cfg) {
  if (cfg.dim < 1) throw DomainError("synthetic dim must be positive");
  if (cfg.n_categories < 1) throw DomainError("synthetic n_categories must be at least 1");
  if (cfg.per_category_real < 0 || cfg.per_category_fake < 0)
    throw DomainError("synthetic per-category counts must be non-negative");
  if (cfg.shared_fake_shift < 0 || cfg.nuisance_scale < 0 || cfg.noise_sigma < 0)
    throw DomainError("synthetic magnitudes must be non-negative");
  if (!cfg.skew.empty() && static_cast<int>(cfg.skew.size()) != cfg.n_categories)
    throw DomainError("skew length " + std::to_string(cfg.skew.size()) + " != n_categories " +
                      std::to_string(cfg.n_categories));
  for (double s : cfg.skew)
    if (!(s >= 0)) throw DomainError("skew entries must be non-negative");

  const Eigen::VectorXd u = synth_fake_direction(cfg.seed, cfg.dim);
  auto rng = seeded_engine(cfg.seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = normal(rng);
    return v;
  };

  const int width = cfg.n_categories > 100 ? 4 : 2;
  std::vector<EmbeddingRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.n_categories) * (cfg.per_category_real + cfg.per_category_fake));
  for (int j = 0; j < cfg.n_categories; ++j) {
    std::ostringstream name;
    name << "c" << std::setw(width) << std::setfill('0') << j;
    Eigen::VectorXd direction = gaussian(cfg.dim);
    const double norm = direction.norm();
    const Eigen::VectorXd mean = norm > 0 ? Eigen::VectorXd(cfg.nuisance_scale * direction / norm)
                                          : Eigen::VectorXd::Zero(cfg.dim);
    const double skew = cfg.skew.empty() ? 1.0 : cfg.skew[static_cast<std::size_t>(j)];
    const Eigen::VectorXd fake_mean = mean + (skew * cfg.shared_fake_shift) * u;

    for (int label = 0; label <= 1; ++label) {
      const int count = label == 0 ? cfg.per_category_real : cfg.per_category_fake;
      const Eigen::VectorXd& centre = label == 0 ? mean : fake_mean;
      for (int i = 0; i < count; ++i) {
        std::ostringstream id;
        id << name.str() << (label == 0 ? "/real/" : "/fake/") << std::setw(4) << std::setfill('0') << i;
        records.push_back({id.str(), name.str(), label, centre + cfg.noise_sigma * gaussian(cfg.dim)});
      }
    }
  }
  return EmbeddingSet(cfg.dim, cfg.encoder_tag, std::move(records));
}

std::pair<EmbeddingSet, EmbeddingSet> split_set(const EmbeddingSet& set, double test_fraction,
                                                std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
    throw DomainError("test fraction must lie in [0,1]");
  const auto& records = set.records();

  std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i) strata[{records[i].category, records[i].label}].push_back(i);

  auto rng = seeded_engine(seed, 3);
  std::vector<bool> in_test(records.size(), false);
  for (auto& [key, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    // The small epsilon keeps e.g. 0.3 * 10 from landing just below 3.
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * members.size() + 1e-9));
    for (std::size_t k = 0; k < n_test; ++k) in_test[members[k]] = true;
  }

  std::vector<EmbeddingRecord> train, test;
  for (std::size_t i = 0; i < records.size(); ++i) (in_test[i] ? test : train).push_back(records[i]);
  return {EmbeddingSet(set.dim(), set.encoder_tag(), std::move(train)),
          EmbeddingSet(set.dim(), set.encoder_tag(), std::move(test))};
}

}  // namespace fairadapter
