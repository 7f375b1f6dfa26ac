#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace fairadapter {

/// One encoder output: label 0 is natural, 1 is AI-generated.
struct EmbeddingRecord {
  std::string id;
  std::string category;
  int label = 0;
  Eigen::VectorXd vector;

  bool operator==(const EmbeddingRecord& other) const {
    return id == other.id && category == other.category && label == other.label &&
           vector.size() == other.vector.size() && vector == other.vector;
  }
};

/// Immutable, labeled, category-tagged embeddings of a single width.
///
/// Construction only checks that the width is positive; use validate_set() for the
/// per-record invariants. Categories are kept in lexicographic order so that the
/// category index is stable across runs and files.
class EmbeddingSet {
 public:
  EmbeddingSet(Eigen::Index dim, std::string encoder_tag, std::vector<EmbeddingRecord> records);

  Eigen::Index dim() const { return dim_; }
  const std::string& encoder_tag() const { return encoder_tag_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const std::vector<std::string>& categories() const { return categories_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Index of `category` in categories(), or -1.
  int category_index(const std::string& category) const;

  bool operator==(const EmbeddingSet& other) const {
    return dim_ == other.dim_ && encoder_tag_ == other.encoder_tag_ && records_ == other.records_;
  }

 private:
  Eigen::Index dim_;
  std::string encoder_tag_;
  std::vector<EmbeddingRecord> records_;
  std::vector<std::string> categories_;
};

inline constexpr const char* kEmbeddingFormat = "fairadapter-embeddings";
inline constexpr int kEmbeddingFormatVersion = 1;

/// Parses a newline-delimited JSON embedding file. Throws IoError if the file cannot
/// be opened and DomainError (with the 1-based line number) for malformed content.
EmbeddingSet read_embedding_set(const std::filesystem::path& path);

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);

/// Returns one human-readable description per violated invariant; empty when valid.
/// With `require_both_labels_per_category`, every category must hold at least one
/// real and one fake record.
std::vector<std::string> validate_set(const EmbeddingSet& set, bool require_both_labels_per_category);

struct SynthConfig {
  int n_categories = 4;
  int per_category_real = 100;
  int per_category_fake = 100;
  int dim = 64;
  double shared_fake_shift = 1.0;
  double nuisance_scale = 1.0;
  double noise_sigma = 0.3;
  // Per-category multiplier on the fake shift; empty means all ones.
  std::vector<double> skew;
  std::uint64_t seed = 0;
  std::string encoder_tag = "synthetic";
};

/// Gaussian stand-in for encoder output. Real records of category j sit around a
/// category mean; fake records around that mean plus skew[j] * shift * u for one
/// fixed unit direction u shared by every category.
EmbeddingSet synth_generate(const SynthConfig& cfg);

/// The unit direction u used by synth_generate for this seed and width.
Eigen::VectorXd synth_fake_direction(std::uint64_t seed, int dim);

/// Stratified by (category, label). Each stratum puts floor(fraction * size) records
/// into the test side; both sides keep the input record order.
std::pair<EmbeddingSet, EmbeddingSet> split_set(const EmbeddingSet& set, double test_fraction,
                                                std::uint64_t seed);

}  // namespace fairadapter
