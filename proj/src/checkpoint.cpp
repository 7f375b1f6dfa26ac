#include "fairadapter/checkpoint.hpp"

#include <fstream>
#include <map>
#include <vector>

#include <json.hpp>

namespace fairadapter {

using json = nlohmann::json;

namespace {

json flatten(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Eigen::MatrixXd unflatten(const json& obj, const char* key, Eigen::Index rows, Eigen::Index cols,
                          const std::string& group) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array())
    throw DomainError("checkpoint group " + group + ": missing array \"" + key + "\"");
  if (static_cast<Eigen::Index>(it->size()) != rows * cols)
    throw DimensionError("checkpoint group " + group + ": \"" + key + "\" has " + std::to_string(it->size()) +
                         " entries, expected " + std::to_string(rows * cols));
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = (*it)[k++];
      if (!v.is_number()) throw DomainError("checkpoint group " + group + ": non-numeric entry");
      m(r, c) = v.get<double>();
    }
  return m;
}

json adapter_json(const char* group, const AdapterParamsd& p) {
  return {{"group", group}, {"w1", flatten(p.w1)}, {"b1", flatten(p.b1)}, {"w2", flatten(p.w2)}, {"b2", flatten(p.b2)}};
}

json head_json(const char* group, const HeadParamsd& h) {
  return {{"group", group}, {"w", flatten(h.w)}, {"b", flatten(h.b)}};
}

const char* score_path_name(ScorePath path) {
  return path == ScorePath::classify_head ? "classify_head" : "fair_head";
}

}  // namespace

void write_checkpoint(const ModelParamsd& model, const std::filesystem::path& path) {
  if (!all_finite(model.fair) || !all_finite(model.classify))
    throw DomainError("refusing to write a checkpoint with non-finite parameters");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  json header = {{"format", kCheckpointFormat},
                 {"version", kCheckpointFormatVersion},
                 {"dim", model.dim()},
                 {"hidden", model.hidden()},
                 {"score_path", score_path_name(model.score_path)}};
  out << header.dump() << '\n';
  out << adapter_json("fair_adapter", model.fair.adapter).dump() << '\n';
  out << adapter_json("classify_adapter", model.classify.adapter).dump() << '\n';
  out << head_json("fair_head", model.fair.head).dump() << '\n';
  out << head_json("classify_head", model.classify.head).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

ModelParamsd parse_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());

  std::vector<json> lines;
  std::string text;
  while (std::getline(in, text)) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      lines.push_back(json::parse(text));
    } catch (const json::exception& e) {
      throw DomainError(path.string() + ":" + std::to_string(lines.size() + 1) + ": malformed JSON: " + e.what());
    }
  }
  if (lines.empty()) throw DomainError(path.string() + ": empty checkpoint");

  const json& header = lines.front();
  if (!header.is_object() || header.value("format", "") != kCheckpointFormat)
    throw DomainError(path.string() + ": not a checkpoint file");
  if (header.value("version", -1) != kCheckpointFormatVersion)
    throw DomainError(path.string() + ": unsupported checkpoint version");
  const auto dim = header.value("dim", Eigen::Index{0});
  const auto hidden = header.value("hidden", Eigen::Index{0});
  if (dim < 1 || hidden < 1) throw DomainError(path.string() + ": dim and hidden must be positive");

  ModelParamsd model = ModelParamsd::Zero(dim, hidden);
  const std::string score_path = header.value("score_path", "classify_head");
  if (score_path == "classify_head") {
    model.score_path = ScorePath::classify_head;
  } else if (score_path == "fair_head") {
    model.score_path = ScorePath::fair_head;
  } else {
    throw DomainError(path.string() + ": unknown score_path \"" + score_path + "\"");
  }

  std::map<std::string, bool> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json& obj = lines[i];
    const std::string group = obj.is_object() ? obj.value("group", "") : "";
    if (seen[group]) throw DomainError(path.string() + ": duplicate group \"" + group + "\"");
    seen[group] = true;
    if (group == "fair_adapter" || group == "classify_adapter") {
      auto& a = group == "fair_adapter" ? model.fair.adapter : model.classify.adapter;
      a.w1 = unflatten(obj, "w1", hidden, dim, group);
      a.b1 = unflatten(obj, "b1", hidden, 1, group);
      a.w2 = unflatten(obj, "w2", dim, hidden, group);
      a.b2 = unflatten(obj, "b2", dim, 1, group);
    } else if (group == "fair_head" || group == "classify_head") {
      auto& h = group == "fair_head" ? model.fair.head : model.classify.head;
      h.w = unflatten(obj, "w", 2, dim, group);
      h.b = unflatten(obj, "b", 2, 1, group);
    } else {
      throw DomainError(path.string() + ": unknown parameter group \"" + group + "\"");
    }
  }
  for (const char* g : {"fair_adapter", "classify_adapter", "fair_head", "classify_head"})
    if (!seen[g]) throw DomainError(path.string() + ": missing parameter group \"" + g + "\"");
  return model;
}

}  // namespace

ModelParamsd read_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(path);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(path.string() + ": invalid checkpoint field: " + e.what());
  }
}

}  // namespace fairadapter
