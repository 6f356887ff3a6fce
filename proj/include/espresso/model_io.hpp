#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "espresso/corpus.hpp"
#include "espresso/error.hpp"
#include "espresso/numerics.hpp"

namespace espresso {

// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline nlohmann::json row_major_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return flat;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::parse, where + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::parse, where + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd row_major_from_json(const nlohmann::json& j, Eigen::Index rows,
                                           Eigen::Index cols, const std::string& where) {
  const Eigen::VectorXd flat = vector_from_json(j, where);
  if (flat.size() != rows * cols) {
    throw Error(ErrorCode::dimension, where + " has " + std::to_string(flat.size()) +
                                          " entries, expected " + std::to_string(rows * cols));
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[r * cols + c];
  }
  return m;
}

inline Vector8 vector8_from_json(const nlohmann::json& j, const std::string& where) {
  const Eigen::VectorXd v = vector_from_json(j, where);
  if (v.size() != static_cast<Eigen::Index>(kMidLevelDims)) {
    throw Error(ErrorCode::dimension, where + " must have 8 entries");
  }
  return v;
}

inline Eigen::Index index_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_unsigned()) throw Error(ErrorCode::parse, where + ": '" + key + "' must be a count");
  return static_cast<Eigen::Index>(v.get<std::uint64_t>());
}

}  // namespace detail

inline nlohmann::json model_to_json(const ProjectionModel& model) {
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["input_dimension"] = model.input_dimension;
  doc["aggregate"] = model.aggregate == Aggregate::sum ? "sum" : "mean";
  if (model.pca) {
    const auto& p = *model.pca;
    doc["pca"] = {{"input_dimension", p.input_dimension()},
                  {"component_count", p.output_dimension()},
                  {"mean", detail::vector_to_json(p.mean)},
                  {"components", detail::row_major_to_json(p.components)},
                  {"explained_variance_ratio", detail::vector_to_json(p.explained_variance_ratio)}};
  }
  doc["map"] = {{"input_dimension", model.map.input_dimension()},
                {"weights", detail::row_major_to_json(model.map.weights)},
                {"bias", detail::vector_to_json(model.map.bias)},
                {"ridge_lambda", model.map.ridge_lambda}};
  if (model.feature_standardization) {
    doc["feature_standardization"] = {
        {"mean", detail::vector_to_json(model.feature_standardization->mean)},
        {"std", detail::vector_to_json(model.feature_standardization->std)}};
  }
  doc["config_fingerprint"] = model.config_fingerprint;
  doc["trained_on"] = model.trained_on;
  return doc;
}

inline ProjectionModel model_from_json(const nlohmann::json& doc) {
  using detail::require;
  detail::check_schema(doc, "model");
  ProjectionModel model;
  model.input_dimension = static_cast<std::size_t>(detail::index_field(doc, "input_dimension", "model"));

  const auto aggregate = detail::require_string(doc, "aggregate", "model");
  if (aggregate == "sum") {
    model.aggregate = Aggregate::sum;
  } else if (aggregate == "mean") {
    model.aggregate = Aggregate::mean;
  } else {
    throw Error(ErrorCode::parse, "model: unknown aggregate '" + aggregate + "'");
  }

  if (auto it = doc.find("pca"); it != doc.end() && !it->is_null()) {
    const auto d = detail::index_field(*it, "input_dimension", "model.pca");
    const auto k = detail::index_field(*it, "component_count", "model.pca");
    PcaTransform p;
    p.mean = detail::vector_from_json(require(*it, "mean", "model.pca"), "model.pca.mean");
    p.components = detail::row_major_from_json(require(*it, "components", "model.pca"), k, d,
                                                "model.pca.components");
    p.explained_variance_ratio = detail::vector_from_json(
        require(*it, "explained_variance_ratio", "model.pca"), "model.pca.explained_variance_ratio");
    model.pca = std::move(p);
  }

  const auto& mj = require(doc, "map", "model");
  const auto m = detail::index_field(mj, "input_dimension", "model.map");
  model.map.weights = detail::row_major_from_json(require(mj, "weights", "model.map"),
                                                  static_cast<Eigen::Index>(kMidLevelDims), m,
                                                  "model.map.weights");
  model.map.bias = detail::vector8_from_json(require(mj, "bias", "model.map"), "model.map.bias");
  const auto& lambda = require(mj, "ridge_lambda", "model.map");
  if (!lambda.is_number()) throw Error(ErrorCode::parse, "model.map.ridge_lambda must be a number");
  model.map.ridge_lambda = lambda.get<double>();

  if (auto it = doc.find("feature_standardization"); it != doc.end() && !it->is_null()) {
    Standardization s;
    s.mean = detail::vector8_from_json(require(*it, "mean", "model.feature_standardization"),
                                       "model.feature_standardization.mean");
    s.std = detail::vector8_from_json(require(*it, "std", "model.feature_standardization"),
                                      "model.feature_standardization.std");
    model.feature_standardization = s;
  }

  model.config_fingerprint = detail::require_string(doc, "config_fingerprint", "model");
  if (auto it = doc.find("trained_on"); it != doc.end() && it->is_object()) {
    for (const auto& [key, value] : it->items()) {
      if (value.is_number_unsigned()) model.trained_on[key] = value.get<std::size_t>();
    }
  }
  model.validate();
  return model;
}

inline ProjectionModel load_model(const std::string& path) {
  return model_from_json(detail::parse_document(detail::read_text_file(path), "model"));
}

inline void save_model(const std::string& path, const ProjectionModel& model) {
  detail::write_text_file(path, model_to_json(model).dump(2) + "\n");
}

}  // namespace espresso
