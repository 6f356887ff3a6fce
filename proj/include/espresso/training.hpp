#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "espresso/corpus.hpp"
#include "espresso/model_io.hpp"
#include "espresso/numerics.hpp"
#include "espresso/text_encoder.hpp"

namespace espresso {

inline constexpr double kDefaultPcaFraction = 0.95;
inline constexpr double kDefaultUnderdeterminedRidge = 1e-2;

struct TrainConfig {
  std::optional<PcaTarget> pca = PcaVarianceFraction{kDefaultPcaFraction};
  std::optional<double> ridge_lambda;  // unset: default_ridge()
  bool standardize = true;
  Aggregate aggregate = Aggregate::sum;
};

// Ridge is switched on only when the linear system is underdetermined.
inline double default_ridge(std::size_t sample_count, std::size_t input_dimension) {
  return sample_count < input_dimension ? kDefaultUnderdeterminedRidge : 0.0;
}

// "off", an integer component count ("8"), or a variance fraction ("0.95").
inline std::optional<PcaTarget> parse_pca_setting(std::string_view text) {
  if (text == "off" || text == "none") return std::nullopt;
  const bool fractional = text.find_first_of(".eE") != std::string_view::npos;
  if (!fractional) {
    const auto k = detail::parse_integer(text);
    if (!k || *k < 1) throw Error(ErrorCode::invalid_argument, "invalid PCA setting '" + std::string(text) + "'");
    return PcaComponentCount{static_cast<std::size_t>(*k)};
  }
  const auto v = detail::parse_double(text);
  if (!v || !(*v > 0.0 && *v <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "PCA variance fraction must lie in (0, 1], got '" +
                                                 std::string(text) + "'");
  }
  return PcaVarianceFraction{*v};
}

inline nlohmann::json pca_setting_to_json(const std::optional<PcaTarget>& pca) {
  if (!pca) return "off";
  if (const auto* c = std::get_if<PcaComponentCount>(&*pca)) return {{"components", c->count}};
  return {{"variance_fraction", std::get<PcaVarianceFraction>(*pca).fraction}};
}

struct EncodedPairs {
  Eigen::MatrixXd inputs;   // n x d
  Eigen::MatrixXd targets;  // n x 8
  std::map<std::string, std::size_t> counts;
  std::size_t skipped = 0;
  std::string digest;
};

// Pairs whose text has no in-vocabulary token cannot be embedded and are
// skipped (and counted).
inline EncodedPairs encode_pairs(const std::vector<DescriptionPair>& pairs,
                                 const WordEmbeddingTable& table, Aggregate aggregate) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<Vector8> targets;
  EncodedPairs out;
  std::string digest_input;
  for (const auto& pair : pairs) {
    TextEmbedding e;
    try {
      e = encode_text(table, pair.text, aggregate);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::unencodable_query) throw;
      ++out.skipped;
      continue;
    }
    rows.push_back(std::move(e.vector));
    targets.push_back(to_eigen(pair.target_features));
    ++out.counts[to_string(pair.source)];
    digest_input += pair.text;
    digest_input += '\x1f';
    for (double v : pair.target_features.values) digest_input += nlohmann::json(v).dump() + ",";
    digest_input += '\x1e';
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(table.dimension());
  out.inputs.resize(n, d);
  out.targets.resize(n, static_cast<Eigen::Index>(kMidLevelDims));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.inputs.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    out.targets.row(i) = targets[static_cast<std::size_t>(i)].transpose();
  }
  out.digest = fnv1a_hex(digest_input);
  return out;
}

// Fits the optional PCA, the target standardization and the linear map on
// exactly the pairs given.
inline ProjectionModel train_projection(const std::vector<DescriptionPair>& pairs,
                                        const WordEmbeddingTable& table, const TrainConfig& config) {
  const auto data = encode_pairs(pairs, table, config.aggregate);
  const auto n = static_cast<std::size_t>(data.inputs.rows());
  if (n == 0) throw Error(ErrorCode::invalid_argument, "no encodable training pairs");

  ProjectionModel model;
  model.input_dimension = table.dimension();
  model.aggregate = config.aggregate;

  Eigen::MatrixXd inputs = data.inputs;
  if (config.pca) {
    model.pca = fit_pca(inputs, *config.pca);
    inputs = apply_pca_rows(*model.pca, inputs);
  }

  Eigen::MatrixXd targets = data.targets;
  if (config.standardize) {
    model.feature_standardization = fit_standardization(targets);
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      targets.row(i) = model.feature_standardization->forward(targets.row(i).transpose()).transpose();
    }
  }

  const double lambda = config.ridge_lambda.value_or(
      default_ridge(n, static_cast<std::size_t>(inputs.cols())));
  model.map = fit_linear(inputs, targets, lambda);

  model.trained_on = data.counts;
  model.trained_on["skipped_unencodable"] = data.skipped;

  const nlohmann::json fingerprint_input = {
      {"pca", pca_setting_to_json(config.pca)},
      {"ridge_lambda", lambda},
      {"standardize", config.standardize},
      {"aggregate", config.aggregate == Aggregate::sum ? "sum" : "mean"},
      {"input_dimension", model.input_dimension},
      {"trained_on", model.trained_on},
      {"data_digest", data.digest}};
  model.config_fingerprint = fnv1a_hex(fingerprint_input.dump());
  model.validate();
  return model;
}

}  // namespace espresso
