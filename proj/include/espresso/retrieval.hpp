#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "espresso/corpus.hpp"
#include "espresso/error.hpp"
#include "espresso/mid_level.hpp"
#include "espresso/numerics.hpp"
#include "espresso/text_encoder.hpp"

namespace espresso {

struct IndexEntry {
  std::string performance_id;
  std::string artist_label;
  Vector8 vector;  // comparison coordinates
};

// Per-piece performance vectors in the model's comparison space. Immutable
// once built; safe to share between concurrent queries.
struct RetrievalIndex {
  std::map<std::string, std::vector<IndexEntry>> by_piece;  // entries sorted by performance_id
  std::optional<Standardization> standardization;
  std::string model_fingerprint;

  const std::vector<IndexEntry>* find(const std::string& piece_id) const {
    auto it = by_piece.find(piece_id);
    return it == by_piece.end() ? nullptr : &it->second;
  }
};

// Lower-level form used by build_index(); takes the raw records so the
// finiteness gate applies even to data that never went through a Catalog.
inline RetrievalIndex build_index(std::span<const Piece> pieces, std::span<const Performance> performances,
                                  const ProjectionModel& model) {
  model.validate();
  if (model.config_fingerprint.empty()) {
    throw Error(ErrorCode::fingerprint_mismatch, "model has no fingerprint");
  }
  RetrievalIndex index;
  index.standardization = model.feature_standardization;
  index.model_fingerprint = model.config_fingerprint;

  std::map<std::string, const Performance*> by_id;
  for (const auto& perf : performances) by_id[perf.performance_id] = &perf;

  for (const auto& piece : pieces) {
    auto& entries = index.by_piece[piece.piece_id];
    for (const auto& pid : piece.performance_ids) {
      auto it = by_id.find(pid);
      if (it == by_id.end()) {
        throw Error(ErrorCode::integrity, "piece '" + piece.piece_id + "' lists unknown performance '" + pid + "'",
                    {pid});
      }
      const Performance& perf = *it->second;
      if (!perf.features.all_finite()) {
        throw Error(ErrorCode::non_finite,
                    "performance '" + pid + "' has non-finite features", {pid});
      }
      const Vector8 v = model.to_comparison_space(perf.features);
      if (!v.allFinite()) {
        throw Error(ErrorCode::non_finite,
                    "performance '" + pid + "' is non-finite in comparison space", {pid});
      }
      entries.push_back({pid, perf.artist_label, v});
    }
    std::sort(entries.begin(), entries.end(),
              [](const IndexEntry& a, const IndexEntry& b) { return a.performance_id < b.performance_id; });
  }
  return index;
}

inline RetrievalIndex build_index(const Catalog& catalog, const ProjectionModel& model) {
  return build_index(catalog.pieces(), catalog.performances(), model);
}

struct CosineScore {
  double value = 0.0;
  bool zero_norm = false;
};

// (a . b) / (|a| |b|); a zero-norm side scores 0 and is flagged.
inline CosineScore cosine_similarity(const Vector8& a, const Vector8& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(a.dot(b) / (na * nb), -1.0, 1.0), false};
}

struct RankedResult {
  std::string performance_id;
  std::string artist_label;
  double score = 0.0;
  std::size_t rank = 0;
  MidLevelVector predicted_profile;
  MidLevelVector performance_profile;
  bool zero_norm = false;
};

struct QueryResult {
  std::string piece_id;
  std::string query;
  MidLevelVector predicted_profile;
  MidLevelVector piece_mean;
  std::vector<RankedResult> results;
  std::vector<std::string> oov_tokens;
  std::vector<std::string> warnings;
  bool standardized = false;
};

// Ranks a piece's performances against an already projected query. Scores
// descend; equal scores keep ascending performance_id order.
inline std::vector<RankedResult> rank_projected(const RetrievalIndex& index, const std::string& piece_id,
                                                const Vector8& query) {
  const auto* entries = index.find(piece_id);
  if (entries == nullptr) {
    throw Error(ErrorCode::unknown_piece, "unknown piece '" + piece_id + "'", {piece_id});
  }
  std::vector<RankedResult> results;
  results.reserve(entries->size());
  const MidLevelVector predicted = from_eigen(query);
  for (const auto& e : *entries) {
    const auto cos = cosine_similarity(query, e.vector);
    results.push_back({e.performance_id, e.artist_label, cos.value, 0, predicted, from_eigen(e.vector),
                       cos.zero_norm});
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const RankedResult& a, const RankedResult& b) { return a.score > b.score; });
  for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = i + 1;
  return results;
}

inline MidLevelVector piece_mean_profile(const RetrievalIndex& index, const std::string& piece_id) {
  const auto* entries = index.find(piece_id);
  if (entries == nullptr || entries->empty()) {
    throw Error(ErrorCode::unknown_piece, "unknown piece '" + piece_id + "'", {piece_id});
  }
  Vector8 sum = Vector8::Zero();
  for (const auto& e : *entries) sum += e.vector;
  return from_eigen(sum / static_cast<double>(entries->size()));
}

inline QueryResult rank_performances(const RetrievalIndex& index, const ProjectionModel& model,
                                     const WordEmbeddingTable& table, const std::string& piece_id,
                                     const std::string& text) {
  if (index.model_fingerprint != model.config_fingerprint) {
    throw Error(ErrorCode::fingerprint_mismatch, "index was built for a different model",
                {index.model_fingerprint, model.config_fingerprint});
  }
  if (index.find(piece_id) == nullptr) {
    throw Error(ErrorCode::unknown_piece, "unknown piece '" + piece_id + "'", {piece_id});
  }
  const TextEmbedding embedding = encode_text(table, text, model.aggregate);
  const Vector8 query = to_eigen(project_text(model, embedding));

  QueryResult out;
  out.piece_id = piece_id;
  out.query = text;
  out.predicted_profile = from_eigen(query);
  out.piece_mean = piece_mean_profile(index, piece_id);
  out.results = rank_projected(index, piece_id, query);
  out.oov_tokens = embedding.oov_tokens;
  out.standardized = model.standardized();
  if (!out.oov_tokens.empty()) {
    std::string joined;
    for (const auto& t : out.oov_tokens) joined += (joined.empty() ? "" : ", ") + t;
    out.warnings.push_back("ignored out-of-vocabulary tokens: " + joined);
  }
  if (query.norm() == 0.0) out.warnings.push_back("projected query has zero norm; all scores are 0");
  for (const auto& r : out.results) {
    if (r.zero_norm && query.norm() != 0.0) {
      out.warnings.push_back("performance '" + r.performance_id + "' has a zero feature vector; score set to 0");
    }
  }
  return out;
}

struct DimensionExplanation {
  std::string_view name;
  double predicted = 0.0;
  double performance = 0.0;
  double predicted_deviation = 0.0;    // predicted - piece mean
  double performance_deviation = 0.0;  // performance - piece mean
};

// Per-dimension view of why a performance scored as it did: the query's
// projected profile and the performance's profile, each relative to the
// piece's mean profile. In a standardized model the deviations are in
// training standard deviations.
inline std::vector<DimensionExplanation> explain(const RankedResult& result, const MidLevelVector& piece_mean) {
  std::vector<DimensionExplanation> out;
  out.reserve(kMidLevelDims);
  for (std::size_t i = 0; i < kMidLevelDims; ++i) {
    out.push_back({kMidLevelNames[i], result.predicted_profile[i], result.performance_profile[i],
                   result.predicted_profile[i] - piece_mean[i], result.performance_profile[i] - piece_mean[i]});
  }
  return out;
}

inline nlohmann::json profile_to_json(const MidLevelVector& v) { return nlohmann::json(v.values); }

// The result record shared by the CLI document output and the HTTP service.
inline nlohmann::json query_result_to_json(const QueryResult& r) {
  nlohmann::json doc;
  doc["piece_id"] = r.piece_id;
  doc["query"] = r.query;
  doc["dimensions"] = kMidLevelNames;
  doc["comparison_space"] = r.standardized ? "standardized" : "raw";
  doc["predicted_profile"] = profile_to_json(r.predicted_profile);
  doc["piece_mean_profile"] = profile_to_json(r.piece_mean);
  doc["results"] = nlohmann::json::array();
  for (const auto& res : r.results) {
    std::vector<double> deviations;
    for (const auto& d : explain(res, r.piece_mean)) deviations.push_back(d.performance_deviation);
    doc["results"].push_back({{"performance_id", res.performance_id},
                              {"artist_label", res.artist_label},
                              {"score", res.score},
                              {"rank", res.rank},
                              {"predicted_profile", profile_to_json(res.predicted_profile)},
                              {"performance_profile", profile_to_json(res.performance_profile)},
                              {"deviations", deviations}});
  }
  doc["oov_tokens"] = r.oov_tokens;
  doc["warnings"] = r.warnings;
  return doc;
}

}  // namespace espresso
