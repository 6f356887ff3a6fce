#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "espresso/error.hpp"
#include "espresso/mid_level.hpp"
#include "espresso/text_encoder.hpp"

namespace espresso {

inline constexpr int kSchemaVersion = 1;

struct Performance {
  std::string performance_id;
  std::string piece_id;
  std::string artist_label;
  MidLevelVector features;
  std::optional<std::string> audio_path;

  friend bool operator==(const Performance&, const Performance&) = default;
};

struct Piece {
  std::string piece_id;
  std::string title;
  std::vector<std::string> performance_ids;

  friend bool operator==(const Piece&, const Piece&) = default;
};

enum class Source { core, musiccaps, pitchfork };

inline std::string to_string(Source s) {
  switch (s) {
    case Source::core: return "core";
    case Source::musiccaps: return "musiccaps";
    case Source::pitchfork: return "pitchfork";
  }
  return "core";
}

inline std::optional<Source> parse_source(std::string_view name) {
  if (name == "core") return Source::core;
  if (name == "musiccaps") return Source::musiccaps;
  if (name == "pitchfork") return Source::pitchfork;
  return std::nullopt;
}

using SourceSet = std::set<Source>;

inline const SourceSet& all_sources() {
  static const SourceSet kAll{Source::core, Source::musiccaps, Source::pitchfork};
  return kAll;
}

struct DescriptionPair {
  std::string text;
  MidLevelVector target_features;
  Source source = Source::core;
  std::optional<std::string> piece_id;
  std::optional<std::string> performance_id;

  friend bool operator==(const DescriptionPair&, const DescriptionPair&) = default;
};

// Pieces and their performances. Construct through make_catalog() or
// load_catalog(); both enforce referential integrity and leave the object
// immutable for the rest of its life.
class Catalog {
 public:
  const std::vector<Piece>& pieces() const { return pieces_; }
  const std::vector<Performance>& performances() const { return performances_; }

  const Piece* find_piece(const std::string& id) const {
    auto it = piece_index_.find(id);
    return it == piece_index_.end() ? nullptr : &pieces_[it->second];
  }

  const Performance* find_performance(const std::string& id) const {
    auto it = performance_index_.find(id);
    return it == performance_index_.end() ? nullptr : &performances_[it->second];
  }

  // Pieces with a single performance are legal but trivially rank 1.
  std::vector<std::string> singleton_piece_ids() const {
    std::vector<std::string> out;
    for (const auto& p : pieces_) {
      if (p.performance_ids.size() == 1) out.push_back(p.piece_id);
    }
    return out;
  }

  friend bool operator==(const Catalog& a, const Catalog& b) {
    return a.pieces_ == b.pieces_ && a.performances_ == b.performances_;
  }

  friend Catalog make_catalog(std::vector<Piece>, std::vector<Performance>);

 private:
  std::vector<Piece> pieces_;
  std::vector<Performance> performances_;
  std::unordered_map<std::string, std::size_t> piece_index_;
  std::unordered_map<std::string, std::size_t> performance_index_;
};

inline Catalog make_catalog(std::vector<Piece> pieces,
                            std::vector<Performance> performances) {
  if (pieces.empty()) {
    throw Error(ErrorCode::integrity, "catalog has no pieces");
  }
  Catalog c;
  c.pieces_ = std::move(pieces);
  c.performances_ = std::move(performances);

  for (std::size_t i = 0; i < c.pieces_.size(); ++i) {
    const auto& piece = c.pieces_[i];
    if (piece.piece_id.empty()) {
      throw Error(ErrorCode::integrity, "piece " + std::to_string(i) + " has an empty piece_id");
    }
    if (!c.piece_index_.emplace(piece.piece_id, i).second) {
      throw Error(ErrorCode::integrity, "duplicate piece_id '" + piece.piece_id + "'",
                  {piece.piece_id});
    }
    if (piece.performance_ids.empty()) {
      throw Error(ErrorCode::integrity,
                  "piece '" + piece.piece_id + "' lists no performances", {piece.piece_id});
    }
    std::set<std::string> seen;
    for (const auto& pid : piece.performance_ids) {
      if (!seen.insert(pid).second) {
        throw Error(ErrorCode::integrity,
                    "piece '" + piece.piece_id + "' lists performance '" + pid + "' twice",
                    {piece.piece_id, pid});
      }
    }
  }

  for (std::size_t i = 0; i < c.performances_.size(); ++i) {
    const auto& perf = c.performances_[i];
    if (perf.performance_id.empty()) {
      throw Error(ErrorCode::integrity,
                  "performance " + std::to_string(i) + " has an empty performance_id");
    }
    if (!c.performance_index_.emplace(perf.performance_id, i).second) {
      throw Error(ErrorCode::integrity,
                  "duplicate performance_id '" + perf.performance_id + "'",
                  {perf.performance_id});
    }
    perf.features.validate("performance '" + perf.performance_id + "'");
    auto piece_it = c.piece_index_.find(perf.piece_id);
    if (piece_it == c.piece_index_.end()) {
      throw Error(ErrorCode::integrity,
                  "performance '" + perf.performance_id + "' references unknown piece '" +
                      perf.piece_id + "'",
                  {perf.performance_id, perf.piece_id});
    }
    const auto& listed = c.pieces_[piece_it->second].performance_ids;
    if (std::find(listed.begin(), listed.end(), perf.performance_id) == listed.end()) {
      throw Error(ErrorCode::integrity,
                  "performance '" + perf.performance_id + "' is not listed by piece '" +
                      perf.piece_id + "'",
                  {perf.performance_id, perf.piece_id});
    }
  }

  for (const auto& piece : c.pieces_) {
    for (const auto& pid : piece.performance_ids) {
      auto it = c.performance_index_.find(pid);
      if (it == c.performance_index_.end()) {
        throw Error(ErrorCode::integrity,
                    "piece '" + piece.piece_id + "' lists unknown performance '" + pid + "'",
                    {piece.piece_id, pid});
      }
      if (c.performances_[it->second].piece_id != piece.piece_id) {
        throw Error(ErrorCode::integrity,
                    "performance '" + pid + "' belongs to piece '" +
                        c.performances_[it->second].piece_id + "', not '" + piece.piece_id + "'",
                    {piece.piece_id, pid});
      }
    }
  }
  return c;
}

namespace detail {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'", {path});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'", {path});
  out << content;
  if (!out) throw Error(ErrorCode::io, "failed writing '" + path + "'", {path});
}

inline nlohmann::json parse_document(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, what + ": " + e.what());
  }
}

inline void check_schema(const nlohmann::json& doc, const std::string& what) {
  if (!doc.is_object()) throw Error(ErrorCode::parse, what + ": top level must be an object");
  auto it = doc.find("schema_version");
  if (it == doc.end() || !it->is_number_integer()) {
    throw Error(ErrorCode::parse, what + ": missing integer schema_version");
  }
  if (it->get<int>() != kSchemaVersion) {
    throw Error(ErrorCode::parse, what + ": unsupported schema_version " +
                                      std::to_string(it->get<int>()));
  }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::parse, where + ": missing field '" + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw Error(ErrorCode::parse, where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key,
                                                  const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::parse, where + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

inline MidLevelVector parse_features(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array()) throw Error(ErrorCode::parse, where + ": features must be an array");
  if (arr.size() != kMidLevelDims) {
    throw Error(ErrorCode::dimension, where + ": expected " + std::to_string(kMidLevelDims) +
                                          " feature values, got " + std::to_string(arr.size()));
  }
  MidLevelVector v;
  for (std::size_t i = 0; i < kMidLevelDims; ++i) {
    if (!arr[i].is_number()) throw Error(ErrorCode::parse, where + ": feature values must be numbers");
    v[i] = arr[i].get<double>();
  }
  return v;
}

inline nlohmann::json features_to_json(const MidLevelVector& v) {
  return nlohmann::json(v.values);
}

}  // namespace detail

inline Catalog parse_catalog(const std::string& text) {
  using detail::require;
  const auto doc = detail::parse_document(text, "catalog");
  detail::check_schema(doc, "catalog");

  const auto& pieces_json = require(doc, "pieces", "catalog");
  const auto& perfs_json = require(doc, "performances", "catalog");
  if (!pieces_json.is_array() || !perfs_json.is_array()) {
    throw Error(ErrorCode::parse, "catalog: pieces and performances must be arrays");
  }

  std::vector<Piece> pieces;
  for (std::size_t i = 0; i < pieces_json.size(); ++i) {
    const auto where = "catalog.pieces[" + std::to_string(i) + "]";
    const auto& pj = pieces_json[i];
    if (!pj.is_object()) throw Error(ErrorCode::parse, where + ": must be an object");
    Piece p;
    p.piece_id = detail::require_string(pj, "piece_id", where);
    p.title = detail::require_string(pj, "title", where);
    const auto& ids = require(pj, "performance_ids", where);
    if (!ids.is_array()) throw Error(ErrorCode::parse, where + ": performance_ids must be an array");
    for (const auto& id : ids) {
      if (!id.is_string()) throw Error(ErrorCode::parse, where + ": performance_ids must be strings");
      p.performance_ids.push_back(id.get<std::string>());
    }
    pieces.push_back(std::move(p));
  }

  std::vector<Performance> perfs;
  for (std::size_t i = 0; i < perfs_json.size(); ++i) {
    const auto where = "catalog.performances[" + std::to_string(i) + "]";
    const auto& pj = perfs_json[i];
    if (!pj.is_object()) throw Error(ErrorCode::parse, where + ": must be an object");
    Performance p;
    p.performance_id = detail::require_string(pj, "performance_id", where);
    p.piece_id = detail::require_string(pj, "piece_id", where);
    p.artist_label = detail::require_string(pj, "artist_label", where);
    p.features = detail::parse_features(require(pj, "features", where), where);
    p.audio_path = detail::optional_string(pj, "audio_path", where);
    perfs.push_back(std::move(p));
  }
  return make_catalog(std::move(pieces), std::move(perfs));
}

inline Catalog load_catalog(const std::string& path) {
  return parse_catalog(detail::read_text_file(path));
}

inline nlohmann::json catalog_to_json(const Catalog& catalog) {
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["pieces"] = nlohmann::json::array();
  for (const auto& p : catalog.pieces()) {
    doc["pieces"].push_back(
        {{"piece_id", p.piece_id}, {"title", p.title}, {"performance_ids", p.performance_ids}});
  }
  doc["performances"] = nlohmann::json::array();
  for (const auto& p : catalog.performances()) {
    nlohmann::json pj = {{"performance_id", p.performance_id},
                         {"piece_id", p.piece_id},
                         {"artist_label", p.artist_label},
                         {"features", detail::features_to_json(p.features)}};
    if (p.audio_path) pj["audio_path"] = *p.audio_path;
    doc["performances"].push_back(std::move(pj));
  }
  return doc;
}

inline void save_catalog(const std::string& path, const Catalog& catalog) {
  detail::write_text_file(path, catalog_to_json(catalog).dump(2) + "\n");
}

// Parses a pairs document and keeps the records whose source is allowed, in
// file order. Every record is shape-checked; core records that survive the
// filter are resolved against `catalog` when one is given.
inline std::vector<DescriptionPair> parse_pairs(const std::string& text,
                                                const SourceSet& allowed_sources,
                                                const Catalog* catalog = nullptr) {
  const auto doc = detail::parse_document(text, "pairs");
  detail::check_schema(doc, "pairs");
  const auto& arr = detail::require(doc, "pairs", "pairs");
  if (!arr.is_array()) throw Error(ErrorCode::parse, "pairs: 'pairs' must be an array");

  std::vector<DescriptionPair> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto where = "pairs[" + std::to_string(i) + "]";
    const auto& pj = arr[i];
    if (!pj.is_object()) throw Error(ErrorCode::parse, where + ": must be an object");

    DescriptionPair pair;
    pair.text = detail::require_string(pj, "text", where);
    pair.target_features = detail::parse_features(detail::require(pj, "target_features", where), where);
    const auto source_name = detail::require_string(pj, "source", where);
    const auto source = parse_source(source_name);
    if (!source) throw Error(ErrorCode::parse, where + ": unknown source '" + source_name + "'");
    pair.source = *source;
    pair.piece_id = detail::optional_string(pj, "piece_id", where);
    pair.performance_id = detail::optional_string(pj, "performance_id", where);

    if (tokenize(pair.text).empty()) {
      throw Error(ErrorCode::empty_text, where + ": text is empty after tokenization",
                  {std::to_string(i)});
    }
    pair.target_features.validate(where);
    if (pair.source == Source::core && (!pair.piece_id || !pair.performance_id)) {
      throw Error(ErrorCode::integrity, where + ": core pairs need piece_id and performance_id",
                  {std::to_string(i)});
    }

    if (!allowed_sources.contains(pair.source)) continue;

    if (catalog != nullptr && pair.source == Source::core) {
      const auto* perf = catalog->find_performance(*pair.performance_id);
      if (perf == nullptr) {
        throw Error(ErrorCode::integrity,
                    where + ": unknown performance '" + *pair.performance_id + "'",
                    {std::to_string(i), *pair.performance_id});
      }
      if (perf->piece_id != *pair.piece_id) {
        throw Error(ErrorCode::integrity,
                    where + ": performance '" + perf->performance_id + "' is not part of piece '" +
                        *pair.piece_id + "'",
                    {std::to_string(i), *pair.piece_id});
      }
    }
    out.push_back(std::move(pair));
  }
  return out;
}

inline std::vector<DescriptionPair> load_pairs(const std::string& path,
                                               const SourceSet& allowed_sources,
                                               const Catalog* catalog = nullptr) {
  return parse_pairs(detail::read_text_file(path), allowed_sources, catalog);
}

inline std::vector<DescriptionPair> filter_pairs(const std::vector<DescriptionPair>& pairs,
                                                 const SourceSet& allowed_sources) {
  std::vector<DescriptionPair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [&](const DescriptionPair& p) { return allowed_sources.contains(p.source); });
  return out;
}

inline nlohmann::json pairs_to_json(const std::vector<DescriptionPair>& pairs) {
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["pairs"] = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json pj = {{"text", p.text},
                         {"target_features", detail::features_to_json(p.target_features)},
                         {"source", to_string(p.source)}};
    if (p.piece_id) pj["piece_id"] = *p.piece_id;
    if (p.performance_id) pj["performance_id"] = *p.performance_id;
    doc["pairs"].push_back(std::move(pj));
  }
  return doc;
}

inline void save_pairs(const std::string& path, const std::vector<DescriptionPair>& pairs) {
  detail::write_text_file(path, pairs_to_json(pairs).dump(2) + "\n");
}

}  // namespace espresso
